use super::Report;
use crate::crypto::{homomorphic_hash, GroupBackend};
use crate::field::Scalar;
use crate::node::NodeId;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttackKind {
    /// Relaying node alters a child's homomorphic hash.
    HashOnly,
    /// Relaying node alters a child's masked reading.
    ReadingOnly,
    /// Relaying node alters both consistently.
    Both,
    /// A previous round's report is re-sent in place of the current one.
    Replay,
    /// An outsider flips bits of a report in transit.
    Tamper,
}

impl AttackKind {
    pub const ALL: [AttackKind; 5] = [
        AttackKind::HashOnly,
        AttackKind::ReadingOnly,
        AttackKind::Both,
        AttackKind::Replay,
        AttackKind::Tamper,
    ];

    /// Whether the attack is carried out by a relaying node on a child's
    /// report, as opposed to on a link.
    pub fn is_relay(self) -> bool {
        matches!(self, AttackKind::HashOnly | AttackKind::ReadingOnly | AttackKind::Both)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            AttackKind::HashOnly => "hash",
            AttackKind::ReadingOnly => "reading",
            AttackKind::Both => "both",
            AttackKind::Replay => "replay",
            AttackKind::Tamper => "tamper",
        }
    }
}

impl fmt::Display for AttackKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AttackKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        AttackKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| format!("unknown attack type '{s}' (hash, reading, both, replay, tamper)"))
    }
}

/// One injected attack. For relay attacks `attacker` modifies the report of
/// its child `target`; for link attacks the report sent by `target` is
/// replaced or corrupted on its way to the next hop and `attacker` is the
/// sender itself (an outsider has no node id).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attack {
    pub kind: AttackKind,
    pub attacker: NodeId,
    pub target: NodeId,
}

impl Attack {
    pub fn relay(kind: AttackKind, attacker: NodeId, target: NodeId) -> Self {
        debug_assert!(kind.is_relay());
        Attack { kind, attacker, target }
    }

    pub fn link(kind: AttackKind, target: NodeId) -> Self {
        debug_assert!(!kind.is_relay());
        Attack {
            kind,
            attacker: target,
            target,
        }
    }

    /// Applies a relay modification to the target child's accepted report.
    /// Returns false if the target is not among `children`.
    pub fn apply_relay<B: GroupBackend>(&self, backend: &B, children: &mut [(NodeId, Report<B>)]) -> bool {
        let Some((_, r)) = children.iter_mut().find(|(id, _)| *id == self.target) else {
            return false;
        };
        let p = backend.params().p;
        let delta = Scalar::ONE;
        let dh = homomorphic_hash(backend, &[delta]).expect("unit scalar hashes");
        match self.kind {
            AttackKind::HashOnly => r.hashes[0] = backend.hash_add(&r.hashes[0], &dh),
            AttackKind::ReadingOnly => r.masked = p.add(r.masked, delta),
            AttackKind::Both => {
                r.masked = p.add(r.masked, delta);
                r.hashes[0] = backend.hash_add(&r.hashes[0], &dh);
            }
            AttackKind::Replay | AttackKind::Tamper => return false,
        }
        true
    }

    /// Applies a link attack to a report in transit. Replay needs the
    /// target's report from an earlier round; without one the report passes
    /// unchanged and false is returned.
    pub fn apply_link<B: GroupBackend>(&self, report: &mut Report<B>, previous: Option<&Report<B>>) -> bool {
        match self.kind {
            AttackKind::Replay => match previous {
                Some(old) => {
                    *report = old.clone();
                    true
                }
                None => false,
            },
            AttackKind::Tamper => {
                report.mac.0[0] ^= 0x01;
                true
            }
            _ => false,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kinds_parse_from_cli_names() {
        for k in AttackKind::ALL {
            assert_eq!(k.as_str().parse::<AttackKind>().unwrap(), k);
        }
        assert!("x".parse::<AttackKind>().is_err());
        assert_eq!(AttackKind::ALL.iter().filter(|k| k.is_relay()).count(), 3);
    }
}
