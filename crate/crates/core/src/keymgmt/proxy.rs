use super::KeyError;
use crate::node::NodeId;
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};

/// Uniform sample of `count` proxies from `candidates`, deterministic in `seed`.
/// The result is sorted by node id.
pub fn select_proxies(
    node: NodeId,
    candidates: &[NodeId],
    count: usize,
    seed: u64,
) -> Result<Vec<NodeId>, KeyError> {
    if candidates.contains(&node) {
        return Err(KeyError::Parameter(format!("{node} cannot be its own proxy")));
    }
    let distinct: BTreeSet<NodeId> = candidates.iter().copied().collect();
    if distinct.len() != candidates.len() {
        return Err(KeyError::Parameter("duplicate proxy candidates".into()));
    }
    if count > candidates.len() {
        return Err(KeyError::InsufficientCandidates {
            needed: count,
            available: candidates.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen: Vec<NodeId> = index::sample(&mut rng, candidates.len(), count)
        .into_iter()
        .map(|i| candidates[i])
        .collect();
    chosen.sort();
    Ok(chosen)
}

/// One node's view of the proxy relation: `α` proxies it chose and `β`
/// nodes that chose it.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProxyAssignment {
    pub owner: NodeId,
    pub proxies: BTreeSet<NodeId>,
    pub selected_by: BTreeSet<NodeId>,
}

impl ProxyAssignment {
    pub fn alpha(&self) -> usize {
        self.proxies.len()
    }

    pub fn beta(&self) -> usize {
        self.selected_by.len()
    }

    pub fn lambda(&self) -> usize {
        self.alpha() + self.beta()
    }
}

/// Who may serve as a proxy and how many proxies each role selects.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProxyPolicy {
    /// Proxies selected by each meter.
    pub lambda: usize,
    /// Allow the gateway and utility in the meters' candidate pool.
    pub include_infrastructure: bool,
    pub gateway_alpha: usize,
    pub utility_alpha: usize,
}

impl Default for ProxyPolicy {
    fn default() -> Self {
        ProxyPolicy {
            lambda: 4,
            include_infrastructure: true,
            gateway_alpha: 0,
            utility_alpha: 0,
        }
    }
}

/// The global proxy relation for a network.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProxyGraph {
    nodes: BTreeMap<NodeId, ProxyAssignment>,
}

impl ProxyGraph {
    /// Every meter in `meters` draws `policy.lambda` proxies; the gateway and
    /// utility draw their own `α` from the meters.
    pub fn assign(meters: &[NodeId], policy: &ProxyPolicy, seed: u64) -> Result<Self, KeyError> {
        let mut graph = ProxyGraph::default();
        for id in meters.iter().copied().chain([NodeId::GATEWAY, NodeId::UTILITY]) {
            graph.nodes.insert(
                id,
                ProxyAssignment {
                    owner: id,
                    ..Default::default()
                },
            );
        }
        for &m in meters {
            let mut pool: Vec<NodeId> = meters.iter().copied().filter(|&c| c != m).collect();
            if policy.include_infrastructure {
                pool.push(NodeId::GATEWAY);
                pool.push(NodeId::UTILITY);
            }
            let chosen = select_proxies(m, &pool, policy.lambda, node_seed(seed, m))?;
            for j in chosen {
                graph.link(m, j);
            }
        }
        for (infra, alpha) in [
            (NodeId::GATEWAY, policy.gateway_alpha),
            (NodeId::UTILITY, policy.utility_alpha),
        ] {
            if alpha > 0 {
                let chosen = select_proxies(infra, meters, alpha, node_seed(seed, infra))?;
                for j in chosen {
                    graph.link(infra, j);
                }
            }
        }
        Ok(graph)
    }

    /// Builds a graph from explicit `(owner, proxy)` edges.
    pub fn from_edges(nodes: &[NodeId], edges: &[(NodeId, NodeId)]) -> Result<Self, KeyError> {
        let mut graph = ProxyGraph::default();
        for &id in nodes {
            graph.nodes.insert(
                id,
                ProxyAssignment {
                    owner: id,
                    ..Default::default()
                },
            );
        }
        for &(owner, proxy) in edges {
            if owner == proxy {
                return Err(KeyError::Parameter(format!("{owner} cannot be its own proxy")));
            }
            if !graph.nodes.contains_key(&owner) || !graph.nodes.contains_key(&proxy) {
                return Err(KeyError::Parameter(format!("edge {owner}->{proxy} names unknown node")));
            }
            graph.link(owner, proxy);
        }
        Ok(graph)
    }

    fn link(&mut self, owner: NodeId, proxy: NodeId) {
        self.nodes.get_mut(&owner).expect("owner registered").proxies.insert(proxy);
        self.nodes.get_mut(&proxy).expect("proxy registered").selected_by.insert(owner);
    }

    pub fn get(&self, id: NodeId) -> Option<&ProxyAssignment> {
        self.nodes.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &ProxyAssignment> {
        self.nodes.values()
    }

    /// Every unordered pair that needs a shared long-term key.
    pub fn key_pairs(&self) -> BTreeSet<(NodeId, NodeId)> {
        self.nodes
            .values()
            .flat_map(|a| a.proxies.iter().map(move |&p| (a.owner.min(p), a.owner.max(p))))
            .collect()
    }

    /// `j ∈ proxies(i) ⇔ i ∈ selected_by(j)` and no self-loops.
    pub fn is_consistent(&self) -> bool {
        self.nodes.values().all(|a| {
            !a.proxies.contains(&a.owner)
                && a.proxies
                    .iter()
                    .all(|p| self.nodes.get(p).is_some_and(|b| b.selected_by.contains(&a.owner)))
                && a.selected_by
                    .iter()
                    .all(|s| self.nodes.get(s).is_some_and(|b| b.proxies.contains(&a.owner)))
        })
    }
}

fn node_seed(seed: u64, id: NodeId) -> u64 {
    seed ^ (id.0 as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}
