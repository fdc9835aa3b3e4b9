//! Three-message long-term seed-key agreement (KEReq / KERes / KConf).
//!
//! Wire layouts are fixed width, big-endian, fields in message order:
//!
//! ```text
//! cert  = id(4) | Y(64) | authority signature(64)                     132 B
//! KEReq = id(4) | vP(64) | TS(4) | sig(64) | cert(132)                268 B
//! KERes = id(4) | vP(64) | TS(4) | H1(K,1)(32) | sig(64) | cert(132)  300 B
//! KConf = id(4) | TS(4) | H1(K,2)(32) | sig(64)                       104 B
//! ```

use super::KeyError;
use crate::crypto::{bls_verify, h1_concat, CryptoError, Digest, GroupBackend, Signature, SignKeyPair};
use crate::field::Scalar;
use crate::node::{is_fresh, NodeId, Timestamp};
use rand::RngCore;

const ID: usize = 4;
const TS: usize = 4;
const DIGEST: usize = 32;

pub const CERT_BYTES: usize = ID + 64 + 64;
pub const KEREQ_BYTES: usize = ID + 64 + TS + 64 + CERT_BYTES;
pub const KERES_BYTES: usize = ID + 64 + TS + DIGEST + 64 + CERT_BYTES;
pub const KCONF_BYTES: usize = ID + TS + DIGEST + 64;

/// Simulated offline authority that binds node ids to public keys.
#[derive(Debug, Clone)]
pub struct TrustedAuthority<B: GroupBackend> {
    keypair: SignKeyPair<B>,
}

impl<B: GroupBackend> TrustedAuthority<B> {
    pub fn new(keypair: SignKeyPair<B>) -> Self {
        TrustedAuthority { keypair }
    }

    pub fn generate<R: RngCore + ?Sized>(backend: &B, rng: &mut R) -> Self {
        Self::new(SignKeyPair::generate(backend, rng))
    }

    pub fn public(&self) -> &B::G1 {
        &self.keypair.public
    }

    pub fn keypair(&self) -> &SignKeyPair<B> {
        &self.keypair
    }

    pub fn certify(&self, backend: &B, id: NodeId, public: &B::G1) -> Certificate<B> {
        let msg = Certificate::<B>::signed_bytes(backend, id, public);
        Certificate {
            id,
            public: public.clone(),
            authority_sig: self.keypair.sign(backend, &msg),
        }
    }

    /// Fresh keypair plus certificate for `id`.
    pub fn enroll<R: RngCore + ?Sized>(&self, backend: &B, id: NodeId, rng: &mut R) -> NodeIdentity<B> {
        let keypair = SignKeyPair::generate(backend, rng);
        let cert = self.certify(backend, id, &keypair.public);
        NodeIdentity { id, keypair, cert }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Certificate<B: GroupBackend> {
    pub id: NodeId,
    pub public: B::G1,
    pub authority_sig: Signature<B>,
}

impl<B: GroupBackend> Certificate<B> {
    fn signed_bytes(backend: &B, id: NodeId, public: &B::G1) -> Vec<u8> {
        let mut msg = id.to_be_bytes().to_vec();
        msg.extend(backend.encode_g1(public));
        msg
    }

    pub fn verify(&self, backend: &B, authority: &B::G1) -> bool {
        let msg = Self::signed_bytes(backend, self.id, &self.public);
        bls_verify(backend, authority, &msg, &self.authority_sig)
    }

    pub fn encode(&self, backend: &B) -> Vec<u8> {
        let mut out = Self::signed_bytes(backend, self.id, &self.public);
        out.extend(self.authority_sig.encode(backend));
        out
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, "certificate", CERT_BYTES)?;
        Ok(Certificate {
            id: r.id(),
            public: r.g1(backend)?,
            authority_sig: r.sig(backend)?,
        })
    }
}

/// A node's signing keypair together with its certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeIdentity<B: GroupBackend> {
    pub id: NodeId,
    pub keypair: SignKeyPair<B>,
    pub cert: Certificate<B>,
}

impl<B: GroupBackend> NodeIdentity<B> {
    pub fn public(&self) -> &B::G1 {
        &self.keypair.public
    }
}

/// `K = v_ij·v_ji·P`, identical on both ends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LongTermSeedKey<B: GroupBackend> {
    pub key: B::G1,
    pub epoch: u32,
}

impl<B: GroupBackend> LongTermSeedKey<B> {
    pub fn key_bytes(&self, backend: &B) -> Vec<u8> {
        backend.encode_g1(&self.key)
    }

    /// `H1(K, label)` used for key confirmation.
    pub fn confirmation_digest(&self, backend: &B, label: u8) -> Digest {
        h1_concat(&[&self.key_bytes(backend), &[label]])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KEReq<B: GroupBackend> {
    pub id: NodeId,
    pub ephemeral: B::G1,
    pub ts: Timestamp,
    pub sig: Signature<B>,
    pub cert: Certificate<B>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KERes<B: GroupBackend> {
    pub id: NodeId,
    pub ephemeral: B::G1,
    pub ts: Timestamp,
    pub confirmation: Digest,
    pub sig: Signature<B>,
    pub cert: Certificate<B>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KConf<B: GroupBackend> {
    pub id: NodeId,
    pub ts: Timestamp,
    pub confirmation: Digest,
    pub sig: Signature<B>,
}

/// Initiator-side state kept between KEReq and KERes.
#[derive(Debug, Clone)]
pub struct PendingExchange<B: GroupBackend> {
    pub responder: NodeId,
    secret: Scalar,
    pub ephemeral: B::G1,
    pub ts: Timestamp,
}

impl<B: GroupBackend> KEReq<B> {
    fn signed_bytes(&self, backend: &B) -> Vec<u8> {
        let mut msg = self.id.to_be_bytes().to_vec();
        msg.extend(backend.encode_g1(&self.ephemeral));
        msg.extend(self.ts.to_be_bytes());
        msg
    }

    pub fn encode(&self, backend: &B) -> Vec<u8> {
        let mut out = self.signed_bytes(backend);
        out.extend(self.sig.encode(backend));
        out.extend(self.cert.encode(backend));
        out
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, "KEReq", KEREQ_BYTES)?;
        Ok(KEReq {
            id: r.id(),
            ephemeral: r.g1(backend)?,
            ts: r.u32(),
            sig: r.sig(backend)?,
            cert: Certificate::decode(backend, r.rest())?,
        })
    }
}

impl<B: GroupBackend> KERes<B> {
    fn signed_bytes(&self, backend: &B) -> Vec<u8> {
        let mut msg = self.id.to_be_bytes().to_vec();
        msg.extend(backend.encode_g1(&self.ephemeral));
        msg.extend(self.ts.to_be_bytes());
        msg.extend(self.confirmation);
        msg
    }

    pub fn encode(&self, backend: &B) -> Vec<u8> {
        let mut out = self.signed_bytes(backend);
        out.extend(self.sig.encode(backend));
        out.extend(self.cert.encode(backend));
        out
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, "KERes", KERES_BYTES)?;
        Ok(KERes {
            id: r.id(),
            ephemeral: r.g1(backend)?,
            ts: r.u32(),
            confirmation: r.digest(),
            sig: r.sig(backend)?,
            cert: Certificate::decode(backend, r.rest())?,
        })
    }
}

impl<B: GroupBackend> KConf<B> {
    fn signed_bytes(&self) -> Vec<u8> {
        let mut msg = self.id.to_be_bytes().to_vec();
        msg.extend(self.ts.to_be_bytes());
        msg.extend(self.confirmation);
        msg
    }

    pub fn encode(&self, backend: &B) -> Vec<u8> {
        let mut out = self.signed_bytes();
        out.extend(self.sig.encode(backend));
        out
    }

    pub fn decode(backend: &B, bytes: &[u8]) -> Result<Self, CryptoError> {
        let mut r = Reader::new(bytes, "KConf", KCONF_BYTES)?;
        Ok(KConf {
            id: r.id(),
            ts: r.u32(),
            confirmation: r.digest(),
            sig: r.sig(backend)?,
        })
    }
}

pub fn ke_initiate<B: GroupBackend, R: RngCore + ?Sized>(
    backend: &B,
    initiator: &NodeIdentity<B>,
    responder: NodeId,
    now: Timestamp,
    rng: &mut R,
) -> (KEReq<B>, PendingExchange<B>) {
    let secret = backend.params().q.random_nonzero(rng);
    let ephemeral = backend.g1_mul(&backend.g1_generator(), secret);
    let mut req = KEReq {
        id: initiator.id,
        ephemeral: ephemeral.clone(),
        ts: now,
        sig: Signature {
            sigma: backend.g1_identity(),
        },
        cert: initiator.cert.clone(),
    };
    req.sig = initiator.keypair.sign(backend, &req.signed_bytes(backend));
    let pending = PendingExchange {
        responder,
        secret,
        ephemeral,
        ts: now,
    };
    (req, pending)
}

fn check_peer<B: GroupBackend>(
    backend: &B,
    authority: &B::G1,
    id: NodeId,
    cert: &Certificate<B>,
    ts: Timestamp,
    now: Timestamp,
    window: u32,
) -> Result<(), KeyError> {
    if !is_fresh(ts, now, window) {
        return Err(KeyError::ReplayRejected { ts, now });
    }
    if cert.id != id || !cert.verify(backend, authority) {
        return Err(KeyError::AuthFailed("certificate"));
    }
    Ok(())
}

pub fn ke_respond<B: GroupBackend, R: RngCore + ?Sized>(
    backend: &B,
    responder: &NodeIdentity<B>,
    authority: &B::G1,
    req: &KEReq<B>,
    now: Timestamp,
    window: u32,
    rng: &mut R,
) -> Result<(KERes<B>, LongTermSeedKey<B>), KeyError> {
    check_peer(backend, authority, req.id, &req.cert, req.ts, now, window)?;
    if !bls_verify(backend, &req.cert.public, &req.signed_bytes(backend), &req.sig) {
        return Err(KeyError::AuthFailed("KEReq signature"));
    }
    let secret = backend.params().q.random_nonzero(rng);
    let ephemeral = backend.g1_mul(&backend.g1_generator(), secret);
    let key = LongTermSeedKey {
        key: backend.g1_mul(&req.ephemeral, secret),
        epoch: 0,
    };
    let mut res = KERes {
        id: responder.id,
        ephemeral,
        ts: now,
        confirmation: key.confirmation_digest(backend, 1),
        sig: Signature {
            sigma: backend.g1_identity(),
        },
        cert: responder.cert.clone(),
    };
    res.sig = responder.keypair.sign(backend, &res.signed_bytes(backend));
    Ok((res, key))
}

pub fn ke_finalize<B: GroupBackend>(
    backend: &B,
    initiator: &NodeIdentity<B>,
    pending: &PendingExchange<B>,
    authority: &B::G1,
    res: &KERes<B>,
    now: Timestamp,
    window: u32,
) -> Result<(KConf<B>, LongTermSeedKey<B>), KeyError> {
    if res.id != pending.responder {
        return Err(KeyError::AuthFailed("unexpected responder"));
    }
    check_peer(backend, authority, res.id, &res.cert, res.ts, now, window)?;
    if !bls_verify(backend, &res.cert.public, &res.signed_bytes(backend), &res.sig) {
        return Err(KeyError::AuthFailed("KERes signature"));
    }
    let key = LongTermSeedKey {
        key: backend.g1_mul(&res.ephemeral, pending.secret),
        epoch: 0,
    };
    if key.confirmation_digest(backend, 1) != res.confirmation {
        return Err(KeyError::KeyConfirmationFailed);
    }
    let mut conf = KConf {
        id: initiator.id,
        ts: now,
        confirmation: key.confirmation_digest(backend, 2),
        sig: Signature {
            sigma: backend.g1_identity(),
        },
    };
    conf.sig = initiator.keypair.sign(backend, &conf.signed_bytes());
    Ok((conf, key))
}

/// Responder-side check of the initiator's KConf against the stored key.
pub fn ke_confirm<B: GroupBackend>(
    backend: &B,
    initiator_public: &B::G1,
    conf: &KConf<B>,
    key: &LongTermSeedKey<B>,
    now: Timestamp,
    window: u32,
) -> Result<(), KeyError> {
    if !is_fresh(conf.ts, now, window) {
        return Err(KeyError::ReplayRejected { ts: conf.ts, now });
    }
    if !bls_verify(backend, initiator_public, &conf.signed_bytes(), &conf.sig) {
        return Err(KeyError::AuthFailed("KConf signature"));
    }
    if conf.confirmation != key.confirmation_digest(backend, 2) {
        return Err(KeyError::KeyConfirmationFailed);
    }
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(bytes: &'a [u8], what: &'static str, len: usize) -> Result<Self, CryptoError> {
        if bytes.len() != len {
            return Err(CryptoError::Decode {
                what,
                reason: format!("expected {len} bytes, got {}", bytes.len()),
            });
        }
        Ok(Reader { bytes, pos: 0 })
    }

    fn take(&mut self, n: usize) -> &'a [u8] {
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        s
    }

    fn u32(&mut self) -> u32 {
        u32::from_be_bytes(self.take(4).try_into().unwrap())
    }

    fn id(&mut self) -> NodeId {
        NodeId(self.u32())
    }

    fn digest(&mut self) -> Digest {
        self.take(DIGEST).try_into().unwrap()
    }

    fn g1<B: GroupBackend>(&mut self, backend: &B) -> Result<B::G1, CryptoError> {
        backend.decode_g1(self.take(B::G1_BYTES))
    }

    fn sig<B: GroupBackend>(&mut self, backend: &B) -> Result<Signature<B>, CryptoError> {
        Signature::decode(backend, self.take(B::G1_BYTES))
    }

    fn rest(&mut self) -> &'a [u8] {
        let s = &self.bytes[self.pos..];
        self.pos = self.bytes.len();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::crypto::MockBackend;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    struct Fixture {
        b: MockBackend,
        ta: TrustedAuthority<MockBackend>,
        alice: NodeIdentity<MockBackend>,
        bob: NodeIdentity<MockBackend>,
        rng: ChaCha8Rng,
    }

    fn fixture() -> Fixture {
        let b = MockBackend::compat();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let ta = TrustedAuthority::generate(&b, &mut rng);
        let alice = ta.enroll(&b, NodeId(1), &mut rng);
        let bob = ta.enroll(&b, NodeId(2), &mut rng);
        Fixture { b, ta, alice, bob, rng }
    }

    #[test]
    fn honest_exchange_yields_equal_keys() {
        let mut f = fixture();
        let (req, pending) = ke_initiate(&f.b, &f.alice, f.bob.id, 100, &mut f.rng);
        let (res, k_bob) = ke_respond(&f.b, &f.bob, f.ta.public(), &req, 101, 5, &mut f.rng).unwrap();
        let (conf, k_alice) = ke_finalize(&f.b, &f.alice, &pending, f.ta.public(), &res, 102, 5).unwrap();
        assert_eq!(k_alice, k_bob);
        ke_confirm(&f.b, f.alice.public(), &conf, &k_bob, 103, 5).unwrap();
    }

    #[test]
    fn stale_request_is_rejected() {
        let mut f = fixture();
        let (req, _) = ke_initiate(&f.b, &f.alice, f.bob.id, 100, &mut f.rng);
        assert_eq!(
            ke_respond(&f.b, &f.bob, f.ta.public(), &req, 106, 5, &mut f.rng).unwrap_err(),
            KeyError::ReplayRejected { ts: 100, now: 106 }
        );
    }

    #[test]
    fn forged_or_tampered_request_fails_auth() {
        let mut f = fixture();
        let (mut req, _) = ke_initiate(&f.b, &f.alice, f.bob.id, 100, &mut f.rng);
        let forged = req.clone();
        req.ephemeral = f.b.g1_add(&req.ephemeral, &f.b.g1_generator());
        assert!(matches!(
            ke_respond(&f.b, &f.bob, f.ta.public(), &req, 100, 5, &mut f.rng),
            Err(KeyError::AuthFailed(_))
        ));
        // Signed under the wrong private key.
        let mut forged = forged;
        forged.sig = f.bob.keypair.sign(&f.b, &forged.signed_bytes(&f.b));
        assert!(matches!(
            ke_respond(&f.b, &f.bob, f.ta.public(), &forged, 100, 5, &mut f.rng),
            Err(KeyError::AuthFailed(_))
        ));
    }

    #[test]
    fn substituted_response_element_fails_confirmation() {
        let mut f = fixture();
        let (req, pending) = ke_initiate(&f.b, &f.alice, f.bob.id, 100, &mut f.rng);
        let (mut res, _) = ke_respond(&f.b, &f.bob, f.ta.public(), &req, 100, 5, &mut f.rng).unwrap();
        // Responder swaps v_ji·P after computing the digest and re-signs.
        res.ephemeral = f.b.g1_mul(&f.b.g1_generator(), Scalar(12345));
        res.sig = f.bob.keypair.sign(&f.b, &res.signed_bytes(&f.b));
        assert_eq!(
            ke_finalize(&f.b, &f.alice, &pending, f.ta.public(), &res, 100, 5).unwrap_err(),
            KeyError::KeyConfirmationFailed
        );
    }

    #[test]
    fn initiations_draw_distinct_ephemerals() {
        let mut f = fixture();
        let mut seen = HashSet::new();
        for _ in 0..2000 {
            let (req, _) = ke_initiate(&f.b, &f.alice, f.bob.id, 0, &mut f.rng);
            assert!(seen.insert(req.ephemeral));
        }
    }

    #[test]
    fn wire_layout_sizes_and_round_trip() {
        let mut f = fixture();
        let (req, pending) = ke_initiate(&f.b, &f.alice, f.bob.id, 7, &mut f.rng);
        let (res, _) = ke_respond(&f.b, &f.bob, f.ta.public(), &req, 7, 5, &mut f.rng).unwrap();
        let (conf, _) = ke_finalize(&f.b, &f.alice, &pending, f.ta.public(), &res, 7, 5).unwrap();
        let (rb, sb, cb) = (req.encode(&f.b), res.encode(&f.b), conf.encode(&f.b));
        assert_eq!((rb.len(), sb.len(), cb.len()), (268, 300, 104));
        assert_eq!(f.alice.cert.encode(&f.b).len(), 132);
        assert_eq!(KEReq::decode(&f.b, &rb).unwrap(), req);
        assert_eq!(KERes::decode(&f.b, &sb).unwrap(), res);
        assert_eq!(KConf::decode(&f.b, &cb).unwrap(), conf);
        assert!(KEReq::decode(&f.b, &rb[1..]).is_err());
    }
}
