use crate::crypto::GroupBackend;
use crate::field::Scalar;
use std::collections::HashMap;

/// Bounded discrete-log solver for `k·base` with `k` in `[0, max]`.
///
/// Uses a direct lookup table when the range is at most `table_threshold`,
/// baby-step/giant-step otherwise.
#[derive(Debug, Clone)]
pub struct DLogSolver<B: GroupBackend> {
    max: u64,
    inner: Inner<B>,
}

#[derive(Debug, Clone)]
enum Inner<B: GroupBackend> {
    Table(HashMap<B::HashElem, u64>),
    Bsgs {
        baby: HashMap<B::HashElem, u64>,
        step: u64,
        /// `-step·base`
        giant: B::HashElem,
    },
}

/// Default switch-over point between the direct table and BSGS.
pub const DEFAULT_TABLE_THRESHOLD: u64 = 1 << 22;

impl<B: GroupBackend> DLogSolver<B> {
    pub fn new(backend: &B, base: &B::HashElem, max: u64, table_threshold: u64) -> Self {
        let inner = if max <= table_threshold {
            let mut table = HashMap::with_capacity(max as usize + 1);
            let mut acc = backend.hash_identity();
            for k in 0..=max {
                table.insert(acc.clone(), k);
                acc = backend.hash_add(&acc, base);
            }
            Inner::Table(table)
        } else {
            let step = ((max as f64 + 1.0).sqrt().ceil() as u64).max(1);
            let mut baby = HashMap::with_capacity(step as usize);
            let mut acc = backend.hash_identity();
            for j in 0..step {
                baby.entry(acc.clone()).or_insert(j);
                acc = backend.hash_add(&acc, base);
            }
            let giant = backend.hash_neg(&backend.hash_mul(base, Scalar(step as u128)));
            Inner::Bsgs { baby, step, giant }
        };
        DLogSolver { max, inner }
    }

    pub fn max(&self) -> u64 {
        self.max
    }

    pub fn is_table(&self) -> bool {
        matches!(self.inner, Inner::Table(_))
    }

    /// `Some(k)` with `target = k·base` and `k <= max`, otherwise `None`.
    pub fn solve(&self, backend: &B, target: &B::HashElem) -> Option<u64> {
        match &self.inner {
            Inner::Table(table) => table.get(target).copied(),
            Inner::Bsgs { baby, step, giant } => {
                let mut gamma = target.clone();
                for i in 0..=(self.max / step) {
                    if let Some(j) = baby.get(&gamma) {
                        let k = i * step + j;
                        return (k <= self.max).then_some(k);
                    }
                    gamma = backend.hash_add(&gamma, giant);
                }
                None
            }
        }
    }
}
