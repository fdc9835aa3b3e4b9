//! Billing-period mask closure, per-meter period totals recovered from
//! accumulated homomorphic hashes, and dynamic-pricing bills.

mod dlog;

pub use dlog::{DLogSolver, DEFAULT_TABLE_THRESHOLD};

use crate::crypto::{hmac_full, GroupBackend};
use crate::field::Scalar;
use crate::keymgmt::KeyError;
use crate::node::NodeId;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BillingError {
    #[error("{meter}: period {period} has {have} of {need} slot hashes")]
    IncompletePeriod {
        meter: NodeId,
        period: u64,
        have: usize,
        need: usize,
    },
    #[error("{meter}: period {period} total outside [0, {max}]")]
    OutOfRange { meter: NodeId, period: u64, max: u64 },
    #[error("{meter}: no recovered total for period {period}")]
    IncompleteBilling { meter: NodeId, period: u64 },
    #[error("invalid price schedule: {0}")]
    Schedule(String),
    #[error("period totals require a one-dimensional homomorphic hash")]
    Dimension,
    #[error("csv export failed: {0}")]
    Export(String),
    #[error(transparent)]
    Key(#[from] KeyError),
}

/// Maps `(day, slot)` onto a global slot counter and billing periods of
/// `period_len` consecutive slots. Days and slots are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SlotClock {
    pub slots_per_day: u16,
    pub period_len: u32,
}

impl SlotClock {
    pub fn new(slots_per_day: u16, period_len: u32) -> Result<Self, KeyError> {
        if slots_per_day == 0 || period_len == 0 {
            return Err(KeyError::Parameter(
                "slots per day and billing period length must be positive".into(),
            ));
        }
        Ok(SlotClock {
            slots_per_day,
            period_len,
        })
    }

    pub fn global_slot(&self, day: u32, slot: u16) -> Result<u64, KeyError> {
        if day == 0 || slot == 0 || slot > self.slots_per_day {
            return Err(KeyError::Parameter(format!(
                "slot ({day}, {slot}) outside day 1.. and slot 1..={}",
                self.slots_per_day
            )));
        }
        Ok((day as u64 - 1) * self.slots_per_day as u64 + (slot as u64 - 1))
    }

    /// Inverse of [`SlotClock::global_slot`].
    pub fn day_slot(&self, global: u64) -> (u32, u16) {
        let t = self.slots_per_day as u64;
        ((global / t) as u32 + 1, (global % t) as u16 + 1)
    }

    pub fn period_of_global(&self, global: u64) -> u64 {
        global / self.period_len as u64
    }

    pub fn position_in_period(&self, global: u64) -> u32 {
        (global % self.period_len as u64) as u32
    }

    pub fn is_closing_global(&self, global: u64) -> bool {
        self.position_in_period(global) == self.period_len - 1
    }

    pub fn period(&self, day: u32, slot: u16) -> Result<u64, KeyError> {
        Ok(self.period_of_global(self.global_slot(day, slot)?))
    }

    pub fn is_closing(&self, day: u32, slot: u16) -> Result<bool, KeyError> {
        Ok(self.is_closing_global(self.global_slot(day, slot)?))
    }

    /// Global slots belonging to `period`.
    pub fn period_slots(&self, period: u64) -> std::ops::Range<u64> {
        let w = self.period_len as u64;
        period * w..(period + 1) * w
    }
}

/// `s_{i,u}^{(b)} = HMAC_{K_{i,u}}("bill" ‖ b) mod p`.
pub fn billing_mask<B: GroupBackend>(backend: &B, key: &[u8], period: u64) -> Result<Scalar, KeyError> {
    let mut msg = b"bill".to_vec();
    msg.extend(period.to_be_bytes());
    let out = hmac_full(key, &msg)?;
    Ok(backend.params().p.reduce_bytes(&out))
}

/// Utility-side store of each meter's per-slot hashes, grouped by period.
#[derive(Debug, Clone)]
pub struct HashAccumulator<B: GroupBackend> {
    clock: SlotClock,
    slots: BTreeMap<(NodeId, u64), BTreeMap<u32, B::HashElem>>,
}

impl<B: GroupBackend> HashAccumulator<B> {
    pub fn new(clock: SlotClock) -> Self {
        HashAccumulator {
            clock,
            slots: BTreeMap::new(),
        }
    }

    pub fn clock(&self) -> SlotClock {
        self.clock
    }

    pub fn record(&mut self, meter: NodeId, global_slot: u64, h: B::HashElem) {
        let period = self.clock.period_of_global(global_slot);
        let pos = self.clock.position_in_period(global_slot);
        self.slots.entry((meter, period)).or_default().insert(pos, h);
    }

    /// `Σ_{t=1}^{w} h_i^{(t)}` over a complete period.
    pub fn accumulate(&self, backend: &B, meter: NodeId, period: u64) -> Result<B::HashElem, BillingError> {
        let need = self.clock.period_len as usize;
        let have = self.slots.get(&(meter, period)).map_or(0, |s| s.len());
        if have != need {
            return Err(BillingError::IncompletePeriod {
                meter,
                period,
                have,
                need,
            });
        }
        Ok(backend.hash_sum(self.slots[&(meter, period)].values()))
    }

    /// Drops stored hashes for periods before `period`.
    pub fn reset_before(&mut self, period: u64) {
        self.slots.retain(|&(_, b), _| b >= period);
    }

    pub fn periods(&self) -> impl Iterator<Item = (NodeId, u64)> + '_ {
        self.slots.keys().copied()
    }
}

/// Removes `H(s^{(b)})` from an accumulated period hash and solves the
/// bounded discrete log for the period total.
pub fn recover_period_total<B: GroupBackend>(
    backend: &B,
    meter: NodeId,
    period: u64,
    accumulated: &B::HashElem,
    billing_mask: Scalar,
    solver: &DLogSolver<B>,
) -> Result<u64, BillingError> {
    if backend.params().d != 1 {
        return Err(BillingError::Dimension);
    }
    let mask_hash = backend.hash_mul(&backend.hash_generators()[0], billing_mask);
    let plain = backend.hash_sub(accumulated, &mask_hash);
    solver.solve(backend, &plain).ok_or(BillingError::OutOfRange {
        meter,
        period,
        max: solver.max(),
    })
}

/// Fixed-point money with six decimal places.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Money(pub u128);

impl Money {
    pub const SCALE: u128 = 1_000_000;

    pub fn from_units(units: u64) -> Money {
        Money(units as u128 * Self::SCALE)
    }

    /// Parses a non-negative decimal with at most six fractional digits.
    pub fn parse(s: &str) -> Option<Money> {
        let (int, frac) = s.split_once('.').unwrap_or((s, ""));
        if int.is_empty() || frac.len() > 6 || !int.bytes().chain(frac.bytes()).all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int: u128 = int.parse().ok()?;
        let frac_val: u128 = if frac.is_empty() {
            0
        } else {
            frac.parse::<u128>().ok()? * 10u128.pow(6 - frac.len() as u32)
        };
        int.checked_mul(Self::SCALE)?.checked_add(frac_val).map(Money)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / Self::SCALE, self.0 % Self::SCALE)
    }
}

/// Price per energy unit for each segment of the day. Segments start at the
/// given slot-of-day (1-based) and run until the next boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PriceSchedule {
    segments: Vec<(u16, Money)>,
}

impl PriceSchedule {
    pub fn new(segments: Vec<(u16, Money)>) -> Result<Self, BillingError> {
        if segments.first().map(|s| s.0) != Some(1) {
            return Err(BillingError::Schedule("first segment must start at slot 1".into()));
        }
        if segments.windows(2).any(|w| w[0].0 >= w[1].0) {
            return Err(BillingError::Schedule("segment starts must increase".into()));
        }
        Ok(PriceSchedule { segments })
    }

    pub fn flat(price: Money) -> Self {
        PriceSchedule {
            segments: vec![(1, price)],
        }
    }

    /// Price of the segment containing the first slot of `period`.
    pub fn price_for_period(&self, clock: &SlotClock, period: u64) -> Money {
        let (_, slot) = clock.day_slot(clock.period_slots(period).start);
        self.segments
            .iter()
            .rev()
            .find(|(start, _)| *start <= slot)
            .map(|s| s.1)
            .unwrap_or_default()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BillLine {
    pub meter: NodeId,
    pub period: u64,
    pub total_energy: u64,
    pub price: Money,
    pub amount: Money,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Bill {
    pub meter: NodeId,
    pub lines: Vec<BillLine>,
    pub total: Money,
}

/// `Σ_b price_b × total_b` over `periods`, with exact fixed-point arithmetic.
pub fn compute_bill(
    meter: NodeId,
    totals: &BTreeMap<u64, u64>,
    periods: &[u64],
    prices: &PriceSchedule,
    clock: &SlotClock,
) -> Result<Bill, BillingError> {
    let mut lines = Vec::with_capacity(periods.len());
    let mut total = 0u128;
    for &period in periods {
        let energy = *totals
            .get(&period)
            .ok_or(BillingError::IncompleteBilling { meter, period })?;
        let price = prices.price_for_period(clock, period);
        let amount = Money(price.0 * energy as u128);
        total += amount.0;
        lines.push(BillLine {
            meter,
            period,
            total_energy: energy,
            price,
            amount,
        });
    }
    Ok(Bill {
        meter,
        lines,
        total: Money(total),
    })
}

/// CSV with columns `meter_id, period, total_energy, price, amount`.
pub fn write_billing_csv<W: Write>(out: W, bills: &[Bill]) -> Result<(), BillingError> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| BillingError::Export(e.to_string());
    w.write_record(["meter_id", "period", "total_energy", "price", "amount"])
        .map_err(err)?;
    for line in bills.iter().flat_map(|b| &b.lines) {
        w.write_record([
            line.meter.0.to_string(),
            line.period.to_string(),
            line.total_energy.to_string(),
            line.price.to_string(),
            line.amount.to_string(),
        ])
        .map_err(err)?;
    }
    w.flush().map_err(|e| BillingError::Export(e.to_string()))
}
