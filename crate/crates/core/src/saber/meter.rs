//! Live-word and operation counters for the multiplier.

use std::cell::Cell;

use serde::{Deserialize, Serialize};

/// Tracks live intermediate 16-bit words plus operation counts. Inputs and
/// final outputs are not counted, only scratch buffers the multiplier needs.
///
/// Single-threaded by design; parallel callers keep one meter per task and
/// combine them with [`MemoryMeter::merge`].
#[derive(Debug, Default)]
pub struct MemoryMeter {
    current: Cell<usize>,
    peak: Cell<usize>,
    interpolations: Cell<u64>,
    pointwise: Cell<u64>,
    multiplications: Cell<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MeterReport {
    pub peak_words: usize,
    pub interpolations: u64,
    pub pointwise_products: u64,
    pub multiplications: u64,
}

/// Scratch allocation that is released from the meter on drop.
#[must_use]
pub struct Words<'a> {
    meter: &'a MemoryMeter,
    words: usize,
}

impl Drop for Words<'_> {
    fn drop(&mut self) {
        let cur = self.meter.current.get();
        debug_assert!(cur >= self.words);
        self.meter.current.set(cur - self.words);
    }
}

impl MemoryMeter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn alloc(&self, words: usize) -> Words<'_> {
        let cur = self.current.get() + words;
        self.current.set(cur);
        if cur > self.peak.get() {
            self.peak.set(cur);
        }
        Words { meter: self, words }
    }

    pub fn current(&self) -> usize {
        self.current.get()
    }

    pub fn peak(&self) -> usize {
        self.peak.get()
    }

    pub fn interpolations(&self) -> u64 {
        self.interpolations.get()
    }

    /// Slot-level (64-coefficient) negacyclic products.
    pub fn pointwise_products(&self) -> u64 {
        self.pointwise.get()
    }

    /// Coefficient multiplications inside the pointwise products.
    pub fn multiplications(&self) -> u64 {
        self.multiplications.get()
    }

    pub(crate) fn count_interpolation(&self) {
        self.interpolations.set(self.interpolations.get() + 1);
    }

    pub(crate) fn count_pointwise(&self, slots: u64, mults_per_slot: u64) {
        self.pointwise.set(self.pointwise.get() + slots);
        self.multiplications
            .set(self.multiplications.get() + slots * mults_per_slot);
    }

    /// Folds another task's meter in: peaks by max, counters by sum.
    pub fn merge(&self, other: &MemoryMeter) {
        self.peak.set(self.peak.get().max(other.peak.get()));
        self.interpolations
            .set(self.interpolations.get() + other.interpolations.get());
        self.pointwise.set(self.pointwise.get() + other.pointwise.get());
        self.multiplications
            .set(self.multiplications.get() + other.multiplications.get());
    }

    pub fn report(&self) -> MeterReport {
        MeterReport {
            peak_words: self.peak(),
            interpolations: self.interpolations(),
            pointwise_products: self.pointwise_products(),
            multiplications: self.multiplications(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards_track_peak() {
        let m = MemoryMeter::new();
        {
            let _a = m.alloc(10);
            {
                let _b = m.alloc(5);
                assert_eq!(m.current(), 15);
            }
            assert_eq!(m.current(), 10);
        }
        assert_eq!(m.current(), 0);
        assert_eq!(m.peak(), 15);
    }

    #[test]
    fn merge_takes_max_and_sum() {
        let a = MemoryMeter::new();
        let b = MemoryMeter::new();
        drop(a.alloc(4));
        drop(b.alloc(9));
        a.count_interpolation();
        b.count_interpolation();
        b.count_pointwise(7, 4096);
        a.merge(&b);
        assert_eq!(a.peak(), 9);
        assert_eq!(a.interpolations(), 2);
        assert_eq!(a.multiplications(), 7 * 4096);
    }
}
