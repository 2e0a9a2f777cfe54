//! Pooled empirical return-gap samples with logarithmic tail queries.
//!
//! Each node accumulates every observed return gap (steps between consecutive
//! visits of the same walk). The survival estimate needs `#{s > elapsed}`
//! per policy decision, so the counts are kept in a Fenwick tree indexed by
//! gap value.

/// Multiset of positive integer samples supporting tail counts and quantiles.
#[derive(Clone, Debug, Default)]
pub struct SampleSet {
    counts: Vec<u64>, // counts[v] = multiplicity of value v, index 0 unused
    fenwick: Vec<u64>,
    total: u64,
    sum: u64,
}

impl SampleSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> u64 {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    /// Adds one sample. Values must be ≥ 1.
    pub fn add(&mut self, value: u32) {
        assert!(value >= 1, "samples are positive gaps");
        let v = value as usize;
        if v >= self.counts.len() {
            self.grow(v + 1);
        }
        self.counts[v] += 1;
        self.total += 1;
        self.sum += value as u64;
        let mut i = v;
        while i < self.fenwick.len() {
            self.fenwick[i] += 1;
            i += i & i.wrapping_neg();
        }
    }

    fn grow(&mut self, min_len: usize) {
        let new_len = min_len.next_power_of_two().max(64);
        self.counts.resize(new_len, 0);
        // rebuild the tree at the new size
        self.fenwick = vec![0; new_len];
        for (v, &c) in self.counts.iter().enumerate().skip(1) {
            if c > 0 {
                let mut i = v;
                while i < self.fenwick.len() {
                    self.fenwick[i] += c;
                    i += i & i.wrapping_neg();
                }
            }
        }
    }

    /// Number of samples with value ≤ v.
    pub fn count_le(&self, v: i64) -> u64 {
        if v <= 0 || self.counts.is_empty() {
            return 0;
        }
        let mut i = (v as usize).min(self.counts.len() - 1);
        let mut acc = 0;
        while i > 0 {
            acc += self.fenwick[i];
            i -= i & i.wrapping_neg();
        }
        acc
    }

    /// Number of samples strictly greater than v.
    pub fn count_greater(&self, v: i64) -> u64 {
        self.total - self.count_le(v)
    }

    /// Empirical survival `#{s > elapsed} / total`; 1 for an empty pool.
    pub fn survival_fraction(&self, elapsed: f64) -> f64 {
        if self.total == 0 {
            return 1.0;
        }
        // integer samples: s > elapsed  <=>  s >= floor(elapsed) + 1
        self.count_greater(elapsed.floor() as i64) as f64 / self.total as f64
    }

    /// Smallest value v such that `#{s <= v} >= ceil(p * total)`.
    pub fn quantile(&self, p: f64) -> Option<u32> {
        if self.total == 0 {
            return None;
        }
        let target = ((p.clamp(0.0, 1.0) * self.total as f64).ceil() as u64).max(1);
        let mut pos = 0usize;
        let mut remaining = target;
        let mut mask = self.fenwick.len().next_power_of_two() >> 1;
        while mask > 0 {
            let next = pos + mask;
            if next < self.fenwick.len() && self.fenwick[next] < remaining {
                remaining -= self.fenwick[next];
                pos = next;
            }
            mask >>= 1;
        }
        Some((pos + 1) as u32)
    }

    pub fn mean(&self) -> Option<f64> {
        if self.total == 0 {
            None
        } else {
            Some(self.sum as f64 / self.total as f64)
        }
    }

    pub fn sum(&self) -> u64 {
        self.sum
    }
}
