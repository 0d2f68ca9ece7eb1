use serde::{Deserialize, Serialize};

use crate::types::{Timestamp, SECONDS_PER_DAY, SECONDS_PER_HOUR};

/// Click count buckets `{0, 1, 2, 3-5, 6-10, 11+}`.
pub const COUNT_BUCKET_BOUNDS: [u64; 5] = [1, 2, 3, 6, 11];
pub const COUNT_BUCKETS: usize = 6;

/// Recency buckets `{<1h, <1d, <7d, >=7d, never}`.
pub const RECENCY_BUCKET_BOUNDS: [Timestamp; 3] =
    [SECONDS_PER_HOUR, SECONDS_PER_DAY, 7 * SECONDS_PER_DAY];
pub const RECENCY_BUCKETS: usize = 5;
pub const RECENCY_NEVER: u32 = 4;

/// Counter buckets: `1 + floor(log2(count + 1))`, capped.
pub const LOG_BUCKETS: usize = 16;

pub fn count_bucket(clicks: u64) -> u32 {
    COUNT_BUCKET_BOUNDS
        .iter()
        .take_while(|&&b| clicks >= b)
        .count() as u32
}

pub fn recency_bucket(last: Option<Timestamp>, now: Timestamp) -> u32 {
    match last {
        None => RECENCY_NEVER,
        Some(t) => {
            let age = now - t;
            RECENCY_BUCKET_BOUNDS
                .iter()
                .take_while(|&&b| age >= b)
                .count() as u32
        }
    }
}

/// Id in `1..=LOG_BUCKETS`; 0 stays free for padding.
pub fn log_bucket(count: u64) -> u32 {
    let b = 64 - (count + 1).leading_zeros() - 1;
    1 + b.min(LOG_BUCKETS as u32 - 1)
}

/// Equal-frequency boundaries fitted once and then frozen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantileBuckets {
    pub boundaries: Vec<f64>,
    pub buckets: usize,
}

impl QuantileBuckets {
    /// `buckets - 1` cut points at the empirical quantiles of `values`.
    pub fn fit(values: &[f64], buckets: usize) -> Self {
        let mut sorted: Vec<f64> = values.iter().copied().filter(|v| v.is_finite()).collect();
        sorted.sort_by(f64::total_cmp);
        let mut boundaries = Vec::new();
        if !sorted.is_empty() {
            for q in 1..buckets {
                let idx = (q * sorted.len() / buckets).min(sorted.len() - 1);
                boundaries.push(sorted[idx]);
            }
        }
        boundaries.dedup();
        QuantileBuckets {
            boundaries,
            buckets,
        }
    }

    /// Id in `1..=buckets`; `buckets + 1` for an undefined value.
    pub fn bucket(&self, value: Option<f64>) -> u32 {
        match value {
            None => self.buckets as u32 + 1,
            Some(v) => 1 + self.boundaries.iter().take_while(|&&b| v >= b).count() as u32,
        }
    }

    /// Vocabulary size including padding and the undefined id.
    pub fn vocab(&self) -> usize {
        self.buckets + 2
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn count_boundaries() {
        let got: Vec<u32> = [0, 1, 2, 3, 5, 6, 10, 11, 500]
            .iter()
            .map(|&c| count_bucket(c))
            .collect();
        assert_eq!(got, vec![0, 1, 2, 3, 3, 4, 4, 5, 5]);
    }

    #[test]
    fn recency_boundaries() {
        let now = 100 * SECONDS_PER_DAY;
        assert_eq!(recency_bucket(None, now), RECENCY_NEVER);
        assert_eq!(recency_bucket(Some(now - 59), now), 0);
        assert_eq!(recency_bucket(Some(now - SECONDS_PER_HOUR), now), 1);
        assert_eq!(recency_bucket(Some(now - 2 * SECONDS_PER_DAY), now), 2);
        assert_eq!(recency_bucket(Some(now - 7 * SECONDS_PER_DAY), now), 3);
    }

    #[test]
    fn four_clicks_two_days_ago() {
        let now = 10 * SECONDS_PER_DAY;
        assert_eq!(count_bucket(4), 3);
        assert_eq!(recency_bucket(Some(now - 2 * SECONDS_PER_DAY), now), 2);
    }

    #[test]
    fn count_bucket_monotone() {
        let mut prev = 0;
        for c in 0..1000 {
            let b = count_bucket(c);
            assert!(b >= prev);
            prev = b;
        }
    }

    #[test]
    fn log_bucket_values() {
        assert_eq!(log_bucket(0), 1);
        assert_eq!(log_bucket(1), 2);
        assert_eq!(log_bucket(2), 2);
        assert_eq!(log_bucket(3), 3);
        assert_eq!(log_bucket(u64::MAX - 1), LOG_BUCKETS as u32);
    }

    #[test]
    fn deciles() {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let q = QuantileBuckets::fit(&values, 10);
        assert_eq!(q.boundaries.len(), 9);
        assert_eq!(q.bucket(Some(-1.0)), 1);
        assert_eq!(q.bucket(Some(10.0)), 2);
        assert_eq!(q.bucket(Some(1e9)), 10);
        assert_eq!(q.bucket(None), 11);
    }
}
