//! Compensated sums and sample mean / standard error.

use serde::{Deserialize, Serialize};

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.carry);
    }

    pub fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
}

impl MeanSe {
    /// Two-pass estimate over a sample held in memory. The standard error
    /// is `sd / sqrt(n)` with the unbiased sample variance; it is zero for
    /// fewer than two samples.
    pub fn from_slice(xs: &[f64]) -> MeanSe {
        let n = xs.len();
        if n == 0 {
            return MeanSe {
                mean: f64::NAN,
                se: f64::NAN,
                n,
            };
        }
        let mean = xs.iter().copied().collect::<CompensatedSum>().value() / n as f64;
        if n < 2 {
            return MeanSe { mean, se: 0.0, n };
        }
        let ss = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<CompensatedSum>()
            .value();
        let var = ss / (n - 1) as f64;
        MeanSe {
            mean,
            se: (var / n as f64).sqrt(),
            n,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn compensation_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..1000 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 1000.0);
    }

    #[test]
    fn constant_sample_has_zero_se() {
        let m = MeanSe::from_slice(&[0.4; 1000]);
        assert!((m.mean - 0.4).abs() < 1e-15);
        assert_eq!(m.se, 0.0);
    }

    #[test]
    fn known_sample() {
        let m = MeanSe::from_slice(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m.mean, 2.5);
        // var = 5/3
        assert!((m.se - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn batching_does_not_change_the_sum(
            xs in prop::collection::vec(-1e3..1e3f64, 1..400), split in 0usize..400,
        ) {
            let split = split.min(xs.len());
            let whole: CompensatedSum = xs.iter().copied().collect();
            let mut a: CompensatedSum = xs[..split].iter().copied().collect();
            let b: CompensatedSum = xs[split..].iter().copied().collect();
            a.merge(&b);
            prop_assert!((a.value() - whole.value()).abs() <= 1e-12 * (1.0 + whole.value().abs()));
        }
    }
}
