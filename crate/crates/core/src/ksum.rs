//! Neumaier compensated summation.

use std::iter::Sum;
use std::ops::AddAssign;

/// Running sum with a Neumaier (improved Kahan-Babuska) correction term.
///
/// Unlike plain Kahan, the correction stays valid when an addend is larger in
/// magnitude than the running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub const fn new() -> Self {
        Self { sum: 0.0, comp: 0.0 }
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    #[inline]
    pub fn merge(&mut self, other: &NeumaierSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl AddAssign<f64> for NeumaierSum {
    fn add_assign(&mut self, x: f64) {
        self.add(x);
    }
}

impl Sum<f64> for NeumaierSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}

/// Compensated sum of a slice.
pub fn sum(values: &[f64]) -> f64 {
    values.iter().copied().sum::<NeumaierSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_addends_next_to_large_ones() {
        // naive summation returns 0 here
        let xs = [1.0, 1e100, 1.0, -1e100];
        assert_eq!(xs.iter().sum::<f64>(), 0.0);
        assert_eq!(sum(&xs), 2.0);
    }

    #[test]
    fn many_tenths() {
        let xs = vec![0.1; 1_000_000];
        let naive: f64 = xs.iter().sum();
        let comp = sum(&xs);
        assert!((comp - 100_000.0).abs() < (naive - 100_000.0).abs());
        assert!((comp - 100_000.0).abs() <= 1e-9);
    }

    #[test]
    fn merge_matches_single_pass_on_exact_data() {
        let xs: Vec<f64> = (0..1000).map(|i| i as f64 * 0.5).collect();
        let mut a: NeumaierSum = xs[..400].iter().copied().sum();
        let b: NeumaierSum = xs[400..].iter().copied().sum();
        a.merge(&b);
        assert_eq!(a.value(), sum(&xs));
    }
}
