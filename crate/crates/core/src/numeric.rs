//! Small numeric helpers shared by the estimators and the oracles.

/// Neumaier-compensated sum.
pub fn compensated_sum<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut sum = 0.0_f64;
    let mut comp = 0.0_f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Compensated sum after sorting, so the result does not depend on input order.
pub fn order_free_sum(values: &mut [f64]) -> f64 {
    values.sort_unstable_by(f64::total_cmp);
    compensated_sum(values.iter().copied())
}

/// Binomial coefficient as a float, exact for every value below 2^53.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0_f64;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc.round_if_integral()
}

trait RoundIfIntegral {
    fn round_if_integral(self) -> Self;
}

impl RoundIfIntegral for f64 {
    fn round_if_integral(self) -> f64 {
        if self < 9.0e15 {
            self.round()
        } else {
            self
        }
    }
}

/// P(K = k) when drawing `draws` items without replacement from `size` items of
/// which `successes` are marked.
pub fn hypergeometric_pmf(size: usize, successes: usize, draws: usize, k: usize) -> f64 {
    if k > successes || k > draws || draws - k > size - successes || draws > size {
        return 0.0;
    }
    binomial(successes, k) * binomial(size - successes, draws - k) / binomial(size, draws)
}

/// Support of the hypergeometric law as an inclusive range.
pub fn hypergeometric_support(size: usize, successes: usize, draws: usize) -> std::ops::RangeInclusive<usize> {
    let lo = draws.saturating_sub(size - successes);
    let hi = draws.min(successes);
    lo..=hi
}

/// Sample covariance (divisor n - 1) of paired values; zero for fewer than two pairs.
pub fn sample_cov(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = compensated_sum(a.iter().copied()) / n as f64;
    let mb = compensated_sum(b.iter().copied()) / n as f64;
    compensated_sum(a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb))) / (n - 1) as f64
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    compensated_sum(values.iter().copied()) / values.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binomial_small_values() {
        assert_eq!(binomial(5, 2), 10.0);
        assert_eq!(binomial(10, 0), 1.0);
        assert_eq!(binomial(3, 4), 0.0);
        assert!((binomial(100, 50) / 100891344545564193334812497256.0 - 1.0).abs() < 1e-13);
    }

    #[test]
    fn hypergeometric_sums_to_one() {
        let total: f64 = hypergeometric_support(20, 7, 9).map(|k| hypergeometric_pmf(20, 7, 9, k)).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn order_free_sum_ignores_permutation() {
        let mut a = vec![1e16, 1.0, -1e16, 3.5, 1e-3, 7.25];
        let mut b = vec![7.25, 1e-3, -1e16, 1.0, 3.5, 1e16];
        assert_eq!(order_free_sum(&mut a).to_bits(), order_free_sum(&mut b).to_bits());
        assert_eq!(order_free_sum(&mut a), 11.751);
    }
}
