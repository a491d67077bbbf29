//! Quantiles, equal-tailed credible intervals, and empirical coverage.

use crate::error::{Error, Result};

/// Linear-interpolation quantile (type 7) of an unsorted sample.
pub fn quantile(values: &[f64], p: f64) -> f64 {
    debug_assert!(!values.is_empty());
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    quantile_sorted(&v, p)
}

fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = p.clamp(0.0, 1.0) * (n - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let w = h - lo as f64;
        sorted[lo] * (1.0 - w) + sorted[hi] * w
    }
}

/// Equal-tailed interval at the given credibility level: the
/// `(1-level)/2` and `1-(1-level)/2` quantiles of the draws.
pub fn equal_tailed_interval(draws: &[f64], level: f64) -> Result<(f64, f64)> {
    if draws.is_empty() {
        return Err(Error::InvalidArgument("no draws for the interval".into()));
    }
    if !(0.0 < level && level < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "credibility level must be in (0, 1), got {}",
            level
        )));
    }
    let mut v = draws.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tail = (1.0 - level) / 2.0;
    Ok((quantile_sorted(&v, tail), quantile_sorted(&v, 1.0 - tail)))
}

/// Fraction of replications whose interval contains the truth.
pub fn empirical_coverage(intervals: &[(f64, f64)], truths: &[f64]) -> Result<f64> {
    if intervals.is_empty() || intervals.len() != truths.len() {
        return Err(Error::InvalidArgument(
            "need matching, nonempty intervals and truths".into(),
        ));
    }
    let hits = intervals
        .iter()
        .zip(truths)
        .filter(|((lo, hi), t)| *lo <= **t && **t <= *hi)
        .count();
    Ok(hits as f64 / intervals.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interval_tails_are_balanced() {
        // fraction below lower and above upper are each ~ (1-level)/2
        let draws: Vec<f64> = (0..1000).map(|i| i as f64).collect();
        let (lo, hi) = equal_tailed_interval(&draws, 0.9).unwrap();
        let below = draws.iter().filter(|&&d| d < lo).count() as f64 / 1000.0;
        let above = draws.iter().filter(|&&d| d > hi).count() as f64 / 1000.0;
        assert!((below - 0.05).abs() <= 1.0 / 1000.0 + 1e-12, "below {}", below);
        assert!((above - 0.05).abs() <= 1.0 / 1000.0 + 1e-12, "above {}", above);
    }

    #[test]
    fn degenerate_interval_from_single_draw() {
        let (lo, hi) = equal_tailed_interval(&[3.5], 0.95).unwrap();
        assert_eq!((lo, hi), (3.5, 3.5));
    }

    #[test]
    fn coverage_extremes() {
        let wide = vec![(f64::NEG_INFINITY, f64::INFINITY); 7];
        let truths = vec![0.3; 7];
        assert_eq!(empirical_coverage(&wide, &truths).unwrap(), 1.0);
        let empty_width: Vec<(f64, f64)> = truths.iter().map(|&t| (t + 1.0, t + 1.0)).collect();
        assert_eq!(empirical_coverage(&empty_width, &truths).unwrap(), 0.0);
    }
}
