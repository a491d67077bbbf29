//! Chain diagnostics.

/// Effective sample size of one scalar series via Geyer's initial positive
/// sequence: `ESS = n / (1 + 2 * sum of paired autocorrelations)` where the
/// sum runs over consecutive lag pairs while their sum stays positive.
///
/// Returns `n` for white noise and much less for sticky chains; a constant
/// series has no information and returns 1.
pub fn effective_sample_size(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return n.max(1) as f64;
    }
    let nf = n as f64;
    let mean = xs.iter().sum::<f64>() / nf;
    let c0: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / nf;
    if c0 <= 0.0 {
        return 1.0;
    }
    let autocov = |lag: usize| -> f64 {
        let mut s = 0.0;
        for i in 0..n - lag {
            s += (xs[i] - mean) * (xs[i + lag] - mean);
        }
        s / nf
    };
    let mut tau = 1.0; // integrated autocorrelation time, 1 + 2 sum rho_k
    let mut lag = 1;
    while lag + 1 < n {
        let pair = (autocov(lag) + autocov(lag + 1)) / c0;
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        lag += 2;
    }
    (nf / tau).clamp(1.0, nf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn white_noise_has_near_full_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs: Vec<f64> = (0..5000).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let ess = effective_sample_size(&xs);
        assert!(ess > 2500.0, "ess = {}", ess);
    }

    #[test]
    fn ar1_chain_has_reduced_ess() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let rho: f64 = 0.95;
        let mut x = 0.0;
        let xs: Vec<f64> = (0..5000)
            .map(|_| {
                x = rho * x + rng.gen_range(-1.0..1.0f64);
                x
            })
            .collect();
        let ess = effective_sample_size(&xs);
        // theoretical tau = (1+rho)/(1-rho) = 39 -> ess ~ 128
        assert!(ess < 500.0, "ess = {}", ess);
        assert!(ess > 20.0, "ess = {}", ess);
    }

    #[test]
    fn constant_series_degenerates() {
        let xs = vec![2.0; 100];
        assert_eq!(effective_sample_size(&xs), 1.0);
    }
}
