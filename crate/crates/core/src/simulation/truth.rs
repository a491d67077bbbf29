//! Analytic truth oracle: the nonlinearity `h`, its gradient, and the true
//! average marginal rates of substitution.

use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rand::{Rng, SeedableRng};

use crate::error::{Error, Result};
use crate::simulation::dgp::{DgpSpec, PhiSpec, CUBIC_ATTR, TANH_ATTR};

/// `h(x, q) = c1 x3 + c2 x3^2 + c3 x3^3 + s tanh(k x4) + q_interact x3 q1`
/// where x3/x4 are the cubic/tanh attributes.
pub fn h_value(phi: &PhiSpec, x: &[f64], q: &[f64]) -> f64 {
    let mut v = 0.0;
    if let Some(&x3) = x.get(CUBIC_ATTR) {
        let [c1, c2, c3] = phi.cubic;
        v += c1 * x3 + c2 * x3 * x3 + c3 * x3 * x3 * x3;
        if phi.q_interact != 0.0 && !q.is_empty() {
            v += phi.q_interact * x3 * q[0];
        }
    }
    if let Some(&x4) = x.get(TANH_ATTR) {
        v += phi.tanh_scale * (phi.tanh_steep * x4).tanh();
    }
    v
}

/// Analytic partial derivatives of `h` with respect to each attribute.
pub fn h_gradient(phi: &PhiSpec, x: &[f64], q: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    if let Some(&x3) = x.get(CUBIC_ATTR) {
        let [c1, c2, c3] = phi.cubic;
        g[CUBIC_ATTR] = c1 + 2.0 * c2 * x3 + 3.0 * c3 * x3 * x3;
        if phi.q_interact != 0.0 && !q.is_empty() {
            g[CUBIC_ATTR] += phi.q_interact * q[0];
        }
    }
    if let Some(&x4) = x.get(TANH_ATTR) {
        let t = (phi.tanh_steep * x4).tanh();
        g[TANH_ATTR] = phi.tanh_scale * phi.tanh_steep * (1.0 - t * t);
    }
    g
}

/// True average MRS of attribute `l` with respect to attribute `k`:
/// the mean over a large fresh input sample of
/// `(beta_l + dh/dx_l) / (beta_k + dh/dx_k)`, matching how estimates
/// average per-individual derivative ratios.
pub fn true_mrs(spec: &DgpSpec, k: usize, l: usize, draws: usize) -> Result<f64> {
    if k >= spec.k_x || l >= spec.k_x {
        return Err(Error::InvalidArgument("attribute index out of range".into()));
    }
    // fixed internal stream: the truth is a property of the DGP parameters,
    // not of any replication's sample
    let mut rng = ChaCha8Rng::seed_from_u64(0x7275_7468);
    let mut sum = 0.0;
    let mut x = vec![0.0; spec.k_x];
    let mut q = vec![0.0; spec.k_q];
    for _ in 0..draws {
        for v in x.iter_mut() {
            *v = StandardNormal.sample(&mut rng);
        }
        for v in q.iter_mut() {
            *v = if rng.gen_bool(0.5) { 1.0 } else { 0.0 };
        }
        let g = h_gradient(&spec.phi, &x, &q);
        sum += (spec.beta[l] + g[l]) / (spec.beta[k] + g[k]);
    }
    Ok(sum / draws as f64)
}

/// True representative utility along a grid of one attribute, every other
/// input held at zero (the attribute means of the standard-normal design),
/// centered over the grid. Used as the reference curve for band plots.
pub fn true_utility_curve(spec: &DgpSpec, attr: usize, grid: &[f64]) -> Result<Vec<f64>> {
    if attr >= spec.k_x {
        return Err(Error::InvalidArgument("attribute index out of range".into()));
    }
    let q = vec![0.5; spec.k_q]; // Bernoulli(1/2) mean
    let mut vals: Vec<f64> = grid
        .iter()
        .map(|&v| {
            let mut x = vec![0.0; spec.k_x];
            x[attr] = v;
            spec.beta[attr] * v + h_value(&spec.phi, &x, &q) - h_value(&spec.phi, &vec![0.0; spec.k_x], &q)
        })
        .collect();
    let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
    for v in vals.iter_mut() {
        *v -= mean;
    }
    Ok(vals)
}
