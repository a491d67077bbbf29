//! Independent reference implementations used by the test suites to verify
//! the main code paths. Nothing in the library proper calls into this
//! module, and nothing here touches the tape engine: gradients come from
//! finite differences and the conditional-logit fit is a hand-derived
//! Newton iteration.

use crate::data::ChoiceDataset;
use crate::error::{Error, Result};

/// Central finite-difference gradient of `f` at `x`.
pub fn fd_gradient(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let orig = xp[i];
        xp[i] = orig + h;
        let up = f(&xp);
        xp[i] = orig - h;
        let dn = f(&xp);
        xp[i] = orig;
        g[i] = (up - dn) / (2.0 * h);
    }
    g
}

/// Independent conditional-logit fit: hand-coded log-likelihood, analytic
/// gradient, and a damped Newton iteration with a finite-difference Hessian.
///
/// The parameter vector stacks `[alpha (J-1) | beta (K_x) | gamma (K_q x (J-1),
/// column-major by alternative)]`, the base alternative being the last.
pub struct ClogitFit {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    /// `gamma[alt][k]` for the first J-1 alternatives.
    pub gamma: Vec<Vec<f64>>,
    /// Standard errors in the same stacking order as the internal vector.
    pub std_errors: Vec<f64>,
    pub log_lik: f64,
    pub iterations: usize,
}

impl ClogitFit {
    /// Standard errors of the beta block.
    pub fn beta_std_errors(&self) -> &[f64] {
        let jm1 = self.alpha.len();
        &self.std_errors[jm1..jm1 + self.beta.len()]
    }
}

fn pack_dim(j: usize, k_x: usize, k_q: usize) -> usize {
    (j - 1) + k_x + k_q * (j - 1)
}

fn utilities(theta: &[f64], ds: &ChoiceDataset, i: usize, out: &mut [f64]) {
    let (j, k_x, k_q) = (ds.j, ds.k_x, ds.k_q);
    let alpha = &theta[..j - 1];
    let beta = &theta[j - 1..j - 1 + k_x];
    let gamma = &theta[j - 1 + k_x..];
    for a in 0..j {
        let mut v = if a < j - 1 { alpha[a] } else { 0.0 };
        for k in 0..k_x {
            v += beta[k] * ds.x_at(i, a, k);
        }
        if a < j - 1 {
            for k in 0..k_q {
                v += gamma[a * k_q + k] * ds.q_at(i, k);
            }
        }
        out[a] = v;
    }
}

fn log_lik_and_grad(theta: &[f64], ds: &ChoiceDataset) -> (f64, Vec<f64>) {
    let (j, k_x, k_q) = (ds.j, ds.k_x, ds.k_q);
    let mut ll = 0.0;
    let mut grad = vec![0.0; theta.len()];
    let mut v = vec![0.0; j];
    let mut p = vec![0.0; j];
    for i in 0..ds.n {
        utilities(theta, ds, i, &mut v);
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for a in 0..j {
            p[a] = (v[a] - m).exp();
            z += p[a];
        }
        for a in 0..j {
            p[a] /= z;
        }
        let y = ds.choices()[i];
        ll += v[y] - m - z.ln();
        for a in 0..j {
            let resid = (a == y) as usize as f64 - p[a];
            if a < j - 1 {
                grad[a] += resid;
                for k in 0..k_q {
                    grad[j - 1 + k_x + a * k_q + k] += resid * ds.q_at(i, k);
                }
            }
            for k in 0..k_x {
                grad[j - 1 + k] += resid * ds.x_at(i, a, k);
            }
        }
    }
    (ll, grad)
}

/// Maximize the conditional-logit likelihood by damped Newton steps.
/// Returns estimates and standard errors from the inverse observed
/// information (finite differences of the analytic gradient).
pub fn fit_conditional_logit(ds: &ChoiceDataset, max_iter: usize, tol: f64) -> Result<ClogitFit> {
    let (j, k_x, k_q) = (ds.j, ds.k_x, ds.k_q);
    let dim = pack_dim(j, k_x, k_q);
    let mut theta = vec![0.0; dim];
    let (mut ll, mut grad) = log_lik_and_grad(&theta, ds);
    let mut iterations = 0;
    for _ in 0..max_iter {
        iterations += 1;
        let hess = fd_hessian(&theta, ds);
        // solve H d = grad for the ascent direction -H^{-1} grad (H is
        // negative definite at the optimum)
        let mut d = solve(&hess, &grad, dim)?;
        for v in d.iter_mut() {
            *v = -*v;
        }
        // damped line search on the log-likelihood
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let cand: Vec<f64> = theta.iter().zip(&d).map(|(t, di)| t + step * di).collect();
            let (cll, cgrad) = log_lik_and_grad(&cand, ds);
            if cll > ll {
                theta = cand;
                ll = cll;
                grad = cgrad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < tol {
            break;
        }
    }
    // observed information = -Hessian of the log-likelihood
    let hess = fd_hessian(&theta, ds);
    let mut info = vec![0.0; dim * dim];
    for (c, h) in info.iter_mut().zip(&hess) {
        *c = -h;
    }
    let cov = invert(&info, dim)?;
    let std_errors: Vec<f64> = (0..dim).map(|i| cov[i * dim + i].max(0.0).sqrt()).collect();
    let alpha = theta[..j - 1].to_vec();
    let beta = theta[j - 1..j - 1 + k_x].to_vec();
    let gamma: Vec<Vec<f64>> = (0..j - 1)
        .map(|a| theta[j - 1 + k_x + a * k_q..j - 1 + k_x + (a + 1) * k_q].to_vec())
        .collect();
    Ok(ClogitFit {
        alpha,
        beta,
        gamma,
        std_errors,
        log_lik: ll,
        iterations,
    })
}

fn fd_hessian(theta: &[f64], ds: &ChoiceDataset) -> Vec<f64> {
    let dim = theta.len();
    let h = 1e-5;
    let mut out = vec![0.0; dim * dim];
    let mut tp = theta.to_vec();
    for i in 0..dim {
        let orig = tp[i];
        tp[i] = orig + h;
        let (_, gp) = log_lik_and_grad(&tp, ds);
        tp[i] = orig - h;
        let (_, gm) = log_lik_and_grad(&tp, ds);
        tp[i] = orig;
        for k in 0..dim {
            out[i * dim + k] += (gp[k] - gm[k]) / (4.0 * h);
            out[k * dim + i] += (gp[k] - gm[k]) / (4.0 * h);
        }
    }
    out
}

/// Gaussian elimination with partial pivoting: solve `A x = b`.
fn solve(a: &[f64], b: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..dim {
        let mut piv = col;
        for r in col + 1..dim {
            if m[r * dim + col].abs() > m[piv * dim + col].abs() {
                piv = r;
            }
        }
        if m[piv * dim + col].abs() < 1e-300 {
            return Err(Error::InvalidArgument("singular system in oracle".into()));
        }
        if piv != col {
            for c in 0..dim {
                m.swap(col * dim + c, piv * dim + c);
            }
            x.swap(col, piv);
        }
        let d = m[col * dim + col];
        for r in col + 1..dim {
            let f = m[r * dim + col] / d;
            if f == 0.0 {
                continue;
            }
            for c in col..dim {
                m[r * dim + c] -= f * m[col * dim + c];
            }
            x[r] -= f * x[col];
        }
    }
    for col in (0..dim).rev() {
        let mut s = x[col];
        for c in col + 1..dim {
            s -= m[col * dim + c] * x[c];
        }
        x[col] = s / m[col * dim + col];
    }
    Ok(x)
}

fn invert(a: &[f64], dim: usize) -> Result<Vec<f64>> {
    let mut out = vec![0.0; dim * dim];
    let mut e = vec![0.0; dim];
    for col in 0..dim {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[col] = 1.0;
        let x = solve(a, &e, dim)?;
        for r in 0..dim {
            out[r * dim + col] = x[r];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulation::{generate_dataset, DgpSpec, PhiSpec};

    #[test]
    fn fd_gradient_on_a_quadratic() {
        let f = |x: &[f64]| x[0] * x[0] + 3.0 * x[0] * x[1];
        let g = fd_gradient(f, &[2.0, -1.0], 1e-5);
        assert!((g[0] - 1.0).abs() < 1e-8); // 2x + 3y = 4 - 3 = 1
        assert!((g[1] - 6.0).abs() < 1e-8);
    }

    #[test]
    fn clogit_oracle_recovers_a_linear_dgp() {
        let spec = DgpSpec {
            j: 3,
            k_x: 3,
            k_q: 2,
            beta: vec![-1.0, 0.8, -0.5],
            gamma_last: vec![0.6, -0.4],
            phi: PhiSpec::zero(),
            n: 8000,
            d: 1,
            seed: 5,
        };
        let sim = generate_dataset(&spec, 0).unwrap();
        let fit = fit_conditional_logit(&sim.data, 50, 1e-8).unwrap();
        for (k, (&est, &truth)) in fit.beta.iter().zip(&spec.beta).enumerate() {
            let se = fit.std_errors[spec.j - 1 + k];
            assert!(
                (est - truth).abs() < 3.0 * se,
                "beta[{}]: {} vs {} (se {})",
                k,
                est,
                truth,
                se
            );
        }
        // gamma_last applies to the base alternative in the DGP; the fitted
        // per-alternative gammas are relative to it, so both fitted vectors
        // should be near -gamma_last
        for a in 0..2 {
            for k in 0..2 {
                let se = fit.std_errors[spec.j - 1 + spec.k_x + a * spec.k_q + k];
                assert!(
                    (fit.gamma[a][k] + spec.gamma_last[k]).abs() < 3.0 * se,
                    "gamma[{}][{}] = {}",
                    a,
                    k,
                    fit.gamma[a][k]
                );
            }
        }
    }
}
