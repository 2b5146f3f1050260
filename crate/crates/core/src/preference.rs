//! Pairwise-preference GP with a logistic likelihood and a Laplace
//! approximation, used for the utility in dueling mode.
//!
//! Only the distinct points that took part in a duel carry latent variables;
//! the rest of the grid is predicted through the GP conditional.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::KernelTable;
use crate::linalg::Lu;
use crate::math::{abs, exp, ln_1p, sqrt};
use crate::{Error, Result};

pub const NEWTON_TOLERANCE: f64 = 1e-6;
pub const NEWTON_MAX_ITER: usize = 100;

/// Maps two latent utilities to the probability that the first one wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Link {
    /// `phi(u, v) = 1 / (1 + exp(v - u))`
    #[default]
    Logit,
}

impl Link {
    pub fn prob(&self, u: f64, v: f64) -> f64 {
        match self {
            Link::Logit => logistic(u - v),
        }
    }
}

fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + exp(-z))
    } else {
        let e = exp(z);
        e / (1.0 + e)
    }
}

/// `log(logistic(z))` without overflow.
fn log_logistic(z: f64) -> f64 {
    if z >= 0.0 {
        -ln_1p(exp(-z))
    } else {
        z - ln_1p(exp(z))
    }
}

/// One comparison: `won` is true when `first` beat `second`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Duel {
    pub first: usize,
    pub second: usize,
    pub won: bool,
}

#[derive(Debug, Clone)]
pub struct PreferenceGp {
    kernel: Arc<KernelTable>,
    link: Link,
    duels: Vec<Duel>,
    /// distinct points with a latent variable
    support: Vec<usize>,
    /// `K_A^-1 f_A` at the mode, aligned with `support`
    weights: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    fitted: bool,
    last_iterations: usize,
}

impl PreferenceGp {
    pub fn new(kernel: Arc<KernelTable>, link: Link) -> Self {
        let n = kernel.len();
        let var = (0..n).map(|i| kernel.get(i, i)).collect();
        PreferenceGp {
            kernel,
            link,
            duels: Vec::new(),
            support: Vec::new(),
            weights: Vec::new(),
            mean: vec![0.0; n],
            var,
            fitted: true,
            last_iterations: 0,
        }
    }

    pub fn link(&self) -> Link {
        self.link
    }

    pub fn duels(&self) -> &[Duel] {
        &self.duels
    }

    /// Records a duel. Self-comparisons carry no information and are
    /// dropped; returns whether the duel was kept.
    pub fn add_duel(&mut self, first: usize, second: usize, won: bool) -> Result<bool> {
        let n = self.kernel.len();
        if first >= n || second >= n {
            return Err(Error::invalid("duel index outside the grid"));
        }
        if first == second {
            return Ok(false);
        }
        for p in [first, second] {
            if !self.support.contains(&p) {
                self.support.push(p);
                self.weights.push(0.0);
            }
        }
        self.duels.push(Duel { first, second, won });
        self.fitted = false;
        Ok(true)
    }

    pub fn is_fitted(&self) -> bool {
        self.fitted
    }

    /// Newton iterations used by the last fit.
    pub fn last_iterations(&self) -> usize {
        self.last_iterations
    }

    fn position(&self, p: usize) -> usize {
        self.support.iter().position(|&s| s == p).expect("duel point in support")
    }

    /// Finds the posterior mode of the latent utilities and the Laplace
    /// covariance, then refreshes the predictive mean/variance on the grid.
    pub fn fit(&mut self) -> Result<()> {
        if self.duels.is_empty() {
            return Err(Error::invalid("preference model needs at least one duel"));
        }
        let m = self.support.len();
        let k = self.kernel.submatrix(&self.support);
        // (index of first, index of second, sign)
        let pairs: Vec<(usize, usize, f64)> = self
            .duels
            .iter()
            .map(|d| (self.position(d.first), self.position(d.second), if d.won { 1.0 } else { -1.0 }))
            .collect();

        let latent = |a: &[f64]| -> Vec<f64> {
            (0..m).map(|i| (0..m).map(|j| k[i * m + j] * a[j]).sum()).collect()
        };
        let objective = |a: &[f64], f: &[f64]| -> f64 {
            let ll: f64 = pairs.iter().map(|&(i, j, s)| log_logistic(s * (f[i] - f[j]))).sum();
            let quad: f64 = a.iter().zip(f).map(|(x, y)| x * y).sum();
            ll - 0.5 * quad
        };

        let mut a = self.weights.clone();
        let mut f = latent(&a);
        let mut psi = objective(&a, &f);
        let mut iterations = 0;
        let mut last_step = f64::INFINITY;
        let mut w = vec![0.0; m * m];
        loop {
            if iterations >= NEWTON_MAX_ITER {
                return Err(Error::NonConvergence {
                    iterations,
                    last_step,
                });
            }
            iterations += 1;
            let (grad, wm) = grad_and_hessian(&pairs, &f, m);
            w = wm;
            // z = (I + W K)^-1 (W f + grad)
            let mut b = grad.clone();
            for i in 0..m {
                for j in 0..m {
                    b[i] += w[i * m + j] * f[j];
                }
            }
            let lu = Lu::factor(identity_plus_product(&w, &k, m), m)?;
            let target = lu.solve(&b);
            let dir: Vec<f64> = target.iter().zip(&a).map(|(t, x)| t - x).collect();
            let mut step = 1.0;
            let (new_a, new_f, new_psi) = loop {
                let cand: Vec<f64> = a.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
                let cf = latent(&cand);
                let cpsi = objective(&cand, &cf);
                if cpsi >= psi - 1e-12 * (1.0 + abs(psi)) || step < 1e-10 {
                    break (cand, cf, cpsi);
                }
                step *= 0.5;
            };
            last_step = new_f.iter().zip(&f).map(|(x, y)| abs(x - y)).fold(0.0, f64::max);
            a = new_a;
            f = new_f;
            psi = new_psi;
            if last_step < NEWTON_TOLERANCE {
                break;
            }
        }
        // refresh the Hessian at the mode
        let (_, wm) = grad_and_hessian(&pairs, &f, m);
        w = wm;
        let lu = Lu::factor(identity_plus_product(&w, &k, m), m)?;
        // M = (I + W K)^-1 W, column by column
        let mut cov_corr = vec![0.0; m * m];
        let mut col = vec![0.0; m];
        for j in 0..m {
            for i in 0..m {
                col[i] = w[i * m + j];
            }
            let sol = lu.solve(&col);
            for i in 0..m {
                cov_corr[i * m + j] = sol[i];
            }
        }
        let n = self.kernel.len();
        let mut kx = vec![0.0; m];
        for x in 0..n {
            let row = self.kernel.row(x);
            for (slot, &s) in kx.iter_mut().zip(&self.support) {
                *slot = row[s];
            }
            self.mean[x] = kx.iter().zip(&a).map(|(p, q)| p * q).sum();
            let mut quad = 0.0;
            for i in 0..m {
                let mut s = 0.0;
                for j in 0..m {
                    s += cov_corr[i * m + j] * kx[j];
                }
                quad += kx[i] * s;
            }
            self.var[x] = row[x] - quad;
        }
        self.weights = a;
        self.fitted = true;
        self.last_iterations = iterations;
        Ok(())
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    pub fn mean_at(&self, x: usize) -> f64 {
        self.mean[x]
    }

    pub fn variance_at(&self, x: usize) -> f64 {
        self.var[x].max(0.0)
    }

    pub fn std_devs(&self) -> Vec<f64> {
        self.var.iter().map(|v| sqrt(v.max(0.0))).collect()
    }

    /// Latent mode at the duel points, aligned with [`PreferenceGp::support`].
    pub fn mode(&self) -> Vec<f64> {
        self.support.iter().map(|&s| self.mean[s]).collect()
    }

    pub fn support(&self) -> &[usize] {
        &self.support
    }
}

fn grad_and_hessian(pairs: &[(usize, usize, f64)], f: &[f64], m: usize) -> (Vec<f64>, Vec<f64>) {
    let mut grad = vec![0.0; m];
    let mut w = vec![0.0; m * m];
    for &(i, j, s) in pairs {
        let z = s * (f[i] - f[j]);
        let p = logistic(z);
        let q = logistic(-z);
        grad[i] += s * q;
        grad[j] -= s * q;
        let c = p * q;
        w[i * m + i] += c;
        w[j * m + j] += c;
        w[i * m + j] -= c;
        w[j * m + i] -= c;
    }
    (grad, w)
}

fn identity_plus_product(w: &[f64], k: &[f64], m: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let wil = w[i * m + l];
            if wil != 0.0 {
                for j in 0..m {
                    out[i * m + j] += wil * k[l * m + j];
                }
            }
        }
        out[i * m + i] += 1.0;
    }
    out
}
