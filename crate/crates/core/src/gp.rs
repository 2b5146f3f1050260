//! Exact GP regression over grid indices.
//!
//! The model keeps the Cholesky factor `L` of `K_A + noise*I` over the
//! observed points `A`, the projections `V = L^-1 K_{A,D}` onto every grid
//! point and `alpha = L^-1 y`. Posterior mean and variance over the whole
//! grid are then `alphaᵀ V` and `k(x,x) - |V[:,x]|²`, both maintained
//! incrementally: appending one observation borders `L` and adds one row to
//! `V` in `O(n |D|)`.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};

use crate::domain::GridFunction;
use crate::kernel::KernelTable;
use crate::linalg::{cholesky_with_jitter, PackedLower};
use crate::{Error, Result, Rng};

/// Appends between full refactorizations.
pub const REFACTOR_EVERY: usize = 32;

#[derive(Debug, Clone)]
pub struct GpModel {
    kernel: Arc<KernelTable>,
    noise_variance: f64,
    obs_index: Vec<usize>,
    obs_value: Vec<f64>,
    chol: PackedLower,
    jitter: f64,
    proj: Vec<Vec<f64>>,
    alpha: Vec<f64>,
    mean: Vec<f64>,
    var: Vec<f64>,
    appends_since_refactor: usize,
}

/// Posterior mean and variance restricted to a set of query points.
#[derive(Debug, Clone, PartialEq)]
pub struct Posterior {
    pub means: Vec<f64>,
    pub variances: Vec<f64>,
}

impl GpModel {
    pub fn new(kernel: Arc<KernelTable>, noise_variance: f64) -> Result<Self> {
        if !(noise_variance >= 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid("noise variance must be nonnegative"));
        }
        let n = kernel.len();
        let var = (0..n).map(|i| kernel.get(i, i)).collect();
        Ok(GpModel {
            kernel,
            noise_variance,
            obs_index: Vec::new(),
            obs_value: Vec::new(),
            chol: PackedLower::new(),
            jitter: 0.0,
            proj: Vec::new(),
            alpha: Vec::new(),
            mean: vec![0.0; n],
            var,
            appends_since_refactor: 0,
        })
    }

    pub fn kernel(&self) -> &Arc<KernelTable> {
        &self.kernel
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn num_observations(&self) -> usize {
        self.obs_index.len()
    }

    pub fn observations(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.obs_index.iter().copied().zip(self.obs_value.iter().copied())
    }

    /// Diagonal jitter currently in the factorization.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Adds one observation `(x, y)`. The factor is bordered in place unless
    /// the new pivot breaks down or the periodic refactorization is due.
    pub fn add_observation(&mut self, x: usize, y: f64) -> Result<()> {
        if x >= self.kernel.len() {
            return Err(Error::invalid("observation index outside the grid"));
        }
        if !y.is_finite() {
            return Err(Error::NonFinite("observation"));
        }
        self.obs_index.push(x);
        self.obs_value.push(y);
        self.appends_since_refactor += 1;
        if self.appends_since_refactor >= REFACTOR_EVERY {
            return self.refactor();
        }
        let cross: Vec<f64> = self.obs_index[..self.obs_index.len() - 1]
            .iter()
            .map(|&a| self.kernel.get(a, x))
            .collect();
        let diag = self.kernel.get(x, x) + self.noise_variance + self.jitter;
        if !self.chol.push_row(&cross, diag) {
            return self.refactor();
        }
        let n = self.chol.dim() - 1;
        let lrow = self.chol.row(n).to_vec();
        let pivot = lrow[n];
        let mut a = y;
        for (l, al) in lrow[..n].iter().zip(&self.alpha) {
            a -= l * al;
        }
        let a = a / pivot;
        let mut row = self.kernel.row(x).to_vec();
        for (l, prev) in lrow[..n].iter().zip(&self.proj) {
            if *l != 0.0 {
                for (r, p) in row.iter_mut().zip(prev) {
                    *r -= l * p;
                }
            }
        }
        for ((r, m), v) in row.iter_mut().zip(self.mean.iter_mut()).zip(self.var.iter_mut()) {
            *r /= pivot;
            *m += a * *r;
            *v -= *r * *r;
        }
        self.alpha.push(a);
        self.proj.push(row);
        Ok(())
    }

    /// Rebuilds the factorization from scratch, climbing the jitter ladder
    /// only when the plain factorization fails.
    pub fn refactor(&mut self) -> Result<()> {
        self.appends_since_refactor = 0;
        let n = self.obs_index.len();
        let nd = self.kernel.len();
        let mut k = self.kernel.submatrix(&self.obs_index);
        for i in 0..n {
            k[i * n + i] += self.noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(&k, n, self.kernel.amplitude())?;
        self.chol = chol;
        self.jitter = jitter;
        let mut alpha = self.obs_value.clone();
        self.chol.solve_lower_in_place(&mut alpha);
        // V = L^-1 K_{A,D}, row by row (forward substitution over rows)
        let mut proj: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let lrow = self.chol.row(i);
            let mut row = self.kernel.row(self.obs_index[i]).to_vec();
            for (l, prev) in lrow[..i].iter().zip(&proj) {
                if *l != 0.0 {
                    for (r, p) in row.iter_mut().zip(prev) {
                        *r -= l * p;
                    }
                }
            }
            let pivot = lrow[i];
            row.iter_mut().for_each(|r| *r /= pivot);
            proj.push(row);
        }
        let mut mean = vec![0.0; nd];
        let mut var: Vec<f64> = (0..nd).map(|i| self.kernel.get(i, i)).collect();
        for (row, a) in proj.iter().zip(&alpha) {
            for ((m, v), r) in mean.iter_mut().zip(var.iter_mut()).zip(row) {
                *m += a * r;
                *v -= r * r;
            }
        }
        self.alpha = alpha;
        self.proj = proj;
        self.mean = mean;
        self.var = var;
        Ok(())
    }

    /// Posterior mean at every grid point.
    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Raw posterior variance at every grid point (may dip below zero by
    /// rounding; see [`GpModel::variance_at`]).
    pub fn raw_variance(&self) -> &[f64] {
        &self.var
    }

    pub fn mean_at(&self, x: usize) -> f64 {
        self.mean[x]
    }

    pub fn variance_at(&self, x: usize) -> f64 {
        self.var[x].max(0.0)
    }

    pub fn std_at(&self, x: usize) -> f64 {
        crate::math::sqrt(self.variance_at(x))
    }

    /// Posterior standard deviation at every point.
    pub fn std_devs(&self) -> Vec<f64> {
        self.var.iter().map(|v| crate::math::sqrt(v.max(0.0))).collect()
    }

    /// Posterior covariance `k_T(x, y)`.
    pub fn covariance(&self, x: usize, y: usize) -> f64 {
        let mut c = self.kernel.get(x, y);
        for row in &self.proj {
            c -= row[x] * row[y];
        }
        c
    }

    /// `k_T(x, y)` for every `y` in `targets`.
    pub fn covariance_column(&self, x: usize, targets: &[usize]) -> Vec<f64> {
        let krow = self.kernel.row(x);
        let mut out: Vec<f64> = targets.iter().map(|&y| krow[y]).collect();
        for row in &self.proj {
            let rx = row[x];
            if rx != 0.0 {
                for (o, &y) in out.iter_mut().zip(targets) {
                    *o -= rx * row[y];
                }
            }
        }
        out
    }

    /// Posterior restricted to `query` (variances clamped at zero).
    pub fn posterior(&self, query: &[usize]) -> Posterior {
        Posterior {
            means: query.iter().map(|&q| self.mean[q]).collect(),
            variances: query.iter().map(|&q| self.variance_at(q)).collect(),
        }
    }
}

/// Draws one joint sample of the zero-mean GP over every grid point.
pub fn sample_prior(kernel: &KernelTable, rng_seed: u64) -> Result<GridFunction> {
    let mut rng = crate::rng_from_seed(rng_seed);
    sample_prior_with(kernel, &mut rng)
}

pub fn sample_prior_with(kernel: &KernelTable, rng: &mut Rng) -> Result<GridFunction> {
    PriorSampler::new(kernel)?.sample(rng)
}

/// Cholesky factor of a prior covariance, kept for repeated joint draws.
#[derive(Debug, Clone)]
pub struct PriorSampler {
    factor: PackedLower,
    jitter: f64,
}

impl PriorSampler {
    pub fn new(kernel: &KernelTable) -> Result<Self> {
        let (factor, jitter) = cholesky_with_jitter(kernel.as_slice(), kernel.len(), kernel.amplitude())?;
        Ok(PriorSampler { factor, jitter })
    }

    /// Jitter added to the diagonal before factorizing.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn sample(&self, rng: &mut Rng) -> Result<GridFunction> {
        let z: Vec<f64> = (0..self.factor.dim()).map(|_| StandardNormal.sample(rng)).collect();
        GridFunction::new(self.factor.mul_vec(&z))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::make_uniform_grid;
    use crate::kernel::KernelSpec;

    fn table(ppa: usize, amp: f64) -> Arc<KernelTable> {
        let g = make_uniform_grid(1, ppa).unwrap();
        KernelTable::from_spec(&KernelSpec::matern(1.2, 0.3, amp).unwrap(), &g)
            .unwrap()
            .shared()
    }

    #[test]
    fn prior_posterior() {
        let t = table(7, 2.0);
        let gp = GpModel::new(t, 0.1).unwrap();
        let p = gp.posterior(&[0, 3, 6]);
        assert_eq!(p.means, vec![0.0; 3]);
        assert_eq!(p.variances, vec![2.0; 3]);
    }

    #[test]
    fn single_observation_closed_form() {
        let t = table(5, 1.5);
        let mut gp = GpModel::new(t, 0.25).unwrap();
        gp.add_observation(2, 0.8).unwrap();
        let k = 1.5;
        let p = gp.posterior(&[2]);
        assert!((p.means[0] - 0.8 * k / (k + 0.25)).abs() < 1e-14);
        assert!((p.variances[0] - (k - k * k / (k + 0.25))).abs() < 1e-14);
    }

    #[test]
    fn variance_never_increases() {
        let t = table(9, 1.0);
        let mut gp = GpModel::new(t, 0.01).unwrap();
        let mut prev: Vec<f64> = (0..9).map(|i| gp.variance_at(i)).collect();
        for (k, x) in [4, 0, 8, 4, 2, 4, 7].into_iter().enumerate() {
            gp.add_observation(x, k as f64 * 0.1).unwrap();
            for i in 0..9 {
                assert!(gp.variance_at(i) <= prev[i] + 1e-12);
                assert!(gp.raw_variance()[i] >= -1e-10);
            }
            prev = (0..9).map(|i| gp.variance_at(i)).collect();
        }
    }

    #[test]
    fn near_noiseless_observation_pins_variance() {
        let t = table(6, 1.0);
        let mut gp = GpModel::new(t, 1e-12).unwrap();
        gp.add_observation(3, 0.5).unwrap();
        assert!(gp.variance_at(3) < 1e-6);
    }

    #[test]
    fn incremental_matches_refactor() {
        let t = table(11, 1.0);
        let mut inc = GpModel::new(t, 1e-3).unwrap();
        for k in 0..40 {
            inc.add_observation((k * 7) % 11, (k as f64).sin()).unwrap();
        }
        let mut full = inc.clone();
        full.refactor().unwrap();
        for i in 0..11 {
            assert!((inc.mean_at(i) - full.mean_at(i)).abs() < 1e-9);
            assert!((inc.raw_variance()[i] - full.raw_variance()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn repeated_points_without_noise_use_jitter() {
        let t = table(4, 1.0);
        let mut gp = GpModel::new(t, 0.0).unwrap();
        gp.add_observation(1, 0.3).unwrap();
        gp.add_observation(1, 0.3).unwrap();
        assert!(gp.jitter() > 0.0);
        assert!((gp.mean_at(1) - 0.3).abs() < 1e-4);
    }

    #[test]
    fn prior_samples_are_reproducible_and_degenerate_at_zero_amplitude() {
        let t = table(8, 1.0);
        let a = sample_prior(&t, 17).unwrap();
        let b = sample_prior(&t, 17).unwrap();
        assert_eq!(
            a.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.values().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        let tiny = table(8, 1e-14);
        let s = sample_prior(&tiny, 3).unwrap();
        assert!(s.values().iter().all(|v| v.abs() < 1e-6));
    }

    #[test]
    fn rejects_bad_inputs() {
        let t = table(3, 1.0);
        assert!(GpModel::new(t.clone(), -1.0).is_err());
        let mut gp = GpModel::new(t, 0.1).unwrap();
        assert!(gp.add_observation(3, 0.0).is_err());
        assert!(gp.add_observation(0, f64::INFINITY).is_err());
    }
}
