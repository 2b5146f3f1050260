//! Greedy estimation of the maximal information gain `gamma_t`.

use alloc::vec;
use alloc::vec::Vec;

use crate::kernel::KernelTable;
use crate::math::{exp, ln_1p};
use crate::{Error, Result};

/// `1 - 1/e`, the greedy approximation ratio for monotone submodular
/// maximization.
pub fn greedy_ratio() -> f64 {
    1.0 - exp(-1.0)
}

/// Information-gain table `gamma_0 = 0, gamma_1, ..., gamma_T` in nats.
#[derive(Debug, Clone, PartialEq)]
pub struct GammaTable {
    /// Corrected values (greedy divided by `1 - 1/e`), index `t`.
    pub values: Vec<f64>,
    /// Uncorrected greedy values, index `t`.
    pub greedy: Vec<f64>,
    /// Point picked at each greedy step.
    pub sequence: Vec<usize>,
    pub noise_variance: f64,
}

impl GammaTable {
    /// `gamma_t`, saturating at the last tabulated value for `t` beyond the
    /// table.
    pub fn gamma(&self, t: usize) -> f64 {
        self.values[t.min(self.values.len() - 1)]
    }

    pub fn horizon(&self) -> usize {
        self.values.len() - 1
    }

    /// A table holding the same constant for every `t >= 1`.
    pub fn constant(value: f64, horizon: usize) -> Self {
        let mut values = vec![value; horizon + 1];
        values[0] = 0.0;
        GammaTable {
            greedy: values.clone(),
            values,
            sequence: Vec::new(),
            noise_variance: f64::NAN,
        }
    }
}

/// Greedy maximum-variance selection with variance-only updates,
/// accumulating `1/2 log(1 + var/noise)` per step.
pub fn estimate_gamma(kernel: &KernelTable, noise_variance: f64, horizon: usize) -> Result<GammaTable> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    if !(noise_variance > 0.0) {
        return Err(Error::invalid("information gain needs positive noise variance"));
    }
    let n = kernel.len();
    let mut cov = kernel.as_slice().to_vec();
    let mut greedy = Vec::with_capacity(horizon + 1);
    let mut sequence = Vec::with_capacity(horizon);
    greedy.push(0.0);
    let mut total = 0.0;
    let mut col = vec![0.0; n];
    for _ in 0..horizon {
        let (pick, var) = (0..n)
            .map(|i| (i, cov[i * n + i]))
            .fold((0, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b });
        let var = var.max(0.0);
        total += 0.5 * ln_1p(var / noise_variance);
        greedy.push(total);
        sequence.push(pick);
        let denom = var + noise_variance;
        col.copy_from_slice(&cov[pick * n..(pick + 1) * n]);
        for i in 0..n {
            let ci = col[i] / denom;
            if ci != 0.0 {
                let row = &mut cov[i * n..(i + 1) * n];
                for (r, c) in row.iter_mut().zip(&col) {
                    *r -= ci * c;
                }
            }
        }
    }
    let ratio = greedy_ratio();
    Ok(GammaTable {
        values: greedy.iter().map(|g| g / ratio).collect(),
        greedy,
        sequence,
        noise_variance,
    })
}
