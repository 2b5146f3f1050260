//! Covariance functions and their tabulation over a grid.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::domain::GridDomain;
use crate::math::{exp, gamma, powf, sqrt};
use crate::special::bessel_k;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelFamily {
    SquaredExponential,
    /// Matérn with smoothness `nu > 0`.
    Matern { nu: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum LengthScale {
    Shared(f64),
    PerDim(Vec<f64>),
}

/// A stationary kernel: family, length scale(s) and amplitude `k(x, x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub length_scale: LengthScale,
    pub amplitude: f64,
}

impl KernelSpec {
    pub fn squared_exponential(length_scale: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::SquaredExponential, LengthScale::Shared(length_scale), amplitude)
    }

    pub fn matern(nu: f64, length_scale: f64, amplitude: f64) -> Result<Self> {
        Self::new(KernelFamily::Matern { nu }, LengthScale::Shared(length_scale), amplitude)
    }

    pub fn new(family: KernelFamily, length_scale: LengthScale, amplitude: f64) -> Result<Self> {
        if !(amplitude > 0.0) || !amplitude.is_finite() {
            return Err(Error::invalid("kernel amplitude must be positive"));
        }
        let ok = match &length_scale {
            LengthScale::Shared(l) => *l > 0.0 && l.is_finite(),
            LengthScale::PerDim(ls) => !ls.is_empty() && ls.iter().all(|l| *l > 0.0 && l.is_finite()),
        };
        if !ok {
            return Err(Error::invalid("length scales must be positive"));
        }
        if let KernelFamily::Matern { nu } = family {
            if !(nu > 0.0) || !nu.is_finite() {
                return Err(Error::invalid("Matérn smoothness must be positive"));
            }
        }
        Ok(KernelSpec {
            family,
            length_scale,
            amplitude,
        })
    }

    /// Same kernel with a different amplitude.
    pub fn with_amplitude(&self, amplitude: f64) -> Result<Self> {
        Self::new(self.family, self.length_scale.clone(), amplitude)
    }

    /// Length-scale-normalized distance between two points.
    fn scaled_distance(&self, x: &[f64], y: &[f64]) -> f64 {
        let s: f64 = match &self.length_scale {
            LengthScale::Shared(l) => x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / (l * l),
            LengthScale::PerDim(ls) => x
                .iter()
                .zip(y)
                .zip(ls.iter().cycle())
                .map(|((a, b), l)| (a - b) * (a - b) / (l * l))
                .sum(),
        };
        sqrt(s)
    }

    /// Correlation as a function of the scaled distance, equal to 1 at 0.
    pub fn correlation(&self, r: f64) -> f64 {
        if r == 0.0 {
            return 1.0;
        }
        match self.family {
            KernelFamily::SquaredExponential => exp(-0.5 * r * r),
            KernelFamily::Matern { nu } => matern_correlation(nu, r),
        }
    }
}

fn matern_correlation(nu: f64, r: f64) -> f64 {
    let z = sqrt(2.0 * nu) * r;
    // closed forms for the common half-integer orders
    if nu == 0.5 {
        return exp(-z);
    }
    if nu == 1.5 {
        return (1.0 + z) * exp(-z);
    }
    if nu == 2.5 {
        return (1.0 + z + z * z / 3.0) * exp(-z);
    }
    if z > 700.0 {
        return 0.0;
    }
    let c = powf(2.0, 1.0 - nu) / gamma(nu);
    (c * powf(z, nu) * bessel_k(nu, z)).min(1.0)
}

/// Evaluates `k(x, y)`.
pub fn kernel_eval(spec: &KernelSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::LengthMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    if let LengthScale::PerDim(ls) = &spec.length_scale {
        if ls.len() != x.len() {
            return Err(Error::LengthMismatch {
                expected: x.len(),
                got: ls.len(),
            });
        }
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("kernel input"));
    }
    Ok(spec.amplitude * spec.correlation(spec.scaled_distance(x, y)))
}

/// Dense kernel matrix over every pair of grid points. This is also how a
/// precomputed kernel enters the crate.
#[derive(Debug, Clone)]
pub struct KernelTable {
    n: usize,
    amplitude: f64,
    data: Vec<f64>,
}

impl KernelTable {
    pub fn from_spec(spec: &KernelSpec, domain: &GridDomain) -> Result<Self> {
        let n = domain.len();
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            data[i * n + i] = spec.amplitude;
            for j in 0..i {
                let v = kernel_eval(spec, domain.point(i), domain.point(j))?;
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Ok(KernelTable {
            n,
            amplitude: spec.amplitude,
            data,
        })
    }

    /// Wraps a user-supplied symmetric matrix (row-major, `n x n`).
    pub fn from_matrix(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::LengthMismatch {
                expected: n * n,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel matrix"));
        }
        for i in 0..n {
            for j in 0..i {
                if (data[i * n + j] - data[j * n + i]).abs() > 1e-12 * (1.0 + data[i * n + j].abs()) {
                    return Err(Error::invalid("kernel matrix is not symmetric"));
                }
            }
        }
        let amplitude = (0..n).map(|i| data[i * n + i]).fold(0.0, f64::max);
        if !(amplitude > 0.0) {
            return Err(Error::invalid("kernel matrix has no positive diagonal"));
        }
        Ok(KernelTable { n, amplitude, data })
    }

    pub fn shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Largest prior variance; the scale used for jitter.
    pub fn amplitude(&self) -> f64 {
        self.amplitude
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Submatrix over the given indices, row-major.
    pub fn submatrix(&self, idx: &[usize]) -> Vec<f64> {
        let m = idx.len();
        let mut out = Vec::with_capacity(m * m);
        for &i in idx {
            let row = self.row(i);
            out.extend(idx.iter().map(|&j| row[j]));
        }
        out
    }
}
