//! The finite decision set, its metric, and per-point containers.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::Index;

use crate::math::{ln, sqrt};
use crate::{Error, Result};

/// Largest grid `make_uniform_grid` builds unless told otherwise.
pub const DEFAULT_POINT_BUDGET: usize = 1 << 20;

/// Grids up to this size keep a dense distance table.
const DISTANCE_TABLE_LIMIT: usize = 1024;

/// Distance between two coordinate vectors.
#[derive(Clone, Copy, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// User-provided metric; must be symmetric, nonnegative and zero on the
    /// diagonal.
    Custom(fn(&[f64], &[f64]) -> f64),
}

impl core::fmt::Debug for Metric {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Metric::Euclidean => f.write_str("Euclidean"),
            Metric::Custom(_) => f.write_str("Custom"),
        }
    }
}

impl Metric {
    pub fn eval(&self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()),
            Metric::Custom(f) => f(a, b),
        }
    }
}

/// A finite set of points in `R^dim` with a metric.
#[derive(Debug, Clone)]
pub struct GridDomain {
    dim: usize,
    coords: Vec<f64>,
    metric: Metric,
    distances: Option<Vec<f64>>,
}

impl PartialEq for GridDomain {
    fn eq(&self, other: &Self) -> bool {
        let same_metric = match (self.metric, other.metric) {
            (Metric::Euclidean, Metric::Euclidean) => true,
            (Metric::Custom(a), Metric::Custom(b)) => core::ptr::fn_addr_eq(a, b),
            _ => false,
        };
        same_metric && self.dim == other.dim && self.coords == other.coords
    }
}

impl GridDomain {
    /// Builds a domain from a flat row-major coordinate table.
    pub fn new(dim: usize, coords: Vec<f64>, metric: Metric) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if coords.len() % dim != 0 || coords.is_empty() {
            return Err(Error::invalid("coordinate table is not a whole number of points"));
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("grid coordinates"));
        }
        let mut domain = GridDomain {
            dim,
            coords,
            metric,
            distances: None,
        };
        let n = domain.len();
        if n <= DISTANCE_TABLE_LIMIT {
            let mut table = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..i {
                    let d = domain.metric.eval(domain.point(i), domain.point(j));
                    table[i * n + j] = d;
                    table[j * n + i] = d;
                }
            }
            domain.distances = Some(table);
        }
        Ok(domain)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn points(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> f64 {
        match &self.distances {
            Some(t) => t[i * self.len() + j],
            None => self.metric.eval(self.point(i), self.point(j)),
        }
    }
}

/// Regular lattice over `[0,1]^dim` with Euclidean metric. The last
/// coordinate varies fastest.
pub fn make_uniform_grid(dim: usize, points_per_axis: usize) -> Result<GridDomain> {
    make_uniform_grid_with_budget(dim, points_per_axis, DEFAULT_POINT_BUDGET)
}

pub fn make_uniform_grid_with_budget(
    dim: usize,
    points_per_axis: usize,
    budget: usize,
) -> Result<GridDomain> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be positive"));
    }
    if points_per_axis < 2 {
        return Err(Error::invalid("need at least two points per axis"));
    }
    // compare in log space so the size itself never overflows
    if dim as f64 * ln(points_per_axis as f64) > ln(budget as f64) + 1e-9 {
        return Err(Error::GridTooLarge {
            dim,
            points_per_axis,
            budget,
        });
    }
    let n = points_per_axis.pow(dim as u32);
    let step = 1.0 / (points_per_axis - 1) as f64;
    let mut coords = Vec::with_capacity(n * dim);
    let mut digits = vec![0usize; dim];
    for _ in 0..n {
        coords.extend(digits.iter().map(|&d| d as f64 * step));
        for k in (0..dim).rev() {
            digits[k] += 1;
            if digits[k] < points_per_axis {
                break;
            }
            digits[k] = 0;
        }
    }
    GridDomain::new(dim, coords, Metric::Euclidean)
}

/// Tightest Lipschitz constant of a tabulated function on the domain.
pub fn lipschitz_constant(domain: &GridDomain, values: &GridFunction) -> Result<f64> {
    if values.len() != domain.len() {
        return Err(Error::LengthMismatch {
            expected: domain.len(),
            got: values.len(),
        });
    }
    let n = domain.len();
    let mut best = 0.0f64;
    for i in 0..n {
        for j in 0..i {
            let d = domain.distance(i, j);
            if d > 0.0 {
                best = best.max((values[i] - values[j]).abs() / d);
            }
        }
    }
    Ok(best)
}

/// Set of point indices, stored as a bitset.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct GridMask {
    n: usize,
    words: Vec<u64>,
}

impl core::fmt::Debug for GridMask {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl GridMask {
    pub fn empty(n: usize) -> Self {
        GridMask {
            n,
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub fn full(n: usize) -> Self {
        let mut m = Self::empty(n);
        for i in 0..n {
            m.insert(i);
        }
        m
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Self {
        let mut m = Self::empty(n);
        for i in indices {
            m.insert(i);
        }
        m
    }

    /// Number of points in the underlying domain.
    pub fn universe(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn contains(&self, i: usize) -> bool {
        i < self.n && self.words[i / 64] >> (i % 64) & 1 == 1
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        assert!(i < self.n, "index {i} outside a mask of {} points", self.n);
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn remove(&mut self, i: usize) {
        if i < self.n {
            self.words[i / 64] &= !(1 << (i % 64));
        }
    }

    pub fn len(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n).filter(move |&i| self.contains(i))
    }

    pub fn union(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a | b)
    }

    pub fn intersection(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a & b)
    }

    pub fn difference(&self, other: &Self) -> Self {
        self.zip_words(other, |a, b| a & !b)
    }

    pub fn is_subset(&self, other: &Self) -> bool {
        assert_eq!(self.n, other.n);
        self.words.iter().zip(&other.words).all(|(a, b)| a & !b == 0)
    }

    fn zip_words(&self, other: &Self, op: impl Fn(u64, u64) -> u64) -> Self {
        assert_eq!(self.n, other.n, "masks over different domains");
        GridMask {
            n: self.n,
            words: self.words.iter().zip(&other.words).map(|(&a, &b)| op(a, b)).collect(),
        }
    }
}

/// One finite value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction(Vec<f64>);

impl GridFunction {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("grid function"));
        }
        Ok(GridFunction(values))
    }

    pub fn constant(n: usize, value: f64) -> Self {
        GridFunction(vec![value; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn mean(&self) -> f64 {
        self.0.iter().sum::<f64>() / self.0.len() as f64
    }

    /// Population standard deviation over the grid.
    pub fn std_dev(&self) -> f64 {
        let m = self.mean();
        sqrt(self.0.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / self.0.len() as f64)
    }

    /// Index of the largest value (lowest index on ties).
    pub fn argmax(&self) -> usize {
        argmax_over(&self.0, 0..self.0.len()).expect("grid function is nonempty")
    }
}

impl Index<usize> for GridFunction {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Index of the largest value among `candidates` (first one on ties).
pub(crate) fn argmax_over(values: &[f64], candidates: impl IntoIterator<Item = usize>) -> Option<usize> {
    let mut best: Option<usize> = None;
    for i in candidates {
        match best {
            Some(b) if values[i] <= values[b] => {}
            _ => best = Some(i),
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn paper_grid_has_625_points() {
        let g = make_uniform_grid(2, 25).unwrap();
        assert_eq!(g.len(), 625);
        assert_eq!(g.dim(), 2);
    }

    #[test]
    fn two_point_lattice() {
        let g = make_uniform_grid(1, 2).unwrap();
        assert_eq!(g.point(0), &[0.0]);
        assert_eq!(g.point(1), &[1.0]);
        assert_eq!(g.distance(0, 1), 1.0);
    }

    #[test]
    fn three_by_three_corner_distance() {
        let g = make_uniform_grid(2, 3).unwrap();
        assert_eq!(g.len(), 9);
        assert!((g.distance(0, 8) - core::f64::consts::SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_grids() {
        assert!(make_uniform_grid(0, 5).is_err());
        assert!(make_uniform_grid(2, 1).is_err());
        assert!(matches!(
            make_uniform_grid_with_budget(10, 10, 1000),
            Err(Error::GridTooLarge { .. })
        ));
        assert!(make_uniform_grid_with_budget(3, 10, 1000).is_ok());
        assert!(make_uniform_grid(64, 1 << 20).is_err());
    }

    #[test]
    fn lipschitz_examples() {
        let g = make_uniform_grid(1, 3).unwrap();
        let c = GridFunction::constant(3, 4.2);
        assert_eq!(lipschitz_constant(&g, &c).unwrap(), 0.0);
        let tent = GridFunction::new(vec![0.0, 1.0, 0.0]).unwrap();
        assert!((lipschitz_constant(&g, &tent).unwrap() - 2.0).abs() < 1e-12);

        let g2 = make_uniform_grid(2, 5).unwrap();
        let first = GridFunction::new(g2.points().map(|p| p[0]).collect()).unwrap();
        assert!((lipschitz_constant(&g2, &first).unwrap() - 1.0).abs() < 1e-12);
        assert!(lipschitz_constant(&g2, &c).is_err());
    }

    #[test]
    fn custom_metric_is_used() {
        fn manhattan(a: &[f64], b: &[f64]) -> f64 {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
        }
        let g = GridDomain::new(2, vec![0.0, 0.0, 1.0, 1.0], Metric::Custom(manhattan)).unwrap();
        assert_eq!(g.distance(0, 1), 2.0);
    }

    #[test]
    fn grid_function_rejects_nan() {
        assert!(GridFunction::new(vec![1.0, f64::NAN]).is_err());
    }

    proptest! {
        #[test]
        fn metric_axioms_hold_on_random_triples(ppa in 2usize..6, a in 0usize..1000, b in 0usize..1000, c in 0usize..1000) {
            let g = make_uniform_grid(2, ppa).unwrap();
            let n = g.len();
            let (a, b, c) = (a % n, b % n, c % n);
            prop_assert_eq!(g.distance(a, a), 0.0);
            prop_assert_eq!(g.distance(a, b), g.distance(b, a));
            prop_assert!(g.distance(a, c) <= g.distance(a, b) + g.distance(b, c) + 1e-12);
        }

        #[test]
        fn linear_functions_are_bounded_by_gradient_norm(ax in -3.0f64..3.0, ay in -3.0f64..3.0, ppa in 2usize..6) {
            let g = make_uniform_grid(2, ppa).unwrap();
            let f = GridFunction::new(g.points().map(|p| ax * p[0] + ay * p[1]).collect()).unwrap();
            let l = lipschitz_constant(&g, &f).unwrap();
            // grid directions only sample the gradient, so the norm is an
            // upper bound and the axis slopes a lower bound
            prop_assert!(l <= sqrt(ax * ax + ay * ay) + 1e-9);
            prop_assert!(l >= ax.abs().max(ay.abs()) - 1e-9);
        }

        #[test]
        fn one_dimensional_linear_slope_is_exact(a in -3.0f64..3.0, ppa in 2usize..20) {
            let g = make_uniform_grid(1, ppa).unwrap();
            let f = GridFunction::new(g.points().map(|p| a * p[0]).collect()).unwrap();
            prop_assert!((lipschitz_constant(&g, &f).unwrap() - a.abs()).abs() < 1e-9);
        }

        #[test]
        fn mask_algebra(a in proptest::collection::vec(any::<bool>(), 70), b in proptest::collection::vec(any::<bool>(), 70)) {
            let ma = GridMask::from_indices(70, (0..70).filter(|&i| a[i]));
            let mb = GridMask::from_indices(70, (0..70).filter(|&i| b[i]));
            prop_assert_eq!(ma.union(&mb).intersection(&ma), ma.clone());
            prop_assert_eq!(ma.union(&mb), mb.union(&ma));
            prop_assert_eq!(ma.intersection(&mb), mb.intersection(&ma));
            prop_assert_eq!(ma.union(&ma), ma.clone());
            prop_assert_eq!(ma.intersection(&ma), ma.clone());
            prop_assert_eq!(ma.len(), a.iter().filter(|&&x| x).count());
            prop_assert!(ma.intersection(&mb).is_subset(&ma));
        }
    }
}
