//! Tabulated matrix-valued functions: symmetric time tables for force
//! densities and lag tables for correlation functions.

use nalgebra::DMatrix;

use crate::error::{GleError, Result};
use crate::linalg::max_abs;
use crate::scalar::{from_usize, lit, Real};

/// Samples `f(k dt)`, `k = -K..=K`, of a matrix function on a grid symmetric
/// about zero. Linear interpolation inside, zero outside.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTable<T: Real> {
    dt: T,
    values: Vec<DMatrix<T>>,
}

impl<T: Real> SymmetricTable<T> {
    pub fn new(dt: T, values: Vec<DMatrix<T>>) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(GleError::Invariant("table spacing must be positive".into()));
        }
        if values.len() % 2 == 0 {
            return Err(GleError::Invariant(
                "symmetric table needs an odd number of samples".into(),
            ));
        }
        let shape = values[0].shape();
        if values.iter().any(|v| v.shape() != shape) {
            return Err(GleError::Dimension("table entries differ in shape".into()));
        }
        if values.iter().any(|v| v.iter().any(|x| !x.is_finite())) {
            return Err(GleError::Invariant(
                "table contains non-finite values".into(),
            ));
        }
        Ok(Self { dt, values })
    }

    pub fn from_fn(dt: T, half_len: usize, mut f: impl FnMut(T) -> DMatrix<T>) -> Result<Self> {
        let k = half_len as isize;
        Self::new(dt, (-k..=k).map(|i| f(dt * lit::<T>(i as f64))).collect())
    }

    pub fn zeros(dt: T, half_len: usize, rows: usize, cols: usize) -> Self {
        Self {
            dt,
            values: vec![DMatrix::zeros(rows, cols); 2 * half_len + 1],
        }
    }

    pub fn dt(&self) -> T {
        self.dt
    }

    /// `K`, the number of samples on each side of zero.
    pub fn half_len(&self) -> usize {
        self.values.len() / 2
    }

    /// `K dt`.
    pub fn half_width(&self) -> T {
        self.dt * from_usize::<T>(self.half_len())
    }

    pub fn shape(&self) -> (usize, usize) {
        self.values[0].shape()
    }

    /// Samples in increasing time order.
    pub fn values(&self) -> &[DMatrix<T>] {
        &self.values
    }

    pub fn time(&self, i: usize) -> T {
        self.dt * lit::<T>(i as f64 - self.half_len() as f64)
    }

    /// Sample at signed index `k`, `None` outside the grid.
    pub fn at_index(&self, k: isize) -> Option<&DMatrix<T>> {
        let i = k + self.half_len() as isize;
        if i < 0 {
            None
        } else {
            self.values.get(i as usize)
        }
    }

    pub fn eval(&self, t: T) -> DMatrix<T> {
        let x = (t / self.dt).as_f64() + self.half_len() as f64;
        let (rows, cols) = self.shape();
        if x < 0.0 || x > (self.values.len() - 1) as f64 {
            return DMatrix::zeros(rows, cols);
        }
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return self.values[i].clone();
        }
        let frac = lit::<T>(x - i as f64);
        &self.values[i] * (T::one() - frac) + &self.values[i + 1] * frac
    }

    /// Resamples onto spacing `dt` (same or smaller support), interpolating
    /// linearly. Returns a clone when the spacing already matches.
    pub fn resample(&self, dt: T) -> Self {
        if (dt - self.dt).abs() <= lit::<T>(1e-12) * self.dt {
            return self.clone();
        }
        let half = (self.half_width() / dt).as_f64().floor() as usize;
        let k = half as isize;
        Self {
            dt,
            values: (-k..=k)
                .map(|i| self.eval(dt * lit::<T>(i as f64)))
                .collect(),
        }
    }

    /// Trapezoidal `int |f|_F^2 dt`.
    pub fn l2_norm_sq(&self) -> T {
        let sq: Vec<T> = self.values.iter().map(|v| v.norm_squared()).collect();
        crate::resolvent::trapezoid(&sq, self.dt)
    }

    pub fn max_abs(&self) -> T {
        self.values
            .iter()
            .map(max_abs)
            .fold(T::zero(), |a, b| a.max(b))
    }

    /// `f(-t)^T` on the same grid.
    pub fn reflected_transpose(&self) -> Self {
        Self {
            dt: self.dt,
            values: self.values.iter().rev().map(|m| m.transpose()).collect(),
        }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self {
            dt: self.dt,
            values: self.values.iter().map(|m| m * c).collect(),
        }
    }

    /// Adds `g(t)` at every node.
    pub fn add_fn(&self, mut g: impl FnMut(T) -> DMatrix<T>) -> Self {
        let values = self
            .values
            .iter()
            .enumerate()
            .map(|(i, m)| m + g(self.time(i)))
            .collect();
        Self {
            dt: self.dt,
            values,
        }
    }
}

/// Whether a table came from data or from a formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableKind {
    Estimated,
    Theoretical,
}

/// A matrix-valued correlation function on a lag grid, with standard errors
/// when estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationTable<T: Real> {
    lags: Vec<T>,
    values: Vec<DMatrix<T>>,
    stderr: Option<Vec<DMatrix<T>>>,
    kind: TableKind,
}

impl<T: Real> CorrelationTable<T> {
    pub fn theoretical(lags: Vec<T>, values: Vec<DMatrix<T>>) -> Result<Self> {
        Self::build(lags, values, None, TableKind::Theoretical)
    }

    pub fn estimated(
        lags: Vec<T>,
        values: Vec<DMatrix<T>>,
        stderr: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        Self::build(lags, values, Some(stderr), TableKind::Estimated)
    }

    fn build(
        lags: Vec<T>,
        values: Vec<DMatrix<T>>,
        stderr: Option<Vec<DMatrix<T>>>,
        kind: TableKind,
    ) -> Result<Self> {
        if lags.len() != values.len() || stderr.as_ref().is_some_and(|s| s.len() != lags.len()) {
            return Err(GleError::Dimension("lag and value counts differ".into()));
        }
        if lags.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(GleError::Invariant(
                "lags must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            lags,
            values,
            stderr,
            kind,
        })
    }

    /// The whole of a symmetric table as a lag table.
    pub fn from_symmetric(table: &SymmetricTable<T>) -> Self {
        let lags = (0..table.values().len()).map(|i| table.time(i)).collect();
        Self {
            lags,
            values: table.values().to_vec(),
            stderr: None,
            kind: TableKind::Theoretical,
        }
    }

    pub fn lags(&self) -> &[T] {
        &self.lags
    }

    pub fn values(&self) -> &[DMatrix<T>] {
        &self.values
    }

    pub fn stderr(&self) -> Option<&[DMatrix<T>]> {
        self.stderr.as_deref()
    }

    pub fn kind(&self) -> TableKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.lags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lags.is_empty()
    }

    /// Linear interpolation in the lag; zero outside the tabulated range.
    pub fn at(&self, t: T) -> DMatrix<T> {
        let (rows, cols) = self.values[0].shape();
        let n = self.lags.len();
        if t < self.lags[0] || t > self.lags[n - 1] {
            return DMatrix::zeros(rows, cols);
        }
        let j = self.lags.partition_point(|&x| x <= t);
        if j == 0 {
            return self.values[0].clone();
        }
        if j == n {
            return self.values[n - 1].clone();
        }
        let (a, b) = (self.lags[j - 1], self.lags[j]);
        let w = (t - a) / (b - a);
        &self.values[j - 1] * (T::one() - w) + &self.values[j] * w
    }

    /// Spacing when the lags form a uniform grid containing zero.
    pub(crate) fn uniform_step(&self) -> Option<(T, isize)> {
        if self.lags.len() < 2 {
            return None;
        }
        let h = self.lags[1] - self.lags[0];
        let tol = lit::<T>(1e-9) * h;
        let first = (self.lags[0] / h).as_f64().round();
        let ok = self
            .lags
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - h * lit::<T>(first + i as f64)).abs() <= tol);
        ok.then_some((h, first as isize))
    }
}
