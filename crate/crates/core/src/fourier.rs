//! Discrete Fourier machinery: the paired time/frequency grids used by the
//! spectral factorization and FFT-based convolutions of matrix-valued series.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rustfft::{Fft, FftPlanner};

use crate::error::{GleError, Result};
use crate::linalg::CMatrix;
use crate::scalar::{from_usize, lit, Real};

/// Uniform symmetric angular-frequency grid with a power-of-two number of
/// nodes and its dual time grid.
///
/// The nodes are `omega_j = j * d_omega` for `j = -n/2 .. n/2 - 1` with
/// `d_omega = 2 omega_max / n`; the dual time step is `dt = pi / omega_max`
/// so that the grid spans one period `n dt` in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid<T: Real> {
    n: usize,
    omega_max: T,
}

impl<T: Real> FrequencyGrid<T> {
    pub fn new(n: usize, omega_max: T) -> Result<Self> {
        if n < 4 || !n.is_power_of_two() {
            return Err(GleError::Invariant(format!(
                "frequency grid size must be a power of two >= 4, got {n}"
            )));
        }
        if !(omega_max > T::zero()) {
            return Err(GleError::Invariant("omega_max must be positive".into()));
        }
        Ok(Self { n, omega_max })
    }

    /// Grid whose dual time step is `dt` and whose time window covers at
    /// least `[-t_half, t_half]`.
    pub fn from_time_grid(dt: T, t_half: T) -> Result<Self> {
        if !(dt > T::zero()) || !(t_half > T::zero()) {
            return Err(GleError::Invariant("dt and t_half must be positive".into()));
        }
        let needed = (lit::<T>(2.0) * t_half / dt).as_f64().ceil() as usize + 2;
        let n = needed.next_power_of_two().max(4);
        Self::new(n, T::pi() / dt)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn omega_max(&self) -> T {
        self.omega_max
    }

    pub fn d_omega(&self) -> T {
        lit::<T>(2.0) * self.omega_max / from_usize(self.n)
    }

    /// Dual time step `pi / omega_max`.
    pub fn dt(&self) -> T {
        T::pi() / self.omega_max
    }

    /// Number of time samples on each side of zero, `n/2 - 1`.
    pub fn half_len(&self) -> usize {
        self.n / 2 - 1
    }

    /// Frequency of FFT bin `j`.
    pub fn omega_at_bin(&self, j: usize) -> T {
        let signed = if j < self.n / 2 {
            j as f64
        } else {
            j as f64 - self.n as f64
        };
        lit::<T>(signed) * self.d_omega()
    }

    /// All frequencies in FFT bin order.
    pub fn bin_omegas(&self) -> Vec<T> {
        (0..self.n).map(|j| self.omega_at_bin(j)).collect()
    }

    /// All frequencies in increasing order.
    pub fn sorted_omegas(&self) -> Vec<T> {
        let half = (self.n / 2) as i64;
        (-half..half)
            .map(|j| lit::<T>(j as f64) * self.d_omega())
            .collect()
    }
}

pub(crate) fn planner_fft<T: Real>(n: usize, inverse: bool) -> Arc<dyn Fft<T>> {
    let mut planner = FftPlanner::<T>::new();
    if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    }
}

/// Discrete-time Fourier transform of samples `x_k = x(k dt)`, `k = -K..K`
/// (given in increasing order), evaluated at the bins of `grid`:
/// `X(omega_j) = dt * sum_k x_k exp(-i omega_j t_k)`.
///
/// This is the trapezoidal quadrature of the continuous transform on a
/// zero-padded grid. The result is returned in FFT bin order.
pub fn forward_samples<T: Real>(
    samples: &[DMatrix<T>],
    grid: &FrequencyGrid<T>,
) -> Result<Vec<CMatrix<T>>> {
    let n = grid.len();
    if samples.len() % 2 == 0 || samples.len() > n {
        return Err(GleError::Dimension(format!(
            "expected an odd number of at most {n} samples, got {}",
            samples.len()
        )));
    }
    let half = samples.len() / 2;
    let (rows, cols) = samples[0].shape();
    let fft = planner_fft::<T>(n, false);
    let dt = grid.dt();
    let mut out = vec![CMatrix::<T>::zeros(rows, cols); n];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for a in 0..rows {
        for b in 0..cols {
            buf.iter_mut()
                .for_each(|z| *z = Complex::new(T::zero(), T::zero()));
            for (i, m) in samples.iter().enumerate() {
                let k = i as isize - half as isize;
                let idx = k.rem_euclid(n as isize) as usize;
                buf[idx] = Complex::new(m[(a, b)] * dt, T::zero());
            }
            fft.process(&mut buf);
            for (j, z) in buf.iter().enumerate() {
                out[j][(a, b)] = *z;
            }
        }
    }
    Ok(out)
}

/// Inverse of [`forward_samples`]: given spectra in FFT bin order returns
/// `x(t_k) = (1 / (n dt)) sum_j X_j exp(i omega_j t_k)` for `k = -K..K`
/// in increasing order, with `K = grid.half_len()`.
pub fn inverse_to_samples<T: Real>(
    spectra: &[CMatrix<T>],
    grid: &FrequencyGrid<T>,
) -> Result<Vec<CMatrix<T>>> {
    let n = grid.len();
    if spectra.len() != n {
        return Err(GleError::Dimension(format!(
            "expected {n} spectral values, got {}",
            spectra.len()
        )));
    }
    let half = grid.half_len();
    let (rows, cols) = spectra[0].shape();
    let fft = planner_fft::<T>(n, true);
    let scale = T::one() / (from_usize::<T>(n) * grid.dt());
    let mut out = vec![CMatrix::<T>::zeros(rows, cols); 2 * half + 1];
    let mut buf = vec![Complex::new(T::zero(), T::zero()); n];
    for a in 0..rows {
        for b in 0..cols {
            for (j, m) in spectra.iter().enumerate() {
                buf[j] = m[(a, b)];
            }
            fft.process(&mut buf);
            for (i, slot) in out.iter_mut().enumerate() {
                let k = i as isize - half as isize;
                let idx = k.rem_euclid(n as isize) as usize;
                slot[(a, b)] = buf[idx] * scale;
            }
        }
    }
    Ok(out)
}

/// Linear cross-correlation of matrix series:
/// `c[k] = sum_j a[j + k] * b[j]^T` for `k = -(nb - 1) ..= na - 1`.
///
/// Returned vector has length `na + nb - 1`; entry `i` holds lag
/// `k = i - (nb - 1)`. Terms with `j + k` outside `a` are zero.
pub fn matrix_cross_correlation<T: Real>(a: &[DMatrix<T>], b: &[DMatrix<T>]) -> Vec<DMatrix<T>> {
    let (na, nb) = (a.len(), b.len());
    if na == 0 || nb == 0 {
        return Vec::new();
    }
    let d_out_rows = a[0].nrows();
    let inner = a[0].ncols();
    let d_out_cols = b[0].nrows();
    let len = na + nb - 1;
    if (na as f64) * (nb as f64) <= 65_536.0 {
        let mut out = vec![DMatrix::<T>::zeros(d_out_rows, d_out_cols); len];
        for (i, slot) in out.iter_mut().enumerate() {
            let k = i as isize - (nb as isize - 1);
            for (j, bj) in b.iter().enumerate() {
                let idx = j as isize + k;
                if idx >= 0 && (idx as usize) < na {
                    slot.gemm(T::one(), &a[idx as usize], &bj.transpose(), T::one());
                }
            }
        }
        return out;
    }
    let n = len.next_power_of_two();
    let fwd = planner_fft::<T>(n, false);
    let inv = planner_fft::<T>(n, true);
    let zero = Complex::new(T::zero(), T::zero());
    let spectrum = |series: &[DMatrix<T>], r: usize, c: usize, reversed: bool| {
        let mut buf = vec![zero; n];
        let m = series.len();
        for (i, mat) in series.iter().enumerate() {
            let idx = if reversed { m - 1 - i } else { i };
            buf[idx] = Complex::new(mat[(r, c)], T::zero());
        }
        fwd.process(&mut buf);
        buf
    };
    let a_hat: Vec<Vec<Vec<Complex<T>>>> = (0..d_out_rows)
        .map(|r| (0..inner).map(|c| spectrum(a, r, c, false)).collect())
        .collect();
    let b_hat: Vec<Vec<Vec<Complex<T>>>> = (0..d_out_cols)
        .map(|r| (0..inner).map(|c| spectrum(b, r, c, true)).collect())
        .collect();
    let scale = T::one() / from_usize::<T>(n);
    let mut out = vec![DMatrix::<T>::zeros(d_out_rows, d_out_cols); len];
    let mut acc = vec![zero; n];
    for r in 0..d_out_rows {
        for s in 0..d_out_cols {
            acc.iter_mut().for_each(|z| *z = zero);
            for c in 0..inner {
                for ((z, x), y) in acc.iter_mut().zip(&a_hat[r][c]).zip(&b_hat[s][c]) {
                    *z += *x * *y;
                }
            }
            inv.process(&mut acc);
            for (i, slot) in out.iter_mut().enumerate() {
                slot[(r, s)] = acc[i].re * scale;
            }
        }
    }
    out
}
