//! Inverse design: a force density whose stationary velocity autocorrelation
//! is a prescribed function, for the GLE without instantaneous drift.

use nalgebra::{Complex, DMatrix};

use crate::error::{GleError, Result};
use crate::fdt::{chi_of, symmetric_lags, ForceModel, Kappa};
use crate::fourier::{forward_samples, inverse_to_samples, FrequencyGrid};
use crate::kernel::MemoryKernel;
use crate::linalg::{
    hermitian_part, max_abs, max_abs_complex, max_imag, min_eigenvalue, psd_sqrt, real_part,
    CMatrix,
};
use crate::resolvent::{paley_wiener_check, solve_resolvent};
use crate::scalar::{lit, Real};
use crate::stats::theoretical_cov_stationary;
use crate::table::SymmetricTable;

/// Target autocorrelation `psi` tabulated on `[-T, T]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAutocorrelation<T: Real> {
    psi: SymmetricTable<T>,
    /// `omega^3 |psi_hat(omega)|` does not grow towards the edge of the
    /// frequency grid, a finite-data stand-in for three derivatives in L2.
    pub smoothness_ok: bool,
}

impl<T: Real> TargetAutocorrelation<T> {
    pub fn new(psi: SymmetricTable<T>) -> Result<Self> {
        let (r, c) = psi.shape();
        if r != c {
            return Err(GleError::Dimension("target must be square".into()));
        }
        let k = psi.half_len() as isize;
        let scale = psi.max_abs();
        for i in 0..=k {
            let a = psi.at_index(i).unwrap();
            let b = psi.at_index(-i).unwrap();
            if max_abs(&(a - b.transpose())) > lit::<T>(1e-9) * (T::one() + scale) {
                return Err(GleError::Target(format!(
                    "psi(-t) != psi(t)^T at t = {}",
                    psi.time((k + i) as usize)
                )));
            }
        }
        let grid =
            FrequencyGrid::from_time_grid(psi.dt(), lit::<T>(2.0) * psi.half_width() + psi.dt())?;
        let spectrum = forward_samples(psi.values(), &grid)?;
        let weighted: Vec<T> = grid
            .bin_omegas()
            .iter()
            .zip(&spectrum)
            .map(|(&w, m)| w.abs().powi(3) * max_abs_complex(m))
            .collect();
        let edge = grid.omega_max() * lit::<T>(0.5);
        let (mut inner, mut outer) = (T::zero(), T::zero());
        for (&w, &v) in grid.bin_omegas().iter().zip(&weighted) {
            if w.abs() <= edge {
                inner = inner.max(v);
            } else {
                outer = outer.max(v);
            }
        }
        Ok(Self {
            psi,
            smoothness_ok: outer <= inner,
        })
    }

    /// Mirror a one-sided table `psi(k dt)`, `k >= 0`, using `psi(-t) = psi(t)^T`.
    pub fn from_one_sided(dt: T, values: Vec<DMatrix<T>>) -> Result<Self> {
        if values.is_empty() {
            return Err(GleError::Target("empty target".into()));
        }
        let mut all: Vec<DMatrix<T>> = values.iter().skip(1).rev().map(|m| m.transpose()).collect();
        all.extend(values);
        Self::new(SymmetricTable::new(dt, all)?)
    }

    pub fn psi(&self) -> &SymmetricTable<T> {
        &self.psi
    }

    pub fn dim(&self) -> usize {
        self.psi.shape().0
    }
}

/// A designed force with its frequency-domain diagnostics.
#[derive(Debug, Clone)]
pub struct Design<T: Real> {
    /// `G = 0`, independent colored noise.
    pub model: ForceModel<T>,
    pub omegas: Vec<T>,
    pub phi_hat: Vec<CMatrix<T>>,
    /// Largest negative eigenvalue of `psi_hat` that was clipped to zero.
    pub clipped: T,
    /// `max |r0 phi_hat phi_hat^* r0^* - psi_hat| / max |psi_hat|` over the grid.
    pub identity_residual: T,
}

/// `phi_hat = (i omega I + L gamma(i omega)) psi_hat^{1/2}` on the bins of
/// `grid`, whose time step must equal the target spacing.
pub fn design_force_for_target<T: Real>(
    target: &TargetAutocorrelation<T>,
    kernel: &MemoryKernel<T>,
    grid: &FrequencyGrid<T>,
) -> Result<Design<T>> {
    let d = target.dim();
    if kernel.dim() != d {
        return Err(GleError::Dimension(
            "kernel and target dimensions differ".into(),
        ));
    }
    let dt = target.psi.dt();
    if (grid.dt() - dt).abs() > lit::<T>(1e-9) * dt {
        return Err(GleError::GridMismatch(format!(
            "grid step {} differs from target step {dt}",
            grid.dt()
        )));
    }
    if 2 * target.psi.half_len() + 1 > grid.len() {
        return Err(GleError::GridMismatch(
            "frequency grid shorter than the target table".into(),
        ));
    }
    let omegas = grid.bin_omegas();
    let zero = DMatrix::<T>::zeros(d, d);
    let pw = paley_wiener_check(&zero, kernel, &omegas, None)?;
    if !pw.verdict {
        return Err(GleError::PaleyWiener(
            "i omega + L gamma(i omega) is singular; r is not integrable".into(),
        ));
    }
    let psi_hat: Vec<CMatrix<T>> = forward_samples(target.psi.values(), grid)?
        .iter()
        .map(hermitian_part)
        .collect();
    let peak = psi_hat
        .iter()
        .map(max_abs_complex)
        .fold(T::zero(), |a, b| a.max(b));
    let min = psi_hat
        .iter()
        .map(min_eigenvalue)
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if min < -lit::<T>(1e-6) * peak {
        return Err(GleError::Target(format!(
            "psi_hat has eigenvalue {min}; psi is not of positive type"
        )));
    }
    if !target.smoothness_ok {
        return Err(GleError::Smoothness(
            "omega^3 psi_hat grows towards the grid edge".into(),
        ));
    }
    let mut phi_hat = Vec::with_capacity(omegas.len());
    let mut clipped = T::zero();
    let mut residual = T::zero();
    for (&w, ph) in omegas.iter().zip(&psi_hat) {
        let (root, lo) = psd_sqrt(ph);
        clipped = clipped.max(-lo);
        let mut a = kernel.laplace(Complex::new(T::zero(), w))?;
        for i in 0..d {
            a[(i, i)] += Complex::new(T::zero(), w);
        }
        let f = &a * root;
        let r0 = a
            .clone()
            .try_inverse()
            .ok_or_else(|| GleError::PaleyWiener(format!("singular at omega = {w}")))?;
        let back = &r0 * &f * f.adjoint() * r0.adjoint();
        let clipped_psi = {
            let (s, _) = psd_sqrt(ph);
            &s * &s
        };
        if peak > T::zero() {
            residual = residual.max(max_abs_complex(&(back - clipped_psi)) / peak);
        }
        phi_hat.push(f);
    }
    // the Nyquist bin has no conjugate partner; keep its real part so phi is real
    let nyquist = grid.len() / 2;
    phi_hat[nyquist] = phi_hat[nyquist].map(|z| Complex::new(z.re, T::zero()));
    let energy = |keep: &dyn Fn(T) -> bool| -> T {
        omegas
            .iter()
            .zip(&phi_hat)
            .filter(|(w, _)| keep(**w))
            .map(|(_, m)| m.norm_squared())
            .fold(T::zero(), |a, b| a + b)
    };
    let total = energy(&|_| true);
    let edge = grid.omega_max() * lit::<T>(0.75);
    let tail = energy(&|w: T| w.abs() > edge);
    if total > T::zero() && tail > lit::<T>(1e-2) * total {
        return Err(GleError::Smoothness(format!(
            "phi_hat keeps {} of its energy in the top quarter of the band",
            tail / total
        )));
    }
    let samples = inverse_to_samples(&phi_hat, grid)?;
    let sup = samples
        .iter()
        .map(|m| max_abs(&real_part(m)))
        .fold(T::zero(), |a, b| a.max(b));
    let imag = samples
        .iter()
        .map(max_imag)
        .fold(T::zero(), |a, b| a.max(b));
    if imag > lit::<T>(1e-6) * sup && imag > lit::<T>(1e-12) {
        return Err(GleError::ConjugateSymmetry {
            residue: imag.as_f64(),
            limit: (lit::<T>(1e-6) * sup).as_f64(),
        });
    }
    // drop the negligible ends of the period
    let centre = grid.half_len();
    let cut = lit::<T>(1e-12) * sup;
    let keep = (0..=centre)
        .rev()
        .find(|&k| {
            max_abs(&real_part(&samples[centre + k])) > cut
                || max_abs(&real_part(&samples[centre - k])) > cut
        })
        .unwrap_or(0);
    let phi = SymmetricTable::new(
        dt,
        samples[centre - keep..=centre + keep]
            .iter()
            .map(real_part)
            .collect(),
    )?;
    Ok(Design {
        model: ForceModel::new(DMatrix::zeros(d, d), phi, Kappa::Independent)?,
        omegas,
        phi_hat,
        clipped,
        identity_residual: residual,
    })
}

/// Outcome of [`verify_design`].
#[derive(Debug, Clone, PartialEq)]
pub struct DesignCheck<T: Real> {
    /// `max_t |C(t) - psi(t)|` over the lags.
    pub mismatch: T,
    pub tail_bound: T,
}

/// Stationary autocorrelation of the designed model (drift zero) compared
/// with the target at the nonnegative `lags`, using a resolvent on the
/// target spacing up to `horizon`.
pub fn verify_design<T: Real>(
    model: &ForceModel<T>,
    kernel: &MemoryKernel<T>,
    target: &TargetAutocorrelation<T>,
    lags: &[T],
    horizon: T,
) -> Result<DesignCheck<T>> {
    let d = target.dim();
    let dt = target.psi.dt();
    let res = solve_resolvent(&DMatrix::zeros(d, d), kernel, dt, horizon)?;
    let chi_lags = symmetric_lags(dt, lit::<T>(2.0) * model.phi().half_width() + dt);
    let chi = chi_of(model, &chi_lags)?;
    let c = theoretical_cov_stationary(&res, model.g(), &chi, lags, T::max_value().unwrap())?;
    let mismatch = lags
        .iter()
        .zip(&c.values)
        .map(|(&t, v)| max_abs(&(v - target.psi.eval(t))))
        .fold(T::zero(), |a, b| a.max(b));
    Ok(DesignCheck {
        mismatch,
        tail_bound: c.tail_bound,
    })
}
