//! Fluctuation-dissipation machinery: the white-noise amplitude `G`, the
//! spectral feasibility condition, spectral factorization of the colored
//! force density `phi` and residuals of the fluctuation-dissipation relation.

use nalgebra::DMatrix;

use crate::error::{GleError, Result};
use crate::fourier::{inverse_to_samples, matrix_cross_correlation, FrequencyGrid};
use crate::kernel::{CovarianceSpec, MemoryKernel};
use crate::linalg::{
    max_abs, max_imag, min_eigenvalue, min_eigenvalue_real, polar_orthogonal, psd_sqrt,
    psd_sqrt_real, real_part, spectral_norm, spectral_norm_real, to_complex, CMatrix,
};
use crate::scalar::{lit, Real};
use crate::table::{CorrelationTable, SymmetricTable};

/// How the colored and white parts of the force are driven.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kappa {
    /// `W~ = W`: both parts share one Brownian motion.
    Same,
    /// `W~` and `W` are independent.
    Independent,
}

/// Force `F = F0 + G dW/dt` with `F0(t) = int phi(t - s) dW~(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceModel<T: Real> {
    g: DMatrix<T>,
    phi: SymmetricTable<T>,
    kappa: Kappa,
}

impl<T: Real> ForceModel<T> {
    pub fn new(g: DMatrix<T>, phi: SymmetricTable<T>, kappa: Kappa) -> Result<Self> {
        let d = g.nrows();
        if g.ncols() != d || phi.shape() != (d, d) {
            return Err(GleError::Dimension(format!(
                "G is {}x{} but phi is {}x{}",
                g.nrows(),
                g.ncols(),
                phi.shape().0,
                phi.shape().1
            )));
        }
        if !phi.l2_norm_sq().is_finite() {
            return Err(GleError::Invariant(
                "phi is not square integrable on its grid".into(),
            ));
        }
        Ok(Self { g, phi, kappa })
    }

    /// Pure white noise `G dW/dt`.
    pub fn white(g: DMatrix<T>, dt: T) -> Result<Self> {
        let d = g.nrows();
        Self::new(g, SymmetricTable::zeros(dt, 0, d, d), Kappa::Independent)
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }

    pub fn g(&self) -> &DMatrix<T> {
        &self.g
    }

    pub fn phi(&self) -> &SymmetricTable<T> {
        &self.phi
    }

    pub fn kappa(&self) -> Kappa {
        self.kappa
    }

    pub fn with_phi(&self, phi: SymmetricTable<T>) -> Result<Self> {
        Self::new(self.g.clone(), phi, self.kappa)
    }

    pub fn with_g(&self, g: DMatrix<T>) -> Result<Self> {
        Self::new(g, self.phi.clone(), self.kappa)
    }

    pub fn with_kappa(&self, kappa: Kappa) -> Self {
        Self {
            kappa,
            ..self.clone()
        }
    }

    pub fn phi_is_zero(&self) -> bool {
        self.phi.max_abs() == T::zero()
    }
}

fn lyapunov_rhs<T: Real>(drift: &DMatrix<T>, cov: &CovarianceSpec<T>) -> Result<DMatrix<T>> {
    let sigma = cov.matrix();
    if drift.shape() != sigma.shape() {
        return Err(GleError::Dimension(
            "drift and covariance dimensions differ".into(),
        ));
    }
    Ok(drift * sigma + sigma * drift.transpose())
}

/// The symmetric PSD root `G = (D Sigma + Sigma D^T)^{1/2}`.
pub fn solve_lyapunov_g<T: Real>(
    drift: &DMatrix<T>,
    cov: &CovarianceSpec<T>,
) -> Result<DMatrix<T>> {
    let m = lyapunov_rhs(drift, cov)?;
    let min = min_eigenvalue_real(&m);
    let tol = lit::<T>(1e-10) * (T::one() + spectral_norm_real(&m));
    if min < -tol {
        return Err(GleError::Infeasible(format!(
            "D Sigma + Sigma D^T has eigenvalue {min}; no stationary solution with this Sigma"
        )));
    }
    Ok(psd_sqrt_real(&m).0)
}

/// Result of [`check_spectral_condition`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralCondition<T: Real> {
    pub feasible: bool,
    /// Smallest eigenvalue of `gamma_Sigma_hat(w) + D Sigma + Sigma D^T` over the grid.
    pub min_eig: T,
    /// Frequency at which the minimum occurs.
    pub argmin: T,
    pub tolerance: T,
}

/// Whether `gamma_Sigma_hat(w) + D Sigma + Sigma D^T` is positive semidefinite
/// at every grid frequency.
pub fn check_spectral_condition<T: Real>(
    drift: &DMatrix<T>,
    cov: &CovarianceSpec<T>,
    kernel: &MemoryKernel<T>,
    omegas: &[T],
) -> Result<SpectralCondition<T>> {
    if omegas.is_empty() {
        return Err(GleError::Invariant(
            "frequency grid must not be empty".into(),
        ));
    }
    let sym = to_complex(&lyapunov_rhs(drift, cov)?);
    let spectra = kernel.gamma_sigma_fourier(cov, omegas)?;
    let at_zero = &kernel.gamma_sigma_fourier(cov, &[T::zero()])?[0];
    let tol = lit::<T>(1e-10) * (T::one() + spectral_norm(at_zero) + spectral_norm(&sym));
    let mut min_eig = T::max_value().unwrap();
    let mut argmin = omegas[0];
    for (g, &w) in spectra.iter().zip(omegas) {
        let e = min_eigenvalue(&(g + &sym));
        if e < min_eig {
            min_eig = e;
            argmin = w;
        }
    }
    Ok(SpectralCondition {
        feasible: min_eig >= -tol,
        min_eig,
        argmin,
        tolerance: tol,
    })
}

/// Spectral factorization output with its diagnostics.
#[derive(Debug, Clone)]
pub struct Factorization<T: Real> {
    pub model: ForceModel<T>,
    /// Frequencies in FFT bin order.
    pub omegas: Vec<T>,
    /// `phi_hat` at `omegas`.
    pub phi_hat: Vec<CMatrix<T>>,
    /// Smallest value of `(4/pi) |gamma_Sigma_hat|^{1/2} - |phi_hat|` over the grid.
    pub vainikko_margin: T,
    /// Largest negative eigenvalue clipped from the discrete spectrum.
    pub clipped: T,
    /// Imaginary residue of the inverse transform, relative to `max |phi|`.
    pub imag_residue: T,
}

/// Constructs `phi_hat = (D Sigma + Sigma D^T + gamma_Sigma_hat)^{1/2} P^T - G`
/// with `G^T = P G0` the polar decomposition, and inverse-transforms it to a
/// real `phi` tabulated on `[-t_phi, t_phi]` with spacing `grid.dt()`.
///
/// The spectrum is that of the sampled `gamma_Sigma(k dt)`, so the discrete
/// convolution identity holds on the time grid up to truncation and clipping.
pub fn factorize_spectrum<T: Real>(
    drift: &DMatrix<T>,
    cov: &CovarianceSpec<T>,
    kernel: &MemoryKernel<T>,
    g: &DMatrix<T>,
    grid: &FrequencyGrid<T>,
    t_phi: T,
) -> Result<Factorization<T>> {
    let d = kernel.dim();
    if g.shape() != (d, d) {
        return Err(GleError::Dimension("G has the wrong shape".into()));
    }
    let dt = grid.dt();
    let half_phi = (t_phi / dt).as_f64().round() as usize;
    if half_phi > grid.half_len() {
        return Err(GleError::GridMismatch(format!(
            "t_phi = {t_phi} exceeds the time window of the frequency grid ({})",
            dt * lit::<T>(grid.half_len() as f64)
        )));
    }
    let sym = lyapunov_rhs(drift, cov)?;
    let gg = g * g.transpose();
    let scale = T::one() + spectral_norm_real(&sym);
    if max_abs(&(&gg - &sym)) > lit::<T>(1e-8) * scale {
        return Err(GleError::Infeasible(
            "G G^T differs from D Sigma + Sigma D^T".into(),
        ));
    }
    let omegas = grid.bin_omegas();
    let exact = kernel.gamma_sigma_fourier(cov, &omegas)?;
    let exact_zero = &kernel.gamma_sigma_fourier(cov, &[T::zero()])?[0];
    let tol = lit::<T>(1e-10) * (T::one() + spectral_norm(exact_zero) + spectral_norm_real(&sym));
    let min_exact = exact
        .iter()
        .map(|m| min_eigenvalue(&(m + to_complex(&sym))))
        .fold(T::max_value().unwrap(), |a, b| a.min(b));
    if min_exact < -tol {
        return Err(GleError::Infeasible(format!(
            "gamma_Sigma_hat + D Sigma + Sigma D^T has eigenvalue {min_exact}"
        )));
    }
    let sampled = kernel.gamma_sigma_sampled_fourier(cov, grid)?;
    let p_t = to_complex(&polar_orthogonal(&g.transpose()).transpose());
    let g_c = to_complex(g);
    let sym_c = to_complex(&sym);
    let four_over_pi = lit::<T>(4.0 / std::f64::consts::PI);
    let mut phi_hat = Vec::with_capacity(omegas.len());
    let mut clipped = T::zero();
    let mut vainikko_margin = T::max_value().unwrap();
    for gs in &sampled {
        let (root, min) = psd_sqrt(&(gs + &sym_c));
        clipped = clipped.max(-min);
        let ph = root * &p_t - &g_c;
        let bound = four_over_pi * spectral_norm(gs).sqrt();
        vainikko_margin = vainikko_margin.min(bound - spectral_norm(&ph));
        phi_hat.push(ph);
    }
    let root_scale = scale.sqrt() + spectral_norm(exact_zero).sqrt();
    if vainikko_margin < -lit::<T>(1e-8) * root_scale {
        return Err(GleError::Construction(format!(
            "Vainikko bound violated by {}",
            -vainikko_margin
        )));
    }
    let samples = inverse_to_samples(&phi_hat, grid)?;
    let centre = grid.half_len();
    let window = &samples[centre - half_phi..=centre + half_phi];
    let peak = window
        .iter()
        .map(|m| real_part(m))
        .map(|m| max_abs(&m))
        .fold(T::zero(), |a, b| a.max(b));
    let imag = window.iter().map(max_imag).fold(T::zero(), |a, b| a.max(b));
    let imag_residue = if peak > T::zero() { imag / peak } else { imag };
    if imag > lit::<T>(1e-6) * peak && imag > lit::<T>(1e-12) {
        return Err(GleError::ConjugateSymmetry {
            residue: imag.as_f64(),
            limit: (lit::<T>(1e-6) * peak).as_f64(),
        });
    }
    let phi = SymmetricTable::new(dt, window.iter().map(real_part).collect())?;
    Ok(Factorization {
        model: ForceModel::new(g.clone(), phi, Kappa::Same)?,
        omegas,
        phi_hat,
        vainikko_margin,
        clipped,
        imag_residue,
    })
}

/// [`factorize_spectrum`] returning only the force model (`kappa = same`).
pub fn spectral_factorize_phi<T: Real>(
    drift: &DMatrix<T>,
    cov: &CovarianceSpec<T>,
    kernel: &MemoryKernel<T>,
    g: &DMatrix<T>,
    grid: &FrequencyGrid<T>,
    t_phi: T,
) -> Result<ForceModel<T>> {
    factorize_spectrum(drift, cov, kernel, g, grid, t_phi).map(|f| f.model)
}

/// `chi` on the native lag grid of `phi` (twice its support), as a
/// symmetric table: `phi * phi_rev^T` plus `phi G^T + G phi(-t)^T` when the
/// two Brownian motions coincide.
pub fn chi_table<T: Real>(model: &ForceModel<T>) -> SymmetricTable<T> {
    let phi = model.phi();
    let dt = phi.dt();
    let mut values: Vec<DMatrix<T>> = matrix_cross_correlation(phi.values(), phi.values())
        .into_iter()
        .map(|m| m * dt)
        .collect();
    if model.kappa() == Kappa::Same {
        let k = phi.half_len() as isize;
        let centre = 2 * k;
        let gt = model.g().transpose();
        for j in -k..=k {
            let p = phi.at_index(j).unwrap();
            let m = phi.at_index(-j).unwrap();
            let slot = &mut values[(centre + j) as usize];
            *slot += p * &gt + model.g() * m.transpose();
        }
    }
    SymmetricTable::new(dt, values).expect("odd length by construction")
}

/// `chi` evaluated at the requested lags.
pub fn chi_of<T: Real>(model: &ForceModel<T>, lags: &[T]) -> Result<CorrelationTable<T>> {
    let table = chi_table(model);
    let values = lags.iter().map(|&t| table.eval(t)).collect();
    CorrelationTable::theoretical(lags.to_vec(), values)
}

/// `max_t |chi(t) - gamma_Sigma(t)|` over the lags (max-entry norm).
pub fn fdr_residual<T: Real>(
    model: &ForceModel<T>,
    kernel: &MemoryKernel<T>,
    cov: &CovarianceSpec<T>,
    lags: &[T],
) -> Result<T> {
    if model.dim() != kernel.dim() || cov.dim() != kernel.dim() {
        return Err(GleError::Dimension(
            "model, kernel and covariance dimensions differ".into(),
        ));
    }
    let table = chi_table(model);
    Ok(lags
        .iter()
        .map(|&t| max_abs(&(table.eval(t) - kernel.gamma_sigma(cov, t))))
        .fold(T::zero(), |a, b| a.max(b)))
}

/// Lags `k dt` for `|k dt| <= half_width`.
pub fn symmetric_lags<T: Real>(dt: T, half_width: T) -> Vec<T> {
    let k = (half_width / dt).as_f64().round() as isize;
    (-k..=k).map(|i| dt * lit::<T>(i as f64)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PronyTerm;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn example_one() -> MemoryKernel<f64> {
        MemoryKernel::prony(1, vec![PronyTerm::scalar(4.0, 1.0, 1)]).unwrap()
    }

    fn example_two() -> MemoryKernel<f64> {
        MemoryKernel::prony(
            2,
            vec![
                PronyTerm::new(dmatrix![1.0, 0.0; 0.0, 0.0], 1.0, 0),
                PronyTerm::new(dmatrix![0.0, 0.0; 0.0, 1.0], 2.0, 0),
            ],
        )
        .unwrap()
    }

    fn closed_form_phi(dt: f64, t_phi: f64) -> SymmetricTable<f64> {
        SymmetricTable::from_fn(dt, (t_phi / dt).round() as usize, |t| {
            dmatrix![-2.0 * (-t.abs()).exp()]
        })
        .unwrap()
    }

    #[test]
    fn lyapunov_roots() {
        let g = solve_lyapunov_g(&dmatrix![0.5], &CovarianceSpec::identity(1)).unwrap();
        assert_relative_eq!(g[(0, 0)], 1.0, epsilon = 1e-14);

        let skew = dmatrix![0.0, 1.0; -1.0, 0.0];
        let g = solve_lyapunov_g(&skew, &CovarianceSpec::identity(2)).unwrap();
        assert!(max_abs(&g) < 1e-12);

        let fric = 0.7;
        let cov = CovarianceSpec::equipartition(3, 2.0).unwrap();
        let g = solve_lyapunov_g(&(DMatrix::identity(3, 3) * fric), &cov).unwrap();
        assert_relative_eq!(
            &g * g.transpose(),
            DMatrix::identity(3, 3) * (2.0 * fric / 2.0),
            epsilon = 1e-12
        );

        assert!(matches!(
            solve_lyapunov_g(&dmatrix![-1.0], &CovarianceSpec::identity(1)),
            Err(GleError::Infeasible(_))
        ));
    }

    #[test]
    fn spectral_condition_examples() {
        let omegas: Vec<f64> = (-2000..=2000).map(|i| i as f64 * 0.005).collect();
        let one = CovarianceSpec::identity(1);
        let c = check_spectral_condition(&dmatrix![0.5], &one, &example_one(), &omegas).unwrap();
        assert!(c.feasible);
        assert!(c.min_eig.abs() < 1e-4);
        assert_relative_eq!(c.argmin.abs(), 3f64.sqrt(), epsilon = 0.01);

        let c = check_spectral_condition(&dmatrix![0.0], &one, &example_one(), &omegas).unwrap();
        assert!(!c.feasible);
        assert!(c.min_eig <= -0.96 + 1e-9);

        let cov = CovarianceSpec::new(dmatrix![1.0, 0.05; 0.05, 1.0]).unwrap();
        let c =
            check_spectral_condition(&DMatrix::zeros(2, 2), &cov, &example_two(), &omegas).unwrap();
        assert!(c.feasible);
    }

    #[test]
    fn closed_form_phi_satisfies_the_relation() {
        let model =
            ForceModel::new(dmatrix![1.0], closed_form_phi(0.01, 40.0), Kappa::Same).unwrap();
        let lags = symmetric_lags(0.01, 40.0);
        let r = fdr_residual(&model, &example_one(), &CovarianceSpec::identity(1), &lags).unwrap();
        assert!(r <= 1e-3, "{r}");
    }

    #[test]
    fn chi_closed_forms() {
        let model = ForceModel::new(
            dmatrix![1.0],
            closed_form_phi(0.01, 30.0),
            Kappa::Independent,
        )
        .unwrap();
        let chi = chi_of(&model, &[-2.0, 0.0, 0.7, 3.0]).unwrap();
        for (t, v) in chi.lags().iter().zip(chi.values()) {
            let exact = 4.0 * (1.0 + t.abs()) * (-t.abs()).exp();
            assert_relative_eq!(v[(0, 0)], exact, epsilon = 1e-3);
        }
        let same = chi_of(&model.with_kappa(Kappa::Same), &[-2.0, 0.0, 0.7]).unwrap();
        for (t, v) in same.lags().iter().zip(same.values()) {
            assert_relative_eq!(v[(0, 0)], 4.0 * t.abs() * (-t.abs()).exp(), epsilon = 1e-3);
        }
        let zero = ForceModel::new(
            dmatrix![1.0],
            SymmetricTable::zeros(0.01, 10, 1, 1),
            Kappa::Same,
        )
        .unwrap();
        assert!(chi_of(&zero, &[0.0, 0.05])
            .unwrap()
            .values()
            .iter()
            .all(|m| m[(0, 0)] == 0.0));
    }

    #[test]
    fn chi_is_hermitian_in_the_lag() {
        let phi = SymmetricTable::from_fn(0.05, 60, |t: f64| {
            dmatrix![(-t * t).exp(), 0.3 * (-(t - 0.5).powi(2)).exp(); -0.2 * (-t.abs()).exp(), (-2.0 * t.abs()).exp()]
        })
        .unwrap();
        let model = ForceModel::new(dmatrix![1.0, 0.2; 0.0, 0.5], phi, Kappa::Same).unwrap();
        let chi = chi_table(&model);
        let k = chi.half_len() as isize;
        for j in 0..=k {
            let a = chi.at_index(j).unwrap();
            let b = chi.at_index(-j).unwrap();
            assert!(max_abs(&(a - b.transpose())) < 1e-12);
        }
    }

    #[test]
    fn canonical_factorization_of_example_one() {
        let dt = 0.01;
        let grid = FrequencyGrid::from_time_grid(dt, 80.0).unwrap();
        let g = solve_lyapunov_g(&dmatrix![0.5], &CovarianceSpec::identity(1)).unwrap();
        let f = factorize_spectrum(
            &dmatrix![0.5],
            &CovarianceSpec::identity(1),
            &example_one(),
            &g,
            &grid,
            40.0,
        )
        .unwrap();
        assert!(f.vainikko_margin >= 0.0);
        // continuous closed form at low frequencies
        for (w, ph) in f.omegas.iter().zip(&f.phi_hat) {
            // aliasing shifts the sampled spectrum by O(dt^2), which the
            // square root amplifies only next to the zero at sqrt(3)
            if w.abs() < 20.0 && (w.abs() - 3f64.sqrt()).abs() > 0.05 {
                let exact = (w * w - 3.0).abs() / (w * w + 1.0) - 1.0;
                assert!((ph[(0, 0)].re - exact).abs() < 2e-3, "{w}");
            }
        }
        let lags = symmetric_lags(dt, 40.0);
        let r = fdr_residual(
            &f.model,
            &example_one(),
            &CovarianceSpec::identity(1),
            &lags,
        )
        .unwrap();
        assert!(r <= 1e-3, "{r}");
        // phi(-t) = phi(t)^T on the canonical branch
        let phi = f.model.phi();
        let k = phi.half_len() as isize;
        for j in 0..=k {
            assert!(
                (phi.at_index(j).unwrap()[(0, 0)] - phi.at_index(-j).unwrap()[(0, 0)]).abs()
                    < 1e-10
            );
        }
    }

    #[test]
    fn zero_kernel_gives_zero_phi() {
        let d = dmatrix![0.4, 0.1; 0.0, 0.3];
        let cov = CovarianceSpec::identity(2);
        let g = solve_lyapunov_g(&d, &cov).unwrap();
        let grid = FrequencyGrid::from_time_grid(0.05, 10.0).unwrap();
        let f = factorize_spectrum(&d, &cov, &MemoryKernel::zero(2), &g, &grid, 5.0).unwrap();
        assert!(f.model.phi().max_abs() < 1e-12);
    }

    #[test]
    fn diagonal_example_factorization() {
        let cov = CovarianceSpec::identity(2);
        let zero = DMatrix::zeros(2, 2);
        let grid = FrequencyGrid::from_time_grid(0.01, 60.0).unwrap();
        let f = factorize_spectrum(&zero, &cov, &example_two(), &zero, &grid, 30.0).unwrap();
        let sampled = example_two()
            .gamma_sigma_sampled_fourier(&cov, &grid)
            .unwrap();
        for ((w, ph), gs) in f.omegas.iter().zip(&f.phi_hat).zip(&sampled) {
            // factorization identity on every bin
            let lhs = ph * ph.adjoint();
            assert!((lhs - gs)
                .iter()
                .all(|z| z.norm() <= 1e-10 * (1.0 + gs.norm())));
            if w.abs() < 10.0 {
                assert!((ph[(0, 0)].re - (2.0 / (1.0 + w * w)).sqrt()).abs() < 1e-3);
                assert!((ph[(1, 1)].re - (4.0 / (4.0 + w * w)).sqrt()).abs() < 1e-3);
                assert!(ph[(0, 1)].norm() < 1e-12);
            }
        }
        let lags = symmetric_lags(0.01, 10.0);
        assert!(fdr_residual(&f.model, &example_two(), &cov, &lags).unwrap() < 1e-3);
    }

    #[test]
    fn factorization_rejects_infeasible_input() {
        let grid = FrequencyGrid::from_time_grid(0.05, 20.0).unwrap();
        let res = factorize_spectrum(
            &dmatrix![0.0],
            &CovarianceSpec::identity(1),
            &example_one(),
            &dmatrix![0.0],
            &grid,
            10.0,
        );
        assert!(matches!(res, Err(GleError::Infeasible(_))));
    }

    #[test]
    fn perturbed_phi_breaks_the_relation() {
        let model =
            ForceModel::new(dmatrix![1.0], closed_form_phi(0.01, 20.0), Kappa::Same).unwrap();
        let bumped = model
            .with_phi(model.phi().add_fn(|t| dmatrix![0.3 * (-t * t).exp()]))
            .unwrap();
        let lags = symmetric_lags(0.01, 20.0);
        let r = fdr_residual(&bumped, &example_one(), &CovarianceSpec::identity(1), &lags).unwrap();
        assert!(r > 0.1, "{r}");
    }
}
