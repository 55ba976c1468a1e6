//! Memory kernels `gamma(t)`, the two-sided extension `gamma_Sigma` and their
//! Fourier and Laplace transforms.

use nalgebra::{Complex, ComplexField, DMatrix};

use crate::error::{GleError, Result};
use crate::fourier::{forward_samples, FrequencyGrid};
use crate::linalg::{
    hermitian_part, max_abs, min_eigenvalue, min_eigenvalue_real, to_complex, CMatrix,
};
use crate::scalar::{from_usize, lit, Real};

/// One exponential-polynomial term `A t^p exp(-lambda t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PronyTerm<T: Real> {
    pub amplitude: DMatrix<T>,
    pub rate: T,
    pub degree: u32,
}

impl<T: Real> PronyTerm<T> {
    pub fn new(amplitude: DMatrix<T>, rate: T, degree: u32) -> Self {
        Self {
            amplitude,
            rate,
            degree,
        }
    }

    /// Scalar term `a t^p exp(-lambda t)`.
    pub fn scalar(a: T, rate: T, degree: u32) -> Self {
        Self::new(DMatrix::from_element(1, 1, a), rate, degree)
    }

    fn profile(&self, t: T) -> T {
        let poly = if self.degree == 0 {
            T::one()
        } else {
            t.powi(self.degree as i32)
        };
        poly * (-self.rate * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum KernelForm<T: Real> {
    /// `gamma(t) = sum_k A_k t^{p_k} exp(-lambda_k t)`.
    Prony(Vec<PronyTerm<T>>),
    /// Samples `gamma(k dt)`, linearly interpolated and zero past the grid.
    Tabulated { dt: T, values: Vec<DMatrix<T>> },
}

/// Matrix-valued memory kernel on `t >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MemoryKernel<T: Real> {
    dim: usize,
    form: KernelForm<T>,
}

impl<T: Real> MemoryKernel<T> {
    pub fn prony(dim: usize, terms: Vec<PronyTerm<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(GleError::Invariant(
                "kernel dimension must be positive".into(),
            ));
        }
        for (i, term) in terms.iter().enumerate() {
            if term.amplitude.shape() != (dim, dim) {
                return Err(GleError::Dimension(format!(
                    "prony term {i}: amplitude is {:?}, expected ({dim}, {dim})",
                    term.amplitude.shape()
                )));
            }
            if !(term.rate > T::zero()) {
                return Err(GleError::Invariant(format!(
                    "prony term {i}: decay rate must be positive"
                )));
            }
        }
        Ok(Self {
            dim,
            form: KernelForm::Prony(terms),
        })
    }

    pub fn tabulated(dim: usize, dt: T, values: Vec<DMatrix<T>>) -> Result<Self> {
        if dim == 0 {
            return Err(GleError::Invariant(
                "kernel dimension must be positive".into(),
            ));
        }
        if !(dt > T::zero()) {
            return Err(GleError::Invariant(
                "tabulated kernel spacing must be positive".into(),
            ));
        }
        if values.is_empty() {
            return Err(GleError::Invariant(
                "tabulated kernel needs at least one value".into(),
            ));
        }
        if let Some(i) = values.iter().position(|v| v.shape() != (dim, dim)) {
            return Err(GleError::Dimension(format!(
                "tabulated value {i} is {:?}, expected ({dim}, {dim})",
                values[i].shape()
            )));
        }
        Ok(Self {
            dim,
            form: KernelForm::Tabulated { dt, values },
        })
    }

    /// The kernel that vanishes identically.
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            form: KernelForm::Prony(Vec::new()),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn form(&self) -> &KernelForm<T> {
        &self.form
    }

    pub fn is_zero(&self) -> bool {
        match &self.form {
            KernelForm::Prony(terms) => terms.iter().all(|t| max_abs(&t.amplitude) == T::zero()),
            KernelForm::Tabulated { values, .. } => values.iter().all(|v| max_abs(v) == T::zero()),
        }
    }

    /// `gamma(t)`; tabulated kernels interpolate linearly and reject `t`
    /// beyond the last node.
    pub fn eval(&self, t: T) -> Result<DMatrix<T>> {
        if !(t >= T::zero()) {
            return Err(GleError::Domain(format!(
                "kernel evaluated at negative time {t}"
            )));
        }
        if let KernelForm::Tabulated { dt, values } = &self.form {
            let end = *dt * from_usize::<T>(values.len() - 1);
            if t > end * (T::one() + lit(1e-12)) {
                return Err(GleError::Range(format!(
                    "t = {t} beyond tabulated range [0, {end}]"
                )));
            }
        }
        Ok(self.eval_or_zero(t))
    }

    /// `gamma(t)` for `t >= 0`, treating tabulated kernels as zero past their
    /// grid.
    pub(crate) fn eval_or_zero(&self, t: T) -> DMatrix<T> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        match &self.form {
            KernelForm::Prony(terms) => {
                for term in terms {
                    out += &term.amplitude * term.profile(t);
                }
            }
            KernelForm::Tabulated { dt, values } => {
                let x = (t / *dt).as_f64();
                if x < 0.0 {
                    return out;
                }
                let i = x.floor() as usize;
                if i + 1 < values.len() {
                    let frac = lit::<T>(x - i as f64);
                    out = &values[i] * (T::one() - frac) + &values[i + 1] * frac;
                } else if i + 1 == values.len() && (x - i as f64) < 1e-9 {
                    out = values[i].clone();
                }
            }
        }
        out
    }

    /// Right limit `gamma(0+)`.
    pub fn at_zero(&self) -> DMatrix<T> {
        self.eval_or_zero(T::zero())
    }

    /// Laplace transform `int_0^inf exp(-zeta t) gamma(t) dt` for `Re zeta >= 0`.
    pub fn laplace(&self, zeta: Complex<T>) -> Result<CMatrix<T>> {
        if zeta.re < T::zero() {
            return Err(GleError::Domain(format!(
                "Laplace transform needs Re(zeta) >= 0, got {}",
                zeta.re
            )));
        }
        Ok(self.laplace_unchecked(zeta))
    }

    fn laplace_unchecked(&self, zeta: Complex<T>) -> CMatrix<T> {
        let mut out = CMatrix::zeros(self.dim, self.dim);
        match &self.form {
            KernelForm::Prony(terms) => {
                for term in terms {
                    // A p! / (zeta + lambda)^(p+1)
                    let factorial: f64 = (1..=term.degree).map(|k| k as f64).product();
                    let base = zeta + Complex::new(term.rate, T::zero());
                    let denom = base.powu(term.degree + 1);
                    let coef = Complex::new(lit::<T>(factorial), T::zero()) / denom;
                    out += to_complex(&term.amplitude) * coef;
                }
            }
            KernelForm::Tabulated { dt, values } => {
                let last = values.len() - 1;
                for (k, v) in values.iter().enumerate() {
                    let w = if k == 0 || k == last {
                        lit::<T>(0.5)
                    } else {
                        T::one()
                    };
                    let t = *dt * from_usize::<T>(k);
                    let phase = ComplexField::exp(-zeta * Complex::new(t, T::zero()));
                    let coef = phase * Complex::new(w * *dt, T::zero());
                    out += to_complex(v) * coef;
                }
            }
        }
        out
    }

    /// `gamma_Sigma(t)`: `gamma(t) Sigma` for `t > 0`, `Sigma gamma(-t)^T` for
    /// `t < 0` and the average of both limits at `t = 0`.
    pub fn gamma_sigma(&self, cov: &CovarianceSpec<T>, t: T) -> DMatrix<T> {
        let sigma = cov.matrix();
        if t > T::zero() {
            self.eval_or_zero(t) * sigma
        } else if t < T::zero() {
            sigma * self.eval_or_zero(-t).transpose()
        } else {
            let g0 = self.at_zero();
            (&g0 * sigma + sigma * g0.transpose()) * lit::<T>(0.5)
        }
    }

    /// Fourier transform of `gamma_Sigma` at the given angular frequencies.
    ///
    /// With `L(omega)` the half-line transform `int_0^inf exp(-i omega t) gamma(t) dt`
    /// this is `L(omega) Sigma + Sigma L(omega)^*`, returned exactly Hermitian.
    pub fn gamma_sigma_fourier(
        &self,
        cov: &CovarianceSpec<T>,
        omegas: &[T],
    ) -> Result<Vec<CMatrix<T>>> {
        self.check_dim(cov)?;
        let sigma = to_complex(cov.matrix());
        Ok(omegas
            .iter()
            .map(|&w| {
                let half = self.laplace_unchecked(Complex::new(T::zero(), w));
                let m = &half * &sigma + &sigma * half.adjoint();
                hermitian_part(&m)
            })
            .collect())
    }

    /// Transform of the sampled `gamma_Sigma(k dt)` on the FFT bins of `grid`
    /// (trapezoidal quadrature on a zero-padded grid). These are the values
    /// whose discrete convolution structure matches the time grid exactly.
    pub fn gamma_sigma_sampled_fourier(
        &self,
        cov: &CovarianceSpec<T>,
        grid: &FrequencyGrid<T>,
    ) -> Result<Vec<CMatrix<T>>> {
        self.check_dim(cov)?;
        let k = grid.half_len() as isize;
        let dt = grid.dt();
        let samples: Vec<DMatrix<T>> = (-k..=k)
            .map(|i| self.gamma_sigma(cov, dt * lit::<T>(i as f64)))
            .collect();
        Ok(forward_samples(&samples, grid)?
            .iter()
            .map(hermitian_part)
            .collect())
    }

    /// Whether `gamma_Sigma` is of positive type on the grid, i.e. its
    /// transform is positive semidefinite up to
    /// `1e-10 (1 + |gamma_Sigma_hat(0)|)`.
    pub fn is_positive_type(
        &self,
        cov: &CovarianceSpec<T>,
        omegas: &[T],
    ) -> Result<PositiveTypeReport<T>> {
        if omegas.is_empty() {
            return Err(GleError::Invariant(
                "frequency grid must not be empty".into(),
            ));
        }
        let at_zero = self.gamma_sigma_fourier(cov, &[T::zero()])?;
        let scale = crate::linalg::spectral_norm(&at_zero[0]);
        let tol = lit::<T>(1e-10) * (T::one() + scale);
        let spectra = self.gamma_sigma_fourier(cov, omegas)?;
        let margin = spectra
            .iter()
            .map(min_eigenvalue)
            .fold(T::max_value().unwrap(), |a, b| a.min(b));
        Ok(PositiveTypeReport {
            positive: margin >= -tol,
            margin,
            tolerance: tol,
        })
    }

    /// Upper bound for `int_t^inf |gamma(s)| ds` with `|.|` the max-entry norm.
    pub fn tail_l1(&self, t: T) -> T {
        match &self.form {
            KernelForm::Prony(terms) => terms
                .iter()
                .map(|term| {
                    // int_t^inf s^p e^{-l s} ds = p! e^{-l t} sum_i (l t)^i / i! / l^(p+1)
                    let l = term.rate;
                    let x = l * t;
                    let mut sum = T::zero();
                    let mut pow = T::one();
                    let mut fact = T::one();
                    for i in 0..=term.degree {
                        if i > 0 {
                            pow *= x;
                            fact *= from_usize::<T>(i as usize);
                        }
                        sum += pow / fact;
                    }
                    let p_fact: f64 = (1..=term.degree).map(|k| k as f64).product();
                    max_abs(&term.amplitude) * lit::<T>(p_fact) * (-x).exp() * sum
                        / l.powi(term.degree as i32 + 1)
                })
                .fold(T::zero(), |a, b| a + b),
            KernelForm::Tabulated { dt, values } => {
                let start = (t / *dt).as_f64().ceil().max(0.0) as usize;
                values
                    .iter()
                    .skip(start)
                    .map(|v| max_abs(v) * *dt)
                    .fold(T::zero(), |a, b| a + b)
            }
        }
    }

    /// Ratio of the last tabulated value to `|gamma(0)|`; `None` for Prony kernels.
    pub fn tabulated_tail_ratio(&self) -> Option<T> {
        match &self.form {
            KernelForm::Prony(_) => None,
            KernelForm::Tabulated { values, .. } => {
                let head = max_abs(&values[0]);
                let tail = max_abs(values.last().unwrap());
                Some(if head > T::zero() { tail / head } else { tail })
            }
        }
    }

    fn check_dim(&self, cov: &CovarianceSpec<T>) -> Result<()> {
        if cov.dim() != self.dim {
            return Err(GleError::Dimension(format!(
                "kernel dimension {} but covariance dimension {}",
                self.dim,
                cov.dim()
            )));
        }
        Ok(())
    }
}

/// Result of [`MemoryKernel::is_positive_type`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositiveTypeReport<T: Real> {
    pub positive: bool,
    /// Smallest eigenvalue of the transform over the grid.
    pub margin: T,
    pub tolerance: T,
}

/// Symmetric positive definite covariance `Sigma`, optionally tagged with the
/// product `beta m` of the equipartition case `Sigma = I / (beta m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct CovarianceSpec<T: Real> {
    sigma: DMatrix<T>,
    beta_m: Option<T>,
}

impl<T: Real> CovarianceSpec<T> {
    pub fn new(sigma: DMatrix<T>) -> Result<Self> {
        if !sigma.is_square() || sigma.nrows() == 0 {
            return Err(GleError::Dimension(
                "covariance must be a nonempty square matrix".into(),
            ));
        }
        let scale = T::one() + max_abs(&sigma);
        let asym = max_abs(&(&sigma - sigma.transpose()));
        if asym > lit::<T>(1e-12) * scale {
            return Err(GleError::Invariant(format!(
                "covariance is not symmetric (asymmetry {asym})"
            )));
        }
        let min = min_eigenvalue_real(&sigma);
        if !(min > T::zero()) {
            return Err(GleError::Invariant(format!(
                "covariance is not positive definite (smallest eigenvalue {min})"
            )));
        }
        Ok(Self {
            sigma,
            beta_m: None,
        })
    }

    /// `Sigma = I / (beta m)`.
    pub fn equipartition(dim: usize, beta_m: T) -> Result<Self> {
        if !(beta_m > T::zero()) {
            return Err(GleError::Invariant("beta * m must be positive".into()));
        }
        let mut spec = Self::new(DMatrix::identity(dim, dim) / beta_m)?;
        spec.beta_m = Some(beta_m);
        Ok(spec)
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            sigma: DMatrix::identity(dim, dim),
            beta_m: None,
        }
    }

    pub fn with_beta_m(mut self, beta_m: T) -> Self {
        self.beta_m = Some(beta_m);
        self
    }

    pub fn matrix(&self) -> &DMatrix<T> {
        &self.sigma
    }

    pub fn beta_m(&self) -> Option<T> {
        self.beta_m
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }
}
