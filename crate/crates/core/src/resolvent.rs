//! The differential resolvent `r' = -D r - gamma * r`, `r(0) = I`, its
//! transposed identity and integrability diagnostics.

use nalgebra::{Complex, DMatrix};

use crate::error::{GleError, Result};
use crate::fourier::matrix_cross_correlation;
use crate::kernel::{CovarianceSpec, MemoryKernel};
use crate::linalg::{
    max_abs, min_eigenvalue, min_singular_value, spectral_norm, to_complex, CMatrix,
};
use crate::scalar::{from_usize, lit, steps_of, Real};
use crate::volterra::VolterraStepper;

/// Grid solution `r(n dt)`, `n = 0..=N`, together with `r'(n dt)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Resolvent<T: Real> {
    dt: T,
    drift: DMatrix<T>,
    values: Vec<DMatrix<T>>,
    derivs: Vec<DMatrix<T>>,
}

impl<T: Real> Resolvent<T> {
    pub fn dt(&self) -> T {
        self.dt
    }

    pub fn horizon(&self) -> T {
        self.dt * from_usize::<T>(self.values.len() - 1)
    }

    /// The instantaneous drift `D` the resolvent was solved for.
    pub fn drift(&self) -> &DMatrix<T> {
        &self.drift
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn values(&self) -> &[DMatrix<T>] {
        &self.values
    }

    pub fn derivs(&self) -> &[DMatrix<T>] {
        &self.derivs
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn time(&self, n: usize) -> T {
        self.dt * from_usize::<T>(n)
    }

    /// `r(t)` by linear interpolation; zero beyond the horizon.
    pub fn at(&self, t: T) -> Result<DMatrix<T>> {
        if t < T::zero() {
            return Err(GleError::Domain(format!(
                "resolvent evaluated at negative time {t}"
            )));
        }
        let x = (t / self.dt).as_f64();
        let i = x.floor() as usize;
        if i + 1 < self.values.len() {
            let frac = lit::<T>(x - i as f64);
            Ok(&self.values[i] * (T::one() - frac) + &self.values[i + 1] * frac)
        } else if i + 1 == self.values.len() {
            Ok(self.values[i].clone())
        } else {
            Ok(DMatrix::zeros(self.dim(), self.dim()))
        }
    }

    /// Trapezoidal `int_t^T |r(s)| ds` with the max-entry norm.
    pub fn tail_l1(&self, t: T) -> T {
        let start = (t / self.dt).as_f64().ceil().max(0.0) as usize;
        if start >= self.values.len() {
            return T::zero();
        }
        let norms: Vec<T> = self.values[start..].iter().map(max_abs).collect();
        trapezoid(&norms, self.dt)
    }

    pub fn total_l1(&self) -> T {
        self.tail_l1(T::zero())
    }

    /// Extrapolated bound for `int_T^inf |r|` beyond the horizon, assuming the
    /// envelope keeps decaying exponentially at the rate observed over the last
    /// half of the grid. `None` when no decay is observed.
    pub fn extrapolated_tail(&self) -> Option<T> {
        let n = self.values.len();
        if n < 8 {
            return None;
        }
        let sup = |a: usize, b: usize| {
            self.values[a..b]
                .iter()
                .map(max_abs)
                .fold(T::zero(), |x, y| x.max(y))
        };
        let (q2, q3) = (n / 2, 3 * n / 4);
        let early = sup(q2, q3);
        let late = sup(q3, n);
        if late == T::zero() {
            return Some(T::zero());
        }
        if !(late < early) {
            return None;
        }
        // the window sup sits near the window start, so carry it one more
        // window forward to the horizon
        let span = self.dt * from_usize::<T>(q3 - q2);
        let rate = (early / late).ln() / span;
        Some(late * late / early / rate)
    }
}

pub(crate) fn trapezoid<T: Real>(values: &[T], dt: T) -> T {
    match values.len() {
        0 | 1 => T::zero(),
        n => {
            let inner = values[1..n - 1].iter().fold(T::zero(), |a, &b| a + b);
            (inner + (values[0] + values[n - 1]) * lit::<T>(0.5)) * dt
        }
    }
}

/// Solves `r'(t) = -D r(t) - int_0^t gamma(t - s) r(s) ds`, `r(0) = I` on the
/// grid `n dt`, `n = 0..=horizon/dt`, with the implicit trapezoidal scheme.
pub fn solve_resolvent<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    dt: T,
    horizon: T,
) -> Result<Resolvent<T>> {
    if !(dt > T::zero()) {
        return Err(GleError::Invariant("dt must be positive".into()));
    }
    if !(horizon >= dt) {
        return Err(GleError::Invariant("horizon must be at least dt".into()));
    }
    let steps = steps_of(horizon, dt).unwrap_or_else(|| (horizon / dt).as_f64().round() as usize);
    let d = kernel.dim();
    let mut stepper = VolterraStepper::new(drift, kernel, dt, false)?;
    let mut r = DMatrix::<T>::identity(d, d);
    let mut f = stepper.start(&r);
    let mut values = Vec::with_capacity(steps + 1);
    let mut derivs = Vec::with_capacity(steps + 1);
    values.push(r.clone());
    derivs.push(f.clone());
    for n in 0..steps {
        stepper.advance(&mut r, &mut f, None);
        if r.iter().any(|x| !x.is_finite()) {
            return Err(GleError::SingularStep { step: n + 1 });
        }
        values.push(r.clone());
        derivs.push(f.clone());
    }
    Ok(Resolvent {
        dt,
        drift: drift.clone(),
        values,
        derivs,
    })
}

/// `max_n |r'(t_n) + r(t_n) D + int_0^{t_n} r(t_n - s) gamma(s) ds|` with the
/// memory integral discretized by the trapezoid rule.
pub fn check_transposed_identity<T: Real>(
    res: &Resolvent<T>,
    kernel: &MemoryKernel<T>,
) -> Result<T> {
    if kernel.dim() != res.dim() {
        return Err(GleError::Dimension(
            "kernel and resolvent dimensions differ".into(),
        ));
    }
    let n = res.len();
    let dt = res.dt();
    let gamma: Vec<DMatrix<T>> = (0..n).map(|k| kernel.eval_or_zero(res.time(k))).collect();
    // conv[k] = sum_m r[k - m] gamma[m] via correlation against reversed, transposed gamma
    let reversed: Vec<DMatrix<T>> = gamma.iter().rev().map(|g| g.transpose()).collect();
    let corr = matrix_cross_correlation(res.values(), &reversed);
    let half = lit::<T>(0.5);
    let mut worst = T::zero();
    for k in 0..n {
        // lag index: conv at k equals corr at lag k - (n - 1), i.e. entry k
        let mut conv = corr[k].clone() * dt;
        conv -= (&res.values[k] * &gamma[0] + &res.values[0] * &gamma[k]) * (dt * half);
        if k == 0 {
            conv.fill(T::zero());
        }
        let resid = &res.derivs[k] + &res.values[k] * res.drift() + conv;
        worst = worst.max(max_abs(&resid));
    }
    Ok(worst)
}

/// Outcome of [`paley_wiener_check`].
#[derive(Debug, Clone, PartialEq)]
pub struct PaleyWienerReport<T: Real> {
    /// Sufficient condition `D Sigma + Sigma D^* + gamma_Sigma_hat(w) > 0`:
    /// `(passed, smallest eigenvalue over the grid)`; absent without `Sigma`.
    pub tier1: Option<(bool, T)>,
    /// Smallest singular value of `i w I + D + L gamma(i w)` over the grid
    /// (with `w = 0` always included).
    pub tier2_min_singular: T,
    /// Threshold below which the tier-2 value flags likely non-integrability.
    pub tier2_threshold: T,
    /// `true` when tier 1 passes, or tier 2 is bounded away from zero.
    pub verdict: bool,
}

/// Heuristic check of `r in L^1(R+)` on a frequency grid.
pub fn paley_wiener_check<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    omegas: &[T],
    cov: Option<&CovarianceSpec<T>>,
) -> Result<PaleyWienerReport<T>> {
    let d = kernel.dim();
    if drift.shape() != (d, d) {
        return Err(GleError::Dimension(
            "drift and kernel dimensions differ".into(),
        ));
    }
    let tier1 = match cov {
        Some(cov) => {
            let spectra = kernel.gamma_sigma_fourier(cov, omegas)?;
            let sym = to_complex(&(drift * cov.matrix() + cov.matrix() * drift.transpose()));
            let scale = T::one()
                + spectral_norm(&sym)
                + spectral_norm(&kernel.gamma_sigma_fourier(cov, &[T::zero()])?[0]);
            let tol = lit::<T>(1e-6) * scale;
            let margin = spectra
                .iter()
                .map(|g| min_eigenvalue(&(g + &sym)))
                .fold(T::max_value().unwrap(), |a, b| a.min(b));
            Some((margin > tol, margin))
        }
        None => None,
    };
    let d_c = to_complex(drift);
    let symbol = |w: T| -> CMatrix<T> {
        let lap = kernel
            .laplace(Complex::new(T::zero(), w))
            .expect("imaginary axis");
        CMatrix::<T>::identity(d, d) * Complex::new(T::zero(), w) + &d_c + lap
    };
    let mut min_sv = min_singular_value(&symbol(T::zero()));
    for &w in omegas {
        min_sv = min_sv.min(min_singular_value(&symbol(w)));
    }
    let scale = T::one() + spectral_norm(&d_c) + spectral_norm(&(symbol(T::zero()) - &d_c));
    let threshold = lit::<T>(1e-6) * scale;
    let verdict = tier1.map(|(ok, _)| ok).unwrap_or(false) || min_sv > threshold;
    Ok(PaleyWienerReport {
        tier1,
        tier2_min_singular: min_sv,
        tier2_threshold: threshold,
        verdict,
    })
}

/// Smallest `T_b` with `int_{T_b}^{horizon} |r| < 1e-3 int_0^{horizon} |r|`.
pub fn default_burn_in<T: Real>(res: &Resolvent<T>) -> T {
    let norms: Vec<T> = res.values.iter().map(max_abs).collect();
    let total = trapezoid(&norms, res.dt);
    let target = lit::<T>(1e-3) * total;
    // accumulate from the end
    let mut tail = T::zero();
    let half = lit::<T>(0.5) * res.dt;
    for k in (0..norms.len() - 1).rev() {
        let next = tail + (norms[k] + norms[k + 1]) * half;
        if next >= target {
            return res.time(k + 1);
        }
        tail = next;
    }
    T::zero()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PronyTerm;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    /// Exact resolvent for D = 0, gamma(t) = exp(-t) via the Markovian
    /// embedding m' = r - m, r' = -m, whose solution is closed form.
    fn embedded_exact(t: f64) -> f64 {
        let s = 3f64.sqrt() / 2.0;
        (-t / 2.0).exp() * ((s * t).cos() + (s * t).sin() / 3f64.sqrt())
    }

    fn exp_kernel() -> MemoryKernel<f64> {
        MemoryKernel::prony(1, vec![PronyTerm::scalar(1.0, 1.0, 0)]).unwrap()
    }

    #[test]
    fn starts_at_identity() {
        let d = dmatrix![0.5, 0.1; 0.0, 0.2];
        let res = solve_resolvent(&d, &MemoryKernel::zero(2), 0.1, 1.0).unwrap();
        assert_eq!(res.values()[0], DMatrix::identity(2, 2));
        assert_eq!(res.derivs()[0], -d.clone());
        assert_eq!(res.len(), 11);
        assert_eq!(res.derivs().len(), 11);
    }

    #[test]
    fn markovian_oracle_second_order() {
        let k = exp_kernel();
        let err = |dt: f64| {
            let res = solve_resolvent(&dmatrix![0.0], &k, dt, 10.0).unwrap();
            res.values()
                .iter()
                .enumerate()
                .map(|(n, r)| (r[(0, 0)] - embedded_exact(n as f64 * dt)).abs())
                .fold(0.0, f64::max)
        };
        let (e1, e2) = (err(0.02), err(0.01));
        assert!(e2 < 1e-4);
        let order = (e1 / e2).log2();
        assert!(order > 1.9, "observed order {order}");
    }

    #[test]
    fn zero_kernel_is_matrix_exponential() {
        let d = dmatrix![0.5, 0.2; -0.1, 0.3];
        let res = solve_resolvent(&d, &MemoryKernel::zero(2), 1e-3, 2.0).unwrap();
        for (n, r) in res.values().iter().enumerate().step_by(100) {
            let exact = (-&d * (n as f64 * 1e-3)).exp();
            assert_relative_eq!(r.clone(), exact, epsilon = 1e-7);
        }
        assert!(check_transposed_identity(&res, &MemoryKernel::zero(2)).unwrap() <= 1e-10);
    }

    #[test]
    fn transposed_identity_converges() {
        let d = dmatrix![0.5, 0.3; -0.2, 0.1];
        let k = MemoryKernel::prony(
            2,
            vec![
                PronyTerm::new(dmatrix![1.0, 0.0; 0.0, 0.0], 1.0, 0),
                PronyTerm::new(dmatrix![0.0, 0.0; 0.0, 1.0], 2.0, 0),
            ],
        )
        .unwrap();
        let resid = |dt: f64| {
            let res = solve_resolvent(&d, &k, dt, 10.0).unwrap();
            check_transposed_identity(&res, &k).unwrap()
        };
        let (a, b) = (resid(0.02), resid(0.01));
        assert!((a / b).log2() > 1.9, "{a} {b}");
    }

    #[test]
    fn paley_wiener_verdicts() {
        let omegas: Vec<f64> = (-400..=400).map(|i| i as f64 * 0.025).collect();
        let k = exp_kernel();
        let rep = paley_wiener_check(
            &dmatrix![0.0],
            &k,
            &omegas,
            Some(&CovarianceSpec::identity(1)),
        )
        .unwrap();
        assert!(rep.verdict);
        assert!(rep.tier2_min_singular > 0.1);

        let rep =
            paley_wiener_check(&dmatrix![0.0], &MemoryKernel::zero(1), &omegas, None).unwrap();
        assert!(!rep.verdict);
        assert_eq!(rep.tier2_min_singular, 0.0);

        let ex = MemoryKernel::prony(1, vec![PronyTerm::scalar(4.0, 1.0, 1)]).unwrap();
        let fine: Vec<f64> = (0..=40000).map(|i| i as f64 * 1e-4).collect();
        let rep = paley_wiener_check(
            &dmatrix![0.5],
            &ex,
            &fine,
            Some(&CovarianceSpec::identity(1)),
        )
        .unwrap();
        let (pass, margin) = rep.tier1.unwrap();
        assert!(!pass);
        assert!(margin.abs() < 1e-6);
        assert!(rep.verdict, "tier 2 should support integrability");
    }

    #[test]
    fn burn_in_tracks_decay() {
        let res = solve_resolvent(&dmatrix![1.0], &MemoryKernel::zero(1), 0.01, 30.0).unwrap();
        // int_T^inf e^{-t} = 1e-3 at T = ln(1000)
        assert_relative_eq!(default_burn_in(&res), 1000f64.ln(), epsilon = 0.02);
        let tail = res.extrapolated_tail().unwrap();
        assert_relative_eq!(tail, (-30f64).exp(), max_relative = 0.05);
    }

    /// Example with gamma = 4 t e^{-t}, D = 1/2: augmenting with the two
    /// moments of the kernel gives a 3x3 linear ODE solved by expm.
    fn example_exact(t: f64) -> f64 {
        let a = dmatrix![-0.5, 0.0, -4.0; 1.0, -1.0, 0.0; 0.0, 1.0, -1.0];
        (a * t).exp()[(0, 0)]
    }

    #[test]
    fn prony_matches_augmented_ode() {
        let k = MemoryKernel::prony(1, vec![PronyTerm::scalar(4.0, 1.0, 1)]).unwrap();
        let dt = 0.01;
        let horizon = 20.0;
        let res = solve_resolvent(&dmatrix![0.5], &k, dt, horizon).unwrap();
        let worst = res
            .values()
            .iter()
            .enumerate()
            .map(|(n, r)| (r[(0, 0)] - example_exact(n as f64 * dt)).abs())
            .fold(0.0, f64::max);
        assert!(worst <= 10.0 * dt * dt * 1.5 * horizon, "{worst}");
        assert_relative_eq!(res.at(5.0).unwrap()[(0, 0)], 0.59999, epsilon = 1e-3);
    }

    #[test]
    fn refinement_ratio_is_four() {
        let k = MemoryKernel::prony(1, vec![PronyTerm::scalar(4.0, 1.0, 1)]).unwrap();
        let a = solve_resolvent(&dmatrix![0.5], &k, 0.04, 10.0).unwrap();
        let b = solve_resolvent(&dmatrix![0.5], &k, 0.02, 10.0).unwrap();
        let c = solve_resolvent(&dmatrix![0.5], &k, 0.01, 10.0).unwrap();
        let diff = |x: &Resolvent<f64>, y: &Resolvent<f64>| {
            (0..x.len())
                .map(|n| (&x.values()[n] - &y.values()[2 * n])[(0, 0)].abs())
                .fold(0.0, f64::max)
        };
        let ratio = diff(&a, &b) / diff(&b, &c);
        assert!((3.5..4.5).contains(&ratio), "{ratio}");
    }

    #[test]
    fn tail_shrinks_with_horizon_when_tier_one_passes() {
        let k = MemoryKernel::prony(
            2,
            vec![
                PronyTerm::new(dmatrix![1.0, 0.0; 0.0, 0.0], 1.0, 0),
                PronyTerm::new(dmatrix![0.0, 0.0; 0.0, 1.0], 2.0, 0),
            ],
        )
        .unwrap();
        let d = dmatrix![0.5, 0.0; 0.0, 0.5];
        let omegas: Vec<f64> = (0..=2000).map(|i| i as f64 * 0.01).collect();
        let rep = paley_wiener_check(&d, &k, &omegas, Some(&CovarianceSpec::identity(2))).unwrap();
        assert!(rep.tier1.unwrap().0);
        let tail = |t: f64| {
            let res = solve_resolvent(&d, &k, 0.01, t).unwrap();
            res.tail_l1(t / 2.0)
        };
        assert!(tail(20.0) < tail(10.0));
        assert!(tail(40.0) < tail(20.0));
    }
}
