//! Correlation estimators for simulated ensembles and quadrature evaluation of
//! the closed-form covariance and cross-covariance formulas.

use nalgebra::DMatrix;

use crate::error::{GleError, Result};
use crate::fourier::matrix_cross_correlation;
use crate::kernel::{CovarianceSpec, MemoryKernel};
use crate::linalg::max_abs;
use crate::resolvent::Resolvent;
use crate::scalar::{from_usize, lit, steps_of, Real};
use crate::simulate::{SimulationMode, TrajectoryEnsemble};
use crate::table::CorrelationTable;

/// Per-path statistic `y_p`, returned as entrywise mean and standard error
/// `std / sqrt(P)`.
fn across_paths<T: Real>(
    samples: &[Vec<DMatrix<T>>],
) -> Result<(Vec<DMatrix<T>>, Vec<DMatrix<T>>)> {
    let p = samples.len();
    if p < 2 {
        return Err(GleError::Estimation(format!(
            "need at least two paths, got {p}"
        )));
    }
    let n = from_usize::<T>(p);
    let k = samples[0].len();
    let mut means = Vec::with_capacity(k);
    let mut errs = Vec::with_capacity(k);
    for i in 0..k {
        let mean = samples.iter().fold(
            DMatrix::zeros(samples[0][i].nrows(), samples[0][i].ncols()),
            |acc, s| acc + &s[i],
        ) / n;
        let var = samples
            .iter()
            .fold(DMatrix::zeros(mean.nrows(), mean.ncols()), |acc, s| {
                let dev = &s[i] - &mean;
                acc + dev.component_mul(&dev)
            })
            / (n - T::one());
        errs.push(var.map(|v| (v / n).sqrt()));
        means.push(mean);
    }
    Ok((means, errs))
}

fn lag_index<T: Real>(ens: &TrajectoryEnsemble<T>, t: T) -> Result<isize> {
    let h = ens.record_dt();
    let k = steps_of(t.abs(), h).ok_or_else(|| {
        GleError::GridMismatch(format!("lag {t} is not a multiple of the record step {h}"))
    })?;
    if k >= ens.n_recorded() {
        return Err(GleError::Horizon(format!(
            "lag {t} exceeds the recorded window"
        )));
    }
    Ok(if t < T::zero() {
        -(k as isize)
    } else {
        k as isize
    })
}

fn node_index<T: Real>(ens: &TrajectoryEnsemble<T>, t: T) -> Result<usize> {
    let k = lag_index(ens, t)?;
    if k < 0 {
        return Err(GleError::Domain(format!("time {t} is negative")));
    }
    Ok(k as usize)
}

/// Origins `s` with both `s` and `s + k` on the record.
fn origins(n: usize, k: isize, window: (usize, usize)) -> impl Iterator<Item = usize> {
    let (a, b) = window;
    (a..=b.min(n - 1)).filter(move |&s| {
        let j = s as isize + k;
        j >= 0 && (j as usize) < n
    })
}

fn lagged_product<T: Real>(
    path: &DMatrix<T>,
    k: isize,
    window: (usize, usize),
) -> Result<DMatrix<T>> {
    let d = path.nrows();
    let mut acc = DMatrix::<T>::zeros(d, d);
    let mut count = 0usize;
    for s in origins(path.ncols(), k, window) {
        let j = (s as isize + k) as usize;
        acc.ger(T::one(), &path.column(j), &path.column(s), T::one());
        count += 1;
    }
    if count == 0 {
        return Err(GleError::Estimation("no time origins for this lag".into()));
    }
    Ok(acc / from_usize::<T>(count))
}

/// `C(t) = E V(s+t) V(s)^T`. Stationary ensembles average over every time
/// origin unless `t_ref` pins one; initial-value ensembles require `t_ref`.
pub fn estimate_autocorrelation<T: Real>(
    ens: &TrajectoryEnsemble<T>,
    lags: &[T],
    t_ref: Option<T>,
) -> Result<CorrelationTable<T>> {
    let n = ens.n_recorded();
    let window = match (t_ref, ens.mode) {
        (Some(t), _) => {
            let s = node_index(ens, t)?;
            (s, s)
        }
        (None, SimulationMode::Stationary) => (0, n - 1),
        (None, SimulationMode::Ivp) => {
            return Err(GleError::Estimation(
                "initial-value ensembles need a reference time".into(),
            ))
        }
    };
    let ks: Vec<isize> = lags
        .iter()
        .map(|&t| lag_index(ens, t))
        .collect::<Result<_>>()?;
    let samples: Vec<Vec<DMatrix<T>>> = ens
        .paths
        .iter()
        .map(|p| {
            ks.iter()
                .map(|&k| lagged_product(p, k, window))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (mean, se) = across_paths(&samples)?;
    CorrelationTable::estimated(lags.to_vec(), mean, se)
}

/// Difference between lagged covariances estimated over two time windows.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowComparison<T: Real> {
    /// First window minus second window.
    pub difference: DMatrix<T>,
    pub stderr: DMatrix<T>,
    /// Largest `|difference| / stderr` over the entries.
    pub max_z: T,
    /// `max_z` below the threshold.
    pub stationary: bool,
}

/// Paired per-path comparison of `C(lag)` averaged over origins in `first`
/// and in `second` (closed time intervals of the record).
pub fn window_stationarity_test<T: Real>(
    ens: &TrajectoryEnsemble<T>,
    first: (T, T),
    second: (T, T),
    lag: T,
    threshold: T,
) -> Result<WindowComparison<T>> {
    let k = lag_index(ens, lag)?;
    let idx = |w: (T, T)| -> Result<(usize, usize)> {
        Ok((node_index(ens, w.0)?, node_index(ens, w.1)?))
    };
    let (wa, wb) = (idx(first)?, idx(second)?);
    let samples: Vec<Vec<DMatrix<T>>> = ens
        .paths
        .iter()
        .map(|p| Ok(vec![lagged_product(p, k, wa)? - lagged_product(p, k, wb)?]))
        .collect::<Result<_>>()?;
    let (mean, se) = across_paths(&samples)?;
    let max_z = z_scores(&mean[0], &se[0])
        .iter()
        .fold(T::zero(), |a, &b| a.max(b.abs()));
    Ok(WindowComparison {
        difference: mean[0].clone(),
        stderr: se[0].clone(),
        max_z,
        stationary: max_z < threshold,
    })
}

/// Entrywise `diff / stderr`, zero where both vanish.
pub fn z_scores<T: Real>(diff: &DMatrix<T>, stderr: &DMatrix<T>) -> DMatrix<T> {
    diff.zip_map(stderr, |x, s| {
        if s > T::zero() {
            x / s
        } else if x == T::zero() {
            T::zero()
        } else {
            T::max_value().unwrap()
        }
    })
}

/// `E V(s+t) F(s)^T` with the white part estimated as
/// `E V(s+t) dW_s^T G^T / dt`. Needs an ensemble recorded with its noise.
pub fn estimate_cross_correlation<T: Real>(
    ens: &TrajectoryEnsemble<T>,
    g: &DMatrix<T>,
    lags: &[T],
) -> Result<CorrelationTable<T>> {
    let noise = ens
        .noise
        .as_ref()
        .ok_or_else(|| GleError::Estimation("ensemble was recorded without its noise".into()))?;
    let n = ens.n_recorded();
    let d = ens.dim();
    let inv_dt = T::one() / ens.dt;
    let gt = g.transpose();
    let ks: Vec<isize> = lags
        .iter()
        .map(|&t| lag_index(ens, t))
        .collect::<Result<_>>()?;
    let samples: Vec<Vec<DMatrix<T>>> = ens
        .paths
        .iter()
        .zip(noise)
        .map(|(p, rec)| {
            let force = &rec.f0 + &gt.transpose() * &rec.d_w * inv_dt;
            ks.iter()
                .map(|&k| {
                    let mut acc = DMatrix::<T>::zeros(d, d);
                    let mut count = 0usize;
                    for s in origins(n, k, (0, n - 1)) {
                        let j = (s as isize + k) as usize;
                        acc.ger(T::one(), &p.column(j), &force.column(s), T::one());
                        count += 1;
                    }
                    if count == 0 {
                        return Err(GleError::Estimation("no time origins for this lag".into()));
                    }
                    Ok(acc / from_usize::<T>(count))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let (mean, se) = across_paths(&samples)?;
    CorrelationTable::estimated(lags.to_vec(), mean, se)
}

/// Deviation of the stationary covariance from `I / (beta m)`.
#[derive(Debug, Clone, PartialEq)]
pub struct EquipartitionReport<T: Real> {
    pub estimate: DMatrix<T>,
    pub stderr: DMatrix<T>,
    /// Max-entry norm of `C(0) - I / (beta m)`.
    pub deviation: T,
    pub z: DMatrix<T>,
    pub max_z: T,
}

pub fn equipartition_check<T: Real>(
    ens: &TrajectoryEnsemble<T>,
    beta_m: T,
) -> Result<EquipartitionReport<T>> {
    if !(beta_m > T::zero()) {
        return Err(GleError::Domain("beta m must be positive".into()));
    }
    let c = estimate_autocorrelation(ens, &[T::zero()], None)?;
    let d = ens.dim();
    let target = DMatrix::<T>::identity(d, d) / beta_m;
    let estimate = c.values()[0].clone();
    let stderr = c.stderr().expect("estimated table")[0].clone();
    let diff = &estimate - target;
    let z = z_scores(&diff, &stderr);
    let max_z = z.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    Ok(EquipartitionReport {
        deviation: max_abs(&diff),
        estimate,
        stderr,
        z,
        max_z,
    })
}

// ---------------------------------------------------------------------------
// Closed-form oracles

fn trapezoid_weights<T: Real>(n: usize, h: T) -> Vec<T> {
    let mut w = vec![h; n + 1];
    if n > 0 {
        w[0] = h * lit::<T>(0.5);
        w[n] = h * lit::<T>(0.5);
    } else {
        w[0] = T::zero();
    }
    w
}

fn grid_steps<T: Real>(res: &Resolvent<T>, t: T, what: &str) -> Result<usize> {
    let k = steps_of(t, res.dt()).ok_or_else(|| {
        GleError::GridMismatch(format!("{what} = {t} is not a nonnegative multiple of dt"))
    })?;
    if k >= res.len() {
        return Err(GleError::Horizon(format!(
            "{what} = {t} exceeds the resolvent horizon {}",
            res.horizon()
        )));
    }
    Ok(k)
}

/// Covariance of the initial-value solution,
/// `E V(s+t) V(s)^T = r(t) Sigma + int_0^s r(s+t-u) Q r(s-u)^T du
///   + int_0^{s+t} int_0^s r(s+t-u) (chi - gamma_Sigma)(u - u') r(s-u')^T du' du`
/// with `Q = G G^T - D Sigma - Sigma D^T`, by trapezoidal quadrature on the
/// resolvent grid.
pub fn theoretical_cov_ivp<T: Real>(
    res: &Resolvent<T>,
    cov: &CovarianceSpec<T>,
    g: &DMatrix<T>,
    chi: &CorrelationTable<T>,
    kernel: &MemoryKernel<T>,
    s: T,
    t: T,
) -> Result<DMatrix<T>> {
    let ns = grid_steps(res, s, "s")?;
    let nt = grid_steps(res, t, "t")?;
    if ns + nt >= res.len() {
        return Err(GleError::Horizon(format!(
            "s + t exceeds the resolvent horizon {}",
            res.horizon()
        )));
    }
    let h = res.dt();
    let r = res.values();
    let sigma = cov.matrix();
    let d = res.dim();
    let q = g * g.transpose() - (res.drift() * sigma + sigma * res.drift().transpose());
    let mut out = &r[nt] * sigma;
    let ws = trapezoid_weights(ns, h);
    for (j, &w) in ws.iter().enumerate() {
        out += &r[ns + nt - j] * &q * r[ns - j].transpose() * w;
    }
    let delta = |k: isize| {
        let u = h * lit::<T>(k as f64);
        chi.at(u) - kernel.gamma_sigma(cov, u)
    };
    let deltas: Vec<DMatrix<T>> = (-(ns as isize)..=(ns + nt) as isize).map(delta).collect();
    let offset = ns as isize;
    let wst = trapezoid_weights(ns + nt, h);
    for (i, &wi) in wst.iter().enumerate() {
        let mut inner = DMatrix::<T>::zeros(d, d);
        for (j, &wj) in ws.iter().enumerate() {
            let k = i as isize - j as isize + offset;
            inner += &deltas[k as usize] * r[ns - j].transpose() * wj;
        }
        out += &r[ns + nt - i] * inner * wi;
    }
    Ok(out)
}

/// A truncated infinite-horizon quadrature and its tail bound.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryCovariance<T: Real> {
    pub lags: Vec<T>,
    pub values: Vec<DMatrix<T>>,
    /// Bound on the contribution of the integrals beyond the resolvent horizon.
    pub tail_bound: T,
}

impl<T: Real> StationaryCovariance<T> {
    pub fn table(&self) -> Result<CorrelationTable<T>> {
        CorrelationTable::theoretical(self.lags.clone(), self.values.clone())
    }
}

/// `H(u) = sum_j w_j chi(u + tau_j) r(tau_j)^T` on `u = k h`, `k in [-m, m]`,
/// by FFT correlation. Entry `k + m` holds `H(k h)`.
fn memory_h<T: Real>(
    res: &Resolvent<T>,
    chi: impl Fn(isize) -> DMatrix<T>,
    m: usize,
) -> Vec<DMatrix<T>> {
    let n = res.len() - 1;
    let w = trapezoid_weights(n, res.dt());
    let b: Vec<DMatrix<T>> = res.values().iter().zip(&w).map(|(r, &wj)| r * wj).collect();
    // a[i] = chi((i - span) h) with span covering u + tau for |u| <= m
    let span = (m + n) as isize;
    let a: Vec<DMatrix<T>> = (-span..=span).map(&chi).collect();
    let c = matrix_cross_correlation(&a, &b);
    // c[idx] holds lag kk = idx - n, and H((kk - span) h) = c[kk + n]
    (-(m as isize)..=m as isize)
        .map(|k| c[(k + span) as usize + n].clone())
        .collect()
}

fn tail_bound<T: Real>(res: &Resolvent<T>, chi_sup: T, q_norm: T) -> Result<T> {
    let tail = res
        .extrapolated_tail()
        .ok_or_else(|| GleError::Horizon("the resolvent shows no decay over its horizon".into()))?;
    let d = from_usize::<T>(res.dim());
    let total = res.total_l1() + tail;
    let sup_r = res
        .values()
        .iter()
        .map(max_abs)
        .fold(T::zero(), |a, b| a.max(b));
    Ok(d * d * tail * (lit::<T>(2.0) * chi_sup * total + q_norm * sup_r))
}

#[allow(clippy::too_many_arguments)]
fn stationary_core<T: Real>(
    res: &Resolvent<T>,
    q: &DMatrix<T>,
    anchor: Option<&DMatrix<T>>,
    chi: impl Fn(isize) -> DMatrix<T>,
    chi_sup: T,
    lags: &[T],
    tol: T,
) -> Result<StationaryCovariance<T>> {
    let ks: Vec<usize> = lags
        .iter()
        .map(|&t| {
            steps_of(t, res.dt()).ok_or_else(|| {
                GleError::GridMismatch(format!("lag {t} is not a nonnegative multiple of dt"))
            })
        })
        .collect::<Result<_>>()?;
    let bound = tail_bound(res, chi_sup, max_abs(q))?;
    if bound > tol {
        return Err(GleError::Horizon(format!(
            "truncation tail bound {bound} exceeds tolerance {tol}; extend the resolvent horizon"
        )));
    }
    let n = res.len() - 1;
    let r = res.values();
    let w = trapezoid_weights(n, res.dt());
    let m = ks.iter().copied().max().unwrap_or(0);
    let hs = memory_h(res, chi, n.max(m));
    let centre = n.max(m) as isize;
    let d = res.dim();
    let values = ks
        .iter()
        .map(|&k| {
            let mut out = match anchor {
                Some(sigma) if k <= n => &r[k] * sigma,
                _ => DMatrix::<T>::zeros(d, d),
            };
            for j in 0..=n {
                if k + j > n {
                    break;
                }
                out += &r[k + j] * q * r[j].transpose() * w[j];
            }
            for i in 0..=n {
                let u = k as isize - i as isize;
                out += &r[i] * &hs[(u + centre) as usize] * w[i];
            }
            out
        })
        .collect();
    Ok(StationaryCovariance {
        lags: lags.to_vec(),
        values,
        tail_bound: bound,
    })
}

fn chi_sampler<'a, T: Real>(
    chi: &'a CorrelationTable<T>,
    h: T,
) -> impl Fn(isize) -> DMatrix<T> + 'a {
    let uniform = chi
        .uniform_step()
        .filter(|(step, _)| (*step - h).abs() <= lit::<T>(1e-9) * h);
    move |k: isize| match uniform {
        Some((_, first)) => {
            let i = k - first;
            if i >= 0 && (i as usize) < chi.len() {
                chi.values()[i as usize].clone()
            } else {
                let (r, c) = chi.values()[0].shape();
                DMatrix::zeros(r, c)
            }
        }
        None => chi.at(h * lit::<T>(k as f64)),
    }
}

fn sup_norm<T: Real>(chi: &CorrelationTable<T>) -> T {
    chi.values()
        .iter()
        .map(max_abs)
        .fold(T::zero(), |a, b| a.max(b))
}

/// Stationary autocorrelation
/// `C(t) = int_0^inf r(t+u) G G^T r(u)^T du + int int r(u) chi(t+u'-u) r(u')^T du' du`
/// at the lags (nonnegative multiples of the resolvent step), truncated at
/// the resolvent horizon. Fails when the tail bound exceeds `tol`.
pub fn theoretical_cov_stationary<T: Real>(
    res: &Resolvent<T>,
    g: &DMatrix<T>,
    chi: &CorrelationTable<T>,
    lags: &[T],
    tol: T,
) -> Result<StationaryCovariance<T>> {
    let q = g * g.transpose();
    stationary_core(
        res,
        &q,
        None,
        chi_sampler(chi, res.dt()),
        sup_norm(chi),
        lags,
        tol,
    )
}

/// The same autocorrelation anchored at `r(t) Sigma`:
/// `r(t) Sigma + int r(t+u) (G G^T - D Sigma - Sigma D^T) r(u)^T du
///   + int int r(u) (chi - gamma_Sigma)(t+u'-u) r(u')^T du' du`.
#[allow(clippy::too_many_arguments)]
pub fn theoretical_cov_stationary_alt<T: Real>(
    res: &Resolvent<T>,
    cov: &CovarianceSpec<T>,
    g: &DMatrix<T>,
    chi: &CorrelationTable<T>,
    kernel: &MemoryKernel<T>,
    lags: &[T],
    tol: T,
) -> Result<StationaryCovariance<T>> {
    let sigma = cov.matrix();
    let q = g * g.transpose() - (res.drift() * sigma + sigma * res.drift().transpose());
    let h = res.dt();
    let sample = chi_sampler(chi, h);
    let delta = |k: isize| sample(k) - kernel.gamma_sigma(cov, h * lit::<T>(k as f64));
    let sup =
        sup_norm(chi) + max_abs(&kernel.at_zero()) * max_abs(sigma) + kernel_sup(kernel, sigma);
    stationary_core(res, &q, Some(sigma), delta, sup, lags, tol)
}

fn kernel_sup<T: Real>(kernel: &MemoryKernel<T>, sigma: &DMatrix<T>) -> T {
    // coarse sup of |gamma Sigma| from a scan of the first few decay times
    let mut sup = T::zero();
    let mut t = T::zero();
    for _ in 0..400 {
        sup = sup.max(max_abs(&(kernel.eval_or_zero(t) * sigma)));
        t += lit::<T>(0.05);
    }
    sup
}

/// `E V(s+t) F(s)^T = int_0^inf r(u) chi(t-u) du + r(t) G G^T 1_{t>0}` for
/// `t != 0`.
pub fn cross_correlation_theory<T: Real>(
    res: &Resolvent<T>,
    chi: &CorrelationTable<T>,
    g: &DMatrix<T>,
    t: T,
) -> Result<DMatrix<T>> {
    if t == T::zero() {
        return Err(GleError::Domain(
            "the velocity-force correlation has a jump at t = 0; use the one-sided limits".into(),
        ));
    }
    let colored = colored_cross(res, chi, t);
    if t > T::zero() {
        Ok(colored + res.at(t)? * g * g.transpose())
    } else {
        Ok(colored)
    }
}

fn colored_cross<T: Real>(res: &Resolvent<T>, chi: &CorrelationTable<T>, t: T) -> DMatrix<T> {
    let n = res.len() - 1;
    let w = trapezoid_weights(n, res.dt());
    let mut out = DMatrix::<T>::zeros(res.dim(), res.dim());
    for (j, r) in res.values().iter().enumerate() {
        out += r * chi.at(t - res.time(j)) * w[j];
    }
    out
}

/// Limits of [`cross_correlation_theory`] as `t -> 0-` and `t -> 0+`.
pub fn cross_correlation_limits_at_zero<T: Real>(
    res: &Resolvent<T>,
    chi: &CorrelationTable<T>,
    g: &DMatrix<T>,
) -> (DMatrix<T>, DMatrix<T>) {
    let colored = colored_cross(res, chi, T::zero());
    let plus = &colored + g * g.transpose();
    (colored, plus)
}

/// `E F(t) V(0)^T = int_0^inf gamma(t+u) Sigma r(u)^T du`, `t > 0`, for the
/// stationary solution when `chi = gamma_Sigma`.
pub fn kubo_cross_correlation<T: Real>(
    res: &Resolvent<T>,
    kernel: &MemoryKernel<T>,
    cov: &CovarianceSpec<T>,
    t: T,
) -> Result<DMatrix<T>> {
    if !(t > T::zero()) {
        return Err(GleError::Domain(
            "the force-velocity display needs t > 0".into(),
        ));
    }
    let n = res.len() - 1;
    let w = trapezoid_weights(n, res.dt());
    let mut out = DMatrix::<T>::zeros(res.dim(), res.dim());
    for (j, r) in res.values().iter().enumerate() {
        out += kernel.eval_or_zero(t + res.time(j)) * cov.matrix() * r.transpose() * w[j];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fdt::{chi_of, solve_lyapunov_g, symmetric_lags, ForceModel, Kappa};
    use crate::kernel::PronyTerm;
    use crate::resolvent::solve_resolvent;
    use crate::table::SymmetricTable;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn exp_kernel() -> MemoryKernel<f64> {
        MemoryKernel::prony(1, vec![PronyTerm::scalar(1.0, 1.0, 0)]).unwrap()
    }

    fn example_one() -> MemoryKernel<f64> {
        MemoryKernel::prony(1, vec![PronyTerm::scalar(4.0, 1.0, 1)]).unwrap()
    }

    fn zero_chi(d: usize) -> CorrelationTable<f64> {
        CorrelationTable::theoretical(vec![0.0], vec![DMatrix::zeros(d, d)]).unwrap()
    }

    fn riedle_exact(t: f64) -> f64 {
        let s = 3f64.sqrt() / 2.0;
        (-t / 2.0).exp() * ((s * t).cos() + (s * t).sin() / 3f64.sqrt())
    }

    #[test]
    fn constant_paths_give_outer_products() {
        let v = dmatrix![1.0, 2.0; 1.0, 2.0; 1.0, 2.0];
        let paths = vec![v.transpose(); 3];
        let paths: Vec<DMatrix<f64>> = paths
            .into_iter()
            .map(|p| DMatrix::from_fn(2, 4, |r, _| p[(r, 0)]))
            .collect();
        let ens =
            TrajectoryEnsemble::from_paths(0.1, 1, SimulationMode::Stationary, paths).unwrap();
        let c = estimate_autocorrelation(&ens, &[0.0, 0.2], None).unwrap();
        for (m, e) in c.values().iter().zip(c.stderr().unwrap()) {
            assert_eq!(*m, dmatrix![1.0, 2.0; 2.0, 4.0]);
            assert!(e.iter().all(|&x| x == 0.0));
        }
        assert!(estimate_autocorrelation(&ens, &[0.05], None).is_err());
        let one = TrajectoryEnsemble::from_paths(
            0.1,
            1,
            SimulationMode::Stationary,
            vec![DMatrix::zeros(1, 3)],
        )
        .unwrap();
        assert!(matches!(
            estimate_autocorrelation(&one, &[0.0], None),
            Err(GleError::Estimation(_))
        ));
    }

    #[test]
    fn ivp_at_origin_is_r_sigma() {
        let res = solve_resolvent(&dmatrix![0.5], &example_one(), 0.01, 5.0).unwrap();
        let cov = CovarianceSpec::identity(1);
        let chi = zero_chi(1);
        for t in [0.0, 0.5, 2.0] {
            let c = theoretical_cov_ivp(&res, &cov, &dmatrix![3.0], &chi, &example_one(), 0.0, t)
                .unwrap();
            assert_eq!(c, res.at(t).unwrap());
        }
    }

    #[test]
    fn ivp_is_stationary_under_the_relation() {
        let dt = 0.01;
        let res = solve_resolvent(&dmatrix![0.5], &example_one(), dt, 12.0).unwrap();
        let phi =
            SymmetricTable::from_fn(dt, 2000, |t: f64| dmatrix![-2.0 * (-t.abs()).exp()]).unwrap();
        let model = ForceModel::new(dmatrix![1.0], phi, Kappa::Same).unwrap();
        let chi = chi_of(&model, &symmetric_lags(dt, 20.0)).unwrap();
        let cov = CovarianceSpec::identity(1);
        for (s, t) in [(2.0, 0.0), (5.0, 1.0)] {
            let c = theoretical_cov_ivp(&res, &cov, model.g(), &chi, &example_one(), s, t).unwrap();
            assert_relative_eq!(c[(0, 0)], res.at(t).unwrap()[(0, 0)], epsilon = 2e-3);
        }
    }

    #[test]
    fn riedle_quadrature_matches_closed_form() {
        // D = 0, gamma = e^{-t}, white noise: C(t) = int r(t+u) r(u) du, and
        // r has the closed form above, so integrate it independently.
        let res = solve_resolvent(&dmatrix![0.0], &exp_kernel(), 0.01, 40.0).unwrap();
        let lags = vec![0.0, 0.5, 1.0, 3.0];
        let c =
            theoretical_cov_stationary(&res, &dmatrix![1.0], &zero_chi(1), &lags, 1e-6).unwrap();
        for (t, v) in lags.iter().zip(&c.values) {
            let n = 400_000;
            let h = 40.0 / n as f64;
            let exact: f64 = (0..=n)
                .map(|i| {
                    let u = i as f64 * h;
                    let w = if i == 0 || i == n { 0.5 } else { 1.0 };
                    w * riedle_exact(t + u) * riedle_exact(u) * h
                })
                .sum();
            assert_relative_eq!(v[(0, 0)], exact, epsilon = 1e-4);
        }
        assert!(c.tail_bound < 1e-6);
    }

    #[test]
    fn ou_stationary_covariance_solves_lyapunov() {
        let d = dmatrix![1.0, 0.3; -0.2, 0.8];
        let cov = CovarianceSpec::new(dmatrix![1.0, 0.2; 0.2, 0.5]).unwrap();
        let g = solve_lyapunov_g(&d, &cov).unwrap();
        let res = solve_resolvent(&d, &MemoryKernel::zero(2), 0.005, 30.0).unwrap();
        let c = theoretical_cov_stationary(&res, &g, &zero_chi(2), &[0.0, 1.0], 1e-6).unwrap();
        assert!(max_abs(&(&c.values[0] - cov.matrix())) < 1e-4);
        assert!(max_abs(&(&c.values[1] - res.at(1.0).unwrap() * cov.matrix())) < 1e-4);
        let alt = theoretical_cov_stationary_alt(
            &res,
            &cov,
            &g,
            &zero_chi(2),
            &MemoryKernel::zero(2),
            &[0.0],
            1e-6,
        )
        .unwrap();
        assert!(max_abs(&(&alt.values[0] - cov.matrix())) < 1e-12);
    }

    #[test]
    fn both_representations_agree_for_riedle() {
        let res = solve_resolvent(
            &dmatrix![0.0, 0.0; 0.0, 0.0],
            &MemoryKernel::prony(2, vec![PronyTerm::new(DMatrix::identity(2, 2), 1.0, 0)]).unwrap(),
            0.01,
            40.0,
        )
        .unwrap();
        let k =
            MemoryKernel::prony(2, vec![PronyTerm::new(DMatrix::identity(2, 2), 1.0, 0)]).unwrap();
        let cov = CovarianceSpec::new(dmatrix![1.0, 0.3; 0.3, 2.0]).unwrap();
        let g = DMatrix::identity(2, 2);
        let lags = vec![0.0, 0.7, 2.0];
        let a = theoretical_cov_stationary(&res, &g, &zero_chi(2), &lags, 1e-6).unwrap();
        let b =
            theoretical_cov_stationary_alt(&res, &cov, &g, &zero_chi(2), &k, &lags, 1e-6).unwrap();
        for (x, y) in a.values.iter().zip(&b.values) {
            assert!(max_abs(&(x - y)) < 1e-4, "{x} {y}");
        }
    }

    #[test]
    fn horizon_too_short_is_reported() {
        let res = solve_resolvent(&dmatrix![0.0], &exp_kernel(), 0.01, 5.0).unwrap();
        let r = theoretical_cov_stationary(&res, &dmatrix![1.0], &zero_chi(1), &[0.0], 1e-8);
        assert!(matches!(r, Err(GleError::Horizon(_))));
    }

    #[test]
    fn cross_correlation_white_noise() {
        let res = solve_resolvent(&dmatrix![0.0], &exp_kernel(), 0.01, 30.0).unwrap();
        let chi = zero_chi(1);
        let g = dmatrix![1.5];
        assert_eq!(
            cross_correlation_theory(&res, &chi, &g, -0.4).unwrap()[(0, 0)],
            0.0
        );
        let v = cross_correlation_theory(&res, &chi, &g, 0.5).unwrap();
        assert_relative_eq!(v[(0, 0)], 2.25 * riedle_exact(0.5), epsilon = 1e-5);
        assert!(cross_correlation_theory(&res, &chi, &g, 0.0).is_err());
        let (minus, plus) = cross_correlation_limits_at_zero(&res, &chi, &g);
        assert_eq!(minus[(0, 0)], 0.0);
        assert_eq!(plus[(0, 0)], 2.25);
    }

    #[test]
    fn kubo_display_is_the_mirrored_cross_correlation() {
        let k = exp_kernel();
        let cov = CovarianceSpec::identity(1);
        let res = solve_resolvent(&dmatrix![0.0], &k, 0.01, 30.0).unwrap();
        let lags = symmetric_lags(0.01, 30.0);
        let chi = CorrelationTable::theoretical(
            lags.clone(),
            lags.iter().map(|&t| k.gamma_sigma(&cov, t)).collect(),
        )
        .unwrap();
        for t in [0.3, 1.0, 2.5] {
            let kubo = kubo_cross_correlation(&res, &k, &cov, t).unwrap();
            let mirrored = cross_correlation_theory(&res, &chi, &dmatrix![0.0], -t)
                .unwrap()
                .transpose();
            assert_relative_eq!(kubo[(0, 0)], mirrored[(0, 0)], epsilon = 1e-6);
            assert!(kubo[(0, 0)].abs() > 1e-3);
        }
    }
}
