//! Monte Carlo integration of the generalized Langevin equation
//! `V' = -D V - gamma * V + F` from an initial value, and of its
//! infinite-horizon form by discarding a burn-in.
//!
//! Paths run in fixed-size batches stored as the columns of one `d x c`
//! state, with the same implicit trapezoidal scheme as the resolvent. The
//! force enters each step as `F0(t_n) dt + G dW_n`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{GleError, Result};
use crate::fdt::ForceModel;
use crate::kernel::{CovarianceSpec, MemoryKernel};
use crate::noise::{standard_normal, stream_rng, ForceSynthesizer, NoiseRealization, Purpose};
use crate::resolvent::{paley_wiener_check, Resolvent};
use crate::scalar::{from_usize, lit, Real};
use crate::volterra::VolterraStepper;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimulationMode {
    Ivp,
    Stationary,
}

/// Law of the state at the first simulated node.
#[derive(Debug, Clone, PartialEq)]
pub enum InitialLaw<T: Real> {
    Zero,
    Gaussian(CovarianceSpec<T>),
}

impl<T: Real> InitialLaw<T> {
    fn factor(&self, d: usize) -> Result<Option<DMatrix<T>>> {
        match self {
            InitialLaw::Zero => Ok(None),
            InitialLaw::Gaussian(cov) => {
                if cov.dim() != d {
                    return Err(GleError::Dimension(
                        "initial covariance has the wrong dimension".into(),
                    ));
                }
                let chol = Cholesky::new(cov.matrix().clone()).ok_or_else(|| {
                    GleError::Invariant("initial covariance is not positive definite".into())
                })?;
                Ok(Some(chol.l()))
            }
        }
    }

    pub fn covariance(&self) -> Option<&DMatrix<T>> {
        match self {
            InitialLaw::Zero => None,
            InitialLaw::Gaussian(c) => Some(c.matrix()),
        }
    }
}

/// Knobs that do not change the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOptions<T: Real> {
    /// Keep every `record_every`-th node.
    pub record_every: usize,
    /// Store `F0` and `dW` at the recorded nodes.
    pub keep_noise: bool,
    /// Paths per batch; fixes the floating point evaluation order.
    pub batch_size: usize,
    /// Truncate direct memory sums where the kernel tail is negligible.
    pub truncate_memory: bool,
    /// Start of the burn-in for stationary runs.
    pub stationary_init: InitialLaw<T>,
    /// Steps of force history drawn before `t = 0`; `None` uses the support of `phi`.
    pub pre_roll: Option<usize>,
}

impl<T: Real> Default for SimulationOptions<T> {
    fn default() -> Self {
        Self {
            record_every: 1,
            keep_noise: false,
            batch_size: 64,
            truncate_memory: true,
            stationary_init: InitialLaw::Zero,
            pre_roll: None,
        }
    }
}

/// Force samples at the recorded nodes of one path.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRecord<T: Real> {
    /// `F0(t_j)`, column-wise.
    pub f0: DMatrix<T>,
    /// Increment of `W` over the step starting at `t_j`.
    pub d_w: DMatrix<T>,
}

/// An ensemble of sample paths on a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryEnsemble<T: Real> {
    pub dt: T,
    pub n_steps: usize,
    pub n_paths: usize,
    pub record_every: usize,
    pub mode: SimulationMode,
    /// Covariance of the initial draw, if random.
    pub init_cov: Option<DMatrix<T>>,
    /// Steps discarded before the recorded window.
    pub burn_in: usize,
    pub seed: u64,
    /// `paths[p]` is `d x n_recorded`; column `j` is the state at `j * record_every * dt`.
    pub paths: Vec<DMatrix<T>>,
    pub noise: Option<Vec<NoiseRecord<T>>>,
}

impl<T: Real> TrajectoryEnsemble<T> {
    pub fn dim(&self) -> usize {
        self.paths.first().map_or(0, |p| p.nrows())
    }

    pub fn n_recorded(&self) -> usize {
        self.paths.first().map_or(0, |p| p.ncols())
    }

    /// Spacing of the recorded nodes.
    pub fn record_dt(&self) -> T {
        self.dt * from_usize::<T>(self.record_every)
    }

    pub fn times(&self) -> Vec<T> {
        (0..self.n_recorded())
            .map(|j| self.record_dt() * from_usize::<T>(j))
            .collect()
    }

    /// Build from explicit paths (for estimators and tests).
    pub fn from_paths(
        dt: T,
        record_every: usize,
        mode: SimulationMode,
        paths: Vec<DMatrix<T>>,
    ) -> Result<Self> {
        let shape = paths
            .first()
            .map(|p| p.shape())
            .ok_or_else(|| GleError::Estimation("no paths".into()))?;
        if paths.iter().any(|p| p.shape() != shape) {
            return Err(GleError::Dimension("paths differ in shape".into()));
        }
        Ok(Self {
            dt,
            n_steps: (shape.1 - 1) * record_every,
            n_paths: paths.len(),
            record_every,
            mode,
            init_cov: None,
            burn_in: 0,
            seed: 0,
            paths,
            noise: None,
        })
    }
}

struct Plan<'a, T: Real> {
    drift: &'a DMatrix<T>,
    kernel: &'a MemoryKernel<T>,
    g: &'a DMatrix<T>,
    synth: ForceSynthesizer<T>,
    dt: T,
    /// Total integration steps, burn-in included.
    total: usize,
    /// First recorded step.
    start: usize,
    record_every: usize,
    keep_noise: bool,
    truncate: bool,
    init: Option<DMatrix<T>>,
    seed: u64,
}

struct BatchOutput<T: Real> {
    paths: Vec<DMatrix<T>>,
    noise: Vec<NoiseRecord<T>>,
}

impl<T: Real> Plan<'_, T> {
    fn recorded_steps(&self) -> Vec<usize> {
        (self.start..=self.total)
            .step_by(self.record_every)
            .collect()
    }

    fn initial_state(&self, d: usize, paths: &[u64]) -> DMatrix<T> {
        let mut x = DMatrix::<T>::zeros(d, paths.len());
        if let Some(l) = &self.init {
            for (c, &p) in paths.iter().enumerate() {
                let mut rng = stream_rng(self.seed, p, Purpose::Initial);
                let z = DVector::<T>::from_fn(d, |_, _| standard_normal::<T>(&mut rng));
                x.set_column(c, &(l * z));
            }
        }
        x
    }

    fn run_batch(&self, paths: &[u64]) -> Result<BatchOutput<T>> {
        let d = self.drift.nrows();
        let c = paths.len();
        let noises: Vec<NoiseRealization<T>> = paths
            .iter()
            .map(|&p| self.synth.generate(self.seed, p))
            .collect();
        let forcing: Vec<DMatrix<T>> = noises.iter().map(|n| n.step_forcing(self.g)).collect();
        let steps = self.recorded_steps();
        let mut out = vec![DMatrix::<T>::zeros(d, steps.len()); c];
        let mut x = self.initial_state(d, paths);
        let mut stepper = VolterraStepper::new(self.drift, self.kernel, self.dt, self.truncate)?;
        let mut f = stepper.start(&x);
        let mut e = DMatrix::<T>::zeros(d, c);
        let mut next = 0;
        let mut record = |n: usize, x: &DMatrix<T>, next: &mut usize| {
            if *next < steps.len() && steps[*next] == n {
                for (p, o) in out.iter_mut().enumerate() {
                    o.set_column(*next, &x.column(p));
                }
                *next += 1;
            }
        };
        record(0, &x, &mut next);
        for n in 0..self.total {
            for (p, fp) in forcing.iter().enumerate() {
                e.set_column(p, &fp.column(n));
            }
            stepper.advance(&mut x, &mut f, Some(&e));
            if x.iter().any(|v| !v.is_finite()) {
                return Err(GleError::SingularStep { step: n + 1 });
            }
            record(n + 1, &x, &mut next);
        }
        let noise = if self.keep_noise {
            noises
                .iter()
                .map(|nz| NoiseRecord {
                    f0: DMatrix::from_fn(d, steps.len(), |r, j| nz.f0[(r, steps[j])]),
                    d_w: DMatrix::from_fn(d, steps.len(), |r, j| nz.d_w[(r, steps[j])]),
                })
                .collect()
        } else {
            Vec::new()
        };
        Ok(BatchOutput { paths: out, noise })
    }

    fn run(
        &self,
        n_paths: usize,
        batch_size: usize,
    ) -> Result<(Vec<DMatrix<T>>, Option<Vec<NoiseRecord<T>>>)> {
        let ids: Vec<u64> = (0..n_paths as u64).collect();
        let batches: Vec<Result<BatchOutput<T>>> = ids
            .par_chunks(batch_size.max(1))
            .map(|chunk| self.run_batch(chunk))
            .collect();
        let mut paths = Vec::with_capacity(n_paths);
        let mut noise = Vec::new();
        for b in batches {
            let b = b?;
            paths.extend(b.paths);
            noise.extend(b.noise);
        }
        Ok((paths, self.keep_noise.then_some(noise)))
    }
}

fn validate<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    force: &ForceModel<T>,
    dt: T,
) -> Result<()> {
    let d = kernel.dim();
    if drift.shape() != (d, d) || force.dim() != d {
        return Err(GleError::Dimension(
            "drift, kernel and force dimensions differ".into(),
        ));
    }
    if !(dt > T::zero()) {
        return Err(GleError::Config("dt must be positive".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    force: &ForceModel<T>,
    init: &InitialLaw<T>,
    dt: T,
    burn_in: usize,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions<T>,
) -> Result<(Vec<DMatrix<T>>, Option<Vec<NoiseRecord<T>>>)> {
    validate(drift, kernel, force, dt)?;
    if n_paths == 0 {
        return Err(GleError::Config("at least one path is required".into()));
    }
    if opts.record_every == 0 {
        return Err(GleError::Config("record_every must be positive".into()));
    }
    let total = burn_in + n_steps;
    let plan = Plan {
        drift,
        kernel,
        g: force.g(),
        synth: ForceSynthesizer::new(force, dt, total + 1, opts.pre_roll)?,
        dt,
        total,
        start: burn_in,
        record_every: opts.record_every,
        keep_noise: opts.keep_noise,
        truncate: opts.truncate_memory,
        init: init.factor(kernel.dim())?,
        seed,
    };
    plan.run(n_paths, opts.batch_size)
}

/// Initial-value problem with `V(0) ~ N(0, cov_init)` independent of the force.
#[allow(clippy::too_many_arguments)]
pub fn integrate_ivp<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    force: &ForceModel<T>,
    cov_init: &CovarianceSpec<T>,
    dt: T,
    n_steps: usize,
    n_paths: usize,
    seed: u64,
    opts: &SimulationOptions<T>,
) -> Result<TrajectoryEnsemble<T>> {
    let init = InitialLaw::Gaussian(cov_init.clone());
    let (paths, noise) = simulate(
        drift, kernel, force, &init, dt, 0, n_steps, n_paths, seed, opts,
    )?;
    Ok(TrajectoryEnsemble {
        dt,
        n_steps,
        n_paths,
        record_every: opts.record_every,
        mode: SimulationMode::Ivp,
        init_cov: Some(cov_init.matrix().clone()),
        burn_in: 0,
        seed,
        paths,
        noise,
    })
}

/// Frequencies for the integrability check at step `dt`: fine near the
/// origin, geometric up to the Nyquist frequency.
pub fn default_omega_grid<T: Real>(dt: T) -> Vec<T> {
    let mut out: Vec<T> = (0..=4000).map(|i| lit::<T>(i as f64 * 0.005)).collect();
    let nyquist = std::f64::consts::PI / dt.as_f64();
    let mut w = 20.0;
    while w < nyquist {
        w *= 1.01;
        out.push(lit::<T>(w.min(nyquist)));
    }
    out
}

/// Infinite-horizon solution approximated by an initial-value run whose first
/// `burn_in` steps are discarded.
#[allow(clippy::too_many_arguments)]
pub fn integrate_stationary<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    force: &ForceModel<T>,
    dt: T,
    n_steps: usize,
    n_paths: usize,
    burn_in: usize,
    seed: u64,
    opts: &SimulationOptions<T>,
) -> Result<TrajectoryEnsemble<T>> {
    validate(drift, kernel, force, dt)?;
    let pw = paley_wiener_check(drift, kernel, &default_omega_grid(dt), None)?;
    if !pw.verdict {
        return Err(GleError::PaleyWiener(format!(
            "smallest singular value of i w + D + L gamma(i w) is {} (threshold {}); the resolvent is likely not integrable",
            pw.tier2_min_singular, pw.tier2_threshold
        )));
    }
    let init = opts.stationary_init.clone();
    let (paths, noise) = simulate(
        drift, kernel, force, &init, dt, burn_in, n_steps, n_paths, seed, opts,
    )?;
    Ok(TrajectoryEnsemble {
        dt,
        n_steps,
        n_paths,
        record_every: opts.record_every,
        mode: SimulationMode::Stationary,
        init_cov: init.covariance().cloned(),
        burn_in,
        seed,
        paths,
        noise,
    })
}

/// `V(t_n) = r(t_n) V0 + sum_{m<n} (r(t_{n-m}) + r(t_{n-m-1}))/2 e_m` with
/// `e_m = F0(t_m) dt + G dW_m`; returns `d x (n+1)` with `n` the number of
/// noise steps.
pub fn pathwise_reconstruct<T: Real>(
    res: &Resolvent<T>,
    v0: &DVector<T>,
    noise: &NoiseRealization<T>,
    g: &DMatrix<T>,
) -> Result<DMatrix<T>> {
    let d = res.dim();
    if v0.len() != d || noise.dim() != d || g.shape() != (d, d) {
        return Err(GleError::Dimension(
            "resolvent, state and noise dimensions differ".into(),
        ));
    }
    if (res.dt() - noise.dt).abs() > lit::<T>(1e-12) * res.dt() {
        return Err(GleError::GridMismatch(format!(
            "resolvent dt {} vs noise dt {}",
            res.dt(),
            noise.dt
        )));
    }
    let n = noise.n_steps();
    if res.len() < n + 1 {
        return Err(GleError::GridMismatch(format!(
            "resolvent has {} nodes, the noise needs {}",
            res.len(),
            n + 1
        )));
    }
    let e = noise.step_forcing(g);
    let half = lit::<T>(0.5);
    let weights: Vec<DMatrix<T>> = (1..=n)
        .map(|k| (&res.values()[k] + &res.values()[k - 1]) * half)
        .collect();
    let mut out = DMatrix::<T>::zeros(d, n + 1);
    for k in 0..=n {
        let mut v = &res.values()[k] * v0;
        for m in 0..k {
            v.gemv(T::one(), &weights[k - m - 1], &e.column(m), T::one());
        }
        out.set_column(k, &v);
    }
    Ok(out)
}

/// Mean-square gap between two paired arms at one checkpoint.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GapEstimate<T: Real> {
    pub t: T,
    pub gap: T,
    pub stderr: T,
}

/// Paired runs sharing the force: one arm starts at `t = 0` from `init`, the
/// other is pre-rolled over `[-pre_roll_time, 0]` from rest. Reports
/// `E |V_a(t) - V_b(t)|^2` at the checkpoints.
#[allow(clippy::too_many_arguments)]
pub fn convergence_to_stationary<T: Real>(
    drift: &DMatrix<T>,
    kernel: &MemoryKernel<T>,
    force: &ForceModel<T>,
    init: &InitialLaw<T>,
    checkpoints: &[T],
    dt: T,
    pre_roll_time: T,
    n_paths: usize,
    seed: u64,
) -> Result<Vec<GapEstimate<T>>> {
    validate(drift, kernel, force, dt)?;
    if n_paths < 2 {
        return Err(GleError::Estimation("need at least two paths".into()));
    }
    let d = kernel.dim();
    let pre = (pre_roll_time / dt).as_f64().round() as usize;
    let marks: Vec<usize> = checkpoints
        .iter()
        .map(|&t| (t / dt).as_f64().round() as usize)
        .collect();
    let horizon = marks.iter().copied().max().unwrap_or(0);
    let total = pre + horizon;
    let synth = ForceSynthesizer::new(force, dt, total, None)?;
    let factor = init.factor(d)?;
    let g = force.g();
    let ids: Vec<u64> = (0..n_paths as u64).collect();
    let per_batch: Vec<Result<Vec<Vec<T>>>> = ids
        .par_chunks(64)
        .map(|chunk| {
            let c = chunk.len();
            let forcing: Vec<DMatrix<T>> = chunk
                .iter()
                .map(|&p| synth.generate(seed, p).step_forcing(g))
                .collect();
            let mut b = DMatrix::<T>::zeros(d, c);
            let mut sb = VolterraStepper::new(drift, kernel, dt, true)?;
            let mut fb = sb.start(&b);
            let mut e = DMatrix::<T>::zeros(d, c);
            let step = |n: usize, e: &mut DMatrix<T>| {
                for (p, fp) in forcing.iter().enumerate() {
                    e.set_column(p, &fp.column(n));
                }
            };
            for n in 0..pre {
                step(n, &mut e);
                sb.advance(&mut b, &mut fb, Some(&e));
            }
            let mut a = DMatrix::<T>::zeros(d, c);
            if let Some(l) = &factor {
                for (col, &p) in chunk.iter().enumerate() {
                    let mut rng = stream_rng(seed, p, Purpose::Initial);
                    let z = DVector::<T>::from_fn(d, |_, _| standard_normal::<T>(&mut rng));
                    a.set_column(col, &(l * z));
                }
            }
            let mut sa = VolterraStepper::new(drift, kernel, dt, true)?;
            let mut fa = sa.start(&a);
            let gap_now = |a: &DMatrix<T>, b: &DMatrix<T>| -> Vec<T> {
                (0..c)
                    .map(|p| (a.column(p) - b.column(p)).norm_squared())
                    .collect()
            };
            let mut rows = vec![Vec::new(); marks.len()];
            let mut fill = |n: usize, a: &DMatrix<T>, b: &DMatrix<T>| {
                for (i, &m) in marks.iter().enumerate() {
                    if m == n {
                        rows[i] = gap_now(a, b);
                    }
                }
            };
            fill(0, &a, &b);
            for n in 0..horizon {
                step(pre + n, &mut e);
                sa.advance(&mut a, &mut fa, Some(&e));
                sb.advance(&mut b, &mut fb, Some(&e));
                fill(n + 1, &a, &b);
            }
            Ok(rows)
        })
        .collect();
    let mut samples = vec![Vec::with_capacity(n_paths); marks.len()];
    for batch in per_batch {
        for (i, row) in batch?.into_iter().enumerate() {
            samples[i].extend(row);
        }
    }
    Ok(checkpoints
        .iter()
        .zip(samples)
        .map(|(&t, s)| {
            let (mean, se) = mean_and_stderr(&s);
            GapEstimate {
                t,
                gap: mean,
                stderr: se,
            }
        })
        .collect())
}

pub(crate) fn mean_and_stderr<T: Real>(xs: &[T]) -> (T, T) {
    let n = from_usize::<T>(xs.len());
    let mean = xs.iter().fold(T::zero(), |a, &b| a + b) / n;
    if xs.len() < 2 {
        return (mean, T::zero());
    }
    let var = xs
        .iter()
        .fold(T::zero(), |a, &b| a + (b - mean) * (b - mean))
        / (n - T::one());
    (mean, (var / n).sqrt())
}
