//! Implicit trapezoidal stepping for linear Volterra integro-differential
//! systems `x' = -D x - int_0^t gamma(t - s) x(s) ds + forcing`.
//!
//! The state is a `d x c` block (the identity for the resolvent, a batch of
//! `c` sample paths for the simulator). The memory term uses trapezoidal
//! product integration; exponential-polynomial kernels are summed by an exact
//! recursion on auxiliary moments, other kernels by a direct (optionally
//! truncated) sum.

use std::collections::VecDeque;

use nalgebra::DMatrix;

use crate::error::{GleError, Result};
use crate::kernel::{KernelForm, MemoryKernel};
use crate::scalar::{from_usize, lit, Real};

/// Which side the kernel multiplies the state from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    /// `gamma(t - s) x(s)`
    Left,
    /// `x(s) gamma(t - s)`
    #[cfg_attr(not(test), allow(dead_code))]
    Right,
}

#[derive(Debug, Clone)]
struct PronyMoments<T: Real> {
    amplitude: DMatrix<T>,
    decay: T,
    /// `shift[j][i] = C(j, i) dt^(j - i)`
    shift: Vec<Vec<T>>,
    moments: Vec<DMatrix<T>>,
}

#[derive(Debug, Clone)]
enum History<T: Real> {
    Prony(Vec<PronyMoments<T>>),
    Direct {
        /// `gamma(k dt)` for `k = 0..samples.len()`
        samples: Vec<DMatrix<T>>,
        first: DMatrix<T>,
        recent: VecDeque<DMatrix<T>>,
    },
}

/// Memory sum `dt [ 1/2 gamma(t_{n+1}) x_0 + sum_{m=1}^{n} gamma(t_{n+1} - t_m) x_m ]`
/// maintained incrementally as states are pushed.
#[derive(Debug, Clone)]
pub(crate) struct MemorySum<T: Real> {
    dt: T,
    side: Side,
    history: History<T>,
    steps: usize,
}

fn binomial(n: u32, k: u32) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

impl<T: Real> MemorySum<T> {
    /// Builds the memory sum for `kernel` on step `dt`.
    ///
    /// `truncate` drops the history beyond the time where the kernel tail
    /// falls below `1e-8` of its total mass (direct sums only).
    pub(crate) fn new(
        kernel: &MemoryKernel<T>,
        dt: T,
        side: Side,
        force_direct: bool,
        truncate: bool,
    ) -> Self {
        let history = match kernel.form() {
            KernelForm::Prony(terms) if !force_direct => History::Prony(
                terms
                    .iter()
                    .map(|term| {
                        let p = term.degree;
                        let shift = (0..=p)
                            .map(|j| {
                                (0..=j)
                                    .map(|i| lit::<T>(binomial(j, i)) * dt.powi((j - i) as i32))
                                    .collect()
                            })
                            .collect();
                        PronyMoments {
                            amplitude: term.amplitude.clone(),
                            decay: (-term.rate * dt).exp(),
                            shift,
                            moments: Vec::new(),
                        }
                    })
                    .collect(),
            ),
            _ => {
                let d = kernel.dim();
                let len = memory_length(kernel, dt, truncate);
                History::Direct {
                    samples: (0..=len)
                        .map(|k| kernel.eval_or_zero(dt * from_usize::<T>(k)))
                        .collect(),
                    first: DMatrix::zeros(d, 0),
                    recent: VecDeque::new(),
                }
            }
        };
        Self {
            dt,
            side,
            history,
            steps: 0,
        }
    }

    fn apply(
        &self,
        kernel_matrix: &DMatrix<T>,
        state: &DMatrix<T>,
        alpha: T,
        out: &mut DMatrix<T>,
    ) {
        match self.side {
            Side::Left => out.gemm(alpha, kernel_matrix, state, T::one()),
            Side::Right => out.gemm(alpha, state, kernel_matrix, T::one()),
        }
    }

    /// Registers the initial state `x_0`.
    pub(crate) fn start(&mut self, x0: &DMatrix<T>) {
        self.steps = 0;
        match &mut self.history {
            History::Prony(terms) => {
                for term in terms.iter_mut() {
                    let p = term.shift.len();
                    term.moments = (0..p)
                        .map(|j| {
                            if j == 0 {
                                x0 * lit::<T>(0.5)
                            } else {
                                DMatrix::zeros(x0.nrows(), x0.ncols())
                            }
                        })
                        .collect();
                }
            }
            History::Direct { first, recent, .. } => {
                *first = x0.clone();
                recent.clear();
            }
        }
    }

    /// Writes the memory sum for the next time node into `out` (overwriting it).
    pub(crate) fn next_sum(&self, out: &mut DMatrix<T>) {
        out.fill(T::zero());
        let dt = self.dt;
        match &self.history {
            History::Prony(terms) => {
                for term in terms {
                    let p = term.shift.len() - 1;
                    // sum_j C(p, j) dt^(p-j) S_j, times dt * exp(-lambda dt) * A
                    let mut combined = term.moments[p].clone();
                    for (j, s) in term.moments.iter().enumerate().take(p) {
                        add_scaled(&mut combined, term.shift[p][j], s);
                    }
                    self.apply(&term.amplitude, &combined, dt * term.decay, out);
                }
            }
            History::Direct {
                samples,
                first,
                recent,
            } => {
                let n1 = self.steps + 1;
                if n1 < samples.len() {
                    self.apply(&samples[n1], first, dt * lit::<T>(0.5), out);
                }
                // recent holds x_m for m = steps - recent.len() + 1 ..= steps
                for (offset, x) in recent.iter().rev().enumerate() {
                    let lag = offset + 1;
                    if lag >= samples.len() {
                        break;
                    }
                    self.apply(&samples[lag], x, dt, out);
                }
            }
        }
    }

    /// Appends the state of the next node.
    pub(crate) fn push(&mut self, x: &DMatrix<T>) {
        self.steps += 1;
        match &mut self.history {
            History::Prony(terms) => {
                for term in terms.iter_mut() {
                    let p = term.moments.len();
                    // S_j <- e^{-l dt} sum_{i<=j} C(j,i) dt^(j-i) S_i, highest j first
                    for j in (0..p).rev() {
                        let (lower, upper) = term.moments.split_at_mut(j);
                        let target = &mut upper[0];
                        for (i, s) in lower.iter().enumerate() {
                            add_scaled(target, term.shift[j][i], s);
                        }
                        *target *= term.decay;
                    }
                    term.moments[0] += x;
                }
            }
            History::Direct {
                samples, recent, ..
            } => {
                recent.push_back(x.clone());
                while recent.len() + 1 > samples.len() && !recent.is_empty() {
                    recent.pop_front();
                }
            }
        }
    }
}

/// Number of kernel samples needed on step `dt`.
fn memory_length<T: Real>(kernel: &MemoryKernel<T>, dt: T, truncate: bool) -> usize {
    let grid_end = match kernel.form() {
        KernelForm::Tabulated { dt: kdt, values } => Some(*kdt * from_usize::<T>(values.len() - 1)),
        KernelForm::Prony(_) => None,
    };
    let mut t_mem = grid_end;
    if truncate || t_mem.is_none() {
        let total = kernel.tail_l1(T::zero());
        if total > T::zero() {
            let target = lit::<T>(1e-8) * total;
            let mut t = dt;
            while kernel.tail_l1(t) >= target {
                t *= lit(2.0);
            }
            let (mut lo, mut hi) = (t * lit(0.5), t);
            for _ in 0..60 {
                let mid = (lo + hi) * lit(0.5);
                if kernel.tail_l1(mid) >= target {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            t_mem = Some(match t_mem {
                Some(end) => end.min(hi),
                None => hi,
            });
        } else {
            t_mem = Some(T::zero());
        }
    }
    (t_mem.unwrap() / dt).as_f64().ceil() as usize
}

/// Implicit trapezoidal stepper for `x' = -D x - (gamma * x) + forcing`.
#[derive(Debug, Clone)]
pub(crate) struct VolterraStepper<T: Real> {
    dt: T,
    drift: DMatrix<T>,
    gamma0: DMatrix<T>,
    step_inverse: DMatrix<T>,
    memory: MemorySum<T>,
    hist: DMatrix<T>,
    rhs: DMatrix<T>,
}

impl<T: Real> VolterraStepper<T> {
    pub(crate) fn new(
        drift: &DMatrix<T>,
        kernel: &MemoryKernel<T>,
        dt: T,
        truncate: bool,
    ) -> Result<Self> {
        Self::with_mode(drift, kernel, dt, truncate, false)
    }

    pub(crate) fn with_mode(
        drift: &DMatrix<T>,
        kernel: &MemoryKernel<T>,
        dt: T,
        truncate: bool,
        force_direct: bool,
    ) -> Result<Self> {
        let d = kernel.dim();
        if drift.shape() != (d, d) {
            return Err(GleError::Dimension(format!(
                "drift is {:?}, kernel dimension is {d}",
                drift.shape()
            )));
        }
        let gamma0 = kernel.at_zero();
        let half = dt * lit::<T>(0.5);
        let step = DMatrix::<T>::identity(d, d) + (drift + &gamma0 * half) * half;
        let step_inverse = step
            .clone()
            .try_inverse()
            .filter(|inv| inv.iter().all(|x| x.is_finite()))
            .ok_or(GleError::SingularStep { step: 0 })?;
        Ok(Self {
            dt,
            drift: drift.clone(),
            gamma0,
            step_inverse,
            memory: MemorySum::new(kernel, dt, Side::Left, force_direct, truncate),
            hist: DMatrix::zeros(d, 0),
            rhs: DMatrix::zeros(d, 0),
        })
    }

    /// Starts from `x0`; returns the initial right-hand side `-D x0`.
    pub(crate) fn start(&mut self, x0: &DMatrix<T>) -> DMatrix<T> {
        self.memory.start(x0);
        self.hist = DMatrix::zeros(x0.nrows(), x0.ncols());
        self.rhs = DMatrix::zeros(x0.nrows(), x0.ncols());
        -(&self.drift * x0)
    }

    /// Advances `(x, f)` by one step in place, adding `forcing` (already
    /// integrated over the step) to the update.
    pub(crate) fn advance(
        &mut self,
        x: &mut DMatrix<T>,
        f: &mut DMatrix<T>,
        forcing: Option<&DMatrix<T>>,
    ) {
        let half = self.dt * lit::<T>(0.5);
        self.memory.next_sum(&mut self.hist);
        self.rhs.copy_from(x);
        add_scaled(&mut self.rhs, half, f);
        add_scaled(&mut self.rhs, -half, &self.hist);
        if let Some(e) = forcing {
            self.rhs += e;
        }
        x.gemm(T::one(), &self.step_inverse, &self.rhs, T::zero());
        // f = -D x - hist - (dt/2) gamma(0) x
        f.copy_from(&self.hist);
        f.neg_mut();
        f.gemm(-T::one(), &self.drift, x, T::one());
        f.gemm(-half, &self.gamma0, x, T::one());
        self.memory.push(x);
    }
}

/// `acc += c * x`.
fn add_scaled<T: Real>(acc: &mut DMatrix<T>, c: T, x: &DMatrix<T>) {
    acc.zip_apply(x, |a, b| *a += c * b);
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::PronyTerm;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn run(kernel: &MemoryKernel<f64>, direct: bool) -> Vec<DMatrix<f64>> {
        let drift = dmatrix![0.3, 0.1; -0.2, 0.4];
        let mut stepper = VolterraStepper::with_mode(&drift, kernel, 0.05, false, direct).unwrap();
        let mut x = dmatrix![1.0, 0.5; 0.0, -1.0];
        let mut f = stepper.start(&x);
        let mut out = vec![x.clone()];
        for n in 0..200 {
            let forcing = DMatrix::from_element(2, 2, (n as f64 * 0.1).sin() * 0.01);
            stepper.advance(&mut x, &mut f, Some(&forcing));
            out.push(x.clone());
        }
        out
    }

    #[test]
    fn moment_recursion_matches_direct_sum() {
        let kernel = MemoryKernel::prony(
            2,
            vec![
                PronyTerm::new(dmatrix![1.0, 0.2; 0.0, 0.5], 1.0, 0),
                PronyTerm::new(dmatrix![0.3, 0.0; 0.1, 2.0], 0.7, 2),
                PronyTerm::new(dmatrix![4.0, 0.0; 0.0, 4.0], 1.5, 1),
            ],
        )
        .unwrap();
        let a = run(&kernel, false);
        let b = run(&kernel, true);
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x.clone(), y.clone(), epsilon = 1e-10, max_relative = 1e-10);
        }
    }

    #[test]
    fn right_side_sum_matches_left_for_commuting_data() {
        let kernel = MemoryKernel::prony(1, vec![PronyTerm::scalar(2.0, 1.0, 1)]).unwrap();
        let mut left = MemorySum::new(&kernel, 0.1, Side::Left, false, false);
        let mut right = MemorySum::new(&kernel, 0.1, Side::Right, false, false);
        let x0 = dmatrix![1.0];
        left.start(&x0);
        right.start(&x0);
        let (mut a, mut b) = (DMatrix::zeros(1, 1), DMatrix::zeros(1, 1));
        for n in 0..50 {
            left.next_sum(&mut a);
            right.next_sum(&mut b);
            assert_relative_eq!(a[(0, 0)], b[(0, 0)], epsilon = 1e-14);
            let x = dmatrix![(n as f64).cos()];
            left.push(&x);
            right.push(&x);
        }
    }
}
