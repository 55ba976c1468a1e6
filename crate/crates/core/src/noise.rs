//! Sample paths of the fluctuating force `F = F0 + G dW/dt`.
//!
//! `F0(t_n) = sum_m phi(t_n - t_m) dW~_m` is a left-point Riemann sum over
//! Brownian increments, evaluated by FFT convolution. Increments are drawn on
//! `[-pre_roll, n_steps + K)` with `K dt` the support of `phi`, so that the
//! two-sided density sees its whole window at every output time.

use std::sync::Arc;

use nalgebra::{Complex, DMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::Fft;

use crate::error::{GleError, Result};
use crate::fdt::{chi_table, ForceModel, Kappa};
use crate::fourier::planner_fft;
use crate::scalar::{from_usize, lit, Real};
use crate::table::{CorrelationTable, SymmetricTable};

/// Sub-streams of one `(seed, stream_id)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Purpose {
    White = 0,
    Colored = 1,
    Initial = 2,
}

/// Deterministic generator for the given seed, path and purpose.
pub(crate) fn stream_rng(seed: u64, stream_id: u64, purpose: Purpose) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_id.wrapping_mul(4).wrapping_add(purpose as u64));
    rng
}

pub(crate) fn standard_normal<T: Real>(rng: &mut ChaCha8Rng) -> T {
    lit::<T>(rng.sample::<f64, _>(StandardNormal))
}

/// One draw of the force on the simulation window `n = 0..n_steps`.
///
/// Column `n` of `d_w` is the increment of `W` over `[t_n, t_{n+1}]`, column
/// `n` of `f0` is `F0(t_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseRealization<T: Real> {
    pub dt: T,
    pub d_w: DMatrix<T>,
    d_w_tilde: Option<DMatrix<T>>,
    pub f0: DMatrix<T>,
    pub seed: u64,
    pub stream_id: u64,
}

impl<T: Real> NoiseRealization<T> {
    /// Increments of `W~`; the same matrix as [`Self::d_w`] when `kappa = same`.
    pub fn d_w_tilde(&self) -> &DMatrix<T> {
        self.d_w_tilde.as_ref().unwrap_or(&self.d_w)
    }

    pub fn n_steps(&self) -> usize {
        self.d_w.ncols()
    }

    pub fn dim(&self) -> usize {
        self.d_w.nrows()
    }

    /// The first `n` steps.
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.min(self.n_steps());
        Self {
            dt: self.dt,
            d_w: self.d_w.columns(0, n).into_owned(),
            d_w_tilde: self
                .d_w_tilde
                .as_ref()
                .map(|m| m.columns(0, n).into_owned()),
            f0: self.f0.columns(0, n).into_owned(),
            seed: self.seed,
            stream_id: self.stream_id,
        }
    }

    /// Per-step forcing `F0(t_n) dt + G dW_n`, column-wise.
    pub fn step_forcing(&self, g: &DMatrix<T>) -> DMatrix<T> {
        &self.f0 * self.dt + g * &self.d_w
    }
}

/// Precomputed FFT convolution for repeated draws on a fixed grid.
pub struct ForceSynthesizer<T: Real> {
    dim: usize,
    dt: T,
    n_steps: usize,
    pre_roll: usize,
    support: usize,
    kappa: Kappa,
    colored: bool,
    fft_len: usize,
    /// `phi_hat[a][b]`: transform of the `(a, b)` entry.
    phi_hat: Vec<Vec<Vec<Complex<T>>>>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Real> ForceSynthesizer<T> {
    /// `pre_roll = None` uses the support `K` of `phi`.
    pub fn new(
        model: &ForceModel<T>,
        dt: T,
        n_steps: usize,
        pre_roll: Option<usize>,
    ) -> Result<Self> {
        if !(dt > T::zero()) {
            return Err(GleError::Config("dt must be positive".into()));
        }
        let phi = resample_phi(model.phi(), dt);
        let colored = phi.max_abs() > T::zero();
        let support = if colored { phi.half_len() } else { 0 };
        let pre_roll = pre_roll.unwrap_or(support);
        if pre_roll < support {
            return Err(GleError::Config(format!(
                "pre_roll of {pre_roll} steps is shorter than the support of phi ({support} steps)"
            )));
        }
        let dim = model.dim();
        let len = pre_roll + n_steps + support;
        let fft_len = (len + 2 * support).next_power_of_two().max(2);
        let fwd = planner_fft::<T>(fft_len, false);
        let inv = planner_fft::<T>(fft_len, true);
        let zero = Complex::new(T::zero(), T::zero());
        let mut phi_hat = vec![vec![Vec::new(); dim]; dim];
        if colored {
            for (a, row) in phi_hat.iter_mut().enumerate() {
                for (b, slot) in row.iter_mut().enumerate() {
                    let mut buf = vec![zero; fft_len];
                    for (i, m) in phi.values().iter().enumerate() {
                        buf[i] = Complex::new(m[(a, b)], T::zero());
                    }
                    fwd.process(&mut buf);
                    *slot = buf;
                }
            }
        }
        Ok(Self {
            dim,
            dt,
            n_steps,
            pre_roll,
            support,
            kappa: model.kappa(),
            colored,
            fft_len,
            phi_hat,
            fwd,
            inv,
        })
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn pre_roll(&self) -> usize {
        self.pre_roll
    }

    /// Draws the realization for path `stream_id`.
    pub fn generate(&self, seed: u64, stream_id: u64) -> NoiseRealization<T> {
        let len = self.pre_roll + self.n_steps + self.support;
        let sqrt_dt = self.dt.sqrt();
        let draw = |purpose| {
            let mut rng = stream_rng(seed, stream_id, purpose);
            let mut m = DMatrix::<T>::zeros(self.dim, len);
            for col in 0..len {
                for row in 0..self.dim {
                    m[(row, col)] = standard_normal::<T>(&mut rng) * sqrt_dt;
                }
            }
            m
        };
        let white = draw(Purpose::White);
        let colored_src = match self.kappa {
            Kappa::Same => None,
            Kappa::Independent if self.colored => Some(draw(Purpose::Colored)),
            Kappa::Independent => None,
        };
        let window = self.pre_roll..self.pre_roll + self.n_steps;
        let d_w = white.columns(window.start, self.n_steps).into_owned();
        let mut f0 = DMatrix::<T>::zeros(self.dim, self.n_steps);
        if self.colored {
            let src = colored_src.as_ref().unwrap_or(&white);
            self.convolve(src, &mut f0);
        }
        let d_w_tilde = colored_src.map(|m| m.columns(window.start, self.n_steps).into_owned());
        NoiseRealization {
            dt: self.dt,
            d_w,
            d_w_tilde,
            f0,
            seed,
            stream_id,
        }
    }

    fn convolve(&self, src: &DMatrix<T>, out: &mut DMatrix<T>) {
        let zero = Complex::new(T::zero(), T::zero());
        let spectra: Vec<Vec<Complex<T>>> = (0..self.dim)
            .map(|b| {
                let mut buf = vec![zero; self.fft_len];
                for (i, slot) in buf.iter_mut().take(src.ncols()).enumerate() {
                    *slot = Complex::new(src[(b, i)], T::zero());
                }
                self.fwd.process(&mut buf);
                buf
            })
            .collect();
        let scale = T::one() / from_usize::<T>(self.fft_len);
        let offset = self.pre_roll + self.support;
        let mut acc = vec![zero; self.fft_len];
        for a in 0..self.dim {
            acc.iter_mut().for_each(|z| *z = zero);
            for (b, x) in spectra.iter().enumerate() {
                for ((z, p), s) in acc.iter_mut().zip(&self.phi_hat[a][b]).zip(x) {
                    *z += *p * *s;
                }
            }
            self.inv.process(&mut acc);
            for n in 0..self.n_steps {
                out[(a, n)] = acc[n + offset].re * scale;
            }
        }
    }
}

fn resample_phi<T: Real>(phi: &SymmetricTable<T>, dt: T) -> SymmetricTable<T> {
    if phi.half_len() == 0 && phi.max_abs() == T::zero() {
        let (r, c) = phi.shape();
        return SymmetricTable::zeros(dt, 0, r, c);
    }
    phi.resample(dt)
}

/// Draws one force realization on `n = 0..n_steps`; deterministic in
/// `(seed, stream_id)`.
pub fn sample_force<T: Real>(
    model: &ForceModel<T>,
    dt: T,
    n_steps: usize,
    pre_roll: usize,
    seed: u64,
    stream_id: u64,
) -> Result<NoiseRealization<T>> {
    Ok(ForceSynthesizer::new(model, dt, n_steps, Some(pre_roll))?.generate(seed, stream_id))
}

/// Correlation of the force split into its parts:
/// `E F(s+t) F(s)^T = colored(t) + cross(t) + white delta(t)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForceCorrelation<T: Real> {
    /// `C_F0 = phi * phi_rev^T`.
    pub colored: CorrelationTable<T>,
    /// `phi(t) G^T + G phi(-t)^T` when `kappa = same`, zero otherwise.
    pub cross: CorrelationTable<T>,
    /// Weight `G G^T` of the delta at the origin.
    pub white: DMatrix<T>,
}

pub fn force_autocorrelation_theory<T: Real>(
    model: &ForceModel<T>,
    lags: &[T],
) -> Result<ForceCorrelation<T>> {
    let colored_model = model.with_kappa(Kappa::Independent);
    let colored = chi_table(&colored_model);
    let full = chi_table(model);
    let c: Vec<DMatrix<T>> = lags.iter().map(|&t| colored.eval(t)).collect();
    let x: Vec<DMatrix<T>> = lags
        .iter()
        .zip(&c)
        .map(|(&t, c)| full.eval(t) - c)
        .collect();
    Ok(ForceCorrelation {
        colored: CorrelationTable::theoretical(lags.to_vec(), c)?,
        cross: CorrelationTable::theoretical(lags.to_vec(), x)?,
        white: model.g() * model.g().transpose(),
    })
}
