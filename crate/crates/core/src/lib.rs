//! Simulation and verification toolkit for the generalized Langevin equation
//! `V' = -D V - gamma * V + F` with a colored fluctuating force.
//!
//! Everything is generic over the float type through [`Real`]; the `*64`
//! and `*32` aliases fix it.

pub mod design;
pub mod error;
pub mod fdt;
pub mod fourier;
pub mod kernel;
pub mod linalg;
pub mod noise;
pub mod resolvent;
pub mod scalar;
pub mod simulate;
pub mod stats;
pub mod table;
mod volterra;

pub use design::{
    design_force_for_target, verify_design, Design, DesignCheck, TargetAutocorrelation,
};
pub use error::{GleError, Result};
pub use fdt::{
    check_spectral_condition, chi_of, chi_table, factorize_spectrum, fdr_residual,
    solve_lyapunov_g, spectral_factorize_phi, symmetric_lags, Factorization, ForceModel, Kappa,
    SpectralCondition,
};
pub use fourier::FrequencyGrid;
pub use kernel::{CovarianceSpec, KernelForm, MemoryKernel, PronyTerm};
pub use noise::{
    force_autocorrelation_theory, sample_force, ForceCorrelation, ForceSynthesizer,
    NoiseRealization,
};
pub use resolvent::{
    check_transposed_identity, default_burn_in, paley_wiener_check, solve_resolvent,
    PaleyWienerReport, Resolvent,
};
pub use scalar::Real;
pub use simulate::{
    convergence_to_stationary, default_omega_grid, integrate_ivp, integrate_stationary,
    pathwise_reconstruct, GapEstimate, InitialLaw, NoiseRecord, SimulationMode, SimulationOptions,
    TrajectoryEnsemble,
};
pub use stats::{
    cross_correlation_limits_at_zero, cross_correlation_theory, equipartition_check,
    estimate_autocorrelation, estimate_cross_correlation, kubo_cross_correlation,
    theoretical_cov_ivp, theoretical_cov_stationary, theoretical_cov_stationary_alt,
    window_stationarity_test, EquipartitionReport, StationaryCovariance, WindowComparison,
};
pub use table::{CorrelationTable, SymmetricTable, TableKind};

pub type MemoryKernel64 = MemoryKernel<f64>;
pub type MemoryKernel32 = MemoryKernel<f32>;
pub type CovarianceSpec64 = CovarianceSpec<f64>;
pub type CovarianceSpec32 = CovarianceSpec<f32>;
pub type ForceModel64 = ForceModel<f64>;
pub type ForceModel32 = ForceModel<f32>;
pub type Resolvent64 = Resolvent<f64>;
pub type Resolvent32 = Resolvent<f32>;
pub type TrajectoryEnsemble64 = TrajectoryEnsemble<f64>;
pub type TrajectoryEnsemble32 = TrajectoryEnsemble<f32>;
pub type CorrelationTable64 = CorrelationTable<f64>;
pub type CorrelationTable32 = CorrelationTable<f32>;
