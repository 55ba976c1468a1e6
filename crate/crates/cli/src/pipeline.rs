//! Stage orchestration shared by the subcommands.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use gle_kit::resolvent::default_burn_in;
use gle_kit::{
    check_spectral_condition, check_transposed_identity, chi_of, default_omega_grid,
    design_force_for_target, equipartition_check, estimate_autocorrelation, factorize_spectrum,
    fdr_residual, integrate_ivp, integrate_stationary, paley_wiener_check, solve_lyapunov_g,
    solve_resolvent, stats, symmetric_lags, theoretical_cov_ivp, theoretical_cov_stationary,
    verify_design, CorrelationTable64, CovarianceSpec, CovarianceSpec64, ForceModel, ForceModel64,
    FrequencyGrid, InitialLaw, Kappa, MemoryKernel, MemoryKernel64, Resolvent64, SimulationOptions,
    SymmetricTable, TargetAutocorrelation, TrajectoryEnsemble64,
};
use nalgebra::DMatrix;
use serde::Serialize;

use crate::config::{ForceConfig, Initial, KernelConfig, Mode, RunConfig, SCHEMA_VERSION};
use crate::csvio::{read_table, uniform_spacing, write_table};

/// Tabulated kernels whose last value exceeds this fraction of `|gamma(0)|`
/// trigger a truncation warning.
const TAIL_WARNING: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Resolvent,
    FdrSolve,
    FdrCheck,
    Simulate,
    Verify,
    Run,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Resolvent => "resolvent",
            Command::FdrSolve => "fdr-solve",
            Command::FdrCheck => "fdr-check",
            Command::Simulate => "simulate",
            Command::Verify => "verify",
            Command::Run => "run",
        }
    }

    pub fn report_file(self) -> String {
        match self {
            Command::Run => "report.json".into(),
            c => format!("{}_report.json", c.name().replace('-', "_")),
        }
    }
}

/// A stage that could not complete.
#[derive(Debug, Clone, PartialEq)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.message)
    }
}

impl std::error::Error for StageError {}

#[derive(Clone, Copy)]
struct Tag(&'static str);

impl Tag {
    fn of(self, e: impl fmt::Display) -> StageError {
        StageError {
            stage: self.0,
            message: e.to_string(),
        }
    }
}

type Matrix = Vec<Vec<f64>>;

fn rows(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectralSummary {
    pub feasible: bool,
    pub min_eigenvalue: f64,
    pub argmin_omega: f64,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FactorizationSummary {
    pub n_omega: usize,
    pub vainikko_margin: f64,
    pub clipped: f64,
    pub imag_residue: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ForceSummary {
    pub g: Matrix,
    pub kappa: String,
    pub phi_half_width: f64,
    pub fdr_residual: f64,
    pub fdr_tolerance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResolventSummary {
    pub dt: f64,
    pub horizon: f64,
    pub l1_norm: f64,
    pub tail_l1_second_half: f64,
    pub extrapolated_tail: Option<f64>,
    pub transposed_identity_residual: f64,
    pub default_burn_in: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PaleyWienerSummary {
    pub tier1_passed: Option<bool>,
    pub tier1_value: Option<f64>,
    pub tier2_min_singular: f64,
    pub tier2_threshold: f64,
    pub verdict: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulationSummary {
    pub mode: String,
    pub paths: usize,
    pub steps: usize,
    pub dt: f64,
    pub burn_in: f64,
    pub seed: u64,
    pub record_every: usize,
    pub initial: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationSummary {
    pub lags: Vec<f64>,
    pub t_ref: Option<f64>,
    pub estimate: Vec<Matrix>,
    pub stderr: Vec<Matrix>,
    pub theory: Vec<Matrix>,
    pub z: Vec<Matrix>,
    pub max_abs_z: f64,
    pub z_threshold: f64,
    pub tail_bound: Option<f64>,
    /// Estimated `C(0)` when lag 0 is among the lags.
    pub variance: Option<Matrix>,
    pub equipartition: Option<EquipartitionSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquipartitionSummary {
    pub beta_m: f64,
    pub deviation: f64,
    pub max_abs_z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct DesignSummary {
    pub identity_residual: f64,
    pub clipped: f64,
    pub smoothness_ok: bool,
    pub mismatch: f64,
    pub tolerance: f64,
    pub tail_bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub schema_version: u64,
    pub command: String,
    /// Seconds since the Unix epoch; the only field that varies between identical runs.
    pub timestamp: u64,
    pub warnings: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spectral_condition: Option<SpectralSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub factorization: Option<FactorizationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub force: Option<ForceSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resolvent: Option<ResolventSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub paley_wiener: Option<PaleyWienerSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSummary>,
    pub checks: BTreeMap<String, bool>,
    pub passed: bool,
}

impl Report {
    fn new(command: &str) -> Self {
        let timestamp = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map_or(0, |d| d.as_secs());
        Report {
            schema_version: SCHEMA_VERSION,
            command: command.into(),
            timestamp,
            warnings: Vec::new(),
            spectral_condition: None,
            factorization: None,
            force: None,
            resolvent: None,
            paley_wiener: None,
            simulation: None,
            verification: None,
            design: None,
            checks: BTreeMap::new(),
            passed: true,
        }
    }

    fn check(&mut self, name: &str, ok: bool) {
        self.checks.insert(name.into(), ok);
        self.passed &= ok;
    }

    pub fn write(&self, path: &Path) -> std::io::Result<()> {
        let text = serde_json::to_string_pretty(self).expect("report serializes");
        std::fs::write(path, text + "\n")
    }
}

pub fn build_kernel(cfg: &RunConfig, report: &mut Report) -> Result<MemoryKernel64, StageError> {
    let err = Tag("kernel");
    match &cfg.kernel {
        KernelConfig::Prony(terms) => {
            MemoryKernel::prony(cfg.dim, terms.clone()).map_err(|e| err.of(e))
        }
        KernelConfig::Tabulated { dt, values } => {
            tabulated(cfg.dim, *dt, values.clone(), report).map_err(|e| err.of(e))
        }
        KernelConfig::TabulatedFile { file } => {
            let (times, values) = read_table(file).map_err(|e| err.of(e))?;
            let dt = uniform_spacing(&times).map_err(|e| err.of(e))?;
            if times[0].abs() > 1e-9 * dt {
                return Err(err.of(format!(
                    "{}: tabulated kernel must start at t = 0",
                    file.display()
                )));
            }
            tabulated(cfg.dim, dt, values, report).map_err(|e| err.of(e))
        }
    }
}

fn tabulated(
    dim: usize,
    dt: f64,
    values: Vec<DMatrix<f64>>,
    report: &mut Report,
) -> gle_kit::Result<MemoryKernel64> {
    let k = MemoryKernel::tabulated(dim, dt, values)?;
    if let Some(ratio) = k.tabulated_tail_ratio() {
        if ratio > TAIL_WARNING {
            let msg = format!(
                "tabulated kernel ends at {ratio:.2e} of its initial value and is treated as zero beyond its grid"
            );
            eprintln!("warning: {msg}");
            report.warnings.push(msg);
        }
    }
    Ok(k)
}

fn covariance(cfg: &RunConfig) -> Result<CovarianceSpec64, StageError> {
    let cov = CovarianceSpec::new(cfg.sigma.clone()).map_err(|e| Tag("sigma").of(e))?;
    Ok(match cfg.beta_m {
        Some(b) => cov.with_beta_m(b),
        None => cov,
    })
}

fn read_phi(file: &Path) -> Result<SymmetricTable<f64>, StageError> {
    let err = Tag("force");
    let (times, values) = read_table(file).map_err(|e| err.of(e))?;
    let dt = uniform_spacing(&times).map_err(|e| err.of(e))?;
    let k = times.len() / 2;
    if times.len() % 2 == 0 || times[k].abs() > 1e-9 * dt {
        return Err(err.of(format!(
            "{}: phi must be tabulated on a grid symmetric about t = 0",
            file.display()
        )));
    }
    SymmetricTable::new(dt, values).map_err(|e| err.of(e))
}

/// Everything the stages share.
pub struct Pipeline<'a> {
    pub cfg: &'a RunConfig,
    pub out_dir: PathBuf,
    pub report: Report,
    kernel: MemoryKernel64,
    cov: CovarianceSpec64,
}

impl<'a> Pipeline<'a> {
    pub fn new(cfg: &'a RunConfig, out_dir: &Path, command: &str) -> Result<Self, StageError> {
        let mut report = Report::new(command);
        let kernel = build_kernel(cfg, &mut report)?;
        let cov = covariance(cfg)?;
        std::fs::create_dir_all(out_dir).map_err(|e| Tag("output").of(e))?;
        Ok(Self {
            cfg,
            out_dir: out_dir.to_path_buf(),
            report,
            kernel,
            cov,
        })
    }

    fn out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn resolvent(&mut self) -> Result<Resolvent64, StageError> {
        let err = Tag("resolvent");
        let g = &self.cfg.grid;
        let res = solve_resolvent(&self.cfg.drift, &self.kernel, g.dt, g.horizon)
            .map_err(|e| err.of(e))?;
        let residual = check_transposed_identity(&res, &self.kernel).map_err(|e| err.of(e))?;
        self.report.resolvent = Some(ResolventSummary {
            dt: res.dt(),
            horizon: res.horizon(),
            l1_norm: res.total_l1(),
            tail_l1_second_half: res.tail_l1(res.horizon() / 2.0),
            extrapolated_tail: res.extrapolated_tail(),
            transposed_identity_residual: residual,
            default_burn_in: default_burn_in(&res),
        });
        let pw = paley_wiener_check(
            &self.cfg.drift,
            &self.kernel,
            &default_omega_grid(g.dt),
            Some(&self.cov),
        )
        .map_err(|e| err.of(e))?;
        self.report.paley_wiener = Some(PaleyWienerSummary {
            tier1_passed: pw.tier1.map(|t| t.0),
            tier1_value: pw.tier1.map(|t| t.1),
            tier2_min_singular: pw.tier2_min_singular,
            tier2_threshold: pw.tier2_threshold,
            verdict: pw.verdict,
        });
        if self.cfg.outputs.resolvent {
            let times: Vec<f64> = (0..res.len()).map(|n| res.time(n)).collect();
            write_table(
                &self.out("resolvent.csv"),
                "t",
                &times,
                &[("r", res.values()), ("dr", res.derivs())],
            )
            .map_err(|e| err.of(e))?;
        }
        Ok(res)
    }

    pub fn force(&mut self) -> Result<ForceModel64, StageError> {
        let err = Tag("fdr-solve");
        let dt = self.cfg.grid.dt;
        let cond = check_spectral_condition(
            &self.cfg.drift,
            &self.cov,
            &self.kernel,
            &default_omega_grid(dt),
        )
        .map_err(|e| err.of(e))?;
        self.report.spectral_condition = Some(SpectralSummary {
            feasible: cond.feasible,
            min_eigenvalue: cond.min_eig,
            argmin_omega: cond.argmin,
            tolerance: cond.tolerance,
        });
        let model = match &self.cfg.force {
            ForceConfig::AutoFdr { t_phi } => {
                if !cond.feasible {
                    return Err(err.of(format!(
                        "infeasible: gamma_Sigma_hat + D Sigma + Sigma D^T has eigenvalue {:.6e} at omega = {:.6}",
                        cond.min_eig, cond.argmin
                    )));
                }
                let g0 = self.kernel.at_zero() * &self.cfg.sigma;
                let asym = (&g0 - g0.transpose()).abs().max();
                if asym > 1e-12 * g0.abs().max().max(1.0) {
                    let msg = format!(
                        "gamma(0) Sigma is not symmetric (asymmetry {asym:.2e}); the inverse transform of the \
                         factorization converges more slowly and phi may need a longer t_phi"
                    );
                    eprintln!("warning: {msg}");
                    self.report.warnings.push(msg);
                }
                let g = solve_lyapunov_g(&self.cfg.drift, &self.cov).map_err(|e| err.of(e))?;
                let grid = match self.cfg.grid.n_omega {
                    Some(n) => FrequencyGrid::new(n, std::f64::consts::PI / dt),
                    None => FrequencyGrid::from_time_grid(dt, 2.0 * t_phi),
                }
                .map_err(|e| err.of(e))?;
                let f =
                    factorize_spectrum(&self.cfg.drift, &self.cov, &self.kernel, &g, &grid, *t_phi)
                        .map_err(|e| err.of(e))?;
                self.report.factorization = Some(FactorizationSummary {
                    n_omega: grid.len(),
                    vainikko_margin: f.vainikko_margin,
                    clipped: f.clipped,
                    imag_residue: f.imag_residue,
                });
                self.report
                    .check("vainikko_bound", f.vainikko_margin >= 0.0);
                if self.cfg.outputs.phi_hat {
                    let mags: Vec<DMatrix<f64>> =
                        f.phi_hat.iter().map(|m| m.map(|z| z.norm())).collect();
                    write_table(
                        &self.out("phi_hat.csv"),
                        "omega",
                        &f.omegas,
                        &[("abs_phi_hat", &mags)],
                    )
                    .map_err(|e| err.of(e))?;
                }
                f.model
            }
            ForceConfig::Explicit { g, phi_file, kappa } => match phi_file {
                Some(file) => {
                    ForceModel::new(g.clone(), read_phi(file)?, *kappa).map_err(|e| err.of(e))?
                }
                None => ForceModel::white(g.clone(), dt)
                    .map_err(|e| err.of(e))?
                    .with_kappa(*kappa),
            },
        };
        let half = (2.0 * model.phi().half_width()).max(10.0);
        let residual = fdr_residual(&model, &self.kernel, &self.cov, &symmetric_lags(dt, half))
            .map_err(|e| err.of(e))?;
        let gg = model.g() * model.g().transpose();
        let sym = &self.cfg.drift * &self.cfg.sigma + &self.cfg.sigma * self.cfg.drift.transpose();
        let white_gap = (gg - sym).abs().max();
        let tol = self.cfg.verify.fdr_tolerance;
        self.report.force = Some(ForceSummary {
            g: rows(model.g()),
            kappa: match model.kappa() {
                Kappa::Same => "same".into(),
                Kappa::Independent => "independent".into(),
            },
            phi_half_width: model.phi().half_width(),
            fdr_residual: residual.max(white_gap),
            fdr_tolerance: tol,
        });
        if self.cfg.verify.check_fdr {
            self.report.check("spectral_condition", cond.feasible);
            self.report
                .check("fdr_residual", residual.max(white_gap) <= tol);
        }
        if self.cfg.outputs.phi {
            let phi = model.phi();
            let times: Vec<f64> = (0..phi.values().len()).map(|i| phi.time(i)).collect();
            write_table(&self.out("phi.csv"), "t", &times, &[("phi", phi.values())])
                .map_err(|e| err.of(e))?;
        }
        Ok(model)
    }

    pub fn simulate(
        &mut self,
        res: &Resolvent64,
        model: &ForceModel64,
    ) -> Result<TrajectoryEnsemble64, StageError> {
        let err = Tag("simulate");
        let s = &self.cfg.simulation;
        let dt = self.cfg.grid.dt;
        let initial = match s.initial {
            Initial::Zero => InitialLaw::Zero,
            Initial::Sigma => InitialLaw::Gaussian(self.cov.clone()),
        };
        let opts = SimulationOptions {
            record_every: s.record_every,
            keep_noise: self.cfg.outputs.noise > 0,
            stationary_init: initial.clone(),
            ..Default::default()
        };
        let (ens, burn) = match s.mode {
            Mode::Stationary => {
                let burn_time = s.burn_in.unwrap_or_else(|| default_burn_in(res));
                let burn = (burn_time / dt).round() as usize;
                let ens = integrate_stationary(
                    &self.cfg.drift,
                    &self.kernel,
                    model,
                    dt,
                    s.steps,
                    s.paths,
                    burn,
                    s.seed,
                    &opts,
                )
                .map_err(|e| err.of(e))?;
                (ens, burn as f64 * dt)
            }
            Mode::Ivp => {
                let cov = match initial {
                    InitialLaw::Gaussian(c) => c,
                    InitialLaw::Zero => {
                        return Err(err.of("initial-value runs draw V(0) from Sigma; set simulation.initial to \"sigma\""))
                    }
                };
                let ens = integrate_ivp(
                    &self.cfg.drift,
                    &self.kernel,
                    model,
                    &cov,
                    dt,
                    s.steps,
                    s.paths,
                    s.seed,
                    &opts,
                )
                .map_err(|e| err.of(e))?;
                (ens, 0.0)
            }
        };
        self.dump(&ens).map_err(|e| err.of(e))?;
        self.report.simulation = Some(SimulationSummary {
            mode: match s.mode {
                Mode::Stationary => "stationary".into(),
                Mode::Ivp => "ivp".into(),
            },
            paths: s.paths,
            steps: s.steps,
            dt,
            burn_in: burn,
            seed: s.seed,
            record_every: s.record_every,
            initial: match s.initial {
                Initial::Zero => "zero".into(),
                Initial::Sigma => "sigma".into(),
            },
        });
        Ok(ens)
    }

    fn dump(&self, ens: &TrajectoryEnsemble64) -> Result<(), Box<dyn std::error::Error>> {
        let times = ens.times();
        let columns = |m: &DMatrix<f64>| -> Vec<DMatrix<f64>> {
            m.column_iter()
                .map(|c| DMatrix::from_iterator(m.nrows(), 1, c.iter().copied()))
                .collect()
        };
        for (p, path) in ens.paths.iter().take(self.cfg.outputs.paths).enumerate() {
            write_table(
                &self.out(&format!("path_{p:04}.csv")),
                "t",
                &times,
                &[("v", &columns(path))],
            )?;
        }
        if let Some(noise) = &ens.noise {
            for (p, rec) in noise.iter().take(self.cfg.outputs.noise).enumerate() {
                write_table(
                    &self.out(&format!("noise_{p:04}.csv")),
                    "t",
                    &times,
                    &[("f0", &columns(&rec.f0))],
                )?;
            }
        }
        Ok(())
    }

    pub fn estimate(
        &mut self,
        ens: &TrajectoryEnsemble64,
    ) -> Result<CorrelationTable64, StageError> {
        let err = Tag("simulate");
        let t_ref = match self.cfg.simulation.mode {
            Mode::Stationary => None,
            Mode::Ivp => self.cfg.verify.t_ref,
        };
        let c =
            estimate_autocorrelation(ens, &self.cfg.verify.lags, t_ref).map_err(|e| err.of(e))?;
        if self.cfg.outputs.autocorrelation {
            write_table(
                &self.out("autocorrelation.csv"),
                "lag",
                c.lags(),
                &[("estimate", c.values()), ("stderr", c.stderr().unwrap())],
            )
            .map_err(|e| err.of(e))?;
        }
        Ok(c)
    }

    pub fn verify(
        &mut self,
        res: &Resolvent64,
        model: &ForceModel64,
        ens: &TrajectoryEnsemble64,
        est: &CorrelationTable64,
    ) -> Result<(), StageError> {
        let err = Tag("verify");
        let v = &self.cfg.verify;
        let dt = self.cfg.grid.dt;
        let chi = chi_of(
            model,
            &symmetric_lags(dt, 2.0 * model.phi().half_width() + dt),
        )
        .map_err(|e| err.of(e))?;
        let (theory, tail) = match self.cfg.simulation.mode {
            Mode::Stationary => {
                let c = theoretical_cov_stationary(res, model.g(), &chi, &v.lags, v.tail_tolerance)
                    .map_err(|e| err.of(e))?;
                (c.values, Some(c.tail_bound))
            }
            Mode::Ivp => {
                let s = v.t_ref.expect("validated");
                let vals = v
                    .lags
                    .iter()
                    .map(|&t| {
                        theoretical_cov_ivp(res, &self.cov, model.g(), &chi, &self.kernel, s, t)
                    })
                    .collect::<gle_kit::Result<Vec<_>>>()
                    .map_err(|e| err.of(e))?;
                (vals, None)
            }
        };
        let se = est.stderr().unwrap();
        let z: Vec<DMatrix<f64>> = est
            .values()
            .iter()
            .zip(&theory)
            .zip(se)
            .map(|((e, t), s)| stats::z_scores(&(e - t), s))
            .collect();
        let max_z = z
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0f64, |a, &b| a.max(b.abs()));
        let variance = v
            .lags
            .iter()
            .position(|&t| t == 0.0)
            .map(|i| rows(&est.values()[i]));
        let equipartition = match (self.cfg.beta_m, self.cfg.simulation.mode) {
            (Some(b), Mode::Stationary) => {
                let eq = equipartition_check(ens, b).map_err(|e| err.of(e))?;
                self.report
                    .check("equipartition", eq.max_z <= v.z_threshold);
                Some(EquipartitionSummary {
                    beta_m: b,
                    deviation: eq.deviation,
                    max_abs_z: eq.max_z,
                })
            }
            _ => None,
        };
        self.report.check("covariance_z", max_z <= v.z_threshold);
        if self.cfg.outputs.autocorrelation {
            write_table(
                &self.out("autocorrelation.csv"),
                "lag",
                est.lags(),
                &[
                    ("theory", &theory),
                    ("estimate", est.values()),
                    ("stderr", se),
                    ("z", &z),
                ],
            )
            .map_err(|e| err.of(e))?;
        }
        self.report.verification = Some(VerificationSummary {
            lags: v.lags.clone(),
            t_ref: v.t_ref,
            estimate: est.values().iter().map(rows).collect(),
            stderr: se.iter().map(rows).collect(),
            theory: theory.iter().map(rows).collect(),
            z: z.iter().map(rows).collect(),
            max_abs_z: max_z,
            z_threshold: v.z_threshold,
            tail_bound: tail,
            variance,
            equipartition,
        });
        Ok(())
    }

    pub fn finish(self, command: Command) -> Result<Report, StageError> {
        self.report
            .write(&self.out(&command.report_file()))
            .map_err(|e| Tag("output").of(e))?;
        Ok(self.report)
    }
}

/// Run a subcommand; the report is written to `out_dir` on success.
pub fn execute(command: Command, cfg: &RunConfig, out_dir: &Path) -> Result<Report, StageError> {
    let mut p = Pipeline::new(cfg, out_dir, command.name())?;
    match command {
        Command::Resolvent => {
            p.resolvent()?;
        }
        Command::FdrSolve | Command::FdrCheck => {
            p.force()?;
        }
        Command::Simulate => {
            let res = p.resolvent()?;
            let model = p.force()?;
            let ens = p.simulate(&res, &model)?;
            p.estimate(&ens)?;
        }
        Command::Verify | Command::Run => {
            let res = p.resolvent()?;
            let model = p.force()?;
            if cfg.simulation.mode == Mode::Stationary {
                let pw = p.report.paley_wiener.as_ref().map_or(false, |x| x.verdict);
                p.report.check("paley_wiener", pw);
            }
            let ens = p.simulate(&res, &model)?;
            let est = p.estimate(&ens)?;
            p.verify(&res, &model, &ens, &est)?;
        }
    }
    p.finish(command)
}

/// Inverse design of a force for the target in `psi_file` with the kernel of
/// `cfg` (which must have zero drift).
pub fn design(
    cfg: &RunConfig,
    psi_file: &Path,
    out_dir: &Path,
    tolerance: f64,
) -> Result<Report, StageError> {
    let err = Tag("design");
    let mut p = Pipeline::new(cfg, out_dir, "design")?;
    if cfg.drift.iter().any(|&x| x != 0.0) {
        return Err(err.of("inverse design needs D = 0"));
    }
    let (times, values) = read_table(psi_file).map_err(|e| err.of(e))?;
    let dt = uniform_spacing(&times).map_err(|e| err.of(e))?;
    let target = if times[0].abs() <= 1e-9 * dt {
        TargetAutocorrelation::from_one_sided(dt, values)
    } else {
        SymmetricTable::new(dt, values).and_then(TargetAutocorrelation::new)
    }
    .map_err(|e| err.of(e))?;
    let half = target.psi().half_width();
    let grid = FrequencyGrid::from_time_grid(dt, 2.0 * half).map_err(|e| err.of(e))?;
    let d = design_force_for_target(&target, &p.kernel, &grid).map_err(|e| err.of(e))?;
    let lags: Vec<f64> = (0..=target.psi().half_len())
        .map(|k| k as f64 * dt)
        .collect();
    let check = verify_design(&d.model, &p.kernel, &target, &lags, cfg.grid.horizon)
        .map_err(|e| err.of(e))?;
    p.report.design = Some(DesignSummary {
        identity_residual: d.identity_residual,
        clipped: d.clipped,
        smoothness_ok: target.smoothness_ok,
        mismatch: check.mismatch,
        tolerance,
        tail_bound: check.tail_bound,
    });
    p.report
        .check("design_mismatch", check.mismatch <= tolerance);
    let phi = d.model.phi();
    let times: Vec<f64> = (0..phi.values().len()).map(|i| phi.time(i)).collect();
    write_table(&p.out("phi.csv"), "t", &times, &[("phi", phi.values())]).map_err(|e| err.of(e))?;
    p.report
        .write(&p.out("design_report.json"))
        .map_err(|e| Tag("output").of(e))?;
    Ok(p.report)
}
