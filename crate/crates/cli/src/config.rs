//! Run configuration: JSON parsing and validation with JSON-pointer paths.

use std::fmt;
use std::path::{Path, PathBuf};

use gle_kit::{Kappa, PronyTerm};
use nalgebra::DMatrix;
use serde_json::{Map, Value};

pub const SCHEMA_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    /// An empty term list is the zero kernel.
    Prony(Vec<PronyTerm<f64>>),
    /// Samples `gamma(k dt)`, `k >= 0`.
    Tabulated { dt: f64, values: Vec<DMatrix<f64>> },
    /// The same samples read from a CSV file.
    TabulatedFile { file: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub enum ForceConfig {
    /// Lyapunov root for `G` and spectral factorization for `phi`, truncated to `[-t_phi, t_phi]`.
    AutoFdr { t_phi: f64 },
    /// Given `G`; `phi` from a CSV file or absent (white noise only).
    Explicit {
        g: DMatrix<f64>,
        phi_file: Option<PathBuf>,
        kappa: Kappa,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Ivp,
    Stationary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Initial {
    Zero,
    Sigma,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub dt: f64,
    /// Resolvent horizon.
    pub horizon: f64,
    /// Size of the factorization grid; defaults to covering `[-2 t_phi, 2 t_phi]`.
    pub n_omega: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub paths: usize,
    pub steps: usize,
    /// Burn-in time; `None` picks it from the resolvent decay.
    pub burn_in: Option<f64>,
    pub seed: u64,
    pub record_every: usize,
    pub initial: Initial,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub lags: Vec<f64>,
    /// Reference time for initial-value runs.
    pub t_ref: Option<f64>,
    pub z_threshold: f64,
    pub fdr_tolerance: f64,
    pub check_fdr: bool,
    pub tail_tolerance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub resolvent: bool,
    pub phi: bool,
    /// `|phi_hat(omega)|` from the factorization.
    pub phi_hat: bool,
    pub autocorrelation: bool,
    /// Number of sample paths written to `path_NNNN.csv`.
    pub paths: usize,
    /// Number of `F0` samples written to `noise_NNNN.csv`.
    pub noise: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub dim: usize,
    pub drift: DMatrix<f64>,
    pub kernel: KernelConfig,
    pub sigma: DMatrix<f64>,
    pub beta_m: Option<f64>,
    pub force: ForceConfig,
    pub grid: GridConfig,
    pub simulation: SimulationConfig,
    pub verify: VerifyConfig,
    pub outputs: OutputConfig,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FieldError {
    pub path: String,
    pub message: String,
}

/// Every problem found in a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<FieldError>);

impl ConfigErrors {
    pub fn paths(&self) -> Vec<&str> {
        self.0.iter().map(|e| e.path.as_str()).collect()
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(
                f,
                "  {}: {}",
                if e.path.is_empty() { "/" } else { &e.path },
                e.message
            )?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

struct Checker<'a> {
    errors: Vec<FieldError>,
    base: &'a Path,
}

impl Checker<'_> {
    fn fail(&mut self, path: &str, message: impl Into<String>) {
        self.errors.push(FieldError {
            path: path.to_string(),
            message: message.into(),
        });
    }

    fn object<'v>(&mut self, v: &'v Value, path: &str) -> Option<&'v Map<String, Value>> {
        match v.as_object() {
            Some(m) => Some(m),
            None => {
                self.fail(path, "expected an object");
                None
            }
        }
    }

    fn required<'v>(
        &mut self,
        obj: &'v Map<String, Value>,
        key: &str,
        path: &str,
    ) -> Option<&'v Value> {
        let v = obj.get(key);
        if v.is_none() || v == Some(&Value::Null) {
            self.fail(&format!("{path}/{key}"), "required field is missing");
            return None;
        }
        v
    }

    fn number(&mut self, v: &Value, path: &str) -> Option<f64> {
        match v.as_f64() {
            Some(x) if x.is_finite() => Some(x),
            _ => {
                self.fail(path, "expected a finite number");
                None
            }
        }
    }

    fn positive(&mut self, v: &Value, path: &str) -> Option<f64> {
        let x = self.number(v, path)?;
        if x > 0.0 {
            Some(x)
        } else {
            self.fail(path, format!("must be positive, got {x}"));
            None
        }
    }

    fn count(&mut self, v: &Value, path: &str, min: u64) -> Option<usize> {
        match v.as_u64() {
            Some(n) if n >= min => Some(n as usize),
            _ => {
                self.fail(path, format!("expected an integer >= {min}"));
                None
            }
        }
    }

    fn boolean(&mut self, v: &Value, path: &str) -> Option<bool> {
        let b = v.as_bool();
        if b.is_none() {
            self.fail(path, "expected true or false");
        }
        b
    }

    fn matrix(&mut self, v: &Value, path: &str, dim: Option<usize>) -> Option<DMatrix<f64>> {
        let rows = match v.as_array() {
            Some(r) if !r.is_empty() => r,
            _ => {
                self.fail(path, "expected a non-empty array of rows");
                return None;
            }
        };
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        let mut ok = true;
        for (i, row) in rows.iter().enumerate() {
            match row.as_array() {
                Some(r) if r.len() == n => {
                    for (j, x) in r.iter().enumerate() {
                        match self.number(x, &format!("{path}/{i}/{j}")) {
                            Some(x) => data.push(x),
                            None => ok = false,
                        }
                    }
                }
                _ => {
                    self.fail(
                        &format!("{path}/{i}"),
                        format!("expected a row of {n} numbers (square matrix)"),
                    );
                    ok = false;
                }
            }
        }
        if !ok {
            return None;
        }
        if let Some(d) = dim {
            if d != n {
                self.fail(path, format!("expected a {d} x {d} matrix, got {n} x {n}"));
                return None;
            }
        }
        Some(DMatrix::from_row_slice(n, n, &data))
    }

    fn file(&mut self, v: &Value, path: &str) -> Option<PathBuf> {
        let s = match v.as_str() {
            Some(s) => s,
            None => {
                self.fail(path, "expected a file path");
                return None;
            }
        };
        let p = self.base.join(s);
        if !p.is_file() {
            self.fail(path, format!("file {} does not exist", p.display()));
            return None;
        }
        Some(p)
    }

    fn unknown_keys(&mut self, obj: &Map<String, Value>, allowed: &[&str], path: &str) {
        for k in obj.keys() {
            if !allowed.contains(&k.as_str()) {
                self.fail(&format!("{path}/{k}"), "unknown field");
            }
        }
    }
}

/// Parse and validate a configuration. Relative file names are resolved
/// against `base_dir`. Nothing is returned unless the whole document is valid.
pub fn validate_config(raw: &str, base_dir: &Path) -> Result<RunConfig, ConfigErrors> {
    let doc: Value = serde_json::from_str(raw).map_err(|e| {
        ConfigErrors(vec![FieldError {
            path: String::new(),
            message: format!("not valid JSON: {e}"),
        }])
    })?;
    let mut c = Checker {
        errors: Vec::new(),
        base: base_dir,
    };
    let Some(root) = c.object(&doc, "") else {
        return Err(ConfigErrors(c.errors));
    };
    c.unknown_keys(
        root,
        &[
            "schema_version",
            "dim",
            "drift",
            "kernel",
            "sigma",
            "force",
            "grid",
            "simulation",
            "verify",
            "outputs",
        ],
        "",
    );
    if let Some(v) = c.required(root, "schema_version", "") {
        if v.as_u64() != Some(SCHEMA_VERSION) {
            c.fail(
                "/schema_version",
                format!("unsupported schema version, expected {SCHEMA_VERSION}"),
            );
        }
    }
    let dim = c
        .required(root, "dim", "")
        .and_then(|v| c.count(v, "/dim", 1));
    let drift = c
        .required(root, "drift", "")
        .and_then(|v| c.matrix(v, "/drift", dim));
    let kernel = c
        .required(root, "kernel", "")
        .and_then(|v| kernel(&mut c, v, dim));
    let sigma = c
        .required(root, "sigma", "")
        .and_then(|v| sigma(&mut c, v, dim));
    let force = c
        .required(root, "force", "")
        .and_then(|v| force(&mut c, v, dim));
    let grid = c.required(root, "grid", "").and_then(|v| grid(&mut c, v));
    let simulation = c
        .required(root, "simulation", "")
        .and_then(|v| simulation(&mut c, v));
    let verify = verify(&mut c, root.get("verify"));
    let outputs = outputs(&mut c, root.get("outputs"));

    if let (Some(g), Some(s)) = (&grid, &simulation) {
        if g.dt * s.steps as f64 > g.horizon * (1.0 + 1e-12) {
            c.fail(
                "/simulation/steps",
                format!(
                    "dt * steps = {} exceeds the horizon {}",
                    g.dt * s.steps as f64,
                    g.horizon
                ),
            );
        }
    }
    if let (Some(g), Some(ForceConfig::AutoFdr { t_phi })) = (&grid, &force) {
        if let Some(n) = g.n_omega {
            if (n / 2 - 1) as f64 * g.dt < *t_phi {
                c.fail("/grid/n_omega", "frequency grid too small for force.t_phi");
            }
        }
    }
    if let (Some(s), Some(v)) = (&simulation, &verify) {
        if s.mode == Mode::Ivp && v.t_ref.is_none() {
            c.fail("/verify/t_ref", "initial-value runs need a reference time");
        }
    }
    if !c.errors.is_empty() {
        return Err(ConfigErrors(c.errors));
    }
    let (sigma, beta_m) = sigma.unwrap();
    Ok(RunConfig {
        dim: dim.unwrap(),
        drift: drift.unwrap(),
        kernel: kernel.unwrap(),
        sigma,
        beta_m,
        force: force.unwrap(),
        grid: grid.unwrap(),
        simulation: simulation.unwrap(),
        verify: verify.unwrap(),
        outputs: outputs.unwrap(),
    })
}

fn kernel(c: &mut Checker, v: &Value, dim: Option<usize>) -> Option<KernelConfig> {
    let obj = c.object(v, "/kernel")?;
    c.unknown_keys(obj, &["dim", "prony", "tabulated"], "/kernel");
    if let (Some(x), Some(d)) = (obj.get("dim"), dim) {
        if c.count(x, "/kernel/dim", 1).is_some_and(|k| k != d) {
            c.fail(
                "/kernel/dim",
                format!("kernel dimension differs from dim = {d}"),
            );
        }
    }
    match (obj.get("prony"), obj.get("tabulated")) {
        (Some(terms), None) => {
            let Some(list) = terms.as_array() else {
                c.fail("/kernel/prony", "expected an array");
                return None;
            };
            let mut out = Vec::new();
            let mut ok = true;
            for (i, t) in list.iter().enumerate() {
                let path = format!("/kernel/prony/{i}");
                let Some(o) = c.object(t, &path) else {
                    ok = false;
                    continue;
                };
                c.unknown_keys(o, &["A", "lambda", "p"], &path);
                let a = c
                    .required(o, "A", &path)
                    .and_then(|x| c.matrix(x, &format!("{path}/A"), dim));
                let r = c
                    .required(o, "lambda", &path)
                    .and_then(|x| c.positive(x, &format!("{path}/lambda")));
                let p = match o.get("p") {
                    None => Some(0),
                    Some(x) => c.count(x, &format!("{path}/p"), 0),
                };
                match (a, r, p) {
                    (Some(a), Some(r), Some(p)) => out.push(PronyTerm::new(a, r, p as u32)),
                    _ => ok = false,
                }
            }
            ok.then_some(KernelConfig::Prony(out))
        }
        (None, Some(tab)) => {
            let tab = c.object(tab, "/kernel/tabulated")?;
            c.unknown_keys(tab, &["dt", "values", "file"], "/kernel/tabulated");
            match (tab.get("file"), tab.get("dt"), tab.get("values")) {
                (Some(f), None, None) => {
                    let file = c.file(f, "/kernel/tabulated/file")?;
                    Some(KernelConfig::TabulatedFile { file })
                }
                (None, Some(dt), Some(values)) => {
                    let dt = c.positive(dt, "/kernel/tabulated/dt");
                    let Some(list) = values.as_array().filter(|l| !l.is_empty()) else {
                        c.fail(
                            "/kernel/tabulated/values",
                            "expected a nonempty array of matrices",
                        );
                        return None;
                    };
                    let mats: Vec<_> = list
                        .iter()
                        .enumerate()
                        .map(|(i, m)| c.matrix(m, &format!("/kernel/tabulated/values/{i}"), dim))
                        .collect();
                    let values = mats.into_iter().collect::<Option<Vec<_>>>()?;
                    Some(KernelConfig::Tabulated { dt: dt?, values })
                }
                _ => {
                    c.fail(
                        "/kernel/tabulated",
                        "give either \"file\" or both \"dt\" and \"values\"",
                    );
                    None
                }
            }
        }
        _ => {
            c.fail("/kernel", "give exactly one of \"prony\" or \"tabulated\"");
            None
        }
    }
}

fn sigma(c: &mut Checker, v: &Value, dim: Option<usize>) -> Option<(DMatrix<f64>, Option<f64>)> {
    let obj = c.object(v, "/sigma")?;
    c.unknown_keys(obj, &["matrix", "beta_m"], "/sigma");
    match (obj.get("matrix"), obj.get("beta_m")) {
        (Some(m), None) => c.matrix(m, "/sigma/matrix", dim).map(|m| (m, None)),
        (None, Some(b)) => {
            let b = c.positive(b, "/sigma/beta_m")?;
            let d = dim?;
            Some((DMatrix::identity(d, d) / b, Some(b)))
        }
        _ => {
            c.fail("/sigma", "give exactly one of \"matrix\" or \"beta_m\"");
            None
        }
    }
}

fn force(c: &mut Checker, v: &Value, dim: Option<usize>) -> Option<ForceConfig> {
    let obj = c.object(v, "/force")?;
    match c.required(obj, "mode", "/force")?.as_str() {
        Some("auto_fdr") => {
            c.unknown_keys(obj, &["mode", "t_phi"], "/force");
            let t = c
                .required(obj, "t_phi", "/force")
                .and_then(|x| c.positive(x, "/force/t_phi"))?;
            Some(ForceConfig::AutoFdr { t_phi: t })
        }
        Some("explicit") => {
            c.unknown_keys(obj, &["mode", "g", "phi_file", "kappa"], "/force");
            let g = c
                .required(obj, "g", "/force")
                .and_then(|x| c.matrix(x, "/force/g", dim));
            let phi = match obj.get("phi_file") {
                None | Some(Value::Null) => Some(None),
                Some(x) => c.file(x, "/force/phi_file").map(Some),
            };
            let kappa = match obj.get("kappa").and_then(|k| k.as_str()) {
                None if obj.get("kappa").is_none() => Some(Kappa::Same),
                Some("same") => Some(Kappa::Same),
                Some("independent") => Some(Kappa::Independent),
                _ => {
                    c.fail("/force/kappa", "expected \"same\" or \"independent\"");
                    None
                }
            };
            Some(ForceConfig::Explicit {
                g: g?,
                phi_file: phi?,
                kappa: kappa?,
            })
        }
        _ => {
            c.fail("/force/mode", "expected \"auto_fdr\" or \"explicit\"");
            None
        }
    }
}

fn grid(c: &mut Checker, v: &Value) -> Option<GridConfig> {
    let obj = c.object(v, "/grid")?;
    c.unknown_keys(obj, &["dt", "horizon", "n_omega", "omega_max"], "/grid");
    let dt = c
        .required(obj, "dt", "/grid")
        .and_then(|x| c.positive(x, "/grid/dt"));
    let horizon = c
        .required(obj, "horizon", "/grid")
        .and_then(|x| c.positive(x, "/grid/horizon"));
    let n_omega = match obj.get("n_omega") {
        None => Some(None),
        Some(x) => match c.count(x, "/grid/n_omega", 4) {
            Some(n) if n.is_power_of_two() => Some(Some(n)),
            Some(_) => {
                c.fail("/grid/n_omega", "must be a power of two");
                None
            }
            None => None,
        },
    };
    if let (Some(w), Some(dt)) = (obj.get("omega_max"), dt) {
        if let Some(w) = c.positive(w, "/grid/omega_max") {
            if (w * dt / std::f64::consts::PI - 1.0).abs() > 1e-9 {
                c.fail(
                    "/grid/omega_max",
                    format!("must equal pi / dt = {}", std::f64::consts::PI / dt),
                );
            }
        }
    }
    Some(GridConfig {
        dt: dt?,
        horizon: horizon?,
        n_omega: n_omega?,
    })
}

fn simulation(c: &mut Checker, v: &Value) -> Option<SimulationConfig> {
    let p = "/simulation";
    let obj = c.object(v, p)?;
    c.unknown_keys(
        obj,
        &[
            "mode",
            "paths",
            "steps",
            "burn_in",
            "seed",
            "record_every",
            "initial",
        ],
        p,
    );
    let mode = match obj.get("mode").map(|m| m.as_str()) {
        None | Some(Some("stationary")) => Some(Mode::Stationary),
        Some(Some("ivp")) => Some(Mode::Ivp),
        _ => {
            c.fail("/simulation/mode", "expected \"stationary\" or \"ivp\"");
            None
        }
    };
    let paths = c
        .required(obj, "paths", p)
        .and_then(|x| c.count(x, "/simulation/paths", 2));
    let steps = c
        .required(obj, "steps", p)
        .and_then(|x| c.count(x, "/simulation/steps", 1));
    let seed = c.required(obj, "seed", p).and_then(|x| {
        let s = x.as_u64();
        if s.is_none() {
            c.fail("/simulation/seed", "expected a nonnegative integer");
        }
        s
    });
    let burn_in = match obj.get("burn_in") {
        None | Some(Value::Null) => Some(None),
        Some(x) => c.number(x, "/simulation/burn_in").and_then(|b| {
            if b < 0.0 {
                c.fail("/simulation/burn_in", "must be nonnegative");
                None
            } else {
                Some(Some(b))
            }
        }),
    };
    let record_every = match obj.get("record_every") {
        None => Some(1),
        Some(x) => c.count(x, "/simulation/record_every", 1),
    };
    let initial = match obj.get("initial").map(|m| m.as_str()) {
        None | Some(Some("zero")) => Some(Initial::Zero),
        Some(Some("sigma")) => Some(Initial::Sigma),
        _ => {
            c.fail("/simulation/initial", "expected \"zero\" or \"sigma\"");
            None
        }
    };
    Some(SimulationConfig {
        mode: mode?,
        paths: paths?,
        steps: steps?,
        burn_in: burn_in?,
        seed: seed?,
        record_every: record_every?,
        initial: initial?,
    })
}

fn verify(c: &mut Checker, v: Option<&Value>) -> Option<VerifyConfig> {
    let mut out = VerifyConfig {
        lags: vec![0.0, 0.5, 1.0, 2.0],
        t_ref: None,
        z_threshold: 4.0,
        fdr_tolerance: 1e-3,
        check_fdr: true,
        tail_tolerance: 1e-4,
    };
    let Some(v) = v else { return Some(out) };
    let p = "/verify";
    let obj = c.object(v, p)?;
    c.unknown_keys(
        obj,
        &[
            "lags",
            "t_ref",
            "z_threshold",
            "fdr_tolerance",
            "check_fdr",
            "tail_tolerance",
        ],
        p,
    );
    let mut ok = true;
    if let Some(l) = obj.get("lags") {
        match l.as_array() {
            Some(a) if !a.is_empty() => {
                let mut lags = Vec::new();
                for (i, x) in a.iter().enumerate() {
                    match c.number(x, &format!("/verify/lags/{i}")) {
                        Some(t) if t >= 0.0 => lags.push(t),
                        Some(_) => {
                            c.fail(&format!("/verify/lags/{i}"), "lags must be nonnegative");
                            ok = false;
                        }
                        None => ok = false,
                    }
                }
                if lags.windows(2).any(|w| w[1] <= w[0]) {
                    c.fail("/verify/lags", "lags must be strictly increasing");
                    ok = false;
                }
                out.lags = lags;
            }
            _ => {
                c.fail("/verify/lags", "expected a non-empty array");
                ok = false;
            }
        }
    }
    if let Some(x) = obj.get("t_ref") {
        match c.number(x, "/verify/t_ref") {
            Some(t) if t >= 0.0 => out.t_ref = Some(t),
            _ => ok = false,
        }
    }
    for (key, slot) in [
        ("z_threshold", &mut out.z_threshold),
        ("fdr_tolerance", &mut out.fdr_tolerance),
        ("tail_tolerance", &mut out.tail_tolerance),
    ] {
        if let Some(x) = obj.get(key) {
            match c.positive(x, &format!("/verify/{key}")) {
                Some(t) => *slot = t,
                None => ok = false,
            }
        }
    }
    if let Some(x) = obj.get("check_fdr") {
        match c.boolean(x, "/verify/check_fdr") {
            Some(b) => out.check_fdr = b,
            None => ok = false,
        }
    }
    ok.then_some(out)
}

fn outputs(c: &mut Checker, v: Option<&Value>) -> Option<OutputConfig> {
    let mut out = OutputConfig {
        resolvent: true,
        phi: true,
        phi_hat: true,
        autocorrelation: true,
        paths: 0,
        noise: 0,
    };
    let Some(v) = v else { return Some(out) };
    let obj = c.object(v, "/outputs")?;
    c.unknown_keys(
        obj,
        &[
            "resolvent",
            "phi",
            "phi_hat",
            "autocorrelation",
            "paths",
            "noise",
        ],
        "/outputs",
    );
    let mut ok = true;
    for (key, slot) in [
        ("resolvent", &mut out.resolvent),
        ("phi", &mut out.phi),
        ("phi_hat", &mut out.phi_hat),
        ("autocorrelation", &mut out.autocorrelation),
    ] {
        if let Some(x) = obj.get(key) {
            match c.boolean(x, &format!("/outputs/{key}")) {
                Some(b) => *slot = b,
                None => ok = false,
            }
        }
    }
    for (key, slot) in [("paths", &mut out.paths), ("noise", &mut out.noise)] {
        if let Some(x) = obj.get(key) {
            match c.count(x, &format!("/outputs/{key}"), 0) {
                Some(n) => *slot = n,
                None => ok = false,
            }
        }
    }
    ok.then_some(out)
}
