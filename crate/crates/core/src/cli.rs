//! Batch driver: a JSON job description, one task per run, CSV/JSON
//! artifacts in an output directory and a fixed exit-code contract.

use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Deserialize;
use serde_json::{json, Value};

use crate::background::{BackgroundSpec, FiniteGapPotential};
use crate::error::{Error, Result};
use crate::kdv_invariants::{invariants_report, kdv_evolve_g0, large_z_coefficient, KdvOptions};
use crate::perturbation::{CubicSpline, Perturbation};
use crate::quad::QuadOptions;
use crate::reconstruction::{Reconstruction, ReconstructionInput};
use crate::riemann_surface::{normalize_differential, BandStructure, DifferentialKind, SurfacePoint};
use crate::scattering::{ScatteringData, ScatteringOptions, ScatteringProblem};
use crate::spectral_shift::{log_derivative_fd, resolvent_trace, SpectralShift};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICS: i32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Transmission,
    Scattering,
    Shift,
    Reconstruct,
    Invariants,
    Kdv,
    VerifyAll,
}

impl std::str::FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Task> {
        serde_json::from_value(Value::String(s.to_string())).map_err(|_| Error::Config(format!("unknown task '{s}'")))
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    pub expression: Option<String>,
    pub table_path: Option<PathBuf>,
}

/// Uniform grid on `[lambda_min, lambda_max]`.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub points: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            lambda_min: 0.1,
            lambda_max: 25.0,
            points: 50,
        }
    }
}

impl GridSpec {
    fn values(&self) -> Vec<f64> {
        if self.points == 1 {
            return vec![self.lambda_min];
        }
        let h = (self.lambda_max - self.lambda_min) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.lambda_min + h * i as f64).collect()
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdvSpec {
    pub n: usize,
    pub length: f64,
    pub dt: f64,
    pub t_end: f64,
    pub record_every: usize,
}

impl Default for KdvSpec {
    fn default() -> Self {
        let o = KdvOptions::default();
        KdvSpec {
            n: o.n,
            length: o.length,
            dt: o.dt,
            t_end: 1.0,
            record_every: 100,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Pass threshold of the verification checks.
    pub check: f64,
    /// Relative tolerance of the Jost ODE integration.
    pub ode_rtol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            check: 1e-4,
            ode_rtol: ScatteringOptions::default().ode.rtol,
        }
    }
}

/// `{eigenvalues, bands, R2_table}` input for the reconstruction task.
#[derive(Debug, Clone, Deserialize)]
pub struct ReconstructionFile {
    pub eigenvalues: Vec<f64>,
    pub bands: Vec<f64>,
    #[serde(rename = "R2_table")]
    pub r2_table: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub background: BackgroundSpec,
    #[serde(default)]
    pub perturbation: PerturbationSpec,
    pub task: Option<Task>,
    #[serde(default)]
    pub grid: GridSpec,
    /// Evaluation points `[re, im]` for transmission and the verification checks.
    #[serde(default = "default_points")]
    pub points: Vec<[f64; 2]>,
    #[serde(default)]
    pub kdv: KdvSpec,
    #[serde(default = "default_k")]
    pub invariants_k: usize,
    pub reconstruction_input: Option<PathBuf>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_x_max")]
    pub x_max: f64,
    pub out: Option<PathBuf>,
}

fn default_points() -> Vec<[f64; 2]> {
    vec![[-0.5, 1.0], [0.5, 0.5], [2.0, 1.0], [4.0, 0.25], [10.0, 3.0], [-3.0, 2.0], [1.0, 5.0], [30.0, 1.0], [0.0, 20.0], [7.0, 0.1]]
}

fn default_k() -> usize {
    3
}

fn default_x_max() -> f64 {
    40.0
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub task: Option<Task>,
    pub out: Option<PathBuf>,
    pub tol: Option<f64>,
    pub seed: Option<u64>,
}

impl JobConfig {
    pub fn from_json(text: &str) -> Result<JobConfig> {
        let cfg: JobConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<JobConfig> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        // relative table paths are taken relative to the config file
        let base = path.parent().unwrap_or(Path::new("."));
        if let Some(p) = &cfg.perturbation.table_path {
            if p.is_relative() {
                cfg.perturbation.table_path = Some(base.join(p));
            }
        }
        if let Some(p) = &cfg.reconstruction_input {
            if p.is_relative() {
                cfg.reconstruction_input = Some(base.join(p));
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.task.is_none() {
            return bad("no task given");
        }
        if !(self.tolerances.check > 0.0) || !(self.tolerances.ode_rtol > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.grid.points == 0 || !(self.grid.lambda_max >= self.grid.lambda_min) {
            return bad("grid must be non-empty with lambda_min <= lambda_max");
        }
        if self.points.is_empty() {
            return bad("evaluation point list is empty");
        }
        if self.kdv.n < 16 || !(self.kdv.dt > 0.0) || !(self.kdv.length > 0.0) || !(self.kdv.t_end >= 0.0) {
            return bad("kdv settings must be positive with n >= 16");
        }
        if self.invariants_k == 0 || self.invariants_k > 4 {
            return bad("invariants_k must lie in 1..=4");
        }
        if self.perturbation.expression.is_some() && self.perturbation.table_path.is_some() {
            return bad("perturbation takes either an expression or a table_path");
        }
        Ok(())
    }

    fn perturbation(&self) -> Result<Perturbation> {
        if let Some(e) = &self.perturbation.expression {
            return Perturbation::from_expression(e).map_err(|e| Error::Config(e.to_string()));
        }
        if let Some(p) = &self.perturbation.table_path {
            let spline = CubicSpline::from_path(p)?;
            let (lo, hi) = spline.range();
            let ends = spline.eval(lo).abs().max(spline.eval(hi).abs());
            if ends > 1e-8 {
                log::warn!("table is extended by zero beyond [{lo}, {hi}] although |V| reaches {ends:e} at the ends");
            }
            return Perturbation::from_table(spline).map_err(|e| Error::Config(e.to_string()));
        }
        Ok(Perturbation::zero())
    }

    pub fn problem(&self) -> Result<ScatteringProblem> {
        let bg = if self.background.edges.len() == 1 && self.background.divisor.entries.is_empty() {
            FiniteGapPotential::free(self.background.edges[0])
        } else {
            self.background.build(self.x_max).map_err(|e| Error::Config(e.to_string()))?
        };
        let mut opts = ScatteringOptions::default();
        opts.ode.rtol = self.tolerances.ode_rtol;
        ScatteringProblem::with_options(bg, self.perturbation()?, opts)
    }

    fn eval_points(&self) -> Vec<Complex64> {
        self.points.iter().map(|p| Complex64::new(p[0], p[1])).collect()
    }
}

/// Outcome of a run: exit code plus the files written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub code: i32,
    pub files: Vec<PathBuf>,
    pub message: String,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Expression(_) => EXIT_CONFIG,
        _ => EXIT_NUMERICS,
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn write(&mut self, name: &str, text: &str) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, text).map_err(|e| Error::Config(format!("cannot write {}: {e}", path.display())))?;
        self.files.push(path);
        Ok(())
    }

    fn json(&mut self, name: &str, mut value: Value) -> Result<()> {
        if let Value::Object(m) = &mut value {
            m.insert("version".into(), json!(VERSION));
        }
        let text = serde_json::to_string_pretty(&value).map_err(|e| Error::Config(e.to_string()))?;
        self.write(name, &(text + "\n"))
    }
}

/// Runs one job and maps every failure to its exit code.
pub fn run(config: JobConfig, overrides: &Overrides) -> Outcome {
    let mut cfg = config;
    if overrides.task.is_some() {
        cfg.task = overrides.task;
    }
    if let Some(t) = overrides.tol {
        cfg.tolerances.check = t;
    }
    if overrides.out.is_some() {
        cfg.out = overrides.out.clone();
    }
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("out"));
    let mut w = Writer { dir, files: Vec::new() };
    let result = cfg.validate().and_then(|_| {
        fs::create_dir_all(&w.dir).map_err(|e| Error::Config(format!("cannot create {}: {e}", w.dir.display())))?;
        dispatch(&cfg, overrides, &mut w)
    });
    match result {
        Ok((true, msg)) => Outcome {
            code: EXIT_OK,
            files: w.files,
            message: msg,
        },
        Ok((false, msg)) => Outcome {
            code: EXIT_CHECK,
            files: w.files,
            message: msg,
        },
        Err(e) => Outcome {
            code: exit_code(&e),
            files: w.files,
            message: e.to_string(),
        },
    }
}

fn c2(z: Complex64) -> [f64; 2] {
    [z.re, z.im]
}

fn dispatch(cfg: &JobConfig, ov: &Overrides, w: &mut Writer) -> Result<(bool, String)> {
    let task = cfg.task.expect("validated");
    if task == Task::Reconstruct {
        if let Some(path) = &cfg.reconstruction_input {
            return reconstruct_from_file(cfg, path, w);
        }
    }
    let problem = cfg.problem()?;
    match task {
        Task::Spectrum => {
            let eigs = problem.eigenvalues()?;
            let bands = problem.background().bands();
            w.json(
                "spectrum.json",
                json!({
                    "edges": bands.edges(),
                    "spectrum": bands.spectrum().iter().map(|b| json!([b.lo, b.hi])).collect::<Vec<_>>(),
                    "eigenvalues": eigs,
                }),
            )?;
            Ok((true, format!("{} eigenvalue(s)", eigs.len())))
        }
        Task::Transmission => {
            let grid = cfg.grid.values();
            let rows: Vec<Result<String>> = grid
                .par_iter()
                .map(|&l| {
                    let t = problem.t(Complex64::new(l, 0.0))?;
                    Ok(format!("{l:.16e},{:.16e},{:.16e},{:.16e}\n", t.re, t.im, t.norm()))
                })
                .collect();
            let mut csv = String::from("lambda,re_t,im_t,abs_t\n");
            for r in rows {
                csv.push_str(&r?);
            }
            w.write("transmission.csv", &csv)?;
            let pts: Vec<Result<Value>> = cfg
                .eval_points()
                .par_iter()
                .map(|&z| Ok(json!({"z": c2(z), "t": c2(problem.t(z)?)})))
                .collect();
            let pts: Vec<Value> = pts.into_iter().collect::<Result<_>>()?;
            w.json("transmission.json", json!({"points": pts}))?;
            Ok((true, format!("{} grid points", grid.len())))
        }
        Task::Scattering => {
            let (csv, worst) = scattering_table(&problem, &cfg.grid.values())?;
            w.write("scattering.csv", &csv)?;
            Ok((true, format!("max unitarity defect {worst:e}")))
        }
        Task::Shift => {
            let data = problem.scattering_data()?;
            let shift = SpectralShift::compute(&data)?;
            w.write("xi.csv", &shift.to_csv())?;
            w.json("shift.json", shift.summary_json())?;
            Ok((true, "spectral shift written".into()))
        }
        Task::Reconstruct => {
            let data = problem.scattering_data()?;
            let (report, worst) = reconstruction_report(cfg, &data)?;
            w.json("reconstruct.json", report)?;
            Ok((worst < cfg.tolerances.check, format!("max reconstruction defect {worst:e}")))
        }
        Task::Invariants => {
            let data = problem.scattering_data()?;
            let rec = Reconstruction::new(&ReconstructionInput::from_scattering(&data))?;
            let r = invariants_report(&problem, &rec, cfg.invariants_k)?;
            let worst = r.discrepancy_log_t.max(r.discrepancy_trace);
            let mut v = serde_json::to_value(&r).map_err(|e| Error::Config(e.to_string()))?;
            v["routes"] = json!(["integral", "log_t_fit", "trace_formula"]);
            w.json("invariants.json", v)?;
            Ok((worst < 1e-3, format!("max route discrepancy {worst:e}")))
        }
        Task::Kdv => {
            if problem.background().genus() != 0 {
                return Err(Error::Config("time evolution is only available for a constant background".into()));
            }
            let e0 = problem.background().bands().e0();
            let opts = KdvOptions {
                n: cfg.kdv.n,
                length: cfg.kdv.length,
                dt: cfg.kdv.dt,
                ..Default::default()
            };
            let v0: Vec<f64> = opts.grid().iter().map(|&x| e0 + problem.perturbation().vhat(x)).collect();
            let run = kdv_evolve_g0(&v0, e0, cfg.kdv.t_end, cfg.kdv.record_every, opts)?;
            w.write("kdv.csv", &run.to_csv())?;
            let mut prof = String::from("x,v\n");
            for (x, v) in run.xs.iter().zip(&run.v) {
                prof.push_str(&format!("{x:.16e},{v:.16e}\n"));
            }
            w.write("kdv_profile.csv", &prof)?;
            let drift = run.drift();
            w.json("kdv.json", json!({"t_end": cfg.kdv.t_end, "drift": drift, "tau0": run.taus[0]}))?;
            let worst = drift.iter().cloned().fold(0.0, f64::max);
            Ok((worst < 1e-5, format!("max relative τ drift {worst:e}")))
        }
        Task::VerifyAll => verify_all(cfg, ov, &problem, w),
    }
}

fn scattering_table(problem: &ScatteringProblem, grid: &[f64]) -> Result<(String, f64)> {
    let bands = problem.background().bands();
    let rows: Vec<Result<Option<(String, f64)>>> = grid
        .par_iter()
        .map(|&l| {
            if !bands.in_spectrum(l) || bands.edges().iter().any(|e| (l - e).abs() < 1e-6 * bands.scale()) {
                return Ok(None);
            }
            let b = problem.band_scattering(l)?;
            let d = b.unitarity_defect();
            Ok(Some((
                format!(
                    "{l:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{d:.6e}\n",
                    b.t.re, b.t.im, b.r_plus.re, b.r_plus.im, b.r_minus.re, b.r_minus.im
                ),
                d,
            )))
        })
        .collect();
    let mut csv = String::from("lambda,re_t,im_t,re_r_plus,im_r_plus,re_r_minus,im_r_minus,unitarity_defect\n");
    let mut worst: f64 = 0.0;
    for r in rows {
        if let Some((line, d)) = r? {
            csv.push_str(&line);
            worst = worst.max(d);
        }
    }
    Ok((csv, worst))
}

/// Interior band sample points away from the edges, for jump checks.
fn band_samples(bands: &BandStructure) -> Vec<f64> {
    let mut out = Vec::new();
    for b in bands.spectrum() {
        match b.hi {
            Some(h) => out.extend([0.25, 0.5, 0.75].iter().map(|t| b.lo + t * (h - b.lo))),
            None => out.extend([0.3, 2.0, 10.0].iter().map(|t| b.lo + t * bands.scale())),
        }
    }
    out
}

fn reconstruction_report(cfg: &JobConfig, data: &ScatteringData) -> Result<(Value, f64)> {
    let input = ReconstructionInput::from_scattering(data);
    let rec = Reconstruction::new(&input)?;
    let pts: Vec<Result<(Value, f64)>> = cfg
        .eval_points()
        .par_iter()
        .map(|&z| {
            let r = rec.reconstruct_t(&SurfacePoint::upper(z))?;
            let d = data.t(z)?;
            let err = (r - d).norm() / d.norm().max(1.0);
            Ok((json!({"z": c2(z), "reconstructed": c2(r), "direct": c2(d), "defect": err}), err))
        })
        .collect();
    let pts: Vec<(Value, f64)> = pts.into_iter().collect::<Result<_>>()?;
    let jump = rec.rh_jump_defect(&input, &band_samples(&data.problem.background().bands().clone()))?;
    let constraints = rec.constraint_residuals()?;
    let worst = pts.iter().map(|p| p.1).fold(jump, f64::max);
    Ok((
        json!({
            "max_jump_defect": jump,
            "constraint_residuals": constraints,
            "edges": rec.edge_behaviour(),
            "points": pts.into_iter().map(|p| p.0).collect::<Vec<_>>(),
        }),
        worst,
    ))
}

fn reconstruct_from_file(cfg: &JobConfig, path: &Path, w: &mut Writer) -> Result<(bool, String)> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let file: ReconstructionFile = serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))?;
    let bands = BandStructure::new(file.bands).map_err(|e| Error::Config(e.to_string()))?;
    let input = ReconstructionInput::from_table(bands.clone(), file.eigenvalues, file.r2_table).map_err(|e| Error::Config(e.to_string()))?;
    let rec = Reconstruction::new(&input)?;
    let pts: Vec<Result<Value>> = cfg
        .eval_points()
        .par_iter()
        .map(|&z| Ok(json!({"z": c2(z), "reconstructed": c2(rec.reconstruct_t(&SurfacePoint::upper(z))?)})))
        .collect();
    let pts: Vec<Value> = pts.into_iter().collect::<Result<_>>()?;
    let jump = rec.rh_jump_defect(&input, &band_samples(&bands))?;
    w.json(
        "reconstruct.json",
        json!({
            "max_jump_defect": jump,
            "constraint_residuals": rec.constraint_residuals()?,
            "points": pts,
        }),
    )?;
    Ok((jump < cfg.tolerances.check, format!("max jump defect {jump:e}")))
}

struct Check {
    name: &'static str,
    value: f64,
    tol: f64,
}

impl Check {
    fn passed(&self) -> bool {
        self.value.is_finite() && self.value < self.tol
    }
}

fn verify_all(cfg: &JobConfig, ov: &Overrides, problem: &ScatteringProblem, w: &mut Writer) -> Result<(bool, String)> {
    let tol = cfg.tolerances.check;
    let bands = problem.background().bands().clone();
    let data = problem.scattering_data()?;
    let mut checks = Vec::new();

    let (_, unitarity) = scattering_table(problem, &cfg.grid.values())?;
    checks.push(Check {
        name: "unitarity",
        value: unitarity,
        tol: tol.min(1e-6),
    });

    let pts = cfg.eval_points();
    let trace: Vec<Result<f64>> = pts
        .par_iter()
        .map(|&z| {
            let a = resolvent_trace(problem, z)?;
            let b = log_derivative_fd(problem, z, 1e-3 * z.norm().max(1.0))?;
            Ok((a - b).norm() / a.norm().max(1e-300))
        })
        .collect();
    checks.push(Check {
        name: "trace_identity",
        value: trace.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max),
        tol,
    });

    let shift = SpectralShift::compute(&data)?;
    let krein: Vec<Result<f64>> = pts
        .par_iter()
        .map(|&z| {
            let d = data.t(z)?;
            Ok((shift.krein_reconstruct_t(z)? - d).norm() / d.norm().max(1.0))
        })
        .collect();
    checks.push(Check {
        name: "krein_representation",
        value: krein.into_iter().collect::<Result<Vec<_>>>()?.into_iter().fold(0.0, f64::max),
        tol,
    });

    let (_, rec_worst) = reconstruction_report(cfg, &data)?;
    checks.push(Check {
        name: "reconstruction",
        value: rec_worst,
        tol,
    });

    let mut periods: f64 = 0.0;
    let mut kinds = vec![DifferentialKind::SecondKind { k: 1 }, DifferentialKind::SecondKind { k: 2 }];
    kinds.push(DifferentialKind::ThirdKindConjugate {
        p: SurfacePoint::upper(Complex64::new(bands.e0() - 1.0, 0.5)),
    });
    for kind in kinds {
        let omega = normalize_differential(&bands, kind)?;
        for j in 1..=bands.genus() {
            periods = periods.max(omega.a_period(j, QuadOptions::default())?.norm());
        }
    }
    checks.push(Check {
        name: "a_periods",
        value: periods,
        tol: 1e-9,
    });

    let rec = Reconstruction::new(&ReconstructionInput::from_scattering(&data))?;
    let inv = invariants_report(problem, &rec, cfg.invariants_k)?;
    checks.push(Check {
        name: "tau_routes",
        value: inv.discrepancy_log_t.max(inv.discrepancy_trace),
        tol: 1e-3,
    });

    let l1 = problem.perturbation().l1;
    if l1 > 0.0 {
        let c = large_z_coefficient(problem, 1e2, 1e6, 30)?;
        let want = Complex64::new(0.0, -0.5 * problem.perturbation().integral()?);
        checks.push(Check {
            name: "large_z",
            value: (c - want).norm() / want.norm().max(1e-3 * l1),
            tol: 1e-2,
        });
    }

    let all = checks.iter().all(Check::passed);
    let report: Vec<Value> = checks
        .iter()
        .map(|c| json!({"check": c.name, "value": c.value, "tolerance": c.tol, "passed": c.passed()}))
        .collect();
    w.json("verify.json", json!({"passed": all, "seed": ov.seed.unwrap_or(0), "checks": report}))?;
    let failed: Vec<&str> = checks.iter().filter(|c| !c.passed()).map(|c| c.name).collect();
    let msg = if all {
        format!("all {} checks passed", checks.len())
    } else {
        format!("failed: {}", failed.join(", "))
    };
    Ok((all, msg))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(extra: &str) -> JobConfig {
        JobConfig::from_json(&format!(r#"{{"background": {{"edges": [0.0]}}{extra}}}"#)).unwrap()
    }

    #[test]
    fn config_errors_exit_with_two() {
        assert!(JobConfig::from_json(r#"{"background": {"edges": [0.0]}, "bogus": 1}"#).is_err());
        let dir = tempfile::tempdir().unwrap();
        let ov = Overrides {
            out: Some(dir.path().to_path_buf()),
            ..Default::default()
        };
        assert_eq!(run(config(""), &ov).code, EXIT_CONFIG);
        let bad = config(r#", "task": "spectrum", "perturbation": {"expression": "sech("}"#);
        assert_eq!(run(bad, &ov).code, EXIT_CONFIG);
        let bad = config(r#", "task": "spectrum", "tolerances": {"check": -1.0}"#);
        assert_eq!(run(bad, &ov).code, EXIT_CONFIG);
        assert!("nonsense".parse::<Task>().is_err());
        assert_eq!("verify-all".parse::<Task>().unwrap(), Task::VerifyAll);
    }

    #[test]
    fn transmission_output_is_deterministic() {
        let cfg = config(r#", "task": "transmission", "perturbation": {"expression": "-2*sech(x)^2"}, "grid": {"lambda_min": 4.0, "lambda_max": 5.0, "points": 3}"#);
        let read = |cfg: JobConfig| {
            let dir = tempfile::tempdir().unwrap();
            let out = run(
                cfg,
                &Overrides {
                    out: Some(dir.path().to_path_buf()),
                    ..Default::default()
                },
            );
            assert_eq!(out.code, EXIT_OK, "{}", out.message);
            (
                fs::read_to_string(dir.path().join("transmission.csv")).unwrap(),
                fs::read_to_string(dir.path().join("transmission.json")).unwrap(),
            )
        };
        let a = read(cfg.clone());
        assert_eq!(a, read(cfg));
        let line: Vec<f64> = a.0.lines().nth(1).unwrap().split(',').map(|s| s.parse().unwrap()).collect();
        assert!((line[1] - 0.6).abs() < 1e-6 && (line[2] - 0.8).abs() < 1e-6);
        assert!(a.1.contains("\"version\""));
    }

    #[test]
    fn verify_all_passes_for_zero_perturbation() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = config(r#", "task": "verify-all", "grid": {"lambda_min": 0.5, "lambda_max": 20.0, "points": 5}"#);
        let out = run(
            cfg,
            &Overrides {
                out: Some(dir.path().to_path_buf()),
                ..Default::default()
            },
        );
        assert_eq!(out.code, EXIT_OK, "{}", out.message);
    }
}
