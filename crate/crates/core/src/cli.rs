//! Command implementations behind the `mtsparse` binary: config parsing,
//! dataset and artifact I/O, and the exit-code contract
//! (0 ok, 2 input, 3 convergence, 4 internal).

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::diagnostics::{
    self, bound_l12merge2, bound_lasso_l1p, bound_lassoes_theorem1, bound_persistence, bound_ring,
    ConeNorm, L12Merge2Inputs, LassoL1pInputs, ReOptions,
};
use crate::error::Error;
use crate::group::{fit_group, fixed_point_residuals, zero_certificate, GroupOptions};
use crate::io::{self, InputError};
use crate::lassoes::{fit_lassoes, lassoes_kkt_residual, LassoesOptions};
use crate::model::{lpq_norm, sparsity_summary, MultiTaskDataset, NormAxis};
use crate::ring::{fit_ring, kkt_residuals, RingOptions};
use crate::simgen::{compute_metrics, gen_bounded, gen_decay, run_table1, IndexOrigin, SimConfig};
use crate::spectra;
use crate::svg::{line_plot, Series};

/// Failures mapped onto the documented exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Exit 2: malformed input (config, dataset, arguments).
    Input(String),
    /// Exit 3: a solver hit its iteration budget; artifacts are written and
    /// flagged.
    Convergence(String),
    /// Exit 4: internal failure.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Convergence(_) => 3,
            CliError::Internal(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Input(m) | CliError::Convergence(m) | CliError::Internal(m) => m,
        }
    }
}

impl From<InputError> for CliError {
    fn from(e: InputError) -> Self {
        CliError::Input(e.0)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidInputs(_) | Error::DimensionMismatch(_) | Error::NonFinite(_) => {
                CliError::Input(e.to_string())
            }
            _ => CliError::Internal(e.to_string()),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenaltyKind {
    Lassoes,
    Group,
    Ring,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitConfig {
    /// Path to the dataset manifest, relative to the config file.
    pub dataset: String,
    pub penalty: PenaltyKind,
    #[serde(default)]
    pub lassoes: Option<LassoesOptions>,
    #[serde(default)]
    pub group: Option<GroupOptions>,
    #[serde(default)]
    pub ring: Option<RingOptions>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    Decay,
    Bounded,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    pub generator: GeneratorKind,
    #[serde(flatten)]
    pub sim: SimConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Table1Config {
    pub n: usize,
    pub p: usize,
    pub m_values: Vec<usize>,
    pub replicates: usize,
    #[serde(default = "default_decay_rate")]
    pub decay_rate: f64,
    #[serde(default = "default_origin")]
    pub index_origin: IndexOrigin,
    #[serde(default = "default_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub ring: Option<RingOptions>,
}

fn default_decay_rate() -> f64 {
    0.4
}
fn default_origin() -> IndexOrigin {
    IndexOrigin::Zero
}
fn default_sigma() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReConfig {
    pub s: usize,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default = "default_cone")]
    pub q: String,
    #[serde(default)]
    pub restarts: Option<usize>,
    #[serde(default)]
    pub steps: Option<usize>,
    #[serde(default)]
    pub samples: Option<usize>,
}

fn default_c0() -> f64 {
    3.0
}
fn default_cone() -> String {
    "q1".into()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnoseConfig {
    pub dataset: String,
    /// Coefficients CSV produced by `fit`.
    pub coefficients: String,
    pub penalty: PenaltyKind,
    #[serde(default)]
    pub lassoes: Option<LassoesOptions>,
    #[serde(default)]
    pub group: Option<GroupOptions>,
    #[serde(default)]
    pub ring: Option<RingOptions>,
    #[serde(default)]
    pub re: Option<ReConfig>,
    /// Optional truth sidecar for error metrics.
    #[serde(default)]
    pub truth: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum BoundsConfig {
    Ring {
        s: usize,
        p: usize,
        n: usize,
        m: usize,
        sigma: f64,
        a_const: f64,
        kappa: f64,
        phi_max: f64,
    },
    LassoL1p(LassoL1pInputs),
    L12Merge2(L12Merge2Inputs),
    Persistence {
        v: f64,
        n: usize,
        p: usize,
        m: usize,
        eta: f64,
        b: f64,
        #[serde(default)]
        sum_norms1_sq: Option<f64>,
    },
    LassoesTheorem1 {
        risk0: f64,
        min_risk: f64,
        lambda: f64,
        m: usize,
        delta_n: f64,
        norms0_sq: f64,
        norms_hat_sq: f64,
    },
}

/// The single structured config file shared by all commands.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub emit_plots: Option<bool>,
    #[serde(default)]
    pub fit: Option<FitConfig>,
    #[serde(default)]
    pub simulate: Option<SimulateConfig>,
    #[serde(default)]
    pub reproduce_table1: Option<Table1Config>,
    #[serde(default)]
    pub diagnose: Option<DiagnoseConfig>,
    #[serde(default)]
    pub bounds: Option<BoundsConfig>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        let body = fs::read_to_string(path)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let cfg: ConfigFile = serde_json::from_str(&body)
            .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        if cfg.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(CliError::Input(format!(
                "{}: unsupported config schema version {}",
                path.display(),
                cfg.schema_version
            )));
        }
        Ok(cfg)
    }
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub no_plots: bool,
    pub no_timestamp: bool,
}

struct Context {
    config_dir: PathBuf,
    out_dir: PathBuf,
    seed: u64,
    emit_plots: bool,
    timestamp: Option<String>,
}

impl Context {
    fn new(config_path: &Path, cfg: &ConfigFile, ov: &Overrides) -> CliResult<Self> {
        let config_dir = config_path
            .parent()
            .unwrap_or_else(|| Path::new("."))
            .to_path_buf();
        let out_dir = ov
            .out_dir
            .clone()
            .or_else(|| cfg.out_dir.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&out_dir)
            .map_err(|e| CliError::Input(format!("create {}: {e}", out_dir.display())))?;
        let timestamp = if ov.no_timestamp {
            None
        } else {
            let secs = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0);
            Some(format!("unix:{secs}"))
        };
        Ok(Context {
            config_dir,
            out_dir,
            seed: ov.seed.or(cfg.seed).unwrap_or(0),
            emit_plots: !ov.no_plots && cfg.emit_plots.unwrap_or(true),
            timestamp,
        })
    }

    fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.config_dir.join(p)
        }
    }

    fn write_json(&self, name: &str, value: &serde_json::Value) -> CliResult<()> {
        let body = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Internal(format!("encode {name}: {e}")))?;
        fs::write(self.out_dir.join(name), body + "\n")
            .map_err(|e| CliError::Internal(format!("write {name}: {e}")))
    }

    fn write_plot(&self, name: &str, title: &str, series: &[Series]) -> CliResult<()> {
        if !self.emit_plots {
            return Ok(());
        }
        let svg = line_plot(title, series, self.timestamp.as_deref());
        fs::write(self.out_dir.join(name), svg)
            .map_err(|e| CliError::Internal(format!("write {name}: {e}")))
    }
}

fn load_dataset(ctx: &Context, rel: &str) -> CliResult<MultiTaskDataset> {
    Ok(io::read_dataset(&ctx.resolve(rel))?)
}

pub fn cmd_fit(config_path: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg = ConfigFile::load(config_path)?;
    let fit_cfg = cfg
        .fit
        .clone()
        .ok_or_else(|| CliError::Input("config has no `fit` section".into()))?;
    let ctx = Context::new(config_path, &cfg, ov)?;
    let dataset = load_dataset(&ctx, &fit_cfg.dataset)?;

    let converged;
    match fit_cfg.penalty {
        PenaltyKind::Lassoes => {
            let opts = fit_cfg.lassoes.clone().unwrap_or_default();
            let (b, report) = fit_lassoes(&dataset, &opts)?;
            io::write_coef_csv(&b, &ctx.out_dir.join("coefficients.csv"))?;
            ctx.write_json(
                "report.json",
                &json!({"penalty": "lassoes", "options": opts, "report": report}),
            )?;
            ctx.write_plot(
                "objective_trace.svg",
                "lassoes objective trace",
                &[Series {
                    label: "objective",
                    values: &report.objective_trace,
                }],
            )?;
            converged = report.converged();
        }
        PenaltyKind::Group => {
            let opts = fit_cfg.group.clone().unwrap_or_default();
            let (b, report) = fit_group(&dataset, &opts)?;
            io::write_coef_csv(&b, &ctx.out_dir.join("coefficients.csv"))?;
            let row_norms: Vec<f64> = (0..b.values.nrows())
                .map(|l| b.values.row(l).norm())
                .collect();
            ctx.write_json(
                "report.json",
                &json!({"penalty": "group", "options": opts, "report": report}),
            )?;
            ctx.write_plot(
                "objective_trace.svg",
                "group lasso objective trace",
                &[Series {
                    label: "objective",
                    values: &report.objective_trace,
                }],
            )?;
            ctx.write_plot(
                "row_norms.svg",
                "per-row l2 norms",
                &[Series {
                    label: "row norm",
                    values: &row_norms,
                }],
            )?;
            converged = report.converged();
        }
        PenaltyKind::Ring => {
            let mut opts = fit_cfg.ring.clone().unwrap_or_default();
            if ov.seed.is_some() || cfg.seed.is_some() {
                opts.seed = ctx.seed;
            }
            let (b, report) = fit_ring(&dataset, &opts)?;
            io::write_coef_csv(&b, &ctx.out_dir.join("coefficients.csv"))?;
            let singulars: Vec<f64> = spectra::svd(&b.values)?.singulars.iter().copied().collect();
            ctx.write_json(
                "report.json",
                &json!({"penalty": "ring", "options": opts, "report": report}),
            )?;
            ctx.write_plot(
                "objective_trace.svg",
                "ring lasso objective trace",
                &[Series {
                    label: "objective",
                    values: &report.objective_trace,
                }],
            )?;
            ctx.write_plot(
                "singular_values.svg",
                "singular value profile",
                &[Series {
                    label: "singular value",
                    values: &singulars,
                }],
            )?;
            converged = !matches!(report.termination, crate::report::Termination::IterationLimit);
        }
    }

    if converged {
        Ok(())
    } else {
        Err(CliError::Convergence(
            "solver hit its iteration budget; artifacts written and flagged".into(),
        ))
    }
}

pub fn cmd_simulate(config_path: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg = ConfigFile::load(config_path)?;
    let sim_cfg = cfg
        .simulate
        .clone()
        .ok_or_else(|| CliError::Input("config has no `simulate` section".into()))?;
    let ctx = Context::new(config_path, &cfg, ov)?;
    let mut sim = sim_cfg.sim.clone();
    if ov.seed.is_some() || cfg.seed.is_some() {
        sim.seed = ctx.seed;
    }
    let (dataset, truth) = match sim_cfg.generator {
        GeneratorKind::Decay => gen_decay(&sim)?,
        GeneratorKind::Bounded => gen_bounded(&sim)?,
    };
    io::write_dataset(&dataset, &ctx.out_dir)?;
    io::write_truth(&truth, &ctx.out_dir)?;
    Ok(())
}

pub fn cmd_reproduce_table1(config_path: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg = ConfigFile::load(config_path)?;
    let t1 = cfg
        .reproduce_table1
        .clone()
        .ok_or_else(|| CliError::Input("config has no `reproduce_table1` section".into()))?;
    let ctx = Context::new(config_path, &cfg, ov)?;
    let template = SimConfig {
        n: t1.n,
        p: t1.p,
        m: 1, // per-row m comes from m_values
        decay_rate: t1.decay_rate,
        index_origin: t1.index_origin,
        noise_sigma: t1.noise_sigma,
        seed: ctx.seed,
    };
    let ring = t1.ring.clone().unwrap_or_else(|| default_table1_ring(t1.p));
    let rows = run_table1(&template, &ring, &t1.m_values, t1.replicates)?;

    let mut csv = String::from("m,l_par_mean,l_par_sd,l_pre_mean,l_pre_sd,replicates\n");
    for r in &rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.m, r.l_par_mean, r.l_par_sd, r.l_pre_mean, r.l_pre_sd, r.replicates
        ));
    }
    fs::write(ctx.out_dir.join("table1.csv"), csv)
        .map_err(|e| CliError::Internal(format!("write table1.csv: {e}")))?;

    let l_par: Vec<f64> = rows.iter().map(|r| r.l_par_mean).collect();
    let l_pre: Vec<f64> = rows.iter().map(|r| r.l_pre_mean).collect();
    ctx.write_plot(
        "table1.svg",
        "estimation and prediction error vs m",
        &[
            Series {
                label: "L_par",
                values: &l_par,
            },
            Series {
                label: "L_pre",
                values: &l_pre,
            },
        ],
    )?;
    Ok(())
}

/// Auto-tuned ring options used by the reproduction when none are configured.
/// The starting lambda only needs the right order of magnitude; the
/// multiplicative rule walks it to the count target from there.
pub fn default_table1_ring(p: usize) -> RingOptions {
    RingOptions {
        lambda: p as f64,
        target_rank: Some((p / 4).max(2)),
        zero_tol: 0.01,
        lambda_factor: 1.2,
        gamma: 0.8,
        max_passes: 500,
        tol: 1e-5,
        ..Default::default()
    }
}

pub fn cmd_diagnose(config_path: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg = ConfigFile::load(config_path)?;
    let dg = cfg
        .diagnose
        .clone()
        .ok_or_else(|| CliError::Input("config has no `diagnose` section".into()))?;
    let ctx = Context::new(config_path, &cfg, ov)?;
    let dataset = load_dataset(&ctx, &dg.dataset)?;
    let b = io::read_coef_csv(
        &ctx.resolve(&dg.coefficients),
        dataset.n_features(),
        dataset.n_tasks(),
    )?;

    let kkt = match dg.penalty {
        PenaltyKind::Lassoes => {
            let opts = dg.lassoes.clone().unwrap_or_default();
            json!({"per_task_subgradient": lassoes_kkt_residual(&b, &dataset, &opts)?})
        }
        PenaltyKind::Group => {
            let opts = dg.group.clone().unwrap_or_default();
            let cert = zero_certificate(&dataset, opts.lambda);
            json!({
                "per_row_fixed_point": fixed_point_residuals(&dataset, &b, opts.lambda),
                "zero_certificate": cert,
            })
        }
        PenaltyKind::Ring => {
            let opts = dg.ring.clone().unwrap_or_default();
            let kkt = kkt_residuals(&b, &dataset, opts.lambda)?;
            json!({"active": kkt.active, "inactive_slack": kkt.inactive_slack})
        }
    };

    let constants = diagnostics::design_constants(&dataset)?;
    let sparsity = sparsity_summary(&b, b.default_zero_threshold())?;

    let re = match &dg.re {
        Some(re_cfg) => {
            let mut opts = ReOptions {
                seed: ctx.seed,
                ..Default::default()
            };
            if let Some(r) = re_cfg.restarts {
                opts.restarts = r;
            }
            if let Some(s) = re_cfg.steps {
                opts.steps = s;
            }
            if let Some(s) = re_cfg.samples {
                opts.samples = s;
            }
            let est = match re_cfg.q.as_str() {
                "q1" => diagnostics::re_constant_with(&dataset, re_cfg.s, re_cfg.c0, ConeNorm::Q1, &opts)?,
                "q2" => diagnostics::re_constant_with(&dataset, re_cfg.s, re_cfg.c0, ConeNorm::Q2, &opts)?,
                "subspace" => diagnostics::re2_constant_with(&dataset, re_cfg.s, &opts)?,
                other => {
                    return Err(CliError::Input(format!(
                        "unknown cone {other:?}; expected q1, q2, or subspace"
                    )))
                }
            };
            Some(est)
        }
        None => None,
    };

    let metrics = match &dg.truth {
        Some(rel) => {
            let truth = io::read_truth(&ctx.resolve(rel), dataset.n_features(), dataset.n_tasks())?;
            Some(compute_metrics(&truth, &b, &dataset)?)
        }
        None => None,
    };

    let penalty_norms = json!({
        "l21_rows": lpq_norm(&b.values, 2.0, 1.0, NormAxis::Rows),
        "nuclear": spectra::nuclear_norm(&b.values)?,
    });

    ctx.write_json(
        "diagnose.json",
        &json!({
            "kkt": kkt,
            "design_constants": constants,
            "sparsity": sparsity,
            "re_estimate": re,
            "metrics": metrics,
            "penalty_norms": penalty_norms,
        }),
    )?;
    Ok(())
}

pub fn cmd_bounds(config_path: &Path, ov: &Overrides) -> CliResult<()> {
    let cfg = ConfigFile::load(config_path)?;
    let bounds_cfg = cfg
        .bounds
        .clone()
        .ok_or_else(|| CliError::Input("config has no `bounds` section".into()))?;
    let ctx = Context::new(config_path, &cfg, ov)?;
    let report = match bounds_cfg {
        BoundsConfig::Ring {
            s,
            p,
            n,
            m,
            sigma,
            a_const,
            kappa,
            phi_max,
        } => bound_ring(s, p, n, m, sigma, a_const, kappa, phi_max)?,
        BoundsConfig::LassoL1p(inputs) => bound_lasso_l1p(&inputs)?,
        BoundsConfig::L12Merge2(inputs) => bound_l12merge2(&inputs)?,
        BoundsConfig::Persistence {
            v,
            n,
            p,
            m,
            eta,
            b,
            sum_norms1_sq,
        } => bound_persistence(v, n, p, m, eta, b, sum_norms1_sq)?,
        BoundsConfig::LassoesTheorem1 {
            risk0,
            min_risk,
            lambda,
            m,
            delta_n,
            norms0_sq,
            norms_hat_sq,
        } => bound_lassoes_theorem1(risk0, min_risk, lambda, m, delta_n, norms0_sq, norms_hat_sq)?,
    };
    for part in &report.parts {
        println!("{} {} = {}", report.bound, part.name, part.value);
    }
    ctx.write_json("bounds.json", &serde_json::to_value(&report).map_err(|e| {
        CliError::Internal(format!("encode bounds: {e}"))
    })?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_rejects_unknown_keys() {
        let body = r#"{"schema_version": 1, "mystery": 3}"#;
        let parsed: std::result::Result<ConfigFile, _> = serde_json::from_str(body);
        assert!(parsed.is_err());
    }

    #[test]
    fn config_rejects_wrong_version() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"schema_version": 99}"#).unwrap();
        let err = ConfigFile::load(&path).unwrap_err();
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn options_round_trip_through_config() {
        let cfg = ConfigFile {
            schema_version: 1,
            seed: Some(7),
            out_dir: None,
            emit_plots: Some(false),
            fit: Some(FitConfig {
                dataset: "data/manifest.json".into(),
                penalty: PenaltyKind::Lassoes,
                lassoes: Some(LassoesOptions {
                    alpha: 3.0,
                    lambda: 0.5,
                    ..Default::default()
                }),
                group: None,
                ring: None,
            }),
            simulate: None,
            reproduce_table1: None,
            diagnose: None,
            bounds: None,
        };
        let body = serde_json::to_string(&cfg).unwrap();
        let back: ConfigFile = serde_json::from_str(&body).unwrap();
        assert_eq!(back.fit.unwrap().lassoes.unwrap().alpha, 3.0);
    }
}
