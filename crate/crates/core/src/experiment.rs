//! Config-driven experiments: sweep nesting level, energy scale and penalty,
//! then reduce the samples to success curves, boosts and the exponent fit.

use std::fmt;
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{
    compute_boost, default_p0, estimate_success, fit_eta, optimize_gamma, repeated_success, repetition_count,
    BoostOptions, BoostResult, CurvePoint, EtaFit, SuccessCurve,
};
use crate::chimera::{apply_embedding, choi_embed, heuristic_embed, ChimeraGraph, FieldMode};
use crate::error::{domain, Error, Result};
use crate::fixtures;
use crate::ising::{brute_force_ground, GroundSet, IsingProblem};
use crate::nesting::{encode_nested, DecodeMode};
use crate::protocol::{run_protocol, EmbeddingMode, ProtocolOptions};
use crate::pt::{geometric_ladder, run_pt, PtParams};
use crate::rng::{derive_rng, derive_seed, Stream};
use crate::samples::SampleSet;
use crate::sqa::{default_schedule, Schedule, SqaParams};

/// Penalties tried at every `(C, α)`.
pub const DEFAULT_GAMMAS: [f64; 11] = [0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn default_gammas() -> Vec<f64> {
    DEFAULT_GAMMAS.to_vec()
}

/// Hash of the library sources this binary was built from.
pub const SOURCE_DIGEST: &str = env!("NQAC_SOURCE_DIGEST");

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Engine {
    #[default]
    Sqa,
    Pt,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PtSettings {
    pub target_beta: f64,
    pub min_beta: f64,
    pub ladder_size: usize,
    pub sweeps: usize,
    pub swap_interval: usize,
    /// Samples per point; defaults to cycles × runs per cycle.
    pub samples: Option<usize>,
}

impl Default for PtSettings {
    fn default() -> Self {
        Self {
            target_beta: 2.0,
            min_beta: 0.1,
            ladder_size: 16,
            sweeps: 10_000,
            swap_interval: 10,
            samples: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// JSON problem file, or `fixture:<name>` for a bundled instance.
    pub problem: String,
    pub levels: Vec<usize>,
    pub alphas: Vec<f64>,
    pub gammas: Vec<f64>,
    pub engine: Engine,
    /// Seed inside is ignored; every point derives its own.
    pub sqa: SqaParams,
    /// `s,A,B` CSV; the linear schedule when absent.
    pub schedule: Option<String>,
    pub pt: PtSettings,
    pub embedding: EmbeddingMode,
    /// Hardware file; a perfect 8×8 Chimera graph when absent.
    pub hardware: Option<String>,
    pub chain_gamma: Option<f64>,
    pub field_mode: FieldMode,
    pub cycles: usize,
    pub runs_per_cycle: usize,
    pub gauge: bool,
    pub permute: bool,
    pub decode: DecodeMode,
    pub seed: Option<u64>,
    pub out: Option<String>,
    /// Reference probability for the boost; midpoint of the `C = 1` curve
    /// when absent.
    pub p0: Option<f64>,
    pub smoothing: f64,
    pub fit_count: usize,
    /// Also write success curves adjusted for classical repetition.
    pub repetition: bool,
    pub save_samples: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: "fixture:k4_antiferromagnet".into(),
            levels: vec![1, 2, 3, 4],
            alphas: vec![1.0],
            gammas: default_gammas(),
            engine: Engine::Sqa,
            sqa: SqaParams::default(),
            schedule: None,
            pt: PtSettings::default(),
            embedding: EmbeddingMode::None,
            hardware: None,
            chain_gamma: None,
            field_mode: FieldMode::First,
            cycles: 20,
            runs_per_cycle: 1000,
            gauge: true,
            permute: true,
            decode: DecodeMode::Joint,
            seed: None,
            out: None,
            p0: None,
            smoothing: 0.0,
            fit_count: 4,
            repetition: false,
            save_samples: true,
        }
    }
}

#[derive(Serialize, Deserialize)]
struct Manifest {
    version: String,
    source_digest: String,
    problem_digest: String,
    config: ExperimentConfig,
    outputs: std::collections::BTreeMap<String, String>,
}

impl ExperimentConfig {
    /// Reads a config, or the config embedded in a manifest. Relative paths
    /// are resolved against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let value: serde_json::Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let inner = match value.get("config") {
            Some(c) if value.get("source_digest").is_some() => c.clone(),
            _ => value,
        };
        let mut cfg: Self = serde_json::from_value(inner)?;
        let dir = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(dir);
        Ok(cfg)
    }

    fn resolve_paths(&mut self, dir: &Path) {
        let fix = |p: &mut String| {
            if !p.starts_with("fixture:") && Path::new(p.as_str()).is_relative() {
                *p = dir.join(&*p).to_string_lossy().into_owned();
            }
        };
        fix(&mut self.problem);
        for p in [&mut self.schedule, &mut self.hardware, &mut self.out].into_iter().flatten() {
            fix(p);
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.alphas.is_empty() || self.gammas.is_empty() {
            return Err(domain("levels, alphas and gammas must be non-empty"));
        }
        if self.levels.iter().any(|&c| c < 1) {
            return Err(domain("nesting levels must be at least 1"));
        }
        if self.alphas.iter().any(|a| !(*a > 0.0 && *a <= 1.0)) {
            return Err(domain("alphas must lie in (0, 1]"));
        }
        if self.gammas.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(domain("gammas must be positive"));
        }
        if self.seed.is_none() {
            return Err(domain("a master seed is required"));
        }
        if self.cycles < 1 || self.runs_per_cycle < 1 {
            return Err(domain("cycles and runs per cycle must be at least 1"));
        }
        if self.fit_count < 2 {
            return Err(domain("fit_count must be at least 2"));
        }
        if !(0.0..=1.0).contains(&self.smoothing) {
            return Err(domain("smoothing must lie in [0, 1]"));
        }
        self.sqa.validate()?;
        self.pt_params(0)?.validate()?;
        Ok(())
    }

    fn pt_params(&self, seed: u64) -> Result<PtParams> {
        Ok(PtParams {
            betas: geometric_ladder(self.pt.min_beta, self.pt.target_beta, self.pt.ladder_size)?,
            sweeps: self.pt.sweeps,
            swap_interval: self.pt.swap_interval,
            seed,
        })
    }

    /// Penalties tried at level `C`. Without an embedding the `C = 1`
    /// problem has no penalty, so a single run suffices.
    fn gammas_for(&self, level: usize) -> &[f64] {
        if level == 1 && self.embedding == EmbeddingMode::None {
            &self.gammas[..1]
        } else {
            &self.gammas
        }
    }
}

/// Which part of the pipeline failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    Config,
    Encode,
    Embed,
    Sample,
    Analyze,
    Write,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Stage::Config => "config",
            Stage::Encode => "encode",
            Stage::Embed => "embed",
            Stage::Sample => "sample",
            Stage::Analyze => "analyze",
            Stage::Write => "write",
        };
        f.write_str(name)
    }
}

#[derive(Debug, thiserror::Error)]
#[error("{stage} stage failed: {source}")]
pub struct StageError {
    pub stage: Stage,
    #[source]
    pub source: Error,
}

fn at(stage: Stage) -> impl FnOnce(Error) -> StageError {
    move |source| StageError { stage, source }
}

fn is_embedding_error(e: &Error) -> bool {
    matches!(
        e,
        Error::EmbeddingNotFound { .. } | Error::InvalidEmbedding(_) | Error::Capacity(_) | Error::Unsupported(_)
    )
}

/// Which steps `run_experiment` performs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum RunStage {
    #[default]
    All,
    /// Sample and write `grid.csv` only.
    Sample,
    /// Recompute the reductions from an existing `grid.csv`.
    Analyze,
}

/// Success probability at one `(C, α, γ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridRow {
    pub level: usize,
    pub alpha: f64,
    pub gamma: f64,
    pub p: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOutput {
    pub grid: Vec<GridRow>,
    pub curves: Vec<SuccessCurve>,
    pub boost: Option<BoostResult>,
    pub eta: Option<EtaFit>,
}

struct Inputs {
    base: IsingProblem,
    ground: GroundSet,
    schedule: Schedule,
    hardware: Option<ChimeraGraph>,
}

pub fn load_problem(spec: &str) -> Result<IsingProblem> {
    match spec.strip_prefix("fixture:") {
        Some(name) => fixtures::by_name(name).ok_or_else(|| domain(format!("unknown fixture {name}"))),
        None => IsingProblem::load(spec),
    }
}

fn load_inputs(cfg: &ExperimentConfig) -> std::result::Result<Inputs, StageError> {
    let base = load_problem(&cfg.problem).map_err(at(Stage::Config))?;
    let schedule = match &cfg.schedule {
        Some(path) => Schedule::load(path).map_err(at(Stage::Config))?,
        None => default_schedule(),
    };
    let hardware = match (cfg.embedding, &cfg.hardware) {
        (EmbeddingMode::None, _) => None,
        (_, Some(path)) => Some(ChimeraGraph::load(path).map_err(at(Stage::Config))?),
        (_, None) => Some(ChimeraGraph::perfect(8, 8)),
    };
    let ground = brute_force_ground(&base).map_err(at(Stage::Encode))?;
    Ok(Inputs {
        base,
        ground,
        schedule,
        hardware,
    })
}

struct Unit {
    level: usize,
    alpha: f64,
    gamma: f64,
}

impl Unit {
    fn seed(&self, master: u64) -> u64 {
        derive_seed(
            master,
            Stream::Experiment,
            &[self.level as u64, self.alpha.to_bits(), self.gamma.to_bits()],
        )
    }

    fn file_stem(&self) -> String {
        format!("C{}_alpha{}_gamma{}", self.level, self.alpha, self.gamma)
    }
}

fn units(cfg: &ExperimentConfig) -> Vec<Unit> {
    let mut out = Vec::new();
    for &level in &cfg.levels {
        for &alpha in &cfg.alphas {
            for &gamma in cfg.gammas_for(level) {
                out.push(Unit { level, alpha, gamma });
            }
        }
    }
    out
}

fn sample_unit(cfg: &ExperimentConfig, inputs: &Inputs, unit: &Unit) -> std::result::Result<SampleSet, StageError> {
    let seed = unit.seed(cfg.seed.expect("validated"));
    let np = encode_nested(&inputs.base, unit.level, unit.gamma)
        .and_then(|np| np.with_alpha(unit.alpha))
        .map_err(at(Stage::Encode))?;
    let classify = |e: Error| {
        let stage = if is_embedding_error(&e) { Stage::Embed } else { Stage::Sample };
        StageError { stage, source: e }
    };
    match cfg.engine {
        Engine::Sqa => {
            let params = SqaParams { seed, ..cfg.sqa.clone() };
            let opts = ProtocolOptions {
                cycles: cfg.cycles,
                runs_per_cycle: cfg.runs_per_cycle,
                gauge: cfg.gauge,
                permute: cfg.permute,
                embedding: cfg.embedding,
                chain_gamma: cfg.chain_gamma,
                field_mode: cfg.field_mode,
                ..ProtocolOptions::default()
            };
            run_protocol(&np, inputs.hardware.as_ref(), &inputs.schedule, &params, &opts).map_err(classify)
        }
        Engine::Pt => {
            let (problem, embedding) = match (cfg.embedding, &inputs.hardware) {
                (EmbeddingMode::None, _) | (_, None) => (np.programmed(), None),
                (mode, Some(g)) => {
                    let e = if mode == EmbeddingMode::Choi {
                        choi_embed(np.nested_n(), g)
                    } else {
                        let mut rng = derive_rng(seed, Stream::Embed, &[]);
                        heuristic_embed(&np.nested().coupling_graph(), g, &mut rng, 8)
                    }
                    .map_err(classify)?;
                    let pp = apply_embedding(&np, &e, g, cfg.chain_gamma.unwrap_or(unit.gamma), cfg.field_mode)
                        .map_err(classify)?;
                    (pp.programmed(), Some(e))
                }
            };
            let n = cfg.pt.samples.unwrap_or(cfg.cycles * cfg.runs_per_cycle);
            let mut sets = run_pt(&problem, &cfg.pt_params(seed).map_err(at(Stage::Config))?, n).map_err(classify)?;
            let mut set = sets.pop().expect("non-empty ladder").samples;
            for c in &mut set.cycles {
                c.embedding = embedding.clone();
            }
            Ok(set)
        }
    }
}

fn evaluate_unit(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    unit: &Unit,
) -> std::result::Result<(GridRow, Option<SampleSet>), StageError> {
    let set = sample_unit(cfg, inputs, unit)?;
    let np = encode_nested(&inputs.base, unit.level, unit.gamma)
        .and_then(|np| np.with_alpha(unit.alpha))
        .map_err(at(Stage::Encode))?;
    let est = estimate_success(&set, &np, &inputs.ground, cfg.decode, unit.seed(cfg.seed.expect("validated")))
        .map_err(at(Stage::Analyze))?;
    let row = GridRow {
        level: unit.level,
        alpha: unit.alpha,
        gamma: unit.gamma,
        p: est.p,
        stderr: est.stderr,
    };
    Ok((row, cfg.save_samples.then_some(set)))
}

fn write(path: &Path, text: &str) -> std::result::Result<(), StageError> {
    fs::write(path, text).map_err(|e| StageError {
        stage: Stage::Write,
        source: e.into(),
    })
}

pub fn grid_csv(rows: &[GridRow]) -> String {
    let mut s = String::from("C,alpha,gamma,P,stderr\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{}\n", r.level, r.alpha, r.gamma, r.p, r.stderr));
    }
    s
}

pub fn parse_grid_csv(text: &str) -> Result<Vec<GridRow>> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        let bad = || Error::Parse(format!("grid line {}: {line}", i + 1));
        if f.len() != 5 {
            return Err(bad());
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad());
        rows.push(GridRow {
            level: f[0].trim().parse().map_err(|_| bad())?,
            alpha: num(f[1])?,
            gamma: num(f[2])?,
            p: num(f[3])?,
            stderr: num(f[4])?,
        });
    }
    Ok(rows)
}

/// Best penalty at every `(C, α)`, as one curve per level.
pub fn curves_from_grid(rows: &[GridRow]) -> Result<Vec<SuccessCurve>> {
    let mut levels: Vec<usize> = rows.iter().map(|r| r.level).collect();
    levels.sort_unstable();
    levels.dedup();
    levels
        .into_iter()
        .map(|level| {
            let mut alphas: Vec<f64> = rows.iter().filter(|r| r.level == level).map(|r| r.alpha).collect();
            alphas.sort_by(f64::total_cmp);
            alphas.dedup();
            let points = alphas
                .into_iter()
                .map(|alpha| {
                    let here: Vec<&GridRow> = rows.iter().filter(|r| r.level == level && r.alpha == alpha).collect();
                    let pairs: Vec<(f64, f64)> = here.iter().map(|r| (r.gamma, r.p)).collect();
                    let (gamma, p) = optimize_gamma(&pairs)?;
                    let stderr = here.iter().find(|r| r.gamma == gamma).expect("chosen row").stderr;
                    Ok(CurvePoint {
                        alpha,
                        p,
                        stderr,
                        gamma: Some(gamma),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            SuccessCurve::new(level, points)
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn curves_csv(curves: &[SuccessCurve]) -> String {
    let mut s = String::from("C,alpha,gamma_star,P,stderr\n");
    for c in curves {
        for p in c.points() {
            s.push_str(&format!("{},{},{},{},{}\n", c.level, p.alpha, opt(p.gamma), p.p, p.stderr));
        }
    }
    s
}

pub fn boost_csv(boost: &BoostResult) -> String {
    let mut s = String::from("C,mu_mid,mu_low,mu_high\n");
    for e in &boost.entries {
        s.push_str(&format!("{},{},{},{}\n", e.level, opt(e.mu_mid), opt(e.mu_low), opt(e.mu_high)));
    }
    s
}

fn eta_text(boost: Option<&BoostResult>, fit: Option<&EtaFit>) -> String {
    match (boost, fit) {
        (Some(b), Some(f)) => format!(
            "eta = {}\nslope = {}\nintercept = {}\nfit_points = {}\np0 = {}\n",
            f.eta, f.slope, f.intercept, f.points, b.p0
        ),
        (Some(b), None) => format!("eta = unavailable (fewer than two boosts found)\np0 = {}\n", b.p0),
        _ => "eta = unavailable (no C = 1 curve)\n".into(),
    }
}

fn repetition_csv(curves: &[SuccessCurve], n: usize) -> Result<String> {
    let max_level = curves.iter().map(|c| c.level).max().unwrap_or(1);
    let mut s = String::from("C,alpha,M,P_adjusted\n");
    for c in curves {
        let m = repetition_count(c.level, max_level, n)?;
        for p in c.points() {
            s.push_str(&format!("{},{},{},{}\n", c.level, p.alpha, m, repeated_success(p.p, m)?));
        }
    }
    Ok(s)
}

/// Reduces grid rows to curves, the boost and the exponent, and writes the
/// corresponding files to `out`.
fn analyze(cfg: &ExperimentConfig, logical_n: usize, grid: Vec<GridRow>, out: &Path) -> std::result::Result<ExperimentOutput, StageError> {
    let curves = curves_from_grid(&grid).map_err(at(Stage::Analyze))?;
    write(&out.join("curves.csv"), &curves_csv(&curves))?;
    let boost = if curves.iter().any(|c| c.level == 1) {
        let p0 = match cfg.p0 {
            Some(p) => p,
            None => default_p0(&curves).map_err(at(Stage::Analyze))?,
        };
        let b = compute_boost(&curves, p0, &BoostOptions { smoothing: cfg.smoothing }).map_err(at(Stage::Analyze))?;
        Some(b)
    } else {
        None
    };
    let eta = boost.as_ref().and_then(|b| fit_eta(&b.mu_points(), cfg.fit_count).ok());
    if let Some(b) = &boost {
        write(&out.join("boost.csv"), &boost_csv(b))?;
    }
    write(&out.join("eta.txt"), &eta_text(boost.as_ref(), eta.as_ref()))?;
    if cfg.repetition {
        write(&out.join("repetition.csv"), &repetition_csv(&curves, logical_n).map_err(at(Stage::Analyze))?)?;
    }
    Ok(ExperimentOutput { grid, curves, boost, eta })
}

fn file_digest(path: &Path) -> std::result::Result<String, StageError> {
    let bytes = fs::read(path).map_err(|e| StageError {
        stage: Stage::Write,
        source: e.into(),
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write_manifest(cfg: &ExperimentConfig, base: &IsingProblem, out: &Path) -> std::result::Result<(), StageError> {
    let mut outputs = std::collections::BTreeMap::new();
    for name in ["grid.csv", "curves.csv", "boost.csv", "eta.txt", "repetition.csv"] {
        let path = out.join(name);
        if path.exists() {
            outputs.insert(name.to_string(), file_digest(&path)?);
        }
    }
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").into(),
        source_digest: SOURCE_DIGEST.into(),
        problem_digest: base.digest(),
        config: ExperimentConfig { out: None, ..cfg.clone() },
        outputs,
    };
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| StageError {
        stage: Stage::Write,
        source: e.into(),
    })?;
    write(&out.join("manifest.json"), &(text + "\n"))
}

/// Runs the experiment into `out` with `jobs` worker threads. Outputs do not
/// depend on `jobs`. On failure, rows already computed are still written to
/// `grid.csv`.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    out: &Path,
    jobs: usize,
    stage: RunStage,
) -> std::result::Result<ExperimentOutput, StageError> {
    cfg.validate().map_err(at(Stage::Config))?;
    let inputs = load_inputs(cfg)?;
    fs::create_dir_all(out).map_err(|e| StageError {
        stage: Stage::Write,
        source: e.into(),
    })?;
    if stage == RunStage::Analyze {
        let text = fs::read_to_string(out.join("grid.csv")).map_err(|e| StageError {
            stage: Stage::Config,
            source: e.into(),
        })?;
        let grid = parse_grid_csv(&text).map_err(at(Stage::Config))?;
        let result = analyze(cfg, inputs.base.n(), grid, out)?;
        write_manifest(cfg, &inputs.base, out)?;
        return Ok(result);
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| StageError {
            stage: Stage::Config,
            source: domain(format!("cannot start worker pool: {e}")),
        })?;
    let units = units(cfg);
    let results: Vec<_> = pool.install(|| units.par_iter().map(|u| evaluate_unit(cfg, &inputs, u)).collect());

    let mut grid = Vec::with_capacity(results.len());
    let mut first_error = None;
    if cfg.save_samples {
        fs::create_dir_all(out.join("samples")).map_err(|e| StageError {
            stage: Stage::Write,
            source: e.into(),
        })?;
    }
    for (unit, result) in units.iter().zip(results) {
        match result {
            Ok((row, set)) => {
                if let Some(set) = set {
                    let path = out.join("samples").join(format!("{}.ndjson", unit.file_stem()));
                    set.save(&path).map_err(at(Stage::Write))?;
                }
                grid.push(row);
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    write(&out.join("grid.csv"), &grid_csv(&grid))?;
    if let Some(e) = first_error {
        return Err(e);
    }
    let result = if stage == RunStage::All {
        analyze(cfg, inputs.base.n(), grid, out)?
    } else {
        ExperimentOutput {
            grid,
            curves: Vec::new(),
            boost: None,
            eta: None,
        }
    };
    write_manifest(cfg, &inputs.base, out)?;
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> ExperimentConfig {
        ExperimentConfig {
            levels: vec![1, 2],
            alphas: vec![0.2, 1.0],
            gammas: vec![0.5, 1.0],
            sqa: SqaParams {
                sweeps: 200,
                trotter_slices: 8,
                ..SqaParams::default()
            },
            cycles: 2,
            runs_per_cycle: 20,
            seed: Some(5),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn default_gamma_grid() {
        assert_eq!(default_gammas(), vec![0.05, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0]);
    }

    #[test]
    fn validation() {
        assert!(tiny().validate().is_ok());
        assert!(ExperimentConfig { seed: None, ..tiny() }.validate().is_err());
        assert!(ExperimentConfig { alphas: vec![], ..tiny() }.validate().is_err());
        assert!(ExperimentConfig { alphas: vec![1.5], ..tiny() }.validate().is_err());
        assert!(ExperimentConfig { levels: vec![0], ..tiny() }.validate().is_err());
    }

    #[test]
    fn grid_roundtrip_and_gamma_choice() {
        let rows = vec![
            GridRow { level: 1, alpha: 0.5, gamma: 0.5, p: 0.4, stderr: 0.01 },
            GridRow { level: 2, alpha: 0.5, gamma: 0.5, p: 0.6, stderr: 0.02 },
            GridRow { level: 2, alpha: 0.5, gamma: 1.0, p: 0.7, stderr: 0.03 },
        ];
        let text = grid_csv(&rows);
        assert_eq!(parse_grid_csv(&text).unwrap(), rows);
        let curves = curves_from_grid(&rows).unwrap();
        assert_eq!(curves[1].points()[0].gamma, Some(1.0));
        assert_eq!(curves[1].points()[0].stderr, 0.03);
        assert!(curves_csv(&curves).starts_with("C,alpha,gamma_star,P,stderr\n1,0.5,0.5,0.4,0.01\n"));
        assert!(parse_grid_csv("h\n1,2\n").is_err());
    }

    #[test]
    fn end_to_end_is_deterministic_across_job_counts() {
        let dir = tempfile::tempdir().unwrap();
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        let cfg = tiny();
        let ra = run_experiment(&cfg, &a, 1, RunStage::All).unwrap();
        run_experiment(&cfg, &b, 3, RunStage::All).unwrap();
        for f in ["grid.csv", "curves.csv", "boost.csv", "eta.txt", "manifest.json"] {
            assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
        }
        // C = 1 without an embedding needs one penalty only.
        assert_eq!(ra.grid.len(), 2 + 4);
        assert_eq!(fs::read_dir(a.join("samples")).unwrap().count(), 6);
    }

    #[test]
    fn manifest_reruns_and_analyze_stage() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("run");
        let cfg = ExperimentConfig { save_samples: false, ..tiny() };
        run_experiment(&cfg, &out, 1, RunStage::Sample).unwrap();
        assert!(!out.join("curves.csv").exists());
        run_experiment(&cfg, &out, 1, RunStage::Analyze).unwrap();
        let curves = fs::read(out.join("curves.csv")).unwrap();

        let again = dir.path().join("again");
        let from_manifest = ExperimentConfig::load(out.join("manifest.json")).unwrap();
        run_experiment(&from_manifest, &again, 2, RunStage::All).unwrap();
        assert_eq!(fs::read(again.join("curves.csv")).unwrap(), curves);
    }

    #[test]
    fn failures_are_stage_tagged() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            problem: dir.path().join("missing.json").to_string_lossy().into_owned(),
            ..tiny()
        };
        assert_eq!(run_experiment(&cfg, dir.path(), 1, RunStage::All).unwrap_err().stage, Stage::Config);

        let cfg = ExperimentConfig {
            levels: vec![4],
            problem: "fixture:k10_harder".into(),
            embedding: EmbeddingMode::Choi,
            hardware: None,
            ..tiny()
        };
        // K_40 needs chains of 11 but the default hardware is 8×8.
        let err = run_experiment(&cfg, &dir.path().join("e"), 1, RunStage::All).unwrap_err();
        assert_eq!(err.stage, Stage::Embed);
    }

    #[test]
    fn relative_paths_follow_the_config_file() {
        let dir = tempfile::tempdir().unwrap();
        crate::fixtures::k4_antiferromagnet().save(dir.path().join("k4.json")).unwrap();
        let cfg = ExperimentConfig { problem: "k4.json".into(), ..tiny() };
        fs::write(dir.path().join("cfg.json"), serde_json::to_string(&cfg).unwrap()).unwrap();
        let loaded = ExperimentConfig::load(dir.path().join("cfg.json")).unwrap();
        assert_eq!(load_problem(&loaded.problem).unwrap(), crate::fixtures::k4_antiferromagnet());
    }
}
