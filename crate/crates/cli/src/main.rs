use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};

use nqac::analysis::estimate_success;
use nqac::chimera::{choi_embed, embedding_stats, heuristic_embed, validate_embedding, ChimeraGraph};
use nqac::experiment::{load_problem, run_experiment, ExperimentConfig, RunStage, Stage};
use nqac::ising::{brute_force_ground, IsingProblem};
use nqac::meanfield::{free_energy_grid, minimize_magnetization, FreeEnergyForm, MeanFieldPoint};
use nqac::nesting::{encode_nested, DecodeMode};
use nqac::pt::{geometric_ladder, run_pt, PtParams};
use nqac::rng::{derive_rng, Stream};
use nqac::samples::SampleSet;
use nqac::sqa::{default_schedule, run_sqa, sample_noise, BetaConvention, Schedule, SqaParams};

const CONFIG_ERROR: u8 = 2;
const EMBEDDING_ERROR: u8 = 3;
const COMPUTE_ERROR: u8 = 4;

#[derive(Parser)]
#[command(name = "nqac", version, about = "Nested quantum annealing correction toolkit")]
struct Cli {
    /// Master seed; overrides the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a full experiment from a JSON config (or a previous manifest).
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum, default_value_t = StageArg::All)]
        stage: StageArg,
    },
    /// Build the nested problem and write its programmed Hamiltonian.
    Encode(EncodeArgs),
    /// Minor-embed a problem's coupling graph into Chimera hardware.
    Embed(EmbedArgs),
    /// Exhaustive ground-state search.
    Bruteforce {
        #[arg(long)]
        problem: String,
    },
    /// Simulated quantum annealing of a problem file.
    Sqa(SqaArgs),
    /// Parallel tempering of a problem file; one sample file per β.
    Pt(PtArgs),
    /// Mean-field free-energy surface, or its minimizing magnetization.
    Meanfield(MeanfieldArgs),
    /// Decode a sample file and report the logical success probability.
    Analyze(AnalyzeArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StageArg {
    All,
    Sample,
    Analyze,
}

#[derive(Args)]
struct EncodeArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Where to write the nesting metadata.
    #[arg(long)]
    sidecar: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Choi,
    Heuristic,
}

#[derive(Args)]
struct EmbedArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum, default_value_t = Method::Heuristic)]
    method: Method,
    /// Hardware file; a perfect 8×8 graph when absent.
    #[arg(long, conflicts_with = "dw2_like")]
    hardware: Option<PathBuf>,
    /// The bundled 8×8 graph with eight dead qubits.
    #[arg(long)]
    dw2_like: bool,
    #[arg(long, default_value_t = 8)]
    tries: usize,
}

#[derive(Args)]
struct SqaArgs {
    #[arg(long)]
    problem: String,
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    anneals: usize,
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 64)]
    slices: usize,
    #[arg(long, default_value_t = 0.1)]
    beta: f64,
    /// Treat `--beta` as the total path-integral inverse temperature.
    #[arg(long)]
    total_beta: bool,
    /// Coupler noise, drawn once for the whole batch.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
}

#[derive(Args)]
struct PtArgs {
    #[arg(long)]
    problem: String,
    #[arg(long, default_value_t = 2.0)]
    beta_max: f64,
    #[arg(long, default_value_t = 0.1)]
    beta_min: f64,
    #[arg(long, default_value_t = 16)]
    ladder: usize,
    #[arg(long, default_value_t = 10_000)]
    sweeps: usize,
    #[arg(long, default_value_t = 10)]
    swap_interval: usize,
    #[arg(long, default_value_t = 1000)]
    samples: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormArg {
    Thermodynamic,
    FiniteN,
}

#[derive(Args)]
struct MeanfieldArgs {
    #[arg(long, default_value_t = 1)]
    level: usize,
    #[arg(long, default_value_t = 0.5)]
    gamma: f64,
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    #[arg(long, default_value_t = 1.0)]
    j: f64,
    #[arg(long, default_value_t = 4)]
    n: usize,
    #[arg(long, value_enum, default_value_t = FormArg::Thermodynamic)]
    form: FormArg,
    #[arg(long)]
    schedule: Option<PathBuf>,
    #[arg(long, default_value_t = 50)]
    s_steps: usize,
    #[arg(long, default_value_t = 100)]
    m_steps: usize,
    /// Print the minimizing magnetization at this schedule point instead.
    #[arg(long)]
    minimize_at: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum DecodeArg {
    Joint,
    TwoStage,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(long)]
    samples: PathBuf,
    /// The logical problem the samples encode.
    #[arg(long)]
    problem: String,
    #[arg(long)]
    level: usize,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, value_enum, default_value_t = DecodeArg::Joint)]
    decode: DecodeArg,
}

struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T> = Result<T, Failure>;

fn config_err(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: CONFIG_ERROR,
        error: error.into(),
    }
}

fn compute_err(error: nqac::Error) -> Failure {
    let code = match error {
        nqac::Error::EmbeddingNotFound { .. }
        | nqac::Error::InvalidEmbedding(_)
        | nqac::Error::Capacity(_)
        | nqac::Error::Unsupported(_) => EMBEDDING_ERROR,
        _ => COMPUTE_ERROR,
    };
    Failure {
        code,
        error: error.into(),
    }
}

fn write_failure(error: impl Into<anyhow::Error>) -> Failure {
    Failure {
        code: COMPUTE_ERROR,
        error: error.into(),
    }
}

fn problem(spec: &str) -> CliResult<IsingProblem> {
    load_problem(spec)
        .with_context(|| format!("cannot read problem {spec}"))
        .map_err(config_err)
}

fn schedule(path: Option<&Path>) -> CliResult<Schedule> {
    match path {
        Some(p) => Schedule::load(p)
            .with_context(|| format!("cannot read schedule {}", p.display()))
            .map_err(config_err),
        None => Ok(default_schedule()),
    }
}

/// Writes `text` to `out`, or prints it.
fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text)
            .with_context(|| format!("cannot write {}", p.display()))
            .map_err(write_failure),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn seed(cli_seed: Option<u64>) -> u64 {
    cli_seed.unwrap_or(0)
}

fn run(cli: Cli) -> CliResult<()> {
    let out = cli.out.as_deref();
    match cli.command {
        Command::Run { config, stage } => {
            let mut cfg = ExperimentConfig::load(&config)
                .with_context(|| format!("cannot load config {}", config.display()))
                .map_err(config_err)?;
            if cli.seed.is_some() {
                cfg.seed = cli.seed;
            }
            let dir = out
                .map(Path::to_path_buf)
                .or_else(|| cfg.out.as_ref().map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("nqac-out"));
            let jobs = cli
                .jobs
                .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
            let stage = match stage {
                StageArg::All => RunStage::All,
                StageArg::Sample => RunStage::Sample,
                StageArg::Analyze => RunStage::Analyze,
            };
            let result = run_experiment(&cfg, &dir, jobs, stage).map_err(|e| {
                let code = match e.stage {
                    Stage::Config => CONFIG_ERROR,
                    Stage::Embed => EMBEDDING_ERROR,
                    _ => COMPUTE_ERROR,
                };
                Failure { code, error: e.into() }
            })?;
            if let Some(fit) = result.eta {
                eprintln!("eta = {:.4} over {} levels", fit.eta, fit.points);
            }
            eprintln!("results in {}", dir.display());
            Ok(())
        }
        Command::Encode(a) => {
            let base = problem(&a.problem)?;
            let np = encode_nested(&base, a.level, a.gamma)
                .and_then(|np| np.with_alpha(a.alpha))
                .map_err(config_err)?;
            if let Some(path) = &a.sidecar {
                let text = serde_json::to_string_pretty(&np.sidecar()).map_err(write_failure)?;
                fs::write(path, text).map_err(write_failure)?;
            }
            emit(out, &np.programmed().to_json().map_err(write_failure)?)
        }
        Command::Embed(a) => {
            let p = problem(&a.problem)?;
            let g = match (&a.hardware, a.dw2_like) {
                (Some(path), _) => ChimeraGraph::load(path)
                    .with_context(|| format!("cannot read hardware {}", path.display()))
                    .map_err(config_err)?,
                (None, true) => ChimeraGraph::dw2_like(),
                (None, false) => ChimeraGraph::perfect(8, 8),
            };
            let source = p.coupling_graph();
            let e = match a.method {
                Method::Choi => choi_embed(p.n(), &g),
                Method::Heuristic => {
                    let mut rng = derive_rng(seed(cli.seed), Stream::Embed, &[]);
                    heuristic_embed(&source, &g, &mut rng, a.tries)
                }
            }
            .map_err(compute_err)?;
            let report = validate_embedding(&e, &source, &g);
            if !report.is_valid() {
                return Err(compute_err(nqac::Error::InvalidEmbedding(report)));
            }
            let stats = embedding_stats(&e);
            eprintln!(
                "{} qubits, longest chain {}, mean chain {:.2}",
                stats.n_qubits, stats.max_chain, stats.mean_chain
            );
            emit(out, &e.to_json().map_err(write_failure)?)
        }
        Command::Bruteforce { problem: spec } => {
            let p = problem(&spec)?;
            let ground = brute_force_ground(&p).map_err(compute_err)?;
            let states: Vec<String> = ground.states.iter().map(|s| s.to_string()).collect();
            let text = serde_json::to_string_pretty(&serde_json::json!({
                "energy": ground.energy,
                "states": states,
            }))
            .map_err(write_failure)?;
            emit(out, &(text + "\n"))
        }
        Command::Sqa(a) => {
            let p = problem(&a.problem)?;
            let sched = schedule(a.schedule.as_deref())?;
            let params = SqaParams {
                sweeps: a.sweeps,
                trotter_slices: a.slices,
                beta: a.beta,
                beta_convention: if a.total_beta {
                    BetaConvention::Total
                } else {
                    BetaConvention::PerSlice
                },
                noise_sigma: a.noise,
                seed: seed(cli.seed),
            };
            params.validate().map_err(config_err)?;
            let mut rng = derive_rng(params.seed, Stream::Cycle, &[0]);
            let noisy = sample_noise(&p, a.noise, &mut rng).map_err(config_err)?;
            let set = run_sqa(&noisy, &sched, &params, a.anneals).map_err(compute_err)?;
            emit(out, &set.to_ndjson().map_err(write_failure)?)
        }
        Command::Pt(a) => {
            let p = problem(&a.problem)?;
            let params = PtParams {
                betas: geometric_ladder(a.beta_min, a.beta_max, a.ladder).map_err(config_err)?,
                sweeps: a.sweeps,
                swap_interval: a.swap_interval,
                seed: seed(cli.seed),
            };
            params.validate().map_err(config_err)?;
            let sets = run_pt(&p, &params, a.samples).map_err(compute_err)?;
            let dir = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("pt-out"));
            fs::create_dir_all(&dir).map_err(write_failure)?;
            let mut index = String::from("index,beta,file\n");
            for (k, s) in sets.iter().enumerate() {
                let name = format!("beta_{k:02}.ndjson");
                s.samples.save(dir.join(&name)).map_err(write_failure)?;
                index.push_str(&format!("{k},{},{name}\n", s.beta));
            }
            fs::write(dir.join("betas.csv"), index).map_err(write_failure)?;
            eprintln!("{} temperatures written to {}", sets.len(), dir.display());
            Ok(())
        }
        Command::Meanfield(a) => {
            let form = match a.form {
                FormArg::Thermodynamic => FreeEnergyForm::Thermodynamic,
                FormArg::FiniteN => FreeEnergyForm::FiniteN,
            };
            let sched = schedule(a.schedule.as_deref())?;
            if let Some(s) = a.minimize_at {
                let (av, bv) = sched.at(s);
                let m = minimize_magnetization(av, bv, a.gamma, a.beta, a.level).map_err(config_err)?;
                return emit(out, &format!("s,A,B,m_star\n{s},{av},{bv},{m}\n"));
            }
            let template = MeanFieldPoint {
                m: 0.0,
                a: 0.0,
                b: 0.0,
                gamma: a.gamma,
                j: a.j,
                n: a.n,
                level: a.level,
                beta: a.beta,
            };
            let csv = free_energy_grid(&template, &sched, a.s_steps, a.m_steps, form).map_err(config_err)?;
            emit(out, &csv)
        }
        Command::Analyze(a) => {
            let base = problem(&a.problem)?;
            let set = SampleSet::load(&a.samples)
                .with_context(|| format!("cannot read samples {}", a.samples.display()))
                .map_err(config_err)?;
            let np = encode_nested(&base, a.level, a.gamma).map_err(config_err)?;
            let ground = brute_force_ground(&base).map_err(compute_err)?;
            let mode = match a.decode {
                DecodeArg::Joint => DecodeMode::Joint,
                DecodeArg::TwoStage => DecodeMode::TwoStage,
            };
            let est = estimate_success(&set, &np, &ground, mode, seed(cli.seed)).map_err(compute_err)?;
            emit(out, &format!("P,stderr,cycles\n{},{},{}\n", est.p, est.stderr, est.per_cycle.len()))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}
