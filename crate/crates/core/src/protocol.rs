//! Programming cycles: each cycle draws a nested-vertex permutation, an
//! embedding, a gauge and a noise realization, then runs a batch of anneals.

use serde::{Deserialize, Serialize};

use crate::chimera::{apply_embedding, choi_embed, heuristic_embed, ChimeraGraph, Embedding, FieldMode};
use crate::error::{domain, Error, Result};
use crate::ising::{apply_gauge, GaugeTransform, IsingProblem};
use crate::nesting::{permute_nested, random_permutation, NestedProblem};
use crate::rng::{derive_rng, Stream};
use crate::samples::{CycleInfo, SampleSet};
use crate::sqa::{anneal_batch, sample_noise, Schedule, SqaParams};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Sample the nested problem directly.
    #[default]
    None,
    Choi,
    Heuristic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProtocolOptions {
    pub cycles: usize,
    pub runs_per_cycle: usize,
    /// Random gauge per cycle.
    pub gauge: bool,
    /// Random nested-vertex permutation per cycle.
    pub permute: bool,
    pub embedding: EmbeddingMode,
    /// Chain penalty; defaults to the nesting penalty.
    pub chain_gamma: Option<f64>,
    pub field_mode: FieldMode,
    /// Fresh permutations tried when the heuristic embedder fails.
    pub embed_retries: usize,
    pub heuristic_tries: usize,
}

impl Default for ProtocolOptions {
    fn default() -> Self {
        Self {
            cycles: 20,
            runs_per_cycle: 1000,
            gauge: true,
            permute: true,
            embedding: EmbeddingMode::None,
            chain_gamma: None,
            field_mode: FieldMode::First,
            embed_retries: 16,
            heuristic_tries: 8,
        }
    }
}

struct Programmed {
    problem: IsingProblem,
    permutation: Option<Vec<usize>>,
    embedding: Option<Embedding>,
}

fn program_cycle(
    np: &NestedProblem,
    hardware: Option<&ChimeraGraph>,
    opts: &ProtocolOptions,
    rng: &mut crate::rng::Rng,
) -> Result<Programmed> {
    let chain_gamma = opts.chain_gamma.unwrap_or(np.gamma());
    let attempts = if opts.permute { opts.embed_retries.max(1) } else { 1 };
    let mut last_err = None;
    for _ in 0..attempts {
        let (permuted, permutation) = if opts.permute {
            let perm = random_permutation(np.nested_n(), rng);
            (permute_nested(np, &perm)?, Some(perm))
        } else {
            (np.clone(), None)
        };
        let embedding = match (opts.embedding, hardware) {
            (EmbeddingMode::None, _) => None,
            (_, None) => return Err(domain("an embedding mode needs a hardware graph")),
            (EmbeddingMode::Choi, Some(g)) => Some(choi_embed(permuted.nested_n(), g)?),
            (EmbeddingMode::Heuristic, Some(g)) => {
                match heuristic_embed(&permuted.nested().coupling_graph(), g, rng, opts.heuristic_tries) {
                    Ok(e) => Some(e),
                    Err(e @ Error::EmbeddingNotFound { .. }) => {
                        last_err = Some(e);
                        continue;
                    }
                    Err(e) => return Err(e),
                }
            }
        };
        let problem = match (&embedding, hardware) {
            (Some(e), Some(g)) => apply_embedding(&permuted, e, g, chain_gamma, opts.field_mode)?.programmed(),
            _ => permuted.programmed(),
        };
        return Ok(Programmed {
            problem,
            permutation,
            embedding,
        });
    }
    Err(last_err.unwrap_or(Error::EmbeddingNotFound { tries: attempts }))
}

/// Runs `opts.cycles` programming cycles of `opts.runs_per_cycle` anneals.
/// Recorded spins have the cycle's gauge undone; cycle metadata says how to
/// decode them.
pub fn run_protocol(
    np: &NestedProblem,
    hardware: Option<&ChimeraGraph>,
    schedule: &Schedule,
    params: &SqaParams,
    opts: &ProtocolOptions,
) -> Result<SampleSet> {
    params.validate()?;
    if opts.cycles < 1 {
        return Err(domain("at least one programming cycle is required"));
    }
    let mut cycles = Vec::with_capacity(opts.cycles);
    let mut records = Vec::with_capacity(opts.cycles * opts.runs_per_cycle);
    for c in 0..opts.cycles {
        let mut rng = derive_rng(params.seed, Stream::Cycle, &[c as u64]);
        let programmed = program_cycle(np, hardware, opts, &mut rng)?;
        let n = programmed.problem.n();
        let gauge = if opts.gauge {
            GaugeTransform::random(n, &mut rng)
        } else {
            GaugeTransform::identity(n)
        };
        let gauged = apply_gauge(&programmed.problem, &gauge)?;
        let noisy = sample_noise(&gauged, params.noise_sigma, &mut rng)?;
        for mut rec in anneal_batch(&noisy, schedule, params, c, opts.runs_per_cycle) {
            rec.spins = gauge.apply_to(&rec.spins)?;
            records.push(rec);
        }
        cycles.push(CycleInfo {
            gauge,
            permutation: programmed.permutation,
            embedding: programmed.embedding,
            digest: noisy.digest(),
        });
    }
    Ok(SampleSet {
        problem_digest: np.programmed().digest(),
        cycles,
        records,
    })
}
