//! Parallel tempering (replica exchange) over a ladder of inverse
//! temperatures, giving classical Gibbs samples of a final Hamiltonian.

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::chimera::PhysicalProblem;
use crate::error::{domain, Result};
use crate::ising::{GaugeTransform, GroundSet, IsingProblem, SpinConfig};
use crate::nesting::{DecodeMode, Decoder, NestedProblem};
use crate::rng::{derive_rng, derive_seed, Stream};
use crate::samples::{CycleInfo, SampleRecord, SampleSet};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PtParams {
    /// Strictly increasing, all positive.
    pub betas: Vec<f64>,
    pub sweeps: usize,
    pub swap_interval: usize,
    pub seed: u64,
}

impl Default for PtParams {
    fn default() -> Self {
        Self {
            betas: geometric_ladder(0.1, 2.0, 16).expect("valid default ladder"),
            sweeps: 10_000,
            swap_interval: 10,
            seed: 0,
        }
    }
}

/// `count` geometrically spaced inverse temperatures from `min` to `max`.
pub fn geometric_ladder(min: f64, max: f64, count: usize) -> Result<Vec<f64>> {
    if !(min > 0.0 && max >= min && max.is_finite()) || count == 0 {
        return Err(domain(format!("bad ladder: {count} betas from {min} to {max}")));
    }
    if count == 1 {
        return Ok(vec![max]);
    }
    let ratio = (max / min).ln() / (count - 1) as f64;
    let mut betas: Vec<f64> = (0..count).map(|k| min * (ratio * k as f64).exp()).collect();
    betas[count - 1] = max;
    Ok(betas)
}

impl PtParams {
    pub fn validate(&self) -> Result<()> {
        if self.betas.is_empty() {
            return Err(domain("the temperature ladder is empty"));
        }
        if self.betas.iter().any(|b| !(*b > 0.0 && b.is_finite())) {
            return Err(domain("every inverse temperature must be positive and finite"));
        }
        if self.betas.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(domain("inverse temperatures must be strictly increasing"));
        }
        if self.swap_interval < 1 || self.sweeps < 1 {
            return Err(domain("sweeps and swap_interval must be at least 1"));
        }
        if self.samples_per_chain() == 0 {
            return Err(domain("no sweep after burn-in falls on a recording step"));
        }
        Ok(())
    }

    pub fn burn_in(&self) -> usize {
        self.sweeps / 2
    }

    /// Recorded configurations per β in one chain.
    pub fn samples_per_chain(&self) -> usize {
        if self.swap_interval == 0 {
            return 0;
        }
        self.sweeps / self.swap_interval - self.burn_in() / self.swap_interval
    }
}

/// Acceptance probability for exchanging the states of two replicas.
pub fn swap_probability(beta_k: f64, beta_k1: f64, e_k: f64, e_k1: f64) -> f64 {
    ((beta_k - beta_k1) * (e_k - e_k1)).exp().min(1.0)
}

/// Single-spin-flip state of one replica.
struct Replica {
    spins: Vec<i8>,
    energy: f64,
}

struct Couplings {
    fields: Vec<f64>,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
}

impl Couplings {
    fn new(p: &IsingProblem) -> Self {
        let n = p.n();
        let alpha = p.alpha();
        let mut lists = vec![Vec::new(); n];
        for (&(i, j), &v) in p.couplings() {
            if v != 0.0 {
                lists[i].push((j, alpha * v));
                lists[j].push((i, alpha * v));
            }
        }
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        for l in lists {
            neighbors.extend(l);
            offsets.push(neighbors.len());
        }
        Self {
            fields: p.fields().iter().map(|h| alpha * h).collect(),
            offsets,
            neighbors,
        }
    }

    fn local_field(&self, spins: &[i8], i: usize) -> f64 {
        let coupled: f64 = self.neighbors[self.offsets[i]..self.offsets[i + 1]]
            .iter()
            .map(|&(j, v)| v * f64::from(spins[j]))
            .sum();
        self.fields[i] + coupled
    }

    fn energy(&self, spins: &[i8]) -> f64 {
        let mut e = 0.0;
        for i in 0..spins.len() {
            let s = f64::from(spins[i]);
            let coupled: f64 = self.neighbors[self.offsets[i]..self.offsets[i + 1]]
                .iter()
                .filter(|&&(j, _)| j > i)
                .map(|&(j, v)| v * f64::from(spins[j]))
                .sum();
            e += s * (self.fields[i] + coupled);
        }
        e
    }

    fn sweep<R: rand::Rng + ?Sized>(&self, r: &mut Replica, beta: f64, rng: &mut R) {
        for i in 0..r.spins.len() {
            let delta = -2.0 * f64::from(r.spins[i]) * self.local_field(&r.spins, i);
            // Heat-bath acceptance; Metropolis flips every spin at β → 0.
            if rng.random::<f64>() * (1.0 + (beta * delta).exp()) < 1.0 {
                r.spins[i] = -r.spins[i];
                r.energy += delta;
            }
        }
    }
}

/// Samples recorded at one ladder temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct PtSamples {
    pub beta: f64,
    /// Each independent chain is one cycle.
    pub samples: SampleSet,
}

fn run_chain(c: &Couplings, params: &PtParams, chain: usize) -> (u64, Vec<Vec<SpinConfig>>) {
    let seed = derive_seed(params.seed, Stream::Tempering, &[chain as u64]);
    let mut rng = crate::rng::rng_from_seed(seed);
    let n = c.fields.len();
    let mut replicas: Vec<Replica> = params
        .betas
        .iter()
        .map(|_| {
            let spins = SpinConfig::random(n, &mut rng).into_vec();
            let energy = c.energy(&spins);
            Replica { spins, energy }
        })
        .collect();
    let mut recorded = vec![Vec::with_capacity(params.samples_per_chain()); params.betas.len()];
    let burn_in = params.burn_in();
    for t in 1..=params.sweeps {
        for (r, &beta) in replicas.iter_mut().zip(&params.betas) {
            c.sweep(r, beta, &mut rng);
        }
        if t % params.swap_interval != 0 {
            continue;
        }
        for k in 0..replicas.len().saturating_sub(1) {
            let p = swap_probability(
                params.betas[k],
                params.betas[k + 1],
                replicas[k].energy,
                replicas[k + 1].energy,
            );
            if p >= 1.0 || rng.random::<f64>() < p {
                replicas.swap(k, k + 1);
            }
        }
        if t > burn_in {
            for (out, r) in recorded.iter_mut().zip(&replicas) {
                out.push(SpinConfig::from_vec_unchecked(r.spins.clone()));
            }
        }
    }
    (seed, recorded)
}

/// Runs as many independent chains as needed for `n_samples` configurations
/// per β (the last chain is truncated). Chains run in parallel.
pub fn run_pt(p: &IsingProblem, params: &PtParams, n_samples: usize) -> Result<Vec<PtSamples>> {
    params.validate()?;
    if n_samples == 0 {
        return Err(domain("at least one sample is required"));
    }
    let couplings = Couplings::new(p);
    let per_chain = params.samples_per_chain();
    let chains = n_samples.div_ceil(per_chain);
    let results: Vec<_> = (0..chains)
        .into_par_iter()
        .map(|chain| run_chain(&couplings, params, chain))
        .collect();
    let digest = p.digest();
    let cycles: Vec<CycleInfo> = (0..chains)
        .map(|_| CycleInfo {
            gauge: GaugeTransform::identity(p.n()),
            permutation: None,
            embedding: None,
            digest: digest.clone(),
        })
        .collect();
    Ok(params
        .betas
        .iter()
        .enumerate()
        .map(|(k, &beta)| {
            let records = results
                .iter()
                .enumerate()
                .flat_map(|(chain, (seed, rec))| {
                    rec[k].iter().enumerate().map(move |(run, spins)| SampleRecord {
                        spins: spins.clone(),
                        cycle: chain,
                        run,
                        seed: *seed,
                    })
                })
                .take(n_samples)
                .collect();
            PtSamples {
                beta,
                samples: SampleSet {
                    problem_digest: digest.clone(),
                    cycles: cycles.clone(),
                    records,
                },
            }
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThermalPoint {
    pub beta: f64,
    pub p: f64,
    /// Binomial standard error.
    pub stderr: f64,
}

/// Logical ground-state frequency of PT samples at every ladder β, decoded
/// by joint majority vote. With `physical`, the embedded problem is sampled.
pub fn thermal_success(
    np: &NestedProblem,
    physical: Option<&PhysicalProblem>,
    params: &PtParams,
    ground: &GroundSet,
    n_samples: usize,
) -> Result<Vec<ThermalPoint>> {
    let problem = match physical {
        Some(pp) => pp.programmed(),
        None => np.programmed(),
    };
    let decoder = Decoder::new(np, physical.map(|pp| pp.embedding()))?;
    let sets = run_pt(&problem, params, n_samples)?;
    sets.iter()
        .enumerate()
        .map(|(k, set)| {
            let mut rng = derive_rng(params.seed, Stream::Decode, &[k as u64]);
            let mut hits = 0usize;
            for r in &set.samples.records {
                if ground.contains(&decoder.decode(&r.spins, DecodeMode::Joint, &mut rng)?.logical) {
                    hits += 1;
                }
            }
            let n = set.samples.len() as f64;
            let p = hits as f64 / n;
            Ok(ThermalPoint {
                beta: set.beta,
                p,
                stderr: (p * (1.0 - p) / n).sqrt(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::k4_antiferromagnet;
    use crate::ising::{brute_force_ground, energy};
    use crate::nesting::encode_nested;

    fn params(betas: Vec<f64>, sweeps: usize, seed: u64) -> PtParams {
        PtParams {
            betas,
            sweeps,
            swap_interval: 2,
            seed,
        }
    }

    /// Exact Gibbs distribution over all states of a small problem.
    fn gibbs(p: &IsingProblem, beta: f64) -> Vec<f64> {
        let n = p.n();
        let w: Vec<f64> = (0..1u64 << n)
            .map(|b| (-beta * energy(p, &SpinConfig::from_bits(b, n)).unwrap()).exp())
            .collect();
        let z: f64 = w.iter().sum();
        w.into_iter().map(|x| x / z).collect()
    }

    fn empirical(set: &SampleSet, n: usize) -> Vec<f64> {
        let mut counts = vec![0.0; 1 << n];
        for r in &set.records {
            counts[r.spins.to_bits() as usize] += 1.0;
        }
        counts.iter().map(|c| c / set.len() as f64).collect()
    }

    fn tv(a: &[f64], b: &[f64]) -> f64 {
        0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
    }

    #[test]
    fn ladder_and_validation() {
        let l = geometric_ladder(0.1, 2.0, 16).unwrap();
        assert_eq!(l.len(), 16);
        assert!((l[0] - 0.1).abs() < 1e-15 && l[15] == 2.0);
        let r = l[1] / l[0];
        assert!(l.windows(2).all(|w| (w[1] / w[0] - r).abs() < 1e-12));
        assert!(PtParams::default().validate().is_ok());
        assert!(params(vec![], 10, 0).validate().is_err());
        assert!(params(vec![1.0, 1.0], 10, 0).validate().is_err());
        assert!(params(vec![-1.0], 10, 0).validate().is_err());
        assert!(PtParams { swap_interval: 0, ..PtParams::default() }.validate().is_err());
        assert_eq!(params(vec![1.0], 10, 0).samples_per_chain(), 3);
    }

    #[test]
    fn swap_rule() {
        assert_eq!(swap_probability(1.0, 1.0, -3.0, 5.0), 1.0);
        assert_eq!(swap_probability(1.0, 2.0, -1.0, 0.0), 1.0);
        assert!((swap_probability(1.0, 2.0, 0.0, -1.0) - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn single_spin_magnetization() {
        let mut p = IsingProblem::new(1);
        p.set_field(0, -1.0).unwrap();
        let sets = run_pt(&p, &params(vec![0.5, 1.0, 2.0], 400, 3), 10_000).unwrap();
        let set = &sets[2].samples;
        assert_eq!(set.len(), 10_000);
        let mean = set.records.iter().map(|r| f64::from(r.spins.as_slice()[0])).sum::<f64>() / 1e4;
        let exact = 2.0f64.tanh();
        let sigma = ((1.0 - exact * exact) / 1e4).sqrt();
        assert!((mean - exact).abs() < 5.0 * sigma, "{mean} vs {exact}");
    }

    #[test]
    fn two_spin_ferromagnet_matches_gibbs_at_every_beta() {
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, -1.0).unwrap();
        p.set_field(0, 0.3).unwrap();
        let betas = vec![0.001, 0.25, 0.5, 1.0];
        let sets = run_pt(&p, &params(betas.clone(), 2_000, 9), 100_000).unwrap();
        for (set, beta) in sets.iter().zip(betas) {
            let d = tv(&empirical(&set.samples, 2), &gibbs(&p, beta));
            assert!(d < 0.02, "beta {beta}: tv {d}");
        }
        let uniform = vec![0.25; 4];
        assert!(tv(&empirical(&sets[0].samples, 2), &uniform) < 0.02);
    }

    #[test]
    fn deterministic_under_fixed_seed() {
        let p = k4_antiferromagnet();
        let a = run_pt(&p, &params(vec![0.5, 1.0], 100, 5), 300).unwrap();
        let b = run_pt(&p, &params(vec![0.5, 1.0], 100, 5), 300).unwrap();
        assert_eq!(a, b);
        let c = run_pt(&p, &params(vec![0.5, 1.0], 100, 6), 300).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn thermal_success_limits() {
        let base = k4_antiferromagnet();
        let ground = brute_force_ground(&base).unwrap();
        let np = encode_nested(&base, 2, 1.0).unwrap();
        let pts = thermal_success(&np, None, &params(vec![1e-4, 1.0, 20.0], 400, 1), &ground, 20_000).unwrap();
        assert!(pts[2].p >= 0.99, "{:?}", pts[2]);
        let expected = 6.0 / 16.0;
        assert!((pts[0].p - expected).abs() < 5.0 * (expected * (1.0 - expected) / 2e4).sqrt());
        assert!(pts[0].p <= pts[1].p && pts[1].p <= pts[2].p);
    }
}
