//! Discrete-time path-integral simulated quantum annealing.
//!
//! The transverse-field Ising Hamiltonian `A(s)·Σσˣ + B(s)·H_P` is mapped onto
//! `K` coupled classical replicas (Trotter slices) on a periodic ring. Each
//! sweep grows, for every site, one Wolff cluster along the ring and accepts
//! its flip with a Metropolis test on the in-slice energy change.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::ising::{GaugeTransform, IsingProblem, SpinConfig};
use crate::rng::{derive_seed, rng_from_seed, Stream};
use crate::samples::{CycleInfo, SampleRecord, SampleSet};

/// Piecewise-linear annealing schedule `s ↦ (A(s), B(s))`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<(f64, f64, f64)>", into = "Vec<(f64, f64, f64)>")]
pub struct Schedule {
    points: Vec<(f64, f64, f64)>,
}

impl Schedule {
    pub fn new(points: Vec<(f64, f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(domain("schedule needs at least two points"));
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(domain("schedule must start at s=0 and end at s=1"));
        }
        for &(s, a, b) in &points {
            if !(s.is_finite() && a.is_finite() && b.is_finite()) || a < 0.0 || b < 0.0 {
                return Err(domain(format!("invalid schedule point ({s}, {a}, {b})")));
            }
        }
        for w in points.windows(2) {
            let ((s0, a0, b0), (s1, a1, b1)) = (w[0], w[1]);
            if s1 <= s0 {
                return Err(domain("schedule s values must be strictly increasing"));
            }
            if a1 > a0 {
                return Err(domain(format!("A increases between s={s0} and s={s1}")));
            }
            if b1 < b0 {
                return Err(domain(format!("B decreases between s={s0} and s={s1}")));
            }
        }
        Ok(Self { points })
    }

    /// `A(s) = 1 − s`, `B(s) = s`.
    pub fn linear() -> Self {
        Self {
            points: vec![(0.0, 1.0, 0.0), (1.0, 0.0, 1.0)],
        }
    }

    /// The same `(A, B)` at every `s`.
    pub fn constant(a: f64, b: f64) -> Result<Self> {
        Self::new(vec![(0.0, a, b), (1.0, a, b)])
    }

    pub fn points(&self) -> &[(f64, f64, f64)] {
        &self.points
    }

    /// Linear interpolation, clamped to `[0, 1]`.
    pub fn at(&self, s: f64) -> (f64, f64) {
        let s = s.clamp(0.0, 1.0);
        let i = self.points.partition_point(|p| p.0 <= s).clamp(1, self.points.len() - 1);
        let (s0, a0, b0) = self.points[i - 1];
        let (s1, a1, b1) = self.points[i];
        let t = (s - s0) / (s1 - s0);
        (a0 + t * (a1 - a0), b0 + t * (b1 - b0))
    }

    /// Parses `s,A,B` rows; a non-numeric first row is taken as a header.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut points = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> = cols.iter().map(|c| c.parse::<f64>()).collect();
            match parsed {
                Ok(v) if v.len() == 3 => points.push((v[0], v[1], v[2])),
                Err(_) if points.is_empty() && i == 0 => continue,
                _ => return Err(Error::Parse(format!("schedule line {}: expected s,A,B", i + 1))),
            }
        }
        Self::new(points)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("s,A,B\n");
        for (s, a, b) in &self.points {
            out.push_str(&format!("{s},{a},{b}\n"));
        }
        out
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

impl Default for Schedule {
    fn default() -> Self {
        Self::linear()
    }
}

impl TryFrom<Vec<(f64, f64, f64)>> for Schedule {
    type Error = Error;

    fn try_from(points: Vec<(f64, f64, f64)>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<Schedule> for Vec<(f64, f64, f64)> {
    fn from(s: Schedule) -> Self {
        s.points
    }
}

pub fn default_schedule() -> Schedule {
    Schedule::linear()
}

/// How `SqaParams::beta` relates to the inverse temperature of the full
/// path integral.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BetaConvention {
    /// `beta` is the inverse temperature of one Trotter slice; the path
    /// integral runs at `K·beta`.
    #[default]
    PerSlice,
    /// `beta` is the inverse temperature of the whole path integral.
    Total,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SqaParams {
    pub sweeps: usize,
    pub trotter_slices: usize,
    pub beta: f64,
    pub beta_convention: BetaConvention,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SqaParams {
    fn default() -> Self {
        Self {
            sweeps: 10_000,
            trotter_slices: 64,
            beta: 0.1,
            beta_convention: BetaConvention::PerSlice,
            noise_sigma: 0.05,
            seed: 0,
        }
    }
}

impl SqaParams {
    pub fn validate(&self) -> Result<()> {
        if self.trotter_slices < 2 {
            return Err(domain("at least two Trotter slices are required"));
        }
        if self.sweeps < 1 {
            return Err(domain("at least one sweep is required"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(domain(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(domain(format!("noise sigma must be non-negative, got {}", self.noise_sigma)));
        }
        Ok(())
    }

    /// Inverse temperature of the whole path integral.
    pub fn beta_total(&self) -> f64 {
        match self.beta_convention {
            BetaConvention::PerSlice => self.beta * self.trotter_slices as f64,
            BetaConvention::Total => self.beta,
        }
    }
}

/// Adds independent `N(0, σ)` noise to every field and every stored coupling
/// of a programmed problem. Noise is in absolute units (max |J| = 1).
pub fn sample_noise<R: Rng + ?Sized>(p: &IsingProblem, sigma: f64, rng: &mut R) -> Result<IsingProblem> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(domain(format!("noise sigma must be non-negative, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(p.clone());
    }
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    // Noise acts on the programmed values, so fold α in first.
    let alpha = p.alpha();
    let mut out = p.clone().with_alpha_unchecked(1.0);
    for h in out.fields_mut() {
        *h = alpha * *h + normal.sample(rng);
    }
    for v in out.couplings_mut().values_mut() {
        *v = alpha * *v + normal.sample(rng);
    }
    Ok(out)
}

/// Path-integral state of one anneal. Spins and local fields are stored
/// site-major: entry `i·K + k` is site `i` in slice `k`.
pub struct SqaEngine {
    n: usize,
    slices: usize,
    offsets: Vec<usize>,
    neighbors: Vec<(usize, f64)>,
    spins: Vec<i8>,
    field: Vec<f64>,
    rng: crate::rng::Rng,
}

impl SqaEngine {
    /// Uses the energy coefficients `α·h`, `α·J` of `p` and starts every
    /// slice from independent uniformly random spins.
    pub fn new(p: &IsingProblem, slices: usize, seed: u64) -> Self {
        let n = p.n();
        let alpha = p.alpha();
        let mut lists = vec![Vec::new(); n];
        for (&(i, j), &v) in p.couplings() {
            if v != 0.0 {
                lists[i].push((j, alpha * v));
                lists[j].push((i, alpha * v));
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::new();
        offsets.push(0);
        for list in lists {
            neighbors.extend(list);
            offsets.push(neighbors.len());
        }
        let mut rng = rng_from_seed(seed);
        let spins: Vec<i8> = (0..n * slices)
            .map(|_| if rng.random::<bool>() { 1 } else { -1 })
            .collect();
        let mut engine = Self {
            n,
            slices,
            offsets,
            neighbors,
            spins,
            field: vec![0.0; n * slices],
            rng,
        };
        for i in 0..n {
            for k in 0..slices {
                let mut f = alpha * p.field(i);
                for &(j, v) in engine.nbrs(i) {
                    f += v * f64::from(engine.spins[j * slices + k]);
                }
                engine.field[i * slices + k] = f;
            }
        }
        engine
    }

    fn nbrs(&self, i: usize) -> &[(usize, f64)] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn slices(&self) -> usize {
        self.slices
    }

    pub fn slice(&self, k: usize) -> SpinConfig {
        SpinConfig::from_vec_unchecked((0..self.n).map(|i| self.spins[i * self.slices + k]).collect())
    }

    /// One sweep at fixed `(A, B)`: a ring cluster move for every site in
    /// order. The ring bond activation probability is `1 − tanh(β·A/K)`,
    /// and `A = 0` locks equal neighbouring slices together.
    pub fn sweep(&mut self, beta_total: f64, a: f64, b: f64) {
        let kk = self.slices;
        let p_add = if a <= 0.0 {
            1.0
        } else {
            1.0 - (beta_total * a / kk as f64).tanh()
        };
        let scale = beta_total * b / kk as f64;
        for i in 0..self.n {
            let base = i * kk;
            let k0 = self.rng.random_range(0..kk);
            let s0 = self.spins[base + k0];

            let mut fwd = 0;
            while fwd < kk - 1 {
                let next = (k0 + fwd + 1) % kk;
                if self.spins[base + next] != s0 || !(p_add >= 1.0 || self.rng.random::<f64>() < p_add) {
                    break;
                }
                fwd += 1;
            }
            let mut bwd = 0;
            while fwd + bwd < kk - 1 {
                let prev = (k0 + kk - bwd - 1) % kk;
                if self.spins[base + prev] != s0 || !(p_add >= 1.0 || self.rng.random::<f64>() < p_add) {
                    break;
                }
                bwd += 1;
            }
            let start = (k0 + kk - bwd) % kk;
            let len = fwd + bwd + 1;
            let (first, second) = if start + len <= kk {
                (start..start + len, 0..0)
            } else {
                (start..kk, 0..start + len - kk)
            };

            let mut sum = 0.0;
            for k in first.clone().chain(second.clone()) {
                sum += self.field[base + k];
            }
            // Flipping s0 -> -s0 changes each slice energy by -2·s0·f.
            let d_action = -2.0 * scale * f64::from(s0) * sum;
            if d_action > 0.0 && self.rng.random::<f64>() >= (-d_action).exp() {
                continue;
            }
            for k in first.clone().chain(second.clone()) {
                self.spins[base + k] = -s0;
            }
            let delta = -2.0 * f64::from(s0);
            for idx in self.offsets[i]..self.offsets[i + 1] {
                let (j, v) = self.neighbors[idx];
                let jb = j * kk;
                let d = delta * v;
                for k in first.clone() {
                    self.field[jb + k] += d;
                }
                for k in second.clone() {
                    self.field[jb + k] += d;
                }
            }
        }
    }

    /// Runs `sweeps` sweeps with `s = t/sweeps` for `t = 1..=sweeps`.
    pub fn anneal(&mut self, schedule: &Schedule, sweeps: usize, beta_total: f64) {
        for t in 1..=sweeps {
            let (a, b) = schedule.at(t as f64 / sweeps as f64);
            self.sweep(beta_total, a, b);
        }
    }
}

/// Seed of anneal `run` in programming cycle `cycle`.
pub fn anneal_seed(master: u64, cycle: usize, run: usize) -> u64 {
    derive_seed(master, Stream::Anneal, &[cycle as u64, run as u64])
}

/// Anneals `p` as given (no noise is added); records slice 0 of each anneal.
/// Anneals run in parallel and are ordered by run index.
pub fn run_sqa(p: &IsingProblem, schedule: &Schedule, params: &SqaParams, n_anneals: usize) -> Result<SampleSet> {
    params.validate()?;
    let records = anneal_batch(p, schedule, params, 0, n_anneals);
    Ok(SampleSet {
        problem_digest: p.digest(),
        cycles: vec![CycleInfo {
            gauge: GaugeTransform::identity(p.n()),
            permutation: None,
            embedding: None,
            digest: p.digest(),
        }],
        records,
    })
}

pub(crate) fn anneal_batch(
    p: &IsingProblem,
    schedule: &Schedule,
    params: &SqaParams,
    cycle: usize,
    n_anneals: usize,
) -> Vec<SampleRecord> {
    let beta_total = params.beta_total();
    (0..n_anneals)
        .into_par_iter()
        .map(|run| {
            let seed = anneal_seed(params.seed, cycle, run);
            let mut engine = SqaEngine::new(p, params.trotter_slices, seed);
            engine.anneal(schedule, params.sweeps, beta_total);
            SampleRecord {
                spins: engine.slice(0),
                cycle,
                run,
                seed,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures::k4_antiferromagnet;
    use crate::ising::{brute_force_ground, energy};

    #[test]
    fn linear_schedule_values() {
        let s = default_schedule();
        assert_eq!(s.at(0.0), (1.0, 0.0));
        assert_eq!(s.at(0.5), (0.5, 0.5));
        assert_eq!(s.at(1.0), (0.0, 1.0));
        assert_eq!(s.at(2.0), (0.0, 1.0));
    }

    #[test]
    fn csv_schedules() {
        let s = Schedule::from_csv("s,A,B\n0,2,0\n0.25,1,0.1\n1,0,1\n").unwrap();
        assert_eq!(s.points().len(), 3);
        let (a, b) = s.at(0.125);
        assert!((a - 1.5).abs() < 1e-12 && (b - 0.05).abs() < 1e-12);
        assert_eq!(Schedule::from_csv(&s.to_csv()).unwrap(), s);

        assert!(Schedule::from_csv("s,A,B\n0,1,0.5\n0.5,0.5,0.2\n1,0,1\n").is_err());
        assert!(Schedule::from_csv("0,1,0\n0.5,1.5,0.5\n1,0,1\n").is_err());
        assert!(Schedule::from_csv("0,1,0\n0.5,0.5\n1,0,1\n").is_err());
        assert!(Schedule::from_csv("0.1,1,0\n1,0,1\n").is_err());
        assert!(Schedule::new(vec![(0.0, 1.0, 0.0), (0.0, 1.0, 0.0), (1.0, 0.0, 1.0)]).is_err());
    }

    #[test]
    fn params_validation() {
        let ok = SqaParams::default();
        assert!(ok.validate().is_ok());
        assert_eq!(ok.beta_total(), 6.4);
        for bad in [
            SqaParams { trotter_slices: 1, ..ok.clone() },
            SqaParams { sweeps: 0, ..ok.clone() },
            SqaParams { beta: 0.0, ..ok.clone() },
            SqaParams { noise_sigma: -0.1, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
        let total = SqaParams { beta_convention: BetaConvention::Total, ..ok };
        assert_eq!(total.beta_total(), 0.1);
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = crate::ising::rescale(&k4_antiferromagnet(), 0.5).unwrap();
        assert_eq!(sample_noise(&p, 0.0, &mut rng_from_seed(0)).unwrap(), p);
    }

    #[test]
    fn noise_statistics() {
        let p = IsingProblem::complete(2, 0.0);
        let mut rng = rng_from_seed(9);
        let draws: Vec<f64> = (0..100_000)
            .map(|_| sample_noise(&p, 0.05, &mut rng).unwrap().coupling(0, 1).unwrap())
            .collect();
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 5.0 * 0.05 / n.sqrt(), "mean {mean}");
        assert!((sd - 0.05).abs() < 0.02 * 0.05, "sd {sd}");
    }

    #[test]
    fn noise_folds_alpha_into_values() {
        let p = crate::ising::rescale(&k4_antiferromagnet(), 0.25).unwrap();
        let noisy = sample_noise(&p, 1e-9, &mut rng_from_seed(1)).unwrap();
        assert_eq!(noisy.alpha(), 1.0);
        assert!((noisy.coupling(0, 1).unwrap() - 0.25).abs() < 1e-6);
    }

    #[test]
    fn engine_fields_stay_consistent() {
        let p = crate::fixtures::k8_harder();
        let mut e = SqaEngine::new(&p, 8, 3);
        for _ in 0..50 {
            e.sweep(3.0, 0.3, 0.7);
        }
        for k in 0..8 {
            let s = e.slice(k);
            for i in 0..p.n() {
                let mut f = p.field(i);
                for j in 0..p.n() {
                    if let Some(v) = p.coupling(i, j) {
                        f += v * f64::from(s.as_slice()[j]);
                    }
                }
                assert!((f - e.field[i * 8 + k]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn single_spin_follows_field() {
        let mut p = IsingProblem::new(1);
        p.set_field(0, -1.0).unwrap();
        let params = SqaParams {
            sweeps: 1000,
            beta: 5.0,
            beta_convention: BetaConvention::Total,
            noise_sigma: 0.0,
            ..SqaParams::default()
        };
        let set = run_sqa(&p, &Schedule::constant(0.0, 1.0).unwrap(), &params, 100).unwrap();
        let up = set.records.iter().filter(|r| r.spins.as_slice()[0] == 1).count();
        assert!(up >= 99, "{up}");
    }

    #[test]
    fn classical_limit_locks_slices_and_matches_gibbs() {
        // Two-spin ferromagnet at β = 2: <s1 s2> = tanh(2).
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, -1.0).unwrap();
        let mut e = SqaEngine::new(&p, 16, 4);
        for _ in 0..200 {
            e.sweep(2.0, 0.0, 1.0);
        }
        let s0 = e.slice(0);
        assert!((1..16).all(|k| e.slice(k) == s0));

        let samples = 40_000;
        let mut corr = 0.0;
        for _ in 0..samples {
            e.sweep(2.0, 0.0, 1.0);
            let s = e.slice(0);
            corr += f64::from(s.as_slice()[0] * s.as_slice()[1]);
        }
        corr /= samples as f64;
        let exact = 2.0f64.tanh();
        let sigma = ((1.0 - exact * exact) / samples as f64).sqrt();
        // Successive sweeps are correlated; allow for it in the spread.
        assert!((corr - exact).abs() < 5.0 * 3.0 * sigma, "{corr} vs {exact}");
    }

    #[test]
    fn frozen_schedule_matches_gibbs_distribution() {
        let mut p = IsingProblem::new(2);
        p.set_coupling(0, 1, -1.0).unwrap();
        p.set_field(0, 0.3).unwrap();
        let beta = 1.0;
        let weights: Vec<f64> = (0..4)
            .map(|b| (-beta * energy(&p, &SpinConfig::from_bits(b, 2)).unwrap()).exp())
            .collect();
        let z: f64 = weights.iter().sum();
        let mut e = SqaEngine::new(&p, 8, 5);
        let mut counts = [0usize; 4];
        for _ in 0..1000 {
            e.sweep(beta, 0.0, 1.0);
        }
        let samples = 100_000;
        for _ in 0..samples {
            e.sweep(beta, 0.0, 1.0);
            counts[e.slice(0).to_bits() as usize] += 1;
        }
        let tv: f64 = (0..4)
            .map(|b| (counts[b] as f64 / samples as f64 - weights[b] / z).abs())
            .sum::<f64>()
            / 2.0;
        assert!(tv < 0.02, "tv {tv}");
    }

    #[test]
    fn zero_problem_gives_uniform_logical_states() {
        let p = IsingProblem::complete(4, 0.0);
        let params = SqaParams {
            sweeps: 50,
            trotter_slices: 8,
            noise_sigma: 0.0,
            ..SqaParams::default()
        };
        let set = run_sqa(&p, &default_schedule(), &params, 4000).unwrap();
        let ground = brute_force_ground(&k4_antiferromagnet()).unwrap();
        let hits = set.records.iter().filter(|r| ground.contains(&r.spins)).count() as f64;
        let n = set.len() as f64;
        let p0 = 6.0 / 16.0;
        assert!((hits / n - p0).abs() < 5.0 * (p0 * (1.0 - p0) / n).sqrt());
    }

    #[test]
    fn k4_is_solved_at_full_scale() {
        let params = SqaParams {
            sweeps: 2000,
            noise_sigma: 0.0,
            seed: 1,
            ..SqaParams::default()
        };
        let p = k4_antiferromagnet();
        let set = run_sqa(&p, &default_schedule(), &params, 100).unwrap();
        let ground = brute_force_ground(&p).unwrap();
        let hits = set.records.iter().filter(|r| ground.contains(&r.spins)).count();
        assert!(hits >= 95, "{hits}");
    }

    #[test]
    fn runs_are_deterministic_and_order_independent() {
        let params = SqaParams {
            sweeps: 100,
            trotter_slices: 8,
            seed: 42,
            ..SqaParams::default()
        };
        let p = crate::fixtures::k8_easier();
        let a = run_sqa(&p, &default_schedule(), &params, 16).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_sqa(&p, &default_schedule(), &params, 16).unwrap());
        assert_eq!(a, b);
        assert!(a.records.iter().enumerate().all(|(i, r)| r.run == i));
    }
}
