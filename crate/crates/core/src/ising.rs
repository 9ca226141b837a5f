//! Ising problems, spin configurations, gauge transforms and exhaustive search.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{check_len, domain, Error, Result};

/// Absolute tolerance used when comparing energies of degenerate states.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

/// Largest problem `brute_force_ground` will enumerate.
pub const MAX_BRUTE_FORCE_SPINS: usize = 24;

/// A vector of ±1 spins.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig(Vec<i8>);

impl SpinConfig {
    pub fn new(spins: Vec<i8>) -> Result<Self> {
        if let Some(bad) = spins.iter().find(|&&s| s != 1 && s != -1) {
            return Err(domain(format!("spin value {bad} is not ±1")));
        }
        Ok(Self(spins))
    }

    /// All spins equal to `value` (which must be ±1).
    pub fn uniform(n: usize, value: i8) -> Self {
        assert!(value == 1 || value == -1);
        Self(vec![value; n])
    }

    /// Bit `i` set means spin `i` is −1.
    pub fn from_bits(bits: u64, n: usize) -> Self {
        Self((0..n).map(|i| if bits >> i & 1 == 1 { -1 } else { 1 }).collect())
    }

    pub fn to_bits(&self) -> u64 {
        self.0
            .iter()
            .enumerate()
            .fold(0u64, |acc, (i, &s)| if s < 0 { acc | 1 << i } else { acc })
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self((0..n).map(|_| if rng.random::<bool>() { 1 } else { -1 }).collect())
    }

    pub(crate) fn from_vec_unchecked(spins: Vec<i8>) -> Self {
        debug_assert!(spins.iter().all(|&s| s == 1 || s == -1));
        Self(spins)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[i8] {
        &self.0
    }

    pub fn flipped(&self) -> Self {
        Self(self.0.iter().map(|s| -s).collect())
    }

    pub fn into_vec(self) -> Vec<i8> {
        self.0
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &s in &self.0 {
            f.write_str(if s > 0 { "+" } else { "-" })?;
        }
        Ok(())
    }
}

impl FromStr for SpinConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '+' => Ok(1),
                '-' => Ok(-1),
                other => Err(Error::Parse(format!("unexpected spin character {other:?}"))),
            })
            .collect::<Result<Vec<i8>>>()
            .map(Self)
    }
}

impl Serialize for SpinConfig {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SpinConfig {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Sign relabeling `s_i -> g_i s_i`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GaugeTransform(SpinConfig);

impl GaugeTransform {
    pub fn new(signs: Vec<i8>) -> Result<Self> {
        SpinConfig::new(signs).map(Self)
    }

    pub fn identity(n: usize) -> Self {
        Self(SpinConfig::uniform(n, 1))
    }

    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Self {
        Self(SpinConfig::random(n, rng))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn signs(&self) -> &[i8] {
        self.0.as_slice()
    }

    pub fn is_identity(&self) -> bool {
        self.signs().iter().all(|&g| g == 1)
    }

    /// Returns `g ⊙ s`. The map is its own inverse.
    pub fn apply_to(&self, s: &SpinConfig) -> Result<SpinConfig> {
        check_len(self.len(), s.len())?;
        Ok(SpinConfig(
            self.signs().iter().zip(s.as_slice()).map(|(g, x)| g * x).collect(),
        ))
    }
}

/// Undirected graph on dense vertex indices, used as the source graph for
/// minor embedding.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CouplingGraph {
    pub n: usize,
    pub edges: Vec<(usize, usize)>,
}

impl CouplingGraph {
    pub fn new(n: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Self {
        let mut edges: Vec<_> = edges
            .into_iter()
            .map(|(a, b)| if a < b { (a, b) } else { (b, a) })
            .filter(|(a, b)| a != b)
            .collect();
        edges.sort_unstable();
        edges.dedup();
        Self { n, edges }
    }

    pub fn complete(n: usize) -> Self {
        Self::new(n, (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))))
    }

    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.n];
        for &(a, b) in &self.edges {
            adj[a].push(b);
            adj[b].push(a);
        }
        adj
    }
}

/// Ising problem `α (Σ h_i s_i + Σ J_ij s_i s_j)` on dense vertex indices.
///
/// The overall scale `α` is metadata: it is applied when energies are
/// evaluated, never folded into the stored `h` and `J`.
#[derive(Clone, Debug, PartialEq)]
pub struct IsingProblem {
    n: usize,
    fields: Vec<f64>,
    couplings: BTreeMap<(usize, usize), f64>,
    alpha: f64,
}

impl IsingProblem {
    pub fn new(n: usize) -> Self {
        Self {
            n,
            fields: vec![0.0; n],
            couplings: BTreeMap::new(),
            alpha: 1.0,
        }
    }

    /// Complete graph with every coupling set to `j`.
    pub fn complete(n: usize, j: f64) -> Self {
        let mut p = Self::new(n);
        for a in 0..n {
            for b in a + 1..n {
                p.couplings.insert((a, b), j);
            }
        }
        p
    }

    /// Builds a problem from the strict upper triangle of a coupling matrix.
    pub fn from_upper_triangle(matrix: &[Vec<f64>]) -> Result<Self> {
        let n = matrix.len();
        let mut p = Self::new(n);
        for (i, row) in matrix.iter().enumerate() {
            check_len(n, row.len())?;
            for (j, &v) in row.iter().enumerate().skip(i + 1) {
                if v != 0.0 {
                    p.set_coupling(i, j, v)?;
                }
            }
        }
        Ok(p)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn fields(&self) -> &[f64] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> f64 {
        self.fields[i]
    }

    pub fn couplings(&self) -> &BTreeMap<(usize, usize), f64> {
        &self.couplings
    }

    pub fn coupling(&self, i: usize, j: usize) -> Option<f64> {
        let key = if i < j { (i, j) } else { (j, i) };
        self.couplings.get(&key).copied()
    }

    pub fn set_field(&mut self, i: usize, h: f64) -> Result<()> {
        if i >= self.n {
            return Err(domain(format!("vertex {i} out of range for n={}", self.n)));
        }
        self.fields[i] = h;
        Ok(())
    }

    /// Stores `J_ij`; the pair is unordered and stored once.
    pub fn set_coupling(&mut self, i: usize, j: usize, value: f64) -> Result<()> {
        if i == j {
            return Err(domain(format!("self-coupling ({i},{i}) is not allowed")));
        }
        if i.max(j) >= self.n {
            return Err(domain(format!("pair ({i},{j}) out of range for n={}", self.n)));
        }
        self.couplings.insert((i.min(j), i.max(j)), value);
        Ok(())
    }

    pub fn coupling_graph(&self) -> CouplingGraph {
        CouplingGraph::new(self.n, self.couplings.keys().copied())
    }

    /// Unscaled energy `Σ h_i s_i + Σ J_ij s_i s_j`.
    pub(crate) fn raw_energy(&self, s: &[i8]) -> f64 {
        let field: f64 = self.fields.iter().zip(s).map(|(h, &x)| h * f64::from(x)).sum();
        let pair: f64 = self
            .couplings
            .iter()
            .map(|(&(i, j), &v)| v * f64::from(s[i] * s[j]))
            .sum();
        field + pair
    }

    /// Digest of the canonical JSON form; identifies a programmed problem.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(&ProblemFile::from(self)).expect("problem serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ProblemFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ProblemFile = serde_json::from_str(text)?;
        file.try_into()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

/// `α · (Σ h_i s_i + Σ J_ij s_i s_j)`.
pub fn energy(p: &IsingProblem, s: &SpinConfig) -> Result<f64> {
    check_len(p.n, s.len())?;
    Ok(p.alpha * p.raw_energy(s.as_slice()))
}

/// Ground energy and every configuration within [`ENERGY_TOLERANCE`] of it.
#[derive(Clone, Debug, PartialEq)]
pub struct GroundSet {
    pub energy: f64,
    pub states: Vec<SpinConfig>,
}

impl GroundSet {
    pub fn contains(&self, s: &SpinConfig) -> bool {
        self.states.binary_search(s).is_ok()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }
}

/// Exhaustive enumeration over all `2^n` configurations.
///
/// Walks a Gray code so each step costs one local-field evaluation; all
/// candidates near the running minimum are re-evaluated from scratch before
/// the final tolerance filter.
pub fn brute_force_ground(p: &IsingProblem) -> Result<GroundSet> {
    let n = p.n;
    if n > MAX_BRUTE_FORCE_SPINS {
        return Err(Error::Capacity(format!(
            "exhaustive search limited to {MAX_BRUTE_FORCE_SPINS} spins, got {n}"
        )));
    }
    if n == 0 {
        return Ok(GroundSet {
            energy: 0.0,
            states: vec![SpinConfig(Vec::new())],
        });
    }

    let mut adj = vec![Vec::new(); n];
    for (&(i, j), &v) in &p.couplings {
        adj[i].push((j, v));
        adj[j].push((i, v));
    }
    let mut spins = vec![1i8; n];
    let mut e = p.raw_energy(&spins);
    let scale = 1.0 + p.fields.iter().map(|h| h.abs()).sum::<f64>()
        + p.couplings.values().map(|v| v.abs()).sum::<f64>();
    // Loose net for accumulated rounding; exact filtering happens below.
    let slack = 1e-9 * scale;
    let mut best = e;
    let mut candidates: Vec<u64> = vec![0];
    let mut bits = 0u64;

    for step in 1u64..(1u64 << n) {
        let i = step.trailing_zeros() as usize;
        let local = p.fields[i] + adj[i].iter().map(|&(j, v)| v * f64::from(spins[j])).sum::<f64>();
        e -= 2.0 * f64::from(spins[i]) * local;
        spins[i] = -spins[i];
        bits ^= 1 << i;
        if e < best - slack {
            best = e;
            candidates.clear();
            candidates.push(bits);
        } else if e <= best + slack {
            candidates.push(bits);
        }
    }

    let exact: Vec<(f64, u64)> = candidates
        .into_iter()
        .map(|b| (p.raw_energy(SpinConfig::from_bits(b, n).as_slice()), b))
        .collect();
    let min = exact.iter().map(|&(e, _)| e).fold(f64::INFINITY, f64::min);
    let energy = p.alpha * min;
    let mut states: Vec<SpinConfig> = exact
        .into_iter()
        .filter(|&(e, _)| (p.alpha * e - energy).abs() <= ENERGY_TOLERANCE)
        .map(|(_, b)| SpinConfig::from_bits(b, n))
        .collect();
    states.sort();
    Ok(GroundSet { energy, states })
}

/// `h_i -> g_i h_i`, `J_ij -> g_i g_j J_ij`.
pub fn apply_gauge(p: &IsingProblem, g: &GaugeTransform) -> Result<IsingProblem> {
    check_len(p.n, g.len())?;
    let gs = g.signs();
    let mut out = p.clone();
    for (h, &gi) in out.fields.iter_mut().zip(gs) {
        *h *= f64::from(gi);
    }
    for (&(i, j), v) in out.couplings.iter_mut() {
        *v *= f64::from(gs[i] * gs[j]);
    }
    Ok(out)
}

/// Replaces the energy scale, `0 < alpha <= 1`.
pub fn rescale(p: &IsingProblem, alpha: f64) -> Result<IsingProblem> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(domain(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    let mut out = p.clone();
    out.alpha = alpha;
    Ok(out)
}

impl IsingProblem {
    /// Sets α without range checks; used for programmed problems that carry
    /// their scale in the stored values.
    pub(crate) fn with_alpha_unchecked(mut self, alpha: f64) -> Self {
        self.alpha = alpha;
        self
    }

    pub(crate) fn fields_mut(&mut self) -> &mut [f64] {
        &mut self.fields
    }

    pub(crate) fn couplings_mut(&mut self) -> &mut BTreeMap<(usize, usize), f64> {
        &mut self.couplings
    }
}

/// On-disk problem format: `{ "n", "h": {"i": v}, "J": {"i,j": v}, "alpha" }`.
///
/// `index_base` lets fixtures use 1-based labels; written files are 0-based.
#[derive(Debug, Serialize, Deserialize)]
struct ProblemFile {
    n: usize,
    #[serde(default)]
    h: BTreeMap<String, f64>,
    #[serde(rename = "J", default)]
    j: BTreeMap<String, f64>,
    #[serde(default = "default_alpha")]
    alpha: f64,
    #[serde(default, skip_serializing_if = "is_zero")]
    index_base: usize,
}

fn default_alpha() -> f64 {
    1.0
}

fn is_zero(v: &usize) -> bool {
    *v == 0
}

impl From<&IsingProblem> for ProblemFile {
    fn from(p: &IsingProblem) -> Self {
        Self {
            n: p.n,
            h: p
                .fields
                .iter()
                .enumerate()
                .filter(|(_, &h)| h != 0.0)
                .map(|(i, &h)| (i.to_string(), h))
                .collect(),
            j: p
                .couplings
                .iter()
                .map(|(&(i, j), &v)| (format!("{i},{j}"), v))
                .collect(),
            alpha: p.alpha,
            index_base: 0,
        }
    }
}

impl TryFrom<ProblemFile> for IsingProblem {
    type Error = Error;

    fn try_from(file: ProblemFile) -> Result<Self> {
        let base = file.index_base;
        if base > 1 {
            return Err(Error::Parse(format!("index_base must be 0 or 1, got {base}")));
        }
        let index = |s: &str| -> Result<usize> {
            let v: usize = s
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad vertex label {s:?}")))?;
            v.checked_sub(base)
                .ok_or_else(|| Error::Parse(format!("vertex label {v} below index base {base}")))
        };
        let mut p = IsingProblem::new(file.n);
        for (k, v) in &file.h {
            p.set_field(index(k)?, *v)?;
        }
        for (k, v) in &file.j {
            let (a, b) = k
                .split_once(',')
                .ok_or_else(|| Error::Parse(format!("coupling key {k:?} is not \"i,j\"")))?;
            let (a, b) = (index(a)?, index(b)?);
            if p.coupling(a, b).is_some() {
                return Err(Error::Parse(format!("pair ({a},{b}) listed twice")));
            }
            p.set_coupling(a, b, *v)?;
        }
        if !(file.alpha > 0.0) {
            return Err(domain(format!("alpha must be positive, got {}", file.alpha)));
        }
        p.alpha = file.alpha;
        Ok(p)
    }
}
