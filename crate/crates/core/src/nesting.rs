//! Level-C nesting of a logical Ising problem into `K_{C×N}` and majority-vote
//! decoding back to logical spins.
//!
//! Each logical vertex `i` becomes `C` copies `(i, c)`. Every logical coupling
//! is replicated between all copy pairs (`C²` couplers), fields are multiplied
//! by `C`, and copies of the same vertex are bound by ferromagnetic penalties
//! `−γ`.

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::chimera::Embedding;
use crate::error::{check_len, domain, Result};
use crate::ising::{energy, IsingProblem, SpinConfig};

#[derive(Clone, Debug, PartialEq)]
pub struct NestedProblem {
    base: IsingProblem,
    level: usize,
    gamma: f64,
    nested: IsingProblem,
    /// nested index -> (logical vertex, copy)
    vertex_map: Vec<(usize, usize)>,
    /// logical vertex -> nested indices, ordered by copy
    copies: Vec<Vec<usize>>,
    penalties: BTreeSet<(usize, usize)>,
}

/// Builds the level-`level` nested problem with penalty strength `gamma`.
///
/// The nested problem inherits the base α; penalties are stored as `−γ` and
/// are not rescaled by α when the problem is programmed.
pub fn encode_nested(base: &IsingProblem, level: usize, gamma: f64) -> Result<NestedProblem> {
    if level < 1 {
        return Err(domain("nesting level must be at least 1"));
    }
    if level > 1 && !(gamma > 0.0) {
        return Err(domain(format!("penalty gamma must be positive, got {gamma}")));
    }
    let n = base.n();
    let idx = |i: usize, c: usize| i * level + c;
    let mut nested = IsingProblem::new(n * level).with_alpha_unchecked(base.alpha());
    let mut penalties = BTreeSet::new();

    for i in 0..n {
        for c in 0..level {
            nested.set_field(idx(i, c), level as f64 * base.field(i))?;
        }
    }
    for (&(i, j), &v) in base.couplings() {
        for c in 0..level {
            for d in 0..level {
                nested.set_coupling(idx(i, c), idx(j, d), v)?;
            }
        }
    }
    for i in 0..n {
        for c in 0..level {
            for d in c + 1..level {
                nested.set_coupling(idx(i, c), idx(i, d), -gamma)?;
                penalties.insert((idx(i, c), idx(i, d)));
            }
        }
    }

    let vertex_map = (0..n).flat_map(|i| (0..level).map(move |c| (i, c))).collect();
    let copies = (0..n).map(|i| (0..level).map(|c| idx(i, c)).collect()).collect();
    Ok(NestedProblem {
        base: base.clone(),
        level,
        gamma,
        nested,
        vertex_map,
        copies,
        penalties,
    })
}

impl NestedProblem {
    pub fn base(&self) -> &IsingProblem {
        &self.base
    }

    /// Nesting level `C`.
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn nested(&self) -> &IsingProblem {
        &self.nested
    }

    pub fn logical_n(&self) -> usize {
        self.base.n()
    }

    pub fn nested_n(&self) -> usize {
        self.nested.n()
    }

    pub fn vertex_map(&self) -> &[(usize, usize)] {
        &self.vertex_map
    }

    /// Nested indices of the copies of logical vertex `i`.
    pub fn copies(&self, i: usize) -> &[usize] {
        &self.copies[i]
    }

    pub fn penalties(&self) -> &BTreeSet<(usize, usize)> {
        &self.penalties
    }

    pub fn is_penalty(&self, a: usize, b: usize) -> bool {
        self.penalties.contains(&(a.min(b), a.max(b)))
    }

    /// Places every copy of logical vertex `i` at `s_i`.
    pub fn lift(&self, logical: &SpinConfig) -> Result<SpinConfig> {
        check_len(self.logical_n(), logical.len())?;
        let s = logical.as_slice();
        Ok(SpinConfig::from_vec_unchecked(
            self.vertex_map.iter().map(|&(i, _)| s[i]).collect(),
        ))
    }

    /// The Hamiltonian as it is programmed: problem terms carry α, penalties
    /// stay at `−γ`. The result has α = 1.
    pub fn programmed(&self) -> IsingProblem {
        let alpha = self.nested.alpha();
        let mut p = self.nested.clone().with_alpha_unchecked(1.0);
        for h in p.fields_mut() {
            *h *= alpha;
        }
        for (key, v) in p.couplings_mut().iter_mut() {
            if !self.penalties.contains(key) {
                *v *= alpha;
            }
        }
        p
    }

    /// Replaces the base energy scale, keeping the penalties untouched.
    pub fn with_alpha(&self, alpha: f64) -> Result<Self> {
        let mut out = self.clone();
        out.base = crate::ising::rescale(&self.base, alpha)?;
        out.nested = crate::ising::rescale(&self.nested, alpha)?;
        Ok(out)
    }

    pub fn sidecar(&self) -> NestedSidecar {
        NestedSidecar {
            level: self.level,
            gamma: self.gamma,
            vertex_map: self.vertex_map.clone(),
        }
    }

    /// Rebuilds a nested problem from its base and sidecar; a relabeled
    /// vertex map is reproduced by permuting the fresh encoding.
    pub fn from_sidecar(base: &IsingProblem, sidecar: &NestedSidecar) -> Result<Self> {
        let fresh = encode_nested(base, sidecar.level, sidecar.gamma)?;
        check_len(fresh.nested_n(), sidecar.vertex_map.len())?;
        let mut perm = vec![usize::MAX; fresh.nested_n()];
        for (pos, &(i, c)) in sidecar.vertex_map.iter().enumerate() {
            if i >= base.n() || c >= sidecar.level {
                return Err(domain(format!("vertex map entry ({i},{c}) out of range")));
            }
            perm[i * sidecar.level + c] = pos;
        }
        permute_nested(&fresh, &perm)
    }
}

/// Companion file for a serialized nested problem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NestedSidecar {
    #[serde(rename = "C")]
    pub level: usize,
    pub gamma: f64,
    pub vertex_map: Vec<(usize, usize)>,
}

/// Evaluates the nested energy of the aligned lift of `logical` alongside the
/// closed form `C²·E(s) − α·γ·N·C(C−1)/2`.
pub fn nested_energy_identity_check(np: &NestedProblem, logical: &SpinConfig) -> Result<(f64, f64)> {
    let lifted = np.lift(logical)?;
    let nested_energy = energy(&np.nested, &lifted)?;
    let c = np.level as f64;
    let n = np.logical_n() as f64;
    let penalty = if np.level > 1 {
        np.nested.alpha() * np.gamma * n * c * (c - 1.0) / 2.0
    } else {
        0.0
    };
    let predicted = c * c * energy(&np.base, logical)? - penalty;
    Ok((nested_energy, predicted))
}

/// Relabels nested vertex `v` as `perm[v]`.
pub fn permute_nested(np: &NestedProblem, perm: &[usize]) -> Result<NestedProblem> {
    let m = np.nested_n();
    check_len(m, perm.len())?;
    let mut seen = vec![false; m];
    for &p in perm {
        if p >= m || std::mem::replace(&mut seen[p], true) {
            return Err(domain("permutation is not a bijection"));
        }
    }

    let old = &np.nested;
    let mut nested = IsingProblem::new(m).with_alpha_unchecked(old.alpha());
    for v in 0..m {
        nested.set_field(perm[v], old.field(v))?;
    }
    for (&(a, b), &val) in old.couplings() {
        nested.set_coupling(perm[a], perm[b], val)?;
    }
    let mut vertex_map = vec![(0, 0); m];
    for v in 0..m {
        vertex_map[perm[v]] = np.vertex_map[v];
    }
    let copies = np
        .copies
        .iter()
        .map(|cs| cs.iter().map(|&v| perm[v]).collect())
        .collect();
    let penalties = np
        .penalties
        .iter()
        .map(|&(a, b)| (perm[a].min(perm[b]), perm[a].max(perm[b])))
        .collect();
    Ok(NestedProblem {
        base: np.base.clone(),
        level: np.level,
        gamma: np.gamma,
        nested,
        vertex_map,
        copies,
        penalties,
    })
}

/// Uniformly random permutation of `0..m`.
pub fn random_permutation<R: Rng + ?Sized>(m: usize, rng: &mut R) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        let j = rng.random_range(0..=i);
        perm.swap(i, j);
    }
    perm
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LogicalDecodeResult {
    pub logical: SpinConfig,
    /// Logical vertices settled by a coin flip.
    pub tie_count: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecodeMode {
    /// One vote over every physical spin of a logical vertex.
    #[default]
    Joint,
    /// Vote along each chain first, then across the `C` copies.
    TwoStage,
}

/// Precomputed readout layout: for each logical vertex, the physical indices
/// of each of its copies.
#[derive(Clone, Debug)]
pub struct Decoder {
    groups: Vec<Vec<Vec<usize>>>,
    physical_n: usize,
}

impl Decoder {
    /// With an embedding, physical indices follow [`Embedding::qubits`]
    /// order; without one, they are the nested indices.
    pub fn new(np: &NestedProblem, emb: Option<&Embedding>) -> Result<Self> {
        match emb {
            None => Ok(Self {
                groups: np
                    .copies
                    .iter()
                    .map(|cs| cs.iter().map(|&v| vec![v]).collect())
                    .collect(),
                physical_n: np.nested_n(),
            }),
            Some(e) => {
                check_len(np.nested_n(), e.num_chains())?;
                let local = e.local_chains();
                Ok(Self {
                    groups: np
                        .copies
                        .iter()
                        .map(|cs| cs.iter().map(|&v| local[v].clone()).collect())
                        .collect(),
                    physical_n: e.num_qubits(),
                })
            }
        }
    }

    pub fn physical_n(&self) -> usize {
        self.physical_n
    }

    pub fn decode<R: Rng + ?Sized>(
        &self,
        physical: &SpinConfig,
        mode: DecodeMode,
        rng: &mut R,
    ) -> Result<LogicalDecodeResult> {
        check_len(self.physical_n, physical.len())?;
        let s = physical.as_slice();
        let mut tie_count = 0;
        let mut vote = |sum: i64, rng: &mut R| -> i8 {
            match sum.signum() {
                0 => {
                    tie_count += 1;
                    if rng.random::<bool>() {
                        1
                    } else {
                        -1
                    }
                }
                sign => sign as i8,
            }
        };
        let mut logical = Vec::with_capacity(self.groups.len());
        for copies in &self.groups {
            let spin = match mode {
                DecodeMode::Joint => {
                    let sum = copies.iter().flatten().map(|&q| i64::from(s[q])).sum();
                    vote(sum, rng)
                }
                DecodeMode::TwoStage => {
                    let mut sum = 0i64;
                    for chain in copies {
                        let chain_sum = chain.iter().map(|&q| i64::from(s[q])).sum();
                        sum += i64::from(vote(chain_sum, rng));
                    }
                    vote(sum, rng)
                }
            };
            logical.push(spin);
        }
        Ok(LogicalDecodeResult {
            logical: SpinConfig::from_vec_unchecked(logical),
            tie_count,
        })
    }
}

/// Joint majority vote over all physical spins of each logical vertex; exact
/// ties are broken by one fair coin per tied vertex, in vertex order.
pub fn decode_majority<R: Rng + ?Sized>(
    np: &NestedProblem,
    emb: Option<&Embedding>,
    physical: &SpinConfig,
    rng: &mut R,
) -> Result<LogicalDecodeResult> {
    Decoder::new(np, emb)?.decode(physical, DecodeMode::Joint, rng)
}
