//! Chimera hardware graphs, complete-graph minor embeddings and compilation of
//! nested problems onto physical qubits.
//!
//! Qubit `(row, col, side, k)` has index `((row·cols + col)·2 + side)·shore + k`.
//! Side 0 qubits couple vertically to the cell below, side 1 qubits couple
//! horizontally to the cell on the right, and the two sides of a cell form a
//! complete bipartite graph.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, domain, Error, Result};
use crate::ising::{CouplingGraph, IsingProblem, SpinConfig};
use crate::nesting::NestedProblem;

pub const DEFAULT_SHORE: usize = 4;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ChimeraGraph {
    rows: usize,
    cols: usize,
    shore: usize,
    dead: BTreeSet<usize>,
    adj: Vec<Vec<usize>>,
    num_edges: usize,
}

/// Builds a Chimera graph of `K_{4,4}` cells with the given dead qubits removed.
pub fn build_chimera(rows: usize, cols: usize, dead: &BTreeSet<usize>) -> Result<ChimeraGraph> {
    ChimeraGraph::new(rows, cols, DEFAULT_SHORE, dead)
}

impl ChimeraGraph {
    pub fn new(rows: usize, cols: usize, shore: usize, dead: &BTreeSet<usize>) -> Result<Self> {
        if rows == 0 || cols == 0 || shore == 0 {
            return Err(domain("chimera dimensions must be positive"));
        }
        let sites = rows * cols * 2 * shore;
        if let Some(&q) = dead.iter().find(|&&q| q >= sites) {
            return Err(domain(format!("dead qubit {q} out of range (0..{sites})")));
        }
        let mut g = Self {
            rows,
            cols,
            shore,
            dead: dead.clone(),
            adj: vec![Vec::new(); sites],
            num_edges: 0,
        };
        let mut pairs = Vec::new();
        for r in 0..rows {
            for c in 0..cols {
                for k in 0..shore {
                    for l in 0..shore {
                        pairs.push((g.index(r, c, 0, k), g.index(r, c, 1, l)));
                    }
                    if r + 1 < rows {
                        pairs.push((g.index(r, c, 0, k), g.index(r + 1, c, 0, k)));
                    }
                    if c + 1 < cols {
                        pairs.push((g.index(r, c, 1, k), g.index(r, c + 1, 1, k)));
                    }
                }
            }
        }
        for (a, b) in pairs {
            if !g.dead.contains(&a) && !g.dead.contains(&b) {
                g.adj[a].push(b);
                g.adj[b].push(a);
                g.num_edges += 1;
            }
        }
        for list in &mut g.adj {
            list.sort_unstable();
        }
        Ok(g)
    }

    pub fn perfect(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, DEFAULT_SHORE, &BTreeSet::new()).expect("valid dimensions")
    }

    /// 8×8 graph with a fixed synthetic mask of 8 isolated dead qubits
    /// (504 working qubits).
    pub fn dw2_like() -> Self {
        let p = Self::perfect(8, 8);
        let dead = [
            (0, 2, 0, 1),
            (7, 5, 0, 3),
            (3, 0, 1, 2),
            (1, 1, 1, 0),
            (2, 6, 0, 2),
            (4, 3, 1, 3),
            (5, 5, 0, 1),
            (6, 2, 1, 2),
        ]
        .iter()
        .map(|&(r, c, s, k)| p.index(r, c, s, k))
        .collect();
        Self::new(8, 8, DEFAULT_SHORE, &dead).expect("mask in range")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shore(&self) -> usize {
        self.shore
    }

    pub fn dead(&self) -> &BTreeSet<usize> {
        &self.dead
    }

    pub fn index(&self, row: usize, col: usize, side: usize, k: usize) -> usize {
        ((row * self.cols + col) * 2 + side) * self.shore + k
    }

    /// Inverse of [`index`](Self::index): `(row, col, side, k)`.
    pub fn coords(&self, q: usize) -> (usize, usize, usize, usize) {
        let k = q % self.shore;
        let rest = q / self.shore;
        let side = rest % 2;
        let cell = rest / 2;
        (cell / self.cols, cell % self.cols, side, k)
    }

    /// Number of qubit sites, dead ones included.
    pub fn num_sites(&self) -> usize {
        self.adj.len()
    }

    pub fn num_working(&self) -> usize {
        self.num_sites() - self.dead.len()
    }

    pub fn num_edges(&self) -> usize {
        self.num_edges
    }

    pub fn is_working(&self, q: usize) -> bool {
        q < self.num_sites() && !self.dead.contains(&q)
    }

    pub fn neighbors(&self, q: usize) -> &[usize] {
        &self.adj[q]
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        a < self.num_sites() && self.adj[a].binary_search(&b).is_ok()
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.adj
            .iter()
            .enumerate()
            .flat_map(|(a, list)| list.iter().filter(move |&&b| b > a).map(move |&b| (a, b)))
    }

    pub fn to_file(&self) -> HardwareFile {
        HardwareFile {
            rows: self.rows,
            cols: self.cols,
            cell_size: self.shore,
            dead: self.dead.iter().copied().collect(),
        }
    }

    pub fn from_file(f: &HardwareFile) -> Result<Self> {
        Self::new(f.rows, f.cols, f.cell_size, &f.dead.iter().copied().collect())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let f: HardwareFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        Self::from_file(&f)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_file())?)?;
        Ok(())
    }
}

/// On-disk hardware graph.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HardwareFile {
    pub rows: usize,
    pub cols: usize,
    #[serde(default = "default_shore")]
    pub cell_size: usize,
    #[serde(default)]
    pub dead: Vec<usize>,
}

fn default_shore() -> usize {
    DEFAULT_SHORE
}

/// Chains of hardware qubits, indexed by source vertex.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Embedding {
    chains: Vec<Vec<usize>>,
}

impl Embedding {
    pub fn new(chains: Vec<Vec<usize>>) -> Self {
        Self { chains }
    }

    pub fn chains(&self) -> &[Vec<usize>] {
        &self.chains
    }

    pub fn chain(&self, v: usize) -> &[usize] {
        &self.chains[v]
    }

    pub fn num_chains(&self) -> usize {
        self.chains.len()
    }

    /// Sorted hardware qubits used by any chain. Position in this list is the
    /// qubit's index in the compiled physical problem.
    pub fn qubits(&self) -> Vec<usize> {
        let set: BTreeSet<usize> = self.chains.iter().flatten().copied().collect();
        set.into_iter().collect()
    }

    pub fn num_qubits(&self) -> usize {
        self.qubits().len()
    }

    /// Chains expressed as positions in [`qubits`](Self::qubits).
    pub fn local_chains(&self) -> Vec<Vec<usize>> {
        let qubits = self.qubits();
        self.chains
            .iter()
            .map(|ch| ch.iter().map(|q| qubits.binary_search(q).expect("qubit listed")).collect())
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let chains: BTreeMap<String, &Vec<usize>> = self
            .chains
            .iter()
            .enumerate()
            .map(|(v, ch)| (v.to_string(), ch))
            .collect();
        Ok(serde_json::to_string_pretty(&serde_json::json!({ "chains": chains }))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            chains: BTreeMap<String, Vec<usize>>,
        }
        let file: File = serde_json::from_str(text)?;
        let mut chains = vec![None; file.chains.len()];
        for (key, chain) in file.chains {
            let v: usize = key
                .parse()
                .map_err(|_| Error::Parse(format!("chain key {key:?} is not a vertex index")))?;
            match chains.get_mut(v) {
                Some(slot) => *slot = Some(chain),
                None => return Err(Error::Parse(format!("chain keys must be 0..n, found {v}"))),
            }
        }
        Ok(Self {
            chains: chains.into_iter().map(|c| c.expect("keys are distinct")).collect(),
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    ChainCount { expected: usize, got: usize },
    EmptyChain { vertex: usize },
    OutOfRange { vertex: usize, qubit: usize },
    DeadQubit { vertex: usize, qubit: usize },
    Overlap { qubit: usize, first: usize, second: usize },
    Disconnected { vertex: usize },
    MissingCoupler { u: usize, v: usize },
}

impl Violation {
    pub fn kind(&self) -> &'static str {
        match self {
            Violation::ChainCount { .. } | Violation::EmptyChain { .. } => "coverage",
            Violation::OutOfRange { .. } | Violation::DeadQubit { .. } => "dead-qubit",
            Violation::Overlap { .. } => "disjointness",
            Violation::Disconnected { .. } => "connectivity",
            Violation::MissingCoupler { .. } => "coupler",
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: ", self.kind())?;
        match self {
            Violation::ChainCount { expected, got } => {
                write!(f, "expected {expected} chains, got {got}")
            }
            Violation::EmptyChain { vertex } => write!(f, "chain {vertex} is empty"),
            Violation::OutOfRange { vertex, qubit } => {
                write!(f, "chain {vertex} uses qubit {qubit} outside the graph")
            }
            Violation::DeadQubit { vertex, qubit } => {
                write!(f, "chain {vertex} uses dead qubit {qubit}")
            }
            Violation::Overlap { qubit, first, second } => {
                write!(f, "qubit {qubit} shared by chains {first} and {second}")
            }
            Violation::Disconnected { vertex } => write!(f, "chain {vertex} is not connected"),
            Violation::MissingCoupler { u, v } => {
                write!(f, "no hardware edge between chains {u} and {v}")
            }
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn has_kind(&self, kind: &str) -> bool {
        self.violations.iter().any(|v| v.kind() == kind)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        write!(f, "{} violation(s)", self.violations.len())?;
        for v in self.violations.iter().take(8) {
            write!(f, "; {v}")?;
        }
        if self.violations.len() > 8 {
            write!(f, "; ...")?;
        }
        Ok(())
    }
}

/// Checks coverage, disjointness, dead qubits, chain connectivity and coupler
/// availability, listing every violation found.
pub fn validate_embedding(e: &Embedding, source: &CouplingGraph, g: &ChimeraGraph) -> ValidationReport {
    let mut violations = Vec::new();
    if e.num_chains() != source.n {
        violations.push(Violation::ChainCount {
            expected: source.n,
            got: e.num_chains(),
        });
    }
    let mut owner = vec![usize::MAX; g.num_sites()];
    for (v, chain) in e.chains.iter().enumerate() {
        if chain.is_empty() {
            violations.push(Violation::EmptyChain { vertex: v });
        }
        for &q in chain {
            if q >= g.num_sites() {
                violations.push(Violation::OutOfRange { vertex: v, qubit: q });
                continue;
            }
            if g.dead.contains(&q) {
                violations.push(Violation::DeadQubit { vertex: v, qubit: q });
            }
            if owner[q] == usize::MAX {
                owner[q] = v;
            } else {
                violations.push(Violation::Overlap {
                    qubit: q,
                    first: owner[q],
                    second: v,
                });
            }
        }
    }
    for (v, chain) in e.chains.iter().enumerate() {
        let members: Vec<usize> = chain.iter().copied().filter(|&q| q < g.num_sites()).collect();
        if !members.is_empty() && !is_connected(&members, g) {
            violations.push(Violation::Disconnected { vertex: v });
        }
    }
    for &(u, v) in &source.edges {
        let linked = u < e.num_chains()
            && v < e.num_chains()
            && e.chains[u]
                .iter()
                .any(|&a| e.chains[v].iter().any(|&b| g.has_edge(a, b)));
        if !linked {
            violations.push(Violation::MissingCoupler { u, v });
        }
    }
    ValidationReport { violations }
}

fn is_connected(members: &[usize], g: &ChimeraGraph) -> bool {
    let set: BTreeSet<usize> = members.iter().copied().collect();
    let mut seen = BTreeSet::from([members[0]]);
    let mut queue = VecDeque::from([members[0]]);
    while let Some(q) = queue.pop_front() {
        for &n in g.neighbors(q) {
            if set.contains(&n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == set.len()
}

/// Triangular layout embedding `K_n`: vertex `4a + k` runs along row `a`
/// through columns `0..=a` on the horizontal side, turns in cell `(a, a)` and
/// runs down column `a` through rows `a..t` on the vertical side.
pub fn choi_embed(n: usize, g: &ChimeraGraph) -> Result<Embedding> {
    if !g.dead.is_empty() {
        return Err(Error::Unsupported(
            "triangular embedding requires a graph without dead qubits".into(),
        ));
    }
    let shore = g.shore;
    let t = n.div_ceil(shore);
    if t > g.rows.min(g.cols) {
        return Err(Error::Capacity(format!(
            "K_{n} needs a {t}x{t} block, graph is {}x{}",
            g.rows, g.cols
        )));
    }
    let chains = (0..n)
        .map(|v| {
            let (a, k) = (v / shore, v % shore);
            let horizontal = (0..=a).map(|c| g.index(a, c, 1, k));
            let vertical = (a..t).map(|r| g.index(r, a, 0, k));
            horizontal.chain(vertical).collect()
        })
        .collect();
    Ok(Embedding { chains })
}

/// Randomized embedding for arbitrary source graphs.
///
/// When the graph fits, chains start from the triangular complete-graph
/// layout placed at a random block offset and grid orientation, preferring
/// placements that hit the fewest dead qubits; otherwise they start empty.
/// Missing, overlapping or disconnected chains are then re-grown along
/// shortest paths in a qubit-weighted graph where contested qubits become
/// progressively more expensive, and finally every chain is trimmed of
/// removable qubits. Restarts up to `max_tries` times; a returned embedding
/// always passes validation.
pub fn heuristic_embed<R: Rng + ?Sized>(
    source: &CouplingGraph,
    g: &ChimeraGraph,
    rng: &mut R,
    max_tries: usize,
) -> Result<Embedding> {
    let n = source.n;
    if n == 0 {
        return Ok(Embedding::default());
    }
    let adjacency = source.adjacency();
    for _ in 0..max_tries {
        let seed = seeded_chains(n, g, rng);
        if let Some(mut chains) = Router::new(&adjacency, g, seed).repair(rng) {
            shrink_chains(&mut chains, &adjacency, g);
            let e = Embedding { chains };
            if validate_embedding(&e, source, g).is_valid() {
                return Ok(e);
            }
        }
    }
    Err(Error::EmbeddingNotFound { tries: max_tries })
}

fn seeded_chains<R: Rng + ?Sized>(n: usize, g: &ChimeraGraph, rng: &mut R) -> Vec<Vec<usize>> {
    let t = n.div_ceil(g.shore);
    if t > g.rows.min(g.cols) {
        return vec![Vec::new(); n];
    }
    let mut best = usize::MAX;
    let mut layouts = Vec::new();
    for r0 in 0..=g.rows - t {
        for c0 in 0..=g.cols - t {
            for orientation in 0..8u8 {
                let chains = triangle_layout(n, t, g, r0, c0, orientation);
                let damaged = chains
                    .iter()
                    .filter(|ch| ch.iter().any(|q| g.dead.contains(q)))
                    .count();
                if damaged < best {
                    best = damaged;
                    layouts.clear();
                }
                if damaged == best {
                    layouts.push(chains);
                }
            }
        }
    }
    let mut chains = layouts.swap_remove(rng.random_range(0..layouts.len()));
    for ch in &mut chains {
        if ch.iter().any(|q| g.dead.contains(q)) {
            ch.clear();
        }
    }
    chains
}

/// Triangular layout in the `t×t` block at `(r0, c0)`; bit 0 of
/// `orientation` transposes the block, bits 1 and 2 mirror rows and columns.
fn triangle_layout(
    n: usize,
    t: usize,
    g: &ChimeraGraph,
    r0: usize,
    c0: usize,
    orientation: u8,
) -> Vec<Vec<usize>> {
    let place = |r: usize, c: usize, side: usize, k: usize| {
        let (mut r, mut c, mut side) = (r, c, side);
        if orientation & 1 != 0 {
            (r, c, side) = (c, r, 1 - side);
        }
        if orientation & 2 != 0 {
            r = t - 1 - r;
        }
        if orientation & 4 != 0 {
            c = t - 1 - c;
        }
        g.index(r0 + r, c0 + c, side, k)
    };
    (0..n)
        .map(|v| {
            let (a, k) = (v / g.shore, v % g.shore);
            let horizontal = (0..=a).map(|c| place(a, c, 1, k));
            let vertical = (a..t).map(|r| place(r, a, 0, k));
            horizontal.chain(vertical).collect()
        })
        .collect()
}

/// Drops qubits (latest first) whose removal keeps the chain connected and
/// adjacent to every neighbour chain.
fn shrink_chains(chains: &mut [Vec<usize>], adjacency: &[Vec<usize>], g: &ChimeraGraph) {
    let mut owner = vec![usize::MAX; g.num_sites()];
    for (v, ch) in chains.iter().enumerate() {
        for &q in ch {
            owner[q] = v;
        }
    }
    let mut changed = true;
    while changed {
        changed = false;
        for v in 0..chains.len() {
            let mut i = chains[v].len();
            while i > 0 && chains[v].len() > 1 {
                i -= 1;
                let q = chains[v][i];
                let mut rest = chains[v].clone();
                rest.remove(i);
                let touches_all = adjacency[v].iter().all(|&u| {
                    rest.iter()
                        .any(|&a| g.neighbors(a).iter().any(|&b| owner[b] == u))
                });
                if touches_all && is_connected(&rest, g) {
                    owner[q] = usize::MAX;
                    chains[v] = rest;
                    changed = true;
                }
            }
        }
    }
}

const ROUTING_ROUNDS: usize = 60;

#[derive(Clone, Copy, PartialEq)]
struct Frontier(f64, usize);

impl Eq for Frontier {}

impl PartialOrd for Frontier {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Frontier {
    // Reversed so that `BinaryHeap` pops the cheapest entry.
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

struct Router<'a> {
    adjacency: &'a [Vec<usize>],
    g: &'a ChimeraGraph,
    chains: Vec<Vec<usize>>,
    usage: Vec<u32>,
    history: Vec<f64>,
    base: f64,
}

impl<'a> Router<'a> {
    fn new(adjacency: &'a [Vec<usize>], g: &'a ChimeraGraph, chains: Vec<Vec<usize>>) -> Self {
        let mut usage = vec![0; g.num_sites()];
        for &q in chains.iter().flatten() {
            usage[q] += 1;
        }
        Self {
            adjacency,
            g,
            chains,
            usage,
            history: vec![0.0; g.num_sites()],
            base: 2.0,
        }
    }

    fn needs_work(&self, v: usize) -> bool {
        let chain = &self.chains[v];
        chain.is_empty()
            || chain.iter().any(|&q| self.usage[q] > 1)
            || !is_connected(chain, self.g)
            || self.adjacency[v].iter().any(|&u| {
                !self.chains[u].is_empty()
                    && !chain.iter().any(|&a| {
                        self.chains[u].iter().any(|&b| self.g.has_edge(a, b))
                    })
            })
    }

    fn repair<R: Rng + ?Sized>(mut self, rng: &mut R) -> Option<Vec<Vec<usize>>> {
        let n = self.chains.len();
        for _ in 0..ROUTING_ROUNDS {
            let mut bad: Vec<usize> = (0..n).filter(|&v| self.needs_work(v)).collect();
            if bad.is_empty() {
                return Some(self.chains);
            }
            let perm = crate::nesting::random_permutation(bad.len(), rng);
            bad = perm.iter().map(|&i| bad[i]).collect();
            for v in bad {
                self.rip_up(v);
                let chain = self.route(v, rng)?;
                for &q in &chain {
                    self.usage[q] += 1;
                }
                self.chains[v] = chain;
            }
            for (h, &u) in self.history.iter_mut().zip(&self.usage) {
                if u > 1 {
                    *h += 1.0;
                }
            }
            self.base = (self.base * 1.2).min(1e3);
        }
        None
    }

    fn rip_up(&mut self, v: usize) {
        for q in std::mem::take(&mut self.chains[v]) {
            self.usage[q] -= 1;
        }
    }

    fn weight(&self, q: usize) -> f64 {
        (1.0 + self.history[q]) * self.base.powi(self.usage[q] as i32)
    }

    /// Node-weighted Dijkstra from chain `u`; path costs include the target
    /// and exclude the chain itself.
    fn distances(&self, u: usize) -> (Vec<f64>, Vec<usize>) {
        let sites = self.g.num_sites();
        let mut dist = vec![f64::INFINITY; sites];
        let mut parent = vec![usize::MAX; sites];
        let mut heap = std::collections::BinaryHeap::new();
        for &q in &self.chains[u] {
            dist[q] = 0.0;
            heap.push(Frontier(0.0, q));
        }
        while let Some(Frontier(d, q)) = heap.pop() {
            if d > dist[q] {
                continue;
            }
            for &nb in self.g.neighbors(q) {
                let nd = d + self.weight(nb);
                if nd < dist[nb] {
                    dist[nb] = nd;
                    parent[nb] = q;
                    heap.push(Frontier(nd, nb));
                }
            }
        }
        (dist, parent)
    }

    fn route<R: Rng + ?Sized>(&self, v: usize, rng: &mut R) -> Option<Vec<usize>> {
        let placed: Vec<usize> = self.adjacency[v]
            .iter()
            .copied()
            .filter(|&u| !self.chains[u].is_empty())
            .collect();
        let mut blocked = vec![false; self.g.num_sites()];
        for &u in &placed {
            for &q in &self.chains[u] {
                blocked[q] = true;
            }
        }
        let candidates: Vec<usize> = (0..self.g.num_sites())
            .filter(|&q| self.g.is_working(q) && !blocked[q])
            .collect();
        if placed.is_empty() {
            let min = candidates.iter().map(|&q| self.usage[q]).min()?;
            let free: Vec<usize> = candidates.into_iter().filter(|&q| self.usage[q] == min).collect();
            return Some(vec![free[rng.random_range(0..free.len())]]);
        }

        let trees: Vec<(Vec<f64>, Vec<usize>)> = placed.iter().map(|&u| self.distances(u)).collect();
        let mut best = f64::INFINITY;
        let mut roots = Vec::new();
        for &q in &candidates {
            let w = self.weight(q);
            let cost = w + trees.iter().map(|(d, _)| d[q] - w).sum::<f64>();
            if cost < best - 1e-9 {
                best = cost;
                roots.clear();
            }
            if (cost - best).abs() <= 1e-9 {
                roots.push(q);
            }
        }
        if !best.is_finite() {
            return None;
        }
        let root = roots[rng.random_range(0..roots.len())];
        let mut chain = vec![root];
        for ((_, parent), &u) in trees.iter().zip(&placed) {
            let mut q = parent[root];
            while q != usize::MAX && !self.chains[u].contains(&q) {
                if !chain.contains(&q) {
                    chain.push(q);
                }
                q = parent[q];
            }
        }
        Some(chain)
    }
}


#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldMode {
    /// Whole field on the chain's first qubit.
    #[default]
    First,
    /// Field divided evenly over the chain.
    Spread,
}

/// A nested problem compiled onto hardware. Variables are the embedding's
/// used qubits in ascending hardware order.
#[derive(Clone, Debug, PartialEq)]
pub struct PhysicalProblem {
    problem: IsingProblem,
    embedding: Embedding,
    chain_gamma: f64,
    qubits: Vec<usize>,
    local_chains: Vec<Vec<usize>>,
    chain_edges: BTreeSet<(usize, usize)>,
    unscaled: BTreeSet<(usize, usize)>,
}

/// Replaces every nested vertex by its chain: a spanning tree of each chain
/// carries `−chain_gamma`, each nested coupling sits on the lexicographically
/// smallest hardware edge between the two chains (other edges get 0) and
/// fields are placed according to `field_mode`.
pub fn apply_embedding(
    np: &NestedProblem,
    e: &Embedding,
    g: &ChimeraGraph,
    chain_gamma: f64,
    field_mode: FieldMode,
) -> Result<PhysicalProblem> {
    if !(chain_gamma > 0.0) {
        return Err(domain(format!("chain gamma must be positive, got {chain_gamma}")));
    }
    let nested = np.nested();
    let report = validate_embedding(e, &nested.coupling_graph(), g);
    if !report.is_valid() {
        return Err(Error::InvalidEmbedding(report));
    }
    let qubits = e.qubits();
    let local_chains = e.local_chains();
    let mut owner = vec![usize::MAX; g.num_sites()];
    for (v, chain) in e.chains.iter().enumerate() {
        for &q in chain {
            owner[q] = v;
        }
    }
    let local = |q: usize| qubits.binary_search(&q).expect("qubit listed");
    let mut problem = IsingProblem::new(qubits.len()).with_alpha_unchecked(nested.alpha());
    let mut chain_edges = BTreeSet::new();

    for (v, chain) in e.chains.iter().enumerate() {
        // BFS spanning tree of the induced chain subgraph.
        let mut seen = BTreeSet::from([chain[0]]);
        let mut queue = VecDeque::from([chain[0]]);
        while let Some(q) = queue.pop_front() {
            for &nb in g.neighbors(q) {
                if owner[nb] == v && seen.insert(nb) {
                    let (a, b) = (local(q), local(nb));
                    problem.set_coupling(a, b, -chain_gamma)?;
                    chain_edges.insert((a.min(b), a.max(b)));
                    queue.push_back(nb);
                }
            }
        }
        let h = nested.field(v);
        match field_mode {
            FieldMode::First => problem.set_field(local(chain[0]), h)?,
            FieldMode::Spread => {
                let share = h / chain.len() as f64;
                for &q in chain {
                    problem.set_field(local(q), share)?;
                }
            }
        }
    }

    let mut unscaled = chain_edges.clone();
    for (&(u, v), &value) in nested.couplings() {
        let mut edges: Vec<(usize, usize)> = e.chains[u]
            .iter()
            .flat_map(|&a| {
                e.chains[v]
                    .iter()
                    .filter(move |&&b| g.has_edge(a, b))
                    .map(move |&b| (a.min(b), a.max(b)))
            })
            .collect();
        edges.sort_unstable();
        for (i, &(a, b)) in edges.iter().enumerate() {
            let (la, lb) = (local(a), local(b));
            problem.set_coupling(la, lb, if i == 0 { value } else { 0.0 })?;
            if np.is_penalty(u, v) {
                unscaled.insert((la, lb));
            }
        }
    }

    Ok(PhysicalProblem {
        problem,
        embedding: e.clone(),
        chain_gamma,
        qubits,
        local_chains,
        chain_edges,
        unscaled,
    })
}

impl PhysicalProblem {
    pub fn problem(&self) -> &IsingProblem {
        &self.problem
    }

    pub fn embedding(&self) -> &Embedding {
        &self.embedding
    }

    pub fn chain_gamma(&self) -> f64 {
        self.chain_gamma
    }

    /// Hardware index of each physical variable.
    pub fn qubits(&self) -> &[usize] {
        &self.qubits
    }

    pub fn local_chains(&self) -> &[Vec<usize>] {
        &self.local_chains
    }

    pub fn chain_edges(&self) -> &BTreeSet<(usize, usize)> {
        &self.chain_edges
    }

    /// Copies every nested spin onto its whole chain.
    pub fn aligned(&self, nested: &SpinConfig) -> Result<SpinConfig> {
        check_len(self.local_chains.len(), nested.len())?;
        let mut spins = vec![1i8; self.qubits.len()];
        for (chain, &s) in self.local_chains.iter().zip(nested.as_slice()) {
            for &q in chain {
                spins[q] = s;
            }
        }
        SpinConfig::new(spins)
    }

    /// Programmed Hamiltonian with α = 1: problem terms scaled by α, chain
    /// and nesting penalties left at their unscaled values.
    pub fn programmed(&self) -> IsingProblem {
        let alpha = self.problem.alpha();
        let mut p = self.problem.clone().with_alpha_unchecked(1.0);
        for h in p.fields_mut() {
            *h *= alpha;
        }
        for (key, v) in p.couplings_mut().iter_mut() {
            if !self.unscaled.contains(key) {
                *v *= alpha;
            }
        }
        p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingStats {
    pub n_qubits: usize,
    pub max_chain: usize,
    pub mean_chain: f64,
}

pub fn embedding_stats(e: &Embedding) -> EmbeddingStats {
    if e.chains.is_empty() {
        return EmbeddingStats::default();
    }
    let lens: Vec<usize> = e.chains.iter().map(Vec::len).collect();
    EmbeddingStats {
        n_qubits: lens.iter().sum(),
        max_chain: lens.iter().copied().max().unwrap_or(0),
        mean_chain: lens.iter().sum::<usize>() as f64 / lens.len() as f64,
    }
}
