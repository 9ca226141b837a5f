//! From samples to success probabilities, energy boosts and the scaling
//! exponent.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::interp::Pchip;
use crate::ising::GroundSet;
use crate::nesting::{permute_nested, DecodeMode, Decoder, NestedProblem};
use crate::rng::{derive_rng, Stream};
use crate::samples::SampleSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessEstimate {
    pub p: f64,
    pub stderr: f64,
    /// Ground-state fraction of each cycle.
    pub per_cycle: Vec<f64>,
}

/// Mean and standard error of the mean of per-cycle fractions. A single
/// cycle of `n` records falls back to the binomial error.
pub fn cycle_statistics(fractions: &[f64], records: usize) -> Result<(f64, f64)> {
    if fractions.is_empty() || records == 0 {
        return Err(domain("no samples to estimate from"));
    }
    let k = fractions.len() as f64;
    let mean = fractions.iter().sum::<f64>() / k;
    let stderr = if fractions.len() == 1 {
        (mean * (1.0 - mean) / records as f64).sqrt()
    } else {
        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / (k - 1.0);
        (var / k).sqrt()
    };
    Ok((mean, stderr))
}

/// Decodes every record with the layout of its cycle and reports the
/// logical ground-state frequency. Ties use the decode stream of
/// `decode_seed` keyed by `[cycle, run]`.
pub fn estimate_success(
    samples: &SampleSet,
    np: &NestedProblem,
    ground: &GroundSet,
    mode: DecodeMode,
    decode_seed: u64,
) -> Result<SuccessEstimate> {
    if samples.is_empty() {
        return Err(domain("empty sample set"));
    }
    let mut per_cycle = Vec::new();
    for (c, (info, records)) in samples.cycles.iter().zip(samples.by_cycle()).enumerate() {
        if records.is_empty() {
            continue;
        }
        let layout = match &info.permutation {
            Some(perm) => permute_nested(np, perm)?,
            None => np.clone(),
        };
        let decoder = Decoder::new(&layout, info.embedding.as_ref())?;
        let mut hits = 0usize;
        for r in &records {
            let mut rng = derive_rng(decode_seed, Stream::Decode, &[c as u64, r.run as u64]);
            if ground.contains(&decoder.decode(&r.spins, mode, &mut rng)?.logical) {
                hits += 1;
            }
        }
        per_cycle.push(hits as f64 / records.len() as f64);
    }
    let (p, stderr) = cycle_statistics(&per_cycle, samples.len())?;
    Ok(SuccessEstimate { p, stderr, per_cycle })
}

/// Best `(γ, P)` by success probability; ties go to the smaller `γ`.
pub fn optimize_gamma(results: &[(f64, f64)]) -> Result<(f64, f64)> {
    let mut best: Option<(f64, f64)> = None;
    for &(g, p) in results {
        best = match best {
            Some((bg, bp)) if bp > p || (bp == p && bg <= g) => Some((bg, bp)),
            _ => Some((g, p)),
        };
    }
    best.ok_or_else(|| domain("no gamma results to optimize over"))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub alpha: f64,
    pub p: f64,
    pub stderr: f64,
    /// Penalty that achieved `p`, if optimized.
    pub gamma: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuccessCurve {
    pub level: usize,
    points: Vec<CurvePoint>,
}

impl SuccessCurve {
    /// Sorts by `α`; rejects duplicate or non-positive `α`, `P ∉ [0, 1]` and
    /// negative errors.
    pub fn new(level: usize, mut points: Vec<CurvePoint>) -> Result<Self> {
        points.sort_by(|a, b| a.alpha.total_cmp(&b.alpha));
        for p in &points {
            if !(p.alpha > 0.0 && p.alpha.is_finite()) {
                return Err(domain(format!("alpha must be positive, got {}", p.alpha)));
            }
            if !(0.0..=1.0).contains(&p.p) || !(p.stderr >= 0.0) {
                return Err(domain(format!("bad point P = {} ± {}", p.p, p.stderr)));
            }
        }
        if points.windows(2).any(|w| w[0].alpha == w[1].alpha) {
            return Err(domain("alphas must be distinct"));
        }
        Ok(Self { level, points })
    }

    pub fn points(&self) -> &[CurvePoint] {
        &self.points
    }

    fn interpolant(&self, shift: f64, smoothing: f64) -> Result<Pchip> {
        let x: Vec<f64> = self.points.iter().map(|p| p.alpha.ln()).collect();
        let y: Vec<f64> = self.points.iter().map(|p| p.p + shift * p.stderr).collect();
        Pchip::new(&x, &smooth(&y, smoothing))
    }
}

/// Blends each interior value with its three-point average.
fn smooth(y: &[f64], weight: f64) -> Vec<f64> {
    if weight == 0.0 || y.len() < 3 {
        return y.to_vec();
    }
    let mut out = y.to_vec();
    for i in 1..y.len() - 1 {
        let avg = (y[i - 1] + y[i] + y[i + 1]) / 3.0;
        out[i] = (1.0 - weight) * y[i] + weight * avg;
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BoostOptions {
    /// 0 interpolates the data exactly; 1 replaces interior points by their
    /// three-point average before interpolating.
    pub smoothing: f64,
}

impl Default for BoostOptions {
    fn default() -> Self {
        Self { smoothing: 0.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostEntry {
    pub level: usize,
    /// Crossing of `P`, `P + δP` and `P − δP` with `P0`; `None` when the
    /// curve never reaches `P0`.
    pub alpha_mid: Option<f64>,
    pub alpha_high: Option<f64>,
    pub alpha_low: Option<f64>,
    pub mu_mid: Option<f64>,
    pub mu_low: Option<f64>,
    pub mu_high: Option<f64>,
}

impl BoostEntry {
    /// `[min, max]` of the two bound estimates.
    pub fn band(&self) -> Option<(f64, f64)> {
        match (self.mu_low, self.mu_high) {
            (Some(a), Some(b)) => Some((a.min(b), a.max(b))),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoostResult {
    pub p0: f64,
    pub entries: Vec<BoostEntry>,
}

impl BoostResult {
    /// `(C, μ_mid)` for every level whose crossing was found.
    pub fn mu_points(&self) -> Vec<(usize, f64)> {
        self.entries
            .iter()
            .filter_map(|e| e.mu_mid.map(|m| (e.level, m)))
            .collect()
    }

    pub fn entry(&self, level: usize) -> Option<&BoostEntry> {
        self.entries.iter().find(|e| e.level == level)
    }
}

/// Midpoint between the largest and smallest success probability of the
/// `C = 1` curve.
pub fn default_p0(curves: &[SuccessCurve]) -> Result<f64> {
    let reference = reference_curve(curves)?;
    let (lo, hi) = reference
        .points
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p.p), hi.max(p.p)));
    Ok(0.5 * (lo + hi))
}

fn reference_curve(curves: &[SuccessCurve]) -> Result<&SuccessCurve> {
    curves
        .iter()
        .find(|c| c.level == 1)
        .ok_or_else(|| domain("boost extraction needs the C = 1 curve"))
}

/// Energy boost of every curve relative to the `C = 1` curve: each curve is
/// interpolated monotonically in `ln α`, the first crossing with `P0` is
/// found by bisection, and `μ_C = α_1 / α_C` for the central and both
/// shifted curves.
pub fn compute_boost(curves: &[SuccessCurve], p0: f64, opts: &BoostOptions) -> Result<BoostResult> {
    if !(0.0..=1.0).contains(&opts.smoothing) {
        return Err(domain("smoothing must lie in [0, 1]"));
    }
    if !p0.is_finite() {
        return Err(domain("reference probability must be finite"));
    }
    let crossings = |c: &SuccessCurve| -> Result<[Option<f64>; 3]> {
        if c.points.len() < 2 {
            return Err(domain(format!("curve C = {} needs at least two points", c.level)));
        }
        let mut out = [None; 3];
        for (slot, shift) in out.iter_mut().zip([0.0, 1.0, -1.0]) {
            *slot = c.interpolant(shift, opts.smoothing)?.first_crossing(p0).map(f64::exp);
        }
        Ok(out)
    };
    let [ref_mid, ref_high, ref_low] = crossings(reference_curve(curves)?)?;
    let ratio = |a: Option<f64>, b: Option<f64>| match (a, b) {
        (Some(a), Some(b)) => Some(a / b),
        _ => None,
    };
    let mut entries = Vec::with_capacity(curves.len());
    for c in curves {
        let [mid, high, low] = crossings(c)?;
        entries.push(BoostEntry {
            level: c.level,
            alpha_mid: mid,
            alpha_high: high,
            alpha_low: low,
            mu_mid: ratio(ref_mid, mid),
            mu_high: ratio(ref_high, high),
            mu_low: ratio(ref_low, low),
        });
    }
    entries.sort_by_key(|e| e.level);
    Ok(BoostResult { p0, entries })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EtaFit {
    pub eta: f64,
    /// Slope of `ln μ` against `ln C²`.
    pub slope: f64,
    pub intercept: f64,
    /// Levels used, starting from the smallest.
    pub points: usize,
}

/// Least-squares fit of `ln μ_C` against `ln C²` over the first `fit_count`
/// levels (by ascending `C`); `η` is twice the slope.
pub fn fit_eta(mu: &[(usize, f64)], fit_count: usize) -> Result<EtaFit> {
    let mut pts: Vec<(usize, f64)> = mu.to_vec();
    pts.sort_by_key(|p| p.0);
    pts.truncate(fit_count);
    if pts.len() < 2 {
        return Err(domain("the exponent fit needs at least two levels"));
    }
    if pts.iter().any(|&(c, m)| c < 1 || !(m > 0.0)) {
        return Err(domain("levels must be >= 1 and boosts positive"));
    }
    let xs: Vec<f64> = pts.iter().map(|&(c, _)| 2.0 * (c as f64).ln()).collect();
    let ys: Vec<f64> = pts.iter().map(|&(_, m)| m.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(domain("the exponent fit needs two distinct levels"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok(EtaFit {
        eta: 2.0 * slope,
        slope,
        intercept: my - slope * mx,
        points: pts.len(),
    })
}

/// Physical qubits of `K_{C×N}` under the complete-graph layout:
/// `C·N·(⌈C·N/4⌉ + 1)`.
pub fn physical_qubits(level: usize, n: usize) -> usize {
    let m = level * n;
    m * (m.div_ceil(4) + 1)
}

/// Independent unencoded repetitions affordable at level `C` with the
/// qubit budget of level `C_max`.
pub fn repetition_count(level: usize, max_level: usize, n: usize) -> Result<usize> {
    if level < 1 || level > max_level || n < 1 {
        return Err(domain(format!("need 1 <= C <= C_max and N >= 1, got C={level}, C_max={max_level}, N={n}")));
    }
    Ok(physical_qubits(max_level, n) / physical_qubits(level, n))
}

/// `1 − (1 − P)^M`.
pub fn repeated_success(p: f64, m: usize) -> Result<f64> {
    if !(0.0..=1.0).contains(&p) {
        return Err(domain(format!("probability {p} outside [0, 1]")));
    }
    Ok(1.0 - (1.0 - p).powi(m as i32))
}

pub fn adjust_repetition(p: f64, level: usize, max_level: usize, n: usize) -> Result<f64> {
    repeated_success(p, repetition_count(level, max_level, n)?)
}
