//! Mean-field free energy of the nested antiferromagnet and its
//! low-temperature partition-function exponent.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::sqa::Schedule;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreeEnergyForm {
    /// Penalty `γ` as is (large-N limit).
    #[default]
    Thermodynamic,
    /// Penalty `γ + J/N`.
    FiniteN,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldPoint {
    pub m: f64,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    /// Antiferromagnetic coupling scale.
    pub j: f64,
    /// Logical size.
    pub n: usize,
    pub level: usize,
    pub beta: f64,
}

impl MeanFieldPoint {
    pub fn validate(&self) -> Result<()> {
        if !(self.m.abs() <= 1.0) {
            return Err(domain(format!("magnetization {} outside [-1, 1]", self.m)));
        }
        if !(self.beta > 0.0) || self.level < 1 {
            return Err(domain("need beta > 0 and C >= 1"));
        }
        if self.n < 1 {
            return Err(domain("logical size must be at least 1"));
        }
        Ok(())
    }

    fn effective_gamma(&self, form: FreeEnergyForm) -> f64 {
        match form {
            FreeEnergyForm::Thermodynamic => self.gamma,
            FreeEnergyForm::FiniteN => self.gamma + self.j / self.n as f64,
        }
    }
}

/// `βF = −C²β(√((A/C)² + (2γBm)²) − γBm²)`, with `γ ↦ γ + J/N` in the
/// finite-N form.
pub fn beta_free_energy(pt: &MeanFieldPoint, form: FreeEnergyForm) -> f64 {
    let c = pt.level as f64;
    let g = pt.effective_gamma(form);
    let a = pt.a / c;
    let field = 2.0 * g * pt.b * pt.m;
    -c * c * pt.beta * ((a * a + field * field).sqrt() - g * pt.b * pt.m * pt.m)
}

/// `Nβ{√((CA)² + (2B(γ+J/N)C²m)²) − B(γ+J/N)C²m²}`, the exponent of the
/// low-temperature partition function.
pub fn log_partition_large_beta(pt: &MeanFieldPoint) -> f64 {
    let c = pt.level as f64;
    let g = pt.gamma + pt.j / pt.n as f64;
    let ca = c * pt.a;
    let field = 2.0 * pt.b * g * c * c * pt.m;
    pt.n as f64 * pt.beta * ((ca * ca + field * field).sqrt() - pt.b * g * c * c * pt.m * pt.m)
}

const GRID: usize = 2000;
const TOLERANCE: f64 = 1e-10;

/// Minimizer of βF over `m ∈ [0, 1]` (the free energy is even in `m`):
/// a coarse grid scan brackets the global minimum, golden-section search
/// refines it.
pub fn minimize_magnetization(a: f64, b: f64, gamma: f64, beta: f64, level: usize) -> Result<f64> {
    if !(b >= 0.0) {
        return Err(domain(format!("B must be non-negative, got {b}")));
    }
    let point = MeanFieldPoint {
        m: 0.0,
        a,
        b,
        gamma,
        j: 1.0,
        n: 1,
        level,
        beta,
    };
    point.validate()?;
    let f = |m: f64| beta_free_energy(&MeanFieldPoint { m, ..point }, FreeEnergyForm::Thermodynamic);
    let step = 1.0 / GRID as f64;
    let best = (0..=GRID)
        .map(|k| (k, f(k as f64 * step)))
        .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
    let mut lo = (best.0 as f64 - 1.0).max(0.0) * step;
    let mut hi = ((best.0 + 1) as f64 * step).min(1.0);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > TOLERANCE {
        if f1 <= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = f(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = f(x2);
        }
    }
    // The grid point wins ties, so flat surfaces report m = 0.
    let grid_m = best.0 as f64 * step;
    let mid = 0.5 * (lo + hi);
    Ok(if f(mid) < f(grid_m) { mid } else { grid_m })
}

/// βF over an `(s, m)` grid as CSV (`s,m,A,B,beta_f`), with `A`, `B` read
/// from `schedule`; `m` spans `[-1, 1]`.
pub fn free_energy_grid(
    template: &MeanFieldPoint,
    schedule: &Schedule,
    s_steps: usize,
    m_steps: usize,
    form: FreeEnergyForm,
) -> Result<String> {
    if s_steps < 1 || m_steps < 1 {
        return Err(domain("grid needs at least one step per axis"));
    }
    let mut out = String::from("s,m,A,B,beta_f\n");
    for i in 0..=s_steps {
        let s = i as f64 / s_steps as f64;
        let (a, b) = schedule.at(s);
        for k in 0..=m_steps {
            let m = -1.0 + 2.0 * k as f64 / m_steps as f64;
            let pt = MeanFieldPoint { m, a, b, ..*template };
            pt.validate()?;
            out.push_str(&format!("{s},{m},{a},{b},{}\n", beta_free_energy(&pt, form)));
        }
    }
    Ok(out)
}
