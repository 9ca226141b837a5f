//! Acceptance criteria. Each prints one PASS/FAIL line; the process fails if
//! any criterion does. Pass criterion numbers as arguments to run a subset.

use std::fs;
use std::time::Instant;

use rand::Rng;

use nqac::analysis::{
    compute_boost, default_p0, estimate_success, fit_eta, repeated_success, repetition_count, BoostOptions,
    CurvePoint, SuccessCurve,
};
use nqac::chimera::{choi_embed, heuristic_embed, validate_embedding, ChimeraGraph};
use nqac::experiment::{run_experiment, Engine, ExperimentConfig, PtSettings, RunStage};
use nqac::fixtures::{k4_antiferromagnet, k8_harder};
use nqac::ising::{brute_force_ground, energy, rescale, CouplingGraph, SpinConfig};
use nqac::meanfield::{beta_free_energy, FreeEnergyForm, MeanFieldPoint};
use nqac::nesting::{decode_majority, encode_nested, DecodeMode};
use nqac::protocol::{run_protocol, ProtocolOptions};
use nqac::rng::rng_from_seed;
use nqac::sqa::{default_schedule, run_sqa, SqaParams};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64)).collect()
}

fn jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Aligned nested energy against `C²·E − α·γ·N·C(C−1)/2` for every logical
/// configuration.
fn nested_energy_identity() -> Outcome {
    let mut worst = 0.0f64;
    let mut checked = 0usize;
    for base in [k4_antiferromagnet(), k8_harder()] {
        let n = base.n();
        for alpha in [1.0, 0.37] {
            let base = rescale(&base, alpha).map_err(|e| e.to_string())?;
            for level in 1..=4 {
                for gamma in [0.3, 1.0] {
                    let np = encode_nested(&base, level, gamma).map_err(|e| e.to_string())?;
                    let c = level as f64;
                    for bits in 0..1u64 << n {
                        let logical = SpinConfig::from_bits(bits, n);
                        let nested = np.lift(&logical).map_err(|e| e.to_string())?;
                        let got = energy(np.nested(), &nested).map_err(|e| e.to_string())?;
                        let e = energy(&base, &logical).map_err(|e| e.to_string())?;
                        let want = c * c * e - alpha * gamma * n as f64 * c * (c - 1.0) / 2.0;
                        worst = worst.max((got - want).abs());
                        checked += 1;
                    }
                }
            }
        }
    }
    check(worst <= 1e-9, format!("{checked} configurations, max deviation {worst:.2e}"))
}

/// Uniformly random nested states decode to the K4 ground set 6/16 of the
/// time.
fn random_baseline() -> Outcome {
    let base = k4_antiferromagnet();
    let ground = brute_force_ground(&base).map_err(|e| e.to_string())?;
    let samples = 100_000usize;
    let expected = 6.0 / 16.0;
    let sigma = (expected * (1.0 - expected) / samples as f64).sqrt();
    let mut report = Vec::new();
    let mut ok = true;
    for level in 1..=4 {
        let np = encode_nested(&base, level, 1.0).map_err(|e| e.to_string())?;
        let mut rng = rng_from_seed(100 + level as u64);
        let mut hits = 0usize;
        for _ in 0..samples {
            let s = SpinConfig::random(np.nested_n(), &mut rng);
            let d = decode_majority(&np, None, &s, &mut rng).map_err(|e| e.to_string())?;
            hits += usize::from(ground.contains(&d.logical));
        }
        let p = hits as f64 / samples as f64;
        ok &= (p - expected).abs() <= 5.0 * sigma;
        report.push(format!("C={level}: {p:.4}"));
    }
    check(ok, format!("{} (target 0.3750 ± {:.4})", report.join(", "), 5.0 * sigma))
}

/// K4 at full energy scale is always solved.
fn sqa_sanity() -> Outcome {
    let base = k4_antiferromagnet();
    let ground = brute_force_ground(&base).map_err(|e| e.to_string())?;
    let np = encode_nested(&base, 1, 1.0).map_err(|e| e.to_string())?;
    let params = SqaParams {
        sweeps: 10_000,
        trotter_slices: 64,
        beta: 0.1,
        noise_sigma: 0.0,
        seed: 2024,
        ..SqaParams::default()
    };
    let set = run_sqa(&np.programmed(), &default_schedule(), &params, 200).map_err(|e| e.to_string())?;
    let est = estimate_success(&set, &np, &ground, DecodeMode::Joint, 1).map_err(|e| e.to_string())?;
    check(est.p >= 0.95, format!("P = {:.3} over 200 anneals", est.p))
}

/// Success grows strictly with the nesting level at small energy scale
/// under coupler noise.
fn nqac_monotonicity() -> Outcome {
    let base = k4_antiferromagnet();
    let ground = brute_force_ground(&base).map_err(|e| e.to_string())?;
    let params = SqaParams {
        noise_sigma: 0.05,
        seed: 1,
        ..SqaParams::default()
    };
    let opts = ProtocolOptions {
        cycles: 20,
        runs_per_cycle: 200,
        ..ProtocolOptions::default()
    };
    let mut est = Vec::new();
    for level in 1..=3 {
        let np = encode_nested(&base, level, 0.3)
            .and_then(|np| np.with_alpha(0.05))
            .map_err(|e| e.to_string())?;
        let set = run_protocol(&np, None, &default_schedule(), &params, &opts).map_err(|e| e.to_string())?;
        est.push(estimate_success(&set, &np, &ground, DecodeMode::Joint, 1).map_err(|e| e.to_string())?);
    }
    let separated = est.windows(2).all(|w| w[0].p + 2.0 * w[0].stderr < w[1].p - 2.0 * w[1].stderr);
    let detail = est
        .iter()
        .enumerate()
        .map(|(i, e)| format!("P{} = {:.3} ± {:.3}", i + 1, e.p, e.stderr))
        .collect::<Vec<_>>()
        .join(", ");
    check(separated, detail)
}

/// Thermal boost from parallel tempering grows like C².
fn thermal_boost_scaling() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        levels: vec![1, 2, 3, 4],
        alphas: geomspace(0.005, 1.0, 15),
        engine: Engine::Pt,
        pt: PtSettings {
            target_beta: 2.0,
            sweeps: 2000,
            swap_interval: 1,
            samples: Some(4000),
            ..PtSettings::default()
        },
        cycles: 1,
        runs_per_cycle: 4000,
        seed: Some(5),
        save_samples: false,
        ..ExperimentConfig::default()
    };
    let out = run_experiment(&cfg, dir.path(), jobs(), RunStage::All).map_err(|e| e.to_string())?;
    let boost = out.boost.ok_or("no boost computed")?;
    let mu = boost.mu_points();
    let fit = fit_eta(&mu, 4).map_err(|e| e.to_string())?;
    let listed = mu.iter().map(|(c, m)| format!("μ{c} = {m:.2}")).collect::<Vec<_>>().join(", ");
    check(
        mu.len() == 4 && fit.slope >= 0.9,
        format!("{listed}; slope {:.3} (eta {:.3}), P0 = {:.3}", fit.slope, fit.eta, boost.p0),
    )
}

/// βF(C, A, m) = C²·βF(1, A/C, m).
fn free_energy_rescaling() -> Outcome {
    let mut rng = rng_from_seed(6);
    let mut worst = 0.0f64;
    for _ in 0..10_000 {
        let level = rng.random_range(1..=8);
        let pt = MeanFieldPoint {
            m: rng.random_range(-1.0..=1.0),
            a: rng.random_range(0.0..5.0),
            b: rng.random_range(0.0..5.0),
            gamma: rng.random_range(0.0..2.0),
            j: 1.0,
            n: 4,
            level,
            beta: rng.random_range(0.01..10.0),
        };
        let c = level as f64;
        let full = beta_free_energy(&pt, FreeEnergyForm::Thermodynamic);
        let reduced = beta_free_energy(
            &MeanFieldPoint {
                a: pt.a / c,
                level: 1,
                ..pt
            },
            FreeEnergyForm::Thermodynamic,
        );
        if full != 0.0 {
            worst = worst.max(((full - c * c * reduced) / full).abs());
        }
    }
    check(worst <= 1e-12, format!("10000 draws, max relative deviation {worst:.2e}"))
}

/// Complete-graph layout sizes on the perfect graph; the heuristic never
/// returns an invalid embedding on the damaged graph.
fn embedding_suite() -> Outcome {
    let g = ChimeraGraph::perfect(8, 8);
    let mut notes = Vec::new();
    let mut ok = true;
    for n in [4usize, 8, 12, 16, 24, 32] {
        let e = choi_embed(n, &g).map_err(|e| e.to_string())?;
        let len = n.div_ceil(4) + 1;
        let valid = validate_embedding(&e, &CouplingGraph::complete(n), &g).is_valid();
        let lengths = e.chains().iter().all(|c| c.len() == len);
        ok &= valid && lengths && e.num_qubits() == n * len;
        notes.push(format!("K{n}:{}", e.num_qubits()));
    }
    ok &= choi_embed(32, &g).map(|e| e.num_qubits()).ok() == Some(288);
    let damaged = ChimeraGraph::dw2_like();
    let source = CouplingGraph::complete(16);
    let (mut found, mut failed) = (0, 0);
    for seed in 0..5 {
        let mut rng = rng_from_seed(seed);
        match heuristic_embed(&source, &damaged, &mut rng, 8) {
            Ok(e) => {
                ok &= validate_embedding(&e, &source, &damaged).is_valid();
                found += 1;
            }
            Err(nqac::Error::EmbeddingNotFound { .. }) => failed += 1,
            Err(e) => return Err(format!("unexpected error {e}")),
        }
    }
    check(
        ok,
        format!("qubits {}; K16 on damaged graph: {found} valid, {failed} reported failures", notes.join(" ")),
    )
}

fn logistic(x: f64) -> f64 {
    let lo = 6.0 / 16.0;
    lo + (1.0 - lo) / (1.0 + (-1.5 * (x.ln() + 3.0)).exp())
}

/// Boost extraction on a synthetic data-collapse family.
fn boost_calibration() -> Outcome {
    let ks = [1.0, 2.5, 4.0];
    let alphas = geomspace(0.002, 1.0, 20);
    let curve = |level: usize, values: Vec<(f64, f64)>| {
        let pts = alphas
            .iter()
            .zip(values)
            .map(|(&alpha, (p, stderr))| CurvePoint {
                alpha,
                p,
                stderr,
                gamma: None,
            })
            .collect();
        SuccessCurve::new(level, pts)
    };
    let exact: Vec<SuccessCurve> = ks
        .iter()
        .enumerate()
        .map(|(i, &k)| curve(i + 1, alphas.iter().map(|a| (logistic(k * a), 0.0)).collect()))
        .collect::<nqac::Result<_>>()
        .map_err(|e| e.to_string())?;
    let p0 = default_p0(&exact).map_err(|e| e.to_string())?;
    let clean = compute_boost(&exact, p0, &BoostOptions::default()).map_err(|e| e.to_string())?;
    let clean_ok = clean
        .entries
        .iter()
        .zip(ks)
        .all(|(e, k)| e.mu_mid.is_some_and(|m| (m / k - 1.0).abs() <= 0.01));

    let mut rng = rng_from_seed(8);
    let (mut inside, mut truth_inside, mut trials) = (0, 0, 0);
    for _ in 0..100 {
        let noisy: Vec<SuccessCurve> = ks
            .iter()
            .enumerate()
            .map(|(i, &k)| {
                let values = alphas
                    .iter()
                    .map(|&a| {
                        let p = logistic(k * a);
                        let fractions: Vec<f64> = (0..20)
                            .map(|_| (0..1000).filter(|_| rng.random::<f64>() < p).count() as f64 / 1000.0)
                            .collect();
                        let mean = fractions.iter().sum::<f64>() / 20.0;
                        let var = fractions.iter().map(|f| (f - mean).powi(2)).sum::<f64>() / 19.0;
                        (mean, (var / 20.0).sqrt())
                    })
                    .collect();
                curve(i + 1, values)
            })
            .collect::<nqac::Result<_>>()
            .map_err(|e| e.to_string())?;
        let r = compute_boost(&noisy, p0, &BoostOptions::default()).map_err(|e| e.to_string())?;
        for (e, k) in r.entries.iter().zip(ks).skip(1) {
            trials += 1;
            if let (Some(mid), Some((lo, hi))) = (e.mu_mid, e.band()) {
                inside += usize::from(lo <= mid && mid <= hi);
                truth_inside += usize::from(lo <= k && k <= hi);
            }
        }
    }
    let rate = inside as f64 / trials as f64;
    check(
        clean_ok && rate >= 0.9,
        format!(
            "noise-free μ = {:?}; μ_mid inside [μ_low, μ_high] in {inside}/{trials}; true k inside in {truth_inside}/{trials}",
            clean.mu_points().iter().map(|(_, m)| (m * 1e4).round() / 1e4).collect::<Vec<_>>()
        ),
    )
}

fn repetition_adjustment() -> Outcome {
    let m: Vec<usize> = [1, 2, 4]
        .iter()
        .map(|&c| repetition_count(c, 4, 8))
        .collect::<nqac::Result<_>>()
        .map_err(|e| e.to_string())?;
    let p = repeated_success(0.5, 2).map_err(|e| e.to_string())?;
    check(m == [12, 3, 1] && p == 0.75, format!("M = {m:?}, P'(0.5, M=2) = {p}"))
}

/// Identical config and seed give identical CSVs, whatever the job count.
fn end_to_end_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = ExperimentConfig {
        levels: vec![1, 2, 3],
        alphas: vec![0.1, 0.4, 1.0],
        gammas: vec![0.3, 1.0],
        sqa: SqaParams {
            sweeps: 500,
            trotter_slices: 16,
            ..SqaParams::default()
        },
        cycles: 3,
        runs_per_cycle: 20,
        seed: Some(99),
        save_samples: false,
        ..ExperimentConfig::default()
    };
    let runs = [("a", 1), ("b", 1), ("c", 8)];
    for (name, jobs) in runs {
        run_experiment(&cfg, &dir.path().join(name), jobs, RunStage::All).map_err(|e| e.to_string())?;
    }
    let mut identical = true;
    for f in ["grid.csv", "curves.csv", "boost.csv", "eta.txt"] {
        let a = fs::read(dir.path().join("a").join(f)).map_err(|e| e.to_string())?;
        for other in ["b", "c"] {
            identical &= fs::read(dir.path().join(other).join(f)).map_err(|e| e.to_string())? == a;
        }
    }
    check(identical, "two reruns with 1 job and one with 8 jobs".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("nested energy identity", nested_energy_identity),
        ("random-baseline limit", random_baseline),
        ("SQA solver sanity", sqa_sanity),
        ("NQAC monotonicity", nqac_monotonicity),
        ("thermal boost scaling", thermal_boost_scaling),
        ("free-energy rescaling identity", free_energy_rescaling),
        ("embedding suite", embedding_suite),
        ("boost extraction calibration", boost_calibration),
        ("repetition adjustment", repetition_adjustment),
        ("end-to-end determinism", end_to_end_determinism),
    ];
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {number:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failures += 1;
                println!("FAIL {number:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failures > 0 {
        eprintln!("{failures} acceptance criteria failed");
        std::process::exit(1);
    }
}
