//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails or overruns its time budget.

mod common;

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use eigengreedy::analysis::{simulate_replacement, SignalKind};
use eigengreedy::cli::{cmd_experiment, ExperimentArgs};
use eigengreedy::experiments::{
    run_experiment, split_exp2, split_exp3, ExperimentConfig, SplitSpec,
};
use eigengreedy::feature_store::write_feature_set;
use eigengreedy::gaussian::{fit_covariance_ledoit_wolf, fit_mean, WhiteSet};
use eigengreedy::selection::{
    curve, greedy_bottom_up, greedy_top_down, subset_auroc, ComponentSubset, Method,
};
use eigengreedy::{auroc, Label};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

type Outcome = Result<String, String>;

/// (id, name, time budget in seconds, check)
type Criterion = (u32, &'static str, u64, fn() -> Outcome);

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rel_frobenius(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm()
}

/// Independent inverse through Cholesky.
fn inverse(cov: &DMatrix<f64>) -> DMatrix<f64> {
    cov.clone().cholesky().expect("covariance is SPD").inverse()
}

fn c1_whitening_identity() -> Outcome {
    let (mut worst_t, mut worst_sym, mut worst_literal) = (0.0f64, 0.0f64, 0.0f64);
    for i in 0..50u64 {
        let d = 2 + (i as usize * 7) % 63;
        let n = d + 10 + (i as usize * 11) % 90;
        let model = random_model(100 + i, n, d);
        let precision = inverse(model.covariance());
        let w = model.whitening();
        let root = model.precision_sqrt();
        worst_t = worst_t.max(rel_frobenius(&(w.transpose() * w), &precision));
        worst_sym = worst_sym.max(rel_frobenius(&(&root * &root), &precision));
        worst_literal = worst_literal.max(rel_frobenius(&(w * w), &precision));
    }
    let detail = format!(
        "max rel err WᵀW {worst_t:.2e}, (QW)² {worst_sym:.2e}; literal W·W {worst_literal:.2e} (not an identity)"
    );
    ensure(worst_t < 1e-8 && worst_sym < 1e-8, || detail.clone())?;
    Ok(detail)
}

fn c2_score_equivalence() -> Outcome {
    let mut worst_lib = 0.0f64;
    let mut worst_direct = 0.0f64;
    for m in 0..10u64 {
        let d = 5 + (m as usize * 6);
        let model = random_model(200 + m, 3 * d, d);
        let precision = inverse(model.covariance());
        let mut rng = ChaCha8Rng::seed_from_u64(300 + m);
        for _ in 0..100 {
            let spread = rng.random_range(0.1..20.0);
            let x: Vec<f64> = model
                .mean()
                .iter()
                .map(|mu| mu + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let white_norm = model
                .whiten_vector(&x)
                .unwrap()
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let diff = DVector::from_iterator(d, x.iter().zip(model.mean()).map(|(a, b)| a - b));
            let direct = diff.dot(&(&precision * &diff)).sqrt();
            worst_lib = worst_lib.max((model.mahalanobis(&x).unwrap() - white_norm).abs());
            worst_direct = worst_direct.max((direct - white_norm).abs() / direct.max(1.0));
        }
    }
    let detail = format!(
        "1000 samples, max |mahalanobis − ‖w‖| {worst_lib:.2e}, vs direct quadratic form {worst_direct:.2e}"
    );
    ensure(worst_lib < 1e-8 && worst_direct < 1e-8, || detail.clone())?;
    Ok(detail)
}

fn pairwise_auroc(scores: &[f64], labels: &[Label]) -> f64 {
    let (mut twice, mut pairs) = (0u64, 0u64);
    for (a, la) in scores.iter().zip(labels) {
        if !la.is_anomalous() {
            continue;
        }
        for (b, lb) in scores.iter().zip(labels) {
            if lb.is_anomalous() {
                continue;
            }
            pairs += 1;
            twice += if a > b {
                2
            } else if a == b {
                1
            } else {
                0
            };
        }
    }
    twice as f64 / (2 * pairs) as f64
}

fn c3_auroc_oracle() -> Outcome {
    use Label::{Anomalous as A, Normal as N};
    let worked = [
        (auroc(&[0.0, 1.0, 2.0, 3.0], &[N, N, A, A]), 1.0),
        (auroc(&[7.0; 5], &[N, A, N, A, A]), 0.5),
        (auroc(&[0.0, 1.0, 0.5, 2.0], &[N, N, A, A]), 0.75),
    ];
    for (got, want) in worked {
        ensure(got.as_ref().ok() == Some(&want), || {
            format!("worked example {got:?} != {want}")
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for case in 0..200 {
        let n = rng.random_range(2..=200usize);
        let coarse = case % 2 == 0;
        let scores: Vec<f64> = (0..n)
            .map(|_| {
                if coarse {
                    rng.random_range(0..8) as f64
                } else {
                    rng.sample(StandardNormal)
                }
            })
            .collect();
        let mut labels: Vec<Label> = (0..n)
            .map(|_| if rng.random_bool(0.3) { A } else { N })
            .collect();
        labels[0] = N;
        labels[n - 1] = A;
        let got = auroc(&scores, &labels).map_err(|e| e.to_string())?;
        let want = pairwise_auroc(&scores, &labels);
        ensure(got == want, || format!("case {case}: {got} != {want}"))?;
    }
    Ok("3 worked examples and 200 random sets match pairwise enumeration exactly".into())
}

/// Oracle AUROC of a subset: ascending-order norm and pairwise enumeration.
fn oracle_subset_auroc(set: &WhiteSet, subset: &[usize]) -> f64 {
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    let scores: Vec<f64> = (0..set.n())
        .map(|s| {
            sorted
                .iter()
                .map(|&c| set.component(c)[s].powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect();
    pairwise_auroc(&scores, set.labels())
}

/// First maximum over candidates in ascending order.
fn oracle_best(candidates: &[(usize, f64)]) -> (usize, f64) {
    let mut best = candidates[0];
    for &c in &candidates[1..] {
        if c.1 > best.1 {
            best = c;
        }
    }
    best
}

fn c4_greedy_step_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut steps_checked = 0;
    for problem in 0..20 {
        let d = 2 + problem % 11;
        let n = rng.random_range(20..80);
        let set = random_white(&mut rng, n, d, problem % 2 == 0);

        let trace = greedy_bottom_up(&set, d).map_err(|e| e.to_string())?;
        let mut inset: Vec<usize> = Vec::new();
        for step in &trace.steps {
            let candidates: Vec<(usize, f64)> = (0..d)
                .filter(|c| !inset.contains(c))
                .map(|c| {
                    let mut s = inset.clone();
                    s.push(c);
                    (c, oracle_subset_auroc(&set, &s))
                })
                .collect();
            let (c, a) = oracle_best(&candidates);
            ensure(c == step.component && a == step.greedy_auroc, || {
                format!(
                    "problem {problem} bottom-up step {}: oracle ({c}, {a}) vs {step:?}",
                    step.step
                )
            })?;
            inset.push(c);
            steps_checked += 1;
        }

        let trace = greedy_top_down(&set, 1).map_err(|e| e.to_string())?;
        let mut inset: Vec<usize> = (0..d).collect();
        for step in &trace.steps {
            let candidates: Vec<(usize, f64)> = inset
                .iter()
                .map(|&c| {
                    let rest: Vec<usize> = inset.iter().copied().filter(|&x| x != c).collect();
                    (c, oracle_subset_auroc(&set, &rest))
                })
                .collect();
            let (c, a) = oracle_best(&candidates);
            ensure(c == step.component && a == step.greedy_auroc, || {
                format!(
                    "problem {problem} top-down step {}: oracle ({c}, {a}) vs {step:?}",
                    step.step
                )
            })?;
            inset.retain(|&x| x != c);
            steps_checked += 1;
        }
    }
    Ok(format!(
        "20 problems, {steps_checked} steps match exhaustive re-evaluation"
    ))
}

fn c5_curve_convergence() -> Outcome {
    let methods = [Method::BottomUp, Method::TopDown, Method::Pca, Method::Npca];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut fixtures: Vec<(WhiteSet, WhiteSet)> = (0..6)
        .map(|i| {
            let d = 3 + 5 * i;
            let g = random_white(&mut rng, 60, d, i % 3 == 0);
            let e = random_white(&mut rng, 90, d, i % 3 == 0);
            (g, e)
        })
        .collect();
    let planted = planted_fixture();
    let white = planted.model.whiten(&planted.test).unwrap();
    fixtures.push((white.clone(), white));

    let mut worst = 0.0f64;
    for (greedy, eval) in &fixtures {
        let d = greedy.d();
        let finals: Vec<f64> = methods
            .iter()
            .map(|&m| curve(greedy, eval, m).map(|c| c.auroc_values[d - 1]))
            .collect::<Result<_, _>>()
            .map_err(|e| e.to_string())?;
        let lo = finals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = finals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max(hi - lo);
    }
    let detail = format!(
        "{} fixtures, max spread at k = d {worst:.1e}",
        fixtures.len()
    );
    ensure(worst <= 1e-12, || detail.clone())?;
    Ok(detail)
}

fn exp1_config(methods: &[Method]) -> ExperimentConfig {
    let names: Vec<String> = methods.iter().map(|m| format!("\"{m}\"")).collect();
    ExperimentConfig::from_json(&format!(
        r#"{{"kind": "exp1", "category": "synthetic", "node": "features.6",
            "methods": [{}], "feature_store_paths": {{"train": "train", "test": "test"}}}}"#,
        names.join(", ")
    ))
    .unwrap()
}

fn c6_planted_recovery() -> Outcome {
    let planted = planted_fixture();
    let white = planted
        .model
        .whiten(&planted.test)
        .map_err(|e| e.to_string())?;
    let drift = (0..white.n())
        .flat_map(|s| white.row(s).into_iter().zip(planted.white_rows[s].clone()))
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    ensure(drift < 1e-3, || {
        format!("fixture round trip drifted by {drift}")
    })?;

    // brute force every 3-subset before trusting the search
    let d = white.d();
    let mut planted_sorted = PLANTED_AXES.to_vec();
    planted_sorted.sort_unstable();
    let planted_auroc = subset_auroc(
        &white,
        &ComponentSubset::new(planted_sorted.clone(), d).unwrap(),
    )
    .unwrap();
    let mut best_other = 0.0f64;
    for a in 0..d {
        for b in a + 1..d {
            for c in b + 1..d {
                if [a, b, c] == planted_sorted[..] {
                    continue;
                }
                let s = ComponentSubset::new(vec![a, b, c], d).unwrap();
                best_other = best_other.max(subset_auroc(&white, &s).unwrap());
            }
        }
    }
    ensure(planted_auroc >= 0.99 && planted_auroc > best_other, || {
        format!("brute force: planted {planted_auroc}, best other 3-subset {best_other}")
    })?;

    let run = run_experiment(
        &planted.train,
        &planted.test,
        &exp1_config(&[Method::BottomUp]),
    )
    .map_err(|e| e.to_string())?;
    let outcome = &run.outcomes[0];
    let trace = &outcome.traces[0].1;
    let mut first: Vec<usize> = trace.components()[..3].to_vec();
    first.sort_unstable();
    let at3 = outcome.curves[0].auroc_values[2];
    let detail = format!(
        "first picks {:?}, eval AUROC at k=3 {at3:.4} (brute-force planted {planted_auroc:.4}, best other {best_other:.4})",
        &trace.components()[..3]
    );
    ensure(
        first == planted_sorted && at3 >= 0.99 && at3 == planted_auroc,
        || detail.clone(),
    )?;
    Ok(detail)
}

fn c7_split_counts() -> Outcome {
    for cat in MVTEC_COUNTS {
        let test = cat.test_set();
        for seed in 0..5 {
            let s = split_exp3(&test, 15, seed).map_err(|e| format!("{}: {e}", cat.name))?;
            let g = SplitSpec::count_anomalous(&s.greedy_rows, &test);
            let e = SplitSpec::count_anomalous(&s.eval_rows, &test);
            ensure((g, e) == (cat.greedy, cat.eval), || {
                format!(
                    "{} seed {seed}: {g}/{e}, expected {}/{}",
                    cat.name, cat.greedy, cat.eval
                )
            })?;
        }
        let exp2 = split_exp2(&test, cat.types[0].0);
        ensure(exp2.is_err() == (cat.name == "toothbrush"), || {
            format!(
                "{}: split_exp2 returned {:?}",
                cat.name,
                exp2.as_ref().map(|s| &s.descriptor)
            )
        })?;
    }
    Ok(format!(
        "{} categories x 5 seeds match; exp2 rejects toothbrush only",
        MVTEC_COUNTS.len()
    ))
}

const FROZEN_DELTA: [(u64, usize, usize, f64); 10] = [
    (1, 50, 20, 0.45532230694576653),
    (2, 50, 20, 0.411896151159415),
    (3, 10, 5, 0.6656719831514519),
    (4, 100, 3, 0.07488365061472649),
    (5, 8, 16, 0.6859193583798999),
    (6, 200, 10, 0.08382683546158491),
    (7, 30, 30, 0.5914950668904065),
    (8, 5, 2, 1.0),
    (9, 64, 8, 0.16566222692170887),
    (10, 12, 40, 0.7549587831736108),
];

fn c8_ledoit_wolf() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..100 {
        let n = rng.random_range(3..120usize);
        let d = rng.random_range(1..48usize);
        let rows = if case % 2 == 0 {
            splitmix_normal(case as u64 + 500, n, d)
        } else {
            correlated_rows(&mut rng, n, d)
        };
        let set = train_set(&rows);
        let mean = fit_mean(&set).unwrap();
        let (cov, delta) = fit_covariance_ledoit_wolf(&set, &mean).map_err(|e| e.to_string())?;
        ensure((0.0..=1.0).contains(&delta), || {
            format!("case {case}: δ = {delta}")
        })?;
        ensure(cov.clone().cholesky().is_some(), || {
            format!("case {case} (n={n}, d={d}): Σ̂ not PD")
        })?;
    }
    let mut worst = 0.0f64;
    for (seed, n, d, want) in FROZEN_DELTA {
        let set = train_set(&splitmix_normal(seed, n, d));
        let mean = fit_mean(&set).unwrap();
        let got = fit_covariance_ledoit_wolf(&set, &mean).unwrap().1;
        worst = worst.max((got - want).abs());
    }
    let detail = format!("100 datasets in range and PD; frozen oracle max |Δδ| {worst:.1e}");
    ensure(worst < 1e-10, || detail.clone())?;
    Ok(detail)
}

fn c9_replacement_direction() -> Outcome {
    let planted = planted_fixture();
    let white = planted
        .model
        .whiten(&planted.test)
        .map_err(|e| e.to_string())?;
    let trace = greedy_bottom_up(&white, white.d()).map_err(|e| e.to_string())?;
    let k_prime = PLANTED_AXES.len() + 1;
    let run = |signal| {
        simulate_replacement(&planted.model, &trace, &white, k_prime, signal, 30, 0)
            .map_err(|e| e.to_string())
    };
    let redundant = run(SignalKind::Redundant)?;
    let noise = run(SignalKind::Noise)?;
    let gap = redundant
        .auroc_mean
        .iter()
        .map(|m| (m - redundant.retained_auroc).abs())
        .fold(0.0f64, f64::max);
    let (r_end, n_end) = (
        *redundant.auroc_mean.last().unwrap(),
        *noise.auroc_mean.last().unwrap(),
    );
    let detail = format!(
        "k'={k_prime}, retained {:.4}, max redundant gap {gap:.4}, at k=d noise {n_end:.4} < redundant {r_end:.4}",
        redundant.retained_auroc
    );
    ensure(gap <= 0.02 && n_end < r_end, || detail.clone())?;
    Ok(detail)
}

fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect()
}

fn c10_determinism() -> Outcome {
    let planted = planted_fixture();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_feature_set(&planted.train, tmp.path().join("train")).map_err(|e| e.to_string())?;
    write_feature_set(&planted.test, tmp.path().join("test")).map_err(|e| e.to_string())?;
    let config = tmp.path().join("exp3.json");
    fs::write(
        &config,
        r#"{"kind": "exp3", "category": "synthetic", "node": "features.6", "n_min": 15,
            "seeds": [0, 1, 2], "methods": ["bottom_up", "top_down", "pca", "npca", "range:2"],
            "feature_store_paths": {"train": "train", "test": "test"}}"#,
    )
    .map_err(|e| e.to_string())?;

    let mut outputs = Vec::new();
    for run in ["a", "b"] {
        let out_dir = tmp.path().join(run);
        cmd_experiment(&ExperimentArgs {
            config: config.clone(),
            out_dir: out_dir.clone(),
            all_nodes: false,
        })
        .map_err(|e| e.to_string())?;
        outputs.push(snapshot(&out_dir));
    }
    let files = outputs[0].len();
    ensure(files > 1 && outputs[0] == outputs[1], || {
        let differing: Vec<&String> = outputs[0]
            .iter()
            .filter(|(k, v)| outputs[1].get(*k) != Some(v))
            .map(|(k, _)| k)
            .collect();
        format!("{files} files, differing: {differing:?}")
    })?;
    Ok(format!(
        "{files} output files byte-identical across two runs"
    ))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "whitening identity", 5, c1_whitening_identity),
        (2, "score equivalence", 5, c2_score_equivalence),
        (3, "AUROC oracle", 10, c3_auroc_oracle),
        (4, "greedy step oracle", 30, c4_greedy_step_oracle),
        (5, "curve convergence at k = d", 5, c5_curve_convergence),
        (6, "planted-signal recovery", 30, c6_planted_recovery),
        (7, "Exp-3 split counts", 5, c7_split_counts),
        (8, "Ledoit-Wolf contract", 10, c8_ledoit_wolf),
        (
            9,
            "replacement simulation direction",
            60,
            c9_replacement_direction,
        ),
        (10, "determinism", 30, c10_determinism),
    ];
    let mut failed = 0;
    for (id, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = std::panic::catch_unwind(check).unwrap_or_else(|_| Err("panicked".into()));
        let elapsed = start.elapsed();
        let in_time = elapsed <= Duration::from_secs(limit);
        let (status, detail) = match (&outcome, in_time) {
            (Ok(d), true) => ("PASS", d.clone()),
            (Ok(d), false) => ("FAIL", format!("{d}; over time budget")),
            (Err(d), _) => ("FAIL", d.clone()),
        };
        if status == "FAIL" {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {status} {name} [{:.2}s / {limit}s]: {detail}",
            elapsed.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
    println!("all 10 acceptance criteria passed");
}
