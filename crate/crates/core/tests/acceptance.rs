//! End-to-end acceptance checks. Runs without the libtest harness so every
//! check prints its `PASS`/`FAIL` line; exits nonzero if any check fails.

use std::collections::BTreeSet;
use std::panic;
use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use mnl_lab::epoch::{epoch_count_distribution_check, run_epoch};
use mnl_lab::harness::{
    run_experiment, write_outputs, ExperimentConfig, InstanceSource, MetricGrid, PolicyName,
    PolicySpec,
};
use mnl_lab::policy::{exploration_threshold, OfferKind};
use mnl_lab::rates::{
    coverage_check, fit_rate, rate_study, AlphaRates, CoverageSample, PARETO_RATIO_LIMIT,
};
use mnl_lab::stats::RunningStats;
use mnl_lab::{Assortment, FeasibleFamily, MnlExperimentUcb, MnlInstance, PolicyConfig, Variant};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(name: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {name}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
}

fn configs_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn random_source() -> InstanceSource {
    InstanceSource::Random {
        v_range: (0.1, 1.0),
        r_range: (0.5, 1.5),
    }
}

fn section5_replication() {
    let config = ExperimentConfig::from_json_file(&configs_dir().join("section5.json")).unwrap();
    assert_eq!(
        (
            config.n_items,
            config.max_size,
            config.horizon,
            config.trials
        ),
        (10, 5, 1000, 20)
    );
    let started = Instant::now();
    let out = run_experiment(&config, Some(1)).unwrap();
    let secs = started.elapsed().as_secs_f64();
    assert!(out.failures.is_empty());

    let finals: Vec<(String, Option<f64>, f64)> = out
        .runs
        .iter()
        .map(|r| {
            (
                r.label.clone(),
                r.alpha,
                out.final_summary(&r.label, r.alpha)
                    .unwrap()
                    .mean_cum_regret,
            )
        })
        .collect();
    let exp3 = finals.iter().find(|f| f.0 == "EXP3EG").unwrap().2;
    let exp3_largest = finals
        .iter()
        .filter(|f| f.0 != "EXP3EG")
        .all(|f| f.2 < exp3);
    let second_half: Vec<(f64, f64)> = out
        .summary
        .iter()
        .filter(|r| r.policy == "EXP3EG" && r.t >= 500 && r.t % 50 == 0)
        .map(|r| (r.t as f64, r.mean_cum_regret))
        .collect();
    let slope = fit_rate(&second_half).unwrap().slope;
    let ok_a = exp3_largest && slope >= 0.9;
    report(
        "section5 (a) EXP3EG largest regret, near-linear",
        ok_a,
        &format!("EXP3EG {exp3:.1}, second-half slope {slope:.3}"),
    );

    let mut ucb: Vec<(f64, f64)> = finals
        .iter()
        .filter(|f| f.0 == "MNLExperimentUCB")
        .map(|f| (f.1.unwrap(), f.2))
        .collect();
    ucb.sort_by(|a, b| a.0.total_cmp(&b.0));
    assert_eq!(
        ucb.iter().map(|u| u.0).collect::<Vec<_>>(),
        vec![0.0, 0.25, 0.5, 1.0]
    );
    let ok_b = ucb.windows(2).all(|w| w[1].1 <= w[0].1);
    report(
        "section5 (b) UCB regret nonincreasing in alpha",
        ok_b,
        &format!("{ucb:?}"),
    );
    assert!(out
        .runs
        .iter()
        .filter(|r| r.alpha == Some(1.0))
        .all(|r| r.out_of_theory()));
    assert!(out
        .runs
        .iter()
        .filter(|r| r.alpha.is_some_and(|a| a <= 0.5))
        .all(|r| !r.out_of_theory()));

    let ok_time = secs < 300.0;
    report(
        "section5 runtime single-threaded",
        ok_time,
        &format!("{secs:.2}s"),
    );
    assert!(ok_a && ok_b && ok_time);
}

fn rate_results() -> &'static Vec<AlphaRates> {
    static RESULTS: OnceLock<Vec<AlphaRates>> = OnceLock::new();
    RESULTS.get_or_init(|| {
        let base = ExperimentConfig {
            n_items: 10,
            max_size: 5,
            horizon: 1,
            trials: 50,
            policies: vec![PolicySpec::new(PolicyName::MnlExperimentUcb)],
            alphas: vec![0.0],
            master_seed: 7_001,
            instance_source: random_source(),
            metric_grid: MetricGrid::Auto,
            snapshot_points: vec![],
            output_dir: None,
            workers: None,
        };
        let horizons: Vec<usize> = (10..=14).map(|k| 1usize << k).collect();
        rate_study(&base, &[0.0, 0.25, 0.5], &horizons, None).unwrap()
    })
}

fn rate_fits() {
    let mut ok = true;
    for a in rate_results() {
        report(
            &format!("rate fit regret slope alpha={}", a.alpha),
            a.regret_pass,
            &format!(
                "slope {:.3} <= {:.3}",
                a.regret_fit.slope, a.regret_slope_limit
            ),
        );
        report(
            &format!("rate fit error slope alpha={}", a.alpha),
            a.error_pass,
            &format!(
                "slope {:.3}, target {:.3} +/- 0.15",
                a.error_fit.slope, a.error_slope_target
            ),
        );
        ok &= a.regret_pass && a.error_pass;
    }
    assert!(ok);
}

fn pareto_product() {
    let mut ok = true;
    for a in rate_results() {
        let products: Vec<String> = a
            .points
            .iter()
            .map(|p| format!("{:.3}", p.product))
            .collect();
        report(
            &format!("pareto product alpha={}", a.alpha),
            a.pareto_pass,
            &format!(
                "ratio {:.3} <= {PARETO_RATIO_LIMIT}, products {products:?}",
                a.product_ratio
            ),
        );
        ok &= a.pareto_pass;
    }
    assert!(ok);
}

fn unbiasedness() {
    let v = [0.3, 0.8, 0.5, 1.0, 0.15];
    let r = [1.2, 0.6, 0.9, 0.7, 1.4];
    let instance = MnlInstance::new(v.to_vec(), r.to_vec()).unwrap();
    let family = FeasibleFamily::new(5, 2).unwrap();
    let config = PolicyConfig::standard(0.25).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(31_337);
    let mut estimate = [RunningStats::new(); 5];
    let mut count = [RunningStats::new(); 5];
    let mut count_sq = [RunningStats::new(); 5];
    for _ in 0..500 {
        let mut policy = MnlExperimentUcb::new(config, 5);
        for ell in 1..=2000 {
            let sel = policy.select(&family, &r, &mut rng).unwrap();
            let (rec, _) = run_epoch(
                &instance,
                &sel.offered,
                &sel.selection_probs,
                ell,
                1,
                usize::MAX,
                &mut rng,
            )
            .unwrap();
            for i in sel.offered.iter() {
                let c = rec.count(i) as f64;
                count[i - 1].push(c);
                count_sq[i - 1].push(c * c);
            }
            policy.observe(&rec).unwrap();
        }
        let fin = policy.finalize().unwrap();
        assert_eq!(fin.completed_epochs, 2000);
        for (k, e) in fin.v_hat.iter().enumerate() {
            estimate[k].push(*e);
        }
    }
    let mut ok = true;
    let mut detail = Vec::new();
    for k in 0..5 {
        let z_est = (estimate[k].mean() - v[k]) / estimate[k].std_error();
        let z_cnt = (count[k].mean() - v[k]) / count[k].std_error();
        let m2 = v[k] + 2.0 * v[k] * v[k];
        let z_sq = (count_sq[k].mean() - m2) / count_sq[k].std_error();
        ok &= z_est.abs() <= 3.0 && z_cnt.abs() <= 3.0 && z_sq.abs() <= 3.0;
        detail.push(format!(
            "item {}: z {:.2}/{:.2}/{:.2}",
            k + 1,
            z_est,
            z_cnt,
            z_sq
        ));
    }
    report(
        "unbiasedness of IPW estimate and epoch counts",
        ok,
        &detail.join(", "),
    );
    assert!(ok);
}

fn geometric_epochs() {
    let instance = MnlInstance::new(vec![0.3, 0.8, 0.5, 1.0, 0.15, 0.6], vec![1.0; 6]).unwrap();
    let sets = [vec![1], vec![2, 4], vec![1, 3, 5, 6]];
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut ok = true;
    let mut detail = Vec::new();
    for items in sets {
        let s = Assortment::new(items, 6).unwrap();
        let mom = epoch_count_distribution_check(&instance, &s, 10_000, &mut rng).unwrap();
        let expected = 1.0 + s.iter().map(|i| instance.attraction(i)).sum::<f64>();
        let rel = (mom.mean_length() - expected).abs() / expected;
        ok &= rel <= 0.05;
        detail.push(format!("{s}: {:.3} vs {expected:.3}", mom.mean_length()));
    }
    report("geometric epoch lengths", ok, &detail.join(", "));
    assert!(ok);
}

/// Exhaustive maximization over bitmasks; ties go to the smaller set, then
/// the lexicographically smaller item list.
fn brute_force(weights: &[f64], revenues: &[f64], k: usize) -> (Vec<usize>, f64) {
    let n = weights.len();
    let mut best: Option<(Vec<usize>, f64)> = None;
    for mask in 1u32..(1 << n) {
        let items: Vec<usize> = (0..n)
            .filter(|j| mask & (1 << j) != 0)
            .map(|j| j + 1)
            .collect();
        if items.len() > k {
            continue;
        }
        let num: f64 = items
            .iter()
            .map(|&i| revenues[i - 1] * weights[i - 1])
            .sum();
        let den: f64 = 1.0 + items.iter().map(|&i| weights[i - 1]).sum::<f64>();
        let score = num / den;
        let better = match &best {
            None => true,
            Some((b, s)) => score > *s || (score == *s && (items.len(), &items) < (b.len(), b)),
        };
        if better {
            best = Some((items, score));
        }
    }
    best.unwrap()
}

fn oracle_exactness() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut mismatches = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=6usize);
        let k = rng.random_range(1..=n);
        // a quarter of the cases use coarse values so ties actually occur
        let coarse = case % 4 == 0;
        let draw = |rng: &mut ChaCha8Rng, lo: f64, hi: f64| {
            if coarse {
                rng.random_range(1..=3) as f64 * 0.5
            } else {
                rng.random_range(lo..hi)
            }
        };
        let w: Vec<f64> = (0..n).map(|_| draw(&mut rng, 0.01, 3.0)).collect();
        let r: Vec<f64> = (0..n).map(|_| draw(&mut rng, 0.0, 2.0)).collect();
        let family = FeasibleFamily::new(n, k).unwrap();
        let (s, score) = family.argmax_revenue(&w, &r).unwrap();
        let (b, b_score) = brute_force(&w, &r, k);
        if s.items() != b.as_slice() || (score - b_score).abs() > 1e-12 {
            mismatches += 1;
        }
    }
    report(
        "oracle exactness",
        mismatches == 0,
        &format!("{mismatches} mismatches in 200 instances"),
    );
    assert_eq!(mismatches, 0);
}

fn estimation_coverage() {
    let (delta, alpha) = (0.05, 0.25);
    let config = ExperimentConfig {
        n_items: 5,
        max_size: 3,
        horizon: 5000,
        trials: 200,
        policies: vec![PolicySpec::new(PolicyName::MnlExperimentUcb)],
        alphas: vec![alpha],
        master_seed: 5_005,
        instance_source: random_source(),
        metric_grid: MetricGrid::Points(vec![5000]),
        snapshot_points: vec![],
        output_dir: None,
        workers: None,
    };
    let out = run_experiment(&config, None).unwrap();
    let samples: Vec<CoverageSample> = out
        .trials
        .iter()
        .map(|t| {
            let e = t.estimates.as_ref().unwrap();
            CoverageSample {
                v_true: t.v_true.clone(),
                v_hat: e.v_hat.clone(),
                completed_epochs: e.completed_epochs,
            }
        })
        .collect();
    assert_eq!(samples.len(), 200);
    let coverage = coverage_check(&samples, delta, alpha);
    let ok = coverage >= 0.95;
    report(
        "error radius coverage",
        ok,
        &format!("coverage {coverage:.4}"),
    );
    assert!(ok);
}

fn variant_sanity() {
    // size-capped variant
    let n = 10;
    let family = FeasibleFamily::new(n, 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut kstar_ok = true;
    let mut chunk_epochs = 0;
    for _ in 0..20 {
        let instance = MnlInstance::random(n, (0.1, 1.0), (0.5, 1.5), &mut rng).unwrap();
        let config = PolicyConfig::new(0.25, Variant::KStar { k_star: 3 }).unwrap();
        let mut policy = MnlExperimentUcb::new(config, n);
        for ell in 1..=300 {
            let sel = policy
                .select(&family, instance.revenues(), &mut rng)
                .unwrap();
            kstar_ok &= sel.offered.len() <= sel.star.len().max(3);
            let complement = sel.star.complement(n);
            let mut union = BTreeSet::new();
            for c in &sel.chunks {
                kstar_ok &= c.len() <= 3 && !c.is_empty();
                for i in c.iter() {
                    kstar_ok &= union.insert(i);
                }
            }
            kstar_ok &= union.into_iter().collect::<Vec<_>>() == complement.items();
            if matches!(sel.kind, OfferKind::ComplementChunk(_)) {
                chunk_epochs += 1;
            }
            let (rec, _) = run_epoch(
                &instance,
                &sel.offered,
                &sel.selection_probs,
                ell,
                1,
                usize::MAX,
                &mut rng,
            )
            .unwrap();
            policy.observe(&rec).unwrap();
        }
    }
    report(
        "variant k-star size bound and chunk partition",
        kstar_ok && chunk_epochs > 0,
        &format!("{chunk_epochs} chunk epochs"),
    );

    // relaxed-attraction variant, attractions above the no-purchase weight
    let n = 5;
    let family = FeasibleFamily::new(n, 2).unwrap();
    let instance =
        MnlInstance::new(vec![2.5, 0.4, 1.7, 3.0, 0.9], vec![0.8, 1.3, 1.0, 0.6, 1.1]).unwrap();
    let config = PolicyConfig::new(0.0, Variant::General { b_bound: Some(3.0) }).unwrap();
    let mut policy = MnlExperimentUcb::new(config, n);
    let mut violations = 0;
    let mut saturated_epochs = 0;
    let mut exploratory = 0;
    let mut last_unsaturated = 0;
    let mut last_exploratory = 0;
    for ell in 1..=20_000 {
        let thr = exploration_threshold(n, ell);
        let saturated = policy
            .state()
            .appearances()
            .iter()
            .all(|&t| t as f64 >= thr);
        let sel = policy
            .select(&family, instance.revenues(), &mut rng)
            .unwrap();
        if sel.kind == OfferKind::Exploratory {
            exploratory += 1;
            last_exploratory = ell;
            if saturated {
                violations += 1;
            }
        }
        if saturated {
            saturated_epochs += 1;
        } else {
            last_unsaturated = ell;
        }
        let (rec, _) = run_epoch(
            &instance,
            &sel.offered,
            &sel.selection_probs,
            ell,
            1,
            usize::MAX,
            &mut rng,
        )
        .unwrap();
        policy.observe(&rec).unwrap();
    }
    let general_ok =
        violations == 0 && saturated_epochs > 0 && last_exploratory <= last_unsaturated;
    report(
        "variant general no exploration once saturated",
        general_ok,
        &format!(
            "{exploratory} exploratory epochs, {saturated_epochs} saturated epochs, last exploratory {last_exploratory}, last unsaturated {last_unsaturated}"
        ),
    );
    assert!(kstar_ok && chunk_epochs > 0 && general_ok);
}

fn determinism() {
    let mut config =
        ExperimentConfig::from_json_file(&configs_dir().join("section5.json")).unwrap();
    config.trials = 4;
    config.horizon = 300;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    write_outputs(&run_experiment(&config, Some(1)).unwrap(), a.path()).unwrap();
    write_outputs(&run_experiment(&config, Some(3)).unwrap(), b.path()).unwrap();
    let mut ok = true;
    for f in ["per_step.csv", "estimates.csv", "summary.csv"] {
        let x = std::fs::read(a.path().join(f)).unwrap();
        let y = std::fs::read(b.path().join(f)).unwrap();
        ok &= !x.is_empty() && x == y;
    }
    report(
        "determinism of CSV outputs",
        ok,
        "two runs, 1 and 3 workers",
    );
    assert!(ok);
}

fn main() -> ExitCode {
    let checks: [(&str, fn()); 9] = [
        ("section5_replication", section5_replication),
        ("rate_fits", rate_fits),
        ("pareto_product", pareto_product),
        ("unbiasedness", unbiasedness),
        ("geometric_epochs", geometric_epochs),
        ("oracle_exactness", oracle_exactness),
        ("estimation_coverage", estimation_coverage),
        ("variant_sanity", variant_sanity),
        ("determinism", determinism),
    ];
    let mut failed = Vec::new();
    for (name, check) in checks {
        if panic::catch_unwind(check).is_err() {
            failed.push(name);
        }
    }
    println!(
        "acceptance: {} of {} checks passed",
        checks.len() - failed.len(),
        checks.len()
    );
    if failed.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("failed: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
