//! Acceptance suite: runs criteria 1-10 at full size and prints one
//! PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#[path = "../../core/tests/support/mod.rs"]
mod support;

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cohortforge::bias_audit::{
    misclassification_correct, misclassify_expected, pooling_contrast, run_scenario, EstimatorConfig, Profile, Remedy,
    ScenarioSpec, TwoByTwo,
};
use cohortforge::dag::{bias_audit_report, fixtures};
use cohortforge::estimators::{heterogeneity_interaction, meta_fixed_random, reported_table, rubin_pool, Analysis, MetaInput, Method};
use cohortforge::scm::{scenario, simulate, CohortConfig, Missingness};
use cohortforge::seed;
use cohortforge::types::expit;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn acceptance_spec(id: &str, cfgs: Vec<EstimatorConfig>, seed: u64) -> ScenarioSpec {
    let (r, n) = Profile::Acceptance.sizes();
    let mut s = ScenarioSpec::new(id, cfgs, r, seed);
    s.n_per_cohort = Some(n);
    s
}

fn dsep_equivalence() -> Outcome {
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (queries, bad) = support::dsep_agreement(&mut rng, 1000, 8, 0.3);
    let secs = t.elapsed().as_secs_f64();
    check(bad == 0 && secs < 30.0, format!("{queries} queries, {bad} disagreements, {secs:.1}s"))
}

fn fixture_audits() -> Outcome {
    let t = Instant::now();
    let golden = Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden");
    let mut wrong = Vec::new();
    let expected = support::expected_fixture_paths();
    for (name, lines) in &expected {
        let report = bias_audit_report(&fixtures::by_name(name).unwrap()).unwrap();
        if &support::report_lines(&report) != lines {
            wrong.push(format!("{name} paths"));
        }
    }
    for (name, stem) in fixtures::NAMES {
        let report = bias_audit_report(&fixtures::by_name(name).unwrap()).unwrap();
        for (ext, body) in [("txt", report.to_text()), ("json", report.to_json())] {
            if std::fs::read_to_string(golden.join(format!("{stem}.{ext}"))).ok().as_deref() != Some(body.as_str()) {
                wrong.push(format!("{name} {ext}"));
            }
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(wrong.is_empty() && secs < 1.0, format!("{} fixtures, mismatches {wrong:?}, {secs:.2}s", expected.len()))
}

fn estimator_consistency() -> Outcome {
    let cfgs = vec![
        EstimatorConfig::new("conditional {C}", Method::Conditional, &["C"]),
        EstimatorConfig::new("ipw {C}", Method::Ipw, &["C"]),
        EstimatorConfig::new("g-computation {C}", Method::GComputation, &["C"]),
        EstimatorConfig::new("aipw {C}", Method::Aipw, &["C"]),
    ];
    let mut spec = acceptance_spec("S-1A", cfgs, 3);
    spec.remove_nodes = vec!["U".into()];
    let r = run_scenario(&spec).map_err(|e| e.to_string())?;
    let ok = r.rows.iter().all(|row| row.z.abs() < 3.0 && (0.92..=0.98).contains(&row.coverage));
    let detail = r.rows.iter().map(|row| format!("{} z={:.2} cov={:.3}", row.label, row.z, row.coverage)).collect::<Vec<_>>();
    check(ok, detail.join("; "))
}

fn cohort_indicator_remedy() -> Outcome {
    let mut spec = acceptance_spec("S-1B", vec![EstimatorConfig::new("g-computation {C}", Method::GComputation, &["C"])], 4);
    spec.remove_nodes = vec!["U".into()];
    spec.bootstrap = 50;
    let c = pooling_contrast(&spec, Remedy::CohortIndicator).map_err(|e| e.to_string())?;
    let ok = c.without.z.abs() > 4.0 && c.with.z.abs() < 3.0 && c.reduction > 0.5;
    check(ok, format!("z without={:.2}, z with={:.2}, reduction={:.1}%", c.without.z, c.with.z, 100.0 * c.reduction))
}

fn selection_remedies() -> Outcome {
    let mut restricted = EstimatorConfig::new("crude, participants only", Method::Crude, &[]);
    restricted.restrict_to_selected = true;
    let mut weighted = EstimatorConfig::new("crude, participation ipw", Method::Crude, &[]);
    weighted.participation = Some(vec!["X".into(), "A".into(), "cohort".into()]);
    let mut spec = acceptance_spec("S-2B", vec![restricted, weighted], 5);
    spec.bootstrap = 50;
    let r = run_scenario(&spec).map_err(|e| e.to_string())?;
    let (base, ipw) = (&r.rows[0], &r.rows[1]);
    let ipw_reduction = 1.0 - ipw.bias.abs() / base.bias.abs();

    // Outcome missingness driven by A and the cohort: MAR given the
    // imputation model's variables, so A rides along as an auxiliary.
    let mut crude = EstimatorConfig::new("crude", Method::Crude, &[]);
    crude.auxiliary = vec!["A".into()];
    let mut mi_spec = acceptance_spec("S-2B", vec![crude], 6);
    mi_spec.missingness.insert(
        "Y".into(),
        Missingness::Mar {
            intercept: -2.0,
            coefficients: [("A".to_string(), 3.0), ("S".to_string(), 2.0)].into_iter().collect(),
        },
    );
    let c = pooling_contrast(&mi_spec, Remedy::MultipleImputation { m: 20 }).map_err(|e| e.to_string())?;
    let ok = base.z.abs() > 4.0 && c.without.z.abs() > 4.0 && ipw_reduction > 0.5 && c.reduction > 0.5;
    check(
        ok,
        format!(
            "restricted z={:.2}, ipw reduction={:.1}%; complete-case z={:.2}, mi reduction={:.1}%",
            base.z,
            100.0 * ipw_reduction,
            c.without.z,
            100.0 * c.reduction
        ),
    )
}

fn measurement_attenuation() -> Outcome {
    let spec = acceptance_spec("S-3A", vec![EstimatorConfig::new("crude on X*", Method::Crude, &[])], 7);
    let r = run_scenario(&spec).map_err(|e| e.to_string())?;
    let row = &r.rows[0];
    // Expected counts under the S-3A generator (X ~ expit(-0.5), Y ~ expit(-1 + 0.7 X)).
    let n = 20_000.0;
    let (px, p1, p0) = (expit(-0.5), expit(-0.3), expit(-1.0));
    let truth = TwoByTwo::new(n * px * p1, n * px * (1.0 - p1), n * (1.0 - px) * p0, n * (1.0 - px) * (1.0 - p0));
    let observed = misclassify_expected(&truth, 0.85, 0.95).map_err(|e| e.to_string())?;
    let corrected = misclassification_correct(&observed, 0.85, 0.95).map_err(|e| e.to_string())?.corrected;
    let cells = |t: &TwoByTwo| [t.exposed_cases, t.exposed_noncases, t.unexposed_cases, t.unexposed_noncases];
    let rel = cells(&corrected).iter().zip(cells(&truth)).map(|(a, b)| (a / b - 1.0).abs()).fold(0.0, f64::max);
    let ok = row.median > 0.0 && row.median < row.truth && rel < 1e-10;
    check(ok, format!("median log-OR {:.4} vs truth {:.4}; correction rel error {rel:.2e}", row.median, row.truth))
}

fn meta_arithmetic() -> Outcome {
    let arm = "In adolescence and young adulthood";
    let inputs: Vec<MetaInput> =
        reported_table().iter().filter(|r| r.arm == arm && r.cohort != "pooled").map(|r| r.meta_input()).collect();
    let r = meta_fixed_random(&inputs).map_err(|e| e.to_string())?;
    // By hand: se_i = (ln hi - ln lo) / 3.92, w_i = 1 / se_i^2.
    let se1 = (4.2f64.ln() - 1.3f64.ln()) / 3.92;
    let se2 = (3.4f64.ln() - 1.1f64.ln()) / 3.92;
    let (w1, w2) = (1.0 / (se1 * se1), 1.0 / (se2 * se2));
    let hand = (w1 * 2.4f64.ln() + w2 * 1.9f64.ln()) / (w1 + w2);
    let mut worst = (r.fixed - hand).abs().max((r.fixed_se - (1.0 / (w1 + w2)).sqrt()).abs());
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..500 {
        let k = rng.gen_range(2..12);
        let t: Vec<f64> = (0..k).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.5)).collect();
        let inputs: Vec<MetaInput> =
            (0..k).map(|i| MetaInput { label: i.to_string(), log_effect: t[i], se: s[i] }).collect();
        let r = meta_fixed_random(&inputs).map_err(|e| e.to_string())?;
        let (fixed, q, tau2, i2, _) = support::meta_oracle(&t, &s);
        for d in [r.fixed - fixed, r.q - q, r.tau2 - tau2, r.i2 - i2] {
            worst = worst.max(d.abs());
        }
    }
    check(worst < 1e-10, format!("pooled arm-3 log-OR {:.6} (hand {hand:.6}); max deviation {worst:.2e}", r.fixed))
}

fn rubin_rules() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = 0.0f64;
    let mut identical_b = 0.0f64;
    for _ in 0..1000 {
        let m = rng.gen_range(2..50);
        let items: Vec<(f64, f64)> = (0..m).map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(0.001..2.0))).collect();
        let r = rubin_pool(&items, None).map_err(|e| e.to_string())?;
        let mf = m as f64;
        let theta = items.iter().map(|i| i.0).sum::<f64>() / mf;
        let w = items.iter().map(|i| i.1).sum::<f64>() / mf;
        let b = items.iter().map(|i| (i.0 - theta).powi(2)).sum::<f64>() / (mf - 1.0);
        worst = worst.max((r.total - (w + (1.0 + 1.0 / mf) * b)).abs());
        let same = rubin_pool(&vec![items[0]; m], None).map_err(|e| e.to_string())?;
        identical_b = identical_b.max(same.between.abs());
    }
    check(worst < 1e-12 && identical_b == 0.0, format!("max |T - (W + (1 + 1/m)B)| {worst:.2e}; B for identical inputs {identical_b}"))
}

fn interaction_calibration() -> Outcome {
    let mut s = scenario("S-1A").map_err(|e| e.to_string())?;
    s.model = s.model.without_node("U");
    s.cohorts = vec![CohortConfig::new("cohort1", 2_000), CohortConfig::new("cohort2", 2_000)];
    let a = Analysis::new("X", "Y").covariates(&["C"]);
    let (mut rejected, mut runs) = (0usize, 0usize);
    for r in 0..1000u64 {
        let ds = simulate(&s.model, &s.cohorts, seed::derive(10, r)).map_err(|e| e.to_string())?;
        let terms = heterogeneity_interaction(&ds, &a).map_err(|e| e.to_string())?;
        runs += 1;
        rejected += usize::from(terms[0].p_value < 0.05);
    }
    let rate = rejected as f64 / runs as f64;
    check((0.03..=0.08).contains(&rate), format!("rejection rate {rate:.3} over {runs} replications"))
}

fn cli_reproducibility() -> Outcome {
    let bin = env!("CARGO_BIN_EXE_cohortforge");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let run = |tag: &str| -> Result<Vec<(String, Vec<u8>)>, String> {
        let base = dir.path().join(tag);
        std::fs::create_dir_all(&base).map_err(|e| e.to_string())?;
        let csv = base.join("s1b.csv");
        let csv_s = csv.to_str().unwrap().to_string();
        let bench = base.join("bench");
        let calls: Vec<Vec<String>> = vec![
            vec!["audit-dag".into(), "DAG-1B".into(), "--format".into(), "json".into()],
            vec!["emulation-report".into(), "spry2020".into()],
            vec!["simulate".into(), "S-1B".into(), "--seed".into(), "5".into(), "--n".into(), "500".into(), "--out".into(), csv_s.clone()],
            vec![
                "estimate".into(),
                csv_s.clone(),
                "--seed".into(),
                "6".into(),
                "--method".into(),
                "aipw".into(),
                "--covariates".into(),
                "C,U".into(),
                "--set".into(),
                "bootstrap=50".into(),
            ],
            vec!["bench".into(), "S-1B".into(), "--profile".into(), "smoke".into(), "--seed".into(), "7".into(), "--out".into(), bench.to_str().unwrap().into()],
        ];
        let mut out = Vec::new();
        for args in calls {
            let o = Command::new(bin).args(&args).output().map_err(|e| e.to_string())?;
            if !matches!(o.status.code(), Some(0 | 2)) {
                return Err(format!("{args:?} failed: {}", String::from_utf8_lossy(&o.stderr)));
            }
            out.push((args[0].clone(), o.stdout));
        }
        for f in [csv.clone(), base.join("s1b.csv.meta.json"), bench.join("S-1B.csv"), bench.join("S-1B.json")] {
            let bytes = std::fs::read(&f).map_err(|e| format!("{}: {e}", f.display()))?;
            out.push((f.file_name().unwrap().to_string_lossy().into_owned(), bytes));
        }
        Ok(out)
    };
    let (first, second) = (run("a")?, run("b")?);
    let differing: Vec<&str> = first.iter().zip(&second).filter(|(a, b)| a.1 != b.1).map(|(a, _)| a.0.as_str()).collect();
    check(differing.is_empty(), format!("{} outputs compared, differing: {differing:?}", first.len()))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("d-separation oracle equivalence", dsep_equivalence),
        ("fixture audit correctness", fixture_audits),
        ("estimator consistency on S-1A", estimator_consistency),
        ("cohort indicator remedy on S-1B", cohort_indicator_remedy),
        ("selection remedies on S-2B", selection_remedies),
        ("measurement attenuation on S-3A", measurement_attenuation),
        ("meta-analysis arithmetic", meta_arithmetic),
        ("Rubin's rules", rubin_rules),
        ("interaction-test calibration", interaction_calibration),
        ("CLI reproducibility", cli_reproducibility),
    ];
    let start = Instant::now();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = f();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("criterion {:>2} PASS  {name} ({secs:.1}s): {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("criterion {:>2} FAIL  {name} ({secs:.1}s): {d}", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed in {:.1}s", criteria.len() - failed, criteria.len(), start.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
