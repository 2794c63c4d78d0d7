//! Acceptance checks. Prints one PASS/FAIL line per criterion with the
//! measured value, the tolerance and the runtime against its budget, and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use common::fuzz::*;
use common::*;
use matflow::harness::*;
use matflow::llm::{extract_answer, MockScript, TemplateLibrary};
use matflow::scoring::soap::soap_descriptor_with;
use matflow::scoring::*;
use matflow::sim::{toy_energy_forces, validate_deck, CrossStepContext, TagRegistry, ToyPotentialParams};
use matflow::vasp::*;
use matflow::TaskType;
use proptest::strategy::Strategy;
use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
use rand::Rng;

type Check = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn criterion(name: &str, budget: Duration, f: impl FnOnce() -> Check) -> bool {
    let start = Instant::now();
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
        Err(format!("panicked: {}", msg.unwrap_or_default()))
    });
    let elapsed = start.elapsed();
    let (pass, detail) = match result {
        Ok(d) if elapsed <= budget => (true, d),
        Ok(d) => (false, format!("{d}; over the time budget")),
        Err(e) => (false, e),
    };
    println!("{} {name}: {detail} [{:.2} s of {} s]", if pass { "PASS" } else { "FAIL" }, elapsed.as_secs_f64(), budget.as_secs());
    pass
}

// ---- scoring ----

const SCORE_TOL: f64 = 1e-9;

fn scoring_worked_examples() -> Check {
    let mut worst: f64 = 0.0;
    let mut expect = |label: &str, got: f64, want: f64| -> Result<(), String> {
        let e = (got - want).abs();
        worst = worst.max(e);
        ensure!(e <= SCORE_TOL, "{label}: {got} vs {want}");
        Ok(())
    };
    let opts = ScoringOptions::default();
    let e = |x: Result<f64, ScoreError>| x.map_err(|e| e.to_string());

    expect("ratio 1.0 vs 1.2", e(ratio_score(1.0, 1.2))?, 1.0 / 1.2)?;
    expect("ratio of equal gaps", e(ratio_score(1.17, 1.17))?, 1.0)?;

    let basis = SoapBasis::new(SoapParams::default()).map_err(|e| e.to_string())?;
    let reference = dimer_z("Ar", 3.8);
    let sr: Vec<SrItem> = (0..40)
        .map(|i| SrItem { id: format!("sr{i:02}"), converged: true, predicted: Some(reference.clone()), reference: reference.clone() })
        .collect();
    let b = score_sr(&sr, &basis, &opts).map_err(|e| e.to_string())?;
    expect("SR item of 40", b.items[0].completion, 2.5)?;
    expect("SR accuracy total", b.accuracy_total, 100.0)?;

    let bs = |pred: f64, truth: f64| BsItem { id: "bs".into(), completed: true, gap_pred: Some(pred), gap_true: truth };
    let b = score_bs(&vec![bs(1.17, 1.17); 24], &opts).map_err(|e| e.to_string())?;
    expect("BS item of 24", b.items[3].accuracy, 100.0 / 24.0)?;
    expect("BS total", b.accuracy_total, 100.0)?;
    let under = score_bs(&[bs(0.9 * 1.17, 1.17)], &opts).map_err(|e| e.to_string())?;
    expect("BS 10% under", under.items[0].accuracy / 100.0, 0.9)?;
    let over = score_bs(&[bs(1.1 * 1.17, 1.17)], &opts).map_err(|e| e.to_string())?;
    expect("BS 10% over", over.items[0].accuracy / 100.0, 1.0 / 1.1)?;

    let full_ae = AeCompletionFlags { co_relaxed: true, surface_relaxed: true, adsorbed_relaxed: true };
    let mut ae: Vec<AeItem> =
        (0..10).map(|i| AeItem { id: format!("ae{i}"), flags: full_ae, e_ads_pred: Some(-2.0), e_ads_true: -2.0 }).collect();
    ae[0].flags.adsorbed_relaxed = false;
    ae[0].e_ads_pred = Some(-1.8);
    let b = score_ae(&ae, &opts).map_err(|e| e.to_string())?;
    expect("AE partial completion", b.items[0].completion, 5.0)?;
    expect("AE partial accuracy", b.items[0].accuracy, 9.0)?;

    let full_ts = TsCompletionFlags { is_done: true, fs_done: true, interp_done: true, neb_converged: true };
    let mut ts: Vec<TsItem> = (0..6)
        .map(|i| TsItem {
            id: format!("ts{i}"),
            flags: full_ts,
            de_pred: Some(-0.3),
            de_true: -0.3,
            barrier_pred: Some(1.0),
            barrier_true: 1.0,
        })
        .collect();
    let b = score_ts(&ts, &opts).map_err(|e| e.to_string())?;
    expect("TS rescaled total", b.completion_total, 100.0)?;
    ts[2].flags = TsCompletionFlags { is_done: true, fs_done: true, ..Default::default() };
    ts[2].barrier_pred = Some(0.9);
    let b = score_ts(&ts, &opts).map_err(|e| e.to_string())?;
    expect("TS endpoints only", b.items[2].completion, 10.0 / 6.0 * 2.0)?;
    expect("TS barrier off by 10%", b.items[2].accuracy, 10.0 / 6.0 * 9.2)?;

    let task = |t, c| ScoreBreakdown { task_type: t, items: Vec::new(), completion_total: c, accuracy_total: 50.0 };
    let r =
        aggregate_report(vec![task(TaskType::SR, 100.0), task(TaskType::BS, 100.0), task(TaskType::AE, 100.0), task(TaskType::TS, 91.67)])
            .map_err(|e| e.to_string())?;
    expect("aggregate", (r.overall_completion * 100.0).round() / 100.0, 97.92)?;
    Ok(format!("max |error| {worst:.1e} (tol {SCORE_TOL:.0e})"))
}

fn bs_approximation() -> Check {
    let truth = 2.3;
    let mut worst_slack = f64::INFINITY;
    let mut points = 0;
    for k in 0..100 {
        let re = 0.1 * k as f64 / 99.0;
        for pred in [truth * (1.0 - re), truth * (1.0 + re)] {
            let r = ratio_score(pred, truth).map_err(|e| e.to_string())?;
            let dev = (r - (1.0 - re)).abs();
            ensure!(dev <= re * re + 1e-15, "RE {re}: ratio {r}, |ratio - (1 - RE)| = {dev:e} > RE^2");
            worst_slack = worst_slack.min(re * re - dev);
        }
        points += 1;
    }
    Ok(format!("{points} RE values in [0, 0.1], both directions; min slack RE^2 - dev {worst_slack:.1e}"))
}

// ---- SOAP ----

fn soap_properties() -> Check {
    let basis = SoapBasis::new(SoapParams::default()).map_err(|e| e.to_string())?;
    let desc = |s: &CrystalStructure| soap_descriptor_with(s, &basis).map_err(|e| e.to_string());
    let mut rng = rng(11);
    let (mut rot, mut tr, mut perm, mut selfsim) = (0f64, 0f64, 0f64, 0f64);
    let n = 24;
    for case in 0..n {
        let s = random_structure(&mut rng);
        let base = desc(&s)?;
        let r = random_rotation(&mut rng);
        rot = rot.max(rel_diff(&base.components, &desc(&rotated(&s, &r))?.components));
        let shift = [rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>()];
        tr = tr.max(rel_diff(&base.components, &desc(&translated(&s, shift))?.components));
        perm = perm.max(rel_diff(&base.components, &desc(&permuted_within_species(&s, &mut rng))?.components));
        selfsim = selfsim.max((soap_similarity(&base, &base).map_err(|e| e.to_string())? - 1.0).abs());
        ensure!(
            rot < 1e-8 && tr < 1e-10 && perm < 1e-10 && selfsim <= 1e-12,
            "case {case}: rot {rot:e} tr {tr:e} perm {perm:e} self {selfsim:e}"
        );
    }
    let mut grid: f64 = 0.0;
    for d in [2.0, 1.1, 3.3, 4.7] {
        let lib = desc(&dimer_z("Ar", d))?;
        grid = grid.max(rel_diff(&soap_dimer_grid_oracle(&basis, d, 200, 96), &lib.components));
    }
    ensure!(grid < 1e-4, "dimer grid oracle relative difference {grid:e}");
    Ok(format!(
        "{n} structures: rotation {rot:.1e} (tol 1e-8), translation {tr:.1e} and permutation {perm:.1e} (tol 1e-10), \
         |self - 1| {selfsim:.1e} (tol 1e-12); dimer grid {grid:.1e} (tol 1e-4)"
    ))
}

// ---- forces ----

fn gradient_check() -> Check {
    let p = ToyPotentialParams::builtin();
    let mut rng = rng(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let s = random_cell_8(&mut rng);
        let (_, analytic) = toy_energy_forces(&s, &p).map_err(|e| e.to_string())?;
        for (a, n) in analytic.iter().zip(&fd_forces(&s, &p, 1e-5)) {
            worst = (0..3).map(|k| (a[k] - n[k]).abs()).fold(worst, f64::max);
        }
    }
    ensure!(worst < 1e-6, "max deviation {worst:e} eV/Å");
    Ok(format!("10 random 8-atom cells, max |F - F_fd| {worst:.1e} eV/Å (tol 1e-6)"))
}

// ---- validation ----

fn scripted_deck(script: &MockScript, templates: &TemplateLibrary, template: &str, index: usize) -> Result<IncarDocument, String> {
    let text = script.lookup(template, index).ok_or_else(|| format!("no answer for {template}[{index}]"))?;
    let tpl = templates.get(template).ok_or_else(|| format!("no template {template}"))?;
    let body = extract_answer(text, tpl).map_err(|e| format!("{template}[{index}]: {e}"))?;
    parse_incar(&body).map_err(|e| format!("{template}[{index}]: {e}"))
}

fn distinct_rules(incar: &IncarDocument, cross: &CrossStepContext) -> BTreeSet<String> {
    validate_deck(incar, &TagRegistry::builtin(), cross).rule_ids().into_iter().map(str::to_string).collect()
}

/// Endpoint facts as the backend records them: each relaxation's ISIF and the endpoint cells.
fn neb_context(isif: i64, initial: &CrystalStructure, final_: &CrystalStructure) -> CrossStepContext {
    CrossStepContext {
        endpoint_isif: vec![("initial".into(), isif), ("final".into(), isif)],
        endpoint_lattices: vec![("initial".into(), initial.scaled_lattice()), ("final".into(), final_.scaled_lattice())],
    }
}

fn ts_endpoints() -> Result<(CrystalStructure, CrystalStructure), String> {
    let bench = load_benchmark(&toy_benchmark_dir()).map_err(|e| e.to_string())?;
    let ts = bench.entries.iter().find(|e| e.task_type == TaskType::TS).ok_or("toy benchmark has no TS entry")?;
    let read = |role: &str| -> Result<CrystalStructure, String> {
        let text = fs::read_to_string(&ts.input_files[role]).map_err(|e| e.to_string())?;
        parse_poscar(&text).map_err(|e| e.to_string())
    };
    Ok((read("POSCAR_initial")?, read("POSCAR_final")?))
}

fn failure_taxonomy() -> Check {
    let templates = TemplateLibrary::builtin();
    let none = CrossStepContext::default();
    let (initial, final_) = ts_endpoints()?;
    let want = |rule: &str| BTreeSet::from([rule.to_string()]);

    let deck = scripted_deck(&mock_script("faulty_unknown_tag"), &templates, "sr_params", 0)?;
    let got = distinct_rules(&deck, &none);
    ensure!(got == want("unknown_tag"), "unknown-tag deck fired {got:?}");

    let deck = scripted_deck(&mock_script("faulty_ibrion_potim"), &templates, "ae_params", 2)?;
    let got = distinct_rules(&deck, &none);
    ensure!(got == want("ibrion_potim"), "IBRION/POTIM deck fired {got:?}");

    // ISIF 3 endpoints: the cell relaxes, so the final cell no longer matches the initial one
    let isif3 = mock_script("faulty_isif3");
    let relax = scripted_deck(&isif3, &templates, "ts_relax_params", 0)?;
    let isif = relax.get_i64("ISIF").ok_or("faulty ISIF deck has no ISIF")?;
    ensure!(isif == 3, "faulty ISIF deck sets ISIF = {isif}");
    let mut grown = final_.clone();
    grown.scale *= 1.004;
    let neb = scripted_deck(&isif3, &templates, "ts_neb_params", 0)?;
    let got = distinct_rules(&neb, &neb_context(isif, &initial, &grown));
    ensure!(got == want("neb_cell_consistency"), "NEB after ISIF 3 fired {got:?}");
    let got = distinct_rules(&neb, &neb_context(isif, &initial, &final_));
    ensure!(got == want("neb_cell_consistency"), "NEB after ISIF 3 with unchanged cells fired {got:?}");

    let mut decks = 0;
    for name in ["golden", "reference"] {
        let script = mock_script(name);
        let relax_isif = scripted_deck(&script, &templates, "ts_relax_params", 0)?.get_i64("ISIF").unwrap_or(2);
        for template in ["sr_params", "bs_params", "ae_params", "ts_relax_params", "ts_neb_params", "no_agent"] {
            for index in 0..3 {
                if script.lookup(template, index).is_none() {
                    continue;
                }
                let deck = scripted_deck(&script, &templates, template, index)?;
                let cross = if template == "ts_neb_params" { neb_context(relax_isif, &initial, &final_) } else { none.clone() };
                let got = distinct_rules(&deck, &cross);
                ensure!(got.is_empty(), "{name} {template}[{index}] fired {got:?}");
                decks += 1;
            }
        }
    }
    Ok(format!("3 faulty decks rejected by the expected rule; 0 false fires on {decks} golden and reference decks"))
}

// ---- end to end ----

fn run_toy(script: &str, out: &Path, parallelism: usize) -> Result<BenchmarkRun, String> {
    let bench = load_benchmark(&toy_benchmark_dir()).map_err(|e| e.to_string())?;
    ensure!(bench.warnings.is_empty(), "toy benchmark warnings: {:?}", bench.warnings);
    let mut cfg = RunConfig::new(out);
    cfg.parallelism = parallelism;
    run_benchmark(&bench, &mock_env(script), &cfg).map_err(|e| format!("{script}: {e}"))
}

fn totals(run: &BenchmarkRun, t: TaskType) -> Result<(f64, f64), String> {
    let b = run.report.scores.tasks.iter().find(|b| b.task_type == t).ok_or_else(|| format!("no {t} breakdown"))?;
    Ok((b.completion_total, b.accuracy_total))
}

fn outputs(dir: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let mut files = Vec::new();
    for f in [REPORT_FILE, SUMMARY_FILE] {
        files.push((f.to_string(), fs::read(dir.join(f)).map_err(|e| e.to_string())?));
    }
    let mut records: Vec<_> =
        fs::read_dir(dir.join(RECORDS_DIR)).map_err(|e| e.to_string())?.filter_map(Result::ok).map(|e| e.path()).collect();
    records.sort();
    for p in records {
        let name = p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        files.push((name, fs::read(&p).map_err(|e| e.to_string())?));
    }
    Ok(files)
}

fn toy_end_to_end() -> Check {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let others_full = |run: &BenchmarkRun, hit: TaskType| -> Result<(), String> {
        for t in TaskType::ALL.into_iter().filter(|&t| t != hit) {
            let (c, _) = totals(run, t)?;
            ensure!(c == 100.0, "{t} completion {c} should be untouched");
        }
        Ok(())
    };

    let golden = run_toy("golden", &tmp.path().join("golden_p1"), 1)?;
    let s = &golden.report.scores;
    ensure!(s.overall_completion == 100.0, "golden completion {}", s.overall_completion);
    ensure!(s.overall_accuracy >= 95.0, "golden accuracy {}", s.overall_accuracy);
    let reference = outputs(&tmp.path().join("golden_p1"))?;
    for n in [4, 8] {
        let dir = tmp.path().join(format!("golden_p{n}"));
        run_toy("golden", &dir, n)?;
        ensure!(outputs(&dir)? == reference, "outputs differ at parallelism {n}");
    }

    let r = run_toy("faulty_unknown_tag", &tmp.path().join("unknown_tag"), 4)?;
    ensure!(totals(&r, TaskType::SR)? == (0.0, 0.0), "unknown tag: SR {:?}", totals(&r, TaskType::SR)?);
    others_full(&r, TaskType::SR)?;

    let r = run_toy("faulty_ibrion_potim", &tmp.path().join("ibrion_potim"), 4)?;
    // the adsorbed stage (5 of 10 points) and the energy it feeds are lost
    ensure!(totals(&r, TaskType::AE)? == (50.0, 0.0), "IBRION/POTIM: AE {:?}", totals(&r, TaskType::AE)?);
    others_full(&r, TaskType::AE)?;

    let r = run_toy("faulty_isif3", &tmp.path().join("isif3"), 4)?;
    // endpoints relax (2 of 10) but interpolation (2) and NEB (6) are refused
    ensure!(totals(&r, TaskType::TS)? == (20.0, 0.0), "ISIF 3: TS {:?}", totals(&r, TaskType::TS)?);
    others_full(&r, TaskType::TS)?;
    let ts = r.records.iter().find(|x| x.task_type == TaskType::TS).ok_or("no TS record")?;
    ensure!(
        matches!(&ts.outcome, EntryOutcome::Failed { error, .. } if error.contains("neb_cell_consistency")),
        "ISIF 3: TS outcome {:?}",
        ts.outcome
    );

    let r = run_toy("faulty_no_hybrid", &tmp.path().join("no_hybrid"), 4)?;
    let (c, a) = totals(&r, TaskType::BS)?;
    ensure!(c == 100.0 && (a - 60.0).abs() < 1e-9, "no hybrid: BS {c}/{a}");

    let r = run_toy("faulty_prose", &tmp.path().join("prose"), 4)?;
    let all = (r.report.scores.overall_completion, r.report.scores.overall_accuracy);
    ensure!(all == (0.0, 0.0), "prose answers: overall {all:?}");

    Ok(format!(
        "golden {:.1}/{:.2}; identical outputs at parallelism 1/4/8; unknown tag SR 0/0, missing POTIM AE 50/0, \
         ISIF 3 TS 20/0, no hybrid BS 100/60, prose 0/0",
        s.overall_completion, s.overall_accuracy
    ))
}

// ---- parsers ----

fn parser_fuzz() -> Check {
    let mut rng = rng(FUZZ_SEED);
    let hook = std::panic::take_hook();
    std::panic::set_hook(Box::new(|_| {}));
    let mut crashes = Vec::new();
    for case in 0..FUZZ_CASES {
        let text = fuzz_case(case, &mut rng);
        if catch_unwind(AssertUnwindSafe(|| exercise_all_parsers(&text))).is_err() {
            crashes.push(text);
        }
    }
    std::panic::set_hook(hook);
    ensure!(crashes.is_empty(), "{} of {FUZZ_CASES} inputs panicked; first: {:?}", crashes.len(), crashes.first());

    const ROUND_TRIPS: u32 = 50;
    let runner = || {
        TestRunner::new_with_rng(
            Config { cases: ROUND_TRIPS, failure_persistence: None, ..Config::default() },
            TestRng::deterministic_rng(RngAlgorithm::ChaCha),
        )
    };
    let mut prng = common::rng(0x50);
    for i in 0..ROUND_TRIPS {
        let s = random_poscar_structure(&mut prng);
        let text = write_poscar(&s);
        let back = parse_poscar(&text).map_err(|e| format!("POSCAR round trip {i}: {e}"))?;
        structures_match(&s, &back).map_err(|e| format!("POSCAR round trip {i}: {e}"))?;
        ensure!(write_poscar(&back) == text, "POSCAR round trip {i}: text is not a fixed point");
    }
    runner()
        .run(&incar_doc().boxed(), |d| {
            proptest::prop_assert_eq!(parse_incar(&write_incar(&d)).ok(), Some(d));
            Ok(())
        })
        .map_err(|e| format!("INCAR round trip: {e}"))?;
    runner()
        .run(&kpoints_spec().boxed(), |k| {
            proptest::prop_assert_eq!(parse_kpoints(&write_kpoints(&k)).ok(), Some(k));
            Ok(())
        })
        .map_err(|e| format!("KPOINTS round trip: {e}"))?;
    Ok(format!("{FUZZ_CASES} fuzz cases, 0 panics; {ROUND_TRIPS} round trips each of POSCAR, INCAR and KPOINTS"))
}

// ---- NEB ----

fn neb_oracle() -> Check {
    let well = DoubleWell { k: 2.0, c: 0.5 };
    let oracle = well.grid_barrier(2000);
    let r = double_well_neb(&well, 7, false);
    ensure!(r.converged, "band did not converge; max force {}", r.max_force);
    let rel = (r.barrier - oracle).abs() / oracle;
    ensure!(rel <= 0.02, "barrier {} vs grid saddle {oracle}", r.barrier);
    Ok(format!("barrier {:.5} vs grid saddle {oracle:.5}, relative error {rel:.1e} (tol 2e-2)", r.barrier))
}

fn main() {
    let checks: [(&str, u64, fn() -> Check); 8] = [
        ("scoring worked examples", 1, scoring_worked_examples),
        ("SOAP invariances and grid oracle", 60, soap_properties),
        ("analytic forces vs finite differences", 10, gradient_check),
        ("validation failure taxonomy", 10, failure_taxonomy),
        ("toy benchmark end to end", 120, toy_end_to_end),
        ("parser fuzz and round trips", 120, parser_fuzz),
        ("band-gap ratio small-error bound", 1, bs_approximation),
        ("NEB double-well barrier", 30, neb_oracle),
    ];
    let mut failed = 0;
    for (name, budget, f) in checks {
        if !criterion(name, Duration::from_secs(budget), f) {
            failed += 1;
        }
    }
    println!("acceptance: {} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
