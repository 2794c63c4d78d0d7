mod common;

use matflow::scoring::*;
use matflow::TaskType;
use proptest::prelude::*;

const TOL: f64 = 1e-9;

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

fn all_ae() -> AeCompletionFlags {
    AeCompletionFlags { co_relaxed: true, surface_relaxed: true, adsorbed_relaxed: true }
}

fn all_ts() -> TsCompletionFlags {
    TsCompletionFlags { is_done: true, fs_done: true, interp_done: true, neb_converged: true }
}

fn bs(id: usize, pred: f64, truth: f64) -> BsItem {
    BsItem { id: format!("bs{id}"), completed: true, gap_pred: Some(pred), gap_true: truth }
}

fn opts() -> ScoringOptions {
    ScoringOptions::default()
}

#[test]
fn ratio_worked_examples() {
    assert_eq!(ratio_score(1.17, 1.17).unwrap(), 1.0);
    assert!(close(ratio_score(1.0, 1.2).unwrap(), 0.833_333_333_333_333_3));
    assert_eq!(ratio_score(0.0, 0.0).unwrap(), 1.0);
    assert_eq!(ratio_score(0.0, 0.5).unwrap(), 0.0);
}

#[test]
fn sr_forty_items_of_two_and_a_half() {
    let basis = SoapBasis::new(SoapParams::default()).unwrap();
    let reference = common::dimer_z("Ar", 3.8);
    let mut items: Vec<SrItem> = (0..40)
        .map(|i| SrItem { id: format!("sr{i:02}"), converged: true, predicted: Some(reference.clone()), reference: reference.clone() })
        .collect();
    let b = score_sr(&items, &basis, &opts()).unwrap();
    assert!(close(b.completion_total, 100.0));
    assert!(close(b.accuracy_total, 100.0));
    assert!(close(b.items[0].completion, 2.5) && close(b.items[0].accuracy, 2.5));

    // levels are independent: no convergence, perfect structure
    items[7].converged = false;
    let b = score_sr(&items, &basis, &opts()).unwrap();
    assert_eq!(b.items[7].completion, 0.0);
    assert!(close(b.items[7].accuracy, 2.5));
    assert!(close(b.completion_total, 97.5));

    let coupled = ScoringOptions { couple_accuracy_to_completion: true, ..opts() };
    let b = score_sr(&items, &basis, &coupled).unwrap();
    assert_eq!(b.items[7].accuracy, 0.0);
}

#[test]
fn bs_twenty_four_items() {
    let items: Vec<BsItem> = (0..24).map(|i| bs(i, 1.17, 1.17)).collect();
    let b = score_bs(&items, &opts()).unwrap();
    assert!(close(b.completion_total, 100.0));
    assert!(close(b.accuracy_total, 100.0));
    assert!(close(b.items[3].accuracy, 100.0 / 24.0));
    assert_eq!(b.items[3].relative_error, Some(0.0));
}

#[test]
fn bs_ten_percent_error_in_both_directions() {
    let truth = 1.17;
    // under-prediction by 10 %: the ratio is exactly 1 - RE
    let under = score_bs(&[bs(0, 0.9 * truth, truth)], &opts()).unwrap();
    assert!(close(under.items[0].accuracy / 100.0, 0.9));
    assert!(close(under.items[0].relative_error.unwrap(), 0.1));
    // over-prediction by 10 %: the ratio is 1 / (1 + RE)
    let over = score_bs(&[bs(0, 1.1 * truth, truth)], &opts()).unwrap();
    assert!(close(over.items[0].accuracy / 100.0, 1.0 / 1.1));
    assert!(close(over.items[0].relative_error.unwrap(), 0.1));
    for b in [under, over] {
        let ratio = b.items[0].accuracy / 100.0;
        assert!((ratio - 0.9).abs() <= 0.1f64.powi(2) + TOL);
    }
}

#[test]
fn bs_small_error_approximation_holds_on_a_sweep() {
    let truth = 2.3;
    for k in 0..100 {
        let re = 0.1 * k as f64 / 99.0;
        for pred in [truth * (1.0 - re), -truth * (1.0 - re)] {
            let r = ratio_score(pred, truth).unwrap();
            assert!((r - (1.0 - re)).abs() <= re * re + 1e-15, "re {re}: ratio {r}");
        }
        let over = ratio_score(truth * (1.0 + re), truth).unwrap();
        assert!((over - (1.0 - re)).abs() <= re * re + 1e-15);
    }
}

#[test]
fn ae_completion_splits() {
    let items: Vec<AeItem> =
        (0..10).map(|i| AeItem { id: format!("ae{i}"), flags: all_ae(), e_ads_pred: Some(-2.0), e_ads_true: -2.0 }).collect();
    let b = score_ae(&items, &opts()).unwrap();
    assert!(close(b.completion_total, 100.0) && close(b.accuracy_total, 100.0));

    let mut items = items;
    items[0].flags.adsorbed_relaxed = false;
    items[0].e_ads_pred = Some(-1.8);
    let b = score_ae(&items, &opts()).unwrap();
    assert!(close(b.items[0].completion, 5.0));
    assert!(close(b.items[0].accuracy, 9.0));
    assert!(close(b.completion_total, 95.0));

    let each = |co, surf, ads| AeCompletionFlags { co_relaxed: co, surface_relaxed: surf, adsorbed_relaxed: ads }.points();
    assert_eq!((each(true, false, false), each(false, true, false), each(false, false, true)), (2.0, 3.0, 5.0));
}

#[test]
fn ts_rescale_reaches_exactly_one_hundred() {
    let items: Vec<TsItem> = (0..6)
        .map(|i| TsItem {
            id: format!("ts{i}"),
            flags: all_ts(),
            de_pred: Some(-0.3),
            de_true: -0.3,
            barrier_pred: Some(1.0),
            barrier_true: 1.0,
        })
        .collect();
    let b = score_ts(&items, &opts()).unwrap();
    assert!(close(b.completion_total, 100.0) && close(b.accuracy_total, 100.0));
    assert!(close(b.items[0].completion, 10.0 * 10.0 / 6.0));

    let mut items = items;
    items[2].flags = TsCompletionFlags { is_done: true, fs_done: true, ..Default::default() };
    items[2].barrier_pred = Some(0.9);
    let b = score_ts(&items, &opts()).unwrap();
    assert!(close(b.items[2].completion, 10.0 / 6.0 * 2.0));
    assert!(close(b.items[2].accuracy, 10.0 / 6.0 * 9.2));
    assert!(close(b.completion_total, 10.0 / 6.0 * 52.0));
}

#[test]
fn ts_strict_gate_is_optional() {
    let it = TsItem { id: "t".into(), flags: all_ts(), de_pred: Some(-0.5), de_true: -0.4, barrier_pred: Some(0.95), barrier_true: 1.0 };
    let loose = score_ts(std::slice::from_ref(&it), &opts()).unwrap();
    assert!(close(loose.accuracy_total, 10.0 * (2.0 * 0.8 + 8.0 * 0.95)));
    let strict = score_ts(&[it], &ScoringOptions { ts_strict_gate: true, ..opts() }).unwrap();
    // RE(dE) = 0.25 is gated, RE(barrier) = 0.05 is kept
    assert!(close(strict.accuracy_total, 10.0 * 8.0 * 0.95));
}

fn breakdown(task_type: TaskType, completion: f64, accuracy: f64) -> ScoreBreakdown {
    ScoreBreakdown { task_type, items: Vec::new(), completion_total: completion, accuracy_total: accuracy }
}

#[test]
fn aggregate_examples() {
    let all = aggregate_report(TaskType::ALL.iter().map(|t| breakdown(*t, 100.0, 100.0)).collect()).unwrap();
    assert_eq!((all.overall_completion, all.overall_accuracy), (100.0, 100.0));

    let r = aggregate_report(vec![
        breakdown(TaskType::TS, 91.67, 50.0),
        breakdown(TaskType::SR, 100.0, 50.0),
        breakdown(TaskType::AE, 100.0, 50.0),
        breakdown(TaskType::BS, 100.0, 50.0),
    ])
    .unwrap();
    assert_eq!((r.overall_completion * 100.0).round() / 100.0, 97.92);
    assert_eq!(r.tasks.iter().map(|t| t.task_type).collect::<Vec<_>>(), TaskType::ALL.to_vec());

    let single = aggregate_report(vec![breakdown(TaskType::BS, 62.5, 40.0)]).unwrap();
    assert_eq!((single.overall_completion, single.overall_accuracy), (62.5, 40.0));

    assert!(matches!(
        aggregate_report(vec![breakdown(TaskType::BS, 1.0, 1.0), breakdown(TaskType::BS, 2.0, 2.0)]),
        Err(ScoreError::DuplicateTaskType(TaskType::BS))
    ));
}

#[test]
fn summary_rows_match_the_report() {
    let r = aggregate_report(vec![breakdown(TaskType::SR, 87.5, 80.25), breakdown(TaskType::AE, 50.0, 12.0)]).unwrap();
    let text = format_summary(&r);
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("SR") && rows[1].contains("87.50") && rows[1].contains("80.25"));
    assert!(rows[3].starts_with("all") && rows[3].contains("68.75") && rows[3].contains("46.12"));
}

fn nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-1e3..-1e-3, 1e-3..1e3f64]
}

proptest! {
    #[test]
    fn ratio_symmetric_and_bounded(a in -1e3..1e3f64, b in -1e3..1e3f64) {
        let r = ratio_score(a, b).unwrap();
        prop_assert_eq!(r, ratio_score(b, a).unwrap());
        prop_assert!((0.0..=1.0).contains(&r));
    }

    #[test]
    fn ratio_scale_invariant(a in nonzero(), b in nonzero(), k in nonzero()) {
        let r = ratio_score(a, b).unwrap();
        prop_assert!((ratio_score(k * a, k * b).unwrap() - r).abs() < 1e-12);
    }

    #[test]
    fn ratio_monotone_toward_truth(truth in 1e-2..1e2f64, frac1 in 0.0..1.0f64, frac2 in 0.0..1.0f64, above in any::<bool>(), sign in prop_oneof![Just(1.0), Just(-1.0)]) {
        // |pred| moves from far to near along the same side of |truth|
        let (near, far) = if frac1 < frac2 { (frac1, frac2) } else { (frac2, frac1) };
        let at = |f: f64| if above { truth * (1.0 + 3.0 * f) } else { truth * (1.0 - f) };
        let t = sign * truth;
        prop_assert!(ratio_score(sign * at(near), t).unwrap() >= ratio_score(sign * at(far), t).unwrap());
    }

    #[test]
    fn item_scores_within_bounds(
        rows in prop::collection::vec((any::<[bool; 4]>(), -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), 1..8),
        strict in any::<bool>(),
        coupled in any::<bool>(),
    ) {
        let o = ScoringOptions { ts_strict_gate: strict, couple_accuracy_to_completion: coupled };
        let ts: Vec<TsItem> = rows.iter().enumerate().map(|(i, (f, a, b, c, d))| TsItem {
            id: i.to_string(),
            flags: TsCompletionFlags { is_done: f[0], fs_done: f[1], interp_done: f[2], neb_converged: f[3] },
            de_pred: Some(*a), de_true: *b, barrier_pred: Some(*c), barrier_true: *d,
        }).collect();
        let ae: Vec<AeItem> = rows.iter().enumerate().map(|(i, (f, a, b, _, _))| AeItem {
            id: i.to_string(),
            flags: AeCompletionFlags { co_relaxed: f[0], surface_relaxed: f[1], adsorbed_relaxed: f[2] },
            e_ads_pred: Some(*a), e_ads_true: *b,
        }).collect();
        let bsi: Vec<BsItem> = rows.iter().enumerate().map(|(i, (f, a, b, _, _))| BsItem {
            id: i.to_string(), completed: f[3], gap_pred: Some(a.abs()), gap_true: b.abs(),
        }).collect();
        for b in [score_ts(&ts, &o).unwrap(), score_ae(&ae, &o).unwrap(), score_bs(&bsi, &o).unwrap()] {
            for it in &b.items {
                prop_assert!(it.accuracy >= 0.0 && it.accuracy <= it.max_points + 1e-12);
                prop_assert!(it.completion >= 0.0 && it.completion <= it.max_points + 1e-12);
            }
            prop_assert!((0.0..=100.0 + 1e-9).contains(&b.completion_total));
            prop_assert!((0.0..=100.0 + 1e-9).contains(&b.accuracy_total));
            let sum: f64 = b.items.iter().map(|i| i.completion).sum();
            prop_assert!((sum - b.completion_total).abs() < 1e-12);
        }
    }
}
