mod common;

use dbforge_core::index::SymbolIndex;
use dbforge_core::planning::{
    best_score, count_plan_defects, sanitize_and_filter, score_counts, score_plans, PlanCounts,
    ScoreWeights,
};
use proptest::prelude::*;

/// Straight transcription of the scoring rule, kept apart from the crate.
fn oracle(counts: &[(usize, usize, usize)], w: (f64, f64, f64)) -> Vec<f64> {
    let norm = |pick: fn(&(usize, usize, usize)) -> usize| -> Vec<f64> {
        let vals: Vec<f64> = counts.iter().map(|c| pick(c) as f64).collect();
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        vals.iter()
            .map(|v| {
                if hi == lo {
                    1.0
                } else {
                    1.0 - (v - lo) / (hi - lo)
                }
            })
            .collect()
    };
    let (a, b, c) = (norm(|c| c.0), norm(|c| c.1), norm(|c| c.2));
    (0..counts.len())
        .map(|i| w.0 * a[i] + w.1 * b[i] + w.2 * c[i])
        .collect()
}

fn to_counts(raw: &[(usize, usize, usize)]) -> Vec<PlanCounts> {
    raw.iter()
        .map(|&(r, l, u)| PlanCounts {
            bad_refs: r,
            bad_locations: l,
            units: u,
        })
        .collect()
}

fn batch() -> impl Strategy<Value = Vec<(usize, usize, usize)>> {
    prop::collection::vec((0usize..8, 0usize..6, 1usize..9), 1..8)
        .prop_map(|v| v.into_iter().map(|(r, l, u)| (r, l.min(u), u)).collect())
}

proptest! {
    #[test]
    fn scores_match_the_oracle(raw in batch()) {
        let scores = score_counts(&to_counts(&raw), ScoreWeights::default());
        for (s, want) in scores.iter().zip(oracle(&raw, (0.4, 0.4, 0.2))) {
            prop_assert!((s.total - want).abs() <= 1e-9);
            prop_assert!((0.0..=1.0 + 1e-12).contains(&s.total));
        }
    }

    #[test]
    fn argmax_survives_weight_rescaling(raw in batch(), factor in 1e-3f64..1e3) {
        let w = ScoreWeights::default();
        let base = best_score(&score_counts(&to_counts(&raw), w));
        let scaled = best_score(&score_counts(&to_counts(&raw), w.scaled(factor)));
        prop_assert_eq!(base, scaled);
    }

    #[test]
    fn a_dominating_plan_scores_highest(raw in batch()) {
        let mut raw = raw;
        raw.push((0, 0, 1));
        let scores = score_counts(&to_counts(&raw), ScoreWeights::default());
        let top = scores.iter().map(|s| s.total).fold(f64::NEG_INFINITY, f64::max);
        prop_assert!((scores.last().unwrap().total - top).abs() < 1e-12);
    }

    #[test]
    fn real_plans_are_counted_as_built(raw in batch()) {
        let dir = tempfile::tempdir().unwrap();
        let index = SymbolIndex::empty(dir.path());
        let plans: Vec<_> = raw.iter().map(|&(r, l, u)| common::plan_with_defects(r, l, u)).collect();
        let scores = score_plans(&plans, &index, dir.path(), &common::toydb_profile(), ScoreWeights::default()).unwrap();
        for ((s, &(r, l, u)), want) in scores.iter().zip(&raw).zip(oracle(&raw, (0.4, 0.4, 0.2))) {
            prop_assert_eq!(s.counts, PlanCounts { bad_refs: r, bad_locations: l, units: u });
            prop_assert!((s.total - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn sanitized_plans_carry_no_defects(raw in batch(), threshold in 0.0f64..=1.0) {
        let dir = tempfile::tempdir().unwrap();
        let index = SymbolIndex::empty(dir.path());
        let profile = common::toydb_profile();
        let plans: Vec<_> = raw.iter().map(|&(r, l, u)| common::plan_with_defects(r, l, u)).collect();
        let scores = score_plans(&plans, &index, dir.path(), &profile, ScoreWeights::default()).unwrap();
        let kept = sanitize_and_filter(&plans, &scores, &index, dir.path(), &profile, threshold).unwrap();
        prop_assert_eq!(kept.plans.len(), kept.scores.len());
        prop_assert!(kept.scores.windows(2).all(|w| w[0].total >= w[1].total));
        for plan in &kept.plans {
            let c = count_plan_defects(plan, &index, dir.path(), &profile).unwrap();
            prop_assert_eq!((c.bad_refs, c.bad_locations), (0, 0));
            prop_assert!(!plan.units.is_empty());
        }
    }
}

#[test]
fn equal_batch_scores_one_everywhere() {
    let scores = score_counts(&to_counts(&[(2, 1, 3); 4]), ScoreWeights::default());
    assert!(scores.iter().all(|s| (s.total - 1.0).abs() < 1e-12));
    assert_eq!(best_score(&scores), Some(0));
}

#[test]
fn empty_batch_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let index = SymbolIndex::empty(dir.path());
    assert!(score_plans(
        &[],
        &index,
        dir.path(),
        &common::toydb_profile(),
        ScoreWeights::default()
    )
    .is_err());
}
