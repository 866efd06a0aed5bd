//! Multi-round refinement of pruned templates within one declaration group.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::prune::{pairwise_prune, PathUnit, PrunedUnit};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundStat {
    pub round: usize,
    /// Compared members, by label.
    pub pairs: Vec<(String, String)>,
    /// Template tokens over compared tokens in this round.
    pub proportion: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RefineOutcome {
    pub templates: Vec<PrunedUnit>,
    pub rounds: Vec<RoundStat>,
}

/// Derives the per-group seed so groups refined in parallel do not share
/// a random stream.
pub fn group_seed(seed: u64, group_label: &str) -> u64 {
    let digest = crate::util::sha256_hex(group_label.as_bytes());
    seed ^ u64::from_str_radix(&digest[..16], 16).expect("hex digest")
}

/// Orders templates by support, then longer text, then text.
pub fn rank_templates(units: &mut [PrunedUnit]) {
    units.sort_by(|a, b| {
        b.support
            .cmp(&a.support)
            .then(b.template_text.len().cmp(&a.template_text.len()))
            .then(a.template_text.cmp(&b.template_text))
    });
}

/// Compares seeded random pairs of `members` round by round and returns
/// the `k` most supported templates.
///
/// Each round draws `max(1, g/2)` fresh pairs from a seeded shuffle of all
/// pairs; there are at most `g` rounds. Refinement stops after the first
/// round whose pruned-token proportion is lower than the previous round's
/// (that round still counts).
pub fn refine_paths(
    members: &[(String, Vec<PathUnit>)],
    is_global: &(dyn Fn(&str) -> bool + Sync),
    k: usize,
    seed: u64,
    group_label: &str,
) -> RefineOutcome {
    let g = members.len();
    if g < 2 || k == 0 {
        return RefineOutcome::default();
    }
    let mut pairs: Vec<(usize, usize)> = (0..g)
        .flat_map(|i| (i + 1..g).map(move |j| (i, j)))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pairs.shuffle(&mut rng);

    let per_round = (g / 2).max(1);
    let mut support: BTreeMap<String, PrunedUnit> = BTreeMap::new();
    let mut rounds = Vec::new();
    let mut cursor = 0;
    let mut previous: Option<f64> = None;
    for round in 0..g {
        if cursor >= pairs.len() {
            break;
        }
        let batch = &pairs[cursor..(cursor + per_round).min(pairs.len())];
        cursor += batch.len();
        let (mut pruned, mut total) = (0usize, 0usize);
        for &(i, j) in batch {
            let result = pairwise_prune(&members[i].1, &members[j].1, is_global);
            pruned += result.pruned_tokens;
            total += result.total_tokens;
            let mut seen_in_pair = std::collections::BTreeSet::new();
            for unit in result.units {
                if !seen_in_pair.insert(unit.template_text.clone()) {
                    continue;
                }
                support
                    .entry(unit.template_text.clone())
                    .and_modify(|u| u.support += 1)
                    .or_insert(unit);
            }
        }
        let proportion = if total == 0 {
            0.0
        } else {
            pruned as f64 / total as f64
        };
        rounds.push(RoundStat {
            round: round + 1,
            pairs: batch
                .iter()
                .map(|&(i, j)| (members[i].0.clone(), members[j].0.clone()))
                .collect(),
            proportion,
        });
        if previous.is_some_and(|p| proportion < p) {
            break;
        }
        previous = Some(proportion);
    }

    let mut templates: Vec<PrunedUnit> = support
        .into_values()
        .map(|mut u| {
            u.origin_group = group_label.to_string();
            u
        })
        .collect();
    rank_templates(&mut templates);
    templates.truncate(k);
    RefineOutcome { templates, rounds }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::UnitRole;

    fn member(label: &str, reg: &str, body: &str) -> (String, Vec<PathUnit>) {
        (
            label.to_string(),
            vec![
                PathUnit {
                    role: UnitRole::Registration,
                    file: "r.c".into(),
                    source: reg.into(),
                },
                PathUnit {
                    role: UnitRole::Implementation,
                    file: "f.c".into(),
                    source: body.into(),
                },
            ],
        )
    }

    #[test]
    fn small_groups_yield_nothing() {
        let m = vec![member("a", "REG(a, 1)", "void a(void) { x(); }")];
        assert!(refine_paths(&m, &|_| true, 3, 1, "g").templates.is_empty());
    }

    #[test]
    fn identical_shapes_share_one_template() {
        let body = "void f(int q) { int z = q; g(z); }";
        let m: Vec<_> = ["a", "b", "c", "d"]
            .iter()
            .map(|l| member(l, "{ \"n\", 1, f },", body))
            .collect();
        let out = refine_paths(&m, &|n| n == "f" || n == "g", 1, 7, "grp");
        let comparisons: usize = out.rounds.iter().map(|r| r.pairs.len()).sum();
        assert_eq!(out.templates.len(), 1);
        assert_eq!(out.templates[0].support, comparisons);
        assert_eq!(out.templates[0].origin_group, "grp");
        assert_eq!(out.templates[0].placeholder_count, 0);
    }

    #[test]
    fn seeded_runs_repeat() {
        let m: Vec<_> = (0..5)
            .map(|i| {
                member(
                    &format!("m{i}"),
                    &format!("REG(\"m{i}\", 1, f{i}),"),
                    &format!("void f{i}(int a) {{ int b{i} = a * {i}; }}"),
                )
            })
            .collect();
        let a = refine_paths(&m, &|_| false, 3, 42, "g");
        let b = refine_paths(&m, &|_| false, 3, 42, "g");
        assert_eq!(a, b);
        assert!(a.rounds.len() <= 5);
    }
}
