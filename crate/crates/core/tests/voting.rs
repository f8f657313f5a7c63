use std::collections::{BTreeMap, BTreeSet};

use attrib_core::attributors::{vote, PromptScore, Voting, DECISION_THRESHOLD};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scores(rng: &mut ChaCha8Rng) -> (Vec<String>, Vec<PromptScore>) {
    let nb = rng.random_range(1..=5);
    let np = rng.random_range(1..=10);
    let nt = rng.random_range(1..=4);
    let bases: Vec<String> = (0..nb).map(|b| format!("b{b}")).collect();
    // a coarse grid makes ties common and keeps every sum exact
    let mut scores = Vec::new();
    for t in 0..nt {
        for b in &bases {
            for p in 0..np {
                scores.push(PromptScore {
                    target: format!("t{t}"),
                    base: b.clone(),
                    prompt_id: format!("p{p}"),
                    score: f64::from(rng.random_range(0..=4u8)) / 4.0,
                });
            }
        }
    }
    (bases, scores)
}

/// `(prediction, tie set)` per target by brute force.
fn oracle(scores: &[PromptScore], voting: Voting) -> BTreeMap<String, (String, BTreeSet<String>)> {
    let mut sums: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for s in scores {
        let v = match voting {
            Voting::Soft => s.score,
            Voting::Hard => f64::from(u8::from(s.score >= DECISION_THRESHOLD)),
        };
        *sums.entry(s.target.clone()).or_default().entry(s.base.clone()).or_default() += v;
    }
    sums.into_iter()
        .map(|(t, row)| {
            let best = row.values().copied().fold(f64::NEG_INFINITY, f64::max);
            let winners: BTreeSet<String> = row.into_iter().filter(|(_, v)| *v == best).map(|(b, _)| b).collect();
            (t, (winners.iter().next().unwrap().clone(), winners))
        })
        .collect()
}

#[test]
fn vote_matches_row_sum_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut ties_seen = 0;
    for i in 0..1000 {
        let (bases, scores) = random_scores(&mut rng);
        let voting = if i % 2 == 0 { Voting::Soft } else { Voting::Hard };
        let r = vote("classifier", bases, scores.clone(), voting).unwrap();
        let expected = oracle(&scores, voting);
        assert_eq!(r.predicted.len(), expected.len());
        for (t, (pred, winners)) in expected {
            assert_eq!(r.predicted[&t], pred);
            assert_eq!(r.ties.contains(&t), winners.len() > 1);
            let best = r.scores[&t][&pred];
            let got: BTreeSet<String> =
                r.scores[&t].iter().filter(|(_, v)| **v == best).map(|(b, _)| b.clone()).collect();
            assert_eq!(got, winners);
            ties_seen += usize::from(winners.len() > 1);
        }
    }
    assert!(ties_seen > 50);
}

#[test]
fn each_head_only_moves_its_own_column() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100 {
        let (bases, scores) = random_scores(&mut rng);
        let full = vote("classifier", bases.clone(), scores.clone(), Voting::Soft).unwrap();
        let target_base = &bases[0];
        let bumped: Vec<PromptScore> = scores
            .iter()
            .cloned()
            .map(|mut s| {
                if &s.base == target_base {
                    s.score += 1.0;
                }
                s
            })
            .collect();
        let r = vote("classifier", bases.clone(), bumped, Voting::Soft).unwrap();
        for (t, row) in &full.scores {
            for (b, v) in row {
                let d = r.scores[t][b] - v;
                if b == target_base {
                    assert!(d > 0.0);
                } else {
                    assert_eq!(d, 0.0);
                }
            }
        }
    }
}

proptest! {
    #[test]
    fn argmax_is_scale_invariant(seed in any::<u64>(), k in 1u32..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (bases, scores) = random_scores(&mut rng);
        let scale = f64::from(2u32.pow(k));
        let scaled: Vec<PromptScore> = scores.iter().cloned().map(|mut s| { s.score *= scale; s }).collect();
        let a = vote("classifier", bases.clone(), scores, Voting::Soft).unwrap();
        let b = vote("classifier", bases, scaled, Voting::Soft).unwrap();
        prop_assert_eq!(a.predicted, b.predicted);
        prop_assert_eq!(a.ties, b.ties);
    }
}
