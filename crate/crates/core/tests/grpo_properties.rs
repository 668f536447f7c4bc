//! Properties of group-relative advantages: standardization, argmax
//! invariance, affine insensitivity, and soundness of the spread filter.

use alr_core::grpo::{group_advantages, reward_spread, zero_advantage_filter, RolloutGroup};
use proptest::prelude::*;

const EPSILON: f64 = 1e-8;
const TOL: f64 = 1e-9;

fn popstd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt()
}

fn group(rewards: Vec<f64>) -> RolloutGroup<f64> {
    let advantages = group_advantages(&rewards, EPSILON).unwrap();
    RolloutGroup { question_id: "q".into(), rewards, advantages, kept: true, breakdowns: vec![] }
}

proptest! {
    #[test]
    fn kept_groups_have_zero_mean_and_unit_scaled_std(
        rewards in proptest::collection::vec(0.0f64..=1.0, 2..=16),
    ) {
        let g = zero_advantage_filter(group(rewards.clone()), TOL);
        if g.kept {
            let mean = g.advantages.iter().sum::<f64>() / g.advantages.len() as f64;
            prop_assert!(mean.abs() <= 1e-9, "mean {mean}");
            let std = popstd(&rewards);
            let expected = std / (std + EPSILON);
            let got = popstd(&g.advantages);
            prop_assert!(got <= expected * (1.0 + 1e-9));
            prop_assert!(got >= expected * (1.0 - 1e-6), "{got} vs {expected}");
        }
    }

    #[test]
    fn argmax_of_advantages_matches_argmax_of_rewards(
        rewards in proptest::collection::vec(0.0f64..=1.0, 2..=16),
    ) {
        let g = zero_advantage_filter(group(rewards.clone()), TOL);
        if g.kept {
            let argmax = |xs: &[f64]| {
                xs.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, _)| i).unwrap()
            };
            prop_assert_eq!(argmax(&g.advantages), argmax(&g.rewards));
        }
    }

    /// Positive affine reward transforms leave advantages unchanged up to
    /// epsilon effects, provided the group carries real spread.
    #[test]
    fn advantages_are_affine_invariant(
        rewards in proptest::collection::vec(0.0f64..=1.0, 2..=16),
        scale in 0.5f64..3.0,
        shift in -1.0f64..1.0,
    ) {
        prop_assume!(reward_spread(&rewards) > 0.1);
        let base = group_advantages(&rewards, EPSILON).unwrap();
        let transformed: Vec<f64> = rewards.iter().map(|r| scale * r + shift).collect();
        let moved = group_advantages(&transformed, EPSILON).unwrap();
        for (a, b) in base.iter().zip(&moved) {
            prop_assert!((a - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }
}

/// Exhaustive filter-soundness check over all 3-element reward grids with
/// values in {0, 0.25, 0.5, 0.75, 1}: a group is dropped exactly when every
/// advantage magnitude would be at most tol / (std + epsilon).
#[test]
fn filter_soundness_on_enumerated_grids() {
    let levels = [0.0, 0.25, 0.5, 0.75, 1.0];
    for &a in &levels {
        for &b in &levels {
            for &c in &levels {
                let rewards = vec![a, b, c];
                let g = zero_advantage_filter(group(rewards.clone()), TOL);
                let std = popstd(&rewards);
                let bound = TOL / (std + EPSILON);
                let all_within = group_advantages(&rewards, EPSILON)
                    .unwrap()
                    .iter()
                    .all(|adv| adv.abs() <= bound);
                assert_eq!(!g.kept, all_within, "rewards {rewards:?}");
                if !g.kept {
                    assert!(g.advantages.iter().all(|adv| *adv == 0.0));
                }
            }
        }
    }
}

#[test]
fn spread_of_constant_group_is_zero() {
    assert_eq!(reward_spread(&[0.3, 0.3, 0.3]), 0.0);
    assert_eq!(reward_spread::<f64>(&[]), 0.0);
    assert_eq!(reward_spread(&[0.1, 0.9]), 0.8);
}
