use crate::error::{check_len, Result};

/// Goal transition `h(s_prev, g_prev, s_now) = s_prev + g_prev - s_now` on the
/// goal coordinates (the first `g_prev.len()` state coordinates). Keeps the
/// absolute target point fixed while the agent moves.
pub fn goal_transition(s_prev: &[f64], g_prev: &[f64], s_now: &[f64]) -> Result<Vec<f64>> {
    let k = g_prev.len();
    check_len("goal_transition previous state", s_prev.len(), s_now.len())?;
    if s_prev.len() < k {
        check_len("goal_transition state (goal coords)", k, s_prev.len())?;
    }
    Ok((0..k).map(|i| s_prev[i] + g_prev[i] - s_now[i]).collect())
}

/// Intrinsic reward `-‖s + g - s_next‖₂` over the goal coordinates.
pub fn intrinsic_reward(s: &[f64], g: &[f64], s_next: &[f64]) -> Result<f64> {
    let k = g.len();
    check_len("intrinsic_reward next state", s.len(), s_next.len())?;
    if s.len() < k {
        check_len("intrinsic_reward state (goal coords)", k, s.len())?;
    }
    let sq: f64 = (0..k).map(|i| (s[i] + g[i] - s_next[i]).powi(2)).sum();
    Ok(-sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn no_motion_keeps_goal() {
        assert_eq!(goal_transition(&[1.0, 2.0, 9.0], &[3.0, 4.0], &[1.0, 2.0, 7.0]).unwrap(), vec![3.0, 4.0]);
    }

    #[test]
    fn substitution() {
        assert_eq!(goal_transition(&[0.0, 0.0], &[3.0, 4.0], &[1.0, 1.0]).unwrap(), vec![2.0, 3.0]);
    }

    #[test]
    fn reward_examples() {
        assert_eq!(intrinsic_reward(&[0.0, 0.0], &[3.0, 4.0], &[3.0, 4.0]).unwrap(), 0.0);
        assert_eq!(intrinsic_reward(&[0.0, 0.0], &[3.0, 4.0], &[0.0, 0.0]).unwrap(), -5.0);
    }

    #[test]
    fn sizing_errors() {
        assert!(goal_transition(&[0.0], &[1.0, 2.0], &[0.0]).is_err());
        assert!(intrinsic_reward(&[0.0, 0.0], &[1.0], &[0.0]).is_err());
    }

    proptest! {
        #[test]
        fn telescopes_over_random_walks(
            start in prop::collection::vec(-5.0f64..5.0, 4),
            g0 in prop::collection::vec(-3.0f64..3.0, 2),
            steps in prop::collection::vec(prop::collection::vec(-1.0f64..1.0, 4), 1..20),
        ) {
            let mut s = start.clone();
            let mut g = g0.clone();
            for delta in &steps {
                let next: Vec<f64> = s.iter().zip(delta).map(|(a, b)| a + b).collect();
                g = goal_transition(&s, &g, &next).unwrap();
                s = next;
            }
            for i in 0..2 {
                prop_assert!((g[i] - (start[i] + g0[i] - s[i])).abs() < 1e-9);
            }
        }

        #[test]
        fn reward_matches_norm_oracle(
            s in prop::collection::vec(-5.0f64..5.0, 3),
            g in prop::collection::vec(-5.0f64..5.0, 3),
            n in prop::collection::vec(-5.0f64..5.0, 3),
        ) {
            let r = intrinsic_reward(&s, &g, &n).unwrap();
            let d = [s[0] + g[0] - n[0], s[1] + g[1] - n[1], s[2] + g[2] - n[2]];
            let oracle = -d.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((r - oracle).abs() < 1e-12);
            prop_assert!(r <= 0.0);
        }
    }
}
