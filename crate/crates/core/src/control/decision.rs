use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminateReason {
    QualityMet,
    MaxLevel,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Terminate(TerminateReason),
    Continue(usize),
}

impl Decision {
    pub fn is_terminal(self) -> bool {
        matches!(self, Decision::Terminate(_))
    }
}

/// Threshold rule: stop once `q ≥ ε` or the last level has arrived.
///
/// Thresholds above 1 are allowed and force full transmission.
pub fn evaluate(q: f64, epsilon: f64, level: usize, k_levels: usize) -> Decision {
    debug_assert!((1..=k_levels).contains(&level), "level {level} outside 1..={k_levels}");
    if q >= epsilon {
        Decision::Terminate(TerminateReason::QualityMet)
    } else if level >= k_levels {
        Decision::Terminate(TerminateReason::MaxLevel)
    } else {
        Decision::Continue(level + 1)
    }
}

/// Terminal level of a session given the quality each level would produce:
/// the first `ℓ ≥ ℓ₀` whose quality meets `ε`, else `K`.
pub fn predict_terminal_level(quality_by_level: &[f64], epsilon: f64, initial_level: usize) -> usize {
    let k = quality_by_level.len();
    (initial_level..=k)
        .find(|&l| quality_by_level[l - 1] >= epsilon)
        .unwrap_or(k)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rule_examples() {
        assert_eq!(evaluate(0.3, 0.0, 1, 4), Decision::Terminate(TerminateReason::QualityMet));
        assert_eq!(evaluate(0.9, 1.1, 4, 4), Decision::Terminate(TerminateReason::MaxLevel));
        assert_eq!(evaluate(0.5, 0.8, 2, 4), Decision::Continue(3));
        assert_eq!(evaluate(0.8, 0.8, 2, 4), Decision::Terminate(TerminateReason::QualityMet));
    }

    #[test]
    fn prediction() {
        let q = [0.2, 0.5, 0.7, 0.9];
        assert_eq!(predict_terminal_level(&q, 0.0, 1), 1);
        assert_eq!(predict_terminal_level(&q, 0.0, 3), 3);
        assert_eq!(predict_terminal_level(&q, 0.6, 1), 3);
        assert_eq!(predict_terminal_level(&q, 1.1, 2), 4);
    }
}
