//! Heaviest-chain rule: maximal cumulative difficulty, first-seen on ties.

use crate::target::Difficulty;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TipCandidate {
    pub total_weight: Difficulty,
    /// Arrival order; lower is earlier.
    pub first_seen: u64,
}

/// Index of the chosen tip.
pub fn fork_choice(tips: &[TipCandidate]) -> Option<usize> {
    tips.iter()
        .enumerate()
        .max_by(|(_, a), (_, b)| a.total_weight.cmp(&b.total_weight).then(b.first_seen.cmp(&a.first_seen)))
        .map(|(i, _)| i)
}

/// Whether `candidate` should replace `current` as the tip.
pub fn prefers(candidate: &TipCandidate, current: &TipCandidate) -> bool {
    candidate.total_weight > current.total_weight
        || (candidate.total_weight == current.total_weight && candidate.first_seen < current.first_seen)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(w: u64, s: u64) -> TipCandidate {
        TipCandidate { total_weight: Difficulty::from_integer(w), first_seen: s }
    }

    #[test]
    fn heavier_beats_longer() {
        // 3 blocks of D = 2 against 5 blocks of D = 1
        assert_eq!(fork_choice(&[t(5, 0), t(6, 1)]), Some(1));
    }

    #[test]
    fn ties_go_to_first_seen() {
        assert_eq!(fork_choice(&[t(6, 3), t(6, 1), t(6, 2)]), Some(1));
        assert!(!prefers(&t(6, 5), &t(6, 1)));
        assert_eq!(fork_choice(&[]), None);
    }
}
