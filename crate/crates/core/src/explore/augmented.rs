use serde::{Deserialize, Serialize};

/// A state-action `(s, a)` stored in a pair slot.
pub type StateAction = (usize, usize);

/// State `(i, v, s)` of the second-order augmented MDP. `stage` is `i`:
/// 1 with no slot filled, 2 with `v[0]` filled, 3 with both filled.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AugmentedState {
    pub stage: u8,
    pub v: [Option<StateAction>; 2],
    pub s: usize,
}

impl AugmentedState {
    pub fn initial(s: usize) -> Self {
        AugmentedState { stage: 1, v: [None, None], s }
    }

    /// Stage and slot occupancy agree.
    pub fn is_consistent(&self) -> bool {
        match self.stage {
            1 => self.v == [None, None],
            2 => self.v[0].is_some() && self.v[1].is_none(),
            3 => self.v[0].is_some() && self.v[1].is_some(),
            _ => false,
        }
    }
}

/// Transition under augmented action `(a, z)` to the sampled successor
/// `s_next`. Selecting (`z = 1`) before stage 3 stores `(s, a)` in slot `i`
/// and advances the stage; otherwise only `s` changes.
pub fn augmented_transition(aug: AugmentedState, a: usize, z: u8, s_next: usize) -> AugmentedState {
    let mut next = aug;
    if z == 1 && aug.stage < 3 {
        next.v[(aug.stage - 1) as usize] = Some((aug.s, a));
        next.stage += 1;
    }
    next.s = s_next;
    next
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn selecting_at_stage_one_fills_first_slot() {
        let next = augmented_transition(AugmentedState::initial(4), 1, 1, 2);
        assert_eq!(next, AugmentedState { stage: 2, v: [Some((4, 1)), None], s: 2 });
        assert!(next.is_consistent());
    }

    #[test]
    fn skipping_freezes_slots() {
        let aug = AugmentedState { stage: 2, v: [Some((0, 1)), None], s: 3 };
        assert_eq!(
            augmented_transition(aug, 0, 0, 1),
            AugmentedState { stage: 2, v: [Some((0, 1)), None], s: 1 }
        );
    }

    #[test]
    fn stage_three_absorbs() {
        let aug = AugmentedState { stage: 3, v: [Some((0, 1)), Some((2, 0))], s: 3 };
        assert_eq!(
            augmented_transition(aug, 1, 1, 0),
            AugmentedState { stage: 3, v: [Some((0, 1)), Some((2, 0))], s: 0 }
        );
    }
}
