//! Last-switch-dependent state.
//!
//! Every arm carries a signed clock: `-r` after `r` consecutive plays, `+r`
//! after `r` rounds of dormancy. Clocks are never zero and saturate at
//! `±tau_max`. After at least one play exactly one clock is negative.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default clock cap.
pub const DEFAULT_TAU_MAX: u32 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmId(pub usize);

impl ArmId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LsdState {
    taus: Vec<i32>,
    tau_max: u32,
}

impl LsdState {
    /// Every arm maximally rested.
    pub fn initial(arms: usize, tau_max: u32) -> Result<Self> {
        if arms == 0 {
            return Err(Error::InvalidParameter("arm count must be >= 1".into()));
        }
        if tau_max == 0 {
            return Err(Error::InvalidParameter("tau_max must be >= 1".into()));
        }
        Ok(LsdState {
            taus: vec![tau_max as i32; arms],
            tau_max,
        })
    }

    /// Builds a state from explicit clocks, validating range and sign.
    pub fn from_taus(taus: Vec<i32>, tau_max: u32) -> Result<Self> {
        if taus.is_empty() {
            return Err(Error::InvalidParameter("arm count must be >= 1".into()));
        }
        if tau_max == 0 {
            return Err(Error::InvalidParameter("tau_max must be >= 1".into()));
        }
        if let Some(bad) = taus
            .iter()
            .find(|t| **t == 0 || t.unsigned_abs() > tau_max)
        {
            return Err(Error::InvalidParameter(format!(
                "clock {bad} outside ±1..=±{tau_max}"
            )));
        }
        Ok(LsdState { taus, tau_max })
    }

    pub fn arms(&self) -> usize {
        self.taus.len()
    }

    pub fn tau_max(&self) -> u32 {
        self.tau_max
    }

    pub fn taus(&self) -> &[i32] {
        &self.taus
    }

    pub fn tau(&self, arm: ArmId) -> Result<i32> {
        self.taus.get(arm.0).copied().ok_or(Error::InvalidArm {
            arm: arm.0,
            arms: self.taus.len(),
        })
    }

    /// The known transition: the played arm switches in (or stays in), all
    /// others switch out (or keep resting). Returns a new state.
    pub fn advance(&self, played: ArmId) -> Result<LsdState> {
        self.check(played)?;
        let cap = self.tau_max as i32;
        let taus = self
            .taus
            .iter()
            .enumerate()
            .map(|(i, &t)| {
                if i == played.0 {
                    if t > 0 {
                        -1
                    } else {
                        (t - 1).max(-cap)
                    }
                } else if t < 0 {
                    1
                } else {
                    (t + 1).min(cap)
                }
            })
            .collect();
        Ok(LsdState {
            taus,
            tau_max: self.tau_max,
        })
    }

    /// The reward-relevant part of the state for `arm`. All global states
    /// that agree on this pair are ghosts of one another.
    pub fn reward_key(&self, arm: ArmId) -> Result<(ArmId, i32)> {
        Ok((arm, self.tau(arm)?))
    }

    fn check(&self, arm: ArmId) -> Result<()> {
        if arm.0 < self.taus.len() {
            Ok(())
        } else {
            Err(Error::InvalidArm {
                arm: arm.0,
                arms: self.taus.len(),
            })
        }
    }
}

/// Maps a clock to a dense index in `0..2*clip` after clipping its magnitude
/// to `clip`: `-clip..=-1` map to `0..clip`, `1..=clip` to `clip..2*clip`.
pub fn clipped_tau_index(tau: i32, clip: u32) -> usize {
    debug_assert!(tau != 0);
    let c = clip as i32;
    let t = tau.clamp(-c, c);
    if t < 0 {
        (t + c) as usize
    } else {
        (t + c - 1) as usize
    }
}

/// Inverse of [`clipped_tau_index`].
pub fn tau_from_index(index: usize, clip: u32) -> i32 {
    let c = clip as i32;
    let i = index as i32;
    if i < c {
        i - c
    } else {
        i - c + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(t: &[i32], cap: u32) -> LsdState {
        LsdState::from_taus(t.to_vec(), cap).unwrap()
    }

    #[test]
    fn initial_state_is_fully_rested() {
        assert_eq!(LsdState::initial(3, 6).unwrap().taus(), &[6, 6, 6]);
        assert_eq!(LsdState::initial(1, 1).unwrap().taus(), &[1]);
        assert_eq!(LsdState::initial(2, 4).unwrap().taus(), &[4, 4]);
        assert!(matches!(
            LsdState::initial(0, 6),
            Err(Error::InvalidParameter(_))
        ));
        assert!(matches!(
            LsdState::initial(3, 0),
            Err(Error::InvalidParameter(_))
        ));
    }

    #[test]
    fn advance_examples() {
        let s = st(&[3, 5], 6);
        assert_eq!(s.advance(ArmId(0)).unwrap().taus(), &[-1, 6]);
        let s = st(&[-2, 4], 6);
        assert_eq!(s.advance(ArmId(0)).unwrap().taus(), &[-3, 5]);
        assert_eq!(s.advance(ArmId(1)).unwrap().taus(), &[1, -1]);
        let s = st(&[6, 6], 6);
        assert_eq!(s.advance(ArmId(0)).unwrap().taus(), &[-1, 6]);
        // input untouched
        assert_eq!(s.taus(), &[6, 6]);
    }

    #[test]
    fn advance_rejects_bad_arm() {
        let s = st(&[1, 1], 2);
        assert!(matches!(
            s.advance(ArmId(2)),
            Err(Error::InvalidArm { arm: 2, arms: 2 })
        ));
    }

    #[test]
    fn negative_clock_saturates() {
        let mut s = LsdState::initial(2, 2).unwrap();
        for _ in 0..5 {
            s = s.advance(ArmId(1)).unwrap();
        }
        assert_eq!(s.taus(), &[2, -2]);
    }

    #[test]
    fn reward_key_examples() {
        let s = st(&[-2, 4], 6);
        assert_eq!(s.reward_key(ArmId(0)).unwrap(), (ArmId(0), -2));
        assert_eq!(s.reward_key(ArmId(1)).unwrap(), (ArmId(1), 4));
        let s = st(&[1, 1, -3], 6);
        assert_eq!(s.reward_key(ArmId(2)).unwrap(), (ArmId(2), -3));
        assert!(s.reward_key(ArmId(3)).is_err());
    }

    #[test]
    fn from_taus_validates() {
        assert!(LsdState::from_taus(vec![0, 1], 3).is_err());
        assert!(LsdState::from_taus(vec![4, 1], 3).is_err());
        assert!(LsdState::from_taus(vec![], 3).is_err());
    }

    #[test]
    fn tau_index_roundtrip() {
        for clip in 1..5u32 {
            let c = clip as i32;
            let mut seen = Vec::new();
            for tau in (-c..=c).filter(|t| *t != 0) {
                let i = clipped_tau_index(tau, clip);
                assert_eq!(tau_from_index(i, clip), tau);
                seen.push(i);
            }
            assert_eq!(seen, (0..2 * clip as usize).collect::<Vec<_>>());
        }
        assert_eq!(clipped_tau_index(-6, 2), 0);
        assert_eq!(clipped_tau_index(6, 2), 3);
    }

    proptest! {
        #[test]
        fn exactly_one_negative_after_play(
            k in 1usize..=8,
            cap in 1u32..=7,
            plays in proptest::collection::vec(0usize..8, 1..200),
        ) {
            let mut s = LsdState::initial(k, cap).unwrap();
            for p in plays {
                s = s.advance(ArmId(p % k)).unwrap();
                prop_assert_eq!(s.taus().iter().filter(|t| **t < 0).count(), 1);
                prop_assert!(s.taus().iter().all(|t| *t != 0 && t.unsigned_abs() <= cap));
            }
        }

        #[test]
        fn ghost_keys_agree_on_shared_clock(
            a in proptest::collection::vec(1i32..=6, 4),
            b in proptest::collection::vec(1i32..=6, 4),
            arm in 0usize..4,
        ) {
            let mut b = b;
            b[arm] = a[arm];
            let sa = st(&a, 6);
            let sb = st(&b, 6);
            prop_assert_eq!(sa.reward_key(ArmId(arm)).unwrap(), sb.reward_key(ArmId(arm)).unwrap());
        }
    }
}
