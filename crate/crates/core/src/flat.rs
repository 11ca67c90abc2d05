//! Flat, fixed-size observation buffers for foreign consumers.
//!
//! A batch of `n` observations is three contiguous arrays:
//! masks `n × H × W` bytes (0 or 1), state vectors `n × 31` (`rates` 3,
//! `motor_speeds` 4, `flight_plan` 24) and, for informed environments,
//! privileged vectors `n × 57` in [`PrivilegedObservation::to_vec`] order.

use crate::env::{Observation, PrivilegedObservation};
use crate::flightplan::FLIGHT_PLAN_LEN;

pub const STATE_LEN: usize = 3 + 4 + FLIGHT_PLAN_LEN;
pub const PRIVILEGED_LEN: usize = PrivilegedObservation::LEN;

pub fn state_vector(obs: &Observation) -> [f64; STATE_LEN] {
    let mut v = [0.0; STATE_LEN];
    v[..3].copy_from_slice(&obs.rates);
    v[3..7].copy_from_slice(&obs.motor_speeds);
    v[7..].copy_from_slice(&obs.flight_plan);
    v
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct FlatBatch {
    pub width: usize,
    pub height: usize,
    pub masks: Vec<u8>,
    pub states: Vec<f64>,
    /// Empty unless every observation in the batch carried privileged data.
    pub privileged: Vec<f64>,
}

impl FlatBatch {
    pub fn with_capacity(n: usize, width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            masks: Vec::with_capacity(n * width * height),
            states: Vec::with_capacity(n * STATE_LEN),
            privileged: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.states.len() / STATE_LEN
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Appends one observation. Panics if the mask size differs from the
    /// batch or privileged data is present for some entries but not others.
    pub fn push(&mut self, obs: &Observation, privileged: Option<&PrivilegedObservation>) {
        assert_eq!(
            (obs.mask.width(), obs.mask.height()),
            (self.width, self.height),
            "mask size differs from batch"
        );
        let n = self.len();
        match privileged {
            Some(p) => {
                assert_eq!(self.privileged.len(), n * PRIVILEGED_LEN, "mixed privileged batch");
                self.privileged.extend(p.to_vec());
            }
            None => assert!(self.privileged.is_empty(), "mixed privileged batch"),
        }
        self.masks.extend_from_slice(obs.mask.as_bytes());
        self.states.extend_from_slice(&state_vector(obs));
    }

    pub fn from_observations<'a>(
        width: usize,
        height: usize,
        items: impl IntoIterator<Item = (&'a Observation, Option<&'a PrivilegedObservation>)>,
    ) -> Self {
        let mut batch = Self::with_capacity(0, width, height);
        for (o, p) in items {
            batch.push(o, p);
        }
        batch
    }

    pub fn mask(&self, i: usize) -> &[u8] {
        let n = self.width * self.height;
        &self.masks[i * n..(i + 1) * n]
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * STATE_LEN..(i + 1) * STATE_LEN]
    }

    pub fn privileged(&self, i: usize) -> Option<&[f64]> {
        self.privileged.get(i * PRIVILEGED_LEN..(i + 1) * PRIVILEGED_LEN)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Action;
    use crate::env::{Env, EnvConfig};

    #[test]
    fn layout_matches_observation() {
        let mut env = Env::new(EnvConfig::default()).unwrap();
        let (o0, p0) = env.reset(4);
        let r = env.step(Action::uniform(0.5)).unwrap();
        let batch = FlatBatch::from_observations(64, 64, [(&o0, p0.as_ref()), (&r.obs, r.privileged.as_ref())]);
        assert_eq!(batch.len(), 2);
        assert_eq!(batch.mask(1), r.obs.mask.as_bytes());
        assert_eq!(&batch.state(1)[..3], &r.obs.rates);
        assert_eq!(&batch.state(1)[7..], &r.obs.flight_plan);
        assert_eq!(batch.privileged(0).unwrap(), p0.unwrap().to_vec().as_slice());
        assert_eq!(PRIVILEGED_LEN, 57);
        assert_eq!(STATE_LEN, 31);
    }
}
