//! Stepping many independent environments at once.
//!
//! With the `parallel` feature (default) [`Execution::Parallel`] spreads the
//! batch over the rayon pool; without it every call runs sequentially.
//! Results are identical either way since environments share nothing
//! mutable.

use std::sync::Arc;

use crate::dynamics::Action;
use crate::env::{Env, EnvConfig, EnvError, Observation, PrivilegedObservation, StepResult};
use crate::track::Track;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Execution {
    #[cfg_attr(feature = "parallel", default)]
    Parallel,
    #[cfg_attr(not(feature = "parallel"), default)]
    Sequential,
}

impl Execution {
    /// Whether this build can run batches in parallel.
    pub const fn parallel_available() -> bool {
        cfg!(feature = "parallel")
    }
}

type ResetOutput = (Observation, Option<PrivilegedObservation>);

/// Steps `envs[i]` with `actions[i]`. Per-environment errors are returned in
/// place; only a length mismatch fails the whole call.
pub fn batched_step(
    envs: &mut [Env],
    actions: &[Action],
    execution: Execution,
) -> Result<Vec<Result<StepResult, EnvError>>, EnvError> {
    if envs.len() != actions.len() {
        return Err(EnvError::BatchSize {
            envs: envs.len(),
            actions: actions.len(),
        });
    }
    Ok(map_zip(envs, actions, execution, |env, a| env.step(*a)))
}

/// Resets `envs[i]` with `seeds[i]`.
pub fn batched_reset(envs: &mut [Env], seeds: &[u64], execution: Execution) -> Result<Vec<ResetOutput>, EnvError> {
    if envs.len() != seeds.len() {
        return Err(EnvError::BatchSize {
            envs: envs.len(),
            actions: seeds.len(),
        });
    }
    Ok(map_zip(envs, seeds, execution, |env, s| env.reset(*s)))
}

#[cfg(feature = "parallel")]
fn map_zip<T: Sync, R: Send>(
    envs: &mut [Env],
    items: &[T],
    execution: Execution,
    f: impl Fn(&mut Env, &T) -> R + Sync + Send,
) -> Vec<R> {
    use rayon::prelude::*;
    match execution {
        Execution::Parallel => envs.par_iter_mut().zip(items).map(|(e, x)| f(e, x)).collect(),
        Execution::Sequential => envs.iter_mut().zip(items).map(|(e, x)| f(e, x)).collect(),
    }
}

#[cfg(not(feature = "parallel"))]
fn map_zip<T, R>(envs: &mut [Env], items: &[T], _execution: Execution, f: impl Fn(&mut Env, &T) -> R) -> Vec<R> {
    envs.iter_mut().zip(items).map(|(e, x)| f(e, x)).collect()
}

/// A fixed-size batch sharing one parsed track.
#[derive(Clone, Debug)]
pub struct BatchEnv {
    envs: Vec<Env>,
    execution: Execution,
}

impl BatchEnv {
    pub fn new(config: EnvConfig, size: usize) -> Result<Self, EnvError> {
        let track = Arc::new(config.load_track()?);
        Self::with_track(config, track, size)
    }

    pub fn with_track(config: EnvConfig, track: Arc<Track>, size: usize) -> Result<Self, EnvError> {
        let proto = Env::with_track(config, track)?;
        Ok(Self {
            envs: vec![proto; size],
            execution: Execution::default(),
        })
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn envs(&self) -> &[Env] {
        &self.envs
    }

    /// Resets environment `i` with seed `base_seed + i`.
    pub fn reset(&mut self, base_seed: u64) -> Vec<ResetOutput> {
        let seeds: Vec<u64> = (0..self.envs.len() as u64).map(|i| base_seed.wrapping_add(i)).collect();
        batched_reset(&mut self.envs, &seeds, self.execution).expect("one seed per environment")
    }

    pub fn reset_one(&mut self, i: usize, seed: u64) -> ResetOutput {
        self.envs[i].reset(seed)
    }

    pub fn step(&mut self, actions: &[Action]) -> Result<Vec<Result<StepResult, EnvError>>, EnvError> {
        batched_step(&mut self.envs, actions, self.execution)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_mismatch_is_an_error() {
        let mut b = BatchEnv::new(EnvConfig::default(), 3).unwrap();
        b.reset(0);
        match b.step(&[Action::uniform(0.5); 2]) {
            Err(EnvError::BatchSize { envs: 3, actions: 2 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn parallel_matches_sequential() {
        let mut a = BatchEnv::new(EnvConfig::default(), 8)
            .unwrap()
            .with_execution(Execution::Parallel);
        let mut b = BatchEnv::new(EnvConfig::default(), 8)
            .unwrap()
            .with_execution(Execution::Sequential);
        assert_eq!(a.reset(100), b.reset(100));
        for k in 0..20 {
            let actions: Vec<Action> = (0..8)
                .map(|i| Action::uniform(0.3 + 0.02 * ((i + k) % 9) as f64))
                .collect();
            let ra: Vec<_> = a.step(&actions).unwrap().into_iter().map(|r| r.ok()).collect();
            let rb: Vec<_> = b.step(&actions).unwrap().into_iter().map(|r| r.ok()).collect();
            assert_eq!(ra, rb);
        }
    }

    #[test]
    fn errors_stay_per_environment() {
        let mut b = BatchEnv::new(EnvConfig::default(), 2).unwrap();
        b.reset_one(0, 1);
        let out = b.step(&[Action::uniform(0.5); 2]).unwrap();
        assert!(out[0].is_ok());
        assert!(matches!(out[1], Err(EnvError::NotReset)));
    }
}
