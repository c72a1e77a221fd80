//! Many independent runs of one prepared setup.
//!
//! With the `parallel` feature the runs are spread over a rayon pool; without
//! it they run one after another. Both paths return results in input order and
//! produce identical output for identical jobs.

use crate::attack_lab::AttackScenario;
use crate::error::Result;
use crate::sim_engine::{run, Prepared, SimConfig, SimOutput};

#[derive(Clone, Debug)]
pub struct Job {
    pub scenario: AttackScenario,
    pub config: SimConfig,
}

impl Job {
    pub fn new(scenario: AttackScenario, config: SimConfig) -> Self {
        Self { scenario, config }
    }
}

/// One job per seed, all sharing the scenario and the remaining settings.
pub fn seeded_jobs(scenario: &AttackScenario, base: &SimConfig, seeds: impl IntoIterator<Item = u64>) -> Vec<Job> {
    seeds
        .into_iter()
        .map(|seed| Job::new(scenario.clone(), SimConfig { seed, ..base.clone() }))
        .collect()
}

pub fn run_many_sequential(prep: &Prepared, jobs: &[Job]) -> Vec<Result<SimOutput>> {
    jobs.iter().map(|j| run(prep, &j.scenario, &j.config)).collect()
}

#[cfg(feature = "parallel")]
pub fn run_many_parallel(prep: &Prepared, jobs: &[Job]) -> Vec<Result<SimOutput>> {
    use rayon::prelude::*;
    jobs.par_iter().map(|j| run(prep, &j.scenario, &j.config)).collect()
}

/// Parallel when the feature is on, sequential otherwise.
pub fn run_many(prep: &Prepared, jobs: &[Job]) -> Vec<Result<SimOutput>> {
    #[cfg(feature = "parallel")]
    {
        run_many_parallel(prep, jobs)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_many_sequential(prep, jobs)
    }
}
