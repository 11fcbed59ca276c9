//! Monte Carlo simulation of single experimental runs: stroboscopic
//! two-detector measurements applied to the evolving state, with the click
//! counter recorded per run.
//!
//! Every trajectory owns an independent, counter-derived random stream, so
//! ensembles are bit-reproducible under any degree of parallelism and any
//! completion order.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rayon::prelude::*;

use crate::detection::{assemble, DetectionConfig, DetectionRun};
use crate::error::{Error, Result};

/// Projected-norm floor; a branch whose post-measurement norm falls below
/// this was numerically impossible to take.
pub const IMPOSSIBLE_BRANCH_NORM: f64 = 1e-14;

/// Outcome of one simulated run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrajectoryRecord {
    pub index: usize,
    /// Random stream identifier derived from (master seed, index).
    pub stream: u64,
    /// Number of simultaneous clicks observed in `steps` measurements.
    pub clicks: u64,
    /// 1-based measurement steps at which both detectors clicked.
    pub click_steps: Vec<usize>,
    /// Post-renormalization norm after the final step, scaled by 1e12 and
    /// rounded; kept integral so records stay comparable bit-for-bit.
    pub final_norm_femto: u64,
}

impl TrajectoryRecord {
    pub fn final_norm(&self) -> f64 {
        self.final_norm_femto as f64 / 1e12
    }
}

/// Drive one trajectory from an assembled run with the supplied RNG.
///
/// Per step: evolve by τ, compute the click probability a = ⟨n̂_p n̂_q⟩,
/// draw r uniform on [0, 1), click (project and count) when r ≤ a, else
/// project on the complement; renormalize either way.
pub fn run_trajectory_with_rng<R: RngCore>(
    run: &DetectionRun,
    rng: &mut R,
    index: usize,
) -> Result<TrajectoryRecord> {
    let mut psi = run.initial.clone();
    let mut clicks = 0u64;
    let mut click_steps = Vec::new();
    let mut norm = 1.0f64;
    for step in 1..=run.config.steps {
        run.plan.apply(&run.hamiltonian, &mut psi)?;
        let a = psi.masked_norm_sqr(&run.p_mask);
        let r: f64 = rng.gen();
        if r <= a {
            psi.apply_mask(&run.p_mask);
            clicks += 1;
            click_steps.push(step);
        } else {
            psi.apply_mask(&run.q_mask);
        }
        norm = psi.norm();
        if norm < IMPOSSIBLE_BRANCH_NORM {
            return Err(Error::ImpossibleBranch { index, step, norm });
        }
        psi.scale((1.0 / norm).into());
        norm = psi.norm();
    }
    Ok(TrajectoryRecord {
        index,
        stream: index as u64,
        clicks,
        click_steps,
        final_norm_femto: (norm * 1e12).round() as u64,
    })
}

/// One trajectory on an assembled run, stream-derived from
/// (master seed, index).
pub fn run_trajectory_on(
    run: &DetectionRun,
    master_seed: u64,
    index: usize,
) -> Result<TrajectoryRecord> {
    let mut rng = ChaCha12Rng::seed_from_u64(master_seed);
    rng.set_stream(index as u64);
    run_trajectory_with_rng(run, &mut rng, index)
}

/// Assemble a config and simulate a single run (trajectory index 0).
pub fn run_trajectory(config: &DetectionConfig, master_seed: u64) -> Result<TrajectoryRecord> {
    let run = assemble(config)?;
    run_trajectory_on(&run, master_seed, 0)
}

/// Click statistics over the completed trajectories of an ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub completed: usize,
    pub aborted: usize,
    pub mean_clicks: f64,
    pub min_clicks: u64,
    pub max_clicks: u64,
    /// Empirical probability of a click-free run, the trajectory-level
    /// estimate of the no-detection probability.
    pub p_no_click: f64,
}

/// Independent, reproducible trajectories; per-trajectory aborts are
/// reported in place without failing the batch.
pub fn trajectory_ensemble(
    config: &DetectionConfig,
    n_traj: usize,
    master_seed: u64,
) -> Result<(Vec<Result<TrajectoryRecord>>, EnsembleSummary)> {
    if n_traj == 0 {
        return Err(Error::Validation("ensemble needs at least one trajectory".into()));
    }
    let run = assemble(config)?;
    let records: Vec<Result<TrajectoryRecord>> = (0..n_traj)
        .into_par_iter()
        .map(|index| run_trajectory_on(&run, master_seed, index))
        .collect();
    let summary = summarize(&records);
    Ok((records, summary))
}

pub fn summarize(records: &[Result<TrajectoryRecord>]) -> EnsembleSummary {
    let mut completed = 0usize;
    let mut aborted = 0usize;
    let mut total = 0u64;
    let mut min_clicks = u64::MAX;
    let mut max_clicks = 0u64;
    let mut silent = 0usize;
    for rec in records {
        match rec {
            Ok(r) => {
                completed += 1;
                total += r.clicks;
                min_clicks = min_clicks.min(r.clicks);
                max_clicks = max_clicks.max(r.clicks);
                if r.clicks == 0 {
                    silent += 1;
                }
            }
            Err(_) => aborted += 1,
        }
    }
    EnsembleSummary {
        completed,
        aborted,
        mean_clicks: if completed > 0 {
            total as f64 / completed as f64
        } else {
            f64::NAN
        },
        min_clicks: if completed > 0 { min_clicks } else { 0 },
        max_clicks,
        p_no_click: if completed > 0 {
            silent as f64 / completed as f64
        } else {
            f64::NAN
        },
    }
}
