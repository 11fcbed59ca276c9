//! The measured-evolution pipeline: repeated projective no-detection cycles
//! and the survival series they generate, measurement-free dynamics of
//! diagonal observables, single-measurement detector statistics, and the
//! threshold crossing of a survival sweep.
//!
//! One cycle applies M_Q(τ) = Q e^{-iHτ} Q. The survival probability after
//! k cycles is the squared norm of the unnormalized repeatedly-projected
//! state; it is accumulated in log space so runs deep below the f64
//! underflow floor stay exact.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::fock::FockSector;
use crate::operators::{
    build_hamiltonian, observable_diag, projector_mask, DiagonalMask, HamiltonianParams,
    Observable, SparseOperator,
};
use crate::propagator::{make_plan, ChebyshevPlan};
use crate::spectra::{diagonalize_sector, filtered_initial_state, FilterSpec, SectorEigensystem};
use crate::state::StateVector;

/// Tolerance used when the propagator tolerance is not set explicitly.
pub const DEFAULT_CHEB_TOL: f64 = 1e-12;

/// Initial-state weight on the signal subspace above which a series run is
/// rejected.
pub const SIGNAL_WEIGHT_REJECT: f64 = 1e-12;

/// Full description of one measured-evolution run at half filling.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionConfig {
    pub n_sites: usize,
    pub params: HamiltonianParams,
    /// Detector sites; right half, `1 <= p < q <= N/2`.
    pub detector_p: i64,
    pub detector_q: i64,
    /// Stroboscopic interval in units of 1/J.
    pub tau: f64,
    /// Number of evolve-and-project cycles.
    pub steps: usize,
    pub filter: FilterSpec,
    pub cheb_tol: f64,
}

impl DetectionConfig {
    /// Paper-style defaults for a given chain length and interaction.
    pub fn new(n_sites: usize, interaction: f64) -> Self {
        Self {
            n_sites,
            params: HamiltonianParams {
                hopping: 1.0,
                interaction,
                impurity: 0.5,
                boundary_hop: true,
            },
            detector_p: 3,
            detector_q: 5,
            tau: 2.0,
            steps: 1000,
            filter: FilterSpec {
                energy: crate::spectra::FilterEnergy::Ground,
                sigma: 0.1,
                seed: 42,
            },
            cheb_tol: DEFAULT_CHEB_TOL,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.filter.validate()?;
        if self.n_sites % 2 != 0 {
            return Err(Error::OddSiteCount(self.n_sites));
        }
        let half = self.n_sites as i64 / 2;
        if self.detector_p < 1 || self.detector_q <= self.detector_p || self.detector_q > half {
            return Err(Error::Validation(format!(
                "detector sites must satisfy 1 <= p < q <= N/2, got p = {}, q = {} with N = {}",
                self.detector_p, self.detector_q, self.n_sites
            )));
        }
        if !(self.tau > 0.0) || !self.tau.is_finite() {
            return Err(Error::Validation(format!(
                "stroboscopic interval must be positive, got {}",
                self.tau
            )));
        }
        if self.steps == 0 {
            return Err(Error::Validation("step count must be at least 1".into()));
        }
        if !(self.cheb_tol > 0.0) {
            return Err(Error::Validation(
                "propagator tolerance must be positive".into(),
            ));
        }
        let dim = crate::fock::binomial(self.n_sites, self.n_sites / 2);
        if dim > crate::fock::DEFAULT_DIM_BUDGET as u128 {
            return Err(Error::DimensionBudget {
                dim,
                budget: crate::fock::DEFAULT_DIM_BUDGET,
            });
        }
        Ok(())
    }
}

/// Everything a run needs, assembled once and shared read-only afterwards.
pub struct DetectionRun {
    pub config: DetectionConfig,
    pub sector: FockSector,
    pub hamiltonian: SparseOperator,
    pub plan: ChebyshevPlan,
    pub p_mask: DiagonalMask,
    pub q_mask: DiagonalMask,
    pub r1: SectorEigensystem,
    pub initial: StateVector,
    /// Resolved filter center energy.
    pub filter_energy: f64,
}

/// Build sector, operators, propagation plan and the filtered initial state
/// for a config.
pub fn assemble(config: &DetectionConfig) -> Result<DetectionRun> {
    config.validate()?;
    let sector = FockSector::half_filling(config.n_sites)?;
    let rc = sector.right_count();
    let hamiltonian = build_hamiltonian(&sector, &config.params)?;
    let h0 = build_hamiltonian(&sector, &config.params.without_boundary_hop())?;
    let r1 = diagonalize_sector(&h0, &rc, 1)?;
    let initial = filtered_initial_state(&r1, &config.filter, &sector)?;
    let filter_energy = config.filter.resolve_energy(&r1);
    let p_mask = projector_mask(&sector, &[config.detector_p, config.detector_q])?;
    let q_mask = p_mask.complement();
    let plan = make_plan(&hamiltonian, config.tau, config.cheb_tol)?;
    Ok(DetectionRun {
        config: config.clone(),
        sector,
        hamiltonian,
        plan,
        p_mask,
        q_mask,
        r1,
        initial,
        filter_energy,
    })
}

/// One measured step: Q e^{-iHτ} Q ψ, unnormalized.
pub fn apply_mq(
    plan: &ChebyshevPlan,
    h: &SparseOperator,
    q_mask: &DiagonalMask,
    psi: &StateVector,
) -> Result<StateVector> {
    let mut out = psi.clone();
    out.apply_mask(q_mask);
    plan.apply(h, &mut out)?;
    out.apply_mask(q_mask);
    Ok(out)
}

/// Survival series of repeated measured steps.
#[derive(Debug, Clone)]
pub struct DetectionSeries {
    /// ln R_k for k = 0..=n; exact even where R_k underflows f64.
    pub log_r: Vec<f64>,
    /// Per-cycle survival factors R_k / R_{k-1}, k = 1..=n.
    pub step_norms: Vec<f64>,
}

impl DetectionSeries {
    pub fn len(&self) -> usize {
        self.log_r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_r.is_empty()
    }

    /// R_k in linear form (underflows to 0 below ~1e-308; `log_r` stays exact).
    pub fn r(&self, k: usize) -> f64 {
        self.log_r[k].exp()
    }

    /// Probability of at least one detection within k steps, T_k = 1 − R_k.
    pub fn t(&self, k: usize) -> f64 {
        1.0 - self.r(k)
    }

    pub fn r_final(&self) -> f64 {
        self.r(self.len() - 1)
    }

    pub fn log10_r(&self, k: usize) -> f64 {
        self.log_r[k] / std::f64::consts::LN_10
    }

    pub fn log10_r_final(&self) -> f64 {
        self.log10_r(self.len() - 1)
    }
}

/// Drive `steps` measured cycles from an explicit initial state. The state
/// must live in the Q subspace up to [`SIGNAL_WEIGHT_REJECT`].
pub fn survival_series(
    plan: &ChebyshevPlan,
    h: &SparseOperator,
    q_mask: &DiagonalMask,
    psi0: &StateVector,
    steps: usize,
) -> Result<DetectionSeries> {
    let total = psi0.norm_sqr();
    let kept = psi0.masked_norm_sqr(q_mask);
    let weight = total - kept;
    if weight > SIGNAL_WEIGHT_REJECT {
        return Err(Error::SignalComponentInInitialState { weight });
    }
    let mut psi = psi0.clone();
    psi.apply_mask(q_mask);
    let r0 = psi.norm_sqr();
    let mut log_r = Vec::with_capacity(steps + 1);
    let mut step_norms = Vec::with_capacity(steps);
    log_r.push(r0.ln());
    psi.scale((1.0 / r0.sqrt()).into());
    let mut dead = false;
    for _ in 0..steps {
        if dead {
            step_norms.push(0.0);
            log_r.push(f64::NEG_INFINITY);
            continue;
        }
        plan.apply(h, &mut psi)?;
        psi.apply_mask(q_mask);
        let s = psi.norm_sqr();
        step_norms.push(s);
        if s <= 0.0 {
            dead = true;
            log_r.push(f64::NEG_INFINITY);
            continue;
        }
        log_r.push(log_r.last().unwrap() + s.ln());
        psi.scale((1.0 / s.sqrt()).into());
    }
    Ok(DetectionSeries { log_r, step_norms })
}

/// The no-detection series for a config: assemble and run all cycles in one
/// pass.
pub fn no_detection_series(config: &DetectionConfig) -> Result<DetectionSeries> {
    let run = assemble(config)?;
    survival_series(
        &run.plan,
        &run.hamiltonian,
        &run.q_mask,
        &run.initial,
        config.steps,
    )
}

/// Diagonal observables sampled along measurement-free evolution.
#[derive(Debug, Clone)]
pub struct FreeDynamics {
    pub times: Vec<f64>,
    /// ⟨N̂_R⟩(t)
    pub right_count: Vec<f64>,
    /// ⟨n̂_ℓ⟩(t) for each requested site, in request order.
    pub site_occupation: Vec<Vec<f64>>,
    /// ⟨n̂_p n̂_q⟩(t) for the configured detector pair.
    pub joint_detector: Vec<f64>,
}

/// Evolve the configured initial state without any measurement and record
/// diagonal observables at the requested times (ascending, t >= 0).
pub fn free_dynamics(
    config: &DetectionConfig,
    times: &[f64],
    sites: &[i64],
) -> Result<FreeDynamics> {
    if times.is_empty() {
        return Err(Error::Validation("no sample times given".into()));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) || times[0] < 0.0 {
        return Err(Error::Validation(
            "sample times must be ascending and nonnegative".into(),
        ));
    }
    let run = assemble(config)?;
    let nr_diag = observable_diag(&run.sector, Observable::RightHalfCount)?;
    let site_diags: Vec<Vec<f64>> = sites
        .iter()
        .map(|&s| observable_diag(&run.sector, Observable::SiteOccupation(s)))
        .collect::<Result<_>>()?;
    let p_diag = run.p_mask.as_diagonal();

    let mut plans: BTreeMap<u64, ChebyshevPlan> = BTreeMap::new();
    let mut psi = run.initial.clone();
    let mut t_now = 0.0;
    let mut out = FreeDynamics {
        times: times.to_vec(),
        right_count: Vec::with_capacity(times.len()),
        site_occupation: vec![Vec::with_capacity(times.len()); sites.len()],
        joint_detector: Vec::with_capacity(times.len()),
    };
    for &t in times {
        let dt = t - t_now;
        if dt > 0.0 {
            let plan = match plans.entry(dt.to_bits()) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert(make_plan(&run.hamiltonian, dt, config.cheb_tol)?)
                }
            };
            plan.apply(&run.hamiltonian, &mut psi)?;
            t_now = t;
        }
        out.right_count.push(psi.expectation_diag(&nr_diag));
        for (col, diag) in out.site_occupation.iter_mut().zip(&site_diags) {
            col.push(psi.expectation_diag(diag));
        }
        out.joint_detector.push(psi.expectation_diag(&p_diag));
    }
    Ok(out)
}

/// ⟨n̂_p n̂_q⟩ after free evolution to time t: the chance that a single
/// simultaneous measurement at t sees the signal.
pub fn single_shot_probability(config: &DetectionConfig, t: f64) -> Result<f64> {
    if t < 0.0 {
        return Err(Error::Validation("time must be nonnegative".into()));
    }
    if t == 0.0 {
        let run = assemble(config)?;
        return Ok(run.initial.masked_norm_sqr(&run.p_mask));
    }
    let dyn_out = free_dynamics(config, &[t], &[])?;
    Ok(dyn_out.joint_detector[0])
}

/// Smallest Δ on an ascending grid whose final survival exceeds `epsilon`;
/// `None` when no grid point qualifies.
pub fn transition_point(sweep: &[(f64, f64)], epsilon: f64) -> Result<Option<f64>> {
    if sweep.is_empty() {
        return Err(Error::Validation("empty sweep".into()));
    }
    if sweep.windows(2).any(|w| w[1].0 <= w[0].0) {
        return Err(Error::Validation(
            "sweep grid must be strictly ascending in Δ".into(),
        ));
    }
    Ok(sweep
        .iter()
        .find(|&&(_, r_n)| r_n > epsilon)
        .map(|&(delta, _)| delta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockSector;
    use crate::propagator::evolve;
    use crate::spectra::FilterEnergy;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn toy_pieces(tau: f64) -> (FockSector, SparseOperator, ChebyshevPlan, DiagonalMask) {
        // two sites, one particle, detector on the right site
        let sector = FockSector::build(2, 1).unwrap();
        let h = build_hamiltonian(
            &sector,
            &HamiltonianParams {
                hopping: 1.0,
                interaction: 0.0,
                impurity: 0.0,
                boundary_hop: true,
            },
        )
        .unwrap();
        let plan = make_plan(&h, tau, 1e-12).unwrap();
        let q = projector_mask(&sector, &[1]).unwrap().complement();
        (sector, h, plan, q)
    }

    #[test]
    fn identity_mask_keeps_the_step_unitary() {
        let sector = FockSector::half_filling(6).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let all = projector_mask(&sector, &[]).unwrap();
        let psi = StateVector::basis_state(sector.dim(), 4);
        let out = apply_mq(&plan, &h, &all, &psi).unwrap();
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn q_subspace_eigenvector_survives_exactly() {
        // with the cut bond removed, N_R <= 1 eigenvectors never reach the
        // detector pair, so one measured step keeps unit norm
        let sector = FockSector::half_filling(4).unwrap();
        let rc = sector.right_count();
        let params = HamiltonianParams::default().without_boundary_hop();
        let h0 = build_hamiltonian(&sector, &params).unwrap();
        let r1 = diagonalize_sector(&h0, &rc, 1).unwrap();
        let psi = r1.embed(0, sector.dim());
        let q = projector_mask(&sector, &[1, 2]).unwrap().complement();
        let plan = make_plan(&h0, 2.0, 1e-12).unwrap();
        let out = apply_mq(&plan, &h0, &q, &psi).unwrap();
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn toy_step_norm_is_cosine() {
        for &tau in &[0.4, 1.2, 2.0] {
            let (sector, h, plan, q) = toy_pieces(tau);
            let left = sector.index_of(0b01).unwrap();
            let psi = StateVector::basis_state(2, left);
            let out = apply_mq(&plan, &h, &q, &psi).unwrap();
            assert_abs_diff_eq!(out.norm(), (tau / 2.0).cos().abs(), epsilon = 1e-11);
        }
    }

    #[test]
    fn toy_series_is_a_cosine_power_law() {
        let tau = 1.2;
        let (sector, h, plan, q) = toy_pieces(tau);
        let left = sector.index_of(0b01).unwrap();
        let psi = StateVector::basis_state(2, left);
        let series = survival_series(&plan, &h, &q, &psi, 15).unwrap();
        let c2 = (tau / 2.0).cos().powi(2);
        for k in 0..=15 {
            assert_abs_diff_eq!(series.log_r[k], (c2.ln()) * k as f64, epsilon = 1e-9);
        }
        assert!(series.step_norms.iter().all(|&s| (s - c2).abs() < 1e-10));
    }

    #[test]
    fn no_detectors_means_no_decay() {
        let sector = FockSector::half_filling(6).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let all = projector_mask(&sector, &[]).unwrap();
        let mut psi = StateVector::basis_state(sector.dim(), 3);
        psi.normalize();
        let series = survival_series(&plan, &h, &all, &psi, 40).unwrap();
        for k in 0..=40 {
            assert!(series.log_r[k].abs() < 1e-9 * (k as f64 + 1.0));
        }
    }

    #[test]
    fn p_component_is_rejected() {
        let (sector, h, plan, q) = toy_pieces(1.0);
        let right = sector.index_of(0b10).unwrap();
        let psi = StateVector::basis_state(2, right); // entirely in the signal subspace
        assert!(matches!(
            survival_series(&plan, &h, &q, &psi, 5),
            Err(Error::SignalComponentInInitialState { .. })
        ));
    }

    #[test]
    fn config_validation_rejects_bad_detectors() {
        let mut config = DetectionConfig::new(8, 1.0);
        config.detector_p = 3;
        config.detector_q = 5; // N/2 = 4
        assert!(config.validate().is_err());
        config.detector_q = 3;
        assert!(config.validate().is_err());
        config.detector_p = 2;
        config.detector_q = 4;
        assert!(config.validate().is_ok());
        config.tau = 0.0;
        assert!(config.validate().is_err());
        config.tau = 2.0;
        config.steps = 0;
        assert!(config.validate().is_err());
    }

    #[test]
    fn series_matches_explicit_mq_powers() {
        let mut config = DetectionConfig::new(8, 1.0);
        config.detector_p = 2;
        config.detector_q = 4;
        config.steps = 12;
        let run = assemble(&config).unwrap();
        let series = survival_series(
            &run.plan,
            &run.hamiltonian,
            &run.q_mask,
            &run.initial,
            config.steps,
        )
        .unwrap();
        // direct unnormalized repeated application
        let mut psi = run.initial.clone();
        for k in 1..=config.steps {
            psi = apply_mq(&run.plan, &run.hamiltonian, &run.q_mask, &psi).unwrap();
            assert_abs_diff_eq!(psi.norm_sqr().ln(), series.log_r[k], epsilon = 1e-10);
        }
    }

    #[test]
    fn free_dynamics_starts_at_unit_right_count() {
        let mut config = DetectionConfig::new(8, 2.0);
        config.detector_p = 2;
        config.detector_q = 4;
        let out = free_dynamics(&config, &[0.0, 1.0, 2.0], &[3]).unwrap();
        assert_abs_diff_eq!(out.right_count[0], 1.0, epsilon = 1e-12);
        assert_eq!(out.site_occupation.len(), 1);
        assert_eq!(out.site_occupation[0].len(), 3);
        for &v in &out.joint_detector {
            assert!((0.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn free_dynamics_matches_single_plan_evolution() {
        let mut config = DetectionConfig::new(8, 0.8);
        config.detector_p = 2;
        config.detector_q = 4;
        let out = free_dynamics(&config, &[1.5, 3.0], &[]).unwrap();
        let run = assemble(&config).unwrap();
        let plan = make_plan(&run.hamiltonian, 3.0, config.cheb_tol).unwrap();
        let psi = evolve(&plan, &run.hamiltonian, &run.initial).unwrap();
        let nr = observable_diag(&run.sector, Observable::RightHalfCount).unwrap();
        assert_abs_diff_eq!(psi.expectation_diag(&nr), out.right_count[1], epsilon = 1e-9);
    }

    #[test]
    fn single_shot_is_zero_at_start_and_bounded() {
        let mut config = DetectionConfig::new(8, 0.5);
        config.detector_p = 2;
        config.detector_q = 4;
        assert_eq!(single_shot_probability(&config, 0.0).unwrap(), 0.0);
        let v = single_shot_probability(&config, 7.0).unwrap();
        assert!((0.0..=1.0).contains(&v));
    }

    #[test]
    fn transition_point_on_synthetic_sweeps() {
        let sweep = [(0.5, 1e-9), (1.0, 1e-6), (1.5, 0.5)];
        assert_eq!(transition_point(&sweep, 1e-5).unwrap(), Some(1.5));
        let below = [(0.5, 1e-9), (1.0, 1e-8)];
        assert_eq!(transition_point(&below, 1e-5).unwrap(), None);
        assert!(transition_point(&[], 1e-5).is_err());
        let unsorted = [(1.0, 0.1), (0.5, 0.2)];
        assert!(transition_point(&unsorted, 1e-5).is_err());
    }

    #[test]
    fn mid_filter_runs_and_decays_faster_than_ground_at_strong_coupling() {
        let mut ground = DetectionConfig::new(10, 2.0);
        ground.detector_p = 2;
        ground.detector_q = 4;
        ground.steps = 60;
        let mut mid = ground.clone();
        mid.filter.energy = FilterEnergy::Mid;
        let rg = no_detection_series(&ground).unwrap();
        let rm = no_detection_series(&mid).unwrap();
        assert!(rm.log_r[60] < rg.log_r[60]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(12))]
        #[test]
        fn survival_never_increases(delta in 0.2f64..2.5, tau in 0.5f64..3.0, seed in 0u64..1000) {
            let mut config = DetectionConfig::new(6, delta);
            config.detector_p = 1;
            config.detector_q = 3;
            config.tau = tau;
            config.steps = 25;
            config.filter.seed = seed;
            let series = no_detection_series(&config).unwrap();
            for w in series.log_r.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-10);
            }
        }
    }
}
