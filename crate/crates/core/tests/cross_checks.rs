//! Cross-module consistency: the sparse measured-evolution pipeline against
//! dense oracles, the spectral decay rate against the survival slope, and
//! trajectory statistics against the survival series.

use num_complex::Complex64;
use qmbdp::detection::{apply_mq, assemble, survival_series, DetectionConfig};
use qmbdp::krylov::{arnoldi_leading, ArnoldiOptions};
use qmbdp::propagator::dense_evolve_oracle;
use qmbdp::state::StateVector;
use qmbdp::trajectories::trajectory_ensemble;

fn n8_config(delta: f64) -> DetectionConfig {
    let mut config = DetectionConfig::new(8, delta);
    config.detector_p = 2;
    config.detector_q = 4;
    config
}

/// Dense-unitary + explicit-projector computation of one measured step.
fn dense_mq_step(
    run: &qmbdp::detection::DetectionRun,
    psi: &StateVector,
) -> StateVector {
    let mut out = psi.clone();
    out.apply_mask(&run.q_mask);
    let mut out = dense_evolve_oracle(&run.hamiltonian, &out, run.config.tau).unwrap();
    out.apply_mask(&run.q_mask);
    out
}

#[test]
fn survival_series_matches_dense_projector_chain() {
    let config = n8_config(1.0);
    let run = assemble(&config).unwrap();
    let series = survival_series(&run.plan, &run.hamiltonian, &run.q_mask, &run.initial, 50).unwrap();
    let mut psi = run.initial.clone();
    for k in 1..=50 {
        psi = dense_mq_step(&run, &psi);
        let r_dense = psi.norm_sqr();
        assert!(
            (series.r(k) - r_dense).abs() < 1e-8,
            "k = {k}: chebyshev {} vs dense {}",
            series.r(k),
            r_dense
        );
    }
}

#[test]
fn decay_rate_matches_survival_slope() {
    // at this interaction the decay rate is well above the 0.01 floor where
    // the asymptotic-slope comparison is meaningful
    let mut config = DetectionConfig::new(12, 0.5);
    config.detector_p = 3;
    config.detector_q = 5;
    config.steps = 400;
    let run = assemble(&config).unwrap();
    let series = survival_series(
        &run.plan,
        &run.hamiltonian,
        &run.q_mask,
        &run.initial,
        config.steps,
    )
    .unwrap();
    let est = arnoldi_leading(
        |psi| apply_mq(&run.plan, &run.hamiltonian, &run.q_mask, psi),
        run.sector.dim(),
        &run.q_mask,
        &ArnoldiOptions {
            krylov_dim: 60,
            max_restarts: 200,
            tol: 1e-10,
            stall_cycles: 5,
            seed: 1,
        },
    )
    .unwrap();
    assert!(est.converged);
    assert!(est.lambda1 >= 0.01);

    // least-squares slope of ln R_k over the last quarter
    let lo = 3 * config.steps / 4;
    let pts: Vec<(f64, f64)> = (lo..=config.steps)
        .map(|k| (k as f64, series.log_r[k]))
        .collect();
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let expect = -2.0 * est.lambda1;
    assert!(
        (slope - expect).abs() <= 0.1 * expect.abs(),
        "slope {slope} vs -2*lambda1 {expect}"
    );
}

#[test]
fn silent_trajectory_fraction_matches_survival() {
    // small-scale version of the trajectory/series consistency gate
    let mut config = n8_config(1.2);
    config.steps = 80;
    let run = assemble(&config).unwrap();
    let series = survival_series(
        &run.plan,
        &run.hamiltonian,
        &run.q_mask,
        &run.initial,
        config.steps,
    )
    .unwrap();
    let r_n = series.r_final();
    let m = 150usize;
    let (_, summary) = trajectory_ensemble(&config, m, 5).unwrap();
    let sigma = (r_n * (1.0 - r_n) / m as f64).sqrt();
    assert!(
        (summary.p_no_click - r_n).abs() <= 3.0 * sigma,
        "P(C=0) = {} vs R_n = {r_n} (sigma {sigma})",
        summary.p_no_click
    );
}

#[test]
fn single_measurement_probability_stays_moderate_when_melted() {
    // one unmonitored evolution to t = 2000 leaves a sizable chance that a
    // single joint measurement still misses, unlike the stroboscopic series
    let config = DetectionConfig::new(14, 0.5);
    let p = qmbdp::detection::single_shot_probability(&config, 2000.0).unwrap();
    assert!((0.0..0.3).contains(&p), "single-shot probability {p}");
}

#[test]
fn transition_point_window_shrinks_with_size() {
    let deltas = [1.0f64, 1.1, 1.2, 1.3, 1.4, 1.5];
    let epsilon = 1e-5;
    let mut stars = Vec::new();
    for n in [12usize, 14] {
        let sweep: Vec<(f64, f64)> = deltas
            .iter()
            .map(|&delta| {
                let series =
                    qmbdp::detection::no_detection_series(&DetectionConfig::new(n, delta)).unwrap();
                (delta, series.r_final())
            })
            .collect();
        let star = qmbdp::detection::transition_point(&sweep, epsilon)
            .unwrap()
            .expect("some grid point must qualify");
        assert!(
            star > 0.9 && star < 1.6,
            "N = {n}: delta_star = {star} outside (0.9, 1.6)"
        );
        stars.push(star);
    }
    assert!(
        stars[1] <= stars[0],
        "delta_star should not grow with size: {stars:?}"
    );
}

#[test]
fn energy_is_conserved_along_free_evolution() {
    let mut config = DetectionConfig::new(10, 1.0);
    config.detector_p = 2;
    config.detector_q = 4;
    let run = assemble(&config).unwrap();
    let mut psi = run.initial.clone();
    let mut h_psi = StateVector::zeros(psi.dim());
    run.hamiltonian.apply(psi.as_slice(), h_psi.as_mut_slice());
    let e0 = psi.dot(&h_psi).re;
    for _ in 0..1000 {
        run.plan.apply(&run.hamiltonian, &mut psi).unwrap();
    }
    assert!((psi.norm() - 1.0).abs() < 1e-9, "norm drift");
    run.hamiltonian.apply(psi.as_slice(), h_psi.as_mut_slice());
    let e1 = psi.dot(&h_psi).re / psi.norm_sqr();
    assert!((e1 - e0).abs() < 1e-9, "energy drift {e0} -> {e1}");
}

#[test]
fn spin_twin_and_fermion_matvecs_agree_on_chain_states() {
    // nearest-neighbour model: the string sign is always +1, so the two
    // assemblies must agree entry-for-entry through their action
    let sector = qmbdp::fock::FockSector::half_filling(8).unwrap();
    let params = qmbdp::operators::HamiltonianParams::default();
    let h = qmbdp::operators::build_hamiltonian(&sector, &params).unwrap();
    let s = qmbdp::operators::build_spin_equivalent(&sector, &params).unwrap();
    let mut x = StateVector::zeros(sector.dim());
    for (k, a) in x.as_mut_slice().iter_mut().enumerate() {
        *a = Complex64::new((k as f64).sin(), (k as f64 * 0.7).cos());
    }
    let mut y1 = StateVector::zeros(sector.dim());
    let mut y2 = StateVector::zeros(sector.dim());
    h.apply(x.as_slice(), y1.as_mut_slice());
    s.apply(x.as_slice(), y2.as_mut_slice());
    assert!(y1.distance(&y2) < 1e-12);
}
