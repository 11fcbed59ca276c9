//! Matrix-free restarted Arnoldi estimation of the leading eigenvalue of the
//! measured step operator M_Q(τ), and the small-τ consistency check against
//! the projected-Hamiltonian variance law.
//!
//! M_Q is non-normal, so convergence is judged on the leading Ritz-value
//! magnitude across restarts; the Arnoldi residual is reported alongside it
//! rather than used as the sole stop rule.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::lapack::{eig_complex, eig_complex_values, eigh, schur_sorted_topk};
use crate::operators::{DiagonalMask, SparseOperator};
use crate::propagator::DENSE_ORACLE_CAP;
use crate::state::StateVector;

/// Leading eigenvalue of M_Q(τ) written as e^{-λ₁ + iθ₁}.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    /// Decay rate per step, −ln |μ₁| (clamped to 0 when within round-off of
    /// a unit-magnitude eigenvalue).
    pub lambda1: f64,
    /// Phase of the leading eigenvalue, radians.
    pub theta1: f64,
    /// Krylov dimension actually used.
    pub krylov_dim: usize,
    /// Restarts performed before the estimate settled.
    pub restarts: usize,
    /// Arnoldi residual ‖M x − μ x‖ of the returned Ritz pair.
    pub residual: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArnoldiOptions {
    pub krylov_dim: usize,
    pub max_restarts: usize,
    /// Certified-magnitude improvements below this no longer count as
    /// progress.
    pub tol: f64,
    /// Consecutive restart cycles without progress before the estimate is
    /// accepted. Deeply clustered spectra reward patience here.
    pub stall_cycles: usize,
    pub seed: u64,
}

impl Default for ArnoldiOptions {
    fn default() -> Self {
        Self {
            krylov_dim: 30,
            max_restarts: 50,
            tol: 1e-8,
            stall_cycles: 5,
            seed: 1,
        }
    }
}

const BREAKDOWN_EPS: f64 = 1e-14;

/// Largest-magnitude eigenvalue of the operator behind `apply_mq`, started
/// from a seeded random vector restricted to the Q subspace.
pub fn arnoldi_leading<F>(
    apply_mq: F,
    dim: usize,
    q_mask: &DiagonalMask,
    opts: &ArnoldiOptions,
) -> Result<SpectralEstimate>
where
    F: Fn(&StateVector) -> Result<StateVector>,
{
    if q_mask.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: q_mask.dim(),
        });
    }
    if q_mask.ones() == 0 {
        return Err(Error::Validation(
            "the Q subspace is empty; nothing to iterate on".into(),
        ));
    }
    let m = opts.krylov_dim.min(q_mask.ones()).max(1);
    // size of the Schur window carried across restarts
    let keep = (m / 2).clamp(1, m.saturating_sub(2).max(1));

    let mut rng = ChaCha12Rng::seed_from_u64(opts.seed);
    let normal = StandardNormal;
    let mut start = StateVector::zeros(dim);
    for a in start.as_mut_slice() {
        let re: f64 = normal.sample(&mut rng);
        let im: f64 = normal.sample(&mut rng);
        *a = Complex64::new(re, im);
    }
    start.apply_mask(q_mask);
    start.normalize();

    // Krylov–Schur state: M · basis[0..s] = basis[0..=s] · h[0..=s, 0..s]
    let mut basis: Vec<StateVector> = vec![start];
    let mut h = vec![Complex64::new(0.0, 0.0); (m + 1) * m];
    let mut locked = 0usize;

    // A Ritz pair whose residual clears this gate is an exact eigenpair of
    // a nearby operator, so the largest certified magnitude across cycles
    // can only improve towards the spectral radius.
    let cert_gate = (10.0 * opts.tol).max(1e-12);
    let mut best: Option<(Complex64, f64, usize)> = None; // (mu, residual, restart)
    let mut fallback: Option<(Complex64, f64)> = None;
    let mut stall = 0usize;
    let mut last_restart = 0usize;

    for restart in 0..=opts.max_restarts {
        last_restart = restart;
        let mut size = locked;
        let mut broke_down = false;
        while size < m {
            let mut w = apply_mq(&basis[size])?;
            // modified Gram-Schmidt with one re-orthogonalization pass
            for pass in 0..2 {
                for (i, v) in basis.iter().enumerate() {
                    let c = v.dot(&w);
                    if pass == 0 || c.norm() > 0.0 {
                        for (wa, va) in w.as_mut_slice().iter_mut().zip(v.as_slice()) {
                            *wa -= c * va;
                        }
                        h[i * m + size] += c;
                    }
                }
            }
            let beta = w.norm();
            size += 1;
            h[size * m + (size - 1)] = Complex64::new(beta, 0.0);
            if beta < BREAKDOWN_EPS {
                broke_down = true;
                break;
            }
            w.scale(Complex64::new(1.0 / beta, 0.0));
            basis.push(w);
        }

        // Rayleigh–Ritz on the current square block; the residual of pair
        // (μ, V y) is |h[size, 0..size] · y|, and that row has a single β
        // entry at the last column (or is ~0 after a breakdown).
        let mut block = vec![Complex64::new(0.0, 0.0); size * size];
        for i in 0..size {
            for j in 0..size {
                block[i * size + j] = h[i * m + j];
            }
        }
        let (values, vectors) = eig_complex(&block, size)?;
        let beta_exit = h[size * m + (size - 1)].norm();

        let mut improved = false;
        for i in 0..size {
            let mu = values[i];
            let residual = beta_exit * vectors[i * size + (size - 1)].norm();
            if fallback.map_or(true, |(f, _)| mu.norm() > f.norm()) {
                fallback = Some((mu, residual));
            }
            if residual < cert_gate && best.map_or(true, |(b, _, _)| mu.norm() > b.norm()) {
                if best.map_or(true, |(b, _, _)| mu.norm() > b.norm() + opts.tol) {
                    improved = true;
                }
                best = Some((mu, residual, restart));
            }
        }
        if broke_down {
            // invariant subspace: the factorization is exact and every pair
            // is certified
            let (mu, residual) = best
                .map(|(b, r, _)| (b, r))
                .or(fallback)
                .expect("breakdown yields at least one pair");
            return Ok(finish(mu, residual, size, restart, true, opts));
        }
        if let Some((mu, residual, _)) = best {
            stall = if improved { 0 } else { stall + 1 };
            if stall >= opts.stall_cycles.max(1) {
                return Ok(finish(mu, residual, size, restart, true, opts));
            }
        }
        if restart == opts.max_restarts {
            break;
        }

        // Krylov–Schur restart: rotate the factorization into Schur form,
        // keep the window with the largest magnitudes, and continue the
        // expansion from the old residual direction.
        let (t, z) = schur_sorted_topk(&block, size, keep)?;
        let mut new_basis: Vec<StateVector> = Vec::with_capacity(m + 1);
        for col in 0..keep {
            let mut vb = StateVector::zeros(dim);
            for (i, v) in basis.iter().take(size).enumerate() {
                let zi = z[i + col * size];
                if zi.norm_sqr() == 0.0 {
                    continue;
                }
                for (na, va) in vb.as_mut_slice().iter_mut().zip(v.as_slice()) {
                    *na += zi * va;
                }
            }
            new_basis.push(vb);
        }
        new_basis.push(basis.pop().expect("expansion leaves a residual vector"));
        let mut new_h = vec![Complex64::new(0.0, 0.0); (m + 1) * m];
        for i in 0..keep {
            for j in 0..keep {
                new_h[i * m + j] = t[i + j * size];
            }
        }
        for j in 0..keep {
            new_h[keep * m + j] = beta_exit * z[(size - 1) + j * size];
        }
        basis = new_basis;
        h = new_h;
        locked = keep;
    }
    let (mu, residual) = best
        .map(|(b, r, _)| (b, r))
        .or(fallback)
        .expect("at least one cycle ran");
    Ok(finish(mu, residual, m, last_restart, false, opts))
}

fn finish(
    mu: Complex64,
    residual: f64,
    krylov_dim: usize,
    restarts: usize,
    converged: bool,
    opts: &ArnoldiOptions,
) -> SpectralEstimate {
    let mag = mu.norm();
    let mut lambda1 = -mag.ln();
    if lambda1 < 0.0 && lambda1 > -10.0 * opts.tol.max(1e-12) {
        lambda1 = 0.0;
    }
    SpectralEstimate {
        lambda1,
        theta1: mu.arg(),
        krylov_dim,
        restarts,
        residual,
        converged,
    }
}

/// One row of the small-τ consistency table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ZenoRow {
    pub tau: f64,
    /// −ln of the largest M_Q(τ) eigenvalue magnitude, from the dense oracle.
    pub lambda1: f64,
    pub lambda1_over_tau_sq: f64,
    /// Predicted limit of λ₁/τ²: half the minimal energy variance among
    /// projected-Hamiltonian eigenvectors. The one-half is the
    /// amplitude-vs-probability factor fixed by the two-site closed form.
    pub prediction: f64,
}

/// Small-τ check: the slowest decay rate of M_Q(τ) must approach
/// τ²·Var_min(H)/2, where Var_min is minimized over eigenvectors of the
/// Q-projected Hamiltonian. Dense-only; this is a diagnostic oracle.
pub fn zeno_check(
    h: &SparseOperator,
    q_mask: &DiagonalMask,
    taus: &[f64],
) -> Result<Vec<ZenoRow>> {
    let dim = h.dim();
    if dim > DENSE_ORACLE_CAP {
        return Err(Error::OracleCap {
            dim,
            cap: DENSE_ORACLE_CAP,
        });
    }
    if q_mask.dim() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: q_mask.dim(),
        });
    }
    let kept: Vec<usize> = (0..dim).filter(|&i| q_mask.is_kept(i)).collect();
    let dq = kept.len();
    if dq == 0 {
        return Err(Error::Validation("the Q subspace is empty".into()));
    }

    // eigenvectors of the projected Hamiltonian, and their full-H variances
    let mut qhq = vec![0.0f64; dq * dq];
    for (a, &ia) in kept.iter().enumerate() {
        for (j, v) in h.row(ia) {
            if let Ok(b) = kept.binary_search(&j) {
                qhq[a + b * dq] = v;
            }
        }
    }
    let e_q = eigh(&mut qhq, dq)?;
    let mut var_min = f64::INFINITY;
    let mut full = vec![0.0f64; dim];
    let mut hfull = vec![0.0f64; dim];
    for k in 0..dq {
        full.iter_mut().for_each(|x| *x = 0.0);
        for (a, &ia) in kept.iter().enumerate() {
            full[ia] = qhq[a + k * dq];
        }
        h.apply_real(&full, &mut hfull);
        let h2: f64 = hfull.iter().map(|x| x * x).sum();
        let var = h2 - e_q[k] * e_q[k];
        var_min = var_min.min(var.max(0.0));
    }
    let prediction = 0.5 * var_min;

    // full spectrum once; per τ assemble the Q block of the evolution
    let mut a = h.to_dense();
    let w = eigh(&mut a, dim)?;
    // row a of v_q = eigenvector components of kept index a
    let mut v_q = vec![0.0f64; dq * dim];
    for (aa, &ia) in kept.iter().enumerate() {
        for k in 0..dim {
            v_q[aa * dim + k] = a[ia + k * dim];
        }
    }

    let mut rows = Vec::with_capacity(taus.len());
    for &tau in taus {
        if !(tau > 0.0) {
            return Err(Error::Validation(format!(
                "tau values must be positive, got {tau}"
            )));
        }
        let phases: Vec<Complex64> = w
            .iter()
            .map(|&e| Complex64::from_polar(1.0, -e * tau))
            .collect();
        let mut mq = vec![Complex64::new(0.0, 0.0); dq * dq];
        for aa in 0..dq {
            for k in 0..dim {
                let f = v_q[aa * dim + k] * phases[k];
                if f.norm_sqr() == 0.0 {
                    continue;
                }
                for bb in 0..dq {
                    mq[aa * dq + bb] += f * v_q[bb * dim + k];
                }
            }
        }
        let mus = eig_complex_values(&mut mq, dq)?;
        let mag = mus.iter().map(|m| m.norm()).fold(0.0f64, f64::max);
        let lambda1 = (-mag.ln()).max(0.0);
        rows.push(ZenoRow {
            tau,
            lambda1,
            lambda1_over_tau_sq: lambda1 / (tau * tau),
            prediction,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detection::apply_mq;
    use crate::fock::FockSector;
    use crate::operators::{build_hamiltonian, projector_mask, HamiltonianParams};
    use crate::propagator::make_plan;
    use approx::assert_abs_diff_eq;

    #[test]
    fn unitary_step_has_unit_magnitude() {
        let sector = FockSector::half_filling(6).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let all = projector_mask(&sector, &[]).unwrap();
        let opts = ArnoldiOptions {
            krylov_dim: 20,
            ..Default::default()
        };
        let est = arnoldi_leading(
            |psi| apply_mq(&plan, &h, &all, psi),
            sector.dim(),
            &all,
            &opts,
        )
        .unwrap();
        assert!(est.lambda1.abs() < 1e-8, "lambda1 = {}", est.lambda1);
    }

    #[test]
    fn two_site_toy_breaks_down_to_the_exact_answer() {
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
        let tau = 1.3;
        let plan = make_plan(&h, tau, 1e-12).unwrap();
        let q = projector_mask(&sector, &[1]).unwrap().complement();
        let est = arnoldi_leading(
            |psi| apply_mq(&plan, &h, &q, psi),
            2,
            &q,
            &ArnoldiOptions::default(),
        )
        .unwrap();
        assert!(est.converged);
        assert_eq!(est.krylov_dim, 1); // invariant subspace after one vector
        assert_abs_diff_eq!(est.lambda1, -(tau / 2.0).cos().ln(), epsilon = 1e-9);
        // the 1x1 reduced operator is the positive number cos(τ/2)
        assert_abs_diff_eq!(est.theta1, 0.0, epsilon = 1e-9);
    }

    #[test]
    fn estimate_is_seed_independent() {
        let sector = FockSector::half_filling(10).unwrap();
        let params = HamiltonianParams {
            hopping: 1.0,
            interaction: 0.5,
            impurity: 0.5,
            boundary_hop: true,
        };
        let h = build_hamiltonian(&sector, &params).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let q = projector_mask(&sector, &[2, 4]).unwrap().complement();
        let apply = |psi: &StateVector| apply_mq(&plan, &h, &q, psi);
        let mut lambdas = Vec::new();
        for seed in [1u64, 77, 4242] {
            let opts = ArnoldiOptions {
                krylov_dim: 60,
                max_restarts: 200,
                tol: 1e-10,
                stall_cycles: 5,
                seed,
            };
            let est = arnoldi_leading(apply, sector.dim(), &q, &opts).unwrap();
            assert!(est.converged);
            lambdas.push(est.lambda1);
        }
        for w in lambdas.windows(2) {
            assert_abs_diff_eq!(w[0], w[1], epsilon = 1e-7);
        }
    }

    #[test]
    fn spectral_radius_never_exceeds_one() {
        let sector = FockSector::half_filling(8).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let q = projector_mask(&sector, &[2, 4]).unwrap().complement();
        let est = arnoldi_leading(
            |psi| apply_mq(&plan, &h, &q, psi),
            sector.dim(),
            &q,
            &ArnoldiOptions::default(),
        )
        .unwrap();
        assert!((-est.lambda1).exp() <= 1.0 + 1e-7);
        assert!(est.lambda1 >= 0.0);
    }

    #[test]
    fn exhausted_restarts_report_nonconvergence() {
        let sector = FockSector::half_filling(8).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 2.0, 1e-12).unwrap();
        let q = projector_mask(&sector, &[2, 4]).unwrap().complement();
        let opts = ArnoldiOptions {
            krylov_dim: 8,
            max_restarts: 0,
            tol: 1e-14,
            stall_cycles: 5,
            seed: 1,
        };
        let est = arnoldi_leading(
            |psi| apply_mq(&plan, &h, &q, psi),
            sector.dim(),
            &q,
            &opts,
        )
        .unwrap();
        assert!(!est.converged);
        assert!(est.lambda1.is_finite());
    }

    #[test]
    fn empty_q_subspace_is_an_error() {
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
        let plan = make_plan(&h, 1.0, 1e-12).unwrap();
        let none = projector_mask(&sector, &[]).unwrap().complement();
        assert!(arnoldi_leading(
            |psi| apply_mq(&plan, &h, &none, psi),
            2,
            &none,
            &ArnoldiOptions::default()
        )
        .is_err());
    }

    #[test]
    fn zeno_vanishes_when_an_eigenvector_lives_in_q() {
        // cut Hamiltonian: N_R <= 1 eigenvectors never see the detectors
        let sector = FockSector::half_filling(4).unwrap();
        let params = HamiltonianParams::default().without_boundary_hop();
        let h0 = build_hamiltonian(&sector, &params).unwrap();
        let q = projector_mask(&sector, &[1, 2]).unwrap().complement();
        let rows = zeno_check(&h0, &q, &[0.05, 0.1]).unwrap();
        for row in rows {
            assert!(row.prediction < 1e-12);
            assert!(row.lambda1 < 1e-10, "lambda1 = {}", row.lambda1);
        }
    }

    #[test]
    fn two_site_toy_fixes_the_factor_convention() {
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
        let q = projector_mask(&sector, &[1]).unwrap().complement();
        let rows = zeno_check(&h, &q, &[0.01]).unwrap();
        let row = rows[0];
        // λ(τ) = −ln cos(τ/2) → τ²/8; the variance of H in the surviving
        // state is 1/4, so the prediction carries the extra factor 1/2
        assert_abs_diff_eq!(row.prediction, 0.125, epsilon = 1e-12);
        assert_abs_diff_eq!(row.lambda1, -(0.005f64).cos().ln(), epsilon = 1e-12);
        assert!((row.lambda1_over_tau_sq / row.prediction - 1.0).abs() < 1e-3);
    }

    #[test]
    fn rejects_oversized_problems() {
        let sector = FockSector::half_filling(4).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let q = projector_mask(&sector, &[1, 2]).unwrap().complement();
        assert!(zeno_check(&h, &q, &[-0.1]).is_err());
    }
}
