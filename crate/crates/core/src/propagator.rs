//! Chebyshev-expansion propagator for e^{-iHτ} on sparse Hermitian
//! operators, plus a dense eigendecomposition oracle for small sectors.
//!
//! The operator is rescaled onto [-1, 1] with Gershgorin bounds and the
//! exponential is expanded as Σ_k c_k T_k(H̃) with c_k built from Bessel
//! functions of the first kind; the three-term recurrence then needs one
//! sparse matrix-vector product per kept order.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lapack::eigh;
use crate::operators::SparseOperator;
use crate::state::StateVector;

/// Largest dimension the dense oracles accept.
pub const DENSE_ORACLE_CAP: usize = 5000;

/// Gershgorin enclosure of the spectrum: per-row center ± off-diagonal
/// magnitude sum, widened by 1% so rounding can never push an eigenvalue
/// outside the rescaling interval.
pub fn spectral_bounds(op: &SparseOperator) -> (f64, f64) {
    let mut e_min = f64::INFINITY;
    let mut e_max = f64::NEG_INFINITY;
    let mut center = 0.0f64;
    let mut radius = 0.0f64;
    let mut current = 0usize;
    let flush = |center: &mut f64, radius: &mut f64, lo: &mut f64, hi: &mut f64| {
        *lo = lo.min(*center - *radius);
        *hi = hi.max(*center + *radius);
        *center = 0.0;
        *radius = 0.0;
    };
    for (i, j, v) in op.triplets() {
        if i != current {
            flush(&mut center, &mut radius, &mut e_min, &mut e_max);
            current = i;
        }
        if i == j {
            center = v;
        } else {
            radius += v.abs();
        }
    }
    flush(&mut center, &mut radius, &mut e_min, &mut e_max);
    if !e_min.is_finite() {
        // no stored entries at all: the zero operator
        e_min = 0.0;
        e_max = 0.0;
    }
    let mid = 0.5 * (e_max + e_min);
    let half = 0.5 * (e_max - e_min) * 1.01 + 1e-12 * mid.abs().max(1.0);
    (mid - half, mid + half)
}

/// Bessel function of the first kind J_k(x) for x ≥ 0.
pub fn bessel_j(k: usize, x: f64) -> f64 {
    bessel_j_sequence(x, k)[k]
}

/// J_0(x) ..= J_k_max(x) by Miller's downward recurrence, normalized with
/// J_0 + 2 Σ J_{2k} = 1. The start order is raised adaptively until two
/// independent runs agree to 1e-14, which keeps the absolute error well
/// under 1e-12 across the x ≤ 1e4 range the propagator uses.
pub fn bessel_j_sequence(x: f64, k_max: usize) -> Vec<f64> {
    assert!(x >= 0.0 && x.is_finite(), "argument must be finite and >= 0");
    if x == 0.0 {
        let mut v = vec![0.0; k_max + 1];
        v[0] = 1.0;
        return v;
    }
    if x < 1e-4 {
        // tiny argument: three power-series terms reach full precision
        let mut v = vec![0.0; k_max + 1];
        let h = 0.5 * x;
        let h2 = h * h;
        let mut pref = 1.0; // (x/2)^k / k!
        for (k, slot) in v.iter_mut().enumerate() {
            let kf = k as f64;
            *slot = pref * (1.0 - h2 / (kf + 1.0) + h2 * h2 / (2.0 * (kf + 1.0) * (kf + 2.0)));
            pref *= h / (kf + 1.0);
        }
        return v;
    }

    let base = k_max.max(x.ceil() as usize);
    let mut margin = 2 * (base as f64).sqrt() as usize + 40;
    let mut prev = miller_pass(x, k_max, base + margin);
    for _ in 0..6 {
        margin *= 2;
        let next = miller_pass(x, k_max, base + margin);
        let diff = prev
            .iter()
            .zip(&next)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if diff < 1e-14 {
            return next;
        }
        prev = next;
    }
    prev
}

fn miller_pass(x: f64, k_max: usize, start: usize) -> Vec<f64> {
    let mut vals = vec![0.0f64; k_max + 1];
    let mut j_up = 0.0f64; // J_{k+1}
    let mut j = 1e-30f64; // J_k, arbitrary seed
    let mut sum = 0.0f64;
    let record = |order: usize, value: f64, vals: &mut Vec<f64>, sum: &mut f64| {
        if order <= k_max {
            vals[order] = value;
        }
        if order % 2 == 0 {
            *sum += if order == 0 { value } else { 2.0 * value };
        }
    };
    record(start, j, &mut vals, &mut sum);
    for k in (1..=start).rev() {
        let j_down = (2.0 * k as f64 / x) * j - j_up;
        j_up = j;
        j = j_down;
        record(k - 1, j, &mut vals, &mut sum);
        if j.abs() > 1e250 {
            let scale = 1e-250;
            j *= scale;
            j_up *= scale;
            sum *= scale;
            for v in &mut vals {
                *v *= scale;
            }
        }
    }
    let inv = 1.0 / sum;
    for v in &mut vals {
        *v *= inv;
    }
    vals
}

/// Precomputed expansion of e^{-iHτ} for one (operator, τ) pair.
#[derive(Debug, Clone)]
pub struct ChebyshevPlan {
    dim: usize,
    tau: f64,
    e_min: f64,
    e_max: f64,
    center: f64,
    inv_half_width: f64,
    /// c_k = (2 − δ_{k0}) (−i)^k J_k(a) e^{-ib}, already phase-folded.
    coeffs: Vec<Complex64>,
    tol: f64,
}

impl ChebyshevPlan {
    /// Truncation order K; `coeffs` holds orders 0 ..= K.
    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn tol(&self) -> f64 {
        self.tol
    }

    pub fn bounds(&self) -> (f64, f64) {
        (self.e_min, self.e_max)
    }

    /// Rescaled expansion argument a = τ (E_max − E_min)/2.
    pub fn argument(&self) -> f64 {
        self.tau * (self.e_max - self.e_min) * 0.5
    }

    /// Apply e^{-iHτ} in place. The plan must have been built for `op`.
    pub fn apply(&self, op: &SparseOperator, state: &mut StateVector) -> Result<()> {
        if op.dim() != self.dim || state.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: if op.dim() != self.dim {
                    op.dim()
                } else {
                    state.dim()
                },
            });
        }
        let dim = self.dim;
        let x = state.as_slice();
        let mut out: Vec<Complex64> = x.iter().map(|&a| self.coeffs[0] * a).collect();
        if self.order() >= 1 {
            let mut phi_prev: Vec<Complex64> = x.to_vec();
            let mut phi_cur = vec![Complex64::new(0.0, 0.0); dim];
            self.scaled_apply(op, &phi_prev, &mut phi_cur);
            for (o, p) in out.iter_mut().zip(&phi_cur) {
                *o += self.coeffs[1] * p;
            }
            let mut mv = vec![Complex64::new(0.0, 0.0); dim];
            for ck in &self.coeffs[2..] {
                self.scaled_apply(op, &phi_cur, &mut mv);
                // phi_next = 2 H̃ phi_cur − phi_prev, written over phi_prev
                for (prev, &m) in phi_prev.iter_mut().zip(&mv) {
                    *prev = 2.0 * m - *prev;
                }
                std::mem::swap(&mut phi_prev, &mut phi_cur);
                for (o, p) in out.iter_mut().zip(&phi_cur) {
                    *o += ck * p;
                }
            }
        }
        state.as_mut_slice().copy_from_slice(&out);
        Ok(())
    }

    /// y = (H − center)/half_width · x
    fn scaled_apply(&self, op: &SparseOperator, x: &[Complex64], y: &mut [Complex64]) {
        op.apply(x, y);
        let c = self.center;
        let s = self.inv_half_width;
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi = (*yi - c * xi) * s;
        }
    }
}

/// Build the expansion for `exp(-i op τ)` truncated where the Bessel tail
/// falls below `tol`. The truncation order is never below the rescaled
/// argument a, and the three-in-a-row tail test avoids stopping at an
/// accidental Bessel zero.
pub fn make_plan(op: &SparseOperator, tau: f64, tol: f64) -> Result<ChebyshevPlan> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(Error::Validation(format!("tau must be finite and >= 0, got {tau}")));
    }
    if tol < 1e-15 || tol >= 1.0 {
        return Err(Error::ToleranceUnachievable { tol });
    }
    let (e_min, e_max) = spectral_bounds(op);
    let half_width = 0.5 * (e_max - e_min);
    let center = 0.5 * (e_max + e_min);
    let a = tau * half_width;
    let b = tau * center;
    let phase = Complex64::from_polar(1.0, -b);

    if a < 1e-14 {
        return Ok(ChebyshevPlan {
            dim: op.dim(),
            tau,
            e_min,
            e_max,
            center,
            inv_half_width: if half_width > 0.0 { 1.0 / half_width } else { 0.0 },
            coeffs: vec![phase],
            tol,
        });
    }

    let k_cap = (a.ceil() as usize) + (12.0 * a.cbrt()).ceil() as usize + 40;
    let j = bessel_j_sequence(a, k_cap + 2);
    let k_start = (a.ceil() as usize).max(1);
    // coefficients for k >= 1 carry a factor 2, so the Bessel tail is
    // scanned at tol/2 to keep |c_K| itself below tol
    let thr = tol / 2.0;
    let mut order = None;
    for k in k_start..=k_cap {
        if j[k].abs() < thr && j[k + 1].abs() < thr && j[k + 2].abs() < thr {
            order = Some(k);
            break;
        }
    }
    let order = order.ok_or(Error::ToleranceUnachievable { tol })?;

    // (-i)^k cycles 1, -i, -1, i
    let minus_i_pow = [
        Complex64::new(1.0, 0.0),
        Complex64::new(0.0, -1.0),
        Complex64::new(-1.0, 0.0),
        Complex64::new(0.0, 1.0),
    ];
    let coeffs: Vec<Complex64> = (0..=order)
        .map(|k| {
            let pref = if k == 0 { 1.0 } else { 2.0 };
            pref * minus_i_pow[k % 4] * j[k] * phase
        })
        .collect();

    Ok(ChebyshevPlan {
        dim: op.dim(),
        tau,
        e_min,
        e_max,
        center,
        inv_half_width: 1.0 / half_width,
        coeffs,
        tol,
    })
}

/// Out-of-place convenience wrapper around [`ChebyshevPlan::apply`].
pub fn evolve(plan: &ChebyshevPlan, op: &SparseOperator, psi: &StateVector) -> Result<StateVector> {
    let mut out = psi.clone();
    plan.apply(op, &mut out)?;
    Ok(out)
}

/// Exact e^{-iHτ}ψ through a full dense eigendecomposition. Only for small
/// sectors; this is the independent check on the Chebyshev path.
pub fn dense_evolve_oracle(
    op: &SparseOperator,
    psi: &StateVector,
    tau: f64,
) -> Result<StateVector> {
    let n = op.dim();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::OracleCap {
            dim: n,
            cap: DENSE_ORACLE_CAP,
        });
    }
    if psi.dim() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: psi.dim(),
        });
    }
    let mut a = op.to_dense();
    let w = eigh(&mut a, n)?;
    // y = V^T psi; y_k *= e^{-i w_k tau}; out = V y
    let x = psi.as_slice();
    let mut y = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..n {
            acc += a[i + k * n] * x[i];
        }
        y[k] = acc * Complex64::from_polar(1.0, -w[k] * tau);
    }
    let mut out = vec![Complex64::new(0.0, 0.0); n];
    for k in 0..n {
        let yk = y[k];
        for i in 0..n {
            out[i] += a[i + k * n] * yk;
        }
    }
    Ok(StateVector::from_amplitudes(out))
}

/// Dense e^{-iHτ} as a row-major matrix (oracle building block for the
/// measured-step spectra).
pub fn dense_unitary(op: &SparseOperator, tau: f64) -> Result<Vec<Complex64>> {
    let n = op.dim();
    if n > DENSE_ORACLE_CAP {
        return Err(Error::OracleCap {
            dim: n,
            cap: DENSE_ORACLE_CAP,
        });
    }
    let mut a = op.to_dense();
    let w = eigh(&mut a, n)?;
    let phases: Vec<Complex64> = w
        .iter()
        .map(|&e| Complex64::from_polar(1.0, -e * tau))
        .collect();
    let mut u = vec![Complex64::new(0.0, 0.0); n * n];
    // U = V diag(phases) V^T
    for k in 0..n {
        let pk = phases[k];
        for i in 0..n {
            let vik = a[i + k * n];
            if vik == 0.0 {
                continue;
            }
            let f = vik * pk;
            for j in 0..n {
                u[i * n + j] += f * a[j + k * n];
            }
        }
    }
    Ok(u)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::FockSector;
    use crate::operators::{build_hamiltonian, HamiltonianParams};
    use approx::assert_abs_diff_eq;

    /// Independent Bessel oracle: the trapezoidal form of
    /// J_k(x) = (1/π)∫ cos(kθ − x sin θ) dθ is exact up to aliasing of
    /// order k ± m, so m ≫ k + x pins it to machine precision.
    fn bessel_oracle(k: usize, x: f64) -> f64 {
        let m = (((k as f64 + x) * 1.2) as usize + 80).next_power_of_two();
        let mut acc = 0.0f64;
        for j in 0..m {
            let theta = 2.0 * std::f64::consts::PI * j as f64 / m as f64;
            acc += (x * theta.sin() - k as f64 * theta).cos();
        }
        acc / m as f64
    }

    /// 30-term power series for small arguments.
    fn bessel_series(k: usize, x: f64) -> f64 {
        let h = 0.5 * x;
        let mut term = h.powi(k as i32);
        for i in 1..=k {
            term /= i as f64;
        }
        let mut acc = 0.0;
        for m in 0..30 {
            acc += term;
            term *= -h * h / ((m as f64 + 1.0) * (m as f64 + 1.0 + k as f64));
        }
        acc
    }

    #[test]
    fn bessel_trivial_values() {
        assert_eq!(bessel_j(0, 0.0), 1.0);
        for k in 1..6 {
            assert_eq!(bessel_j(k, 0.0), 0.0);
        }
    }

    #[test]
    fn bessel_j0_of_one_matches_series() {
        let series = bessel_series(0, 1.0);
        assert_abs_diff_eq!(series, 0.7651976865579666, epsilon = 1e-15);
        assert_abs_diff_eq!(bessel_j(0, 1.0), 0.7651976865579666, epsilon = 1e-13);
    }

    #[test]
    fn bessel_matches_quadrature_oracle() {
        for &x in &[0.5, 1.0, 5.0, 20.0, 137.0] {
            let v = bessel_j_sequence(x, 40);
            for k in 0..=40 {
                assert_abs_diff_eq!(v[k], bessel_oracle(k, x), epsilon = 1e-12);
            }
        }
        // large-argument spot checks
        let v = bessel_j_sequence(1e4, 3);
        for k in 0..=3 {
            assert_abs_diff_eq!(v[k], bessel_oracle(k, 1e4), epsilon = 1e-12);
        }
    }

    #[test]
    fn gershgorin_diagonal_is_exact_up_to_margin() {
        let op = SparseOperator::from_triplets(3, &[(0, 0, -2.0), (1, 1, 0.5), (2, 2, 3.0)]);
        let (lo, hi) = spectral_bounds(&op);
        assert!(lo <= -2.0 && lo >= -2.0 - 0.011 * 5.0);
        assert!(hi >= 3.0 && hi <= 3.0 + 0.011 * 5.0);
    }

    #[test]
    fn gershgorin_contains_two_site_spectrum() {
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
        let (lo, hi) = spectral_bounds(&h);
        assert!(lo <= -0.5 && hi >= 0.5);
    }

    #[test]
    fn gershgorin_contains_dense_spectrum_n8() {
        let sector = FockSector::half_filling(8).unwrap();
        let params = HamiltonianParams {
            hopping: 1.0,
            interaction: 2.0,
            impurity: 0.5,
            boundary_hop: true,
        };
        let h = build_hamiltonian(&sector, &params).unwrap();
        let mut a = h.to_dense();
        let w = crate::lapack::eigh(&mut a, h.dim()).unwrap();
        let (lo, hi) = spectral_bounds(&h);
        assert!(lo < w[0] && hi > w[w.len() - 1]);
    }

    #[test]
    fn zero_tau_plan_is_identity() {
        let sector = FockSector::half_filling(4).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 0.0, 1e-12).unwrap();
        assert_eq!(plan.order(), 0);
        assert_abs_diff_eq!(plan.coeffs[0].re, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(plan.coeffs[0].im, 0.0, epsilon = 1e-15);
        let psi = StateVector::basis_state(sector.dim(), 2);
        let out = evolve(&plan, &h, &psi).unwrap();
        assert!(out.distance(&psi) < 1e-14);
    }

    #[test]
    fn truncation_order_at_a20() {
        // tabulate |J_k(20)| with the quadrature oracle and find the first
        // three-in-a-row sub-tolerance tail
        let tol = 1e-12;
        let mut expect = None;
        for k in 20..120 {
            if bessel_oracle(k, 20.0).abs() < tol
                && bessel_oracle(k + 1, 20.0).abs() < tol
                && bessel_oracle(k + 2, 20.0).abs() < tol
            {
                expect = Some(k);
                break;
            }
        }
        let expect = expect.unwrap();
        assert!((25..=60).contains(&expect), "oracle K = {expect}");

        // a diagonal operator with bounds ±1 gives a = tau * (1.01 + eps)
        let op = SparseOperator::from_triplets(2, &[(0, 0, -1.0), (1, 1, 1.0)]);
        let tau = 20.0 / 1.01;
        let plan = make_plan(&op, tau, tol).unwrap();
        assert!(
            (plan.order() as i64 - expect as i64).unsigned_abs() <= 3,
            "plan K = {}, oracle K = {}",
            plan.order(),
            expect
        );
        assert!(plan.order() as f64 >= 20.0);
        assert!(plan.coeffs[plan.order()].norm() < tol);
    }

    #[test]
    fn order_roughly_doubles_with_tau() {
        let op = SparseOperator::from_triplets(2, &[(0, 0, -1.0), (1, 1, 1.0)]);
        let k50 = make_plan(&op, 50.0, 1e-12).unwrap().order() as f64;
        let k100 = make_plan(&op, 100.0, 1e-12).unwrap().order() as f64;
        let ratio = k100 / k50;
        assert!((1.6..=2.4).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn unreachable_tolerance_is_diagnosed() {
        let op = SparseOperator::from_triplets(2, &[(0, 0, -1.0), (1, 1, 1.0)]);
        assert!(matches!(
            make_plan(&op, 1.0, 1e-16),
            Err(Error::ToleranceUnachievable { .. })
        ));
    }

    #[test]
    fn two_site_amplitude_is_cosine() {
        let sector = FockSector::build(2, 1).unwrap();
        let h = build_hamiltonian(
            &sector,
            &HamiltonianParams {
                hopping: 1.0,
                interaction: 0.4, // irrelevant with one particle
                impurity: 0.0,
                boundary_hop: true,
            },
        )
        .unwrap();
        let left = sector.index_of(0b01).unwrap();
        let psi = StateVector::basis_state(2, left);
        for &tau in &[0.3, 1.0, 2.0] {
            let plan = make_plan(&h, tau, 1e-12).unwrap();
            let out = evolve(&plan, &h, &psi).unwrap();
            let amp = out.as_slice()[left];
            assert_abs_diff_eq!(amp.re, (tau / 2.0).cos(), epsilon = 1e-11);
            assert_abs_diff_eq!(amp.im, 0.0, epsilon = 1e-11);
        }
    }

    #[test]
    fn chebyshev_matches_dense_oracle_n8() {
        let sector = FockSector::half_filling(8).unwrap();
        let params = HamiltonianParams {
            hopping: 1.0,
            interaction: 1.5,
            impurity: 0.5,
            boundary_hop: true,
        };
        let h = build_hamiltonian(&sector, &params).unwrap();
        let mut psi = StateVector::zeros(sector.dim());
        for (k, a) in psi.as_mut_slice().iter_mut().enumerate() {
            *a = Complex64::new((0.17 * k as f64).sin(), (0.29 * k as f64).cos());
        }
        psi.normalize();
        let tau = 2.0;
        let plan = make_plan(&h, tau, 1e-12).unwrap();
        let fast = evolve(&plan, &h, &psi).unwrap();
        let exact = dense_evolve_oracle(&h, &psi, tau).unwrap();
        assert!(fast.distance(&exact) < 1e-10);
        assert_abs_diff_eq!(fast.norm(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn dense_oracle_is_unitary() {
        let sector = FockSector::half_filling(6).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let mut psi = StateVector::zeros(sector.dim());
        for (k, a) in psi.as_mut_slice().iter_mut().enumerate() {
            *a = Complex64::new(1.0 / (k as f64 + 1.0), 0.2);
        }
        psi.normalize();
        let out = dense_evolve_oracle(&h, &psi, 3.7).unwrap();
        assert_abs_diff_eq!(out.norm(), 1.0, epsilon = 1e-12);
        let same = dense_evolve_oracle(&h, &psi, 0.0).unwrap();
        assert!(same.distance(&psi) < 1e-12);
    }

    #[test]
    fn composition_and_norm_drift() {
        let sector = FockSector::half_filling(8).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let tol = 1e-12;
        let plan1 = make_plan(&h, 1.3, tol).unwrap();
        let plan2 = make_plan(&h, 2.6, tol).unwrap();
        let mut psi = StateVector::basis_state(sector.dim(), 7);
        let double = evolve(&plan2, &h, &psi).unwrap();
        let mut twice = evolve(&plan1, &h, &psi).unwrap();
        plan1.apply(&h, &mut twice).unwrap();
        assert!(twice.distance(&double) < 20.0 * tol);

        for _ in 0..1000 {
            plan1.apply(&h, &mut psi).unwrap();
        }
        assert!((psi.norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let sector = FockSector::half_filling(4).unwrap();
        let h = build_hamiltonian(&sector, &HamiltonianParams::default()).unwrap();
        let plan = make_plan(&h, 1.0, 1e-12).unwrap();
        let mut wrong = StateVector::zeros(3);
        assert!(matches!(
            plan.apply(&h, &mut wrong),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
