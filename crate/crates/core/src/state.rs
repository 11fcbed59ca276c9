//! Complex amplitude vectors over a Fock sector.

use num_complex::Complex64;

use crate::operators::DiagonalMask;

/// A complex state vector. Norm bookkeeping is left to the caller: the
/// detection pipeline deliberately works with unnormalized states.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amps: Vec<Complex64>,
}

impl StateVector {
    pub fn zeros(dim: usize) -> Self {
        Self {
            amps: vec![Complex64::new(0.0, 0.0); dim],
        }
    }

    pub fn from_amplitudes(amps: Vec<Complex64>) -> Self {
        Self { amps }
    }

    /// Basis state `index` with unit amplitude.
    pub fn basis_state(dim: usize, index: usize) -> Self {
        let mut v = Self::zeros(dim);
        v.amps[index] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// Normalize in place; returns the norm the state had before.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            let inv = 1.0 / n;
            for a in &mut self.amps {
                *a *= inv;
            }
        }
        n
    }

    /// `⟨self|other⟩` with the conjugate on `self`.
    pub fn dot(&self, other: &Self) -> Complex64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn scale(&mut self, factor: Complex64) {
        for a in &mut self.amps {
            *a *= factor;
        }
    }

    /// `Σ_i diag[i] |ψ_i|²`; the expectation value of a diagonal observable.
    pub fn expectation_diag(&self, diag: &[f64]) -> f64 {
        self.amps
            .iter()
            .zip(diag)
            .map(|(a, d)| d * a.norm_sqr())
            .sum()
    }

    /// Project onto the mask: amplitudes outside the kept set are zeroed.
    pub fn apply_mask(&mut self, mask: &DiagonalMask) {
        for (a, keep) in self.amps.iter_mut().zip(mask.keep()) {
            if !keep {
                *a = Complex64::new(0.0, 0.0);
            }
        }
    }

    /// Squared norm of the masked component without modifying the state.
    pub fn masked_norm_sqr(&self, mask: &DiagonalMask) -> f64 {
        self.amps
            .iter()
            .zip(mask.keep())
            .filter(|(_, keep)| **keep)
            .map(|(a, _)| a.norm_sqr())
            .sum()
    }

    /// `‖self − other‖`.
    pub fn distance(&self, other: &Self) -> f64 {
        self.amps
            .iter()
            .zip(&other.amps)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }
}
