//! Dense spectra of the cut Hamiltonian restricted to small right-count
//! sectors, the block-coupling gap parameters derived from them, and
//! energy-filtered random initial states.
//!
//! With the cut bond removed, H₀ conserves the right-half particle number,
//! so its low sectors (N_R = 0, 1, 2) diagonalize at polynomial cost even
//! when the full half-filling sector is astronomically large. Everything the
//! detection pipeline needs from H₀ — the gap parameters g_α and the
//! filtered initial state — lives in those blocks.

use std::collections::HashMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::fock::{FockSector, RightCountMask};
use crate::lapack::eigh;
use crate::operators::SparseOperator;
use crate::state::StateVector;

/// Largest sub-sector dimension accepted for dense diagonalization.
pub const SECTOR_DENSE_CAP: usize = 10_000;

/// Pairs closer than this (in units of the hopping) with nonzero coupling
/// are flagged as divergent rather than reported as a huge finite gap value.
pub const DEGENERACY_THRESHOLD: f64 = 1e-10;

/// Eigensystem of H₀ restricted to one N_R sector.
#[derive(Debug, Clone)]
pub struct SectorEigensystem {
    n_r: usize,
    indices: Vec<usize>,
    energies: Vec<f64>,
    /// column-major sub_dim × sub_dim; column k is eigenvector k
    vectors: Vec<f64>,
}

impl SectorEigensystem {
    pub fn n_r(&self) -> usize {
        self.n_r
    }

    pub fn sub_dim(&self) -> usize {
        self.indices.len()
    }

    /// Full-sector basis indices of the sub-basis, canonical order.
    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    /// Eigenvalues in ascending order.
    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Eigenvector `k` over the sub-basis.
    pub fn vector(&self, k: usize) -> &[f64] {
        let n = self.sub_dim();
        &self.vectors[k * n..(k + 1) * n]
    }

    /// Same eigensystem with all energies offset by `c` (an H₀ → H₀ + c·I
    /// relabeling; the eigenvectors are untouched).
    pub fn shifted(&self, c: f64) -> Self {
        let mut out = self.clone();
        for e in &mut out.energies {
            *e += c;
        }
        out
    }

    /// Eigenvector `k` embedded into the full sector.
    pub fn embed(&self, k: usize, full_dim: usize) -> StateVector {
        let mut out = StateVector::zeros(full_dim);
        let amps = out.as_mut_slice();
        for (i, &fi) in self.indices.iter().enumerate() {
            amps[fi] = Complex64::new(self.vector(k)[i], 0.0);
        }
        out
    }
}

/// Dense symmetric eigendecomposition of `h0` restricted to the `N_R = r`
/// sub-basis. Errors if the operator couples out of the sector (i.e. the
/// caller passed an uncut Hamiltonian) or the block is too large.
pub fn diagonalize_sector(
    h0: &SparseOperator,
    mask: &RightCountMask,
    r: usize,
) -> Result<SectorEigensystem> {
    let sub = mask.indices(r);
    let n = sub.len();
    if n == 0 {
        return Err(Error::Validation(format!(
            "right-count sector r = {r} is empty"
        )));
    }
    if n > SECTOR_DENSE_CAP {
        return Err(Error::OracleCap {
            dim: n,
            cap: SECTOR_DENSE_CAP,
        });
    }
    let pos: HashMap<usize, usize> = sub.iter().enumerate().map(|(k, &f)| (f, k)).collect();
    let mut a = vec![0.0f64; n * n];
    for (k, &fi) in sub.iter().enumerate() {
        for (fj, v) in h0.row(fi) {
            match pos.get(&fj) {
                Some(&kj) => a[k + kj * n] = v,
                None => {
                    return Err(Error::Validation(
                        "operator couples out of the right-count sector; \
                         sector diagonalization requires the cut Hamiltonian"
                            .into(),
                    ))
                }
            }
        }
    }
    let energies = eigh(&mut a, n)?;
    Ok(SectorEigensystem {
        n_r: r,
        indices: sub.to_vec(),
        energies,
        vectors: a,
    })
}

/// Gap parameters g_α = max_ν |⟨E_α | H₁ | E_ν⟩ / (E_α − E_ν)| between the
/// low-right-count block (α = 0 is the unique N_R = 0 configuration, α ≥ 1
/// ascends in N_R = 1 energy) and the N_R = 2 block, which is the only block
/// the cut hop reaches from there.
#[derive(Debug, Clone)]
pub struct VvptGapTable {
    pub energies: Vec<f64>,
    pub gaps: Vec<f64>,
    pub flagged: Vec<bool>,
    pub alpha_mid: usize,
}

impl VvptGapTable {
    /// Number of α entries (1 + the N_R = 1 sub-dimension).
    pub fn len(&self) -> usize {
        self.gaps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gaps.is_empty()
    }

    pub fn write_csv<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        writeln!(w, "alpha,E_alpha,g_alpha,flagged")?;
        for alpha in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                alpha, self.energies[alpha], self.gaps[alpha], self.flagged[alpha]
            )?;
        }
        Ok(())
    }
}

/// Compute the gap table from the three sector eigensystems and the cut hop.
///
/// `degeneracy_threshold` is the |E_α − E_ν| floor (in the caller's energy
/// units) below which a nonzero coupling is flagged as divergent.
pub fn vvpt_gap(
    r0: &SectorEigensystem,
    r1: &SectorEigensystem,
    r2: &SectorEigensystem,
    h1: &SparseOperator,
    degeneracy_threshold: f64,
) -> Result<VvptGapTable> {
    if r0.n_r != 0 || r1.n_r != 1 || r2.n_r != 2 {
        return Err(Error::Validation(
            "vvpt_gap expects the N_R = 0, 1, 2 eigensystems in order".into(),
        ));
    }
    let d1 = r1.sub_dim();
    let d2 = r2.sub_dim();
    let n_alpha = 1 + d1;

    // Sparse coupling block between the (r0 ∪ r1) sub-basis and the r2
    // sub-basis: one pass over the cut-hop rows of the r2 states.
    let mut pos_low: HashMap<usize, usize> = HashMap::with_capacity(n_alpha);
    pos_low.insert(r0.indices()[0], 0);
    for (i, &fi) in r1.indices().iter().enumerate() {
        pos_low.insert(fi, 1 + i);
    }
    // t[i][nu] = Σ_j B[i, j] V2[j, nu], accumulated from B's nonzeros
    let mut t = vec![0.0f64; n_alpha * d2];
    for (j, &fj) in r2.indices().iter().enumerate() {
        for (fi, v) in h1.row(fj) {
            if let Some(&i) = pos_low.get(&fi) {
                for nu in 0..d2 {
                    t[i * d2 + nu] += v * r2.vector(nu)[j];
                }
            }
        }
    }

    let mut energies = Vec::with_capacity(n_alpha);
    energies.push(r0.energies()[0]);
    energies.extend_from_slice(r1.energies());

    let mut gaps = vec![0.0f64; n_alpha];
    let mut flagged = vec![false; n_alpha];
    for alpha in 0..n_alpha {
        let e_a = energies[alpha];
        let mut best = 0.0f64;
        let mut diverged = false;
        for nu in 0..d2 {
            // coupling ⟨E_alpha | H1 | E_nu⟩ in the H0 eigenbases
            let c = if alpha == 0 {
                t[nu]
            } else {
                let va = r1.vector(alpha - 1);
                let mut acc = 0.0;
                for i in 0..d1 {
                    acc += va[i] * t[(1 + i) * d2 + nu];
                }
                acc
            };
            if c == 0.0 {
                continue;
            }
            let de = e_a - r2.energies()[nu];
            if de.abs() < degeneracy_threshold {
                if c.abs() > 1e-14 {
                    diverged = true;
                }
                continue;
            }
            best = best.max((c / de).abs());
        }
        gaps[alpha] = if diverged { f64::INFINITY } else { best };
        flagged[alpha] = diverged;
    }

    Ok(VvptGapTable {
        energies,
        gaps,
        flagged,
        alpha_mid: alpha_mid(d1),
    })
}

/// ⌈D_{Q₀}/2⌉ for a combined block of 1 + d1 states.
pub fn alpha_mid(r1_sub_dim: usize) -> usize {
    (1 + r1_sub_dim).div_ceil(2)
}

/// Energy selector for the Gaussian filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterEnergy {
    /// Lowest N_R = 1 eigenvalue.
    Ground,
    /// The mid-spectrum state α_mid of the combined (N_R = 0) ∪ (N_R = 1) block.
    Mid,
    Value(f64),
}

/// Configuration of the energy-filtered random initial state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub energy: FilterEnergy,
    pub sigma: f64,
    pub seed: u64,
}

impl FilterSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return Err(Error::Validation(format!(
                "filter sigma must be positive and finite, got {}",
                self.sigma
            )));
        }
        Ok(())
    }

    /// Resolve the target energy against the N_R = 1 eigensystem.
    pub fn resolve_energy(&self, r1: &SectorEigensystem) -> f64 {
        match self.energy {
            FilterEnergy::Ground => r1.energies()[0],
            FilterEnergy::Mid => r1.energies()[alpha_mid(r1.sub_dim()) - 1],
            FilterEnergy::Value(e) => e,
        }
    }
}

/// Draw a random state in the N_R = 1 sub-basis, damp its H₀-eigenbasis
/// coefficients with exp[−((E_k − E)/σ)²], normalize, and embed into the
/// full sector.
///
/// The random amplitudes are i.i.d. standard complex Gaussians from a
/// counter-based stream, so a (seed, sector) pair pins the state exactly.
pub fn filtered_initial_state(
    r1: &SectorEigensystem,
    filter: &FilterSpec,
    sector: &FockSector,
) -> Result<StateVector> {
    filter.validate()?;
    if r1.n_r() != 1 {
        return Err(Error::Validation(
            "filtered initial state is defined on the N_R = 1 eigensystem".into(),
        ));
    }
    let d1 = r1.sub_dim();
    let mut rng = ChaCha12Rng::seed_from_u64(filter.seed);
    let normal = StandardNormal;
    let root_half = 0.5f64.sqrt();
    let z: Vec<Complex64> = (0..d1)
        .map(|_| {
            let re: f64 = normal.sample(&mut rng);
            let im: f64 = normal.sample(&mut rng);
            Complex64::new(re * root_half, im * root_half)
        })
        .collect();

    let e0 = filter.resolve_energy(r1);
    // eigenbasis coefficients, filtered
    let mut y = vec![Complex64::new(0.0, 0.0); d1];
    for k in 0..d1 {
        let vk = r1.vector(k);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..d1 {
            acc += vk[i] * z[i];
        }
        let u = (r1.energies()[k] - e0) / filter.sigma;
        y[k] = acc * (-u * u).exp();
    }
    // back to the sub-basis
    let mut w = vec![Complex64::new(0.0, 0.0); d1];
    for k in 0..d1 {
        let vk = r1.vector(k);
        let yk = y[k];
        for i in 0..d1 {
            w[i] += vk[i] * yk;
        }
    }
    let norm_sqr: f64 = w.iter().map(|a| a.norm_sqr()).sum();
    let norm = norm_sqr.sqrt();
    if norm < 1e-14 {
        return Err(Error::FilterAnnihilated { norm });
    }
    let inv = 1.0 / norm;
    let mut out = StateVector::zeros(sector.dim());
    let amps = out.as_mut_slice();
    for (i, &fi) in r1.indices().iter().enumerate() {
        amps[fi] = w[i] * inv;
    }
    Ok(out)
}
