//! Sparse operators over a Fock sector: the single-impurity chain Hamiltonian
//! and its cut/uncut variants, diagonal projectors and observables, and an
//! independently assembled spin-chain twin used to cross-check the fermionic
//! sign convention.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::fock::FockSector;

/// Couplings of the chain. `hopping` (J) sets the energy unit, `interaction`
/// (Δ) multiplies the attractive nearest-neighbour density product, and
/// `impurity` (ε₀) is the on-site potential at site 0. With
/// `boundary_hop = false` the hop across the 0 ↔ 1 bond is omitted, which
/// turns H into the cut Hamiltonian H₀.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HamiltonianParams {
    pub hopping: f64,
    pub interaction: f64,
    pub impurity: f64,
    pub boundary_hop: bool,
}

impl Default for HamiltonianParams {
    fn default() -> Self {
        Self {
            hopping: 1.0,
            interaction: 1.0,
            impurity: 0.5,
            boundary_hop: true,
        }
    }
}

impl HamiltonianParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(Error::Validation(format!(
                "hopping J must be positive and finite, got {}",
                self.hopping
            )));
        }
        if !self.interaction.is_finite() || !self.impurity.is_finite() {
            return Err(Error::Validation(
                "interaction and impurity must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Same couplings with the cut bond removed (builds H₀).
    pub fn without_boundary_hop(mut self) -> Self {
        self.boundary_hop = false;
        self
    }
}

/// Real symmetric operator in compressed sparse row form.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    dim: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<f64>,
}

impl SparseOperator {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Assemble from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
        for &(i, j, v) in triplets {
            rows[i].push((j as u32, v));
        }
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for mut row in rows {
            row.sort_by_key(|&(c, _)| c);
            let mut it = row.into_iter().peekable();
            while let Some((c, mut v)) = it.next() {
                while it.peek().map(|&(c2, _)| c2 == c).unwrap_or(false) {
                    v += it.next().unwrap().1;
                }
                if v != 0.0 {
                    cols.push(c);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self {
            dim,
            row_ptr,
            cols,
            vals,
        }
    }

    /// Stored entries of one row as (col, value).
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.row_ptr[i]..self.row_ptr[i + 1]).map(move |k| (self.cols[k] as usize, self.vals[k]))
    }

    /// All stored entries as (row, col, value).
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            (self.row_ptr[i]..self.row_ptr[i + 1])
                .map(move |k| (i, self.cols[k] as usize, self.vals[k]))
        })
    }

    /// y = A x for a complex vector.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row_ptr = &self.row_ptr;
        let cols = &self.cols;
        let vals = &self.vals;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = Complex64::new(0.0, 0.0);
            for k in row_ptr[i]..row_ptr[i + 1] {
                acc += vals[k] * x[cols[k] as usize];
            }
            *yi = acc;
        });
    }

    /// y = A x for a real vector.
    pub fn apply_real(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        let row_ptr = &self.row_ptr;
        let cols = &self.cols;
        let vals = &self.vals;
        y.par_iter_mut().enumerate().for_each(|(i, yi)| {
            let mut acc = 0.0;
            for k in row_ptr[i]..row_ptr[i + 1] {
                acc += vals[k] * x[cols[k] as usize];
            }
            *yi = acc;
        });
    }

    /// Dense row-major copy (equals column-major for symmetric operators).
    pub fn to_dense(&self) -> Vec<f64> {
        let mut a = vec![0.0; self.dim * self.dim];
        for (i, j, v) in self.triplets() {
            a[i * self.dim + j] = v;
        }
        a
    }

    /// Entry-wise sum with another operator on the same sector.
    pub fn add(&self, other: &Self) -> Self {
        assert_eq!(self.dim, other.dim);
        let mut t: Vec<(usize, usize, f64)> = self.triplets().collect();
        t.extend(other.triplets());
        Self::from_triplets(self.dim, &t)
    }

    /// All values multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for v in &mut out.vals {
            *v *= factor;
        }
        out
    }

    /// `A + c·I`.
    pub fn with_shifted_diagonal(&self, c: f64) -> Self {
        let mut t: Vec<(usize, usize, f64)> = self.triplets().collect();
        for i in 0..self.dim {
            t.push((i, i, c));
        }
        Self::from_triplets(self.dim, &t)
    }

    /// Dump as whitespace-separated `row col value` lines.
    pub fn write_triplets<W: std::io::Write>(&self, w: &mut W) -> std::io::Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(w, "{i} {j} {v}")?;
        }
        Ok(())
    }

    /// Largest |A_ij − A_ji| over stored entries; zero for exact symmetry.
    pub fn symmetry_defect(&self) -> f64 {
        use std::collections::HashMap;
        let mut map: HashMap<(usize, usize), f64> = HashMap::new();
        for (i, j, v) in self.triplets() {
            map.insert((i, j), v);
        }
        let mut worst = 0.0f64;
        for (&(i, j), &v) in &map {
            let vt = map.get(&(j, i)).copied().unwrap_or(0.0);
            worst = worst.max((v - vt).abs());
        }
        worst
    }
}

/// Fermionic string sign for a hop between bit positions `lo < hi`: parity of
/// the occupied sites strictly between them. Nearest-neighbour hops always
/// come out +1, but the generic rule is what the spin-twin test validates.
fn hop_sign(state: u64, lo: usize, hi: usize) -> f64 {
    debug_assert!(lo < hi);
    let between = hi - lo - 1;
    if between == 0 {
        return 1.0;
    }
    let mask = ((1u64 << between) - 1) << (lo + 1);
    if (state & mask).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

fn assemble_chain(
    sector: &FockSector,
    params: &HamiltonianParams,
    only_cut_bond: bool,
    fermionic: bool,
) -> Result<SparseOperator> {
    params.validate()?;
    let n = sector.n_sites();
    let dim = sector.dim();
    let cut_bond = n / 2 - 1; // bond between site 0 and site 1
    let site0_bit = n / 2 - 1;
    let hop_amp = -params.hopping / 2.0;

    let bond_range: Vec<usize> = if only_cut_bond {
        vec![cut_bond]
    } else {
        (0..n - 1)
            .filter(|&b| params.boundary_hop || b != cut_bond)
            .collect()
    };

    let mut row_ptr = Vec::with_capacity(dim + 1);
    let mut cols: Vec<u32> = Vec::new();
    let mut vals: Vec<f64> = Vec::new();
    row_ptr.push(0);
    let mut row: Vec<(u32, f64)> = Vec::with_capacity(n + 1);
    for i in 0..dim {
        let s = sector.state(i);
        row.clear();
        if !only_cut_bond {
            let mut diag = 0.0;
            for b in 0..n - 1 {
                let pair = 0b11u64 << b;
                if s & pair == pair {
                    diag -= params.interaction;
                }
            }
            if s >> site0_bit & 1 == 1 {
                diag += params.impurity;
            }
            if diag != 0.0 {
                row.push((i as u32, diag));
            }
        }
        for &b in &bond_range {
            let pair = 0b11u64 << b;
            let occ = s & pair;
            if occ != 0 && occ != pair {
                let t = s ^ pair;
                let j = sector
                    .index_of(t)
                    .expect("hop conserves particle number within the sector");
                let sign = if fermionic { hop_sign(s, b, b + 1) } else { 1.0 };
                row.push((j as u32, hop_amp * sign));
            }
        }
        row.sort_by_key(|&(c, _)| c);
        for &(c, v) in &row {
            cols.push(c);
            vals.push(v);
        }
        row_ptr.push(cols.len());
    }
    Ok(SparseOperator {
        dim,
        row_ptr,
        cols,
        vals,
    })
}

/// The chain Hamiltonian on the sector. With `params.boundary_hop = false`
/// the 0 ↔ 1 hop rows are omitted, which yields the cut Hamiltonian H₀.
pub fn build_hamiltonian(sector: &FockSector, params: &HamiltonianParams) -> Result<SparseOperator> {
    assemble_chain(sector, params, false, true)
}

/// Just the hop across the left/right cut: H₁ = H − H₀. Its matrix elements
/// connect states whose right-half particle numbers differ by exactly one.
pub fn build_h1(sector: &FockSector, params: &HamiltonianParams) -> Result<SparseOperator> {
    assemble_chain(sector, params, true, true)
}

/// Flip-flop + density twin of the chain assembled without any fermionic
/// sign bookkeeping. Its spectrum must match `build_hamiltonian` exactly;
/// that agreement is the machine check on the sign convention.
pub fn build_spin_equivalent(
    sector: &FockSector,
    params: &HamiltonianParams,
) -> Result<SparseOperator> {
    assemble_chain(sector, params, false, false)
}

/// 0/1 diagonal mask over a sector. `keep[i]` marks basis states the
/// projector retains.
#[derive(Debug, Clone)]
pub struct DiagonalMask {
    keep: Vec<bool>,
    ones: usize,
}

impl DiagonalMask {
    pub fn from_keep(keep: Vec<bool>) -> Self {
        let ones = keep.iter().filter(|&&k| k).count();
        Self { keep, ones }
    }

    pub fn dim(&self) -> usize {
        self.keep.len()
    }

    /// Number of basis states the projector keeps.
    pub fn ones(&self) -> usize {
        self.ones
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    pub fn is_kept(&self, i: usize) -> bool {
        self.keep[i]
    }

    /// The complementary projector (1 − P).
    pub fn complement(&self) -> Self {
        Self::from_keep(self.keep.iter().map(|k| !k).collect())
    }

    /// Values as a 0/1 diagonal.
    pub fn as_diagonal(&self) -> Vec<f64> {
        self.keep.iter().map(|&k| if k { 1.0 } else { 0.0 }).collect()
    }
}

/// Projector mask selecting basis states with *all* listed sites occupied.
/// For two detector sites (p, q) this is the signal projector n̂_p n̂_q; the
/// empty list gives the identity.
pub fn projector_mask(sector: &FockSector, sites: &[i64]) -> Result<DiagonalMask> {
    let mut bits_mask = 0u64;
    for &site in sites {
        bits_mask |= 1u64 << sector.site_bit(site)?;
    }
    let keep = sector
        .states()
        .iter()
        .map(|&s| s & bits_mask == bits_mask)
        .collect();
    Ok(DiagonalMask::from_keep(keep))
}

/// Diagonal observables measurable on a single basis state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Observable {
    /// Occupation of one site, n̂_ℓ.
    SiteOccupation(i64),
    /// Particle count on the right half, N̂_R.
    RightHalfCount,
}

/// Per-basis-state values of a diagonal observable.
pub fn observable_diag(sector: &FockSector, kind: Observable) -> Result<Vec<f64>> {
    match kind {
        Observable::SiteOccupation(site) => {
            let bit = sector.site_bit(site)?;
            Ok(sector
                .states()
                .iter()
                .map(|&s| (s >> bit & 1) as f64)
                .collect())
        }
        Observable::RightHalfCount => Ok(sector
            .states()
            .iter()
            .map(|&s| sector.right_half_count(s) as f64)
            .collect()),
    }
}
