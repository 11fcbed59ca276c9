//! Occupation-number basis for spinless fermions on a chain at fixed filling.
//!
//! Sites are labelled `-N/2+1 ..= N/2`; bit `b` of a basis bitstring holds the
//! occupation of site `b - N/2 + 1`, so the right half of the chain (sites
//! `1 ..= N/2`) occupies the high bits. Basis states are stored sorted by
//! integer value, which fixes a canonical index for every configuration.

use crate::error::{Error, Result};

/// Default cap on the number of basis states a sector may hold.
///
/// Large enough for half filling at N = 26 (D = 10 400 600), small enough to
/// refuse sectors that cannot fit in memory before any allocation happens.
pub const DEFAULT_DIM_BUDGET: usize = 1 << 24;

/// Exact binomial coefficient in u128 (step-wise multiply/divide, no overflow
/// for the lattice sizes this crate accepts).
pub fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc * (n - k + i) as u128 / i as u128;
    }
    acc
}

/// Fixed-particle-number basis of an even-length chain.
#[derive(Debug, Clone)]
pub struct FockSector {
    n_sites: usize,
    n_particles: usize,
    states: Vec<u64>,
}

impl FockSector {
    /// Enumerate the sector basis in canonical (ascending bitstring) order.
    pub fn build(n_sites: usize, n_particles: usize) -> Result<Self> {
        Self::build_with_budget(n_sites, n_particles, DEFAULT_DIM_BUDGET)
    }

    /// Half-filling convenience used throughout the detection pipeline.
    pub fn half_filling(n_sites: usize) -> Result<Self> {
        if n_sites % 2 != 0 {
            return Err(Error::OddSiteCount(n_sites));
        }
        Self::build(n_sites, n_sites / 2)
    }

    pub fn build_with_budget(n_sites: usize, n_particles: usize, budget: usize) -> Result<Self> {
        if n_sites % 2 != 0 {
            return Err(Error::OddSiteCount(n_sites));
        }
        if n_sites == 0 || n_sites > 62 {
            return Err(Error::Validation(format!(
                "site count {n_sites} outside the supported range 2..=62"
            )));
        }
        if n_particles > n_sites {
            return Err(Error::BadFilling {
                n_sites,
                n_particles,
            });
        }
        let dim = binomial(n_sites, n_particles);
        if dim > budget as u128 {
            return Err(Error::DimensionBudget { dim, budget });
        }
        let mut states = Vec::with_capacity(dim as usize);
        if n_particles == 0 {
            states.push(0);
        } else {
            // Gosper's hack walks same-popcount bitstrings in ascending order.
            let mut v: u64 = (1u64 << n_particles) - 1;
            let last: u64 = v << (n_sites - n_particles);
            loop {
                states.push(v);
                if v == last {
                    break;
                }
                let c = v & v.wrapping_neg();
                let r = v + c;
                v = (((r ^ v) >> 2) / c) | r;
            }
        }
        debug_assert_eq!(states.len() as u128, dim);
        Ok(Self {
            n_sites,
            n_particles,
            states,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[u64] {
        &self.states
    }

    pub fn state(&self, index: usize) -> u64 {
        self.states[index]
    }

    /// Smallest site label on the chain (`-N/2 + 1`).
    pub fn site_min(&self) -> i64 {
        1 - self.n_sites as i64 / 2
    }

    /// Largest site label on the chain (`N/2`).
    pub fn site_max(&self) -> i64 {
        self.n_sites as i64 / 2
    }

    /// Bit position carrying the occupation of `site`.
    pub fn site_bit(&self, site: i64) -> Result<usize> {
        if site < self.site_min() || site > self.site_max() {
            return Err(Error::SiteOutOfRange {
                site,
                lo: self.site_min(),
                hi: self.site_max(),
            });
        }
        Ok((site + self.n_sites as i64 / 2 - 1) as usize)
    }

    /// Canonical index of a bitstring, by binary search.
    pub fn index_of(&self, bits: u64) -> Result<usize> {
        if bits.count_ones() as usize != self.n_particles {
            return Err(Error::StateNotFound { bits });
        }
        self.states
            .binary_search(&bits)
            .map_err(|_| Error::StateNotFound { bits })
    }

    /// Particle count on the right half (sites `1 ..= N/2`) of a bitstring.
    pub fn right_half_count(&self, bits: u64) -> usize {
        (bits >> (self.n_sites / 2)).count_ones() as usize
    }

    /// Decompose the sector by right-half particle number.
    pub fn right_count(&self) -> RightCountMask {
        let max_r = self.n_particles.min(self.n_sites / 2);
        let mut n_r = vec![0u8; self.dim()];
        let mut sub_indices: Vec<Vec<usize>> = vec![Vec::new(); max_r + 1];
        for (i, &s) in self.states.iter().enumerate() {
            let r = self.right_half_count(s);
            n_r[i] = r as u8;
            sub_indices[r].push(i);
        }
        RightCountMask { n_r, sub_indices }
    }
}

/// Per-state right-half particle count and the induced sub-basis split.
#[derive(Debug, Clone)]
pub struct RightCountMask {
    n_r: Vec<u8>,
    sub_indices: Vec<Vec<usize>>,
}

impl RightCountMask {
    /// Right-half count of basis state `i`.
    pub fn value(&self, i: usize) -> usize {
        self.n_r[i] as usize
    }

    pub fn values(&self) -> &[u8] {
        &self.n_r
    }

    /// Largest right-half count present.
    pub fn max_value(&self) -> usize {
        self.sub_indices.len() - 1
    }

    /// Sub-basis dimension of the `N_R = r` block.
    pub fn sub_dim(&self, r: usize) -> usize {
        self.sub_indices.get(r).map_or(0, Vec::len)
    }

    /// Full-sector indices of the `N_R = r` sub-basis, in canonical order.
    pub fn indices(&self, r: usize) -> &[usize] {
        self.sub_indices.get(r).map_or(&[], Vec::as_slice)
    }

    /// Boolean mask selecting the `N_R = r` sub-basis.
    pub fn mask(&self, r: usize) -> Vec<bool> {
        self.n_r.iter().map(|&v| v as usize == r).collect()
    }
}
