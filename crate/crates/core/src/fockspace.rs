//! Occupation-number basis for `N` bosons in `M` modes.
//!
//! States are kept in lexicographically descending order, so the first state
//! is `(N, 0, ..., 0)` and the last is `(0, ..., 0, N)`. Lookup is a
//! combinatorial rank computed in `O(M)` from a binomial table.

use std::fmt;

use crate::error::{Error, Result};

pub const DEFAULT_MAX_DIMENSION: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct OccupationState(Vec<u32>);

impl OccupationState {
    pub fn new(occupations: Vec<u32>) -> Self {
        Self(occupations)
    }

    pub fn occupations(&self) -> &[u32] {
        &self.0
    }

    pub fn n_modes(&self) -> usize {
        self.0.len()
    }

    pub fn n_particles(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Matrix element of `a_i^dagger a_j` on this state.
    ///
    /// Returns the real coefficient together with the resulting state, or
    /// `None` when `a_j` annihilates the state.
    pub fn hop(&self, i: usize, j: usize) -> Option<(f64, OccupationState)> {
        let mut out = self.clone();
        hop_in_place(&mut out.0, i, j).map(|c| (c, out))
    }
}

impl From<Vec<u32>> for OccupationState {
    fn from(v: Vec<u32>) -> Self {
        Self(v)
    }
}

impl fmt::Display for OccupationState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (k, n) in self.0.iter().enumerate() {
            if k > 0 {
                write!(f, ",")?;
            }
            write!(f, "{n}")?;
        }
        write!(f, ")")
    }
}

/// Applies `a_i^dagger a_j` in place and returns the coefficient.
///
/// For `i == j` this is the number operator: the state is untouched and the
/// coefficient is `n_i` (which may be zero).
pub fn hop_in_place(occ: &mut [u32], i: usize, j: usize) -> Option<f64> {
    if i == j {
        return Some(occ[i] as f64);
    }
    let nj = occ[j];
    if nj == 0 {
        return None;
    }
    let ni = occ[i];
    occ[j] = nj - 1;
    occ[i] = ni + 1;
    Some(((ni as f64 + 1.0) * nj as f64).sqrt())
}

/// Matrix element of `a_i^dagger a_j` on `state`.
pub fn hop_element(state: &OccupationState, i: usize, j: usize) -> Option<(f64, OccupationState)> {
    state.hop(i, j)
}

/// `C(N + M - 1, M - 1)`, or `None` on overflow.
pub fn basis_dimension(n_particles: u32, n_modes: usize) -> Option<u128> {
    if n_modes == 0 {
        return None;
    }
    binomial_u128(n_particles as u128 + n_modes as u128 - 1, n_modes as u128 - 1)
}

fn binomial_u128(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(n - k + i)? / i;
    }
    Some(acc)
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    n_particles: u32,
    n_modes: usize,
    states: Vec<OccupationState>,
    // binom[a * (n_modes + 1) + b] = C(a, b) for a <= N + M, b <= M
    binom: Vec<u64>,
}

impl FockBasis {
    pub fn new(n_particles: u32, n_modes: usize) -> Result<Self> {
        Self::with_max_dimension(n_particles, n_modes, DEFAULT_MAX_DIMENSION)
    }

    pub fn with_max_dimension(n_particles: u32, n_modes: usize, max_dim: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::InvalidParameter("n_modes must be at least 1".into()));
        }
        let dim = basis_dimension(n_particles, n_modes).unwrap_or(u128::MAX);
        if dim > max_dim as u128 {
            return Err(Error::Capacity { dim, max: max_dim });
        }

        let rows = n_particles as usize + n_modes + 1;
        let cols = n_modes + 1;
        let mut binom = vec![0u64; rows * cols];
        for a in 0..rows {
            binom[a * cols] = 1;
            for b in 1..cols.min(a + 1) {
                binom[a * cols + b] = binom[(a - 1) * cols + b - 1] + binom[(a - 1) * cols + b];
            }
        }

        let mut states = Vec::with_capacity(dim as usize);
        let mut current = vec![0u32; n_modes];
        fill_descending(&mut states, &mut current, 0, n_particles);
        debug_assert_eq!(states.len() as u128, dim);

        Ok(Self {
            n_particles,
            n_modes,
            states,
            binom,
        })
    }

    pub fn n_particles(&self) -> u32 {
        self.n_particles
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[OccupationState] {
        &self.states
    }

    pub fn state(&self, k: usize) -> &OccupationState {
        &self.states[k]
    }

    fn binom(&self, a: usize, b: usize) -> u64 {
        if b > a {
            0
        } else {
            self.binom[a * (self.n_modes + 1) + b]
        }
    }

    /// Rank of an occupation vector already known to lie in this basis.
    pub(crate) fn rank_unchecked(&self, occ: &[u32]) -> usize {
        let m = self.n_modes;
        let mut rank = 0u64;
        let mut remaining = self.n_particles as usize;
        for (i, &ni) in occ.iter().enumerate().take(m - 1) {
            let ni = ni as usize;
            let parts_after = m - i - 1;
            if remaining > ni {
                // states sharing the prefix with a larger entry at position i
                rank += self.binom(remaining - ni - 1 + parts_after, parts_after);
            }
            remaining -= ni;
        }
        rank as usize
    }

    pub fn index_of(&self, state: &OccupationState) -> Result<usize> {
        self.index_of_slice(state.occupations())
    }

    pub fn index_of_slice(&self, occ: &[u32]) -> Result<usize> {
        let total: u64 = occ.iter().map(|&n| n as u64).sum();
        if occ.len() != self.n_modes || total != self.n_particles as u64 {
            return Err(Error::StateNotFound {
                state: occ.to_vec(),
                n_particles: self.n_particles,
                n_modes: self.n_modes,
            });
        }
        Ok(self.rank_unchecked(occ))
    }

    /// Expectation of each mode occupation over an amplitude vector,
    /// unnormalized: `sum_k |c_k|^2 n_i(k)`.
    pub fn mode_weights(&self, amplitudes: &[num_complex::Complex64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_modes];
        for (s, c) in self.states.iter().zip(amplitudes) {
            let w = c.norm_sqr();
            for (o, &n) in out.iter_mut().zip(s.occupations()) {
                *o += w * n as f64;
            }
        }
        out
    }
}

fn fill_descending(out: &mut Vec<OccupationState>, current: &mut [u32], pos: usize, remaining: u32) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(OccupationState(current.to_vec()));
        return;
    }
    for v in (0..=remaining).rev() {
        current[pos] = v;
        fill_descending(out, current, pos + 1, remaining - v);
    }
    current[pos] = 0;
}

pub fn enumerate_basis(n_particles: u32, n_modes: usize) -> Result<FockBasis> {
    FockBasis::new(n_particles, n_modes)
}
