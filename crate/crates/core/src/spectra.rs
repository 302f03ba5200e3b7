//! Dense complex eigendecomposition, PT-breaking detection and threshold
//! search.

use std::hash::{Hash, Hasher};

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fockspace::FockBasis;
use crate::model::{build_coefficients, build_many_body, ManyBodyMatrix, ModelParams};

/// Eigenvector condition number above which a matrix is treated as
/// (nearly) defective.
pub const DEFECTIVE_CONDITION: f64 = 1e8;

/// Residual bound relative to `||H||_inf`.
pub const RESIDUAL_TOL: f64 = 1e-8;

/// Grouping tolerance for imaginary parts: `max(relative * max|Im E|, floor)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DegeneracyTolerance {
    pub relative: f64,
    pub floor: f64,
}

impl Default for DegeneracyTolerance {
    fn default() -> Self {
        Self {
            relative: 1e-8,
            floor: 1e-12,
        }
    }
}

impl DegeneracyTolerance {
    pub fn absolute(&self, eigenvalues: &[Complex64]) -> f64 {
        let max_im = eigenvalues.iter().map(|e| e.im.abs()).fold(0.0, f64::max);
        (self.relative * max_im).max(self.floor)
    }
}

#[derive(Debug, Clone)]
pub struct SpectrumResult {
    /// Sorted by descending imaginary part, ties by ascending real part.
    pub eigenvalues: Vec<Complex64>,
    /// Unit-norm right eigenvectors as columns, in the same order.
    pub eigenvectors: Mat<Complex64>,
    /// `eigenvectors^{-1}`; row `k` is the dual (left) vector of column `k`.
    pub dual: Mat<Complex64>,
    pub degeneracy_groups: Vec<Vec<usize>>,
    /// 1-norm condition number of the eigenvector matrix.
    pub condition: f64,
    /// Largest `||H v - E v|| / ||H||_inf`.
    pub max_residual: f64,
}

impl SpectrumResult {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_defective(&self) -> bool {
        !(self.condition <= DEFECTIVE_CONDITION)
    }

    /// Indices sharing the largest imaginary part (the first group).
    pub fn top_group(&self) -> &[usize] {
        &self.degeneracy_groups[0]
    }

    pub fn max_imag(&self) -> f64 {
        self.eigenvalues[0].im
    }

    pub fn regroup(&mut self, tol: DegeneracyTolerance) {
        self.degeneracy_groups = group_by_imag(&self.eigenvalues, tol);
    }
}

pub fn fingerprint(m: &Mat<Complex64>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    m.nrows().hash(&mut h);
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            m[(i, j)].re.to_bits().hash(&mut h);
            m[(i, j)].im.to_bits().hash(&mut h);
        }
    }
    h.finish()
}

fn sort_order(values: &[Complex64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..values.len()).collect();
    idx.sort_by(|&a, &b| {
        values[b]
            .im
            .total_cmp(&values[a].im)
            .then(values[a].re.total_cmp(&values[b].re))
    });
    idx
}

/// Groups consecutive (already sorted) eigenvalues whose imaginary parts lie
/// within the tolerance of the group's first member.
pub fn group_by_imag(sorted: &[Complex64], tol: DegeneracyTolerance) -> Vec<Vec<usize>> {
    let abs_tol = tol.absolute(sorted);
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut lead = f64::NAN;
    for (k, e) in sorted.iter().enumerate() {
        if groups.is_empty() || (lead - e.im).abs() > abs_tol {
            groups.push(vec![k]);
            lead = e.im;
        } else {
            groups.last_mut().unwrap().push(k);
        }
    }
    groups
}

/// All eigenvalues, sorted by descending imaginary part.
pub fn eigenvalues_dense(m: &Mat<Complex64>) -> Result<Vec<Complex64>> {
    let vals = m.eigenvalues().map_err(|e| Error::Eigen {
        fingerprint: fingerprint(m),
        reason: format!("{e:?}"),
    })?;
    if vals.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
        return Err(Error::Eigen {
            fingerprint: fingerprint(m),
            reason: "non-finite eigenvalue".into(),
        });
    }
    let order = sort_order(&vals);
    Ok(order.into_iter().map(|k| vals[k]).collect())
}

pub fn eigenvalues(h: &ManyBodyMatrix) -> Result<Vec<Complex64>> {
    eigenvalues_dense(&h.to_dense())
}

pub fn eigendecompose(h: &ManyBodyMatrix) -> Result<SpectrumResult> {
    let dense = h.to_dense();
    decompose(&dense, h.norm_inf(), |v, out| h.matvec(v, out))
}

pub fn eigendecompose_dense(m: &Mat<Complex64>) -> Result<SpectrumResult> {
    let n = m.nrows();
    if m.ncols() != n {
        return Err(Error::DimensionMismatch(format!("matrix is {}x{}", n, m.ncols())));
    }
    let norm = (0..n)
        .map(|i| (0..n).map(|j| m[(i, j)].norm()).sum::<f64>())
        .fold(0.0, f64::max);
    decompose(m, norm, |v, out| {
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..n).map(|j| m[(i, j)] * v[j]).sum();
        }
    })
}

fn decompose<F>(dense: &Mat<Complex64>, norm: f64, apply: F) -> Result<SpectrumResult>
where
    F: Fn(&[Complex64], &mut [Complex64]),
{
    let n = dense.nrows();
    let fail = |reason: String| Error::Eigen {
        fingerprint: fingerprint(dense),
        reason,
    };
    let evd = dense.eigen().map_err(|e| fail(format!("{e:?}")))?;
    let raw_vals: Vec<Complex64> = evd.S().column_vector().iter().copied().collect();
    let raw_vecs = evd.U();
    let order = sort_order(&raw_vals);

    let eigenvalues: Vec<Complex64> = order.iter().map(|&k| raw_vals[k]).collect();
    let mut eigenvectors = Mat::<Complex64>::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let nrm = (0..n).map(|i| raw_vecs[(i, src)].norm_sqr()).sum::<f64>().sqrt();
        if !(nrm > 0.0) || !nrm.is_finite() {
            return Err(fail(format!("eigenvector {src} has norm {nrm}")));
        }
        for i in 0..n {
            eigenvectors[(i, dst)] = raw_vecs[(i, src)] / nrm;
        }
    }

    let scale = norm.max(f64::MIN_POSITIVE);
    let mut hv = vec![Complex64::new(0.0, 0.0); n];
    let mut max_residual = 0.0f64;
    for k in 0..n {
        let v = eigenvectors.col_as_slice(k);
        apply(v, &mut hv);
        let r = hv
            .iter()
            .zip(v)
            .map(|(a, b)| (a - eigenvalues[k] * b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        max_residual = max_residual.max(r / scale);
    }
    if !(max_residual <= RESIDUAL_TOL) {
        return Err(fail(format!("eigenpair residual {max_residual:.3e} exceeds {RESIDUAL_TOL:.0e}")));
    }

    let dual = eigenvectors.partial_piv_lu().inverse();
    let col_norm1 = |m: &Mat<Complex64>| {
        (0..n)
            .map(|j| (0..n).map(|i| m[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let mut condition = col_norm1(&eigenvectors) * col_norm1(&dual);
    if !condition.is_finite() {
        condition = f64::INFINITY;
    }
    if condition > DEFECTIVE_CONDITION {
        log::warn!(
            "eigenvector condition number {condition:.3e} exceeds {DEFECTIVE_CONDITION:.0e}; possible exceptional point"
        );
    }

    let degeneracy_groups = group_by_imag(&eigenvalues, DegeneracyTolerance::default());
    Ok(SpectrumResult {
        eigenvalues,
        eigenvectors,
        dual,
        degeneracy_groups,
        condition,
        max_residual,
    })
}

/// Greedy nearest-neighbour matching: `perm[k]` is the index in `other`
/// paired with `reference[k]`.
pub fn match_spectra(reference: &[Complex64], other: &[Complex64]) -> Vec<usize> {
    let mut used = vec![false; other.len()];
    reference
        .iter()
        .map(|r| {
            let (best, _) = other
                .iter()
                .enumerate()
                .filter(|(k, _)| !used[*k])
                .map(|(k, o)| (k, (o - r).norm()))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .expect("spectra of equal length");
            used[best] = true;
            best
        })
        .collect()
}

pub fn default_imag_tol(params: &ModelParams) -> f64 {
    1e-9 * params.energy_scale()
}

/// True when the PT-shifted spectrum has an eigenvalue with
/// `|Im E| > imag_tol`.
pub fn is_pt_broken(params: &ModelParams, basis: &FockBasis, imag_tol: Option<f64>) -> Result<bool> {
    let tol = imag_tol.unwrap_or_else(|| default_imag_tol(params));
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("imag_tol must be positive, got {tol}")));
    }
    let h = build_many_body(params, basis, true)?;
    let vals = eigenvalues(&h)?;
    Ok(max_abs_imag(&vals) > tol)
}

pub fn max_abs_imag(vals: &[Complex64]) -> f64 {
    vals.iter().map(|v| v.im.abs()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdResult {
    pub beta_c: f64,
    pub bracket: (f64, f64),
    pub broken_at_min: bool,
}

/// Bisects on [`is_pt_broken`] over `[tol, beta_max]`. The loss in `params`
/// is ignored.
pub fn breaking_threshold(params: &ModelParams, basis: &FockBasis, beta_max: f64, tol: f64) -> Result<ThresholdResult> {
    if !(beta_max > 0.0) || !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "beta_max and tol must be positive (got {beta_max}, {tol})"
        )));
    }
    let broken = |beta: f64| is_pt_broken(&params.with_loss(beta), basis, None);

    let beta_min = tol;
    if broken(beta_min)? {
        return Ok(ThresholdResult {
            beta_c: 0.0,
            bracket: (0.0, beta_min),
            broken_at_min: true,
        });
    }
    if !broken(beta_max)? {
        return Err(Error::Bracket { beta_max });
    }
    let (mut lo, mut hi) = (beta_min, beta_max);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if broken(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(ThresholdResult {
        beta_c: 0.5 * (lo + hi),
        bracket: (lo, hi),
        broken_at_min: false,
    })
}

/// Thresholds for many parameter sets, in input order.
pub fn breaking_thresholds(
    points: &[ModelParams],
    beta_max: f64,
    tol: f64,
    exec: Execution,
) -> Vec<Result<ThresholdResult>> {
    exec::map_ordered(points, exec, |p| {
        let basis = FockBasis::new(p.n_particles, p.n_modes)?;
        breaking_threshold(p, &basis, beta_max, tol)
    })
}

/// Eigenvalues of the single-particle PT matrix `h^h + h^a + i beta / 2`.
pub fn single_particle_pt_eigenvalues(params: &ModelParams) -> Result<Vec<Complex64>> {
    let coeffs = build_coefficients(params)?.with_imaginary_shift(params.loss / 2.0);
    eigenvalues_dense(&coeffs.single_particle())
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseDiagram {
    pub gammas: Vec<f64>,
    pub betas: Vec<f64>,
    /// `max Im eps`, row-major over `(gamma, beta)`.
    pub max_imag: Vec<f64>,
}

impl PhaseDiagram {
    pub fn get(&self, gi: usize, bi: usize) -> f64 {
        self.max_imag[gi * self.betas.len() + bi]
    }
}

pub fn single_particle_phase_diagram(
    gammas: &[f64],
    betas: &[f64],
    raman: f64,
    hopping: f64,
    exec: Execution,
) -> Result<PhaseDiagram> {
    if gammas.is_empty() || betas.is_empty() {
        return Err(Error::InvalidParameter("phase-diagram grids must be non-empty".into()));
    }
    let points: Vec<(f64, f64)> = gammas
        .iter()
        .flat_map(|&g| betas.iter().map(move |&b| (g, b)))
        .collect();
    let values = exec::map_ordered(&points, exec, |&(gamma, beta)| {
        let p = ModelParams {
            hopping,
            raman,
            soc: gamma,
            loss: beta,
            ..ModelParams::default()
        };
        single_particle_pt_eigenvalues(&p).map(|v| v.iter().map(|e| e.im).fold(f64::NEG_INFINITY, f64::max))
    });
    let max_imag = values.into_iter().collect::<Result<Vec<_>>>()?;
    Ok(PhaseDiagram {
        gammas: gammas.to_vec(),
        betas: betas.to_vec(),
        max_imag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::enumerate_basis;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn decoupled_hopping_pairs() {
        let p = ModelParams {
            raman: 0.0,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(1, 4).unwrap();
        let s = eigendecompose(&build_many_body(&p, &basis, false).unwrap()).unwrap();
        let mut re: Vec<f64> = s.eigenvalues.iter().map(|e| e.re).collect();
        re.sort_by(f64::total_cmp);
        for (a, b) in re.iter().zip([-1.0, -1.0, 1.0, 1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.eigenvalues.iter().all(|e| e.im.abs() < 1e-12));
    }

    #[test]
    fn hermitian_spectrum_is_real() {
        let p = ModelParams {
            interaction: 1.3,
            soc: 0.2,
            n_particles: 5,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(5, 4).unwrap();
        let s = eigendecompose(&build_many_body(&p, &basis, false).unwrap()).unwrap();
        assert!(max_abs_imag(&s.eigenvalues) < 1e-10);
        assert!(s.condition < 1e4);
    }

    #[test]
    fn sorted_descending_imag() {
        let p = ModelParams {
            interaction: 1.0,
            loss: 0.3,
            n_particles: 3,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(3, 4).unwrap();
        let s = eigendecompose(&build_many_body(&p, &basis, false).unwrap()).unwrap();
        for w in s.eigenvalues.windows(2) {
            assert!(w[0].im >= w[1].im);
        }
        // lossy spectrum lies in the lower half plane
        assert!(s.eigenvalues.iter().all(|e| e.im <= 1e-12));
        let covered: usize = s.degeneracy_groups.iter().map(Vec::len).sum();
        assert_eq!(covered, s.dim());
    }

    #[test]
    fn grouping() {
        let vals = [c(0.0, -0.1), c(1.0, -0.1 - 1e-13), c(2.0, -0.5), c(0.0, -2.0)];
        let g = group_by_imag(&vals, DegeneracyTolerance::default());
        assert_eq!(g, vec![vec![0, 1], vec![2], vec![3]]);
    }

    #[test]
    fn matching_recovers_permutation() {
        let a = [c(1.0, 0.0), c(2.0, 1.0), c(-1.0, 0.5)];
        let b = [c(-1.0, 0.5), c(1.0, 0.0), c(2.0, 1.0)];
        assert_eq!(match_spectra(&a, &b), vec![1, 2, 0]);
    }

    #[test]
    fn lossless_never_broken() {
        let p = ModelParams {
            interaction: 2.0,
            soc: 0.5,
            n_particles: 3,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(3, 4).unwrap();
        assert!(!is_pt_broken(&p, &basis, None).unwrap());
    }

    #[test]
    fn half_integer_soc_breaks() {
        let p = ModelParams {
            interaction: 0.1,
            soc: 0.5,
            loss: 0.01,
            n_particles: 10,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(10, 4).unwrap();
        assert!(is_pt_broken(&p, &basis, None).unwrap());
    }

    #[test]
    fn threshold_bracket_error() {
        let p = ModelParams::default();
        let basis = enumerate_basis(1, 4).unwrap();
        assert!(matches!(
            breaking_threshold(&p, &basis, 0.5, 1e-3),
            Err(Error::Bracket { .. })
        ));
    }

    #[test]
    fn phase_diagram_rows() {
        let gammas = [0.0, 0.25, 0.5];
        let betas = [0.0, 0.5, 1.0];
        let pd = single_particle_phase_diagram(&gammas, &betas, 1.0, 1.0, Execution::default()).unwrap();
        for gi in 0..3 {
            assert!(pd.get(gi, 0).abs() < 1e-12);
        }
        assert!(pd.get(2, 1) > 1e-6);
        assert!(single_particle_phase_diagram(&[], &betas, 1.0, 1.0, Execution::default()).is_err());
    }

    #[test]
    fn dense_entry_point_agrees() {
        let p = ModelParams {
            interaction: 0.7,
            loss: 0.2,
            soc: 0.1,
            n_particles: 2,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(2, 4).unwrap();
        let h = build_many_body(&p, &basis, false).unwrap();
        let a = eigendecompose(&h).unwrap();
        let b = eigendecompose_dense(&h.to_dense()).unwrap();
        for (x, y) in a.eigenvalues.iter().zip(&b.eigenvalues) {
            assert!((x - y).norm() < 1e-10);
        }
    }
}
