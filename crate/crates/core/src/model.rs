//! Coefficient matrices of the extended Bose-Hubbard model and the
//! many-body Hamiltonian assembled over a Fock basis.
//!
//! Mode order for the four-mode junction is `L-up, L-down, R-up, R-down`
//! (indices 0..4). The many-body operator is
//!
//! ```text
//! H = sum_ij (h^h + h^a)_ij a_i^+ a_j + (1/N) sum_ij h_ij a_i^+ a_j^+ a_i a_j
//! ```
//!
//! and the interaction part is diagonal in the occupation basis.

use std::f64::consts::PI;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fockspace::{hop_in_place, FockBasis};
use crate::sparse::CsrMatrix;

pub const PROPERTY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelParams {
    /// Inter-well tunneling `J`.
    pub hopping: f64,
    /// Raman coupling `Omega`.
    pub raman: f64,
    /// Spin-orbit coupling strength `gamma`; enters as `exp(+-i pi gamma)`.
    pub soc: f64,
    /// Total interaction `g`; pair terms carry `g / N`.
    pub interaction: f64,
    /// Loss rate `beta` on the right well.
    pub loss: f64,
    pub n_particles: u32,
    pub n_modes: usize,
}

impl Default for ModelParams {
    fn default() -> Self {
        Self {
            hopping: 1.0,
            raman: 1.0,
            soc: 0.0,
            interaction: 0.0,
            loss: 0.0,
            n_particles: 1,
            n_modes: 4,
        }
    }
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("hopping", self.hopping),
            ("raman", self.raman),
            ("soc", self.soc),
            ("interaction", self.interaction),
            ("loss", self.loss),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be finite, got {v}")));
            }
        }
        if self.loss < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "loss must be non-negative, got {}",
                self.loss
            )));
        }
        if self.n_modes != 4 {
            return Err(Error::UnsupportedModes(self.n_modes));
        }
        Ok(())
    }

    pub fn with_loss(mut self, loss: f64) -> Self {
        self.loss = loss;
        self
    }

    pub fn with_particles(mut self, n: u32) -> Self {
        self.n_particles = n;
        self
    }

    /// Scale used by the default PT-breaking tolerance:
    /// `N * max(J, Omega, |g|, 1)`.
    pub fn energy_scale(&self) -> f64 {
        self.n_particles.max(1) as f64
            * self.hopping.abs().max(self.raman.abs()).max(self.interaction.abs()).max(1.0)
    }
}

#[derive(Debug, Clone)]
pub struct CoefficientMatrices {
    hermitian: Mat<Complex64>,
    anti_hermitian: Mat<Complex64>,
    interaction: Mat<f64>,
}

impl CoefficientMatrices {
    pub fn n_modes(&self) -> usize {
        self.hermitian.nrows()
    }

    pub fn hermitian(&self) -> &Mat<Complex64> {
        &self.hermitian
    }

    pub fn anti_hermitian(&self) -> &Mat<Complex64> {
        &self.anti_hermitian
    }

    pub fn interaction(&self) -> &Mat<f64> {
        &self.interaction
    }

    /// `h^h + h^a`
    pub fn single_particle(&self) -> Mat<Complex64> {
        let m = self.n_modes();
        Mat::from_fn(m, m, |i, j| self.hermitian[(i, j)] + self.anti_hermitian[(i, j)])
    }

    /// Adds `shift * identity` to the anti-Hermitian part. `shift` must be
    /// purely imaginary.
    pub fn with_imaginary_shift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for i in 0..self.n_modes() {
            out.anti_hermitian[(i, i)] += Complex64::new(0.0, shift);
        }
        out
    }
}

/// The three coefficient matrices of the four-mode junction.
pub fn build_coefficients(params: &ModelParams) -> Result<CoefficientMatrices> {
    if params.n_modes != 4 {
        return Err(Error::UnsupportedModes(params.n_modes));
    }
    let j = params.hopping;
    let om = Complex64::new(params.raman, 0.0);
    let phase = Complex64::from_polar(1.0, -PI * params.soc);
    let hop_fwd = -j * phase; // -J e^{-i pi gamma}
    let hop_bwd = -j * phase.conj(); // -J e^{+i pi gamma}

    let mut hh = Mat::<Complex64>::zeros(4, 4);
    hh[(0, 1)] = om;
    hh[(1, 0)] = om;
    hh[(2, 3)] = om;
    hh[(3, 2)] = om;
    hh[(0, 2)] = hop_fwd;
    hh[(2, 0)] = hop_bwd;
    hh[(1, 3)] = hop_bwd;
    hh[(3, 1)] = hop_fwd;

    let mut ha = Mat::<Complex64>::zeros(4, 4);
    ha[(2, 2)] = Complex64::new(0.0, -params.loss);
    ha[(3, 3)] = Complex64::new(0.0, -params.loss);

    let half_g = params.interaction / 2.0;
    let h = Mat::<f64>::from_fn(4, 4, |a, b| if a / 2 == b / 2 { half_g } else { 0.0 });

    Ok(CoefficientMatrices {
        hermitian: hh,
        anti_hermitian: ha,
        interaction: h,
    })
}

/// Validates `(h^h)^+ = h^h`, `(h^a)^+ = -h^a` and `h^T = h` and stores the
/// triple. Any number of modes is accepted.
pub fn build_general_coefficients(
    hermitian: Mat<Complex64>,
    anti_hermitian: Mat<Complex64>,
    interaction: Mat<f64>,
) -> Result<CoefficientMatrices> {
    let m = hermitian.nrows();
    for (name, r, c) in [
        ("h^h", hermitian.nrows(), hermitian.ncols()),
        ("h^a", anti_hermitian.nrows(), anti_hermitian.ncols()),
        ("h", interaction.nrows(), interaction.ncols()),
    ] {
        if r != m || c != m {
            return Err(Error::DimensionMismatch(format!("{name} is {r}x{c}, expected {m}x{m}")));
        }
    }

    let scale = |d: f64, mag: f64| d / mag.max(1.0);
    let mut dev_h = 0.0f64;
    let mut dev_a = 0.0f64;
    let mut dev_n = 0.0f64;
    let mut mag_h = 0.0f64;
    let mut mag_a = 0.0f64;
    let mut mag_n = 0.0f64;
    for i in 0..m {
        for j in 0..m {
            dev_h = dev_h.max((hermitian[(i, j)] - hermitian[(j, i)].conj()).norm());
            dev_a = dev_a.max((anti_hermitian[(i, j)] + anti_hermitian[(j, i)].conj()).norm());
            dev_n = dev_n.max((interaction[(i, j)] - interaction[(j, i)]).abs());
            mag_h = mag_h.max(hermitian[(i, j)].norm());
            mag_a = mag_a.max(anti_hermitian[(i, j)].norm());
            mag_n = mag_n.max(interaction[(i, j)].abs());
            if !interaction[(i, j)].is_finite() {
                return Err(Error::InvalidParameter("interaction matrix is not finite".into()));
            }
        }
    }
    for (identity, dev, mag) in [
        ("(h^h)^+ = h^h", dev_h, mag_h),
        ("(h^a)^+ = -h^a", dev_a, mag_a),
        ("h^T = h", dev_n, mag_n),
    ] {
        if !(scale(dev, mag) <= PROPERTY_TOL) {
            return Err(Error::PropertyViolation {
                identity,
                deviation: dev,
            });
        }
    }
    Ok(CoefficientMatrices {
        hermitian,
        anti_hermitian,
        interaction,
    })
}

#[derive(Debug, Clone)]
pub struct ManyBodyMatrix {
    matrix: CsrMatrix,
    n_particles: u32,
    n_modes: usize,
    pt_shifted: bool,
}

impl ManyBodyMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn n_particles(&self) -> u32 {
        self.n_particles
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn is_pt_shifted(&self) -> bool {
        self.pt_shifted
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.matrix
    }

    pub fn nnz(&self) -> usize {
        self.matrix.nnz()
    }

    pub fn matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        self.matrix.matvec(x, y)
    }

    /// `y = (H - H^+) x / 2`
    pub fn anti_hermitian_matvec(&self, x: &[Complex64], y: &mut [Complex64]) {
        let mut adj = vec![Complex64::new(0.0, 0.0); x.len()];
        self.matrix.matvec(x, y);
        self.matrix.adjoint_matvec(x, &mut adj);
        for (a, b) in y.iter_mut().zip(&adj) {
            *a = (*a - b) * 0.5;
        }
    }

    pub fn to_dense(&self) -> Mat<Complex64> {
        self.matrix.to_dense()
    }

    pub fn norm_inf(&self) -> f64 {
        self.matrix.norm_inf()
    }

    pub fn write_coordinate<W: std::io::Write>(&self, w: W) -> std::io::Result<()> {
        self.matrix.write_coordinate(w)
    }
}

/// Many-body matrix of the four-mode junction. With `pt_shift` the constant
/// `i beta N / 2` is added on the diagonal, which turns the pure loss into
/// balanced gain and loss.
pub fn build_many_body(params: &ModelParams, basis: &FockBasis, pt_shift: bool) -> Result<ManyBodyMatrix> {
    build_many_body_with(params, basis, pt_shift, Execution::default())
}

pub fn build_many_body_with(
    params: &ModelParams,
    basis: &FockBasis,
    pt_shift: bool,
    exec: Execution,
) -> Result<ManyBodyMatrix> {
    params.validate()?;
    if basis.n_particles() != params.n_particles || basis.n_modes() != params.n_modes {
        return Err(Error::DimensionMismatch(format!(
            "basis is (N={}, M={}), parameters are (N={}, M={})",
            basis.n_particles(),
            basis.n_modes(),
            params.n_particles,
            params.n_modes
        )));
    }
    let coeffs = build_coefficients(params)?;
    let mut mb = assemble(&coeffs, basis, exec)?;
    if pt_shift {
        let shift = Complex64::new(0.0, params.loss * params.n_particles as f64 / 2.0);
        mb.matrix = mb.matrix.with_diagonal_shift(shift);
        mb.pt_shifted = true;
    }
    Ok(mb)
}

/// Assembles the many-body operator for arbitrary coefficient matrices.
pub fn build_many_body_general(coeffs: &CoefficientMatrices, basis: &FockBasis) -> Result<ManyBodyMatrix> {
    assemble(coeffs, basis, Execution::default())
}

fn assemble(coeffs: &CoefficientMatrices, basis: &FockBasis, exec: Execution) -> Result<ManyBodyMatrix> {
    let m = coeffs.n_modes();
    if basis.n_modes() != m {
        return Err(Error::DimensionMismatch(format!(
            "basis has {} modes, coefficients have {m}",
            basis.n_modes()
        )));
    }
    let single = coeffs.single_particle();
    let h = coeffs.interaction();
    let n = basis.n_particles();
    let pair_scale = if n == 0 { 0.0 } else { 1.0 / n as f64 };

    let mut hops = Vec::new();
    for i in 0..m {
        for j in 0..m {
            let v = single[(i, j)];
            if i != j && v != Complex64::new(0.0, 0.0) {
                hops.push((i, j, v));
            }
        }
    }

    let rows = exec::map_range(basis.dim(), exec, |r| {
        let occ = basis.state(r).occupations();
        let mut row = Vec::with_capacity(hops.len() + 1);

        let mut diag = Complex64::new(0.0, 0.0);
        let mut pair = 0.0;
        for i in 0..m {
            let ni = occ[i] as f64;
            diag += single[(i, i)] * ni;
            for j in 0..m {
                let nj = occ[j] as f64;
                let nn = if i == j { ni * (ni - 1.0) } else { ni * nj };
                pair += h[(i, j)] * nn;
            }
        }
        diag += pair * pair_scale;
        row.push((r, diag));

        // <r| a_i^+ a_j |c> equals the coefficient of a_j^+ a_i acting on |r>.
        let mut work = occ.to_vec();
        for &(i, j, v) in &hops {
            work.copy_from_slice(occ);
            if let Some(coef) = hop_in_place(&mut work, j, i) {
                let c = basis.rank_unchecked(&work);
                row.push((c, v * coef));
            }
        }
        row
    });

    Ok(ManyBodyMatrix {
        matrix: CsrMatrix::from_rows(basis.dim(), rows),
        n_particles: n,
        n_modes: m,
        pt_shifted: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fockspace::enumerate_basis;

    fn params(n: u32) -> ModelParams {
        ModelParams {
            hopping: 1.0,
            raman: 0.5,
            soc: 0.3,
            interaction: 2.0,
            loss: 0.2,
            n_particles: n,
            n_modes: 4,
        }
    }

    #[test]
    fn explicit_coefficients_at_zero_soc() {
        let p = ModelParams {
            raman: 0.5,
            ..ModelParams::default()
        };
        let c = build_coefficients(&p).unwrap();
        assert_eq!(c.hermitian()[(0, 2)], Complex64::new(-1.0, 0.0));
        assert_eq!(c.hermitian()[(0, 1)], Complex64::new(0.5, 0.0));
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(c.hermitian()[(i, j)], c.hermitian()[(j, i)].conj());
                assert_eq!(c.anti_hermitian()[(i, j)], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn half_integer_soc_phase() {
        let p = ModelParams {
            soc: 0.5,
            ..ModelParams::default()
        };
        let c = build_coefficients(&p).unwrap();
        // independent evaluation: -exp(-i pi / 2) = -(cos(pi/2) - i sin(pi/2))
        let expected = Complex64::new(-(PI / 2.0).cos(), (PI / 2.0).sin());
        assert!((c.hermitian()[(0, 2)] - expected).norm() < 1e-15);
        assert!((c.hermitian()[(0, 2)] - Complex64::new(0.0, 1.0)).norm() < 1e-15);
    }

    #[test]
    fn unsupported_modes() {
        let p = ModelParams {
            n_modes: 3,
            ..ModelParams::default()
        };
        assert!(matches!(build_coefficients(&p), Err(Error::UnsupportedModes(3))));
    }

    #[test]
    fn general_validation() {
        let c = build_coefficients(&params(1)).unwrap();
        let ok = build_general_coefficients(
            c.hermitian().clone(),
            c.anti_hermitian().clone(),
            c.interaction().clone(),
        );
        assert!(ok.is_ok());

        let beta = 0.3;
        let pt = Mat::<Complex64>::from_fn(4, 4, |i, j| {
            if i != j {
                Complex64::new(0.0, 0.0)
            } else if i < 2 {
                Complex64::new(0.0, beta / 2.0)
            } else {
                Complex64::new(0.0, -beta / 2.0)
            }
        });
        assert!(build_general_coefficients(c.hermitian().clone(), pt, c.interaction().clone()).is_ok());

        let mut bad = c.interaction().clone();
        bad[(0, 1)] += 0.1;
        let err = build_general_coefficients(c.hermitian().clone(), c.anti_hermitian().clone(), bad);
        assert!(matches!(err, Err(Error::PropertyViolation { identity: "h^T = h", .. })));

        let mut bad_h = c.hermitian().clone();
        bad_h[(0, 2)] += Complex64::new(0.0, 0.1);
        let err = build_general_coefficients(bad_h, c.anti_hermitian().clone(), c.interaction().clone());
        assert!(matches!(err, Err(Error::PropertyViolation { .. })));
    }

    #[test]
    fn single_particle_matrix_matches_coefficients() {
        let p = params(1);
        let basis = enumerate_basis(1, 4).unwrap();
        let mb = build_many_body(&p, &basis, false).unwrap();
        let c = build_coefficients(&p).unwrap().single_particle();
        let d = mb.to_dense();
        for i in 0..4 {
            for j in 0..4 {
                assert!((d[(i, j)] - c[(i, j)]).norm() < 1e-15, "({i},{j})");
            }
        }
    }

    #[test]
    fn lossless_is_hermitian() {
        for n in [2, 5] {
            let p = params(n).with_loss(0.0);
            let basis = enumerate_basis(n, 4).unwrap();
            let mb = build_many_body(&p, &basis, false).unwrap();
            assert!(mb.csr().hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn row_sparsity_bound() {
        let p = params(6);
        let basis = enumerate_basis(6, 4).unwrap();
        let mb = build_many_body(&p, &basis, false).unwrap();
        for r in 0..mb.dim() {
            assert!(mb.csr().row_nnz(r) <= 9);
        }
        // with Omega = 0 only the four hopping images remain
        let p0 = ModelParams { raman: 0.0, ..p };
        let mb0 = build_many_body(&p0, &basis, false).unwrap();
        for r in 0..mb0.dim() {
            assert!(mb0.csr().row_nnz(r) <= 5);
        }
    }

    #[test]
    fn interaction_diagonal_two_particles() {
        // two particles in L-up: (g/2N) * 2 = g/2; one in each L mode: (g/N)
        let p = ModelParams {
            raman: 0.0,
            hopping: 0.0,
            interaction: 3.0,
            n_particles: 2,
            ..ModelParams::default()
        };
        let basis = enumerate_basis(2, 4).unwrap();
        let mb = build_many_body(&p, &basis, false).unwrap();
        let k = basis.index_of(&vec![2, 0, 0, 0].into()).unwrap();
        assert!((mb.csr().get(k, k).re - 1.5).abs() < 1e-14);
        let k = basis.index_of(&vec![1, 1, 0, 0].into()).unwrap();
        assert!((mb.csr().get(k, k).re - 1.5).abs() < 1e-14);
        let k = basis.index_of(&vec![1, 0, 1, 0].into()).unwrap();
        assert!(mb.csr().get(k, k).norm() < 1e-14);
    }

    #[test]
    fn pt_shift_is_diagonal_constant() {
        let p = params(3);
        let basis = enumerate_basis(3, 4).unwrap();
        let a = build_many_body(&p, &basis, false).unwrap();
        let b = build_many_body(&p, &basis, true).unwrap();
        assert!(b.is_pt_shifted());
        for (r, c, v) in b.csr().triplets() {
            let expect = a.csr().get(r, c) + if r == c { Complex64::new(0.0, 0.3) } else { Complex64::new(0.0, 0.0) };
            assert!((v - expect).norm() < 1e-15);
        }
    }

    #[test]
    fn general_builder_agrees_with_explicit() {
        let p = params(4);
        let basis = enumerate_basis(4, 4).unwrap();
        let a = build_many_body(&p, &basis, false).unwrap();
        let b = build_many_body_general(&build_coefficients(&p).unwrap(), &basis).unwrap();
        assert_eq!(a.csr(), b.csr());
    }

    #[test]
    fn sequential_and_default_assembly_identical() {
        let p = params(7);
        let basis = enumerate_basis(7, 4).unwrap();
        let a = build_many_body_with(&p, &basis, false, Execution::Sequential).unwrap();
        let b = build_many_body(&p, &basis, false).unwrap();
        assert_eq!(a.csr(), b.csr());
    }

    #[test]
    fn mismatched_basis() {
        let basis = enumerate_basis(3, 4).unwrap();
        assert!(matches!(
            build_many_body(&params(4), &basis, false),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
