//! Mean-field (classical) dynamics: the non-Hermitian discrete GPE, its
//! gauged four-mode form and the two-point-function equation of motion.

use std::f64::consts::PI;
use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CoefficientMatrices, ModelParams};
use crate::ode::{self, OdeOptions};
use crate::qdyn::fmt_f64;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum()
}

fn require_norm(x: &[Complex64]) -> Result<f64> {
    let n = norm(x);
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateNorm);
    }
    Ok(n)
}

fn require_four(x: &[Complex64]) -> Result<()> {
    if x.len() != 4 {
        return Err(Error::UnsupportedModes(x.len()));
    }
    Ok(())
}

/// Coherent-state parameters `x` with norm `n = |x|^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherentAmplitudes(pub Vec<Complex64>);

impl CoherentAmplitudes {
    pub fn new(x: Vec<Complex64>) -> Result<Self> {
        require_norm(&x)?;
        Ok(Self(x))
    }

    /// Rescaled to unit norm.
    pub fn normalized(x: Vec<Complex64>) -> Result<Self> {
        let n = require_norm(&x)?.sqrt();
        Ok(Self(x.into_iter().map(|v| v / n).collect()))
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn density_matrix(&self) -> DensityMatrixMF {
        DensityMatrixMF::from_amplitudes(&self.0)
    }
}

/// Mean-field two-point function `sigma_ij = x_i^* x_j / n`.
#[derive(Debug, Clone)]
pub struct DensityMatrixMF(pub Mat<Complex64>);

impl DensityMatrixMF {
    pub fn from_amplitudes(x: &[Complex64]) -> Self {
        let n = norm(x);
        Self(Mat::from_fn(x.len(), x.len(), |i, j| x[i].conj() * x[j] / n))
    }

    pub fn trace(&self) -> Complex64 {
        (0..self.0.nrows()).map(|i| self.0[(i, i)]).sum()
    }

    pub fn max_deviation(&self, other: &DensityMatrixMF) -> f64 {
        let m = self.0.nrows();
        let mut d = 0.0f64;
        for i in 0..m {
            for j in 0..m {
                d = d.max((self.0[(i, j)] - other.0[(i, j)]).norm());
            }
        }
        d
    }
}

/// Accumulated global phase removed by the gauge transformation.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct GaugePhase(pub f64);

fn block_weights(x: &[Complex64]) -> (f64, f64, f64) {
    let left = x[0].norm_sqr() + x[1].norm_sqr();
    let right = x[2].norm_sqr() + x[3].norm_sqr();
    (left, right, left + right)
}

/// Classical Hamiltonian function of the four-mode junction.
pub fn classical_hamiltonian(x: &[Complex64], params: &ModelParams) -> Result<Complex64> {
    require_four(x)?;
    let n = require_norm(x)?;
    let (j, om, g, b) = (params.hopping, params.raman, params.interaction, params.loss);
    let ph = Complex64::from_polar(1.0, -PI * params.soc);
    let hop = ph * x[0].conj() * x[2] + ph.conj() * x[1].conj() * x[3];
    let raman = x[0].conj() * x[1] + x[2].conj() * x[3];
    let a: Vec<f64> = x.iter().map(|v| v.norm_sqr()).collect();
    let quartic = g / (2.0 * n) * (a[0] * a[0] + a[1] * a[1] + a[2] * a[2] + a[3] * a[3])
        + g / n * (a[0] * a[1] + a[2] * a[3]);
    Ok(-j * (hop + hop.conj()) + om * (raman + raman.conj()) + quartic - I * b * (a[2] + a[3]))
}

/// `sum (h^h + h^a)_ij x_i^* x_j + (1/n) sum h_ij |x_i|^2 |x_j|^2`.
pub fn classical_hamiltonian_general(x: &[Complex64], coeffs: &CoefficientMatrices) -> Result<Complex64> {
    let m = coeffs.n_modes();
    if x.len() != m {
        return Err(Error::DimensionMismatch(format!("{} amplitudes for {} modes", x.len(), m)));
    }
    let n = require_norm(x)?;
    let (hh, ha, h) = (coeffs.hermitian(), coeffs.anti_hermitian(), coeffs.interaction());
    let mut acc = ZERO;
    for i in 0..m {
        for k in 0..m {
            acc += (hh[(i, k)] + ha[(i, k)]) * x[i].conj() * x[k];
            acc += h[(i, k)] * x[i].norm_sqr() * x[k].norm_sqr() / n;
        }
    }
    Ok(acc)
}

/// Diagonal of the nonlinear matrix `h^n(x)`; all off-diagonal entries
/// vanish.
pub fn nonlinear_diagonal(x: &[Complex64], interaction: &Mat<f64>) -> Vec<f64> {
    let m = x.len();
    let n = norm(x);
    let w: Vec<f64> = x.iter().map(|v| v.norm_sqr() / n).collect();
    let mut total = 0.0;
    for k in 0..m {
        for l in 0..m {
            total += interaction[(k, l)] * w[k] * w[l];
        }
    }
    (0..m)
        .map(|i| 2.0 * (0..m).map(|l| interaction[(i, l)] * w[l]).sum::<f64>() - total)
        .collect()
}

pub fn nonlinear_matrix(x: &[Complex64], interaction: &Mat<f64>) -> Mat<f64> {
    let d = nonlinear_diagonal(x, interaction);
    Mat::from_fn(x.len(), x.len(), |i, j| if i == j { d[i] } else { 0.0 })
}

/// `dx/dt = -i (h^h + h^a + h^n(x)) x` for arbitrary mode count.
pub fn gpe_rhs_general(x: &[Complex64], coeffs: &CoefficientMatrices, out: &mut [Complex64]) {
    let m = x.len();
    let hn = nonlinear_diagonal(x, coeffs.interaction());
    let (hh, ha) = (coeffs.hermitian(), coeffs.anti_hermitian());
    for i in 0..m {
        let mut acc = hn[i] * x[i];
        for l in 0..m {
            acc += (hh[(i, l)] + ha[(i, l)]) * x[l];
        }
        out[i] = -I * acc;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GpeForm {
    Ungauged,
    #[default]
    Gauged,
}

/// Diagonal entries `(xi_12, xi_34)` of the four-mode mean-field matrix.
pub fn xi(x: &[Complex64], params: &ModelParams, form: GpeForm) -> (Complex64, Complex64) {
    let g = params.interaction;
    let (l, r, n) = block_weights(x);
    let shift = match form {
        GpeForm::Ungauged => gauge_rate(x, params),
        GpeForm::Gauged => 0.0,
    };
    (
        Complex64::new(g * l / n + shift, 0.0),
        Complex64::new(g * r / n + shift, -params.loss),
    )
}

/// `d theta / dt` of the gauge phase.
pub fn gauge_rate(x: &[Complex64], params: &ModelParams) -> f64 {
    let (l, r, n) = block_weights(x);
    -0.5 * params.interaction * (l * l + r * r) / (n * n)
}

/// Four-mode GPE right-hand side.
pub fn gpe_rhs(x: &[Complex64], params: &ModelParams, form: GpeForm, out: &mut [Complex64]) -> Result<()> {
    require_four(x)?;
    require_norm(x)?;
    let (x12, x34) = xi(x, params, form);
    let (j, om) = (params.hopping, params.raman);
    let ph = Complex64::from_polar(1.0, -PI * params.soc);
    let hx = [
        x12 * x[0] + om * x[1] - j * ph * x[2],
        om * x[0] + x12 * x[1] - j * ph.conj() * x[3],
        -j * ph.conj() * x[0] + x34 * x[2] + om * x[3],
        -j * ph * x[1] + om * x[2] + x34 * x[3],
    ];
    for (o, v) in out.iter_mut().zip(hx) {
        *o = -I * v;
    }
    Ok(())
}

/// `Q_i = -2i dH_a/dx_i` with `H_a = sum h^a_kl x_k^* x_l`.
pub fn generalized_force(x: &[Complex64], coeffs: &CoefficientMatrices) -> Vec<Complex64> {
    let ha = coeffs.anti_hermitian();
    (0..x.len())
        .map(|i| -2.0 * I * (0..x.len()).map(|k| ha[(k, i)] * x[k].conj()).sum::<Complex64>())
        .collect()
}

/// `dn/dt = -2i sum h^a_kl x_k^* x_l` (real for anti-Hermitian `h^a`).
pub fn norm_rate(x: &[Complex64], coeffs: &CoefficientMatrices) -> f64 {
    let ha = coeffs.anti_hermitian();
    let m = x.len();
    let mut acc = ZERO;
    for k in 0..m {
        for l in 0..m {
            acc += ha[(k, l)] * x[k].conj() * x[l];
        }
    }
    (-2.0 * I * acc).re
}

/// Right-hand side of the two-point-function equation for general `M`:
/// `i dsigma_ij/dt = sum_l (h^h + h^a)_jl sigma_il - sum_l (h^h - h^a)_li sigma_lj
///   - 2 sigma_ij sum_kl h^a_kl sigma_kl + 2 sigma_ij sum_l (h_lj - h_il) sigma_ll`.
pub fn sigma_rhs(sigma: &Mat<Complex64>, coeffs: &CoefficientMatrices) -> Mat<Complex64> {
    let m = sigma.nrows();
    let (hh, ha, h) = (coeffs.hermitian(), coeffs.anti_hermitian(), coeffs.interaction());
    let mut loss = ZERO;
    for k in 0..m {
        for l in 0..m {
            loss += ha[(k, l)] * sigma[(k, l)];
        }
    }
    Mat::from_fn(m, m, |i, j| {
        let mut acc = ZERO;
        for l in 0..m {
            acc += (hh[(j, l)] + ha[(j, l)]) * sigma[(i, l)];
            acc -= (hh[(l, i)] - ha[(l, i)]) * sigma[(l, j)];
            acc += 2.0 * (h[(l, j)] - h[(i, l)]) * sigma[(l, l)] * sigma[(i, j)];
        }
        acc -= 2.0 * loss * sigma[(i, j)];
        -I * acc
    })
}

pub fn meanfield_options() -> OdeOptions {
    OdeOptions::with_tolerances(1e-10, 1e-13)
}

/// Mean-field trajectory. `states` hold the integrated amplitudes (gauged
/// `x'` for [`GpeForm::Gauged`]).
#[derive(Debug, Clone)]
pub struct MeanFieldTrajectory {
    pub form: GpeForm,
    pub times: Vec<f64>,
    pub states: Vec<Vec<Complex64>>,
    /// Gauge phase per time; empty for the ungauged form.
    pub phases: Vec<GaugePhase>,
}

impl MeanFieldTrajectory {
    /// Original (ungauged) amplitudes `x = exp(-i theta) x'`.
    pub fn ungauged(&self, k: usize) -> Vec<Complex64> {
        match self.form {
            GpeForm::Ungauged => self.states[k].clone(),
            GpeForm::Gauged => {
                let f = Complex64::from_polar(1.0, -self.phases[k].0);
                self.states[k].iter().map(|v| v * f).collect()
            }
        }
    }

    pub fn records(&self) -> Vec<MeanFieldRecord> {
        self.times
            .iter()
            .zip(&self.states)
            .map(|(&t, x)| MeanFieldRecord::new(t, x))
            .collect()
    }
}

pub fn evolve_meanfield(x0: &[Complex64], params: &ModelParams, t_grid: &[f64], form: GpeForm) -> Result<MeanFieldTrajectory> {
    evolve_meanfield_with(x0, params, t_grid, form, &meanfield_options())
}

pub fn evolve_meanfield_with(
    x0: &[Complex64],
    params: &ModelParams,
    t_grid: &[f64],
    form: GpeForm,
    opts: &OdeOptions,
) -> Result<MeanFieldTrajectory> {
    params.validate()?;
    require_four(x0)?;
    require_norm(x0)?;
    let t0 = t_grid.first().copied().unwrap_or(0.0);
    let mut y0 = x0.to_vec();
    if form == GpeForm::Gauged {
        y0.push(ZERO);
    }
    let mut traj = MeanFieldTrajectory {
        form,
        times: Vec::with_capacity(t_grid.len()),
        states: Vec::with_capacity(t_grid.len()),
        phases: Vec::new(),
    };
    ode::integrate(
        |_, y, dy| {
            // norm stays positive along any finite trajectory
            gpe_rhs(&y[..4], params, form, &mut dy[..4]).expect("four modes");
            if form == GpeForm::Gauged {
                dy[4] = Complex64::new(gauge_rate(&y[..4], params), 0.0);
            }
        },
        t0,
        &y0,
        t_grid,
        opts,
        |t, y| {
            traj.times.push(t);
            traj.states.push(y[..4].to_vec());
            if form == GpeForm::Gauged {
                traj.phases.push(GaugePhase(y[4].re));
            }
            Ok(())
        },
    )?;
    Ok(traj)
}

/// Integrates `dx/dt = -i H~(x) x` for general coefficient matrices.
pub fn evolve_gpe_general(x0: &[Complex64], coeffs: &CoefficientMatrices, t_grid: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    if x0.len() != coeffs.n_modes() {
        return Err(Error::DimensionMismatch(format!("{} amplitudes for {} modes", x0.len(), coeffs.n_modes())));
    }
    require_norm(x0)?;
    let t0 = t_grid.first().copied().unwrap_or(0.0);
    let mut out = Vec::with_capacity(t_grid.len());
    ode::integrate(
        |_, y, dy| gpe_rhs_general(y, coeffs, dy),
        t0,
        x0,
        t_grid,
        &meanfield_options(),
        |_, y| {
            out.push(y.to_vec());
            Ok(())
        },
    )?;
    Ok(out)
}

/// Integrates the two-point function directly.
pub fn evolve_sigma(sigma0: &DensityMatrixMF, coeffs: &CoefficientMatrices, t_grid: &[f64]) -> Result<Vec<DensityMatrixMF>> {
    let m = sigma0.0.nrows();
    if m != coeffs.n_modes() || sigma0.0.ncols() != m {
        return Err(Error::DimensionMismatch(format!("sigma is {}x{} for {} modes", m, sigma0.0.ncols(), coeffs.n_modes())));
    }
    let t0 = t_grid.first().copied().unwrap_or(0.0);
    let flat: Vec<Complex64> = (0..m * m).map(|k| sigma0.0[(k / m, k % m)]).collect();
    let mut out = Vec::with_capacity(t_grid.len());
    let opts = OdeOptions {
        atol_scaled_by_norm: false,
        ..meanfield_options()
    };
    ode::integrate(
        |_, y, dy| {
            let s = Mat::from_fn(m, m, |i, j| y[i * m + j]);
            let r = sigma_rhs(&s, coeffs);
            for (k, d) in dy.iter_mut().enumerate() {
                *d = r[(k / m, k % m)];
            }
        },
        t0,
        &flat,
        t_grid,
        &opts,
        |_, y| {
            out.push(DensityMatrixMF(Mat::from_fn(m, m, |i, j| y[i * m + j])));
            Ok(())
        },
    )?;
    Ok(out)
}

/// Mean-field observables, normalized by `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanFieldRecord {
    pub time: f64,
    pub n: f64,
    pub x: [Complex64; 4],
    pub z: f64,
    pub i_spin: f64,
    pub i_up: f64,
    pub i_down: f64,
    pub mode_populations: [f64; 4],
}

impl MeanFieldRecord {
    pub fn new(time: f64, x: &[Complex64]) -> Self {
        let n = norm(x);
        let p = [
            x[0].norm_sqr() / n,
            x[1].norm_sqr() / n,
            x[2].norm_sqr() / n,
            x[3].norm_sqr() / n,
        ];
        let i_up = p[0] - p[2];
        let i_down = p[1] - p[3];
        Self {
            time,
            n,
            x: [x[0], x[1], x[2], x[3]],
            z: p[0] + p[1] - p[2] - p[3],
            i_spin: i_up - i_down,
            i_up,
            i_down,
            mode_populations: p,
        }
    }
}

pub const MEANFIELD_COLUMNS: &str = "t,n,re_x1,re_x2,re_x3,re_x4,im_x1,im_x2,im_x3,im_x4,z,i_spin,i_up,i_down";

pub fn write_meanfield_csv<W: Write>(mut w: W, records: &[MeanFieldRecord]) -> std::io::Result<()> {
    writeln!(w, "{MEANFIELD_COLUMNS}")?;
    for r in records {
        let mut cols = vec![r.time, r.n];
        cols.extend(r.x.iter().map(|v| v.re));
        cols.extend(r.x.iter().map(|v| v.im));
        cols.extend([r.z, r.i_spin, r.i_up, r.i_down]);
        let line: Vec<String> = cols.into_iter().map(fmt_f64).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
