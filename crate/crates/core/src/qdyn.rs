//! Many-particle states, non-unitary propagation and normalized observables.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fockspace::FockBasis;
use crate::model::ManyBodyMatrix;
use crate::ode::{self, OdeOptions};
use crate::spectra::{self, SpectrumResult};

/// Squared norm below which a state is rescaled and the factor logged.
pub const RENORMALIZE_BELOW: f64 = 1e-300;

/// Limit on `||V c - psi0|| / ||psi0||` for the eigenbasis expansion.
pub const BIORTHOGONALITY_LIMIT: f64 = 1e-6;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Unnormalized state `exp(log_scale) * amplitudes`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    pub amplitudes: Vec<Complex64>,
    pub time: f64,
    pub log_scale: f64,
}

impl QuantumState {
    pub fn new(amplitudes: Vec<Complex64>, time: f64) -> Self {
        Self {
            amplitudes,
            time,
            log_scale: 0.0,
        }
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    fn stored_norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn ln_survival(&self) -> f64 {
        self.stored_norm_sqr().ln() + 2.0 * self.log_scale
    }

    /// `<Psi|Psi>`.
    pub fn survival(&self) -> f64 {
        self.ln_survival().exp()
    }

    /// Amplitudes including the scale factor (may underflow).
    pub fn scaled_amplitudes(&self) -> Vec<Complex64> {
        let s = self.log_scale.exp();
        self.amplitudes.iter().map(|c| c * s).collect()
    }

    pub fn normalized(&self) -> Result<Vec<Complex64>> {
        let n = self.stored_norm_sqr().sqrt();
        if !(n > 0.0) || !n.is_finite() {
            return Err(Error::DegenerateNorm);
        }
        Ok(self.amplitudes.iter().map(|c| c / n).collect())
    }

    fn renormalize_if_tiny(&mut self) {
        let ns = self.stored_norm_sqr();
        if ns < RENORMALIZE_BELOW && ns > 0.0 {
            let n = ns.sqrt();
            self.amplitudes.iter_mut().for_each(|c| *c /= n);
            self.log_scale += n.ln();
            log::info!("renormalized state at t = {} (log scale {:.6e})", self.time, self.log_scale);
        }
    }
}

fn ln_factorial(n: u32) -> f64 {
    (2..=n).map(|k| (k as f64).ln()).sum()
}

/// `(1/sqrt(N!)) (sum_i x_i a_i^+)^N |0>` over `basis`.
pub fn coherent_state(x: &[Complex64], basis: &FockBasis) -> Result<QuantumState> {
    if x.len() != basis.n_modes() {
        return Err(Error::DimensionMismatch(format!(
            "{} amplitudes for {} modes",
            x.len(),
            basis.n_modes()
        )));
    }
    let n: f64 = x.iter().map(|c| c.norm_sqr()).sum();
    if !(n > 0.0) || !n.is_finite() {
        return Err(Error::DegenerateNorm);
    }
    let ln_n_fact = ln_factorial(basis.n_particles());
    let amplitudes = basis
        .states()
        .iter()
        .map(|s| {
            let occ = s.occupations();
            let ln_denom: f64 = occ.iter().map(|&k| ln_factorial(k)).sum();
            let mut a = Complex64::new((0.5 * (ln_n_fact - ln_denom)).exp(), 0.0);
            for (xi, &k) in x.iter().zip(occ) {
                a *= xi.powu(k);
            }
            a
        })
        .collect();
    Ok(QuantumState::new(amplitudes, 0.0))
}

/// Per-particle observables of the four-mode junction. Mode order is
/// `(L up, L down, R up, R down)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ObservableRecord {
    pub time: f64,
    pub survival: f64,
    pub ln_survival: f64,
    pub z: f64,
    pub i_spin: f64,
    pub i_up: f64,
    pub i_down: f64,
    pub mode_populations: [f64; 4],
    pub n_particles: u32,
}

impl ObservableRecord {
    /// Builds from populations that already sum to one.
    pub fn from_populations(time: f64, ln_survival: f64, p: [f64; 4], n_particles: u32) -> Self {
        let i_up = p[0] - p[2];
        let i_down = p[1] - p[3];
        Self {
            time,
            survival: ln_survival.exp(),
            ln_survival,
            z: p[0] + p[1] - p[2] - p[3],
            i_spin: i_up - i_down,
            i_up,
            i_down,
            mode_populations: p,
            n_particles,
        }
    }

    pub fn z_total(&self) -> f64 {
        self.z * self.n_particles as f64
    }

    pub fn i_spin_total(&self) -> f64 {
        self.i_spin * self.n_particles as f64
    }
}

fn populations(weights: &[f64]) -> Result<[f64; 4]> {
    if weights.len() != 4 {
        return Err(Error::UnsupportedModes(weights.len()));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateNorm);
    }
    Ok([weights[0] / total, weights[1] / total, weights[2] / total, weights[3] / total])
}

pub fn observables(psi: &QuantumState, basis: &FockBasis) -> Result<ObservableRecord> {
    if psi.dim() != basis.dim() {
        return Err(Error::DimensionMismatch(format!("state {} vs basis {}", psi.dim(), basis.dim())));
    }
    let p = populations(&basis.mode_weights(&psi.amplitudes))?;
    Ok(ObservableRecord::from_populations(psi.time, psi.ln_survival(), p, basis.n_particles()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Propagation {
    #[default]
    Spectral,
    RkAdaptive,
}

/// Eigenbasis expansion `psi(t) = sum_k c_k exp(-i E_k (t - t0)) v_k`.
#[derive(Debug, Clone)]
pub struct SpectralPropagator<'a> {
    spectrum: &'a SpectrumResult,
    coefficients: Vec<Complex64>,
    members: Vec<usize>,
    t0: f64,
    log_scale0: f64,
}

impl<'a> SpectralPropagator<'a> {
    pub fn new(spectrum: &'a SpectrumResult, psi0: &QuantumState) -> Result<Self> {
        if spectrum.is_defective() {
            return Err(Error::Defective {
                condition: spectrum.condition,
            });
        }
        let d = spectrum.dim();
        if psi0.dim() != d {
            return Err(Error::DimensionMismatch(format!("state {} vs spectrum {}", psi0.dim(), d)));
        }
        let coefficients: Vec<Complex64> = (0..d)
            .map(|k| (0..d).map(|j| spectrum.dual[(k, j)] * psi0.amplitudes[j]).sum())
            .collect();
        let norm0 = psi0.stored_norm_sqr().sqrt();
        if !(norm0 > 0.0) {
            return Err(Error::DegenerateNorm);
        }
        let mut residual = 0.0;
        for i in 0..d {
            let r: Complex64 = (0..d).map(|k| spectrum.eigenvectors[(i, k)] * coefficients[k]).sum();
            residual += (r - psi0.amplitudes[i]).norm_sqr();
        }
        let residual = residual.sqrt() / norm0;
        if !(residual <= BIORTHOGONALITY_LIMIT) {
            return Err(Error::Biorthogonality {
                residual,
                limit: BIORTHOGONALITY_LIMIT,
            });
        }
        Ok(Self {
            spectrum,
            coefficients,
            members: (0..d).collect(),
            t0: psi0.time,
            log_scale0: psi0.log_scale,
        })
    }

    /// Keeps only the listed eigencomponents.
    pub fn restricted(mut self, members: &[usize]) -> Self {
        self.members = members.to_vec();
        self
    }

    pub fn coefficients(&self) -> &[Complex64] {
        &self.coefficients
    }

    /// States at `times`, evaluated in blocks with one dense product each.
    pub fn states(&self, times: &[f64]) -> Vec<QuantumState> {
        let d = self.spectrum.dim();
        let m = self.members.len();
        let vals = &self.spectrum.eigenvalues;
        let active: Vec<usize> = self
            .members
            .iter()
            .copied()
            .filter(|&k| self.coefficients[k] != ZERO)
            .collect();
        let max_im = active.iter().map(|&k| vals[k].im).fold(f64::NEG_INFINITY, f64::max);
        let max_im = if max_im.is_finite() { max_im } else { 0.0 };

        let mut vsub = Mat::<Complex64>::zeros(d, m);
        for (c, &k) in self.members.iter().enumerate() {
            for i in 0..d {
                vsub[(i, c)] = self.spectrum.eigenvectors[(i, k)];
            }
        }
        let mut out = Vec::with_capacity(times.len());
        for chunk in times.chunks(256) {
            let phases = Mat::<Complex64>::from_fn(m, chunk.len(), |c, j| {
                let k = self.members[c];
                let dt = chunk[j] - self.t0;
                // exp(-i E dt) = exp(max_im dt) * exp(-i (E - i max_im) dt)
                let e = vals[k] - Complex64::new(0.0, max_im);
                self.coefficients[k] * (Complex64::new(0.0, -1.0) * e * dt).exp()
            });
            let block = &vsub * &phases;
            for (j, &t) in chunk.iter().enumerate() {
                let mut s = QuantumState {
                    amplitudes: block.col_as_slice(j).to_vec(),
                    time: t,
                    log_scale: self.log_scale0 + max_im * (t - self.t0),
                };
                s.renormalize_if_tiny();
                out.push(s);
            }
        }
        out
    }
}

fn check_grid(psi0: &QuantumState, t_grid: &[f64]) -> Result<()> {
    if let Some(&t) = t_grid.first() {
        if t < psi0.time {
            return Err(Error::InvalidParameter(format!(
                "time grid starts at {t}, before the state time {}",
                psi0.time
            )));
        }
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidParameter("time grid must be strictly increasing".into()));
    }
    Ok(())
}

/// Integrates `i d psi/dt = H psi` with the adaptive Runge-Kutta method,
/// streaming each output state to `sink`.
pub fn evolve_rk_with<S>(h: &ManyBodyMatrix, psi0: &QuantumState, t_grid: &[f64], opts: &OdeOptions, mut sink: S) -> Result<()>
where
    S: FnMut(&QuantumState) -> Result<()>,
{
    check_grid(psi0, t_grid)?;
    if psi0.dim() != h.dim() {
        return Err(Error::DimensionMismatch(format!("state {} vs matrix {}", psi0.dim(), h.dim())));
    }
    let mut log_scale = psi0.log_scale;
    let minus_i = Complex64::new(0.0, -1.0);
    ode::integrate(
        |_, y, dy| {
            h.matvec(y, dy);
            dy.iter_mut().for_each(|v| *v *= minus_i);
        },
        psi0.time,
        &psi0.amplitudes,
        t_grid,
        opts,
        |t, y| {
            let mut s = QuantumState {
                amplitudes: y.to_vec(),
                time: t,
                log_scale,
            };
            s.renormalize_if_tiny();
            if s.log_scale != log_scale {
                y.copy_from_slice(&s.amplitudes);
                log_scale = s.log_scale;
            }
            sink(&s)
        },
    )?;
    Ok(())
}

/// States at every time of `t_grid` (unnormalized; decay is physical).
pub fn evolve_quantum(h: &ManyBodyMatrix, psi0: &QuantumState, t_grid: &[f64], method: Propagation) -> Result<Vec<QuantumState>> {
    let mut out = Vec::with_capacity(t_grid.len());
    evolve_quantum_with(h, psi0, t_grid, method, |s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

pub fn evolve_quantum_with<S>(h: &ManyBodyMatrix, psi0: &QuantumState, t_grid: &[f64], method: Propagation, mut sink: S) -> Result<()>
where
    S: FnMut(&QuantumState) -> Result<()>,
{
    check_grid(psi0, t_grid)?;
    match method {
        Propagation::Spectral => {
            let spectrum = spectra::eigendecompose(h)?;
            let prop = SpectralPropagator::new(&spectrum, psi0)?;
            for chunk in t_grid.chunks(1024) {
                for s in prop.states(chunk) {
                    sink(&s)?;
                }
            }
            Ok(())
        }
        Propagation::RkAdaptive => evolve_rk_with(h, psi0, t_grid, &OdeOptions::default(), sink),
    }
}

/// Observable series along a trajectory.
pub fn quantum_observables(
    h: &ManyBodyMatrix,
    basis: &FockBasis,
    psi0: &QuantumState,
    t_grid: &[f64],
    method: Propagation,
) -> Result<Vec<ObservableRecord>> {
    let mut out = Vec::with_capacity(t_grid.len());
    evolve_quantum_with(h, psi0, t_grid, method, |s| {
        out.push(observables(s, basis)?);
        Ok(())
    })?;
    Ok(out)
}

/// Observable series for a precomputed spectrum.
pub fn spectral_observables(
    spectrum: &SpectrumResult,
    basis: &FockBasis,
    psi0: &QuantumState,
    t_grid: &[f64],
) -> Result<Vec<ObservableRecord>> {
    check_grid(psi0, t_grid)?;
    let prop = SpectralPropagator::new(spectrum, psi0)?;
    let mut out = Vec::with_capacity(t_grid.len());
    for chunk in t_grid.chunks(1024) {
        for s in prop.states(chunk) {
            out.push(observables(&s, basis)?);
        }
    }
    Ok(out)
}

/// Right-hand side of the generalized Ehrenfest equation for an operator
/// diagonal in the Fock basis:
/// `<[A, H]> + 2 (<H_a A> - <H_a><A>)`, with `H_a = (H - H^+)/2`.
/// The time derivative of the normalized `<A>` is `-i` times this value.
pub fn ehrenfest_rhs(h: &ManyBodyMatrix, psi: &[Complex64], diag: &[f64]) -> Result<Complex64> {
    let d = h.dim();
    if psi.len() != d || diag.len() != d {
        return Err(Error::DimensionMismatch("state, operator and matrix sizes differ".into()));
    }
    let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum();
    if !(norm > 0.0) {
        return Err(Error::DegenerateNorm);
    }
    let inner = |a: &[Complex64], b: &[Complex64]| -> Complex64 { a.iter().zip(b).map(|(x, y)| x.conj() * y).sum() };

    let a_psi: Vec<Complex64> = psi.iter().zip(diag).map(|(c, a)| c * a).collect();
    let mut h_psi = vec![ZERO; d];
    let mut h_a_psi = vec![ZERO; d];
    h.matvec(psi, &mut h_psi);
    h.matvec(&a_psi, &mut h_a_psi);
    // <A H> - <H A>
    let commutator = inner(&a_psi, &h_psi) - inner(psi, &h_a_psi);

    let mut ha_a_psi = vec![ZERO; d];
    let mut ha_psi = vec![ZERO; d];
    h.anti_hermitian_matvec(&a_psi, &mut ha_a_psi);
    h.anti_hermitian_matvec(psi, &mut ha_psi);
    let exp_ha_a = inner(psi, &ha_a_psi) / norm;
    let exp_ha = inner(psi, &ha_psi) / norm;
    let exp_a = inner(psi, &a_psi) / norm;

    Ok(commutator / norm + (exp_ha_a - exp_ha * exp_a) * 2.0)
}

/// Diagonal of the total imbalance operator `n_L - n_R` in the Fock basis.
pub fn imbalance_diagonal(basis: &FockBasis) -> Vec<f64> {
    basis
        .states()
        .iter()
        .map(|s| {
            let o = s.occupations();
            o[0] as f64 + o[1] as f64 - o[2] as f64 - o[3] as f64
        })
        .collect()
}

/// Diagonal of the spin imbalance operator
/// `(n_{L up} - n_{R up}) - (n_{L dn} - n_{R dn})`.
pub fn spin_imbalance_diagonal(basis: &FockBasis) -> Vec<f64> {
    basis
        .states()
        .iter()
        .map(|s| {
            let o = s.occupations();
            (o[0] as f64 - o[2] as f64) - (o[1] as f64 - o[3] as f64)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SteadyStateProjection {
    pub member_indices: Vec<usize>,
    pub records: Vec<ObservableRecord>,
}

impl SteadyStateProjection {
    pub fn z_s(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.z).collect()
    }

    pub fn i_s(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.i_spin).collect()
    }
}

/// Observables of the component of `psi0` in the eigenspace with the
/// largest imaginary part (the first degeneracy group of `spectrum`).
pub fn steady_state_projection(
    spectrum: &SpectrumResult,
    psi0: &QuantumState,
    t_grid: &[f64],
    basis: &FockBasis,
) -> Result<SteadyStateProjection> {
    check_grid(psi0, t_grid)?;
    let members = spectrum.top_group().to_vec();
    let prop = SpectralPropagator::new(spectrum, psi0)?.restricted(&members);
    if members.iter().all(|&k| prop.coefficients()[k].norm() == 0.0) {
        return Err(Error::DegenerateNorm);
    }
    let records = prop
        .states(t_grid)
        .iter()
        .map(|s| observables(s, basis))
        .collect::<Result<Vec<_>>>()?;
    Ok(SteadyStateProjection {
        member_indices: members,
        records,
    })
}

/// Trapezoidal mean of `values` sampled at `times`, restricted to `[a, b]`.
pub fn trapezoid_mean(times: &[f64], values: &[f64], a: f64, b: f64) -> Option<f64> {
    let mut area = 0.0;
    let mut span = 0.0;
    for k in 1..times.len() {
        let (t0, t1) = (times[k - 1], times[k]);
        if t0 >= a - 1e-12 && t1 <= b + 1e-12 {
            area += 0.5 * (values[k - 1] + values[k]) * (t1 - t0);
            span += t1 - t0;
        }
    }
    (span > 0.0).then(|| area / span)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeAverageOptions {
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    /// Agreement demanded between the two averaging windows:
    /// `|a - b| <= rel_tol |a| + abs_tol`.
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for TimeAverageOptions {
    fn default() -> Self {
        Self {
            horizon: 400.0,
            burn_in: 200.0,
            dt: 0.1,
            rel_tol: 0.02,
            abs_tol: 0.005,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TimeAverage {
    /// Average over `[burn_in, horizon]`.
    pub value: f64,
    /// Average over the first half of that window.
    pub first_half: f64,
    pub converged: bool,
}

/// Time-averaged per-particle imbalance of a precomputed `z` series.
pub fn time_average(times: &[f64], z: &[f64], opts: &TimeAverageOptions) -> Result<TimeAverage> {
    if !(opts.horizon > opts.burn_in) || opts.burn_in < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "need horizon > burn_in >= 0 (got {}, {})",
            opts.horizon, opts.burn_in
        )));
    }
    let mid = 0.5 * (opts.burn_in + opts.horizon);
    let full = trapezoid_mean(times, z, opts.burn_in, opts.horizon)
        .ok_or_else(|| Error::InvalidParameter("time grid does not cover the averaging window".into()))?;
    let half = trapezoid_mean(times, z, opts.burn_in, mid)
        .ok_or_else(|| Error::InvalidParameter("time grid does not cover the averaging window".into()))?;
    let converged = (full - half).abs() <= opts.rel_tol * full.abs() + opts.abs_tol;
    Ok(TimeAverage {
        value: full,
        first_half: half,
        converged,
    })
}

pub fn uniform_grid(t0: f64, t1: f64, dt: f64) -> Vec<f64> {
    let steps = ((t1 - t0) / dt).round() as usize;
    (0..=steps).map(|k| t0 + k as f64 * dt).collect()
}

pub fn time_averaged_z(
    h: &ManyBodyMatrix,
    basis: &FockBasis,
    psi0: &QuantumState,
    opts: &TimeAverageOptions,
    method: Propagation,
) -> Result<TimeAverage> {
    let grid = uniform_grid(psi0.time, psi0.time + opts.horizon, opts.dt);
    let recs = quantum_observables(h, basis, psi0, &grid, method)?;
    let times: Vec<f64> = recs.iter().map(|r| r.time - psi0.time).collect();
    let z: Vec<f64> = recs.iter().map(|r| r.z).collect();
    time_average(&times, &z, opts)
}

pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

pub const TRAJECTORY_COLUMNS: &str = "t,survival,z,i_spin,i_up,i_down,pL_up,pL_dn,pR_up,pR_dn,z_total,i_spin_total";

pub fn write_trajectory_csv<W: Write>(mut w: W, records: &[ObservableRecord]) -> std::io::Result<()> {
    writeln!(w, "{TRAJECTORY_COLUMNS}")?;
    for r in records {
        let cols = [
            r.time,
            r.survival,
            r.z,
            r.i_spin,
            r.i_up,
            r.i_down,
            r.mode_populations[0],
            r.mode_populations[1],
            r.mode_populations[2],
            r.mode_populations[3],
            r.z_total(),
            r.i_spin_total(),
        ];
        let line: Vec<String> = cols.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}
