//! Quantum-classical correspondence: matched many-particle and mean-field
//! runs, deviation series, breakdown and synchronization metrics.

use std::io::Write;

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec::{self, Execution};
use crate::fockspace::FockBasis;
use crate::meanfield::{self, GpeForm, MeanFieldRecord};
use crate::model::{build_many_body, ModelParams};
use crate::qdyn::{self, fmt_f64, ObservableRecord, Propagation};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub time: f64,
    /// `|n_mf - s_q| / s_q` with `s_q = <Psi|Psi>^(1/N)`.
    pub eps_n: f64,
    pub dz: f64,
    pub di: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonRun {
    pub params: ModelParams,
    pub x0: Vec<Complex64>,
    pub times: Vec<f64>,
    pub quantum: Vec<ObservableRecord>,
    pub meanfield: Vec<MeanFieldRecord>,
    pub deviations: Vec<Deviation>,
}

impl ComparisonRun {
    /// Largest `eps_n` over `t <= t_max`.
    pub fn max_eps_n(&self, t_max: f64) -> f64 {
        self.deviations
            .iter()
            .filter(|d| d.time <= t_max)
            .map(|d| d.eps_n)
            .fold(0.0, f64::max)
    }
}

pub fn run_comparison(params: &ModelParams, x0: &[Complex64], t_grid: &[f64], method: Propagation) -> Result<ComparisonRun> {
    run_comparison_with(params, x0, t_grid, method, Execution::default())
}

pub fn run_comparison_with(
    params: &ModelParams,
    x0: &[Complex64],
    t_grid: &[f64],
    method: Propagation,
    exec: Execution,
) -> Result<ComparisonRun> {
    params.validate()?;
    let n0 = meanfield::norm(x0);
    if (n0 - 1.0).abs() > 1e-10 {
        return Err(Error::InvalidParameter(format!("initial amplitudes must have unit norm, got {n0}")));
    }
    if params.n_particles == 0 {
        return Err(Error::InvalidParameter("comparison needs at least one particle".into()));
    }
    let (quantum, mf) = exec::join(
        exec,
        || -> Result<Vec<ObservableRecord>> {
            let basis = FockBasis::new(params.n_particles, params.n_modes)?;
            let h = build_many_body(params, &basis, false)?;
            let psi0 = qdyn::coherent_state(x0, &basis)?;
            let psi0 = qdyn::QuantumState { time: t_grid.first().copied().unwrap_or(0.0), ..psi0 };
            qdyn::quantum_observables(&h, &basis, &psi0, t_grid, method)
        },
        || meanfield::evolve_meanfield(x0, params, t_grid, GpeForm::Gauged),
    );
    let quantum = quantum?;
    let meanfield = mf?.records();
    let n = params.n_particles as f64;
    let deviations = quantum
        .iter()
        .zip(&meanfield)
        .map(|(q, m)| {
            let s_q = (q.ln_survival / n).exp();
            Deviation {
                time: q.time,
                eps_n: (m.n - s_q).abs() / s_q,
                dz: (q.z - m.z).abs(),
                di: (q.i_spin - m.i_spin).abs(),
            }
        })
        .collect();
    Ok(ComparisonRun {
        params: *params,
        x0: x0.to_vec(),
        times: t_grid.to_vec(),
        quantum,
        meanfield,
        deviations,
    })
}

pub const COMPARISON_COLUMNS: &str = "t,z_q,z_mf,i_q,i_mf,iu_q,id_q,iu_mf,id_mf,eps_n";

pub fn write_comparison_csv<W: Write>(mut w: W, run: &ComparisonRun) -> std::io::Result<()> {
    writeln!(w, "{COMPARISON_COLUMNS}")?;
    for ((q, m), d) in run.quantum.iter().zip(&run.meanfield).zip(&run.deviations) {
        let cols = [q.time, q.z, m.z, q.i_spin, m.i_spin, q.i_up, q.i_down, m.i_up, m.i_down, d.eps_n];
        let line: Vec<String> = cols.iter().map(|&v| fmt_f64(v)).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    Ok(())
}

/// Values of `series` whose time lies in `[t1, t2]`.
pub fn window_values(times: &[f64], series: &[f64], t1: f64, t2: f64) -> Vec<f64> {
    times
        .iter()
        .zip(series)
        .filter(|(t, _)| **t >= t1 && **t <= t2)
        .map(|(_, v)| *v)
        .collect()
}

pub fn variance(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownThresholds {
    pub oscillating: f64,
    pub settled: f64,
}

impl Default for BreakdownThresholds {
    fn default() -> Self {
        Self {
            oscillating: 0.01,
            settled: 1e-4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownReport {
    pub window: (f64, f64),
    pub var_z_quantum: f64,
    pub var_z_meanfield: f64,
    pub mean_z_quantum: f64,
    pub mean_z_meanfield: f64,
    pub quantum_oscillating: bool,
    pub meanfield_oscillating: bool,
    pub quantum_settled: bool,
    pub meanfield_settled: bool,
    pub breakdown: bool,
}

pub fn breakdown_detector(run: &ComparisonRun, window: (f64, f64), thresholds: BreakdownThresholds) -> Result<BreakdownReport> {
    let (t1, t2) = window;
    if !(t2 > t1) {
        return Err(Error::InvalidParameter(format!("empty window [{t1}, {t2}]")));
    }
    let zq: Vec<f64> = run.quantum.iter().map(|r| r.z).collect();
    let zm: Vec<f64> = run.meanfield.iter().map(|r| r.z).collect();
    let wq = window_values(&run.times, &zq, t1, t2);
    let wm = window_values(&run.times, &zm, t1, t2);
    if wq.len() < 2 {
        return Err(Error::InvalidParameter(format!("window [{t1}, {t2}] holds fewer than two samples")));
    }
    let (vq, vm) = (variance(&wq), variance(&wm));
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let q_osc = vq > thresholds.oscillating;
    let m_osc = vm > thresholds.oscillating;
    let q_set = vq < thresholds.settled;
    let m_set = vm < thresholds.settled;
    Ok(BreakdownReport {
        window,
        var_z_quantum: vq,
        var_z_meanfield: vm,
        mean_z_quantum: mean(&wq),
        mean_z_meanfield: mean(&wm),
        quantum_oscillating: q_osc,
        meanfield_oscillating: m_osc,
        quantum_settled: q_set,
        meanfield_settled: m_set,
        breakdown: (q_osc && m_set) || (m_osc && q_set),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncThresholds {
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub overlap_min: f64,
}

impl Default for SyncThresholds {
    fn default() -> Self {
        Self {
            ratio_min: 0.9,
            ratio_max: 1.1,
            overlap_min: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SyncReport {
    pub window: (f64, f64),
    pub amplitude_up: f64,
    pub amplitude_down: f64,
    pub amplitude_ratio: f64,
    /// `|R_up ∩ R_down| / |R_up ∪ R_down|` of the visited ranges.
    pub overlap: f64,
    /// Pearson correlation of `i_up` with `-i_down`.
    pub anti_phase_correlation: f64,
    pub synchronized: bool,
}

fn range(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

pub fn range_overlap(a: &[f64], b: &[f64]) -> f64 {
    let (a0, a1) = range(a);
    let (b0, b1) = range(b);
    let inter = (a1.min(b1) - a0.max(b0)).max(0.0);
    let union = a1.max(b1) - a0.min(b0);
    if union <= 1e-12 {
        // both series sit on the same point
        return if inter >= 0.0 && (a0 - b0).abs() <= 1e-12 { 1.0 } else { 0.0 };
    }
    inter / union
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n == 0 {
        return 0.0;
    }
    let ma = a[..n].iter().sum::<f64>() / n as f64;
    let mb = b[..n].iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for k in 0..n {
        let (da, db) = (a[k] - ma, b[k] - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-24 || sbb <= 1e-24 {
        let same = a[..n].iter().zip(&b[..n]).all(|(x, y)| (x - y).abs() <= 1e-12);
        return if same { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}

pub fn synchronization_metrics(
    times: &[f64],
    i_up: &[f64],
    i_down: &[f64],
    window: (f64, f64),
    thresholds: SyncThresholds,
) -> Result<SyncReport> {
    let (t1, t2) = window;
    let up = window_values(times, i_up, t1, t2);
    let down = window_values(times, i_down, t1, t2);
    if up.len() < 2 {
        return Err(Error::InvalidParameter(format!("window [{t1}, {t2}] holds fewer than two samples")));
    }
    let amp = |v: &[f64]| {
        let (lo, hi) = range(v);
        0.5 * (hi - lo)
    };
    let (au, ad) = (amp(&up), amp(&down));
    let ratio = if ad > 0.0 {
        au / ad
    } else if au == 0.0 {
        1.0
    } else {
        f64::INFINITY
    };
    let overlap = range_overlap(&up, &down);
    let neg_down: Vec<f64> = down.iter().map(|v| -v).collect();
    let corr = correlation(&up, &neg_down);
    Ok(SyncReport {
        window,
        amplitude_up: au,
        amplitude_down: ad,
        amplitude_ratio: ratio,
        overlap,
        anti_phase_correlation: corr,
        synchronized: ratio >= thresholds.ratio_min && ratio <= thresholds.ratio_max && overlap >= thresholds.overlap_min,
    })
}

pub fn meanfield_sync(records: &[MeanFieldRecord], window: (f64, f64), thresholds: SyncThresholds) -> Result<SyncReport> {
    let t: Vec<f64> = records.iter().map(|r| r.time).collect();
    let u: Vec<f64> = records.iter().map(|r| r.i_up).collect();
    let d: Vec<f64> = records.iter().map(|r| r.i_down).collect();
    synchronization_metrics(&t, &u, &d, window, thresholds)
}

pub fn quantum_sync(records: &[ObservableRecord], window: (f64, f64), thresholds: SyncThresholds) -> Result<SyncReport> {
    let t: Vec<f64> = records.iter().map(|r| r.time).collect();
    let u: Vec<f64> = records.iter().map(|r| r.i_up).collect();
    let d: Vec<f64> = records.iter().map(|r| r.i_down).collect();
    synchronization_metrics(&t, &u, &d, window, thresholds)
}

/// Spin flip combined with well exchange: modes `(0,1,2,3) -> (3,2,1,0)`.
pub fn s_transform(x: &[Complex64]) -> Vec<Complex64> {
    x.iter().rev().copied().collect()
}

/// `max(|p_{L up} - p_{R dn}|, |p_{L dn} - p_{R up}|)`.
pub fn s_pairing_defect(p: &[f64; 4]) -> f64 {
    (p[0] - p[3]).abs().max((p[1] - p[2]).abs())
}
