use std::io::Write;
use std::path::PathBuf;

use nhjunction::qcc::{self, BreakdownReport, BreakdownThresholds, SyncReport, SyncThresholds};
use nhjunction::qdyn::{self, fmt_f64, uniform_grid};
use nhjunction::{exec, meanfield, spectra, Complex64, Error, Execution, FockBasis, ModelParams};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::output::{create_csv, write_json};
use crate::{CliError, Side};

pub struct Context {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    pub command: &'static str,
    pub exec: Execution,
}

impl Context {
    fn csv(&self, name: &str) -> Result<std::io::BufWriter<std::fs::File>, CliError> {
        create_csv(&self.out, name, self.command, &self.cfg)
    }

    fn json<T: Serialize>(&self, name: &str, report: &T) -> Result<(), CliError> {
        write_json(&self.out, name, self.command, &self.cfg, report)
    }

    fn grid(&self) -> Vec<f64> {
        uniform_grid(0.0, self.cfg.time.t_end, self.cfg.time.dt)
    }
}

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(",")
}

#[derive(Serialize)]
struct SpectrumSummary {
    dim: usize,
    nnz: usize,
    max_imag: f64,
    pt_max_abs_imag: f64,
    pt_broken: bool,
    condition: f64,
    max_residual: f64,
    defective: bool,
    top_group: Vec<usize>,
    group_sizes: Vec<usize>,
}

pub fn spectrum(ctx: &Context) -> Result<(), CliError> {
    let p = ctx.cfg.model;
    let basis = FockBasis::new(p.n_particles, p.n_modes)?;
    let h = nhjunction::build_many_body(&p, &basis, false)?;
    if ctx.cfg.spectrum.dump_matrix {
        let path = ctx.out.join("matrix.coo");
        log::info!("writing {}", path.display());
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        h.write_coordinate(&mut w)?;
        w.flush()?;
    }
    log::info!("eigendecomposing D = {}", basis.dim());
    let spec = spectra::eigendecompose(&h)?;
    let h_pt = nhjunction::build_many_body(&p, &basis, true)?;
    let pt = spectra::eigenvalues(&h_pt)?;

    // Pair each lossy eigenvalue with its PT partner so rows line up.
    let shift = Complex64::new(0.0, p.loss * p.n_particles as f64 / 2.0);
    let shifted: Vec<Complex64> = spec.eigenvalues.iter().map(|e| e + shift).collect();
    let perm = spectra::match_spectra(&shifted, &pt);

    let mut w = ctx.csv("spectrum.csv")?;
    writeln!(w, "index,re_E,im_E,re_Ept,im_Ept")?;
    for (k, (e, &j)) in spec.eigenvalues.iter().zip(&perm).enumerate() {
        writeln!(w, "{k},{}", join(&[e.re, e.im, pt[j].re, pt[j].im]))?;
    }
    w.flush()?;

    let pt_max = spectra::max_abs_imag(&pt);
    let summary = SpectrumSummary {
        dim: spec.dim(),
        nnz: h.nnz(),
        max_imag: spec.max_imag(),
        pt_max_abs_imag: pt_max,
        pt_broken: pt_max > spectra::default_imag_tol(&p),
        condition: spec.condition,
        max_residual: spec.max_residual,
        defective: spec.is_defective(),
        top_group: spec.top_group().to_vec(),
        group_sizes: spec.degeneracy_groups.iter().map(Vec::len).collect(),
    };
    ctx.json("spectrum_summary.json", &summary)
}

pub fn threshold(ctx: &Context) -> Result<(), CliError> {
    let t = &ctx.cfg.threshold;
    let mut points = Vec::new();
    for &soc in &t.soc {
        for &g in &t.interaction {
            for &n in &t.n_particles {
                points.push(ModelParams {
                    soc,
                    interaction: g,
                    n_particles: n,
                    ..ctx.cfg.model
                });
            }
        }
    }
    log::info!("{} threshold points", points.len());
    let results = spectra::breaking_thresholds(&points, t.beta_max, t.tol, ctx.exec);

    let mut w = ctx.csv("threshold.csv")?;
    writeln!(w, "soc,interaction,n_particles,beta_c,bracket_lo,bracket_hi,status")?;
    for (p, r) in points.iter().zip(results) {
        let (vals, status) = match r {
            Ok(r) => {
                let status = if r.broken_at_min { "broken_at_min" } else { "ok" };
                ([r.beta_c, r.bracket.0, r.bracket.1], status)
            }
            Err(Error::Bracket { beta_max }) => ([f64::NAN, beta_max, f64::NAN], "unbroken_to_beta_max"),
            Err(e) => return Err(e.into()),
        };
        writeln!(
            w,
            "{},{},{},{},{status}",
            fmt_f64(p.soc),
            fmt_f64(p.interaction),
            p.n_particles,
            join(&vals)
        )?;
    }
    w.flush()?;
    Ok(())
}

fn linspace((a, b, n): (f64, f64, usize)) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
}

pub fn phase_diagram(ctx: &Context) -> Result<(), CliError> {
    let pd = &ctx.cfg.phase_diagram;
    let gammas = linspace(pd.soc);
    let betas = linspace(pd.loss);
    let m = ctx.cfg.model;
    let diagram = spectra::single_particle_phase_diagram(&gammas, &betas, m.raman, m.hopping, ctx.exec)?;
    let mut w = ctx.csv("phase_diagram.csv")?;
    writeln!(w, "soc,loss,max_imag")?;
    for (gi, &g) in gammas.iter().enumerate() {
        for (bi, &b) in betas.iter().enumerate() {
            writeln!(w, "{}", join(&[g, b, diagram.get(gi, bi)]))?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn evolve(ctx: &Context, side: Side) -> Result<(), CliError> {
    let p = ctx.cfg.model;
    let x0 = ctx.cfg.initial_amplitudes();
    let grid = ctx.grid();
    let ev = ctx.cfg.evolve.clone();
    let quantum = || -> Result<Vec<qdyn::ObservableRecord>, Error> {
        let basis = FockBasis::new(p.n_particles, p.n_modes)?;
        let h = nhjunction::build_many_body(&p, &basis, false)?;
        let psi0 = qdyn::coherent_state(&x0, &basis)?;
        qdyn::quantum_observables(&h, &basis, &psi0, &grid, ev.method)
    };
    let mf = || -> Result<Vec<meanfield::MeanFieldRecord>, Error> {
        Ok(meanfield::evolve_meanfield(&x0, &p, &grid, ev.form)?.records())
    };
    let (q, m) = match side {
        Side::Quantum => (Some(quantum()?), None),
        Side::Meanfield => (None, Some(mf()?)),
        Side::Both => {
            let (q, m) = exec::join(ctx.exec, quantum, mf);
            (Some(q?), Some(m?))
        }
    };
    if let Some(q) = q {
        let mut w = ctx.csv("quantum_trajectory.csv")?;
        qdyn::write_trajectory_csv(&mut w, &q)?;
        w.flush()?;
    }
    if let Some(m) = m {
        let mut w = ctx.csv("meanfield_trajectory.csv")?;
        meanfield::write_meanfield_csv(&mut w, &m)?;
        w.flush()?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ComparisonReport {
    max_eps_n: f64,
    max_dz: f64,
    max_di: f64,
    breakdown: BreakdownReport,
    sync_quantum: SyncReport,
    sync_meanfield: SyncReport,
}

pub fn compare(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let c = &cfg.compare;
    let grid = ctx.grid();
    let t_end = cfg.time.t_end;
    let run = qcc::run_comparison_with(&cfg.model, &cfg.initial_amplitudes(), &grid, cfg.evolve.method, ctx.exec)?;

    let bw = c.breakdown_window.unwrap_or((0.5 * t_end, t_end));
    let sw = c.sync_window.unwrap_or((0.0, t_end));
    let bt = BreakdownThresholds {
        oscillating: c.oscillating,
        settled: c.settled,
    };
    let st = SyncThresholds {
        ratio_min: c.ratio_min,
        ratio_max: c.ratio_max,
        overlap_min: c.overlap_min,
    };
    let max_of = |f: fn(&qcc::Deviation) -> f64| run.deviations.iter().map(f).fold(0.0, f64::max);
    let report = ComparisonReport {
        max_eps_n: run.max_eps_n(t_end),
        max_dz: max_of(|d| d.dz),
        max_di: max_of(|d| d.di),
        breakdown: qcc::breakdown_detector(&run, bw, bt)?,
        sync_quantum: qcc::quantum_sync(&run.quantum, sw, st)?,
        sync_meanfield: qcc::meanfield_sync(&run.meanfield, sw, st)?,
    };

    let mut w = ctx.csv("comparison.csv")?;
    qcc::write_comparison_csv(&mut w, &run)?;
    w.flush()?;
    ctx.json("comparison_report.json", &report)
}

pub fn sweep_zbar(ctx: &Context) -> Result<(), CliError> {
    let cfg = &ctx.cfg;
    let z = &cfg.zbar;
    let opts = z.options();
    let x0 = cfg.initial_amplitudes();
    let method = cfg.evolve.method;
    let points: Vec<ModelParams> = z
        .n_particles
        .iter()
        .flat_map(|&n| {
            z.interaction.iter().map(move |&g| ModelParams {
                interaction: g,
                n_particles: n,
                ..cfg.model
            })
        })
        .collect();
    log::info!("{} time-average points", points.len());
    let results = exec::map_ordered(&points, ctx.exec, |p| -> Result<qdyn::TimeAverage, Error> {
        let basis = FockBasis::new(p.n_particles, p.n_modes)?;
        let h = nhjunction::build_many_body(p, &basis, false)?;
        let psi0 = qdyn::coherent_state(&x0, &basis)?;
        qdyn::time_averaged_z(&h, &basis, &psi0, &opts, method)
    });

    let mut w = ctx.csv("zbar.csv")?;
    writeln!(w, "n_particles,interaction,zbar,zbar_first_half,converged")?;
    for (p, r) in points.iter().zip(results) {
        let r = r?;
        writeln!(
            w,
            "{},{},{},{}",
            p.n_particles,
            fmt_f64(p.interaction),
            join(&[r.value, r.first_half]),
            r.converged
        )?;
    }
    w.flush()?;
    Ok(())
}
