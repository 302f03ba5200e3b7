//! Acceptance gate: one pass/fail line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use nhjunction::meanfield::{self, DensityMatrixMF, GpeForm, MeanFieldRecord};
use nhjunction::qcc::{self, BreakdownThresholds, SyncThresholds};
use nhjunction::qdyn::{self, Propagation};
use nhjunction::spectra;
use nhjunction::{build_coefficients, build_many_body, Complex64, FockBasis, ModelParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), nhjunction::Error>;

fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

fn all_in_r_down() -> [Complex64; 4] {
    [c(0.0), c(0.0), c(0.0), c(1.0)]
}

fn s_symmetric_start() -> [Complex64; 4] {
    let s = 0.5f64.sqrt();
    [c(s), c(0.0), c(0.0), c(s)]
}

/// Stencil grid `t_k + {-2h, -h, 0, h, 2h}` for each sample time.
fn stencil_grid(samples: &[f64], h: f64) -> Vec<f64> {
    samples
        .iter()
        .flat_map(|&t| [-2.0, -1.0, 0.0, 1.0, 2.0].map(|s| t + s * h))
        .collect()
}

/// Fourth-order centered difference from a stencil block.
fn stencil_derivative(values: &[f64], k: usize, h: f64) -> f64 {
    let v = &values[5 * k..5 * k + 5];
    (-v[4] + 8.0 * v[3] - 8.0 * v[1] + v[0]) / (12.0 * h)
}

fn half_integer_soc() -> Outcome {
    let mut ok = true;
    let mut worst = String::new();
    for g in [0.1, 5.0] {
        for n in [4u32, 10, 20] {
            let p = ModelParams {
                soc: 0.5,
                interaction: g,
                n_particles: n,
                ..ModelParams::default()
            };
            let basis = FockBasis::new(n, 4)?;
            let r = spectra::breaking_threshold(&p, &basis, 3.0, 1e-4)?;
            if !(r.broken_at_min && r.beta_c == 0.0) {
                ok = false;
                worst = format!("g={g} N={n} beta_c={}", r.beta_c);
            }
        }
    }
    Ok((ok, if ok { "beta_c = 0 on all 6 points".into() } else { worst }))
}

fn threshold_monotone() -> Outcome {
    let tol = 1e-3;
    let basis = FockBasis::new(20, 4)?;
    let mut values = Vec::new();
    for g in 0..=5 {
        let p = ModelParams {
            interaction: g as f64,
            n_particles: 20,
            ..ModelParams::default()
        };
        values.push(spectra::breaking_threshold(&p, &basis, 3.0, tol)?.beta_c);
    }
    let ok = values.windows(2).all(|w| w[1] <= w[0] + tol);
    let shown: Vec<String> = values.iter().map(|v| format!("{v:.4}")).collect();
    Ok((ok, format!("beta_c(g=0..5) = [{}]", shown.join(", "))))
}

fn spectral_shift() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut shift_dev = 0.0f64;
    let mut pair_dev = 0.0f64;
    let mut complex_seen = 0usize;
    for n in [2u32, 4, 10] {
        let basis = FockBasis::new(n, 4)?;
        for _ in 0..3 {
            let p = ModelParams {
                hopping: 1.0,
                raman: rng.gen_range(0.2..1.5),
                soc: rng.gen_range(0.0..1.0),
                interaction: rng.gen_range(0.0..5.0),
                loss: rng.gen_range(0.0..1.0),
                n_particles: n,
                n_modes: 4,
            };
            let lossy = spectra::eigenvalues(&build_many_body(&p, &basis, false)?)?;
            let pt = spectra::eigenvalues(&build_many_body(&p, &basis, true)?)?;
            let shift = Complex64::new(0.0, p.loss * n as f64 / 2.0);
            let shifted: Vec<Complex64> = lossy.iter().map(|e| e + shift).collect();
            let perm = spectra::match_spectra(&shifted, &pt);
            for (k, &j) in perm.iter().enumerate() {
                shift_dev = shift_dev.max((pt[j] - shifted[k]).norm());
            }
            let tol = spectra::default_imag_tol(&p);
            let conj: Vec<Complex64> = pt.iter().map(|e| e.conj()).collect();
            let partner = spectra::match_spectra(&pt, &conj);
            for (k, &j) in partner.iter().enumerate() {
                if pt[k].im.abs() > tol {
                    complex_seen += 1;
                    pair_dev = pair_dev.max((conj[j] - pt[k]).norm());
                }
            }
        }
    }
    let ok = shift_dev <= 1e-10 && pair_dev <= 1e-9;
    Ok((
        ok,
        format!("max shift deviation {shift_dev:.2e}, conjugate-pair deviation {pair_dev:.2e} over {complex_seen} complex eigenvalues"),
    ))
}

fn coherent_eigenstates() -> Outcome {
    let p = ModelParams {
        raman: 0.8,
        soc: 0.3,
        loss: 0.7,
        ..ModelParams::default()
    };
    let single = build_coefficients(&p)?.with_imaginary_shift(p.loss / 2.0).single_particle();
    let sp = spectra::eigendecompose_dense(&single)?;
    let mut worst = 0.0f64;
    for n in [2u32, 4, 6] {
        let pn = p.with_particles(n);
        let basis = FockBasis::new(n, 4)?;
        let h = build_many_body(&pn, &basis, true)?;
        for k in 0..4 {
            let x: Vec<Complex64> = (0..4).map(|i| sp.eigenvectors[(i, k)]).collect();
            let psi = qdyn::coherent_state(&x, &basis)?.scaled_amplitudes();
            let mut hpsi = vec![Complex64::default(); basis.dim()];
            h.matvec(&psi, &mut hpsi);
            let e = sp.eigenvalues[k] * n as f64;
            let num: f64 = hpsi.iter().zip(&psi).map(|(a, b)| (a - e * b).norm_sqr()).sum::<f64>().sqrt();
            let den: f64 = psi.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
            worst = worst.max(num / den);
        }
    }
    Ok((worst <= 1e-8, format!("max residual {worst:.2e}")))
}

fn figure3_params() -> ModelParams {
    ModelParams {
        interaction: 0.1,
        loss: 0.1,
        ..ModelParams::default()
    }
}

fn gpe_sigma_equivalence() -> Outcome {
    let p = figure3_params();
    let coeffs = build_coefficients(&p)?;
    let grid = qdyn::uniform_grid(0.0, 50.0, 0.5);
    let x0 = all_in_r_down();
    let traj = meanfield::evolve_meanfield(&x0, &p, &grid, GpeForm::Gauged)?;
    let sig = meanfield::evolve_sigma(&DensityMatrixMF::from_amplitudes(&x0), &coeffs, &grid)?;
    let dev = traj
        .states
        .iter()
        .zip(&sig)
        .map(|(x, s)| DensityMatrixMF::from_amplitudes(x).max_deviation(s))
        .fold(0.0, f64::max);
    Ok((dev <= 1e-7, format!("max entry deviation {dev:.2e}")))
}

fn norm_decay() -> Outcome {
    let h = 1e-3;
    let samples: Vec<f64> = (1..=20).map(|k| k as f64).collect();
    let grid = stencil_grid(&samples, h);

    let p = ModelParams {
        soc: 0.2,
        interaction: 1.0,
        loss: 0.1,
        ..ModelParams::default()
    };
    let x0 = meanfield::CoherentAmplitudes::normalized(vec![c(0.3), Complex64::new(0.1, 0.4), c(0.5), Complex64::new(-0.2, 0.6)])?;
    let traj = meanfield::evolve_meanfield(x0.as_slice(), &p, &grid, GpeForm::Gauged)?;
    let n: Vec<f64> = traj.states.iter().map(|x| meanfield::norm(x)).collect();
    let mut mf_dev = 0.0f64;
    for k in 0..samples.len() {
        let x = &traj.states[5 * k + 2];
        let law = -2.0 * p.loss * (x[2].norm_sqr() + x[3].norm_sqr());
        mf_dev = mf_dev.max((stencil_derivative(&n, k, h) - law).abs() / law.abs());
    }

    let pq = p.with_particles(4);
    let basis = FockBasis::new(4, 4)?;
    let hm = build_many_body(&pq, &basis, false)?;
    let psi0 = qdyn::coherent_state(x0.as_slice(), &basis)?;
    let states = qdyn::evolve_quantum(&hm, &psi0, &grid, Propagation::Spectral)?;
    let surv: Vec<f64> = states.iter().map(|s| s.survival()).collect();
    let mut q_dev = 0.0f64;
    for k in 0..samples.len() {
        let s = &states[5 * k + 2];
        let w = basis.mode_weights(&s.scaled_amplitudes());
        let law = -2.0 * p.loss * (w[2] + w[3]);
        q_dev = q_dev.max((stencil_derivative(&surv, k, h) - law).abs() / law.abs());
    }
    let ok = mf_dev <= 1e-6 && q_dev <= 1e-6;
    Ok((ok, format!("mean-field rel dev {mf_dev:.2e}, quantum rel dev {q_dev:.2e}")))
}

fn qcc_scaling() -> Outcome {
    let grid = qdyn::uniform_grid(0.0, 10.0, 0.05);
    let mut eps = Vec::new();
    for n in [4u32, 10, 20] {
        let run = qcc::run_comparison(&figure3_params().with_particles(n), &all_in_r_down(), &grid, Propagation::Spectral)?;
        eps.push(run.max_eps_n(10.0));
    }
    let ok = eps[0] > eps[1] && eps[1] > eps[2];
    Ok((ok, format!("max eps_n (N=4,10,20) = {:.3e}, {:.3e}, {:.3e}", eps[0], eps[1], eps[2])))
}

fn self_trapping() -> Outcome {
    let mut ok = true;
    let mut lines = Vec::new();
    let opts = qdyn::TimeAverageOptions::default();
    for n in [4u32, 10, 20] {
        let basis = FockBasis::new(n, 4)?;
        let psi0 = qdyn::coherent_state(&all_in_r_down(), &basis)?;
        for g in [0.1, 1.0, 5.0] {
            let p = ModelParams {
                soc: 0.5,
                interaction: g,
                loss: 0.1,
                n_particles: n,
                ..ModelParams::default()
            };
            let h = build_many_body(&p, &basis, false)?;
            let avg = qdyn::time_averaged_z(&h, &basis, &psi0, &opts, Propagation::Spectral)?;
            ok &= avg.value > 0.0 && avg.converged;
            lines.push(format!("{:.3}", avg.value));
        }
    }
    Ok((ok, format!("z-bar (N-major, g=0.1,1,5) = [{}]", lines.join(", "))))
}

fn breakdown() -> Outcome {
    let grid = qdyn::uniform_grid(0.0, 300.0, 0.1);
    let mut reports = Vec::new();
    for n in [4u32, 20] {
        let p = ModelParams {
            interaction: 5.0,
            loss: 0.1,
            n_particles: n,
            ..ModelParams::default()
        };
        let run = qcc::run_comparison(&p, &all_in_r_down(), &grid, Propagation::Spectral)?;
        reports.push(qcc::breakdown_detector(&run, (100.0, 300.0), BreakdownThresholds::default())?);
    }
    let ok = reports[0].breakdown && reports[0].quantum_oscillating && reports[0].meanfield_settled && !reports[1].breakdown;
    Ok((
        ok,
        format!(
            "N=4 var z (q, mf) = ({:.2e}, {:.2e}); N=20 = ({:.2e}, {:.2e})",
            reports[0].var_z_quantum, reports[0].var_z_meanfield, reports[1].var_z_quantum, reports[1].var_z_meanfield
        ),
    ))
}

fn steady_state() -> Outcome {
    let p = ModelParams {
        interaction: 5.0,
        loss: 0.1,
        n_particles: 20,
        ..ModelParams::default()
    };
    let basis = FockBasis::new(20, 4)?;
    let spectrum = spectra::eigendecompose(&build_many_body(&p, &basis, false)?)?;
    let psi0 = qdyn::coherent_state(&all_in_r_down(), &basis)?;
    let grid = qdyn::uniform_grid(0.0, 200.0, 0.1);
    let full = qdyn::spectral_observables(&spectrum, &basis, &psi0, &grid)?;
    let proj = qdyn::steady_state_projection(&spectrum, &psi0, &grid, &basis)?;
    let zs = proj.z_s();
    let is = proj.i_s();
    let mean = zs.iter().sum::<f64>() / zs.len() as f64;
    let std = (zs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / zs.len() as f64).sqrt();
    let (mut dz, mut di) = (0.0f64, 0.0f64);
    for (k, &t) in grid.iter().enumerate() {
        if t >= 100.0 {
            dz = dz.max((full[k].z - zs[k]).abs());
            di = di.max((full[k].i_spin - is[k]).abs());
        }
    }
    let ok = std < 1e-6 && dz <= 0.02 && di <= 0.05;
    Ok((
        ok,
        format!(
            "{} members, Z_s = {mean:.4} (std {std:.1e}), max |z - z_s| {dz:.1e}, max |I - I_s| {di:.1e}",
            proj.member_indices.len()
        ),
    ))
}

fn synchronization() -> Outcome {
    let x0 = s_symmetric_start();
    let grid = qdyn::uniform_grid(0.0, 200.0, 0.1);
    let mut s_dev = 0.0f64;
    let mut pop_drift = 0.0f64;
    for gamma in [0.0, 0.01] {
        let p = ModelParams {
            soc: gamma,
            interaction: 0.1,
            ..ModelParams::default()
        };
        let traj = meanfield::evolve_meanfield(&x0, &p, &grid, GpeForm::Gauged)?;
        for k in 0..traj.times.len() {
            let x = traj.ungauged(k);
            s_dev = s_dev.max((x[0] - x[3]).norm()).max((x[1] - x[2]).norm());
            if gamma == 0.0 {
                let r = MeanFieldRecord::new(traj.times[k], &x);
                for (a, b) in r.mode_populations.iter().zip([0.5, 0.0, 0.0, 0.5]) {
                    pop_drift = pop_drift.max((a - b).abs());
                }
            }
        }
    }
    let mut sync = Vec::new();
    for gamma in [0.0, 0.01] {
        let p = ModelParams {
            soc: gamma,
            interaction: 0.1,
            loss: 0.1,
            ..ModelParams::default()
        };
        let recs = meanfield::evolve_meanfield(&x0, &p, &grid, GpeForm::Gauged)?.records();
        sync.push(qcc::meanfield_sync(&recs, (0.0, 200.0), SyncThresholds::default())?);
    }
    let ok = s_dev <= 1e-8 && pop_drift <= 1e-8 && !sync[0].synchronized && sync[1].synchronized;
    Ok((
        ok,
        format!(
            "S deviation {s_dev:.1e}, gamma=0 population drift {pop_drift:.1e}, overlap gamma=0/0.01 = {:.3}/{:.3}, ratio gamma=0.01 = {:.3}",
            sync[0].overlap, sync[1].overlap, sync[1].amplitude_ratio
        ),
    ))
}

fn ehrenfest() -> Outcome {
    let p = ModelParams {
        raman: 0.7,
        soc: 0.3,
        interaction: 2.0,
        loss: 0.2,
        n_particles: 6,
        ..ModelParams::default()
    };
    let basis = FockBasis::new(6, 4)?;
    let h = build_many_body(&p, &basis, false)?;
    let x0 = meanfield::CoherentAmplitudes::normalized(vec![c(0.2), Complex64::new(0.5, 0.3), c(0.1), c(0.7)])?;
    let psi0 = qdyn::coherent_state(x0.as_slice(), &basis)?;
    let step = 1e-3;
    let samples: Vec<f64> = (1..=20).map(|k| 0.5 * k as f64).collect();
    let grid = stencil_grid(&samples, step);
    let states = qdyn::evolve_quantum(&h, &psi0, &grid, Propagation::Spectral)?;
    let zdiag = qdyn::imbalance_diagonal(&basis);
    let expect = |s: &qdyn::QuantumState| {
        let w: f64 = s.amplitudes.iter().map(|a| a.norm_sqr()).sum();
        s.amplitudes.iter().zip(&zdiag).map(|(a, z)| a.norm_sqr() * z).sum::<f64>() / w
    };
    let z: Vec<f64> = states.iter().map(expect).collect();
    let mut worst = 0.0f64;
    for k in 0..samples.len() {
        let s = &states[5 * k + 2];
        let rhs = qdyn::ehrenfest_rhs(&h, &s.amplitudes, &zdiag)?;
        let predicted = (Complex64::new(0.0, -1.0) * rhs).re;
        let fd = stencil_derivative(&z, k, step);
        worst = worst.max((fd - predicted).abs() / predicted.abs().max(1.0));
    }
    Ok((worst <= 1e-5, format!("max relative deviation {worst:.2e}")))
}

fn canonical_gradient() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let p = ModelParams {
            raman: rng.gen_range(0.0..2.0),
            soc: rng.gen_range(0.0..1.0),
            interaction: rng.gen_range(0.0..5.0),
            loss: rng.gen_range(0.0..1.0),
            ..ModelParams::default()
        };
        let x: Vec<Complex64> = (0..4)
            .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut rhs = vec![Complex64::default(); 4];
        meanfield::gpe_rhs(&x, &p, GpeForm::Ungauged, &mut rhs)?;
        let hstep = 1e-6;
        let mut diff = 0.0;
        let mut scale = 0.0;
        for i in 0..4 {
            let eval = |d: Complex64| -> Result<Complex64, nhjunction::Error> {
                let mut y = x.clone();
                y[i] += d;
                meanfield::classical_hamiltonian(&y, &p)
            };
            let d_re = (eval(c(hstep))? - eval(c(-hstep))?) / (2.0 * hstep);
            let d_im = (eval(Complex64::new(0.0, hstep))? - eval(Complex64::new(0.0, -hstep))?) / (2.0 * hstep);
            // d/dx* = (d/da + i d/db) / 2
            let wirtinger = (d_re + Complex64::new(0.0, 1.0) * d_im) * 0.5;
            let predicted = Complex64::new(0.0, -1.0) * wirtinger;
            diff += (predicted - rhs[i]).norm_sqr();
            scale += rhs[i].norm_sqr();
        }
        worst = worst.max((diff / scale).sqrt());
    }
    Ok((worst <= 1e-6, format!("max relative deviation {worst:.2e}")))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("half-integer SOC breaks PT at beta = 1e-4", half_integer_soc),
        ("threshold non-increasing in g (N = 20)", threshold_monotone),
        ("PT spectral shift and conjugate pairs", spectral_shift),
        ("noninteracting coherent eigenstates", coherent_eigenstates),
        ("GPE and two-point-function equivalence", gpe_sigma_equivalence),
        ("norm-decay laws", norm_decay),
        ("short-time QCC improves with N", qcc_scaling),
        ("self-trapping at gamma = 0.5", self_trapping),
        ("QCC breakdown at N = 4, not at N = 20", breakdown),
        ("steady-state projection", steady_state),
        ("symmetry-protected synchronization", synchronization),
        ("generalized Ehrenfest equation", ehrenfest),
        ("canonical gradient structure", canonical_gradient),
    ];
    let mut failures = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !pass {
            failures += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            k + 1,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
