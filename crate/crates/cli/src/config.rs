//! Experiment configuration: one TOML document plus `--set key=value`
//! overrides applied before deserialization.

use std::path::Path;

use nhjunction::meanfield::GpeForm;
use nhjunction::qcc::{BreakdownThresholds, SyncThresholds};
use nhjunction::qdyn::{Propagation, TimeAverageOptions};
use nhjunction::{Complex64, ModelParams};
use serde::{Deserialize, Serialize};
use toml::{Table, Value};

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub model: ModelParams,
    pub spectrum: SpectrumSection,
    pub threshold: ThresholdSection,
    pub phase_diagram: PhaseDiagramSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    pub evolve: EvolveSection,
    pub compare: CompareSection,
    pub zbar: ZbarSection,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SpectrumSection {
    /// Also write the lossy matrix in coordinate format.
    pub dump_matrix: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ThresholdSection {
    pub soc: Vec<f64>,
    pub interaction: Vec<f64>,
    pub n_particles: Vec<u32>,
    pub beta_max: f64,
    pub tol: f64,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self {
            soc: vec![0.0],
            interaction: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            n_particles: vec![4],
            beta_max: 3.0,
            tol: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhaseDiagramSection {
    /// `[start, stop, points]`, endpoints included.
    pub soc: (f64, f64, usize),
    pub loss: (f64, f64, usize),
}

impl Default for PhaseDiagramSection {
    fn default() -> Self {
        Self {
            soc: (0.0, 2.0, 81),
            loss: (0.0, 4.0, 81),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TimeSection {
    pub t_end: f64,
    pub dt: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        Self { t_end: 50.0, dt: 0.05 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialSection {
    /// Mode amplitudes as `[re, im]` pairs, normalized before use.
    pub amplitudes: Vec<[f64; 2]>,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            amplitudes: vec![[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [0.0, 0.0]],
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvolveSection {
    pub method: Propagation,
    pub form: GpeForm,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompareSection {
    /// Defaults to the second half of the run.
    pub breakdown_window: Option<(f64, f64)>,
    /// Defaults to the whole run.
    pub sync_window: Option<(f64, f64)>,
    pub oscillating: f64,
    pub settled: f64,
    pub ratio_min: f64,
    pub ratio_max: f64,
    pub overlap_min: f64,
}

impl Default for CompareSection {
    fn default() -> Self {
        let b = BreakdownThresholds::default();
        let s = SyncThresholds::default();
        Self {
            breakdown_window: None,
            sync_window: None,
            oscillating: b.oscillating,
            settled: b.settled,
            ratio_min: s.ratio_min,
            ratio_max: s.ratio_max,
            overlap_min: s.overlap_min,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZbarSection {
    pub interaction: Vec<f64>,
    pub n_particles: Vec<u32>,
    pub horizon: f64,
    pub burn_in: f64,
    pub dt: f64,
    pub rel_tol: f64,
    pub abs_tol: f64,
}

impl Default for ZbarSection {
    fn default() -> Self {
        let o = TimeAverageOptions::default();
        Self {
            interaction: vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0],
            n_particles: vec![4, 10],
            horizon: o.horizon,
            burn_in: o.burn_in,
            dt: o.dt,
            rel_tol: o.rel_tol,
            abs_tol: o.abs_tol,
        }
    }
}

impl ZbarSection {
    pub fn options(&self) -> TimeAverageOptions {
        TimeAverageOptions {
            horizon: self.horizon,
            burn_in: self.burn_in,
            dt: self.dt,
            rel_tol: self.rel_tol,
            abs_tol: self.abs_tol,
        }
    }
}

impl ExperimentConfig {
    /// Reads `path` (if any), applies overrides and validates.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", p.display())))?;
                text.parse::<Table>()
                    .map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?
            }
            None => Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: ExperimentConfig = Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.model.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if !(self.time.t_end > 0.0) || !(self.time.dt > 0.0) || !self.time.t_end.is_finite() {
            return bad(format!("need t_end > 0 and dt > 0, got {} and {}", self.time.t_end, self.time.dt));
        }
        if self.initial.amplitudes.len() != self.model.n_modes {
            return bad(format!(
                "initial.amplitudes has {} entries, expected {}",
                self.initial.amplitudes.len(),
                self.model.n_modes
            ));
        }
        let norm: f64 = self.initial.amplitudes.iter().map(|[re, im]| re * re + im * im).sum();
        if !(norm > 0.0) || !norm.is_finite() {
            return bad("initial.amplitudes must be finite and not all zero".into());
        }
        let t = &self.threshold;
        if !(t.beta_max > 0.0) || !(t.tol > 0.0) {
            return bad("threshold.beta_max and threshold.tol must be positive".into());
        }
        for (name, (a, b, n)) in [("soc", self.phase_diagram.soc), ("loss", self.phase_diagram.loss)] {
            if n == 0 || !a.is_finite() || !b.is_finite() {
                return bad(format!("phase_diagram.{name} needs finite endpoints and at least one point"));
            }
        }
        if self.phase_diagram.loss.0 < 0.0 {
            return bad("phase_diagram.loss must start at a non-negative value".into());
        }
        let z = &self.zbar;
        if !(z.horizon > z.burn_in) || z.burn_in < 0.0 || !(z.dt > 0.0) {
            return bad("zbar needs horizon > burn_in >= 0 and dt > 0".into());
        }
        for w in [self.compare.breakdown_window, self.compare.sync_window].into_iter().flatten() {
            if !(w.1 > w.0) {
                return bad(format!("empty comparison window [{}, {}]", w.0, w.1));
            }
        }
        Ok(())
    }

    /// Initial amplitudes scaled to unit norm.
    pub fn initial_amplitudes(&self) -> Vec<Complex64> {
        let x: Vec<Complex64> = self.initial.amplitudes.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        let n = x.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        x.into_iter().map(|c| c / n).collect()
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// `a.b.c=value`; the value is read as a TOML literal and falls back to a
/// bare string.
fn apply_override(table: &mut Table, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{spec}' is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Config(format!("bad override key '{key}'")));
    }
    let (last, path) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for p in path {
        let entry = cur.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("override '{key}': '{p}' is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}
