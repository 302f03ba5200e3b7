use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::CliError;

pub const FORMAT_VERSION: &str = "nhjunction output format v1";

/// Creates `dir/name` and writes the comment header: format version,
/// command, then the resolved config one `#` line at a time.
pub fn create_csv(dir: &Path, name: &str, command: &str, cfg: &ExperimentConfig) -> Result<BufWriter<File>, CliError> {
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# {FORMAT_VERSION}")?;
    writeln!(w, "# command: {command}")?;
    for line in cfg.to_toml().lines() {
        if line.is_empty() {
            writeln!(w, "#")?;
        } else {
            writeln!(w, "# {line}")?;
        }
    }
    Ok(w)
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    format_version: &'static str,
    command: &'a str,
    config: &'a ExperimentConfig,
    report: &'a T,
}

pub fn write_json<T: Serialize>(
    dir: &Path,
    name: &str,
    command: &str,
    cfg: &ExperimentConfig,
    report: &T,
) -> Result<(), CliError> {
    let path = dir.join(name);
    log::info!("writing {}", path.display());
    let env = Envelope {
        format_version: FORMAT_VERSION,
        command,
        config: cfg,
        report,
    };
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, &env).map_err(std::io::Error::from)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}
