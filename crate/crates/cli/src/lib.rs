//! Batch front-end: spec parsing, the staged pipeline and report output.

pub mod pipeline;
pub mod report;
pub mod spec;

use std::fs;
use std::path::Path;

pub use pipeline::{exit_code, run_pipeline, Outcome};
pub use spec::{parse_spec, parse_spec_str, NetworkSpec};

/// Writes every artifact of `outcome` into `dir`, creating it if needed.
pub fn write_artifacts(outcome: &Outcome, dir: &Path) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    for (name, text) in &outcome.files {
        fs::write(dir.join(name), text)?;
    }
    Ok(())
}
