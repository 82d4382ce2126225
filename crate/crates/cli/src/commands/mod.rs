mod align;
mod estimate;
mod eval;
mod gen;
mod melspec;
mod train;

pub use align::align;
pub use estimate::estimate;
pub use eval::eval;
pub use gen::gen;
pub use melspec::melspec;
pub use train::train;

use std::path::Path;

use syncforge::align::Aligner;

use crate::config::RunConfig;
use crate::Failure;

fn aligner(cfg: &RunConfig) -> Result<Aligner<f64>, Failure> {
    Aligner::with_config(&cfg.mel)
        .and_then(|a| a.with_search(cfg.max_shift_ms, cfg.shift_step_ms))
        .map_err(Failure::usage)
}

/// Writes pretty JSON to `output`, or to stdout when absent.
fn emit_json<T: serde::Serialize>(value: &T, output: Option<&Path>) -> Result<(), Failure> {
    match output {
        Some(p) => crate::files::write_json(p, value)?,
        None => println!("{}", serde_json::to_string_pretty(value)?),
    }
    Ok(())
}
