use std::path::Path;

use anyhow::Context;
use syncforge::dsp::MelExtractor;
use syncforge::io::{read_wav, write_fmat};

use crate::config::RunConfig;
use crate::Failure;

pub fn melspec(input: &Path, output: &Path, config: Option<&Path>) -> Result<(), Failure> {
    let cfg = RunConfig::load(config)?;
    let extractor = MelExtractor::<f64>::new(&cfg.mel).map_err(Failure::usage)?;
    let wave = read_wav::<f64>(input).with_context(|| format!("reading {}", input.display()))?;
    let mel = extractor.compute(&wave)?;
    write_fmat(output, &mel.frames).with_context(|| format!("writing {}", output.display()))?;
    eprintln!(
        "{} frames x {} mels -> {}",
        mel.n_frames(),
        mel.n_mels(),
        output.display()
    );
    Ok(())
}
