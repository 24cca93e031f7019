use std::fs;
use std::process::ExitCode;

use anyhow::Context;
use vtprune::synth::{generate, mixed_corpus_specs, video_id, write_video, SynthSpec};

use crate::{CmdResult, Failure, GenerateArgs};

pub fn corpus_specs(a: &GenerateArgs) -> Vec<SynthSpec> {
    mixed_corpus_specs(a.videos, a.seed)
        .into_iter()
        .map(|s| SynthSpec {
            frames: a.frames,
            tokens_per_frame: a.tokens,
            channels: a.channels,
            n_scenes: a.scenes,
            static_fraction: a.static_fraction.unwrap_or(s.static_fraction),
            static_noise: a.static_noise.unwrap_or(s.static_noise),
            dynamic_drift: a.dynamic_drift.unwrap_or(s.dynamic_drift),
            ..s
        })
        .collect()
}

pub fn cmd_generate(a: &GenerateArgs) -> CmdResult {
    if a.videos == 0 {
        return Err(Failure::usage(anyhow::anyhow!("--videos must be >= 1")));
    }
    let specs = corpus_specs(a);
    for s in &specs {
        s.validate().map_err(Failure::usage)?;
    }
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    for (i, spec) in specs.iter().enumerate() {
        let video = generate(spec)?;
        write_video(&video, &a.out, &video_id(i))?;
    }
    eprintln!("wrote {} videos to {}", specs.len(), a.out.display());
    Ok(ExitCode::SUCCESS)
}
