//! `synth`: deterministic pyramid-corpus generation.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use mfiba_core::container::save_pyramid;
use mfiba_core::synth::synth_pyramid;

use crate::commands::emit;
use crate::config::RunConfig;

#[derive(Debug, clap::Args)]
pub struct SynthArgs {
    /// Number of pyramids (seeds run seed..seed+count) when no list is given.
    #[arg(long)]
    pub count: Option<usize>,
    /// Explicit seed list, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    /// Object-size parameter override in [0, 1].
    #[arg(long)]
    pub size_param: Option<f64>,
}

pub fn run(cfg: &RunConfig, out: Option<&Path>, args: &SynthArgs) -> Result<()> {
    let dir = out.unwrap_or(&cfg.pyramid_dir);
    let mut spec = cfg.synth.to_spec();
    if let Some(size_param) = args.size_param {
        spec.object_size_param = size_param;
    }
    let seeds: Vec<u64> = if !args.seeds.is_empty() {
        args.seeds.clone()
    } else if let Some(seeds) = &cfg.synth.seeds {
        seeds.clone()
    } else {
        let count = args.count.unwrap_or(cfg.synth.count) as u64;
        (cfg.seed..cfg.seed.saturating_add(count)).collect()
    };
    if seeds.is_empty() {
        bail!("no seeds to synthesize; give --seeds, --count, or synth.count > 0");
    }

    let paths = seeds
        .par_iter()
        .map(|&seed| {
            let pyramid = synth_pyramid(seed, &spec)
                .with_context(|| format!("synthesizing pyramid for seed {seed}"))?;
            let path = dir.join(format!("pyr_{seed:05}.fpyr"));
            save_pyramid(&pyramid, &path)
                .with_context(|| format!("writing pyramid {}", path.display()))?;
            Ok(path)
        })
        .collect::<Result<Vec<_>>>()?;

    for path in &paths {
        emit(path.display().to_string());
    }
    eprintln!(
        "synthesized {} pyramids into {}",
        paths.len(),
        dir.display()
    );
    Ok(())
}
