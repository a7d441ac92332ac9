//! `decode`: reconstructs a pyramid from a coded stream, using the metadata
//! sidecar for the tensor shapes the wire format does not carry.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use mfiba_core::codec::{decode_pyramid, ScaleBitstream};
use mfiba_core::container::save_pyramid;

use crate::commands::emit;
use crate::config::RunConfig;
use crate::meta::{meta_path, StreamMeta};

#[derive(Debug, clap::Args)]
pub struct DecodeArgs {
    /// Coded stream to decode (expects its `.meta.json` sidecar next to it).
    pub stream: PathBuf,
    /// Sidecar path override.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

pub fn run(_cfg: &RunConfig, out: Option<&Path>, args: &DecodeArgs) -> Result<()> {
    let sidecar = args.meta.clone().unwrap_or_else(|| meta_path(&args.stream));
    let meta = StreamMeta::load(&sidecar)?;
    let bytes = std::fs::read(&args.stream)
        .with_context(|| format!("reading stream {}", args.stream.display()))?;

    let shapes = meta.shapes();
    let mut streams: Vec<ScaleBitstream> = Vec::with_capacity(shapes.len());
    let mut offset = 0usize;
    for (i, &shape) in shapes.iter().enumerate() {
        let (stream, consumed) = ScaleBitstream::from_bytes(&bytes[offset..], shape)
            .with_context(|| format!("parsing scale {i} of {}", args.stream.display()))?;
        offset += consumed;
        streams.push(stream);
    }
    if offset != bytes.len() {
        bail!(
            "{} holds {} trailing bytes after the {} scales the sidecar lists",
            args.stream.display(),
            bytes.len() - offset,
            shapes.len()
        );
    }

    let mut pyramid = decode_pyramid(&streams, meta.has_pool)
        .with_context(|| format!("decoding {}", args.stream.display()))?;
    pyramid.source_id = meta.source_id.clone();
    pyramid.object_size_param = meta.object_size_param;

    // `.dec.fpyr` rather than `.fpyr`, so decoding next to the original
    // pyramid never overwrites it.
    let out_path = match out {
        Some(path) => path.to_path_buf(),
        None => args.stream.with_extension("dec.fpyr"),
    };
    save_pyramid(&pyramid, &out_path)
        .with_context(|| format!("writing pyramid {}", out_path.display()))?;
    eprintln!(
        "decoded {} scales ({} bits) into {}",
        streams.len(),
        meta.total_bits,
        out_path.display()
    );
    emit(out_path.display().to_string());
    Ok(())
}
