//! Turning stored clips into network inputs.

use crate::config::Config;
use crate::dataset::{LabeledClip, Manifest, Split};
use crate::error::{Error, Result};
use crate::parallel;
use crate::preproc::{preprocess, RawClip};
use crate::tensor::Tensor;

/// A preprocessed clip ready for the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub input: Tensor<f32>,
    pub label: bool,
}

pub fn prepare(clip: &LabeledClip, cfg: &Config) -> Result<Tensor<f32>> {
    let raw = RawClip::new(clip.frames.clone(), cfg.source_fps, clip.id.clone())?;
    let input = preprocess(&raw, &cfg.preproc)?;
    if input.shape() != cfg.net.input_shape {
        return Err(Error::shape(
            "pipeline",
            format!("preprocessed clip {}", clip.id),
            format!("{:?}", cfg.net.input_shape),
            format!("{:?}", input.shape()),
        ));
    }
    Ok(input)
}

/// Reads and preprocesses every clip of `split`.
pub fn load_split(manifest: &Manifest, split: Split, cfg: &Config, threads: usize) -> Result<Vec<Sample>> {
    let entries: Vec<_> = manifest.split(split).cloned().collect();
    if entries.is_empty() {
        return Err(Error::EmptySplit(split.name().into()));
    }
    parallel::map(&entries, threads, |e| {
        let mut clip = crate::dataset::read_clip(manifest.root.join(&e.path))?;
        clip.id = e.id();
        Ok(Sample {
            input: prepare(&clip, cfg)?,
            id: clip.id,
            label: e.label,
        })
    })
    .into_iter()
    .collect()
}
