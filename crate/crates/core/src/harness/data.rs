use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{sample_tokens, ModalityPair, SampleTokens};
use crate::synth::{read_clip, read_manifest, resolve_clip_path, ClipRecord, Split};
use crate::video::{Modality, PatchGeometry, VideoClip};

/// An RGB clip with its manifest record.
#[derive(Debug, Clone)]
pub struct LoadedClip {
    pub record: ClipRecord,
    pub clip: VideoClip,
}

/// A clip turned into model-ready token matrices for one modality pair.
#[derive(Debug, Clone)]
pub struct PreparedClip {
    pub record: ClipRecord,
    pub tokens: SampleTokens,
}

/// Records of `split`, optionally restricted to one domain, in manifest
/// order.
pub fn select_records<'a>(
    records: &'a [ClipRecord],
    split: Split,
    domain: Option<&str>,
) -> Vec<&'a ClipRecord> {
    records
        .iter()
        .filter(|r| r.split == split && domain.is_none_or(|d| r.domain == d))
        .collect()
}

/// Reads the clip files of `records`, checking each against `geometry`.
pub fn load_clips(manifest: &Path, records: &[&ClipRecord], geometry: &PatchGeometry) -> Result<Vec<LoadedClip>> {
    records
        .iter()
        .map(|record| {
            let mut clip = read_clip(&resolve_clip_path(manifest, record))?;
            if clip.shape() != geometry.clip {
                return Err(Error::Config(format!(
                    "clip `{}` has shape {:?}, the config expects {:?}",
                    record.id,
                    clip.shape(),
                    geometry.clip
                )));
            }
            clip = VideoClip::new(clip.shape(), clip.into_data(), Modality::Rgb, vec![record.id.clone()])?;
            Ok(LoadedClip {
                record: (*record).clone(),
                clip,
            })
        })
        .collect()
}

pub fn prepare_clips(clips: &[LoadedClip], pair: ModalityPair, geometry: &PatchGeometry) -> Result<Vec<PreparedClip>> {
    clips
        .iter()
        .map(|c| {
            Ok(PreparedClip {
                record: c.record.clone(),
                tokens: sample_tokens(&c.clip, 0, pair, geometry, c.record.label)?,
            })
        })
        .collect()
}

/// Reads a manifest and the clips of one split.
pub fn load_split(
    manifest: &Path,
    split: Split,
    domain: Option<&str>,
    geometry: &PatchGeometry,
) -> Result<Vec<LoadedClip>> {
    let records = read_manifest(manifest)?;
    let selected = select_records(&records, split, domain);
    load_clips(manifest, &selected, geometry)
}
