//! Synthetic real/fake clip generator, the `FSVC` clip file format and
//! JSON-lines dataset manifests.
//!
//! Real clips are smoothed random colour fields that drift slowly over time
//! with per-clip sensor noise. A fake clip is the real clip for the same seed
//! with a domain-specific artifact confined to one rectangular region, so the
//! only real/fake difference is a local texture disruption.
//!
//! Clip file layout (little-endian):
//!
//! | offset | size | field                    |
//! |--------|------|--------------------------|
//! | 0      | 4    | magic `FSVC`             |
//! | 4      | 2    | version (`1`)            |
//! | 6      | 4    | T                        |
//! | 10     | 4    | C                        |
//! | 14     | 4    | H                        |
//! | 18     | 4    | W                        |
//! | 22     | 4    | dtype tag (`0` = f32)    |
//! | 26     | 4·N  | `T x C x H x W` f32 data |

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::video::{mix_seed, ClipShape, Modality, VideoClip};

pub const CLIP_MAGIC: &[u8; 4] = b"FSVC";
pub const CLIP_VERSION: u16 = 1;
pub const CLIP_HEADER_LEN: usize = 26;
const DTYPE_F32: u32 = 0;
/// Upper bound on the element count of a single clip file.
const MAX_CLIP_ELEMENTS: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ArtifactKind {
    /// Composites a fine foreign texture over the region with a feathered edge.
    PatchBlend,
    /// Replaces the region by a block-resampled copy of itself with fresh grain.
    RegionResample,
    /// Adds white noise inside the region.
    NoiseInject,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainParams {
    pub name: String,
    /// Gaussian sigma, in pixels, of the base colour field.
    pub blur_radius: f64,
    pub palette_mean: [f64; 3],
    pub palette_std: [f64; 3],
    /// Per-clip offset on each channel mean, uniform in `[-j, j]`.
    pub palette_jitter: f64,
    /// Maximum drift of the field per frame, in pixels.
    pub drift: f64,
    /// Per-clip multiplier on `palette_std`, drawn uniformly from this range.
    pub contrast: (f64, f64),
    /// Per-clip sensor noise std is drawn uniformly from this range.
    pub sensor_noise: (f64, f64),
    pub artifact: ArtifactKind,
    /// Fraction of the frame covered by the artifact region, in `(0, 0.5]`.
    pub region_fraction: f64,
    /// Artifact amplitude is drawn uniformly from this range.
    pub artifact_strength: (f64, f64),
    /// Amplitude, relative to the artifact strength, of the pixel-grid
    /// checkerboard left by generator upsampling, shared by every artifact
    /// kind.
    pub fingerprint: f64,
}

impl DomainParams {
    /// Smooth fields with patch-blend artifacts.
    pub fn alpha() -> Self {
        Self {
            name: "alpha".into(),
            blur_radius: 2.0,
            palette_mean: [0.58, 0.46, 0.40],
            palette_std: [0.10, 0.09, 0.08],
            palette_jitter: 0.15,
            drift: 0.6,
            contrast: (0.5, 2.5),
            sensor_noise: (0.002, 0.01),
            artifact: ArtifactKind::PatchBlend,
            region_fraction: 0.25,
            artifact_strength: (0.05, 0.12),
            fingerprint: 3.0,
        }
    }

    /// Coarser fields, a cooler palette and region-resample artifacts.
    pub fn beta() -> Self {
        Self {
            name: "beta".into(),
            blur_radius: 3.5,
            palette_mean: [0.42, 0.48, 0.56],
            palette_std: [0.13, 0.12, 0.14],
            palette_jitter: 0.15,
            drift: 0.9,
            contrast: (0.5, 2.5),
            sensor_noise: (0.002, 0.01),
            artifact: ArtifactKind::RegionResample,
            region_fraction: 0.25,
            artifact_strength: (0.05, 0.12),
            fingerprint: 3.0,
        }
    }

    /// Looks up a built-in domain by name.
    pub fn builtin(name: &str) -> Result<Self> {
        match name {
            "alpha" => Ok(Self::alpha()),
            "beta" => Ok(Self::beta()),
            other => Err(Error::Config(format!("unknown domain `{other}`"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.region_fraction > 0.0 && self.region_fraction <= 0.5) {
            return Err(Error::Config(format!(
                "region fraction {} is outside (0, 0.5]",
                self.region_fraction
            )));
        }
        if self.blur_radius <= 0.0
            || self.palette_jitter < 0.0
            || self.sensor_noise.0 < 0.0
            || self.sensor_noise.1 < self.sensor_noise.0
            || self.contrast.0 <= 0.0
            || self.contrast.1 < self.contrast.0
        {
            return Err(Error::Config(format!("invalid domain parameters for `{}`", self.name)));
        }
        Ok(())
    }
}

/// Axis-aligned artifact region in pixel coordinates (half-open).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub x0: usize,
    pub y0: usize,
    pub x1: usize,
    pub y1: usize,
}

impl Region {
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x0..self.x1).contains(&x) && (self.y0..self.y1).contains(&y)
    }

    pub fn area(&self) -> usize {
        (self.x1 - self.x0) * (self.y1 - self.y0)
    }
}

#[derive(Debug, Clone)]
pub struct GeneratedClip {
    pub clip: VideoClip,
    /// `None` for real clips.
    pub region: Option<Region>,
}

/// Desk-scale clip shape: 8 frames of 32x32 RGB.
pub fn desk_shape() -> ClipShape {
    ClipShape::new(8, 3, 32, 32)
}

struct Field {
    size: usize,
    data: Vec<f64>,
}

impl Field {
    fn noise(size: usize, rng: &mut ChaCha8Rng) -> Self {
        let data = (0..size * size).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        Self { size, data }
    }

    fn blurred(mut self, sigma: f64) -> Self {
        let radius = (3.0 * sigma).ceil() as isize;
        let kernel: Vec<f64> = (-radius..=radius)
            .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
            .collect();
        let norm: f64 = kernel.iter().sum();
        let n = self.size as isize;
        for pass in 0..2 {
            let mut out = vec![0.0; self.data.len()];
            for y in 0..n {
                for x in 0..n {
                    let mut acc = 0.0;
                    for (k, w) in kernel.iter().enumerate() {
                        let o = k as isize - radius;
                        let (sx, sy) = if pass == 0 { (x + o, y) } else { (x, y + o) };
                        let sx = sx.rem_euclid(n);
                        let sy = sy.rem_euclid(n);
                        acc += w * self.data[(sy * n + sx) as usize];
                    }
                    out[(y * n + x) as usize] = acc / norm;
                }
            }
            self.data = out;
        }
        self
    }

    fn standardized(mut self) -> Self {
        let n = self.data.len() as f64;
        let mean = self.data.iter().sum::<f64>() / n;
        let var = self.data.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let inv = 1.0 / var.sqrt().max(1e-12);
        self.data.iter_mut().for_each(|v| *v = (*v - mean) * inv);
        self
    }

    /// Bilinear sample with wrap-around.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let n = self.size as isize;
        let (fx, fy) = (x.floor(), y.floor());
        let (tx, ty) = (x - fx, y - fy);
        let at = |xx: isize, yy: isize| self.data[(yy.rem_euclid(n) * n + xx.rem_euclid(n)) as usize];
        let (ix, iy) = (fx as isize, fy as isize);
        let top = at(ix, iy) * (1.0 - tx) + at(ix + 1, iy) * tx;
        let bottom = at(ix, iy + 1) * (1.0 - tx) + at(ix + 1, iy + 1) * tx;
        top * (1.0 - ty) + bottom * ty
    }
}

fn pick_region(shape: &ClipShape, fraction: f64, rng: &mut ChaCha8Rng) -> Region {
    let area = fraction * (shape.width * shape.height) as f64;
    let aspect: f64 = rng.random_range(0.75..1.333);
    let w = ((area * aspect).sqrt().round() as usize).clamp(2, shape.width);
    let h = ((area / w as f64).round() as usize).clamp(2, shape.height);
    let x0 = rng.random_range(0..=shape.width - w);
    let y0 = rng.random_range(0..=shape.height - h);
    Region {
        x0,
        y0,
        x1: x0 + w,
        y1: y0 + h,
    }
}

/// Feathered membership in `[0, 1]`: ramps up over `feather` pixels inside
/// the region border.
fn feathered(region: &Region, x: usize, y: usize, feather: f64) -> f64 {
    if !region.contains(x, y) {
        return 0.0;
    }
    let d = [
        x - region.x0,
        region.x1 - 1 - x,
        y - region.y0,
        region.y1 - 1 - y,
    ]
    .into_iter()
    .min()
    .unwrap_or(0) as f64;
    ((d + 1.0) / (feather + 1.0)).min(1.0)
}

/// Generates one clip (batch of one) for `(domain, label, seed)`.
///
/// The fake clip for a seed is the real clip for that seed plus the domain
/// artifact, so both share content and noise.
pub fn generate_clip(
    domain: &DomainParams,
    shape: ClipShape,
    label: u8,
    seed: u64,
    id: &str,
) -> Result<GeneratedClip> {
    domain.validate()?;
    if shape.channels != 3 {
        return Err(Error::Config("synthetic clips are RGB".into()));
    }
    if label > 1 {
        return Err(Error::Label(format!("label {label} is not 0 or 1")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let margin = (domain.drift * shape.frames as f64).ceil() as usize + 4;
    let size = shape.height.max(shape.width) + 2 * margin;
    let luma = Field::noise(size, &mut rng).blurred(domain.blur_radius).standardized();
    let chroma: Vec<Field> = (0..3)
        .map(|_| Field::noise(size, &mut rng).blurred(2.0 * domain.blur_radius).standardized())
        .collect();
    let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
    let speed: f64 = rng.random_range(0.3..1.0) * domain.drift;
    let (vx, vy) = (speed * angle.cos(), speed * angle.sin());
    let noise_std: f64 = rng.random_range(domain.sensor_noise.0..=domain.sensor_noise.1);
    let contrast: f64 = rng.random_range(domain.contrast.0..=domain.contrast.1);
    let j = domain.palette_jitter;
    let mean: [f64; 3] = std::array::from_fn(|c| domain.palette_mean[c] + rng.random_range(-j..=j));

    let plane = shape.height * shape.width;
    let mut data = vec![0.0f64; shape.len()];
    for t in 0..shape.frames {
        let (ox, oy) = (margin as f64 + vx * t as f64, margin as f64 + vy * t as f64);
        for y in 0..shape.height {
            for x in 0..shape.width {
                let (sx, sy) = (ox + x as f64, oy + y as f64);
                let l = luma.sample(sx, sy);
                for c in 0..3 {
                    let v = mean[c]
                        + contrast * domain.palette_std[c] * (0.8 * l + 0.6 * chroma[c].sample(sx, sy));
                    data[t * 3 * plane + c * plane + y * shape.width + x] = v;
                }
            }
        }
        // luminance-correlated sensor noise, same draw on all channels plus a
        // small per-channel part
        for i in 0..plane {
            let shared = noise_std * rng.sample::<f64, _>(StandardNormal);
            for c in 0..3 {
                let own = 0.3 * noise_std * rng.sample::<f64, _>(StandardNormal);
                data[t * 3 * plane + c * plane + i] += shared + own;
            }
        }
    }

    // artifact randomness comes from an independent stream so the real
    // content is identical for both labels
    let mut art_rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0xA57));
    let region = if label == 1 {
        let region = pick_region(&shape, domain.region_fraction, &mut art_rng);
        let strength: f64 = art_rng.random_range(domain.artifact_strength.0..=domain.artifact_strength.1);
        apply_artifact(domain, &shape, &mut data, &region, strength, (vx, vy), margin, &mut art_rng);
        Some(region)
    } else {
        None
    };

    let data = data.into_iter().map(|v| v.clamp(0.0, 1.0) as f32).collect();
    let clip = VideoClip::new(shape, data, Modality::Rgb, vec![id.to_string()])?;
    Ok(GeneratedClip { clip, region })
}

#[allow(clippy::too_many_arguments)]
fn apply_artifact(
    domain: &DomainParams,
    shape: &ClipShape,
    data: &mut [f64],
    region: &Region,
    strength: f64,
    velocity: (f64, f64),
    margin: usize,
    rng: &mut ChaCha8Rng,
) {
    let plane = shape.height * shape.width;
    let size = shape.height.max(shape.width) + 2 * margin;
    match domain.artifact {
        ArtifactKind::PatchBlend => {
            // fine foreign texture that moves with the content
            let texture = Field::noise(size, rng).blurred(0.6).standardized();
            let tint: [f64; 3] = [rng.random_range(0.7..1.3), rng.random_range(0.7..1.3), rng.random_range(0.7..1.3)];
            for t in 0..shape.frames {
                let (ox, oy) = (margin as f64 + velocity.0 * t as f64, margin as f64 + velocity.1 * t as f64);
                for y in region.y0..region.y1 {
                    for x in region.x0..region.x1 {
                        let a = feathered(region, x, y, 2.0);
                        let v = strength * texture.sample(ox + x as f64, oy + y as f64);
                        for (c, k) in tint.iter().enumerate() {
                            data[t * 3 * plane + c * plane + y * shape.width + x] += a * k * v;
                        }
                    }
                }
            }
        }
        ArtifactKind::RegionResample => {
            // 2x2 block resampling followed by fresh per-pixel grain, with a
            // hard region border
            for t in 0..shape.frames {
                let grain: Vec<f64> = (0..plane)
                    .map(|_| strength * rng.sample::<f64, _>(StandardNormal))
                    .collect();
                for c in 0..3 {
                    let base = t * 3 * plane + c * plane;
                    let original: Vec<f64> = data[base..base + plane].to_vec();
                    for y in region.y0..region.y1 {
                        for x in region.x0..region.x1 {
                            let by = region.y0 + (y - region.y0) / 2 * 2;
                            let bx = region.x0 + (x - region.x0) / 2 * 2;
                            data[base + y * shape.width + x] =
                                original[by * shape.width + bx] + grain[y * shape.width + x];
                        }
                    }
                }
            }
        }
        ArtifactKind::NoiseInject => {
            for t in 0..shape.frames {
                for y in region.y0..region.y1 {
                    for x in region.x0..region.x1 {
                        let v = strength * rng.sample::<f64, _>(StandardNormal);
                        for c in 0..3 {
                            data[t * 3 * plane + c * plane + y * shape.width + x] += v;
                        }
                    }
                }
            }
        }
    }
    if domain.fingerprint > 0.0 {
        let amplitude = domain.fingerprint * strength;
        for t in 0..shape.frames {
            for y in region.y0..region.y1 {
                for x in region.x0..region.x1 {
                    let weight = match domain.artifact {
                        ArtifactKind::PatchBlend => feathered(region, x, y, 2.0),
                        _ => 1.0,
                    };
                    let sign = if (x + y) % 2 == 0 { 1.0 } else { -1.0 };
                    for c in 0..3 {
                        data[t * 3 * plane + c * plane + y * shape.width + x] += weight * sign * amplitude;
                    }
                }
            }
        }
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4 bytes"))
}

/// Serialises a single clip (batch of one) to the `FSVC` byte layout.
pub fn encode_clip(clip: &VideoClip) -> Result<Vec<u8>> {
    if clip.batch() != 1 {
        return Err(Error::Geometry(format!(
            "clip files hold one clip, got a batch of {}",
            clip.batch()
        )));
    }
    let s = clip.shape();
    let mut out = Vec::with_capacity(CLIP_HEADER_LEN + 4 * s.len());
    out.extend_from_slice(CLIP_MAGIC);
    out.extend_from_slice(&CLIP_VERSION.to_le_bytes());
    for dim in [s.frames, s.channels, s.height, s.width] {
        let dim = u32::try_from(dim).map_err(|_| Error::Geometry(format!("dimension {dim} overflows u32")))?;
        out.extend_from_slice(&dim.to_le_bytes());
    }
    out.extend_from_slice(&DTYPE_F32.to_le_bytes());
    for v in clip.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses `FSVC` bytes; the clip id is attached by the caller.
pub fn decode_clip(bytes: &[u8], id: &str) -> Result<VideoClip> {
    if bytes.len() < 4 || &bytes[..4] != CLIP_MAGIC {
        return Err(Error::format(0, "bad magic, expected `FSVC`"));
    }
    if bytes.len() < CLIP_HEADER_LEN {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated header: {} of {CLIP_HEADER_LEN} bytes", bytes.len()),
        ));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != CLIP_VERSION {
        return Err(Error::format(4, format!("unsupported version {version}")));
    }
    let dims: Vec<u32> = (0..4).map(|i| read_u32(bytes, 6 + 4 * i)).collect();
    for (i, &d) in dims.iter().enumerate() {
        if d == 0 {
            return Err(Error::format((6 + 4 * i) as u64, "zero dimension"));
        }
    }
    let mut elements: u64 = 1;
    for (i, &d) in dims.iter().enumerate() {
        elements = elements
            .checked_mul(u64::from(d))
            .filter(|&n| n <= MAX_CLIP_ELEMENTS)
            .ok_or_else(|| Error::format((6 + 4 * i) as u64, "dimension overflow"))?;
    }
    let dtype = read_u32(bytes, 22);
    if dtype != DTYPE_F32 {
        return Err(Error::format(22, format!("unknown dtype tag {dtype}")));
    }
    let expected = CLIP_HEADER_LEN as u64 + 4 * elements;
    if (bytes.len() as u64) < expected {
        return Err(Error::format(
            bytes.len() as u64,
            format!("truncated payload: expected {expected} bytes"),
        ));
    }
    if (bytes.len() as u64) > expected {
        return Err(Error::format(expected, "trailing bytes after payload"));
    }
    let mut data = Vec::with_capacity(elements as usize);
    for (i, chunk) in bytes[CLIP_HEADER_LEN..].chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        if !(0.0..=1.0).contains(&v) {
            return Err(Error::format(
                (CLIP_HEADER_LEN + 4 * i) as u64,
                format!("value {v} is outside [0, 1]"),
            ));
        }
        data.push(v);
    }
    let shape = ClipShape::new(dims[0] as usize, dims[1] as usize, dims[2] as usize, dims[3] as usize);
    VideoClip::new(shape, data, Modality::Rgb, vec![id.to_string()])
}

pub fn write_clip(clip: &VideoClip, path: &Path) -> Result<()> {
    let bytes = encode_clip(clip)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads a clip file; the id is the file stem.
pub fn read_clip(path: &Path) -> Result<VideoClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("clip");
    decode_clip(&bytes, id)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            other => Err(Error::Config(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipRecord {
    pub id: String,
    /// Relative to the manifest's directory unless absolute.
    pub path: PathBuf,
    pub label: u8,
    pub domain: String,
    pub split: Split,
    pub seed: u64,
}

/// Records per domain and split; each count must be even.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl SplitCounts {
    fn iter(&self) -> impl Iterator<Item = (Split, usize)> {
        [(Split::Train, self.train), (Split::Val, self.val), (Split::Test, self.test)].into_iter()
    }
}

pub fn check_unique_ids(records: &[ClipRecord]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in records {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Manifest(format!("duplicate clip id `{}`", r.id)));
        }
    }
    Ok(())
}

/// Plans the records of a dataset without touching the filesystem.
pub fn plan_dataset(domains: &[DomainParams], counts: SplitCounts, seed: u64) -> Result<Vec<ClipRecord>> {
    if domains.is_empty() {
        return Err(Error::Config("at least one domain is required".into()));
    }
    for (split, n) in counts.iter() {
        if n % 2 != 0 {
            return Err(Error::Config(format!(
                "{split} count {n} is odd; labels must balance"
            )));
        }
    }
    let mut records = Vec::new();
    let mut index = 0u64;
    for domain in domains {
        domain.validate()?;
        for (split, n) in counts.iter() {
            for i in 0..n {
                let id = format!("{}-{split}-{i:05}", domain.name);
                records.push(ClipRecord {
                    path: PathBuf::from("clips").join(format!("{id}.fsvc")),
                    id,
                    label: (i % 2) as u8,
                    domain: domain.name.clone(),
                    split,
                    seed: mix_seed(seed, index),
                });
                index += 1;
            }
        }
    }
    check_unique_ids(&records)?;
    Ok(records)
}

/// Generates every clip, writes `clips/*.fsvc` and `manifest.jsonl` under
/// `out_dir`, and returns the records.
pub fn build_dataset(
    domains: &[DomainParams],
    counts: SplitCounts,
    seed: u64,
    shape: ClipShape,
    out_dir: &Path,
) -> Result<Vec<ClipRecord>> {
    let records = plan_dataset(domains, counts, seed)?;
    let clip_dir = out_dir.join("clips");
    fs::create_dir_all(&clip_dir).map_err(|e| Error::io(&clip_dir, e))?;
    for record in &records {
        let domain = domains
            .iter()
            .find(|d| d.name == record.domain)
            .expect("record domains come from the domain list");
        let generated = generate_clip(domain, shape, record.label, record.seed, &record.id)?;
        write_clip(&generated.clip, &out_dir.join(&record.path))?;
    }
    write_manifest(&records, &out_dir.join("manifest.jsonl"))?;
    Ok(records)
}

pub fn write_manifest(records: &[ClipRecord], path: &Path) -> Result<()> {
    check_unique_ids(records)?;
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.push(b'\n');
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ClipRecord>> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut records = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: ClipRecord = serde_json::from_str(&line)
            .map_err(|e| Error::Manifest(format!("{}:{}: {e}", path.display(), n + 1)))?;
        if record.label > 1 {
            return Err(Error::Label(format!("record `{}` has label {}", record.id, record.label)));
        }
        records.push(record);
    }
    check_unique_ids(&records)?;
    Ok(records)
}

/// Absolute location of a record's clip file.
pub fn resolve_clip_path(manifest: &Path, record: &ClipRecord) -> PathBuf {
    if record.path.is_absolute() {
        record.path.clone()
    } else {
        manifest.parent().unwrap_or_else(|| Path::new(".")).join(&record.path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn real_clips_have_no_region_and_are_deterministic() {
        let d = DomainParams::alpha();
        let a = generate_clip(&d, desk_shape(), 0, 42, "a").unwrap();
        let b = generate_clip(&d, desk_shape(), 0, 42, "a").unwrap();
        assert!(a.region.is_none());
        assert_eq!(a.clip, b.clip);
        let c = generate_clip(&d, desk_shape(), 0, 43, "a").unwrap();
        assert_ne!(a.clip, c.clip);
    }

    #[test]
    fn fake_differs_from_real_only_inside_the_region() {
        for domain in [DomainParams::alpha(), DomainParams::beta()] {
            let real = generate_clip(&domain, desk_shape(), 0, 5, "r").unwrap();
            let fake = generate_clip(&domain, desk_shape(), 1, 5, "f").unwrap();
            let region = fake.region.unwrap();
            let s = desk_shape();
            for t in 0..s.frames {
                for c in 0..3 {
                    for y in 0..s.height {
                        for x in 0..s.width {
                            if !region.contains(x, y) {
                                assert_eq!(real.clip.get(0, t, c, y, x), fake.clip.get(0, t, c, y, x));
                            }
                        }
                    }
                }
            }
            assert_ne!(real.clip.data(), fake.clip.data());
            let frac = region.area() as f64 / (s.width * s.height) as f64;
            assert!((frac - domain.region_fraction).abs() < 0.08, "{frac}");
        }
    }

    #[test]
    fn invalid_region_fraction_is_rejected() {
        let mut d = DomainParams::alpha();
        d.region_fraction = 0.6;
        assert!(generate_clip(&d, desk_shape(), 1, 0, "x").is_err());
        d.region_fraction = 0.0;
        assert!(d.validate().is_err());
    }

    #[test]
    fn clip_bytes_round_trip() {
        let g = generate_clip(&DomainParams::beta(), desk_shape(), 1, 9, "x").unwrap();
        let bytes = encode_clip(&g.clip).unwrap();
        assert_eq!(bytes.len(), CLIP_HEADER_LEN + 4 * desk_shape().len());
        assert_eq!(decode_clip(&bytes, "x").unwrap(), g.clip);
    }

    fn offset_of(err: Error) -> u64 {
        match err {
            Error::Format { offset, .. } => offset,
            other => panic!("expected a format error, got {other}"),
        }
    }

    #[test]
    fn malformed_clip_bytes() {
        let g = generate_clip(&DomainParams::alpha(), ClipShape::new(2, 3, 4, 4), 0, 1, "x").unwrap();
        let bytes = encode_clip(&g.clip).unwrap();

        let mut bad_magic = bytes.clone();
        bad_magic[0] = b'X';
        assert_eq!(offset_of(decode_clip(&bad_magic, "x").unwrap_err()), 0);

        let header_only = &bytes[..CLIP_HEADER_LEN];
        assert_eq!(offset_of(decode_clip(header_only, "x").unwrap_err()), CLIP_HEADER_LEN as u64);

        let short_header = &bytes[..10];
        assert_eq!(offset_of(decode_clip(short_header, "x").unwrap_err()), 10);

        let mut bad_version = bytes.clone();
        bad_version[4] = 9;
        assert_eq!(offset_of(decode_clip(&bad_version, "x").unwrap_err()), 4);

        let mut huge = bytes.clone();
        huge[14..18].copy_from_slice(&u32::MAX.to_le_bytes());
        huge[18..22].copy_from_slice(&u32::MAX.to_le_bytes());
        assert_eq!(offset_of(decode_clip(&huge, "x").unwrap_err()), 14);

        let mut bad_dtype = bytes.clone();
        bad_dtype[22] = 3;
        assert_eq!(offset_of(decode_clip(&bad_dtype, "x").unwrap_err()), 22);

        let mut trailing = bytes.clone();
        trailing.push(0);
        assert_eq!(offset_of(decode_clip(&trailing, "x").unwrap_err()), bytes.len() as u64);

        let mut out_of_range = bytes.clone();
        out_of_range[30..34].copy_from_slice(&2.0f32.to_le_bytes());
        assert_eq!(offset_of(decode_clip(&out_of_range, "x").unwrap_err()), 30);
    }

    #[test]
    fn planned_dataset_counts_and_balance() {
        let counts = SplitCounts {
            train: 100,
            val: 0,
            test: 50,
        };
        let records = plan_dataset(&[DomainParams::alpha(), DomainParams::beta()], counts, 7).unwrap();
        assert_eq!(records.len(), 300);
        for domain in ["alpha", "beta"] {
            assert_eq!(records.iter().filter(|r| r.domain == domain).count(), 150);
            for split in [Split::Train, Split::Test] {
                let in_split: Vec<_> = records.iter().filter(|r| r.domain == domain && r.split == split).collect();
                let fakes = in_split.iter().filter(|r| r.label == 1).count();
                assert_eq!(fakes * 2, in_split.len());
            }
        }
        let seeds: HashSet<u64> = records.iter().map(|r| r.seed).collect();
        assert_eq!(seeds.len(), records.len());
    }

    #[test]
    fn odd_counts_and_duplicate_domains_are_rejected() {
        let odd = SplitCounts { train: 3, val: 0, test: 0 };
        assert!(plan_dataset(&[DomainParams::alpha()], odd, 0).is_err());
        let even = SplitCounts { train: 2, val: 0, test: 0 };
        assert!(matches!(
            plan_dataset(&[DomainParams::alpha(), DomainParams::alpha()], even, 0),
            Err(Error::Manifest(_))
        ));
    }
}
