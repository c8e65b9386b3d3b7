//! Video clips, spatio-temporal patchification and tube masking.
//!
//! Clips are stored as `B x T x C x H x W` row-major `f32` arrays with values
//! in `[0, 1]`. A clip is cut into non-overlapping tubes of `t_p` frames by
//! `p x p` pixels; token `s` enumerates tubes time-major, then in raster
//! order, and each token flattens its block as `(dt, dy, dx, c)`.

use std::fmt;

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Modality {
    Rgb,
    Ldp,
    Lbp,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Rgb => "RGB",
            Modality::Ldp => "LDP",
            Modality::Lbp => "LBP",
        })
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rgb" => Ok(Modality::Rgb),
            "ldp" => Ok(Modality::Ldp),
            "lbp" => Ok(Modality::Lbp),
            other => Err(Error::Modality(format!("unknown modality `{other}`"))),
        }
    }
}

/// Shape of a single clip, without the batch axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipShape {
    pub frames: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
}

impl ClipShape {
    pub fn new(frames: usize, channels: usize, height: usize, width: usize) -> Self {
        Self {
            frames,
            channels,
            height,
            width,
        }
    }

    pub fn len(&self) -> usize {
        self.frames * self.channels * self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn frame_len(&self) -> usize {
        self.channels * self.height * self.width
    }
}

/// A batch of clips in one modality.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoClip {
    shape: ClipShape,
    data: Vec<f32>,
    modality: Modality,
    clip_ids: Vec<String>,
}

impl VideoClip {
    /// Builds a clip batch; `data.len()` must equal `clip_ids.len() * shape.len()`
    /// and every value must lie in `[0, 1]`.
    pub fn new(
        shape: ClipShape,
        data: Vec<f32>,
        modality: Modality,
        clip_ids: Vec<String>,
    ) -> Result<Self> {
        if clip_ids.is_empty() {
            return Err(Error::Geometry("a clip batch needs at least one clip".into()));
        }
        if shape.is_empty() {
            return Err(Error::Geometry(format!("empty clip shape {shape:?}")));
        }
        if data.len() != clip_ids.len() * shape.len() {
            return Err(Error::Geometry(format!(
                "{} values do not fill {} clips of shape {:?}",
                data.len(),
                clip_ids.len(),
                shape
            )));
        }
        if let Some(pos) = data.iter().position(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Geometry(format!(
                "value {} at index {pos} is outside [0, 1]",
                data[pos]
            )));
        }
        Ok(Self {
            shape,
            data,
            modality,
            clip_ids,
        })
    }

    pub fn zeros(shape: ClipShape, modality: Modality, clip_ids: Vec<String>) -> Result<Self> {
        let len = shape.len() * clip_ids.len();
        Self::new(shape, vec![0.0; len], modality, clip_ids)
    }

    /// Concatenates single- or multi-clip batches along the batch axis.
    pub fn stack(clips: &[&VideoClip]) -> Result<Self> {
        let first = clips
            .first()
            .ok_or_else(|| Error::Geometry("cannot stack zero clips".into()))?;
        let mut data = Vec::with_capacity(clips.iter().map(|c| c.data.len()).sum());
        let mut ids = Vec::new();
        for clip in clips {
            if clip.shape != first.shape || clip.modality != first.modality {
                return Err(Error::Geometry(
                    "stacked clips must share shape and modality".into(),
                ));
            }
            data.extend_from_slice(&clip.data);
            ids.extend(clip.clip_ids.iter().cloned());
        }
        Ok(Self {
            shape: first.shape,
            data,
            modality: first.modality,
            clip_ids: ids,
        })
    }

    pub fn shape(&self) -> ClipShape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.clip_ids.len()
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn clip_ids(&self) -> &[String] {
        &self.clip_ids
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    /// Values of clip `b` as a `T x C x H x W` slice.
    pub fn sample(&self, b: usize) -> &[f32] {
        let n = self.shape.len();
        &self.data[b * n..(b + 1) * n]
    }

    /// Extracts clip `b` as a batch of one.
    pub fn select(&self, b: usize) -> VideoClip {
        VideoClip {
            shape: self.shape,
            data: self.sample(b).to_vec(),
            modality: self.modality,
            clip_ids: vec![self.clip_ids[b].clone()],
        }
    }

    /// Index into the flat array.
    pub fn offset(&self, b: usize, t: usize, c: usize, y: usize, x: usize) -> usize {
        let s = self.shape;
        (((b * s.frames + t) * s.channels + c) * s.height + y) * s.width + x
    }

    pub fn get(&self, b: usize, t: usize, c: usize, y: usize, x: usize) -> f32 {
        self.data[self.offset(b, t, c, y, x)]
    }
}

/// Tube/patch layout over a fixed clip shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGeometry {
    pub clip: ClipShape,
    pub tube: usize,
    pub patch: usize,
}

impl PatchGeometry {
    pub fn new(clip: ClipShape, tube: usize, patch: usize) -> Result<Self> {
        if tube == 0 || patch == 0 {
            return Err(Error::Geometry("tube and patch sizes must be positive".into()));
        }
        if clip.is_empty() {
            return Err(Error::Geometry(format!("empty clip shape {clip:?}")));
        }
        if clip.frames % tube != 0 {
            return Err(Error::Geometry(format!(
                "T={} is not divisible by tube size {tube}",
                clip.frames
            )));
        }
        if clip.height % patch != 0 || clip.width % patch != 0 {
            return Err(Error::Geometry(format!(
                "H={} x W={} is not divisible by patch size {patch}",
                clip.height, clip.width
            )));
        }
        Ok(Self { clip, tube, patch })
    }

    pub fn tubes(&self) -> usize {
        self.clip.frames / self.tube
    }

    pub fn grid_height(&self) -> usize {
        self.clip.height / self.patch
    }

    pub fn grid_width(&self) -> usize {
        self.clip.width / self.patch
    }

    /// Patch positions per frame group, `(H/p) * (W/p)`.
    pub fn spatial_tokens(&self) -> usize {
        self.grid_height() * self.grid_width()
    }

    /// `S = (T/t_p) * (H/p) * (W/p)`.
    pub fn num_tokens(&self) -> usize {
        self.tubes() * self.spatial_tokens()
    }

    /// `D_tok = t_p * p * p * C`.
    pub fn token_dim(&self) -> usize {
        self.tube * self.patch * self.patch * self.clip.channels
    }

    /// Masked-token count under tube masking at `ratio` (half-up rounding).
    pub fn masked_count(&self, ratio: f64) -> usize {
        masked_spatial_count(self.spatial_tokens(), ratio) * self.tubes()
    }
}

/// `round(ratio * spatial)`, ties rounded up.
pub fn masked_spatial_count(spatial: usize, ratio: f64) -> usize {
    let count = (ratio * spatial as f64 + 0.5).floor() as usize;
    count.min(spatial)
}

/// Per-sample token sequences.
///
/// Pixel tokens have `dim == geometry.token_dim()`; latent tokens carry the
/// encoder width. `positions[b]` holds the original patch index of every
/// token of sample `b`, in order.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenBatch {
    batch: usize,
    seq_len: usize,
    dim: usize,
    data: Vec<f64>,
    geometry: PatchGeometry,
    positions: Vec<Vec<usize>>,
}

impl TokenBatch {
    pub fn new(
        data: Vec<f64>,
        batch: usize,
        seq_len: usize,
        dim: usize,
        geometry: PatchGeometry,
        positions: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if data.len() != batch * seq_len * dim {
            return Err(Error::Geometry(format!(
                "{} values do not fill {batch} x {seq_len} x {dim}",
                data.len()
            )));
        }
        if positions.len() != batch || positions.iter().any(|p| p.len() != seq_len) {
            return Err(Error::Geometry(
                "positions must list one index per token per sample".into(),
            ));
        }
        let s = geometry.num_tokens();
        if positions.iter().flatten().any(|&p| p >= s) {
            return Err(Error::Geometry(format!("token position out of range 0..{s}")));
        }
        Ok(Self {
            batch,
            seq_len,
            dim,
            data,
            geometry,
            positions,
        })
    }

    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn geometry(&self) -> PatchGeometry {
        self.geometry
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn positions(&self) -> &[Vec<usize>] {
        &self.positions
    }

    /// The `seq_len x dim` block of sample `b`.
    pub fn sample(&self, b: usize) -> &[f64] {
        let n = self.seq_len * self.dim;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn token(&self, b: usize, s: usize) -> &[f64] {
        let start = (b * self.seq_len + s) * self.dim;
        &self.data[start..start + self.dim]
    }

    /// True when this batch holds every token in original order.
    pub fn is_full(&self) -> bool {
        self.seq_len == self.geometry.num_tokens()
            && self
                .positions
                .iter()
                .all(|p| p.iter().enumerate().all(|(i, &s)| i == s))
    }
}

/// Cuts every clip of the batch into flattened tube tokens.
pub fn patchify(clip: &VideoClip, geometry: &PatchGeometry) -> Result<TokenBatch> {
    if clip.shape() != geometry.clip {
        return Err(Error::Geometry(format!(
            "clip shape {:?} does not match geometry {:?}",
            clip.shape(),
            geometry.clip
        )));
    }
    let g = *geometry;
    let (s, d) = (g.num_tokens(), g.token_dim());
    let (gh, gw) = (g.grid_height(), g.grid_width());
    let c = g.clip.channels;
    let batch = clip.batch();
    let mut data = vec![0.0f64; batch * s * d];
    for b in 0..batch {
        for token in 0..s {
            let it = token / (gh * gw);
            let ih = (token / gw) % gh;
            let iw = token % gw;
            let base = (b * s + token) * d;
            let mut k = 0;
            for dt in 0..g.tube {
                for dy in 0..g.patch {
                    for dx in 0..g.patch {
                        for ch in 0..c {
                            let t = it * g.tube + dt;
                            let y = ih * g.patch + dy;
                            let x = iw * g.patch + dx;
                            data[base + k] = f64::from(clip.get(b, t, ch, y, x));
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    let positions = vec![(0..s).collect(); batch];
    TokenBatch::new(data, batch, s, d, g, positions)
}

/// Reassembles a full pixel-token batch into clips.
pub fn unpatchify(
    tokens: &TokenBatch,
    modality: Modality,
    clip_ids: Vec<String>,
) -> Result<VideoClip> {
    let g = tokens.geometry();
    if tokens.dim() != g.token_dim() {
        return Err(Error::Geometry(format!(
            "token dim {} is not t_p*p*p*C = {}",
            tokens.dim(),
            g.token_dim()
        )));
    }
    if !tokens.is_full() {
        return Err(Error::Geometry(
            "unpatchify needs every token in original order".into(),
        ));
    }
    if clip_ids.len() != tokens.batch() {
        return Err(Error::Geometry(format!(
            "{} clip ids for a batch of {}",
            clip_ids.len(),
            tokens.batch()
        )));
    }
    let shape = g.clip;
    let (gh, gw) = (g.grid_height(), g.grid_width());
    let c = shape.channels;
    let mut data = vec![0.0f32; tokens.batch() * shape.len()];
    for b in 0..tokens.batch() {
        for token in 0..g.num_tokens() {
            let it = token / (gh * gw);
            let ih = (token / gw) % gh;
            let iw = token % gw;
            let values = tokens.token(b, token);
            let mut k = 0;
            for dt in 0..g.tube {
                for dy in 0..g.patch {
                    for dx in 0..g.patch {
                        for ch in 0..c {
                            let t = it * g.tube + dt;
                            let y = ih * g.patch + dy;
                            let x = iw * g.patch + dx;
                            let off = (((b * shape.frames + t) * c + ch) * shape.height + y)
                                * shape.width
                                + x;
                            data[off] = values[k] as f32;
                            k += 1;
                        }
                    }
                }
            }
        }
    }
    VideoClip::new(shape, data, modality, clip_ids)
}

/// The masking operator: per-sample masked and visible token indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaskSpec {
    masked: Vec<Vec<usize>>,
    visible: Vec<Vec<usize>>,
    num_tokens: usize,
    ratio_bits: u64,
    seed: u64,
}

impl MaskSpec {
    /// Builds a mask from explicit masked index sets.
    pub fn from_masked(masked: Vec<Vec<usize>>, num_tokens: usize, ratio: f64, seed: u64) -> Result<Self> {
        let mut sorted = Vec::with_capacity(masked.len());
        let mut visible = Vec::with_capacity(masked.len());
        for mut m in masked {
            m.sort_unstable();
            m.dedup();
            if let Some(&bad) = m.iter().find(|&&i| i >= num_tokens) {
                return Err(Error::Mask(format!(
                    "masked index {bad} is outside 0..{num_tokens}"
                )));
            }
            let mut is_masked = vec![false; num_tokens];
            for &i in &m {
                is_masked[i] = true;
            }
            visible.push((0..num_tokens).filter(|&i| !is_masked[i]).collect());
            sorted.push(m);
        }
        Ok(Self {
            masked: sorted,
            visible,
            num_tokens,
            ratio_bits: ratio.to_bits(),
            seed,
        })
    }

    /// A mask that hides nothing.
    pub fn empty(batch: usize, num_tokens: usize) -> Self {
        Self {
            masked: vec![Vec::new(); batch],
            visible: vec![(0..num_tokens).collect(); batch],
            num_tokens,
            ratio_bits: 0f64.to_bits(),
            seed: 0,
        }
    }

    pub fn masked(&self) -> &[Vec<usize>] {
        &self.masked
    }

    pub fn visible(&self) -> &[Vec<usize>] {
        &self.visible
    }

    pub fn batch(&self) -> usize {
        self.masked.len()
    }

    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    pub fn ratio(&self) -> f64 {
        f64::from_bits(self.ratio_bits)
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Restricts the mask to a single sample.
    pub fn select(&self, b: usize) -> MaskSpec {
        MaskSpec {
            masked: vec![self.masked[b].clone()],
            visible: vec![self.visible[b].clone()],
            num_tokens: self.num_tokens,
            ratio_bits: self.ratio_bits,
            seed: self.seed,
        }
    }

    /// Joins single-sample masks into one batch mask.
    pub fn concat(parts: &[MaskSpec]) -> Result<MaskSpec> {
        let first = parts
            .first()
            .ok_or_else(|| Error::Mask("cannot concatenate zero masks".into()))?;
        let mut out = MaskSpec {
            masked: Vec::new(),
            visible: Vec::new(),
            num_tokens: first.num_tokens,
            ratio_bits: first.ratio_bits,
            seed: first.seed,
        };
        for p in parts {
            if p.num_tokens != first.num_tokens {
                return Err(Error::Mask("masks disagree on token count".into()));
            }
            out.masked.extend(p.masked.iter().cloned());
            out.visible.extend(p.visible.iter().cloned());
        }
        Ok(out)
    }
}

/// SplitMix64 finaliser; mixes a run seed and a sample id into one stream seed.
pub fn mix_seed(seed: u64, id: u64) -> u64 {
    let mut z = seed ^ id.wrapping_add(0x9E37_79B9_7F4A_7C15).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples one tube mask per entry of `sample_ids`.
///
/// Each sample draws `round(ratio * S_spatial)` spatial positions without
/// replacement from a generator seeded by `(seed, sample id)` and hides those
/// positions in every temporal tube.
pub fn sample_tube_mask(
    geometry: &PatchGeometry,
    ratio: f64,
    seed: u64,
    sample_ids: &[u64],
) -> Result<MaskSpec> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::Parameter(format!("mask ratio {ratio} is outside [0, 1]")));
    }
    let spatial = geometry.spatial_tokens();
    let count = masked_spatial_count(spatial, ratio);
    let masked = sample_ids
        .iter()
        .map(|&id| {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, id));
            let picks = index::sample(&mut rng, spatial, count);
            let mut tokens: Vec<usize> = (0..geometry.tubes())
                .flat_map(|tube| picks.iter().map(move |p| tube * spatial + p))
                .collect();
            tokens.sort_unstable();
            tokens
        })
        .collect();
    MaskSpec::from_masked(masked, geometry.num_tokens(), ratio, seed)
}

/// Keeps only the visible tokens, in ascending original order.
pub fn apply_mask(tokens: &TokenBatch, mask: &MaskSpec) -> Result<TokenBatch> {
    if mask.batch() != tokens.batch() {
        return Err(Error::Mask(format!(
            "mask covers {} samples, tokens have {}",
            mask.batch(),
            tokens.batch()
        )));
    }
    let full = tokens.seq_len();
    if mask.num_tokens() != full {
        return Err(Error::Mask(format!(
            "mask is over {} tokens, batch has {full}",
            mask.num_tokens()
        )));
    }
    let kept = mask.visible()[0].len();
    if mask.visible().iter().any(|v| v.len() != kept) {
        return Err(Error::Mask(
            "every sample must keep the same number of tokens".into(),
        ));
    }
    let d = tokens.dim();
    let mut data = Vec::with_capacity(tokens.batch() * kept * d);
    let mut positions = Vec::with_capacity(tokens.batch());
    for (b, visible) in mask.visible().iter().enumerate() {
        let mut pos = Vec::with_capacity(kept);
        for &s in visible {
            if s >= full {
                return Err(Error::Mask(format!("visible index {s} is outside 0..{full}")));
            }
            data.extend_from_slice(tokens.token(b, s));
            pos.push(tokens.positions()[b][s]);
        }
        positions.push(pos);
    }
    TokenBatch::new(data, tokens.batch(), kept, d, tokens.geometry(), positions)
}
