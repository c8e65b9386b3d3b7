//! Shared transformer encoder, shallow reconstruction decoder, element-wise
//! fusion and the real/fake classifier.
//!
//! Both branches run through the same [`EncoderParams`]: the full primary
//! RGB clip and the tube-masked auxiliary clip. Their token features are
//! mean-pooled to `B x D`, multiplied element-wise and mapped to two logits
//! (index 1 = fake).

use std::collections::HashMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::autograd::{Matrix, ParamId, Tape, Var};
use crate::error::{Error, Result};
use crate::objectives::{check_label, LossReport, RecNormalization};
use crate::texture::{descriptor_video, DescriptorKind};
use crate::video::{apply_mask, mix_seed, patchify, MaskSpec, Modality, PatchGeometry, TokenBatch, VideoClip};

/// Encoder inputs are mapped from `[0, 1]` to `(x - INPUT_CENTER) / INPUT_SCALE`
/// before the token projection; reconstruction targets stay in `[0, 1]`.
pub const INPUT_CENTER: f64 = 0.5;
pub const INPUT_SCALE: f64 = 0.25;

/// `(masked input modality, reconstruction target modality)`, written
/// `INPUT-TARGET`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModalityPair {
    input: Modality,
    target: Modality,
}

impl ModalityPair {
    pub const RGB_LDP: ModalityPair = ModalityPair::raw(Modality::Rgb, Modality::Ldp);
    pub const LDP_RGB: ModalityPair = ModalityPair::raw(Modality::Ldp, Modality::Rgb);
    pub const LDP_LDP: ModalityPair = ModalityPair::raw(Modality::Ldp, Modality::Ldp);
    pub const LBP_RGB: ModalityPair = ModalityPair::raw(Modality::Lbp, Modality::Rgb);
    pub const LBP_LBP: ModalityPair = ModalityPair::raw(Modality::Lbp, Modality::Lbp);

    /// Every supported pair, in ablation order.
    pub const ALL: [ModalityPair; 5] = [
        Self::RGB_LDP,
        Self::LDP_RGB,
        Self::LDP_LDP,
        Self::LBP_RGB,
        Self::LBP_LBP,
    ];

    const fn raw(input: Modality, target: Modality) -> Self {
        Self { input, target }
    }

    pub fn new(input: Modality, target: Modality) -> Result<Self> {
        let pair = Self::raw(input, target);
        if Self::ALL.contains(&pair) {
            Ok(pair)
        } else {
            Err(Error::Modality(format!("unsupported modality pair {pair}")))
        }
    }

    pub fn input(&self) -> Modality {
        self.input
    }

    pub fn target(&self) -> Modality {
        self.target
    }
}

impl fmt::Display for ModalityPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}", self.input, self.target)
    }
}

impl std::str::FromStr for ModalityPair {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (a, b) = s
            .trim()
            .split_once('-')
            .ok_or_else(|| Error::Modality(format!("modality pair `{s}` has no hyphen")))?;
        ModalityPair::new(a.parse()?, b.parse()?)
    }
}

impl Serialize for ModalityPair {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ModalityPair {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Converts an RGB clip to `modality`, computing descriptors when needed.
pub fn clip_in_modality(rgb: &VideoClip, modality: Modality) -> Result<VideoClip> {
    if rgb.modality() != Modality::Rgb {
        return Err(Error::Modality(format!("expected an RGB clip, got {}", rgb.modality())));
    }
    match modality {
        Modality::Rgb => Ok(rgb.clone()),
        Modality::Ldp => descriptor_video(rgb, DescriptorKind::Ldp),
        Modality::Lbp => descriptor_video(rgb, DescriptorKind::Lbp),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub geometry: PatchGeometry,
    pub enc_depth: usize,
    pub enc_width: usize,
    pub enc_heads: usize,
    pub dec_depth: usize,
    pub dec_width: usize,
    pub dec_heads: usize,
    pub mlp_ratio: usize,
    pub drop_path: f64,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.enc_depth == 0 || self.enc_width == 0 || self.dec_width == 0 || self.mlp_ratio == 0 {
            return Err(Error::Config("encoder depth and all widths must be positive".into()));
        }
        if self.enc_heads == 0 || self.enc_width % self.enc_heads != 0 {
            return Err(Error::Config(format!(
                "encoder width {} is not divisible by {} heads",
                self.enc_width, self.enc_heads
            )));
        }
        if self.dec_heads == 0 || self.dec_width % self.dec_heads != 0 {
            return Err(Error::Config(format!(
                "decoder width {} is not divisible by {} heads",
                self.dec_width, self.dec_heads
            )));
        }
        if 2 * self.dec_depth > self.enc_depth {
            return Err(Error::Config(format!(
                "decoder depth {} exceeds half the encoder depth {}",
                self.dec_depth, self.enc_depth
            )));
        }
        if !(0.0..1.0).contains(&self.drop_path) {
            return Err(Error::Config(format!("drop path {} is outside [0, 1)", self.drop_path)));
        }
        Ok(())
    }
}

/// Named parameter arrays.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    names: Vec<String>,
    values: Vec<Matrix>,
    index: HashMap<String, ParamId>,
}

impl ParamStore {
    fn add(&mut self, name: String, value: Matrix) -> ParamId {
        let id = ParamId(self.values.len());
        self.index.insert(name.clone(), id);
        self.names.push(name);
        self.values.push(value);
        id
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Matrix {
        &mut self.values[id.0]
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &str, &Matrix)> {
        self.names
            .iter()
            .zip(&self.values)
            .enumerate()
            .map(|(i, (n, v))| (ParamId(i), n.as_str(), v))
    }

    /// Total scalar count.
    pub fn numel(&self) -> usize {
        self.values.iter().map(|m| m.data().len()).sum()
    }
}

struct Init {
    rng: ChaCha8Rng,
}

impl Init {
    fn xavier(&mut self, fan_in: usize, fan_out: usize) -> Matrix {
        let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let dist = Uniform::new_inclusive(-a, a).expect("finite bound");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut self.rng)).collect();
        Matrix::from_vec(fan_in, fan_out, data)
    }

    fn normal(&mut self, rows: usize, cols: usize, std: f64) -> Matrix {
        let dist = Normal::new(0.0, std).expect("positive std");
        let data = (0..rows * cols).map(|_| dist.sample(&mut self.rng)).collect();
        Matrix::from_vec(rows, cols, data)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    fn new(store: &mut ParamStore, init: &mut Init, name: &str, fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: store.add(format!("{name}.weight"), init.xavier(fan_in, fan_out)),
            bias: store.add(format!("{name}.bias"), Matrix::zeros(1, fan_out)),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let w = tape.param(self.weight, store.get(self.weight));
        let b = tape.param(self.bias, store.get(self.bias));
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gamma: ParamId,
    pub beta: ParamId,
}

impl Norm {
    fn new(store: &mut ParamStore, name: &str, width: usize) -> Self {
        Self {
            gamma: store.add(format!("{name}.gamma"), Matrix::filled(1, width, 1.0)),
            beta: store.add(format!("{name}.beta"), Matrix::zeros(1, width)),
        }
    }

    fn forward(&self, tape: &mut Tape, store: &ParamStore, x: Var) -> Var {
        let g = tape.param(self.gamma, store.get(self.gamma));
        let b = tape.param(self.beta, store.get(self.beta));
        tape.layer_norm(x, g, b)
    }
}

/// Pre-norm transformer block.
#[derive(Debug, Clone, Copy)]
pub struct Block {
    pub norm1: Norm,
    pub qkv: Linear,
    pub proj: Linear,
    pub norm2: Norm,
    pub fc1: Linear,
    pub fc2: Linear,
}

impl Block {
    fn new(store: &mut ParamStore, init: &mut Init, name: &str, width: usize, mlp_ratio: usize) -> Self {
        Self {
            norm1: Norm::new(store, &format!("{name}.norm1"), width),
            qkv: Linear::new(store, init, &format!("{name}.qkv"), width, 3 * width),
            proj: Linear::new(store, init, &format!("{name}.proj"), width, width),
            norm2: Norm::new(store, &format!("{name}.norm2"), width),
            fc1: Linear::new(store, init, &format!("{name}.fc1"), width, mlp_ratio * width),
            fc2: Linear::new(store, init, &format!("{name}.fc2"), mlp_ratio * width, width),
        }
    }

    fn attention(&self, tape: &mut Tape, store: &ParamStore, x: Var, heads: usize) -> Var {
        let width = tape.value(x).cols();
        let head_dim = width / heads;
        let qkv = self.qkv.forward(tape, store, x);
        let scale = 1.0 / (head_dim as f64).sqrt();
        let outs: Vec<Var> = (0..heads)
            .map(|h| {
                let q = tape.slice_cols(qkv, h * head_dim, head_dim);
                let k = tape.slice_cols(qkv, width + h * head_dim, head_dim);
                let v = tape.slice_cols(qkv, 2 * width + h * head_dim, head_dim);
                let scores = tape.matmul_t(q, k);
                let scores = tape.scale(scores, scale);
                let weights = tape.softmax_rows(scores);
                tape.matmul(weights, v)
            })
            .collect();
        let merged = if outs.len() == 1 { outs[0] } else { tape.concat_cols(&outs) };
        self.proj.forward(tape, store, merged)
    }

    fn forward(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: Var,
        heads: usize,
        drop: &mut DropPath<'_>,
    ) -> Var {
        let h = self.norm1.forward(tape, store, x);
        let a = self.attention(tape, store, h, heads);
        let x = drop.residual(tape, x, a);
        let h = self.norm2.forward(tape, store, x);
        let m = self.fc1.forward(tape, store, h);
        let m = tape.gelu(m);
        let m = self.fc2.forward(tape, store, m);
        drop.residual(tape, x, m)
    }
}

/// Stochastic depth on residual branches; inactive in evaluation.
pub struct DropPath<'a> {
    rate: f64,
    rng: Option<&'a mut ChaCha8Rng>,
}

impl<'a> DropPath<'a> {
    pub fn eval() -> Self {
        Self { rate: 0.0, rng: None }
    }

    pub fn train(rate: f64, rng: &'a mut ChaCha8Rng) -> Self {
        Self { rate, rng: Some(rng) }
    }

    fn residual(&mut self, tape: &mut Tape, x: Var, branch: Var) -> Var {
        match self.rng.as_deref_mut() {
            Some(rng) if self.rate > 0.0 => {
                if rng.random::<f64>() < self.rate {
                    x
                } else {
                    let scaled = tape.scale(branch, 1.0 / (1.0 - self.rate));
                    tape.add(x, scaled)
                }
            }
            _ => tape.add(x, branch),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub drop_path: f64,
    pub embed: Linear,
    pub pos_embed: ParamId,
    pub blocks: Vec<Block>,
    pub norm: Norm,
}

#[derive(Debug, Clone)]
pub struct DecoderParams {
    pub depth: usize,
    pub width: usize,
    pub heads: usize,
    pub input: Linear,
    pub mask_token: ParamId,
    pub pos_embed: ParamId,
    pub blocks: Vec<Block>,
    pub norm: Norm,
    pub head: Linear,
}

/// Fused `B x D` feature fed to the classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedFeature(pub Matrix);

/// Outputs of one full forward pass over a batch.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub logits: Matrix,
    pub predictions: TokenBatch,
    pub targets: TokenBatch,
}

/// Token matrices of one clip, ready for a training or evaluation pass.
#[derive(Debug, Clone)]
pub struct SampleTokens {
    /// Full RGB tokens for the primary branch, `S x D_tok`.
    pub primary: Matrix,
    /// Full tokens of the auxiliary input modality, `S x D_tok`.
    pub aux_input: Matrix,
    /// Full tokens of the reconstruction target, `S x D_tok`.
    pub target: Matrix,
    pub label: u8,
}

struct SampleVars {
    logits: Var,
    l_cls: Var,
    l_rec: Option<Var>,
}

/// Parameter gradients aligned with [`ParamStore`] ids.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub grads: Vec<Matrix>,
}

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Self {
            grads: store.values.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
        }
    }

    pub fn get(&self, id: ParamId) -> &Matrix {
        &self.grads[id.0]
    }
}

#[derive(Debug, Clone)]
pub struct FusionModel {
    config: ModelConfig,
    store: ParamStore,
    encoder: EncoderParams,
    decoder: DecoderParams,
    classifier: Linear,
}

impl FusionModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::default();
        let mut init = Init {
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        let g = config.geometry;
        let (s, d_tok) = (g.num_tokens(), g.token_dim());
        let (d, dd) = (config.enc_width, config.dec_width);

        let encoder = EncoderParams {
            depth: config.enc_depth,
            width: d,
            heads: config.enc_heads,
            drop_path: config.drop_path,
            embed: Linear::new(&mut store, &mut init, "encoder.embed", d_tok, d),
            pos_embed: store.add("encoder.pos_embed".into(), init.normal(s, d, 0.02)),
            blocks: (0..config.enc_depth)
                .map(|i| Block::new(&mut store, &mut init, &format!("encoder.blocks.{i}"), d, config.mlp_ratio))
                .collect(),
            norm: Norm::new(&mut store, "encoder.norm", d),
        };
        let decoder = DecoderParams {
            depth: config.dec_depth,
            width: dd,
            heads: config.dec_heads,
            input: Linear::new(&mut store, &mut init, "decoder.input", d, dd),
            mask_token: store.add("decoder.mask_token".into(), init.normal(1, dd, 0.02)),
            pos_embed: store.add("decoder.pos_embed".into(), init.normal(s, dd, 0.02)),
            blocks: (0..config.dec_depth)
                .map(|i| Block::new(&mut store, &mut init, &format!("decoder.blocks.{i}"), dd, config.mlp_ratio))
                .collect(),
            norm: Norm::new(&mut store, "decoder.norm", dd),
            head: Linear::new(&mut store, &mut init, "decoder.head", dd, d_tok),
        };
        let classifier = Linear::new(&mut store, &mut init, "classifier", d, 2);
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
            classifier,
        })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn geometry(&self) -> &PatchGeometry {
        &self.config.geometry
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn encoder(&self) -> &EncoderParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &DecoderParams {
        &self.decoder
    }

    pub fn classifier(&self) -> &Linear {
        &self.classifier
    }

    /// Ids of every parameter that belongs to the reconstruction decoder.
    pub fn decoder_param_ids(&self) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, name, _)| name.starts_with("decoder."))
            .map(|(id, _, _)| id)
            .collect()
    }

    pub fn encoder_param_ids(&self) -> Vec<ParamId> {
        self.store
            .iter()
            .filter(|(_, name, _)| name.starts_with("encoder."))
            .map(|(id, _, _)| id)
            .collect()
    }

    fn encode_var(&self, tape: &mut Tape, tokens: Matrix, positions: &[usize], drop: &mut DropPath<'_>) -> Result<Var> {
        if positions.is_empty() {
            return Err(Error::EmptySequence("the encoder needs at least one token".into()));
        }
        let enc = &self.encoder;
        let mut tokens = tokens;
        tokens
            .data_mut()
            .iter_mut()
            .for_each(|v| *v = (*v - INPUT_CENTER) / INPUT_SCALE);
        let x = tape.input(tokens);
        let x = enc.embed.forward(tape, &self.store, x);
        let pos = tape.param(enc.pos_embed, self.store.get(enc.pos_embed));
        let pos = tape.gather_rows(pos, positions);
        let mut x = tape.add(x, pos);
        for block in &enc.blocks {
            x = block.forward(tape, &self.store, x, enc.heads, drop);
        }
        Ok(enc.norm.forward(tape, &self.store, x))
    }

    fn decode_var(&self, tape: &mut Tape, latents: Var, mask_visible: &[usize], num_tokens: usize) -> Var {
        let dec = &self.decoder;
        let y = dec.input.forward(tape, &self.store, latents);
        let kept = mask_visible.len();
        let mut index = vec![kept; num_tokens];
        for (rank, &s) in mask_visible.iter().enumerate() {
            index[s] = rank;
        }
        let mask_token = tape.param(dec.mask_token, self.store.get(dec.mask_token));
        let all = tape.concat_rows(&[y, mask_token]);
        let full = tape.gather_rows(all, &index);
        let pos = tape.param(dec.pos_embed, self.store.get(dec.pos_embed));
        let mut x = tape.add(full, pos);
        let mut no_drop = DropPath::eval();
        for block in &dec.blocks {
            x = block.forward(tape, &self.store, x, dec.heads, &mut no_drop);
        }
        let x = dec.norm.forward(tape, &self.store, x);
        dec.head.forward(tape, &self.store, x)
    }

    fn classify_var(&self, tape: &mut Tape, z: Var) -> Var {
        self.classifier.forward(tape, &self.store, z)
    }

    fn gather(tokens: &Matrix, rows: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(rows.len() * tokens.cols());
        for &r in rows {
            data.extend_from_slice(tokens.row(r));
        }
        Matrix::from_vec(rows.len(), tokens.cols(), data)
    }

    fn sample_forward(
        &self,
        tape: &mut Tape,
        sample: &SampleTokens,
        masked: &[usize],
        visible: &[usize],
        normalization: RecNormalization,
        drop: &mut DropPath<'_>,
    ) -> Result<SampleVars> {
        let s = self.config.geometry.num_tokens();
        let d_tok = self.config.geometry.token_dim();
        for m in [&sample.primary, &sample.aux_input, &sample.target] {
            if m.shape() != (s, d_tok) {
                return Err(Error::Geometry(format!(
                    "sample tokens are {:?}, model expects {s} x {d_tok}",
                    m.shape()
                )));
            }
        }
        let aux_tokens = Self::gather(&sample.aux_input, visible);
        let aux = self.encode_var(tape, aux_tokens, visible, drop)?;
        let all: Vec<usize> = (0..s).collect();
        let primary = self.encode_var(tape, sample.primary.clone(), &all, drop)?;
        let aux_pool = tape.mean_rows(aux);
        let primary_pool = tape.mean_rows(primary);
        let z = tape.mul(aux_pool, primary_pool);
        let logits = self.classify_var(tape, z);
        let predictions = self.decode_var(tape, aux, visible, s);
        let l_cls = tape.cross_entropy(logits, check_label(sample.label)?);
        let l_rec = if masked.is_empty() {
            None
        } else {
            let norm = normalization.denominator(masked.len(), d_tok);
            Some(tape.masked_squared_error(predictions, sample.target.clone(), masked, norm))
        };
        Ok(SampleVars {
            logits,
            l_cls,
            l_rec,
        })
    }

    /// Joint loss and summed parameter gradients for one batch.
    ///
    /// `drop_seed` seeds per-sample drop-path draws; pass `None` to disable
    /// stochastic depth.
    pub fn loss_and_grads(
        &self,
        samples: &[SampleTokens],
        mask: &MaskSpec,
        lambda: f64,
        normalization: RecNormalization,
        drop_seed: Option<u64>,
    ) -> Result<(LossReport, Gradients)> {
        self.check_batch(samples, mask)?;
        if !(0.0..=1.0).contains(&lambda) {
            return Err(Error::Parameter(format!("lambda {lambda} is outside [0, 1]")));
        }
        let batch = samples.len() as f64;
        let mut total = Gradients::zeros_like(&self.store);
        let (mut l_cls, mut l_rec) = (0.0, 0.0);
        for (b, sample) in samples.iter().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(drop_seed.unwrap_or(0), b as u64));
            let mut drop = match drop_seed {
                Some(_) => DropPath::train(self.config.drop_path, &mut rng),
                None => DropPath::eval(),
            };
            let mut tape = Tape::new();
            let vars = self.sample_forward(
                &mut tape,
                sample,
                &mask.masked()[b],
                &mask.visible()[b],
                normalization,
                &mut drop,
            )?;
            let rec = vars.l_rec.ok_or_else(|| {
                Error::DegenerateMask(format!("sample {b} has no masked patches"))
            })?;
            l_cls += tape.scalar(vars.l_cls);
            l_rec += tape.scalar(rec);
            let cls_term = tape.scale(vars.l_cls, lambda / batch);
            let rec_term = tape.scale(rec, (1.0 - lambda) / batch);
            let loss = tape.add(cls_term, rec_term);
            for (id, g) in tape.backward(loss).iter() {
                total.grads[id.0].add_assign(g);
            }
        }
        let report = LossReport::new(l_cls / batch, l_rec / batch, lambda)?;
        Ok((report, total))
    }

    /// Joint loss without gradients, drop path disabled.
    pub fn loss(
        &self,
        samples: &[SampleTokens],
        mask: &MaskSpec,
        lambda: f64,
        normalization: RecNormalization,
    ) -> Result<LossReport> {
        self.check_batch(samples, mask)?;
        let batch = samples.len() as f64;
        let (mut l_cls, mut l_rec) = (0.0, 0.0);
        for (b, sample) in samples.iter().enumerate() {
            let mut tape = Tape::new();
            let vars = self.sample_forward(
                &mut tape,
                sample,
                &mask.masked()[b],
                &mask.visible()[b],
                normalization,
                &mut DropPath::eval(),
            )?;
            let rec = vars.l_rec.ok_or_else(|| {
                Error::DegenerateMask(format!("sample {b} has no masked patches"))
            })?;
            l_cls += tape.scalar(vars.l_cls);
            l_rec += tape.scalar(rec);
        }
        LossReport::new(l_cls / batch, l_rec / batch, lambda)
    }

    /// Evaluation-mode logits (`B x 2`) for prepared samples.
    pub fn predict(&self, samples: &[SampleTokens], mask: &MaskSpec) -> Result<Matrix> {
        self.check_batch(samples, mask)?;
        let mut data = Vec::with_capacity(2 * samples.len());
        for (b, sample) in samples.iter().enumerate() {
            let mut tape = Tape::new();
            let vars = self.sample_forward(
                &mut tape,
                sample,
                &mask.masked()[b],
                &mask.visible()[b],
                RecNormalization::PerElement,
                &mut DropPath::eval(),
            )?;
            data.extend_from_slice(tape.value(vars.logits).data());
        }
        Ok(Matrix::from_vec(samples.len(), 2, data))
    }

    fn check_batch(&self, samples: &[SampleTokens], mask: &MaskSpec) -> Result<()> {
        if samples.is_empty() {
            return Err(Error::Geometry("empty batch".into()));
        }
        if mask.batch() != samples.len() || mask.num_tokens() != self.config.geometry.num_tokens() {
            return Err(Error::Mask(format!(
                "mask covers {} samples over {} tokens; batch has {} samples over {} tokens",
                mask.batch(),
                mask.num_tokens(),
                samples.len(),
                self.config.geometry.num_tokens()
            )));
        }
        Ok(())
    }

    /// Encodes a token batch in evaluation mode; positions select the
    /// position embeddings.
    pub fn encode(&self, tokens: &TokenBatch) -> Result<TokenBatch> {
        if tokens.geometry() != self.config.geometry || tokens.dim() != self.config.geometry.token_dim() {
            return Err(Error::Geometry("token batch does not match the model geometry".into()));
        }
        let d = self.encoder.width;
        let mut data = Vec::with_capacity(tokens.batch() * tokens.seq_len() * d);
        for b in 0..tokens.batch() {
            let mut tape = Tape::new();
            let m = Matrix::from_vec(tokens.seq_len(), tokens.dim(), tokens.sample(b).to_vec());
            let out = self.encode_var(&mut tape, m, &tokens.positions()[b], &mut DropPath::eval())?;
            data.extend_from_slice(tape.value(out).data());
        }
        TokenBatch::new(
            data,
            tokens.batch(),
            tokens.seq_len(),
            d,
            tokens.geometry(),
            tokens.positions().to_vec(),
        )
    }

    /// Predicts every patch from visible latents plus mask tokens.
    pub fn decode(&self, latents: &TokenBatch, mask: &MaskSpec) -> Result<TokenBatch> {
        let s = self.config.geometry.num_tokens();
        if latents.dim() != self.encoder.width || mask.num_tokens() != s || mask.batch() != latents.batch() {
            return Err(Error::Geometry("latents or mask do not match the model".into()));
        }
        let d_tok = self.config.geometry.token_dim();
        let mut data = Vec::with_capacity(latents.batch() * s * d_tok);
        for b in 0..latents.batch() {
            if latents.positions()[b] != mask.visible()[b] {
                return Err(Error::Geometry(format!(
                    "latent positions of sample {b} are not the mask's visible set"
                )));
            }
            let mut tape = Tape::new();
            let m = Matrix::from_vec(latents.seq_len(), latents.dim(), latents.sample(b).to_vec());
            let x = tape.input(m);
            let out = self.decode_var(&mut tape, x, &mask.visible()[b], s);
            data.extend_from_slice(tape.value(out).data());
        }
        TokenBatch::new(
            data,
            latents.batch(),
            s,
            d_tok,
            self.config.geometry,
            vec![(0..s).collect(); latents.batch()],
        )
    }

    pub fn classify(&self, z: &FusedFeature) -> Result<Matrix> {
        if z.0.cols() != self.encoder.width {
            return Err(Error::Geometry(format!(
                "fused width {} does not match encoder width {}",
                z.0.cols(),
                self.encoder.width
            )));
        }
        let w = self.store.get(self.classifier.weight);
        let bias = self.store.get(self.classifier.bias);
        let mut out = crate::autograd::matmul(&z.0, w);
        for r in 0..out.rows() {
            for c in 0..2 {
                out.data_mut()[r * 2 + c] += bias.data()[c];
            }
        }
        Ok(out)
    }

    /// Builds the token matrices of clip `b` for `pair`.
    pub fn prepare_sample(
        &self,
        rgb: &VideoClip,
        pair: ModalityPair,
        b: usize,
        label: u8,
    ) -> Result<SampleTokens> {
        sample_tokens(rgb, b, pair, &self.config.geometry, label)
    }

    /// Evaluation-mode logits (`1 x 2`) of one sample and, when the mask
    /// hides at least one patch, its reconstruction loss.
    pub fn eval_sample(
        &self,
        sample: &SampleTokens,
        mask: &MaskSpec,
        normalization: RecNormalization,
    ) -> Result<(Matrix, Option<f64>)> {
        self.check_batch(std::slice::from_ref(sample), mask)?;
        let mut tape = Tape::new();
        let vars = self.sample_forward(
            &mut tape,
            sample,
            &mask.masked()[0],
            &mask.visible()[0],
            normalization,
            &mut DropPath::eval(),
        )?;
        let l_rec = vars.l_rec.map(|v| tape.scalar(v));
        Ok((tape.value(vars.logits).clone(), l_rec))
    }

    /// Full evaluation-mode pass over an RGB batch: logits, decoder
    /// predictions and reconstruction targets.
    pub fn forward_train(&self, rgb: &VideoClip, pair: ModalityPair, mask: &MaskSpec) -> Result<ForwardOutput> {
        if rgb.modality() != Modality::Rgb {
            return Err(Error::Modality(format!("primary input must be RGB, got {}", rgb.modality())));
        }
        if mask.batch() != rgb.batch() {
            return Err(Error::Mask("mask batch does not match the clip batch".into()));
        }
        let g = self.config.geometry;
        let input_clip = clip_in_modality(rgb, pair.input())?;
        let target_clip = clip_in_modality(rgb, pair.target())?;
        let aux = self.encode(&apply_mask(&patchify(&input_clip, &g)?, mask)?)?;
        let primary = self.encode(&patchify(rgb, &g)?)?;
        let z = fuse(&pool(&aux)?, &pool(&primary)?)?;
        let logits = self.classify(&z)?;
        let predictions = self.decode(&aux, mask)?;
        let targets = patchify(&target_clip, &g)?;
        Ok(ForwardOutput {
            logits,
            predictions,
            targets,
        })
    }
}

/// Token matrices of clip `b` of an RGB batch for `pair`.
pub fn sample_tokens(
    rgb: &VideoClip,
    b: usize,
    pair: ModalityPair,
    geometry: &PatchGeometry,
    label: u8,
) -> Result<SampleTokens> {
    check_label(label)?;
    let one = rgb.select(b);
    let tokens_of = |clip: &VideoClip| -> Result<Matrix> {
        let t = patchify(clip, geometry)?;
        Ok(Matrix::from_vec(t.seq_len(), t.dim(), t.sample(0).to_vec()))
    };
    let primary = tokens_of(&one)?;
    let aux_input = tokens_of(&clip_in_modality(&one, pair.input())?)?;
    let target = if pair.target() == pair.input() {
        aux_input.clone()
    } else {
        tokens_of(&clip_in_modality(&one, pair.target())?)?
    };
    Ok(SampleTokens {
        primary,
        aux_input,
        target,
        label,
    })
}

/// Mean over the token axis, `B x D`.
pub fn pool(latents: &TokenBatch) -> Result<Matrix> {
    if latents.seq_len() == 0 {
        return Err(Error::EmptySequence("cannot pool zero tokens".into()));
    }
    let (n, d) = (latents.seq_len(), latents.dim());
    let mut out = Matrix::zeros(latents.batch(), d);
    for b in 0..latents.batch() {
        for s in 0..n {
            for (o, v) in out.data_mut()[b * d..(b + 1) * d].iter_mut().zip(latents.token(b, s)) {
                *o += v;
            }
        }
    }
    out.scale(1.0 / n as f64);
    Ok(out)
}

/// Element-wise product of the pooled auxiliary and primary features.
pub fn fuse(aux: &Matrix, primary: &Matrix) -> Result<FusedFeature> {
    if aux.shape() != primary.shape() {
        return Err(Error::Geometry(format!(
            "cannot fuse {:?} with {:?}",
            aux.shape(),
            primary.shape()
        )));
    }
    let data = aux.data().iter().zip(primary.data()).map(|(a, p)| a * p).collect();
    Ok(FusedFeature(Matrix::from_vec(aux.rows(), aux.cols(), data)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::video::{sample_tube_mask, ClipShape};

    fn tiny_config() -> ModelConfig {
        ModelConfig {
            geometry: PatchGeometry::new(ClipShape::new(4, 3, 8, 8), 2, 4).unwrap(),
            enc_depth: 2,
            enc_width: 8,
            enc_heads: 2,
            dec_depth: 1,
            dec_width: 8,
            dec_heads: 2,
            mlp_ratio: 2,
            drop_path: 0.0,
        }
    }

    fn clip(shape: ClipShape, batch: usize, seed: u64) -> VideoClip {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..shape.len() * batch).map(|_| rng.random::<f32>()).collect();
        let ids = (0..batch).map(|i| format!("c{i}")).collect();
        VideoClip::new(shape, data, Modality::Rgb, ids).unwrap()
    }

    #[test]
    fn pair_names_round_trip() {
        for pair in ModalityPair::ALL {
            let name = pair.to_string();
            assert_eq!(name.parse::<ModalityPair>().unwrap(), pair);
            assert_eq!(name.to_lowercase().parse::<ModalityPair>().unwrap(), pair);
        }
        assert_eq!(ModalityPair::RGB_LDP.to_string(), "RGB-LDP");
        assert!("RGB-RGB".parse::<ModalityPair>().is_err());
        assert!("rgbldp".parse::<ModalityPair>().is_err());
    }

    #[test]
    fn config_validation() {
        let mut c = tiny_config();
        c.enc_heads = 3;
        assert!(FusionModel::new(c, 0).is_err());
        let mut c = tiny_config();
        c.dec_depth = 2;
        assert!(FusionModel::new(c, 0).is_err());
    }

    #[test]
    fn pool_examples() {
        let g = tiny_config().geometry;
        let one = TokenBatch::new(vec![1.0, 3.0], 1, 1, 2, g, vec![vec![0]]).unwrap();
        assert_eq!(pool(&one).unwrap().data(), &[1.0, 3.0]);
        let two = TokenBatch::new(vec![1.0, 3.0, 3.0, 1.0], 1, 2, 2, g, vec![vec![0, 1]]).unwrap();
        assert_eq!(pool(&two).unwrap().data(), &[2.0, 2.0]);
        let swapped = TokenBatch::new(vec![3.0, 1.0, 1.0, 3.0], 1, 2, 2, g, vec![vec![1, 0]]).unwrap();
        assert_eq!(pool(&swapped).unwrap(), pool(&two).unwrap());
        let empty = TokenBatch::new(vec![], 1, 0, 2, g, vec![vec![]]).unwrap();
        assert!(matches!(pool(&empty), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn fuse_examples() {
        let p = Matrix::from_vec(1, 2, vec![4.0, 5.0]);
        assert_eq!(fuse(&Matrix::filled(1, 2, 1.0), &p).unwrap().0, p);
        assert_eq!(fuse(&Matrix::zeros(1, 2), &p).unwrap().0, Matrix::zeros(1, 2));
        let z = fuse(&Matrix::from_vec(1, 2, vec![2.0, 3.0]), &p).unwrap();
        assert_eq!(z.0.data(), &[8.0, 15.0]);
        assert!(fuse(&Matrix::zeros(1, 3), &p).is_err());
    }

    #[test]
    fn classify_examples() {
        let mut model = FusionModel::new(tiny_config(), 1).unwrap();
        let (w, b) = (model.classifier.weight, model.classifier.bias);
        let z = FusedFeature(Matrix::from_vec(1, 8, (0..8).map(|i| i as f64 * 0.1).collect()));
        let logits = model.classify(&z).unwrap();
        let doubled = model
            .classify(&FusedFeature(Matrix::from_vec(1, 8, z.0.data().iter().map(|v| 2.0 * v).collect())))
            .unwrap();
        // linear in z when the bias is zero
        for c in 0..2 {
            assert!((doubled.get(0, c) - 2.0 * logits.get(0, c)).abs() < 1e-12);
        }
        model.params_mut().get_mut(w).data_mut().fill(0.0);
        model.params_mut().get_mut(b).data_mut().fill(0.0);
        let zero = model.classify(&z).unwrap();
        assert_eq!(zero.data(), &[0.0, 0.0]);
        assert_eq!(crate::objectives::fake_probabilities(&zero), vec![0.5]);
    }

    #[test]
    fn shapes_and_determinism() {
        let config = tiny_config();
        let model = FusionModel::new(config, 3).unwrap();
        let g = config.geometry;
        let rgb = clip(g.clip, 2, 9);
        let mask = sample_tube_mask(&g, 0.75, 4, &[0, 1]).unwrap();
        let out = model.forward_train(&rgb, ModalityPair::RGB_LDP, &mask).unwrap();
        assert_eq!(out.logits.shape(), (2, 2));
        assert_eq!((out.predictions.batch(), out.predictions.seq_len(), out.predictions.dim()), (2, 8, 96));
        assert_eq!((out.targets.batch(), out.targets.seq_len(), out.targets.dim()), (2, 8, 96));
        let again = model.forward_train(&rgb, ModalityPair::RGB_LDP, &mask).unwrap();
        assert_eq!(out.logits, again.logits);
        assert_eq!(out.predictions, again.predictions);

        let masked = apply_mask(&patchify(&rgb, &g).unwrap(), &mask).unwrap();
        let latents = model.encode(&masked).unwrap();
        assert_eq!((latents.seq_len(), latents.dim()), (2, 8));
    }

    #[test]
    fn full_mask_is_rejected_by_the_encoder() {
        let config = tiny_config();
        let model = FusionModel::new(config, 3).unwrap();
        let g = config.geometry;
        let rgb = clip(g.clip, 1, 9);
        let mask = MaskSpec::from_masked(vec![(0..8).collect()], 8, 1.0, 0).unwrap();
        let tokens = apply_mask(&patchify(&rgb, &g).unwrap(), &mask).unwrap();
        assert!(matches!(model.encode(&tokens), Err(Error::EmptySequence(_))));
    }

    #[test]
    fn same_modality_pair_uses_identical_input_and_target() {
        let config = tiny_config();
        let model = FusionModel::new(config, 3).unwrap();
        let rgb = clip(config.geometry.clip, 1, 2);
        let s = model.prepare_sample(&rgb, ModalityPair::LDP_LDP, 0, 1).unwrap();
        assert_eq!(s.aux_input, s.target);
    }

    #[test]
    fn empty_mask_decoder_ignores_mask_token() {
        let config = tiny_config();
        let mut model = FusionModel::new(config, 3).unwrap();
        let g = config.geometry;
        let rgb = clip(g.clip, 1, 5);
        let tokens = patchify(&rgb, &g).unwrap();
        let latents = model.encode(&tokens).unwrap();
        let empty = MaskSpec::empty(1, g.num_tokens());
        let before = model.decode(&latents, &empty).unwrap();
        let mt = model.decoder.mask_token;
        model.params_mut().get_mut(mt).data_mut().fill(5.0);
        let after = model.decode(&latents, &empty).unwrap();
        assert_eq!(before, after);
    }
}
