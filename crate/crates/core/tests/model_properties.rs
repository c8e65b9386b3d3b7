//! Structural invariants of the fusion model: shared encoder weights, the
//! fusion product and evaluation-mode determinism.

use fusion_ssat::autograd::{matmul, Matrix};
use fusion_ssat::harness::optim::Sgd;
use fusion_ssat::model::{fuse, pool, FusedFeature, FusionModel, ModalityPair, ModelConfig, SampleTokens};
use fusion_ssat::objectives::RecNormalization;
use fusion_ssat::video::{patchify, sample_tube_mask, ClipShape, Modality, PatchGeometry, TokenBatch, VideoClip};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

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

fn rgb_clip(shape: ClipShape, seed: u64) -> VideoClip {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..2 * shape.len()).map(|_| rng.random::<f32>()).collect();
    VideoClip::new(shape, data, Modality::Rgb, vec!["a".into(), "b".into()]).unwrap()
}

fn samples(model: &FusionModel, clip: &VideoClip) -> Vec<SampleTokens> {
    (0..2)
        .map(|b| model.prepare_sample(clip, ModalityPair::RGB_LDP, b, b as u8).unwrap())
        .collect()
}

#[test]
fn reconstruction_step_moves_the_primary_branch() {
    let mut model = FusionModel::new(tiny_config(), 1).unwrap();
    let clip = rgb_clip(model.geometry().clip, 2);
    let batch = samples(&model, &clip);
    let mask = sample_tube_mask(model.geometry(), 0.5, 3, &[0, 1]).unwrap();
    let primary = patchify(&clip, model.geometry()).unwrap();
    let before = model.encode(&primary).unwrap();
    let embed_before = model.params().get(model.encoder().embed.weight).clone();

    // lambda = 0: only the reconstruction loss drives the step
    let (_, grads) = model
        .loss_and_grads(&batch, &mask, 0.0, RecNormalization::PerElement, None)
        .unwrap();
    let mut sgd = Sgd::new(model.params(), 0.9, 0.0);
    sgd.step(model.params_mut(), &grads, 0.1);

    assert_ne!(model.params().get(model.encoder().embed.weight), &embed_before);
    let after = model.encode(&primary).unwrap();
    assert_ne!(before.data(), after.data());
}

#[test]
fn all_ones_auxiliary_feature_reduces_to_a_primary_only_head() {
    let model = FusionModel::new(tiny_config(), 4).unwrap();
    let clip = rgb_clip(model.geometry().clip, 5);
    let primary = pool(&model.encode(&patchify(&clip, model.geometry()).unwrap()).unwrap()).unwrap();
    let ones = Matrix::filled(primary.rows(), primary.cols(), 1.0);
    let fused = model.classify(&fuse(&ones, &primary).unwrap()).unwrap();

    let w = model.params().get(model.classifier().weight);
    let bias = model.params().get(model.classifier().bias);
    let mut expected = matmul(&primary, w);
    for r in 0..expected.rows() {
        for c in 0..2 {
            expected.data_mut()[r * 2 + c] += bias.data()[c];
        }
    }
    assert_eq!(fused, expected);
}

#[test]
fn evaluation_forward_is_bit_identical() {
    let model = FusionModel::new(tiny_config(), 6).unwrap();
    let clip = rgb_clip(model.geometry().clip, 7);
    let batch = samples(&model, &clip);
    let mask = sample_tube_mask(model.geometry(), 0.75, 8, &[0, 1]).unwrap();
    assert_eq!(model.predict(&batch, &mask).unwrap(), model.predict(&batch, &mask).unwrap());
    let a = model.forward_train(&clip, ModalityPair::LBP_RGB, &mask).unwrap();
    let b = model.forward_train(&clip, ModalityPair::LBP_RGB, &mask).unwrap();
    assert_eq!(a.logits, b.logits);
    assert_eq!(a.predictions, b.predictions);
}

#[test]
fn encode_rejects_mismatched_tokens() {
    let model = FusionModel::new(tiny_config(), 6).unwrap();
    let g = PatchGeometry::new(ClipShape::new(2, 3, 8, 8), 2, 4).unwrap();
    let tokens = TokenBatch::new(vec![0.0; 4 * 96], 1, 4, 96, g, vec![(0..4).collect()]).unwrap();
    assert!(model.encode(&tokens).is_err());
}

fn argmax(row: &[f64]) -> usize {
    usize::from(row[1] > row[0])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_bias_head_argmax_ignores_positive_scaling(
        z in prop::collection::vec(-3.0f64..3.0, 8),
        scale in 1e-3f64..1e3,
        seed in 0u64..1000,
    ) {
        let mut model = FusionModel::new(tiny_config(), seed).unwrap();
        let bias = model.classifier().bias;
        model.params_mut().get_mut(bias).data_mut().fill(0.0);
        let base = model.classify(&FusedFeature(Matrix::from_vec(1, 8, z.clone()))).unwrap();
        let scaled_z = z.iter().map(|v| v * scale).collect();
        let scaled = model.classify(&FusedFeature(Matrix::from_vec(1, 8, scaled_z))).unwrap();
        prop_assume!((base.get(0, 0) - base.get(0, 1)).abs() > 1e-9);
        prop_assert_eq!(argmax(base.row(0)), argmax(scaled.row(0)));
    }
}
