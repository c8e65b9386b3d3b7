//! Generator determinism, split balance, clip I/O and the separability of
//! the synthetic task.

mod common;

use std::collections::BTreeMap;

use fusion_ssat::synth::{
    build_dataset, decode_clip, desk_shape, encode_clip, generate_clip, plan_dataset, read_clip, read_manifest,
    resolve_clip_path, DomainParams, Split, SplitCounts,
};
use fusion_ssat::texture::{clip_frame_gray, descriptor_video, DescriptorKind};
use fusion_ssat::video::{ClipShape, Modality, VideoClip};
use proptest::prelude::*;

/// Test AUC of the logistic baseline on alpha in the desk-scale dataset
/// (generator seed 7), measured once when the domain presets were tuned.
const BASELINE_AUC: f64 = 0.7260;

#[test]
fn regeneration_from_manifest_seeds_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let counts = SplitCounts { train: 4, val: 2, test: 2 };
    let domains = [DomainParams::alpha(), DomainParams::beta()];
    build_dataset(&domains, counts, 3, desk_shape(), dir.path()).unwrap();
    let manifest = dir.path().join("manifest.jsonl");
    for record in read_manifest(&manifest).unwrap() {
        let domain = DomainParams::builtin(&record.domain).unwrap();
        let fresh = generate_clip(&domain, desk_shape(), record.label, record.seed, &record.id).unwrap();
        let stored = read_clip(&resolve_clip_path(&manifest, &record)).unwrap();
        assert_eq!(fresh.clip, stored, "{}", record.id);
    }

    let again = tempfile::tempdir().unwrap();
    build_dataset(&domains, counts, 3, desk_shape(), again.path()).unwrap();
    assert_eq!(
        std::fs::read(&manifest).unwrap(),
        std::fs::read(again.path().join("manifest.jsonl")).unwrap()
    );
}

#[test]
fn every_split_is_label_balanced() {
    let counts = SplitCounts { train: 10, val: 4, test: 6 };
    let records = plan_dataset(&[DomainParams::alpha(), DomainParams::beta()], counts, 9).unwrap();
    let mut tally: BTreeMap<(String, Split), [usize; 2]> = BTreeMap::new();
    for r in &records {
        tally.entry((r.domain.clone(), r.split)).or_default()[usize::from(r.label)] += 1;
    }
    assert_eq!(tally.len(), 6);
    for ((_, split), [real, fake]) in tally {
        assert_eq!(real, fake);
        let expected = match split {
            Split::Train => 10,
            Split::Val => 4,
            Split::Test => 6,
        };
        assert_eq!(real + fake, expected);
    }
}

fn mean_abs_kirsch(clip: &VideoClip) -> f64 {
    let shape = clip.shape();
    let (mut acc, mut n) = (0.0, 0.0);
    for t in 0..shape.frames {
        let gray = clip_frame_gray(clip, 0, t).unwrap();
        for y in 0..shape.height {
            for x in 0..shape.width {
                let win = common::window(gray.pixels(), shape.width, shape.height, x, y);
                acc += common::kirsch_oracle(&win).iter().map(|v| v.abs()).sum::<f64>();
                n += 8.0;
            }
        }
    }
    acc / n
}

#[test]
fn logistic_baseline_is_better_than_chance_but_not_perfect() {
    let alpha = DomainParams::alpha();
    // record seeds depend on the full plan, so plan both domains as the
    // desk-scale runs do
    let counts = SplitCounts { train: 200, val: 40, test: 100 };
    let records = plan_dataset(&[alpha.clone(), DomainParams::beta()], counts, 7).unwrap();
    let features = |split: Split| -> (Vec<f64>, Vec<u8>) {
        records
            .iter()
            .filter(|r| r.split == split && r.domain == alpha.name)
            .map(|r| {
                let clip = generate_clip(&alpha, desk_shape(), r.label, r.seed, &r.id).unwrap().clip;
                (mean_abs_kirsch(&clip), r.label)
            })
            .unzip()
    };
    let (train_x, train_y) = features(Split::Train);
    let (test_x, test_y) = features(Split::Test);
    let model = common::fit_logistic(&train_x, &train_y);
    let scores: Vec<f64> = test_x.iter().map(|&x| common::logistic_predict(model, x)).collect();
    let auc = common::pairwise_auc(&scores, &test_y);
    assert!((0.6..=0.95).contains(&auc), "baseline AUC {auc}");
    assert!((auc - BASELINE_AUC).abs() < 5e-5, "baseline AUC {auc} drifted from {BASELINE_AUC}");
}

#[test]
fn fakes_change_texture_codes_inside_the_region() {
    for domain in [DomainParams::alpha(), DomainParams::beta()] {
        let mut changed = 0;
        for seed in 0..100 {
            let real = generate_clip(&domain, desk_shape(), 0, seed, "r").unwrap();
            let fake = generate_clip(&domain, desk_shape(), 1, seed, "f").unwrap();
            let region = fake.region.unwrap();
            let a = descriptor_video(&real.clip, DescriptorKind::Ldp).unwrap();
            let b = descriptor_video(&fake.clip, DescriptorKind::Ldp).unwrap();
            let differs = (0..desk_shape().frames).any(|t| {
                (region.y0..region.y1).any(|y| {
                    (region.x0..region.x1).any(|x| a.get(0, t, 0, y, x) != b.get(0, t, 0, y, x))
                })
            });
            changed += usize::from(differs);
        }
        assert!(changed >= 95, "{}: {changed}/100 fakes alter LDP codes", domain.name);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn clip_bytes_round_trip(
        (t, c, h, w) in (1usize..4, 1usize..4, 1usize..6, 1usize..6),
        seed: u64,
    ) {
        let shape = ClipShape::new(t, c, h, w);
        let data = (0..shape.len())
            .map(|i| ((seed.wrapping_mul(i as u64 + 1) >> 40) as f32) / (1u32 << 24) as f32)
            .collect();
        let clip = VideoClip::new(shape, data, Modality::Rgb, vec!["x".into()]).unwrap();
        prop_assert_eq!(decode_clip(&encode_clip(&clip).unwrap(), "x").unwrap(), clip);
    }
}
