use proptest::prelude::*;

use vocadapt::audio::{mel_spectrogram, AudioClip, DspConfig, MelSpectrogram};
use vocadapt::autodiff::checkpoint::{CheckpointBundle, NamedArray};
use vocadapt::autodiff::conv::{conv1d, conv_transpose1d, Conv1dSpec};
use vocadapt::autodiff::prob::{kl_divergence, softmax};
use vocadapt::autodiff::Tensor;
use vocadapt::config::{EvalConfig, RunConfig};
use vocadapt::data::{crop_one, sample_crop_batch, synth_speaker, ClipPool, SpeakerSpec};
use vocadapt::eval::{mcd, mr_stft_loss, ComparisonRow, MetricsReport, Stat};
use vocadapt::losses::{cdc_loss, CdcConfig, Pooling};
use vocadapt::models::{GeneratorConfig, GeneratorHandle, GeneratorKind, InitScheme};
use vocadapt::rng::SplitMix64;
use vocadapt::training::FinetuneMode;

fn t64(v: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(&[v.len()], v, false).unwrap()
}

fn clip(seed: u64, samples: usize) -> AudioClip {
    let mut rng = SplitMix64::new(seed);
    let spec = SpeakerSpec::random_adult(&mut rng);
    let c = synth_speaker(&spec, samples as f64 / 16_000.0 + 0.01, seed, 16_000).unwrap();
    AudioClip::new(c.samples[..samples].to_vec(), 16_000).unwrap()
}

fn small_generator(seed: u64) -> GeneratorHandle<f64> {
    let cfg = GeneratorConfig {
        kind: GeneratorKind::MelganLike,
        upsample_strides: vec![16, 16],
        base_channels: 8,
        mel_channels: 5,
        resblock_kernels: vec![3],
        resblock_dilations: vec![1, 2],
        init: InitScheme::FanIn,
    };
    GeneratorHandle::build(cfg, seed).unwrap()
}

fn mels(seed: u64, n: usize, frames: usize) -> Vec<MelSpectrogram> {
    let mut rng = SplitMix64::new(seed);
    let config = DspConfig {
        n_mels: 5,
        ..DspConfig::default()
    };
    (0..n)
        .map(|_| MelSpectrogram {
            n_mels: 5,
            frames,
            values: (0..5 * frames).map(|_| rng.uniform_in(-4.0, 1.0) as f32).collect(),
            config: config.clone(),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_is_a_distribution(v in prop::collection::vec(-30.0f64..30.0, 1..12)) {
        let p = softmax(&t64(&v)).unwrap().to_vec();
        prop_assert!(p.iter().all(|&x| x > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kl_is_nonnegative_and_zero_on_self(a in prop::collection::vec(-5.0f64..5.0, 2..8), b in prop::collection::vec(-5.0f64..5.0, 2..8)) {
        let n = a.len().min(b.len());
        let p = softmax(&t64(&a[..n])).unwrap();
        let q = softmax(&t64(&b[..n])).unwrap();
        prop_assert!(kl_divergence(&p, &q).unwrap().item() >= 0.0);
        prop_assert!(kl_divergence(&p, &p).unwrap().item().abs() < 1e-15);
    }

    #[test]
    fn conv_transpose_is_the_adjoint(
        cin in 1usize..4, cout in 1usize..4, k in 1usize..6, stride in 1usize..4, pad_frac in 0.0f64..1.0,
        blocks in 2usize..6, seed in any::<u64>(),
    ) {
        let padding = ((k - 1) as f64 * pad_frac) as usize / 2;
        // choose L so the transpose maps back to exactly L samples
        let len = blocks * stride + k - 2 * padding;
        let mut rng = SplitMix64::new(seed);
        let mut r = |n: usize| (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect::<Vec<f64>>();
        let x = Tensor::<f64>::from_f64(&[cin, len], &r(cin * len), false).unwrap();
        let w = Tensor::from_f64(&[cout, cin, k], &r(cout * cin * k), false).unwrap();
        let y = conv1d(&x, &w, None, Conv1dSpec { stride, padding, ..Conv1dSpec::default() }).unwrap();
        let lo = y.shape()[1];
        let z = Tensor::from_f64(&[cout, lo], &r(cout * lo), false).unwrap();
        let back = conv_transpose1d(&z, &w, None, stride, padding).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        let lhs: f64 = y.to_vec().iter().zip(z.to_vec()).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.to_vec().iter().zip(back.to_vec()).map(|(a, b)| a * b).sum();
        prop_assert!((lhs - rhs).abs() <= 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn log_mel_frames_and_floor(len in 1usize..3000, seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let samples: Vec<f32> = (0..len).map(|_| rng.uniform_in(-0.5, 0.5) as f32).collect();
        let dsp = DspConfig::default();
        let m = mel_spectrogram(&AudioClip::new(samples, 16_000).unwrap(), &dsp).unwrap();
        prop_assert_eq!(m.frames, len.div_ceil(dsp.hop_length));
        let floor = (dsp.log_floor as f32).ln();
        prop_assert!(m.values.iter().all(|&v| v >= floor - 1e-6));
    }

    #[test]
    fn crops_obey_the_length_law(frames in 1usize..24, seed in any::<u64>()) {
        let dsp = DspConfig::default();
        let pool = ClipPool::from_clips(vec![clip(seed % 7, 4000), clip(seed % 7 + 1, 9000)]);
        let mut rng = SplitMix64::new(seed);
        let batch = sample_crop_batch(&pool, 3, frames, &mut rng, &dsp).unwrap();
        for item in &batch.items {
            prop_assert_eq!(item.audio.len(), 256 * frames);
            prop_assert_eq!(item.mel.frames, frames);
        }
    }

    #[test]
    fn metrics_zero_on_identity_positive_otherwise(seed in 0u64..1000, gain in 0.2f32..0.9) {
        let dsp = DspConfig::default();
        let eval = EvalConfig::default();
        let a = clip(seed, 2500);
        let b = AudioClip::new(a.samples.iter().map(|&s| s * gain).collect(), 16_000).unwrap();
        prop_assert_eq!(mr_stft_loss(&a, &a, &eval, &dsp).unwrap(), 0.0);
        prop_assert_eq!(mcd(&a, &a, eval.mcd_order, &dsp).unwrap(), 0.0);
        prop_assert!(mr_stft_loss(&a, &b, &eval, &dsp).unwrap() > 0.0);
        let c = AudioClip::new(clip(seed + 1, 2500).samples, 16_000).unwrap();
        prop_assert!(mcd(&a, &c, eval.mcd_order, &dsp).unwrap() > 0.0);
    }

    #[test]
    fn gap_is_test_minus_train(train in 0.0f64..50.0, test in 0.0f64..50.0, m1 in 0.0f64..100.0, m2 in 0.0f64..100.0) {
        let report = |split: &str, mr: f64, mc: f64| MetricsReport {
            label: "x".into(),
            split: split.into(),
            count: 1,
            mr_stft: Stat { mean: mr, std: 0.0 },
            mcd: Stat { mean: mc, std: 0.0 },
            clips: Vec::new(),
            note: String::new(),
        };
        let row = ComparisonRow::from_reports("melgan_like", FinetuneMode::Cdc, &report("train", train, m1), &report("test", test, m2));
        prop_assert_eq!(row.gap_mr_stft, test - train);
        prop_assert_eq!(row.gap_mcd, m2 - m1);
    }

    #[test]
    fn checkpoint_bytes_round_trip(shapes in prop::collection::vec(prop::collection::vec(1usize..5, 1..4), 0..5), seed in any::<u64>()) {
        let mut rng = SplitMix64::new(seed);
        let mut b = CheckpointBundle::new("melgan_like", "{\"k\":1}".into());
        for (i, s) in shapes.iter().enumerate() {
            let n: usize = s.iter().product();
            b.params.push(NamedArray {
                name: format!("p{i}"),
                shape: s.clone(),
                data: (0..n).map(|_| rng.normal() as f32).collect(),
            });
        }
        let bytes = b.to_bytes();
        let back = CheckpointBundle::from_bytes(&bytes).unwrap();
        prop_assert_eq!(&back, &b);
        prop_assert_eq!(back.to_bytes(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn cdc_is_permutation_invariant(seed in any::<u64>(), n in 2usize..6, flatten in any::<bool>()) {
        let adapted = small_generator(seed);
        let source = small_generator(seed.wrapping_add(1));
        let batch = mels(seed, n, 2);
        let cfg = CdcConfig {
            batch_size: n,
            layer_indices: vec![0, 1],
            pooling: if flatten { Pooling::Flatten } else { Pooling::TemporalMean },
            eps: 1e-8,
        };
        let base = cdc_loss(&source, &adapted, &batch, &cfg).unwrap().item();
        let mut perm: Vec<usize> = (0..n).collect();
        SplitMix64::new(seed ^ 0xabc).shuffle(&mut perm);
        let shuffled: Vec<_> = perm.iter().map(|&i| batch[i].clone()).collect();
        let again = cdc_loss(&source, &adapted, &shuffled, &cfg).unwrap().item();
        prop_assert!(base >= 0.0);
        prop_assert!((base - again).abs() <= 1e-9);
        prop_assert!(cdc_loss(&adapted.frozen_copy(), &adapted, &batch, &cfg).unwrap().item() <= 1e-12);
    }

    #[test]
    fn generator_output_is_256_per_frame(frames in 1usize..20, seed in any::<u64>()) {
        let g = small_generator(seed);
        let m = &mels(seed, 1, frames)[0];
        prop_assert_eq!(g.generate(m).unwrap().numel(), 256 * frames);
    }

    #[test]
    fn config_toml_round_trip(steps in 1usize..100_000, crop in 1usize..64, lr in 1e-6f64..1e-2, pool in 0usize..3) {
        let mut cfg = RunConfig::default();
        cfg.train.steps = steps;
        cfg.train.crop_frames = crop;
        cfg.train.lr_gen = lr;
        cfg.cdc.pool = [vocadapt::config::CdcPool::Source, vocadapt::config::CdcPool::Target, vocadapt::config::CdcPool::Mixed][pool];
        let back = RunConfig::from_toml_str(&cfg.to_toml()).unwrap();
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn crop_pads_short_clips_and_flags_them() {
    let dsp = DspConfig::default();
    let short = clip(3, 300);
    let item = crop_one(&short, 4, &mut SplitMix64::new(1), &dsp).unwrap();
    assert!(item.padded);
    assert_eq!(item.audio.len(), 1024);
    assert!(item.audio[300..].iter().all(|&s| s == 0.0));
}

#[test]
fn default_config_file_matches_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../config/default.toml");
    let cfg = RunConfig::load(std::path::Path::new(path)).unwrap();
    assert_eq!(cfg, RunConfig::default());
}
