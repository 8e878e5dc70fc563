//! Finite-difference gradient checks over every differentiable op, loss and
//! model in 64-bit.
//!
//! Each case builds random leaves, reduces the output to a scalar through a
//! fixed random projection, and compares the backward pass with central
//! differences. The error of a case is `max|analytic − numeric|` divided by
//! the larger of the two gradients' max-norms.

use crate::audio::{DspConfig, MelSpectrogram, StftPlan};
use crate::autodiff::conv::{avg_pool1d, conv1d, conv_transpose1d, periodize, select_last, Conv1dSpec};
use crate::autodiff::ops::sum_all;
use crate::autodiff::prob::{cosine_similarity, kl_divergence, softmax};
use crate::autodiff::spectral::{log_mel, stft_magnitude};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::losses::{
    cdc_loss, feature_matching_loss, hinge_disc_loss, hinge_gen_loss, lsgan_disc_loss, lsgan_gen_loss, CdcConfig,
    MelLoss, Pooling,
};
use crate::models::{DiscriminatorConfig, DiscriminatorHandle, GeneratorConfig, GeneratorHandle, GeneratorKind, InitScheme};
use crate::rng::SplitMix64;

pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;
/// Coordinates probed per input tensor; smaller tensors are probed fully.
const MAX_PROBES: usize = 24;
/// Probes whose h and h/2 estimates differ by more than this fraction of
/// `tolerance * max|analytic|` are treated as straddling a kink.
const KINK_FRACTION: f64 = 0.1;

type T = Tensor<f64>;
type Eval = Box<dyn Fn() -> Result<T>>;

pub struct Probe {
    pub inputs: Vec<T>,
    pub eval: Eval,
}

pub struct GradCase {
    pub name: &'static str,
    pub module: &'static str,
    setup: fn(&mut SplitMix64) -> Result<Probe>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub module: &'static str,
    pub rel_error: f64,
    pub probes: usize,
    /// Coordinates dropped because a non-differentiable point lay within the step.
    pub skipped: usize,
    pub passed: bool,
}

fn leaf(rng: &mut SplitMix64, shape: &[usize], lo: f64, hi: f64) -> Result<T> {
    let n = shape.iter().product();
    T::from_f64(shape, &(0..n).map(|_| rng.uniform_in(lo, hi)).collect::<Vec<_>>(), true)
}

/// Values bounded away from zero, for rules with a kink or pole there.
fn leaf_away(rng: &mut SplitMix64, shape: &[usize]) -> Result<T> {
    let n = shape.iter().product();
    let v: Vec<f64> = (0..n)
        .map(|_| {
            let m = rng.uniform_in(0.2, 1.0);
            if rng.below(2) == 0 {
                m
            } else {
                -m
            }
        })
        .collect();
    T::from_f64(shape, &v, true)
}

/// `Σ y ⊙ r` for a fixed random `r`, so every output element matters.
fn project(y: &T, r: &T) -> Result<T> {
    y.mul(r)?.sum()
}

fn projector(rng: &mut SplitMix64, shape: &[usize]) -> Result<T> {
    let n = shape.iter().product();
    T::from_f64(shape, &(0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect::<Vec<_>>(), false)
}

/// Wraps a single-output op: the projector is sized from one forward run.
fn probe(rng: &mut SplitMix64, inputs: Vec<T>, f: impl Fn(&[T]) -> Result<T> + 'static) -> Result<Probe> {
    let y = f(&inputs)?;
    let r = projector(rng, y.shape())?;
    let args = inputs.clone();
    Ok(Probe {
        inputs,
        eval: Box::new(move || {
            let y = f(&args)?;
            if y.numel() == 1 {
                y.mul(&r)
            } else {
                project(&y, &r)
            }
        }),
    })
}

macro_rules! case {
    ($module:literal, $name:literal, $setup:expr) => {
        GradCase {
            name: $name,
            module: $module,
            setup: $setup,
        }
    };
}

fn tiny_gen_config(kind: GeneratorKind) -> GeneratorConfig {
    GeneratorConfig {
        kind,
        upsample_strides: vec![16, 16],
        base_channels: 8,
        mel_channels: 6,
        resblock_kernels: if kind == GeneratorKind::MelganLike { vec![3] } else { vec![3, 5] },
        resblock_dilations: vec![1, 2],
        init: InitScheme::Normal,
    }
}

fn random_mel(rng: &mut SplitMix64, n_mels: usize, frames: usize) -> MelSpectrogram {
    let config = DspConfig {
        n_mels,
        ..DspConfig::default()
    };
    MelSpectrogram {
        n_mels,
        frames,
        values: (0..n_mels * frames).map(|_| rng.uniform_in(-4.0, 1.0) as f32).collect(),
        config,
    }
}

/// Re-draws parameters at a scale where activations sit well away from the
/// leaky-ReLU kink.
fn rescale_params(params: &[(String, T)], rng: &mut SplitMix64, scale: f64) -> Result<()> {
    for (_, p) in params {
        let v: Vec<f64> = (0..p.numel()).map(|_| rng.uniform_in(-scale, scale)).collect();
        p.set_data(&v)?;
    }
    Ok(())
}

fn small_dsp() -> DspConfig {
    DspConfig {
        n_fft: 64,
        win_length: 48,
        hop_length: 16,
        n_mels: 8,
        sample_rate: 8000,
        fmax: 4000.0,
        ..DspConfig::default()
    }
}

/// Every registered case.
pub fn registry() -> Vec<GradCase> {
    vec![
        case!("elementwise", "add", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?, leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].add(&x[1]))
        }),
        case!("elementwise", "add_broadcast_scalar", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?, leaf(r, &[1], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].add(&x[1]))
        }),
        case!("elementwise", "sub", |r| {
            let ins = vec![leaf(r, &[5], -1.0, 1.0)?, leaf(r, &[5], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].sub(&x[1]))
        }),
        case!("elementwise", "mul", |r| {
            let ins = vec![leaf(r, &[2, 5], -1.0, 1.0)?, leaf(r, &[2, 5], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].mul(&x[1]))
        }),
        case!("elementwise", "scalar_mul", |r| {
            let ins = vec![leaf(r, &[6], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].scalar_mul(-2.5))
        }),
        case!("elementwise", "add_scalar", |r| {
            let ins = vec![leaf(r, &[6], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].add_scalar(0.7))
        }),
        case!("elementwise", "neg", |r| {
            let ins = vec![leaf(r, &[6], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].neg())
        }),
        case!("elementwise", "leaky_relu", |r| {
            let ins = vec![leaf_away(r, &[4, 5])?];
            probe(r, ins, |x| x[0].leaky_relu(0.2))
        }),
        case!("elementwise", "relu", |r| {
            let ins = vec![leaf_away(r, &[12])?];
            probe(r, ins, |x| x[0].relu())
        }),
        case!("elementwise", "tanh", |r| {
            let ins = vec![leaf(r, &[10], -2.0, 2.0)?];
            probe(r, ins, |x| x[0].tanh())
        }),
        case!("elementwise", "log", |r| {
            let ins = vec![leaf(r, &[10], 0.1, 3.0)?];
            probe(r, ins, |x| x[0].log())
        }),
        case!("elementwise", "exp", |r| {
            let ins = vec![leaf(r, &[10], -2.0, 2.0)?];
            probe(r, ins, |x| x[0].exp())
        }),
        case!("elementwise", "abs", |r| {
            let ins = vec![leaf_away(r, &[10])?];
            probe(r, ins, |x| x[0].abs())
        }),
        case!("elementwise", "square", |r| {
            let ins = vec![leaf(r, &[10], -2.0, 2.0)?];
            probe(r, ins, |x| x[0].square())
        }),
        case!("elementwise", "clamp_min", |r| {
            let ins = vec![leaf_away(r, &[12])?];
            probe(r, ins, |x| x[0].clamp_min(0.0))
        }),
        case!("reduction", "sum", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].sum())
        }),
        case!("reduction", "mean", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].mean())
        }),
        case!("reduction", "sum_axis", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].sum_axis(0))
        }),
        case!("reduction", "mean_axis", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].mean_axis(1))
        }),
        case!("reduction", "sum_all", |r| {
            let ins = vec![leaf(r, &[1], -1.0, 1.0)?, leaf(r, &[1], -1.0, 1.0)?, leaf(r, &[1], -1.0, 1.0)?];
            probe(r, ins, |x| sum_all(x))
        }),
        case!("shape", "reshape", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].reshape(&[2, 6]))
        }),
        case!("shape", "flatten", |r| {
            let ins = vec![leaf(r, &[2, 3, 2], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].flatten())
        }),
        case!("shape", "concat_last", |r| {
            let ins = vec![leaf(r, &[2, 3], -1.0, 1.0)?, leaf(r, &[2, 5], -1.0, 1.0)?];
            probe(r, ins, |x| T::concat_last(x))
        }),
        case!("shape", "stack_scalars", |r| {
            let ins = vec![leaf(r, &[1], -1.0, 1.0)?, leaf(r, &[1], -1.0, 1.0)?];
            probe(r, ins, |x| T::stack_scalars(x))
        }),
        case!("linear", "matmul", |r| {
            let ins = vec![leaf(r, &[3, 4], -1.0, 1.0)?, leaf(r, &[4, 5], -1.0, 1.0)?];
            probe(r, ins, |x| x[0].matmul(&x[1]))
        }),
        case!("conv", "conv1d", |r| {
            let ins = vec![leaf(r, &[2, 11], -1.0, 1.0)?, leaf(r, &[3, 2, 3], -1.0, 1.0)?, leaf(r, &[3], -1.0, 1.0)?];
            probe(r, ins, |x| conv1d(&x[0], &x[1], Some(&x[2]), Conv1dSpec::padded(1)))
        }),
        case!("conv", "conv1d_strided_dilated", |r| {
            let ins = vec![leaf(r, &[2, 17], -1.0, 1.0)?, leaf(r, &[4, 2, 3], -1.0, 1.0)?];
            probe(r, ins, |x| {
                conv1d(
                    &x[0],
                    &x[1],
                    None,
                    Conv1dSpec {
                        stride: 2,
                        padding: 2,
                        dilation: 2,
                        groups: 1,
                    },
                )
            })
        }),
        case!("conv", "conv1d_grouped", |r| {
            let ins = vec![leaf(r, &[4, 13], -1.0, 1.0)?, leaf(r, &[6, 2, 5], -1.0, 1.0)?, leaf(r, &[6], -1.0, 1.0)?];
            probe(r, ins, |x| {
                conv1d(
                    &x[0],
                    &x[1],
                    Some(&x[2]),
                    Conv1dSpec {
                        stride: 3,
                        padding: 2,
                        dilation: 1,
                        groups: 2,
                    },
                )
            })
        }),
        case!("conv", "conv_transpose1d", |r| {
            let ins = vec![leaf(r, &[3, 6], -1.0, 1.0)?, leaf(r, &[3, 2, 4], -1.0, 1.0)?, leaf(r, &[2], -1.0, 1.0)?];
            probe(r, ins, |x| conv_transpose1d(&x[0], &x[1], Some(&x[2]), 2, 1))
        }),
        case!("conv", "avg_pool1d", |r| {
            let ins = vec![leaf(r, &[2, 13], -1.0, 1.0)?];
            probe(r, ins, |x| avg_pool1d(&x[0], 4, 2, 1))
        }),
        case!("conv", "periodize", |r| {
            let ins = vec![leaf(r, &[2, 7], -1.0, 1.0)?];
            probe(r, ins, |x| periodize(&x[0], 3))
        }),
        case!("conv", "select_last", |r| {
            let ins = vec![leaf(r, &[2, 3, 4], -1.0, 1.0)?];
            probe(r, ins, |x| select_last(&x[0], 2))
        }),
        case!("prob", "softmax", |r| {
            let ins = vec![leaf(r, &[6], -2.0, 2.0)?];
            probe(r, ins, |x| softmax(&x[0]))
        }),
        case!("prob", "cosine_similarity", |r| {
            let ins = vec![leaf(r, &[7], -1.0, 1.0)?, leaf(r, &[7], -1.0, 1.0)?];
            probe(r, ins, |x| cosine_similarity(&x[0], &x[1], 1e-8))
        }),
        case!("prob", "kl_divergence", |r| {
            let ins = vec![leaf(r, &[5], -1.0, 1.0)?, leaf(r, &[5], -1.0, 1.0)?];
            probe(r, ins, |x| kl_divergence(&softmax(&x[0])?, &softmax(&x[1])?))
        }),
        case!("spectral", "stft_magnitude", |r| {
            let ins = vec![leaf(r, &[1, 70], -1.0, 1.0)?];
            let plan = StftPlan::<f64>::new(&small_dsp())?;
            probe(r, ins, move |x| stft_magnitude(&x[0], &plan))
        }),
        case!("spectral", "log_mel", |r| {
            let ins = vec![leaf(r, &[1, 64], -1.0, 1.0)?];
            let cfg = small_dsp();
            let plan = StftPlan::<f64>::new(&cfg)?;
            let fb = T::from_f64(&[cfg.n_mels, cfg.n_freq()], &crate::audio::mel_filterbank(&cfg)?, false)?;
            probe(r, ins, move |x| log_mel(&x[0], &plan, &fb, 1e-5))
        }),
        case!("losses", "hinge_disc", |r| {
            let ins = vec![leaf_away(r, &[1, 6])?, leaf_away(r, &[1, 6])?, leaf_away(r, &[1, 3])?, leaf_away(r, &[1, 3])?];
            // shift away from the hinge points at ±1
            probe(r, ins, |x| {
                hinge_disc_loss(&[x[0].scalar_mul(0.5)?, x[2].scalar_mul(0.5)?], &[x[1].scalar_mul(0.5)?, x[3].scalar_mul(0.5)?])
            })
        }),
        case!("losses", "hinge_gen", |r| {
            let ins = vec![leaf(r, &[1, 8], -2.0, 2.0)?];
            probe(r, ins, |x| hinge_gen_loss(&[x[0].clone()]))
        }),
        case!("losses", "lsgan_disc", |r| {
            let ins = vec![leaf(r, &[1, 6], -1.0, 1.0)?, leaf(r, &[1, 6], -1.0, 1.0)?];
            probe(r, ins, |x| lsgan_disc_loss(&[x[0].clone()], &[x[1].clone()]))
        }),
        case!("losses", "lsgan_gen", |r| {
            let ins = vec![leaf(r, &[1, 6], -1.0, 1.0)?, leaf(r, &[1, 4], -1.0, 1.0)?];
            probe(r, ins, |x| lsgan_gen_loss(x))
        }),
        case!("losses", "feature_matching", |r| {
            let ins = vec![
                leaf(r, &[2, 5], -1.0, 1.0)?,
                leaf(r, &[3, 2], -1.0, 1.0)?,
                leaf(r, &[2, 4], -1.0, 1.0)?,
            ];
            let real = [
                T::from_f64(&[2, 5], &(0..10).map(|_| r.uniform_in(2.0, 3.0)).collect::<Vec<_>>(), false)?,
                T::from_f64(&[3, 2], &(0..6).map(|_| r.uniform_in(2.0, 3.0)).collect::<Vec<_>>(), false)?,
                T::from_f64(&[2, 4], &(0..8).map(|_| r.uniform_in(2.0, 3.0)).collect::<Vec<_>>(), false)?,
            ];
            probe(r, ins, move |x| {
                feature_matching_loss(
                    &[real[..2].to_vec(), vec![real[2].clone()]],
                    &[x[..2].to_vec(), vec![x[2].clone()]],
                )
            })
        }),
        case!("losses", "mel_recon", |r| {
            let cfg = small_dsp();
            let ins = vec![leaf(r, &[1, 4 * cfg.hop_length], -1.0, 1.0)?];
            let loss = MelLoss::<f64>::new(&cfg)?;
            let mut target = random_mel(r, cfg.n_mels, 4);
            target.config = cfg;
            // the L1 kink is avoided by a target far below the floor-clamped range
            target.values.iter_mut().for_each(|v| *v = -20.0 + *v);
            probe(r, ins, move |x| loss.loss(&x[0], &target))
        }),
        case!("losses", "cdc_loss", |r| cdc_probe(r, Pooling::TemporalMean, GeneratorKind::MelganLike)),
        case!("losses", "cdc_loss_flatten", |r| cdc_probe(r, Pooling::Flatten, GeneratorKind::HifiganLike)),
        case!("models", "generator_melgan", |r| generator_probe(r, GeneratorKind::MelganLike)),
        case!("models", "generator_hifigan", |r| generator_probe(r, GeneratorKind::HifiganLike)),
        case!("models", "discriminator_combined", |r| {
            let d = DiscriminatorHandle::<f64>::build(
                DiscriminatorConfig {
                    periods: vec![2, 3],
                    channels: 2,
                    ..DiscriminatorConfig::combined()
                },
                0,
            )?;
            rescale_params(d.params.entries(), r, 0.5)?;
            let mut ins = vec![leaf(r, &[1, 64], -1.0, 1.0)?];
            ins.extend(d.params.tensors().cloned());
            probe(r, ins, move |x| {
                let outs = d.discriminate(&x[0])?;
                let mut parts = Vec::new();
                for o in outs {
                    parts.push(o.logits.mean()?);
                    for f in o.features {
                        parts.push(f.mean()?);
                    }
                }
                sum_all(&parts)
            })
        }),
    ]
}

fn generator_probe(r: &mut SplitMix64, kind: GeneratorKind) -> Result<Probe> {
    let g = GeneratorHandle::<f64>::build(tiny_gen_config(kind), 0)?;
    rescale_params(g.params.entries(), r, 0.4)?;
    let mel = T::from_f64(&[6, 2], &(0..12).map(|_| r.uniform_in(-1.0, 1.0)).collect::<Vec<_>>(), false)?;
    let ins: Vec<T> = g.params.tensors().cloned().collect();
    probe(r, ins, move |_| {
        let (wave, taps) = g.forward(&mel)?;
        let mut parts = vec![wave.mean()?];
        for t in taps {
            parts.push(t.mean()?);
        }
        sum_all(&parts)
    })
}

fn cdc_probe(r: &mut SplitMix64, pooling: Pooling, kind: GeneratorKind) -> Result<Probe> {
    let cfg = tiny_gen_config(kind);
    let adapted = GeneratorHandle::<f64>::build(cfg.clone(), 1)?;
    rescale_params(adapted.params.entries(), r, 0.4)?;
    let source = adapted.frozen_copy();
    // a distinct but nearby source
    for (_, p) in source.params.entries() {
        let v: Vec<f64> = p.to_vec().iter().map(|x| x + r.uniform_in(-0.1, 0.1)).collect();
        p.set_data(&v)?;
    }
    let mels: Vec<MelSpectrogram> = (0..3).map(|_| random_mel(r, cfg.mel_channels, 2)).collect();
    let cdc = CdcConfig {
        batch_size: 3,
        layer_indices: vec![0, 1],
        pooling,
        eps: 1e-8,
    };
    let ins: Vec<T> = adapted.params.tensors().cloned().collect();
    probe(r, ins, move |_| cdc_loss(&source, &adapted, &mels, &cdc))
}

/// Runs one case. `h` is the central-difference step.
pub fn check(case: &GradCase, seed: u64, h: f64, tolerance: f64) -> Result<CheckResult> {
    let mut rng = SplitMix64::stream(seed, case.name);
    let p = (case.setup)(&mut rng)?;
    for x in &p.inputs {
        x.zero_grad();
    }
    (p.eval)()?.backward()?;
    let grads: Vec<Vec<f64>> = p
        .inputs
        .iter()
        .map(|x| x.grad().unwrap_or_else(|| vec![0.0; x.numel()]))
        .collect();
    let gscale = grads.iter().flatten().fold(0f64, |m, g| m.max(g.abs()));
    let central = |x: &T, base: &[f64], i: usize, h: f64| -> Result<f64> {
        let mut v = base.to_vec();
        v[i] = base[i] + h;
        x.set_data(&v)?;
        let up = (p.eval)()?.item();
        v[i] = base[i] - h;
        x.set_data(&v)?;
        let down = (p.eval)()?.item();
        x.set_data(base)?;
        Ok((up - down) / (2.0 * h))
    };
    let (mut max_diff, mut max_a, mut max_n, mut probes, mut skipped) = (0f64, 0f64, 0f64, 0usize, 0usize);
    for (x, analytic) in p.inputs.iter().zip(&grads) {
        let n = x.numel();
        let full = n <= MAX_PROBES;
        let base = x.to_vec();
        let (mut taken, mut draws) = (0, 0);
        while taken < MAX_PROBES.min(n) && draws < 4 * MAX_PROBES {
            let i = if full { draws } else { rng.below(n) };
            draws += 1;
            if full && i >= n {
                break;
            }
            let numeric = central(x, &base, i, h)?;
            // a kink inside [x-h, x+h] makes the estimate depend on h
            let half = central(x, &base, i, 0.5 * h)?;
            if (numeric - half).abs() > KINK_FRACTION * tolerance * gscale.max(numeric.abs()) {
                skipped += 1;
                continue;
            }
            max_diff = max_diff.max((numeric - analytic[i]).abs());
            max_a = max_a.max(analytic[i].abs());
            max_n = max_n.max(numeric.abs());
            probes += 1;
            taken += 1;
        }
    }
    let scale = max_a.max(max_n);
    let rel_error = if scale > 0.0 { max_diff / scale } else { max_diff };
    if !rel_error.is_finite() {
        return Err(Error::NonFinite {
            op: case.name,
            phase: "gradcheck",
        });
    }
    Ok(CheckResult {
        name: case.name,
        module: case.module,
        rel_error,
        probes,
        skipped,
        passed: rel_error <= tolerance,
    })
}

pub fn module_names() -> Vec<&'static str> {
    let mut m: Vec<_> = registry().iter().map(|c| c.module).collect();
    m.dedup();
    m
}

/// Runs all cases whose module or name equals `filter` (`all` selects everything).
pub fn run(filter: &str, seed: u64, h: f64, tolerance: f64) -> Result<Vec<CheckResult>> {
    let cases: Vec<GradCase> = registry()
        .into_iter()
        .filter(|c| filter == "all" || c.module == filter || c.name == filter)
        .collect();
    if cases.is_empty() {
        return Err(Error::invalid(
            "gradcheck",
            format!("unknown module '{filter}'; known: all, {}", module_names().join(", ")),
        ));
    }
    cases.iter().map(|c| check(c, seed, h, tolerance)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::inject_gradient_fault;

    #[test]
    fn every_case_passes() {
        let res = run("all", 0, DEFAULT_STEP, DEFAULT_TOLERANCE).unwrap();
        let failed: Vec<_> = res.iter().filter(|r| !r.passed).collect();
        assert!(failed.is_empty(), "{failed:?}");
        assert!(res.iter().all(|r| r.probes > 0));
    }

    #[test]
    fn injected_fault_is_caught() {
        inject_gradient_fault(Some("conv1d"));
        let res = run("conv1d", 0, DEFAULT_STEP, DEFAULT_TOLERANCE);
        inject_gradient_fault(None);
        let r = &res.unwrap()[0];
        assert!(!r.passed);
        assert!(r.rel_error > 5e-3);
    }

    #[test]
    fn unknown_module_rejected() {
        assert!(run("nope", 0, DEFAULT_STEP, DEFAULT_TOLERANCE).is_err());
        assert!(module_names().contains(&"losses"));
    }
}
