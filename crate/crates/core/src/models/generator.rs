use serde::{Deserialize, Serialize};

use super::{mel_tensor, InitScheme, ParamBuilder, Params};
use crate::audio::MelSpectrogram;
use crate::autodiff::conv::{conv1d, conv_transpose1d, Conv1dSpec};
use crate::autodiff::ops::DEFAULT_LEAKY_SLOPE;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Total upsampling of every generator; equals the STFT hop.
pub const HOP_FACTOR: usize = 256;
const MIN_CHANNELS: usize = 4;
const IO_KERNEL: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    MelganLike,
    HifiganLike,
}

impl GeneratorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GeneratorKind::MelganLike => "melgan_like",
            GeneratorKind::HifiganLike => "hifigan_like",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "melgan_like" | "melgan" => Ok(GeneratorKind::MelganLike),
            "hifigan_like" | "hifigan" => Ok(GeneratorKind::HifiganLike),
            other => Err(Error::Config(format!("unknown model kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub upsample_strides: Vec<usize>,
    pub base_channels: usize,
    pub mel_channels: usize,
    /// One residual branch per kernel size; melgan_like uses exactly one.
    pub resblock_kernels: Vec<usize>,
    pub resblock_dilations: Vec<usize>,
    #[serde(default)]
    pub init: InitScheme,
}

impl GeneratorConfig {
    pub fn melgan_like() -> Self {
        Self {
            kind: GeneratorKind::MelganLike,
            upsample_strides: vec![8, 8, 2, 2],
            base_channels: 32,
            mel_channels: 80,
            resblock_kernels: vec![3],
            resblock_dilations: vec![1, 3, 9],
            init: InitScheme::Normal,
        }
    }

    pub fn hifigan_like() -> Self {
        Self {
            kind: GeneratorKind::HifiganLike,
            upsample_strides: vec![8, 8, 2, 2],
            base_channels: 64,
            mel_channels: 80,
            resblock_kernels: vec![3, 7],
            resblock_dilations: vec![1, 3, 5],
            init: InitScheme::Normal,
        }
    }

    pub fn for_kind(kind: GeneratorKind) -> Self {
        match kind {
            GeneratorKind::MelganLike => Self::melgan_like(),
            GeneratorKind::HifiganLike => Self::hifigan_like(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("generator: {m}")));
        if self.upsample_strides.is_empty() {
            return bad("upsample_strides is empty".into());
        }
        let prod: usize = self.upsample_strides.iter().product();
        if prod != HOP_FACTOR {
            return bad(format!("product of upsample_strides is {prod}, must be {HOP_FACTOR}"));
        }
        if let Some(s) = self.upsample_strides.iter().find(|&&s| s < 2 || s % 2 != 0) {
            return bad(format!("stride {s} must be even and >= 2"));
        }
        if self.base_channels < MIN_CHANNELS || self.mel_channels == 0 {
            return bad(format!("base_channels must be >= {MIN_CHANNELS} and mel_channels > 0"));
        }
        if self.resblock_kernels.is_empty() || self.resblock_kernels.iter().any(|&k| k % 2 == 0) {
            return bad("resblock kernels must be odd and non-empty".into());
        }
        if self.kind == GeneratorKind::MelganLike && self.resblock_kernels.len() != 1 {
            return bad("melgan_like takes a single residual kernel size".into());
        }
        if self.resblock_dilations.is_empty() || self.resblock_dilations.contains(&0) {
            return bad("resblock dilations must be positive and non-empty".into());
        }
        Ok(())
    }

    /// Channel width after each upsampling stage: halved per stage, floored at 4.
    pub fn stage_channels(&self) -> Vec<usize> {
        let mut c = self.base_channels;
        self.upsample_strides
            .iter()
            .map(|_| {
                c = (c / 2).max(MIN_CHANNELS);
                c
            })
            .collect()
    }
}

/// Generator parameters plus the architecture that consumes them.
#[derive(Clone)]
pub struct GeneratorHandle<F: Real> {
    pub config: GeneratorConfig,
    pub params: Params<F>,
}

impl<F: Real> GeneratorHandle<F> {
    pub fn build(config: GeneratorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = ParamBuilder::new(SplitMix64::stream(seed, "init.generator"), config.init);
        let base = config.base_channels;
        b.conv("conv_pre", [base, config.mel_channels, IO_KERNEL], base, config.mel_channels * IO_KERNEL)?;
        let mut cin = base;
        for (i, (&s, &cout)) in config.upsample_strides.iter().zip(&config.stage_channels()).enumerate() {
            b.conv(&format!("ups.{i}"), [cin, cout, 2 * s], cout, 2 * cin)?;
            for (r, &k) in config.resblock_kernels.iter().enumerate() {
                for j in 0..config.resblock_dilations.len() {
                    let p = format!("stages.{i}.res.{r}.{j}");
                    match config.kind {
                        GeneratorKind::MelganLike => {
                            b.conv(&format!("{p}.dil"), [cout, cout, k], cout, cout * k)?;
                            b.conv(&format!("{p}.proj"), [cout, cout, 1], cout, cout)?;
                        }
                        GeneratorKind::HifiganLike => {
                            b.conv(&format!("{p}.conv1"), [cout, cout, k], cout, cout * k)?;
                            b.conv(&format!("{p}.conv2"), [cout, cout, k], cout, cout * k)?;
                        }
                    }
                }
            }
            cin = cout;
        }
        b.conv("conv_post", [1, cin, IO_KERNEL], 1, cin * IO_KERNEL)?;
        Ok(Self {
            config,
            params: b.finish(),
        })
    }

    pub fn kind(&self) -> GeneratorKind {
        self.config.kind
    }

    pub fn param_count(&self) -> usize {
        self.params.numel()
    }

    pub fn tap_count(&self) -> usize {
        self.config.upsample_strides.len()
    }

    /// Stops gradient accumulation into every parameter.
    pub fn freeze(&self) {
        self.params.set_requires_grad(false);
    }

    pub fn unfreeze(&self) {
        self.params.set_requires_grad(true);
    }

    /// Independent copy whose parameters never receive gradients.
    pub fn frozen_copy(&self) -> Self {
        Self {
            config: self.config.clone(),
            params: self.params.deep_copy(false),
        }
    }

    pub fn generate(&self, mel: &MelSpectrogram) -> Result<Tensor<F>> {
        Ok(self.forward(&mel_tensor(mel)?)?.0)
    }

    pub fn generate_with_taps(&self, mel: &MelSpectrogram) -> Result<(Tensor<F>, Vec<Tensor<F>>)> {
        self.forward(&mel_tensor(mel)?)
    }

    /// `mel [n_mels × T]` → (`waveform [1 × 256·T]`, one tap per upsampling
    /// stage). A tap is the activated stage output, i.e. the exact tensor the
    /// next layer consumes.
    pub fn forward(&self, mel: &Tensor<F>) -> Result<(Tensor<F>, Vec<Tensor<F>>)> {
        let cfg = &self.config;
        match mel.shape() {
            [c, t] if *c == cfg.mel_channels && *t > 0 => {}
            s => {
                return Err(Error::shape(
                    "generate",
                    format!("mel {s:?} does not match {} mel channels", cfg.mel_channels),
                ))
            }
        }
        let p = &self.params;
        let conv = |x: &Tensor<F>, name: &str, spec: Conv1dSpec| {
            conv1d(x, p.req(&format!("{name}.weight")), Some(p.req(&format!("{name}.bias"))), spec)
        };
        let lrelu = |x: &Tensor<F>| x.leaky_relu(DEFAULT_LEAKY_SLOPE);
        let mut x = conv(mel, "conv_pre", Conv1dSpec::padded(IO_KERNEL / 2))?;
        let mut taps = Vec::with_capacity(cfg.upsample_strides.len());
        for (i, &s) in cfg.upsample_strides.iter().enumerate() {
            let w = p.req(&format!("ups.{i}.weight"));
            let bias = p.req(&format!("ups.{i}.bias"));
            x = conv_transpose1d(&lrelu(&x)?, w, Some(bias), s, s / 2)?;
            x = match cfg.kind {
                GeneratorKind::MelganLike => {
                    let k = cfg.resblock_kernels[0];
                    for (j, &d) in cfg.resblock_dilations.iter().enumerate() {
                        let name = format!("stages.{i}.res.0.{j}");
                        let spec = Conv1dSpec {
                            padding: d * (k - 1) / 2,
                            dilation: d,
                            ..Conv1dSpec::default()
                        };
                        let h = conv(&lrelu(&x)?, &format!("{name}.dil"), spec)?;
                        let h = conv(&lrelu(&h)?, &format!("{name}.proj"), Conv1dSpec::default())?;
                        x = x.add(&h)?;
                    }
                    x
                }
                GeneratorKind::HifiganLike => {
                    let mut branches = Vec::with_capacity(cfg.resblock_kernels.len());
                    for (r, &k) in cfg.resblock_kernels.iter().enumerate() {
                        let mut y = x.clone();
                        for (j, &d) in cfg.resblock_dilations.iter().enumerate() {
                            let name = format!("stages.{i}.res.{r}.{j}");
                            let spec = Conv1dSpec {
                                padding: d * (k - 1) / 2,
                                dilation: d,
                                ..Conv1dSpec::default()
                            };
                            let h = conv(&lrelu(&y)?, &format!("{name}.conv1"), spec)?;
                            let h = conv(&lrelu(&h)?, &format!("{name}.conv2"), Conv1dSpec::padded((k - 1) / 2))?;
                            y = y.add(&h)?;
                        }
                        branches.push(y);
                    }
                    crate::autodiff::ops::sum_all(&branches)?.scalar_mul(1.0 / branches.len() as f64)?
                }
            };
            x = lrelu(&x)?;
            taps.push(x.clone());
        }
        let out = conv(&x, "conv_post", Conv1dSpec::padded(IO_KERNEL / 2))?.tanh()?;
        Ok((out, taps))
    }
}
