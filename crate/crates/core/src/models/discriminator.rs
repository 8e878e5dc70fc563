use serde::{Deserialize, Serialize};

use super::{InitScheme, ParamBuilder, Params};
use crate::autodiff::conv::{avg_pool1d, conv1d, periodize, select_last, Conv1dSpec};
use crate::autodiff::ops::DEFAULT_LEAKY_SLOPE;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Shortest waveform every sub-discriminator accepts.
pub const MIN_AUDIO_LEN: usize = 4;
const MSD_SCALES: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscriminatorKind {
    Msd,
    Mpd,
    Combined,
}

impl DiscriminatorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DiscriminatorKind::Msd => "msd",
            DiscriminatorKind::Mpd => "mpd",
            DiscriminatorKind::Combined => "combined",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscriminatorConfig {
    pub kind: DiscriminatorKind,
    pub periods: Vec<usize>,
    /// Width of the first layer; deeper layers use 2× and 4× this.
    pub channels: usize,
    #[serde(default)]
    pub init: InitScheme,
}

impl DiscriminatorConfig {
    pub fn msd() -> Self {
        Self {
            kind: DiscriminatorKind::Msd,
            periods: vec![2, 3, 5, 7, 11],
            channels: 8,
            init: InitScheme::Normal,
        }
    }

    pub fn combined() -> Self {
        Self {
            kind: DiscriminatorKind::Combined,
            ..Self::msd()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 || self.channels % 2 != 0 {
            return Err(Error::Config(format!(
                "discriminator: channels {} must be even and >= 2",
                self.channels
            )));
        }
        if self.kind != DiscriminatorKind::Msd && (self.periods.is_empty() || self.periods.contains(&0)) {
            return Err(Error::Config("discriminator: periods must be positive and non-empty".into()));
        }
        Ok(())
    }

    fn has_mpd(&self) -> bool {
        self.kind != DiscriminatorKind::Msd
    }

    fn has_msd(&self) -> bool {
        self.kind != DiscriminatorKind::Mpd
    }
}

/// Logit map and post-activation hidden feature maps of one sub-discriminator.
pub struct SubOutput<F: Real> {
    pub logits: Tensor<F>,
    pub features: Vec<Tensor<F>>,
}

struct Layer {
    name: String,
    spec: Conv1dSpec,
}

fn msd_layers(prefix: &str, w: usize) -> Vec<(Layer, [usize; 3])> {
    let l = |i: usize, cout, cin_g, k, stride, padding, groups| {
        (
            Layer {
                name: format!("{prefix}.{i}"),
                spec: Conv1dSpec {
                    stride,
                    padding,
                    dilation: 1,
                    groups,
                },
            },
            [cout, cin_g, k],
        )
    };
    vec![
        l(0, w, 1, 15, 1, 7, 1),
        l(1, 2 * w, w / 2, 11, 4, 5, 2),
        l(2, 4 * w, 2 * w / 4, 11, 4, 5, 4),
        l(3, 4 * w, 4 * w, 5, 1, 2, 1),
        l(4, 1, 4 * w, 3, 1, 1, 1),
    ]
}

fn mpd_layers(prefix: &str, w: usize) -> Vec<(Layer, [usize; 3])> {
    let l = |i: usize, cout, cin, k, stride, padding| {
        (
            Layer {
                name: format!("{prefix}.{i}"),
                spec: Conv1dSpec {
                    stride,
                    padding,
                    ..Conv1dSpec::default()
                },
            },
            [cout, cin, k],
        )
    };
    vec![
        l(0, w, 1, 5, 3, 2),
        l(1, 2 * w, w, 5, 3, 2),
        l(2, 2 * w, 2 * w, 5, 1, 2),
        l(3, 1, 2 * w, 3, 1, 1),
    ]
}

enum Sub {
    Period(usize, Vec<Layer>),
    Scale(usize, Vec<Layer>),
}

pub struct DiscriminatorHandle<F: Real> {
    pub config: DiscriminatorConfig,
    pub params: Params<F>,
    subs: Vec<Sub>,
}

impl<F: Real> DiscriminatorHandle<F> {
    pub fn build(config: DiscriminatorConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut b = ParamBuilder::new(SplitMix64::stream(seed, "init.discriminator"), config.init);
        let mut subs = Vec::new();
        let mut add = |layers: Vec<(Layer, [usize; 3])>| -> Result<Vec<Layer>> {
            let mut out = Vec::with_capacity(layers.len());
            for (layer, shape) in layers {
                b.conv(&layer.name, shape, shape[0], shape[1] * shape[2])?;
                out.push(layer);
            }
            Ok(out)
        };
        if config.has_mpd() {
            for &p in &config.periods {
                subs.push(Sub::Period(p, add(mpd_layers(&format!("mpd.p{p}"), config.channels))?));
            }
        }
        if config.has_msd() {
            for s in 0..MSD_SCALES {
                subs.push(Sub::Scale(s, add(msd_layers(&format!("msd.s{s}"), config.channels))?));
            }
        }
        Ok(Self {
            config,
            params: b.finish(),
            subs,
        })
    }

    pub fn sub_count(&self) -> usize {
        self.subs.len()
    }

    pub fn freeze(&self) {
        self.params.set_requires_grad(false);
    }

    pub fn unfreeze(&self) {
        self.params.set_requires_grad(true);
    }

    fn conv(&self, x: &Tensor<F>, layer: &Layer) -> Result<Tensor<F>> {
        conv1d(
            x,
            self.params.req(&format!("{}.weight", layer.name)),
            Some(self.params.req(&format!("{}.bias", layer.name))),
            layer.spec,
        )
    }

    fn stack(&self, x: &Tensor<F>, layers: &[Layer], feats: &mut Vec<Tensor<F>>) -> Result<Tensor<F>> {
        let (last, hidden) = layers.split_last().expect("layer list is non-empty");
        let mut h = x.clone();
        for layer in hidden {
            h = self.conv(&h, layer)?.leaky_relu(DEFAULT_LEAKY_SLOPE)?;
            feats.push(h.clone());
        }
        self.conv(&h, last)
    }

    /// Runs every sub-discriminator on `audio [1 × L]`. Order: MPD periods
    /// as configured, then MSD scales ×1, ×2, ×4.
    pub fn discriminate(&self, audio: &Tensor<F>) -> Result<Vec<SubOutput<F>>> {
        let len = match audio.shape() {
            [1, l] => *l,
            s => return Err(Error::shape("discriminate", format!("expected [1 × L], got {s:?}"))),
        };
        if len < MIN_AUDIO_LEN {
            return Err(Error::invalid(
                "discriminate",
                format!("audio length {len} below minimum {MIN_AUDIO_LEN}"),
            ));
        }
        let mut pooled = vec![audio.clone()];
        if self.config.has_msd() {
            for _ in 1..MSD_SCALES {
                let next = avg_pool1d(pooled.last().unwrap(), 4, 2, 1)?;
                pooled.push(next);
            }
        }
        let mut out = Vec::with_capacity(self.subs.len());
        for sub in &self.subs {
            match sub {
                Sub::Scale(s, layers) => {
                    let mut features = Vec::new();
                    let logits = self.stack(&pooled[*s], layers, &mut features)?;
                    out.push(SubOutput { logits, features });
                }
                Sub::Period(p, layers) => {
                    // each phase column is one independent 1-D signal sharing
                    // the weights; maps are concatenated along time
                    let folded = periodize(audio, *p)?;
                    let n_hidden = layers.len() - 1;
                    let mut per_layer: Vec<Vec<Tensor<F>>> = vec![Vec::with_capacity(*p); n_hidden];
                    let mut logits = Vec::with_capacity(*p);
                    for j in 0..*p {
                        let col = select_last(&folded, j)?;
                        let mut feats = Vec::with_capacity(n_hidden);
                        logits.push(self.stack(&col, layers, &mut feats)?);
                        for (l, f) in feats.into_iter().enumerate() {
                            per_layer[l].push(f);
                        }
                    }
                    out.push(SubOutput {
                        logits: Tensor::concat_last(&logits)?,
                        features: per_layer
                            .iter()
                            .map(|fs| Tensor::concat_last(fs))
                            .collect::<Result<_>>()?,
                    });
                }
            }
        }
        Ok(out)
    }
}
