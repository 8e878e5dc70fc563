//! Toy GAN vocoders: two generator families and the multi-scale /
//! multi-period discriminators.

mod discriminator;
mod generator;

pub use discriminator::{DiscriminatorConfig, DiscriminatorHandle, DiscriminatorKind, SubOutput};
pub use generator::{GeneratorConfig, GeneratorHandle, GeneratorKind, HOP_FACTOR};

use serde::{Deserialize, Serialize};

use crate::audio::MelSpectrogram;
use crate::autodiff::checkpoint::NamedArray;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::rng::SplitMix64;

pub const INIT_STD: f64 = 0.02;

/// Weight initialisation. `normal` draws N(0, 0.02²) everywhere; `fan_in`
/// draws N(0, 1/fan_in) so narrow layers keep unit-order activations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    #[default]
    Normal,
    FanIn,
}

/// Ordered, named parameter list of one model.
#[derive(Clone)]
pub struct Params<F: Real> {
    entries: Vec<(String, Tensor<F>)>,
}

impl<F: Real> Default for Params<F> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<F: Real> Params<F> {
    pub fn get(&self, name: &str) -> Option<&Tensor<F>> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub(crate) fn req(&self, name: &str) -> &Tensor<F> {
        self.get(name)
            .unwrap_or_else(|| panic!("parameter '{name}' missing from a model built by this crate"))
    }

    pub fn entries(&self) -> &[(String, Tensor<F>)] {
        &self.entries
    }

    pub fn tensors(&self) -> impl Iterator<Item = &Tensor<F>> {
        self.entries.iter().map(|(_, t)| t)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn numel(&self) -> usize {
        self.tensors().map(Tensor::numel).sum()
    }

    pub fn set_requires_grad(&self, flag: bool) {
        for t in self.tensors() {
            t.set_requires_grad(flag);
        }
    }

    pub fn zero_grad(&self) {
        for t in self.tensors() {
            t.zero_grad();
        }
    }

    /// Independent copy of every value in fresh leaves.
    pub fn deep_copy(&self, requires_grad: bool) -> Self {
        let entries = self
            .entries
            .iter()
            .map(|(n, t)| {
                let shape = t.shape().to_vec();
                let data = t.to_vec();
                let copy = if requires_grad {
                    Tensor::param(&shape, data)
                } else {
                    Tensor::constant(&shape, data)
                };
                (n.clone(), copy.expect("shape copied from a valid tensor"))
            })
            .collect();
        Self { entries }
    }

    pub fn export(&self, prefix: &str) -> Vec<NamedArray> {
        self.entries
            .iter()
            .map(|(n, t)| NamedArray {
                name: format!("{prefix}{n}"),
                shape: t.shape().to_vec(),
                data: t.data().iter().map(|v| v.as_f64() as f32).collect(),
            })
            .collect()
    }

    /// Overwrites every parameter from `arrays[prefix + name]`.
    pub fn import(&self, arrays: &[NamedArray], prefix: &str) -> Result<()> {
        let expected = arrays.iter().filter(|a| a.name.starts_with(prefix)).count();
        if expected != self.entries.len() {
            return Err(Error::Checkpoint(format!(
                "'{prefix}*' holds {expected} arrays, model has {} parameters",
                self.entries.len()
            )));
        }
        for (n, t) in &self.entries {
            let full = format!("{prefix}{n}");
            let a = arrays
                .iter()
                .find(|a| a.name == full)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter '{full}'")))?;
            if a.shape != t.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter '{full}' has shape {:?}, model expects {:?}",
                    a.shape,
                    t.shape()
                )));
            }
            let vals: Vec<F> = a.data.iter().map(|&v| F::lit(v as f64)).collect();
            t.set_data(&vals)?;
        }
        Ok(())
    }

    pub fn values_equal(&self, other: &Self) -> bool {
        self.entries.len() == other.entries.len()
            && self
                .entries
                .iter()
                .zip(&other.entries)
                .all(|((na, a), (nb, b))| na == nb && a.shape() == b.shape() && *a.data() == *b.data())
    }
}

/// Draws normal weights and zero biases in declaration order.
pub(crate) struct ParamBuilder<F: Real> {
    rng: SplitMix64,
    scheme: InitScheme,
    params: Params<F>,
}

impl<F: Real> ParamBuilder<F> {
    pub fn new(rng: SplitMix64, scheme: InitScheme) -> Self {
        Self {
            rng,
            scheme,
            params: Params::default(),
        }
    }

    pub fn weight(&mut self, name: String, shape: &[usize], fan_in: usize) -> Result<()> {
        let n: usize = shape.iter().product();
        let std = match self.scheme {
            InitScheme::Normal => INIT_STD,
            InitScheme::FanIn => 1.0 / (fan_in.max(1) as f64).sqrt(),
        };
        let data = (0..n).map(|_| F::lit(self.rng.normal() * std)).collect();
        self.push(name, shape, data)
    }

    pub fn bias(&mut self, name: String, len: usize) -> Result<()> {
        self.push(name, &[len], vec![F::zero(); len])
    }

    /// Weight plus bias `[bias_len]` under `name.weight` / `name.bias`.
    pub fn conv(&mut self, name: &str, shape: [usize; 3], bias_len: usize, fan_in: usize) -> Result<()> {
        self.weight(format!("{name}.weight"), &shape, fan_in)?;
        self.bias(format!("{name}.bias"), bias_len)
    }

    fn push(&mut self, name: String, shape: &[usize], data: Vec<F>) -> Result<()> {
        let t = Tensor::param(shape, data)?;
        self.params.entries.push((name, t));
        Ok(())
    }

    pub fn finish(self) -> Params<F> {
        self.params
    }
}

/// Conditioning tensor `[n_mels × T]` (no gradient).
pub fn mel_tensor<F: Real>(mel: &MelSpectrogram) -> Result<Tensor<F>> {
    Tensor::constant(
        &[mel.n_mels, mel.frames],
        mel.values.iter().map(|&v| F::lit(v as f64)).collect(),
    )
}

/// Waveform tensor `[1 × L]` (no gradient).
pub fn audio_tensor<F: Real>(samples: &[f32]) -> Result<Tensor<F>> {
    Tensor::constant(&[1, samples.len()], samples.iter().map(|&v| F::lit(v as f64)).collect())
}
