//! Run configuration: one TOML document with sections `dsp`, `model`,
//! `train`, `finetune`, `cdc`, `data` and `eval`. Every key is optional and
//! unknown keys are rejected. See `config/default.toml` for the annotated
//! defaults.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::DspConfig;
use crate::data::{CorpusConfig, SpeakerSpec};
use crate::error::{Error, Result};
use crate::losses::{CdcConfig, LossWeights, Pooling};
use crate::models::{DiscriminatorConfig, DiscriminatorKind, GeneratorConfig, GeneratorKind, InitScheme};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: GeneratorKind,
    pub upsample_strides: Option<Vec<usize>>,
    pub base_channels: Option<usize>,
    pub resblock_kernels: Option<Vec<usize>>,
    pub resblock_dilations: Option<Vec<usize>>,
    /// Defaults to `msd` for melgan_like and `combined` for hifigan_like.
    pub discriminator: Option<DiscriminatorKind>,
    pub disc_channels: usize,
    pub periods: Vec<usize>,
    pub init: InitScheme,
    pub lambda_cd: Option<f64>,
    pub lambda_fm: Option<f64>,
    pub lambda_mel: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::MelganLike,
            upsample_strides: None,
            base_channels: None,
            resblock_kernels: None,
            resblock_dilations: None,
            discriminator: None,
            disc_channels: 8,
            periods: vec![2, 3, 5, 7, 11],
            init: InitScheme::FanIn,
            lambda_cd: None,
            lambda_fm: None,
            lambda_mel: None,
        }
    }
}

impl ModelSection {
    pub fn generator(&self, n_mels: usize) -> GeneratorConfig {
        let mut g = GeneratorConfig::for_kind(self.kind);
        g.mel_channels = n_mels;
        g.init = self.init;
        if let Some(s) = &self.upsample_strides {
            g.upsample_strides = s.clone();
        }
        if let Some(c) = self.base_channels {
            g.base_channels = c;
        }
        if let Some(k) = &self.resblock_kernels {
            g.resblock_kernels = k.clone();
        }
        if let Some(d) = &self.resblock_dilations {
            g.resblock_dilations = d.clone();
        }
        g
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        DiscriminatorConfig {
            kind: self.discriminator.unwrap_or(match self.kind {
                GeneratorKind::MelganLike => DiscriminatorKind::Msd,
                GeneratorKind::HifiganLike => DiscriminatorKind::Combined,
            }),
            periods: self.periods.clone(),
            channels: self.disc_channels,
            init: self.init,
        }
    }

    pub fn weights(&self) -> LossWeights {
        let d = LossWeights::for_kind(self.kind);
        LossWeights {
            lambda_cd: self.lambda_cd.unwrap_or(d.lambda_cd),
            lambda_fm: self.lambda_fm.unwrap_or(d.lambda_fm),
            lambda_mel: self.lambda_mel.unwrap_or(d.lambda_mel),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub crop_frames: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Intermediate checkpoint every N steps; 0 disables.
    pub checkpoint_interval: usize,
    pub log_interval: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            steps: 20_000,
            batch_size: 1,
            crop_frames: 16,
            lr_gen: 1e-4,
            lr_disc: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            adam_eps: 1e-8,
            seed: 0,
            checkpoint_interval: 0,
            log_interval: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CdcPool {
    Source,
    Target,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    pub steps: usize,
    /// Start the discriminator from the source checkpoint rather than afresh.
    pub discriminator_from_source: bool,
    /// Continue the stored Adam moments rather than starting them at zero.
    pub resume_optimizer: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        Self {
            steps: 2_000,
            discriminator_from_source: true,
            resume_optimizer: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CdcSection {
    pub batch_size: usize,
    pub layer_indices: Vec<usize>,
    pub pooling: Pooling,
    pub eps: f64,
    pub pool: CdcPool,
}

impl Default for CdcSection {
    fn default() -> Self {
        let c = CdcConfig::default();
        Self {
            batch_size: c.batch_size,
            layer_indices: c.layer_indices,
            pooling: c.pooling,
            eps: c.eps,
            pool: CdcPool::Source,
        }
    }
}

impl CdcSection {
    pub fn cdc_config(&self) -> CdcConfig {
        CdcConfig {
            batch_size: self.batch_size,
            layer_indices: self.layer_indices.clone(),
            pooling: self.pooling,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub seed: u64,
    pub source_speakers: usize,
    pub utterances_per_speaker: usize,
    pub target_utterances: usize,
    pub target_train: usize,
    pub utterance_seconds: f64,
    pub source_test_fraction: f64,
    pub noise_floor: f64,
    pub target: SpeakerSpec,
}

impl Default for DataSection {
    fn default() -> Self {
        let c = CorpusConfig::default();
        Self {
            seed: 0,
            source_speakers: c.source_speakers,
            utterances_per_speaker: c.utterances_per_speaker,
            target_utterances: c.target_utterances,
            target_train: c.target_train,
            utterance_seconds: c.utterance_seconds,
            source_test_fraction: c.source_test_fraction,
            noise_floor: c.noise_floor,
            target: c.target,
        }
    }
}

impl DataSection {
    pub fn corpus(&self) -> CorpusConfig {
        CorpusConfig {
            source_speakers: self.source_speakers,
            utterances_per_speaker: self.utterances_per_speaker,
            target_utterances: self.target_utterances,
            target_train: self.target_train,
            utterance_seconds: self.utterance_seconds,
            source_test_fraction: self.source_test_fraction,
            noise_floor: self.noise_floor,
            target: self.target.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub fft_sizes: Vec<usize>,
    pub mag_floor: f64,
    pub mcd_order: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            fft_sizes: vec![512, 1024, 2048],
            mag_floor: 1e-7,
            mcd_order: 13,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub dsp: DspConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
    pub cdc: CdcSection,
    pub data: DataSection,
    pub eval: EvalConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serialises")
    }

    pub fn generator(&self) -> GeneratorConfig {
        self.model.generator(self.dsp.n_mels)
    }

    pub fn discriminator(&self) -> DiscriminatorConfig {
        self.model.discriminator()
    }

    pub fn weights(&self) -> LossWeights {
        self.model.weights()
    }

    pub fn validate(&self) -> Result<()> {
        self.dsp.validate()?;
        let g = self.generator();
        g.validate()?;
        let hop_product: usize = g.upsample_strides.iter().product();
        if hop_product != self.dsp.hop_length {
            return Err(Error::Config(format!(
                "generator upsampling {hop_product} must equal dsp.hop_length {}",
                self.dsp.hop_length
            )));
        }
        self.discriminator().validate()?;
        self.weights().validate()?;
        self.cdc.cdc_config().validate(g.upsample_strides.len())?;
        let t = &self.train;
        if t.steps == 0 || t.batch_size == 0 || t.crop_frames == 0 || t.log_interval == 0 {
            return Err(Error::Config("train: steps, batch_size, crop_frames and log_interval must be >= 1".into()));
        }
        if !(t.lr_gen > 0.0 && t.lr_disc > 0.0 && (0.0..1.0).contains(&t.beta1) && (0.0..1.0).contains(&t.beta2) && t.adam_eps > 0.0) {
            return Err(Error::Config("train: invalid optimizer hyperparameters".into()));
        }
        if self.finetune.steps == 0 {
            return Err(Error::Config("finetune.steps must be >= 1".into()));
        }
        if self.eval.fft_sizes.is_empty() || self.eval.fft_sizes.iter().any(|n| !n.is_power_of_two()) {
            return Err(Error::Config("eval.fft_sizes must be non-empty powers of two".into()));
        }
        if self.eval.mcd_order == 0 || self.eval.mcd_order >= self.dsp.n_mels {
            return Err(Error::Config("eval.mcd_order must be in 1..n_mels".into()));
        }
        if !(self.eval.mag_floor > 0.0) {
            return Err(Error::Config("eval.mag_floor must be positive".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_valid_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        let mut g = GeneratorConfig::melgan_like();
        g.init = InitScheme::FanIn;
        assert_eq!(c.generator(), g);
        assert_eq!(c.discriminator().kind, DiscriminatorKind::Msd);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml_str("[train]\nstepz = 3\n").is_err());
        assert!(RunConfig::from_toml_str("[nope]\n").is_err());
        assert!(RunConfig::from_toml_str("[data]\nbogus = 1\n").is_err());
    }

    #[test]
    fn overrides_and_round_trip() {
        let c = RunConfig::from_toml_str("[model]\nkind = \"hifigan_like\"\nlambda_mel = 10.0\n[train]\nsteps = 7\n").unwrap();
        assert_eq!(c.train.steps, 7);
        assert_eq!(c.weights().lambda_mel, 10.0);
        assert_eq!(c.weights().lambda_fm, 2.0);
        assert_eq!(c.discriminator().kind, DiscriminatorKind::Combined);
        assert_eq!(RunConfig::from_toml_str(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn inconsistent_hop_rejected() {
        assert!(RunConfig::from_toml_str("[dsp]\nhop_length = 128\n").is_err());
    }
}
