//! Adversarial, feature-matching, mel and distance-consistency objectives.
//!
//! The hinge losses use the minimisation form `max(0, 1 ∓ D)`. Printed as
//! `min(0, 1 ∓ D)` inside a max over D this is the same objective; minimising
//! the min-form directly would be degenerate.

use serde::{Deserialize, Serialize};

use crate::audio::{mel_filterbank, DspConfig, MelSpectrogram, StftPlan};
use crate::autodiff::ops::sum_all;
use crate::autodiff::prob::{cosine_similarity, kl_divergence, softmax};
use crate::autodiff::spectral::log_mel;
use crate::autodiff::{Real, Tensor};
use crate::error::{Error, Result};
use crate::models::{mel_tensor, GeneratorHandle, GeneratorKind};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_cd: f64,
    pub lambda_fm: f64,
    pub lambda_mel: f64,
}

impl LossWeights {
    pub fn for_kind(kind: GeneratorKind) -> Self {
        match kind {
            GeneratorKind::MelganLike => Self {
                lambda_cd: 1e3,
                lambda_fm: 10.0,
                lambda_mel: 0.0,
            },
            GeneratorKind::HifiganLike => Self {
                lambda_cd: 1e3,
                lambda_fm: 2.0,
                lambda_mel: 45.0,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.lambda_cd, self.lambda_fm, self.lambda_mel];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!("loss weights must be finite and >= 0, got {all:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    Flatten,
    TemporalMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdcConfig {
    /// N+1 mels per distance-consistency batch.
    pub batch_size: usize,
    pub layer_indices: Vec<usize>,
    pub pooling: Pooling,
    pub eps: f64,
}

impl Default for CdcConfig {
    fn default() -> Self {
        Self {
            batch_size: 4,
            layer_indices: vec![0, 1, 2, 3],
            pooling: Pooling::TemporalMean,
            eps: 1e-8,
        }
    }
}

impl CdcConfig {
    pub fn validate(&self, tap_count: usize) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("cdc.batch_size must be >= 2, got {}", self.batch_size)));
        }
        if self.layer_indices.is_empty() {
            return Err(Error::Config("cdc.layer_indices is empty".into()));
        }
        if let Some(l) = self.layer_indices.iter().find(|&&l| l >= tap_count) {
            return Err(Error::Config(format!("cdc layer index {l} out of range for {tap_count} taps")));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("cdc.eps must be positive".into()));
        }
        Ok(())
    }
}

fn nonempty<F: Real>(op: &'static str, logits: &[Tensor<F>]) -> Result<()> {
    if logits.is_empty() {
        Err(Error::invalid(op, "no sub-discriminator outputs"))
    } else {
        Ok(())
    }
}

/// `Σ_k mean(max(0, 1 − D_k(x))) + mean(max(0, 1 + D_k(G(m))))`.
pub fn hinge_disc_loss<F: Real>(real: &[Tensor<F>], fake: &[Tensor<F>]) -> Result<Tensor<F>> {
    nonempty("hinge_disc_loss", real)?;
    if real.len() != fake.len() {
        return Err(Error::shape("hinge_disc_loss", format!("{} real vs {} fake", real.len(), fake.len())));
    }
    let mut terms = Vec::with_capacity(2 * real.len());
    for (r, f) in real.iter().zip(fake) {
        terms.push(r.neg()?.add_scalar(1.0)?.relu()?.mean()?);
        terms.push(f.add_scalar(1.0)?.relu()?.mean()?);
    }
    sum_all(&terms)
}

/// `Σ_k mean(−D_k(G(m)))`.
pub fn hinge_gen_loss<F: Real>(fake: &[Tensor<F>]) -> Result<Tensor<F>> {
    nonempty("hinge_gen_loss", fake)?;
    sum_all(&fake.iter().map(|f| f.neg()?.mean()).collect::<Result<Vec<_>>>()?)
}

/// `Σ_k mean((D_k(x) − 1)²) + mean(D_k(G(m))²)`.
pub fn lsgan_disc_loss<F: Real>(real: &[Tensor<F>], fake: &[Tensor<F>]) -> Result<Tensor<F>> {
    nonempty("lsgan_disc_loss", real)?;
    if real.len() != fake.len() {
        return Err(Error::shape("lsgan_disc_loss", format!("{} real vs {} fake", real.len(), fake.len())));
    }
    let mut terms = Vec::with_capacity(2 * real.len());
    for (r, f) in real.iter().zip(fake) {
        terms.push(r.add_scalar(-1.0)?.square()?.mean()?);
        terms.push(f.square()?.mean()?);
    }
    sum_all(&terms)
}

/// `Σ_k mean((D_k(G(m)) − 1)²)`.
pub fn lsgan_gen_loss<F: Real>(fake: &[Tensor<F>]) -> Result<Tensor<F>> {
    nonempty("lsgan_gen_loss", fake)?;
    sum_all(&fake.iter().map(|f| f.add_scalar(-1.0)?.square()?.mean()).collect::<Result<Vec<_>>>()?)
}

/// Mean over sub-discriminators of `Σ_layers mean|real − fake|`.
pub fn feature_matching_loss<F: Real>(real: &[Vec<Tensor<F>>], fake: &[Vec<Tensor<F>>]) -> Result<Tensor<F>> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::shape(
            "feature_matching_loss",
            format!("{} real vs {} fake sub-discriminators", real.len(), fake.len()),
        ));
    }
    let mut per_sub = Vec::with_capacity(real.len());
    for (k, (r, f)) in real.iter().zip(fake).enumerate() {
        if r.is_empty() || r.len() != f.len() {
            return Err(Error::shape(
                "feature_matching_loss",
                format!("sub-discriminator {k}: {} vs {} layers", r.len(), f.len()),
            ));
        }
        let layers = r
            .iter()
            .zip(f)
            .map(|(a, b)| a.sub(b)?.abs()?.mean())
            .collect::<Result<Vec<_>>>()?;
        per_sub.push(sum_all(&layers)?);
    }
    sum_all(&per_sub)?.scalar_mul(1.0 / real.len() as f64)
}

/// Differentiable log-mel of a waveform with a cached STFT plan and filterbank.
pub struct MelLoss<F: Real> {
    plan: StftPlan<F>,
    filterbank: Tensor<F>,
    config: DspConfig,
}

impl<F: Real> MelLoss<F> {
    pub fn new(config: &DspConfig) -> Result<Self> {
        let fb = mel_filterbank(config)?;
        Ok(Self {
            plan: StftPlan::new(config)?,
            filterbank: Tensor::constant(
                &[config.n_mels, config.n_freq()],
                fb.into_iter().map(F::lit).collect(),
            )?,
            config: config.clone(),
        })
    }

    pub fn log_mel(&self, waveform: &Tensor<F>) -> Result<Tensor<F>> {
        log_mel(waveform, &self.plan, &self.filterbank, self.config.log_floor)
    }

    /// Mean L1 between the log-mel of `generated [1 × hop·T]` and `target`.
    pub fn loss(&self, generated: &Tensor<F>, target: &MelSpectrogram) -> Result<Tensor<F>> {
        let want = self.config.hop_length * target.frames;
        if generated.numel() != want || target.n_mels != self.config.n_mels {
            return Err(Error::shape(
                "mel_recon_loss",
                format!(
                    "waveform of {} samples vs mel {}×{} (expects {want} samples)",
                    generated.numel(),
                    target.n_mels,
                    target.frames
                ),
            ));
        }
        self.log_mel(generated)?.sub(&mel_tensor(target)?)?.abs()?.mean()
    }
}

pub fn mel_recon_loss<F: Real>(generated: &Tensor<F>, target: &MelSpectrogram, config: &DspConfig) -> Result<Tensor<F>> {
    MelLoss::new(config)?.loss(generated, target)
}

fn pool<F: Real>(act: &Tensor<F>, pooling: Pooling) -> Result<Tensor<F>> {
    match pooling {
        Pooling::TemporalMean => act.mean_axis(act.rank() - 1),
        Pooling::Flatten => act.flatten(),
    }
}

/// Per configured layer and anchor, the softmax over `sim(i, j)`, `j ≠ i`.
pub type Distributions<F> = Vec<Vec<Tensor<F>>>;

fn distributions_of<F: Real>(acts: &[Vec<Tensor<F>>], cfg: &CdcConfig) -> Result<Distributions<F>> {
    let n = acts.len();
    if n < 2 {
        return Err(Error::invalid("cdc_distributions", format!("need at least 2 items, got {n}")));
    }
    let mut out = Vec::with_capacity(cfg.layer_indices.len());
    for &l in &cfg.layer_indices {
        let mut pooled = Vec::with_capacity(n);
        for (i, item) in acts.iter().enumerate() {
            let a = item.get(l).ok_or_else(|| {
                Error::invalid("cdc_distributions", format!("item {i} has no activation at layer {l}"))
            })?;
            if a.shape() != acts[0][l].shape() {
                return Err(Error::shape(
                    "cdc_distributions",
                    format!("layer {l}: item {i} {:?} vs item 0 {:?}", a.shape(), acts[0][l].shape()),
                ));
            }
            pooled.push(pool(a, cfg.pooling)?);
        }
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let sims = (0..n)
                .filter(|&j| j != i)
                .map(|j| cosine_similarity(&pooled[i], &pooled[j], cfg.eps))
                .collect::<Result<Vec<_>>>()?;
            rows.push(softmax(&Tensor::stack_scalars(&sims)?)?);
        }
        out.push(rows);
    }
    Ok(out)
}

/// Distributions for two generators' activations over the same batch.
/// `acts_x[item][tap]`.
pub fn cdc_distributions<F: Real>(
    acts_a: &[Vec<Tensor<F>>],
    acts_b: &[Vec<Tensor<F>>],
    cfg: &CdcConfig,
) -> Result<(Distributions<F>, Distributions<F>)> {
    if acts_a.len() != acts_b.len() {
        return Err(Error::shape(
            "cdc_distributions",
            format!("{} vs {} items", acts_a.len(), acts_b.len()),
        ));
    }
    Ok((distributions_of(acts_a, cfg)?, distributions_of(acts_b, cfg)?))
}

/// `Σ_{l,i} KL(y_i^{adapted,l} ‖ y_i^{source,l})`. Source activations enter
/// as constants, so only the adapted generator receives gradient.
pub fn cdc_loss<F: Real>(
    source: &GeneratorHandle<F>,
    adapted: &GeneratorHandle<F>,
    mels: &[MelSpectrogram],
    cfg: &CdcConfig,
) -> Result<Tensor<F>> {
    if source.config != adapted.config {
        return Err(Error::invalid("cdc_loss", "source and adapted generators differ in architecture"));
    }
    if mels.len() < 2 {
        return Err(Error::invalid("cdc_loss", format!("batch of {} mels, need at least 2", mels.len())));
    }
    cfg.validate(adapted.tap_count())?;
    let mut src = Vec::with_capacity(mels.len());
    let mut ada = Vec::with_capacity(mels.len());
    for m in mels {
        let x = mel_tensor(m)?;
        let (_, taps) = source.forward(&x)?;
        src.push(taps.iter().map(Tensor::detach).collect::<Vec<_>>());
        ada.push(adapted.forward(&x)?.1);
    }
    let (ya, ys) = cdc_distributions(&ada, &src, cfg)?;
    let mut terms = Vec::new();
    for (la, ls) in ya.iter().zip(&ys) {
        for (p, q) in la.iter().zip(ls) {
            terms.push(kl_divergence(p, q)?);
        }
    }
    sum_all(&terms)
}

/// Named scalar parts of a generator objective.
pub struct GenLossParts<F: Real> {
    pub adv: Option<Tensor<F>>,
    pub fm: Option<Tensor<F>>,
    pub mel: Option<Tensor<F>>,
    /// Absent outside distance-consistency fine-tuning.
    pub cdc: Option<Tensor<F>>,
}

/// `adv + λ_cd·cdc + λ_fm·fm (+ λ_mel·mel)`.
pub fn combined_gen_objective<F: Real>(
    kind: GeneratorKind,
    parts: &GenLossParts<F>,
    weights: &LossWeights,
) -> Result<Tensor<F>> {
    let need = |t: &Option<Tensor<F>>, name: &str| {
        t.clone()
            .ok_or_else(|| Error::invalid("combined_gen_objective", format!("missing part '{name}' for {kind}")))
    };
    let mut total = need(&parts.adv, "adv")?;
    if let Some(c) = &parts.cdc {
        total = total.add(&c.scalar_mul(weights.lambda_cd)?)?;
    }
    total = total.add(&need(&parts.fm, "fm")?.scalar_mul(weights.lambda_fm)?)?;
    if kind == GeneratorKind::HifiganLike {
        total = total.add(&need(&parts.mel, "mel")?.scalar_mul(weights.lambda_mel)?)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::{mel_spectrogram, AudioClip};
    use crate::rng::SplitMix64;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[v.len()], v, true).unwrap()
    }

    #[test]
    fn hinge_cases() {
        let l = hinge_disc_loss(&[t(&[1.0, 1.0])], &[t(&[-1.0, -1.0])]).unwrap().item();
        assert_eq!(l, 0.0);
        assert_eq!(hinge_disc_loss(&[t(&[0.0])], &[t(&[0.0])]).unwrap().item(), 2.0);
        assert_eq!(hinge_gen_loss(&[t(&[0.0, 0.0])]).unwrap().item(), 0.0);
        assert_eq!(hinge_gen_loss(&[t(&[1.0, -1.0])]).unwrap().item(), 0.0);
        let f = t(&[0.3, -0.2, 0.9]);
        hinge_gen_loss(&[f.clone()]).unwrap().backward().unwrap();
        assert!(f.grad().unwrap().iter().all(|&g| (g + 1.0 / 3.0).abs() < 1e-15));
        assert!(hinge_gen_loss::<f64>(&[]).is_err());
    }

    #[test]
    fn lsgan_cases() {
        assert_eq!(lsgan_disc_loss(&[t(&[1.0])], &[t(&[0.0])]).unwrap().item(), 0.0);
        assert_eq!(lsgan_gen_loss(&[t(&[1.0, 1.0])]).unwrap().item(), 0.0);
        assert_eq!(lsgan_disc_loss(&[t(&[0.0])], &[t(&[1.0])]).unwrap().item(), 2.0);
    }

    #[test]
    fn feature_matching_cases() {
        let a = vec![vec![t(&[0.1, 0.2]), t(&[0.5])]];
        let b = vec![vec![t(&[1.1, 1.2]), t(&[1.5])]];
        assert_eq!(feature_matching_loss(&a, &a).unwrap().item(), 0.0);
        assert!((feature_matching_loss(&a, &b).unwrap().item() - 2.0).abs() < 1e-15);
        assert_eq!(
            feature_matching_loss(&a, &b).unwrap().item(),
            feature_matching_loss(&b, &a).unwrap().item()
        );
    }

    #[test]
    fn combined_weights() {
        let s = |v: f64| Some(Tensor::<f64>::scalar(v));
        let w = LossWeights::for_kind(GeneratorKind::MelganLike);
        let parts = GenLossParts {
            adv: s(1.0),
            fm: s(0.1),
            mel: None,
            cdc: s(0.001),
        };
        assert_eq!(combined_gen_objective(GeneratorKind::MelganLike, &parts, &w).unwrap().item(), 3.0);
        let w = LossWeights::for_kind(GeneratorKind::HifiganLike);
        let parts = GenLossParts {
            adv: s(0.0),
            fm: s(0.0),
            mel: s(1.0),
            cdc: s(0.0),
        };
        assert_eq!(combined_gen_objective(GeneratorKind::HifiganLike, &parts, &w).unwrap().item(), 45.0);
        let missing = GenLossParts { mel: None, ..parts };
        assert!(combined_gen_objective(GeneratorKind::HifiganLike, &missing, &w).is_err());
    }

    #[test]
    fn mel_loss_zero_on_reproduction() {
        let cfg = DspConfig::default();
        let mut rng = SplitMix64::new(4);
        let x: Vec<f32> = (0..256 * 6).map(|_| rng.uniform_in(-0.5, 0.5) as f32).collect();
        let mel = mel_spectrogram(&AudioClip::new(x.clone(), 16000).unwrap(), &cfg).unwrap();
        let gen = Tensor::<f32>::param(&[1, x.len()], x).unwrap();
        let l = mel_recon_loss(&gen, &mel, &cfg).unwrap();
        assert_eq!(l.item(), 0.0);
        let short = Tensor::<f32>::param(&[1, 100], vec![0.0; 100]).unwrap();
        assert!(mel_recon_loss(&short, &mel, &cfg).is_err());
    }

    #[test]
    fn distributions_degenerate_cases() {
        let cfg = CdcConfig {
            layer_indices: vec![0],
            ..CdcConfig::default()
        };
        let act = |v: &[f64]| vec![Tensor::<f64>::from_f64(&[v.len(), 1], v, false).unwrap()];
        let two = vec![act(&[1.0, 2.0]), act(&[0.5, -1.0])];
        let (d, _) = cdc_distributions(&two, &two, &cfg).unwrap();
        assert!(d[0].iter().all(|p| p.to_vec() == vec![1.0]));
        let same = vec![act(&[1.0, 2.0]); 4];
        let (d, _) = cdc_distributions(&same, &same, &cfg).unwrap();
        for p in &d[0] {
            assert!(p.to_vec().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
        assert!(cdc_distributions(&two[..1], &two[..1], &cfg).is_err());
    }
}
