//! Objective spectral metrics, per-split reports and the mode comparison
//! table. Lower values are read as better quality; that mapping to listening
//! scores is an assumption and every report carries it as a note.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::{log_mel_from_magnitude, mel_filterbank, AudioClip, DspConfig, MelSpectrogram, StftPlan};
use crate::autodiff::checkpoint::CheckpointBundle;
use crate::config::EvalConfig;
use crate::data::ClipPool;
use crate::error::{Error, Result};
use crate::models::GeneratorHandle;
use crate::training::{load_generator, FinetuneMode};

pub const METRIC_NOTE: &str = "lower MR-STFT/MCD is assumed to track higher perceived quality; not a listening test";

/// Pads with zeros or truncates to `len`.
pub fn fit_length(samples: &[f32], len: usize) -> Vec<f32> {
    let mut v = samples[..samples.len().min(len)].to_vec();
    v.resize(len, 0.0);
    v
}

fn check_pair(op: &'static str, r: &AudioClip, g: &AudioClip) -> Result<()> {
    r.validate()?;
    g.validate()?;
    if r.len() != g.len() {
        return Err(Error::shape(op, format!("reference {} vs generated {} samples", r.len(), g.len())));
    }
    if r.sample_rate != g.sample_rate {
        return Err(Error::invalid(op, "sample rates differ"));
    }
    Ok(())
}

fn to_f64(c: &AudioClip) -> Vec<f64> {
    c.samples.iter().map(|&s| s as f64).collect()
}

/// Sum over FFT sizes of spectral convergence plus mean absolute log-magnitude
/// difference. Hop is a quarter of the FFT size, window the full size.
/// Generated audio must already match the reference length (see `fit_length`).
pub fn mr_stft_loss(reference: &AudioClip, generated: &AudioClip, eval: &EvalConfig, dsp: &DspConfig) -> Result<f64> {
    check_pair("mr_stft_loss", reference, generated)?;
    let (xr, xg) = (to_f64(reference), to_f64(generated));
    let floor = eval.mag_floor;
    let mut total = 0.0;
    for &n in &eval.fft_sizes {
        let plan = StftPlan::<f64>::new(&dsp.with_resolution(n, n / 4, n))?;
        let (mr, _) = plan.magnitude(&xr)?;
        let (mg, _) = plan.magnitude(&xg)?;
        let (mut diff2, mut ref2, mut logsum) = (0.0, 0.0, 0.0);
        for (&a, &b) in mr.iter().zip(&mg) {
            let (a, b) = (a.max(floor), b.max(floor));
            diff2 += (a - b) * (a - b);
            ref2 += a * a;
            logsum += (a.ln() - b.ln()).abs();
        }
        if mr.iter().all(|&a| a <= floor) {
            return Err(Error::invalid("mr_stft_loss", "reference has no energy; spectral convergence undefined"));
        }
        total += diff2.sqrt() / ref2.sqrt() + logsum / mr.len() as f64;
    }
    Ok(total)
}

/// Log-mel in 64-bit, `[n_mels × T]` row-major.
fn log_mel64(clip: &AudioClip, dsp: &DspConfig) -> Result<(Vec<f64>, usize)> {
    let plan = StftPlan::<f64>::new(dsp)?;
    let (mag, frames) = plan.magnitude(&to_f64(clip))?;
    let fb = mel_filterbank(dsp)?;
    Ok((log_mel_from_magnitude(&mag, &fb, dsp.n_mels, dsp.n_freq(), frames, dsp.log_floor), frames))
}

/// Orthonormal DCT-II basis row `k` over `n` points.
fn dct_row(k: usize, n: usize) -> Vec<f64> {
    let scale = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
    (0..n)
        .map(|i| scale * (std::f64::consts::PI * k as f64 * (i as f64 + 0.5) / n as f64).cos())
        .collect()
}

/// Mel-cepstral distortion in dB over coefficients `1..=order`.
pub fn mcd(reference: &AudioClip, generated: &AudioClip, order: usize, dsp: &DspConfig) -> Result<f64> {
    check_pair("mcd", reference, generated)?;
    if order == 0 || order >= dsp.n_mels {
        return Err(Error::invalid("mcd", format!("order {order} outside 1..{}", dsp.n_mels)));
    }
    let (a, frames) = log_mel64(reference, dsp)?;
    let (b, _) = log_mel64(generated, dsp)?;
    if frames == 0 {
        return Err(Error::invalid("mcd", "no frames"));
    }
    let m = dsp.n_mels;
    let basis: Vec<Vec<f64>> = (1..=order).map(|k| dct_row(k, m)).collect();
    let mut sum = 0.0;
    for t in 0..frames {
        let mut d2 = 0.0;
        for row in &basis {
            let c: f64 = (0..m).map(|i| row[i] * (a[i * frames + t] - b[i * frames + t])).sum();
            d2 += c * c;
        }
        sum += d2.sqrt();
    }
    Ok(10.0 / std::f64::consts::LN_10 * std::f64::consts::SQRT_2 * sum / frames as f64)
}

/// Anything that turns a mel into a waveform.
pub trait Vocoder {
    fn vocode(&self, mel: &MelSpectrogram) -> Result<Vec<f32>>;
}

impl Vocoder for GeneratorHandle<f32> {
    fn vocode(&self, mel: &MelSpectrogram) -> Result<Vec<f32>> {
        Ok(self.generate(mel)?.to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(v: &[f64]) -> Self {
        if v.is_empty() {
            return Self { mean: 0.0, std: 0.0 };
        }
        let n = v.len() as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Self { mean, std: var.sqrt() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipMetrics {
    pub clip: String,
    pub mr_stft: f64,
    pub mcd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    pub split: String,
    pub count: usize,
    pub mr_stft: Stat,
    pub mcd: Stat,
    pub clips: Vec<ClipMetrics>,
    pub note: String,
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Vocodes every clip of `pool` from its own mel and scores it against the
/// recording.
pub fn evaluate_vocoder(
    vocoder: &dyn Vocoder,
    pool: &ClipPool,
    split: &str,
    label: &str,
    dsp: &DspConfig,
    eval: &EvalConfig,
) -> Result<MetricsReport> {
    if pool.is_empty() {
        return Err(Error::Data(format!("{split} split is empty")));
    }
    let mut clips = Vec::with_capacity(pool.len());
    for (i, clip) in pool.clips.iter().enumerate() {
        let name = pool
            .entries
            .get(i)
            .and_then(|e| e.path.file_name())
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("clip{i:03}"));
        let mel = crate::audio::mel_spectrogram(clip, dsp)?;
        let wave = vocoder.vocode(&mel)?;
        let generated = AudioClip::new(fit_length(&wave, clip.len()), clip.sample_rate)?;
        clips.push(ClipMetrics {
            mr_stft: mr_stft_loss(clip, &generated, eval, dsp)?,
            mcd: mcd(clip, &generated, eval.mcd_order, dsp)?,
            clip: name,
        });
    }
    let mr: Vec<f64> = clips.iter().map(|c| c.mr_stft).collect();
    let mc: Vec<f64> = clips.iter().map(|c| c.mcd).collect();
    Ok(MetricsReport {
        label: label.to_owned(),
        split: split.to_owned(),
        count: clips.len(),
        mr_stft: Stat::of(&mr),
        mcd: Stat::of(&mc),
        clips,
        note: METRIC_NOTE.to_owned(),
    })
}

pub fn evaluate_checkpoint(
    bundle: &CheckpointBundle,
    pool: &ClipPool,
    split: &str,
    label: &str,
    dsp: &DspConfig,
    eval: &EvalConfig,
) -> Result<MetricsReport> {
    let (g, _) = load_generator(bundle)?;
    evaluate_vocoder(&g.frozen_copy(), pool, split, label, dsp, eval)
}

/// `{kind}_{mode}_seed{seed}_step{step}_{split}.json`
pub fn report_file_name(kind: &str, mode: &str, seed: u64, step: usize, split: &str) -> String {
    format!("{kind}_{mode}_seed{seed}_step{step}_{split}.json")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub kind: String,
    pub mode: FinetuneMode,
    pub train_mr_stft: f64,
    pub test_mr_stft: f64,
    pub gap_mr_stft: f64,
    pub train_mcd: f64,
    pub test_mcd: f64,
    pub gap_mcd: f64,
}

impl ComparisonRow {
    pub fn from_reports(kind: &str, mode: FinetuneMode, train: &MetricsReport, test: &MetricsReport) -> Self {
        Self {
            kind: kind.to_owned(),
            mode,
            train_mr_stft: train.mr_stft.mean,
            test_mr_stft: test.mr_stft.mean,
            gap_mr_stft: test.mr_stft.mean - train.mr_stft.mean,
            train_mcd: train.mcd.mean,
            test_mcd: test.mcd.mean,
            gap_mcd: test.mcd.mean - train.mcd.mean,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
    pub note: String,
}

impl ComparisonTable {
    pub fn row(&self, mode: FinetuneMode) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.mode == mode)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serialises")
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "{:<12} {:<12} {:>12} {:>12} {:>12} {:>10} {:>10} {:>10}",
            "kind", "mode", "stft_train", "stft_test", "stft_gap", "mcd_train", "mcd_test", "mcd_gap"
        );
        for r in &self.rows {
            let _ = writeln!(
                s,
                "{:<12} {:<12} {:>12.6} {:>12.6} {:>12.6} {:>10.4} {:>10.4} {:>10.4}",
                r.kind,
                r.mode.as_str(),
                r.train_mr_stft,
                r.test_mr_stft,
                r.gap_mr_stft,
                r.train_mcd,
                r.test_mcd,
                r.gap_mcd
            );
        }
        let _ = writeln!(s, "note: {}", self.note);
        s
    }

    /// Writes `comparison.json` and `comparison.txt` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let j = dir.join("comparison.json");
        std::fs::write(&j, self.to_json()).map_err(|e| Error::io(&j, e))?;
        let t = dir.join("comparison.txt");
        std::fs::write(&t, self.render()).map_err(|e| Error::io(&t, e))
    }
}

/// Train and test reports for one checkpoint per mode, on the target splits.
pub fn compare_modes(
    checkpoints: &[(FinetuneMode, &CheckpointBundle)],
    train: &ClipPool,
    test: &ClipPool,
    dsp: &DspConfig,
    eval: &EvalConfig,
) -> Result<(ComparisonTable, Vec<MetricsReport>)> {
    if checkpoints.len() < 2 {
        return Err(Error::invalid("compare_modes", "need at least two modes"));
    }
    let mut rows = Vec::new();
    let mut reports = Vec::new();
    for (mode, ck) in checkpoints {
        if rows.iter().any(|r: &ComparisonRow| r.mode == *mode) {
            return Err(Error::invalid("compare_modes", format!("mode {} given twice", mode.as_str())));
        }
        let tr = evaluate_checkpoint(ck, train, "train", mode.as_str(), dsp, eval)?;
        let te = evaluate_checkpoint(ck, test, "test", mode.as_str(), dsp, eval)?;
        rows.push(ComparisonRow::from_reports(&ck.kind, *mode, &tr, &te));
        reports.push(tr);
        reports.push(te);
    }
    Ok((
        ComparisonTable {
            rows,
            note: METRIC_NOTE.to_owned(),
        },
        reports,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::audio::mel_spectrogram;
    use crate::rng::SplitMix64;

    fn noise(n: usize, seed: u64) -> AudioClip {
        let mut r = SplitMix64::new(seed);
        AudioClip::new((0..n).map(|_| r.uniform_in(-0.5, 0.5) as f32).collect(), 16000).unwrap()
    }

    #[test]
    fn identical_clips_score_zero() {
        let (e, d) = (EvalConfig::default(), DspConfig::default());
        let a = noise(6000, 1);
        assert_eq!(mr_stft_loss(&a, &a, &e, &d).unwrap(), 0.0);
        assert_eq!(mcd(&a, &a, 13, &d).unwrap(), 0.0);
        assert!(mr_stft_loss(&a, &noise(6000, 2), &e, &d).unwrap() > 0.0);
        assert!(mcd(&a, &noise(6000, 2), 13, &d).unwrap() > 0.0);
    }

    #[test]
    fn half_gain_closed_form() {
        let (e, d) = (EvalConfig::default(), DspConfig::default());
        let a = noise(8000, 3);
        let h = AudioClip::new(a.samples.iter().map(|s| s * 0.5).collect(), 16000).unwrap();
        let v = mr_stft_loss(&a, &h, &e, &d).unwrap();
        let expect = 3.0 * (0.5 + 2f64.ln());
        assert!((v - expect).abs() < 1e-6, "{v} vs {expect}");
        // uniform gain only moves coefficient 0
        assert!(mcd(&a, &h, 13, &d).unwrap() < 1e-6);
    }

    #[test]
    fn rejects_silence_and_length_mismatch() {
        let (e, d) = (EvalConfig::default(), DspConfig::default());
        let z = AudioClip::new(vec![0.0; 4000], 16000).unwrap();
        assert!(mr_stft_loss(&z, &noise(4000, 1), &e, &d).is_err());
        assert!(mr_stft_loss(&noise(4000, 1), &noise(4001, 1), &e, &d).is_err());
        assert!(mcd(&noise(4000, 1), &noise(4001, 1), 13, &d).is_err());
    }

    struct CopyVocoder<'a>(&'a ClipPool, DspConfig);

    impl Vocoder for CopyVocoder<'_> {
        fn vocode(&self, mel: &MelSpectrogram) -> Result<Vec<f32>> {
            for c in &self.0.clips {
                if mel_spectrogram(c, &self.1)?.values == mel.values {
                    return Ok(c.samples.clone());
                }
            }
            Err(Error::Data("unknown mel".into()))
        }
    }

    #[test]
    fn copy_vocoder_scores_zero_and_reports_are_stable() {
        let (e, d) = (EvalConfig::default(), DspConfig::default());
        let pool = ClipPool::from_clips(vec![noise(5000, 1), noise(7000, 2), noise(3000, 3)]);
        let r = evaluate_vocoder(&CopyVocoder(&pool, d.clone()), &pool, "test", "copy", &d, &e).unwrap();
        assert_eq!(r.count, 3);
        assert_eq!(r.mr_stft.mean, 0.0);
        assert_eq!(r.mcd.mean, 0.0);
        let again = evaluate_vocoder(&CopyVocoder(&pool, d.clone()), &pool, "test", "copy", &d, &e).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn table_gap_and_render() {
        let mk = |split: &str, v: f64| MetricsReport {
            label: String::new(),
            split: split.into(),
            count: 1,
            mr_stft: Stat { mean: v, std: 0.0 },
            mcd: Stat { mean: 2.0 * v, std: 0.0 },
            clips: vec![],
            note: String::new(),
        };
        let row = ComparisonRow::from_reports("melgan_like", FinetuneMode::Cdc, &mk("train", 1.25), &mk("test", 2.0));
        assert_eq!(row.gap_mr_stft, 2.0 - 1.25);
        assert_eq!(row.gap_mcd, 4.0 - 2.5);
        let t = ComparisonTable {
            rows: vec![row],
            note: METRIC_NOTE.into(),
        };
        assert_eq!(t.render().lines().count(), 3);
        assert_eq!(serde_json::from_str::<ComparisonTable>(&t.to_json()).unwrap(), t);
    }
}
