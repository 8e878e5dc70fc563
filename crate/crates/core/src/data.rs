//! Manifests, the synthetic source/target corpora and crop batching.
//!
//! Manifest format: one JSON object per line with keys `path`, `split`
//! (`train` | `test`), `speaker` and `duration` (seconds). Relative paths are
//! resolved against the manifest's directory.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::audio::{load_wav, mel_spectrogram, save_wav, AudioClip, DspConfig, MelSpectrogram};
use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub split: Split,
    pub speaker: String,
    pub duration: f64,
}

/// Writes entries, storing paths relative to the manifest directory when
/// they live below it.
pub fn write_manifest(entries: &[ManifestEntry], path: &Path) -> Result<()> {
    let base = path.parent().unwrap_or(Path::new(""));
    let mut out = String::new();
    for e in entries {
        let rel = e.path.strip_prefix(base).unwrap_or(&e.path).to_path_buf();
        let rec = ManifestEntry {
            path: rel,
            ..e.clone()
        };
        out.push_str(&serde_json::to_string(&rec).map_err(|e| Error::Data(e.to_string()))?);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads and validates every line; returned paths are resolved.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = |detail: String| Error::Manifest {
            path: path.to_path_buf(),
            line: i + 1,
            detail,
        };
        let mut e: ManifestEntry = serde_json::from_str(line).map_err(|err| bad(err.to_string()))?;
        if !(e.duration.is_finite() && e.duration > 0.0) {
            return Err(bad(format!("duration must be positive, got {}", e.duration)));
        }
        if e.path.as_os_str().is_empty() {
            return Err(bad("empty path".into()));
        }
        if e.path.is_relative() {
            e.path = base.join(&e.path);
        }
        if !seen.insert(e.path.clone()) {
            log::warn!("{}:{}: duplicate path {}", path.display(), i + 1, e.path.display());
        }
        entries.push(e);
    }
    Ok(entries)
}

pub fn split_entries(entries: &[ManifestEntry], split: Split) -> Vec<ManifestEntry> {
    entries.iter().filter(|e| e.split == split).cloned().collect()
}

// ---------------------------------------------------------------------------
// Synthetic speakers

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpeakerSpec {
    pub f0_range: (f64, f64),
    pub formants: Vec<f64>,
    pub bandwidths: Vec<f64>,
    /// Relative per-period pitch perturbation.
    pub jitter: f64,
    /// Syllables per second.
    pub syllable_rate: f64,
}

impl SpeakerSpec {
    pub fn child() -> Self {
        Self {
            f0_range: (250.0, 400.0),
            formants: vec![1000.0, 1600.0, 3300.0, 4300.0],
            bandwidths: vec![100.0, 120.0, 200.0, 300.0],
            jitter: 0.01,
            syllable_rate: 4.0,
        }
    }

    /// Adult-range speaker drawn from `rng`.
    pub fn random_adult(rng: &mut SplitMix64) -> Self {
        let lo = rng.uniform_in(85.0, 170.0);
        let width = rng.uniform_in(30.0, 60.0);
        let scale = rng.uniform_in(0.9, 1.1);
        Self {
            f0_range: (lo, lo + width),
            formants: [730.0, 1090.0, 2440.0, 3400.0].iter().map(|f| f * scale).collect(),
            bandwidths: vec![80.0, 100.0, 160.0, 250.0],
            jitter: 0.01,
            syllable_rate: rng.uniform_in(3.0, 5.0),
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        let (lo, hi) = self.f0_range;
        let bad = |m: String| Err(Error::Config(format!("speaker spec: {m}")));
        if !(50.0 < lo && lo < hi && hi < 600.0) {
            return bad(format!("f0 range {lo}..{hi} must lie within (50, 600) Hz"));
        }
        if self.formants.is_empty() || self.formants.len() != self.bandwidths.len() {
            return bad("need one bandwidth per formant".into());
        }
        if self.formants.windows(2).any(|w| w[0] >= w[1]) {
            return bad("formants must be increasing".into());
        }
        let nyq = sample_rate as f64 / 2.0;
        if self.formants.iter().any(|&f| f <= 0.0 || f * 1.1 >= nyq) || self.bandwidths.iter().any(|&b| b <= 0.0) {
            return bad("formants must lie below Nyquist with positive bandwidths".into());
        }
        if !(0.0..0.2).contains(&self.jitter) || !(self.syllable_rate > 0.0) {
            return bad("jitter must be in [0, 0.2) and syllable_rate positive".into());
        }
        Ok(())
    }
}

/// Two-pole resonator with unity gain at DC.
struct Resonator {
    a: f64,
    b: f64,
    c: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Self {
            a: 1.0,
            b: 0.0,
            c: 0.0,
            y1: 0.0,
            y2: 0.0,
        }
    }

    fn tune(&mut self, freq: f64, bw: f64, sr: f64) {
        let r = (-std::f64::consts::PI * bw / sr).exp();
        self.c = -r * r;
        self.b = 2.0 * r * (2.0 * std::f64::consts::PI * freq / sr).cos();
        self.a = 1.0 - self.b - self.c;
    }

    fn step(&mut self, x: f64) -> f64 {
        let y = self.a * x + self.b * self.y1 + self.c * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

/// Deterministic pseudo-speech: a jittered sawtooth source through cascaded
/// formant resonators, gated into raised-cosine syllables and peak-normalised
/// to 0.95.
pub fn synth_speaker(spec: &SpeakerSpec, seconds: f64, seed: u64, sample_rate: u32) -> Result<AudioClip> {
    spec.validate(sample_rate)?;
    let sr = sample_rate as f64;
    let n = (seconds * sr).round() as usize;
    if n == 0 {
        return Err(Error::invalid("synth_speaker", "utterance shorter than one sample"));
    }
    let mut rng = SplitMix64::new(seed);
    let (lo, hi) = spec.f0_range;
    let mod_rate = rng.uniform_in(0.4, 1.0);
    let mod_phase = rng.uniform_in(0.0, 2.0 * std::f64::consts::PI);
    let decl = rng.uniform_in(-1.0, 1.0);

    // syllable plan: (start, voiced length, formant scales)
    let mut syllables = Vec::new();
    let mut t = (rng.uniform_in(0.02, 0.08) * sr) as usize;
    while t < n {
        let dur = (rng.uniform_in(0.8, 1.2) * sr / spec.syllable_rate) as usize;
        let voiced = (dur as f64 * 0.75) as usize;
        let scales: Vec<f64> = spec.formants.iter().map(|_| rng.uniform_in(0.9, 1.1)).collect();
        syllables.push((t, voiced.max(1), scales));
        t += dur.max(2);
    }

    let mut res: Vec<Resonator> = spec.formants.iter().map(|_| Resonator::new()).collect();
    let mut out = vec![0.0f64; n];
    let mut phase = 0.0f64;
    let mut period_scale = 1.0;
    let mut syl = 0;
    for (i, o) in out.iter_mut().enumerate() {
        while syl + 1 < syllables.len() && i >= syllables[syl + 1].0 {
            syl += 1;
        }
        let (start, voiced, scales) = &syllables[syl];
        if i == *start {
            for ((r, (&f, &bw)), s) in res.iter_mut().zip(spec.formants.iter().zip(&spec.bandwidths)).zip(scales) {
                r.tune(f * s, bw, sr);
            }
        }
        let env = if i >= *start && i < start + voiced {
            let u = (i - start) as f64 / *voiced as f64;
            0.5 - 0.5 * (2.0 * std::f64::consts::PI * u).cos()
        } else {
            0.0
        };
        let tt = i as f64 / sr;
        let contour = 0.5
            + 0.3 * (2.0 * std::f64::consts::PI * mod_rate * tt + mod_phase).sin()
            + 0.2 * decl * (1.0 - 2.0 * tt / seconds).clamp(-1.0, 1.0);
        let f0 = (lo + (hi - lo) * contour) * period_scale;
        phase += f0 / sr;
        if phase >= 1.0 {
            phase -= 1.0;
            period_scale = 1.0 + spec.jitter * rng.uniform_in(-1.0, 1.0);
        }
        let source = (1.0 - 2.0 * phase) + 0.02 * rng.uniform_in(-1.0, 1.0);
        let mut y = env * source;
        for r in res.iter_mut() {
            y = r.step(y);
        }
        *o = y;
    }
    let peak = out.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { 0.95 / peak } else { 0.0 };
    AudioClip::new(out.iter().map(|&v| (v * gain) as f32).collect(), sample_rate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorpusConfig {
    pub source_speakers: usize,
    pub utterances_per_speaker: usize,
    pub target_utterances: usize,
    pub target_train: usize,
    pub utterance_seconds: f64,
    pub source_test_fraction: f64,
    /// Std of white background noise added to every clip.
    pub noise_floor: f64,
    pub target: SpeakerSpec,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            source_speakers: 12,
            utterances_per_speaker: 16,
            target_utterances: 20,
            target_train: 10,
            utterance_seconds: 2.0,
            source_test_fraction: 0.1,
            noise_floor: 2e-3,
            target: SpeakerSpec::child(),
        }
    }
}

pub struct CorpusPaths {
    pub source_manifest: PathBuf,
    pub target_manifest: PathBuf,
}

/// Synthesises both corpora under `out_dir` and writes `source.jsonl` and
/// `target.jsonl`. A pure function of `(cfg, seed)`.
pub fn build_corpora(out_dir: &Path, cfg: &CorpusConfig, seed: u64, sample_rate: u32) -> Result<CorpusPaths> {
    if cfg.source_speakers < 2 {
        return Err(Error::Config("source corpus needs at least 2 speakers".into()));
    }
    if !(0.0..0.1).contains(&cfg.noise_floor) {
        return Err(Error::Config("noise_floor must be in [0, 0.1)".into()));
    }
    if cfg.utterances_per_speaker == 0 || cfg.target_train == 0 || cfg.target_train >= cfg.target_utterances {
        return Err(Error::Config("corpus sizes must leave non-empty train and test splits".into()));
    }
    cfg.target.validate(sample_rate)?;
    for sub in ["source", "target"] {
        let d = out_dir.join(sub);
        fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    let mut spk_rng = SplitMix64::stream(seed, "data.speakers");
    let mut source = Vec::new();
    for s in 0..cfg.source_speakers {
        let spec = SpeakerSpec::random_adult(&mut spk_rng);
        let speaker = format!("spk{s:02}");
        for u in 0..cfg.utterances_per_speaker {
            let clip = synth_speaker(&spec, cfg.utterance_seconds, derive_seed(seed, &format!("utt.{speaker}.{u}")), sample_rate)?;
            let clip = add_noise(clip, cfg.noise_floor, derive_seed(seed, &format!("noise.{speaker}.{u}")))?;
            let path = out_dir.join("source").join(format!("{speaker}_{u:03}.wav"));
            save_wav(&clip, &path)?;
            source.push(ManifestEntry {
                path,
                split: Split::Train,
                speaker: speaker.clone(),
                duration: clip.duration_secs(),
            });
        }
    }
    let n_test = ((source.len() as f64 * cfg.source_test_fraction).round() as usize).clamp(1, source.len() - 1);
    assign_test(&mut source, n_test, &mut SplitMix64::stream(seed, "data.split.source"));

    let mut target = Vec::new();
    for u in 0..cfg.target_utterances {
        let clip = synth_speaker(&cfg.target, cfg.utterance_seconds, derive_seed(seed, &format!("utt.target.{u}")), sample_rate)?;
        let clip = add_noise(clip, cfg.noise_floor, derive_seed(seed, &format!("noise.target.{u}")))?;
        let path = out_dir.join("target").join(format!("target_{u:03}.wav"));
        save_wav(&clip, &path)?;
        target.push(ManifestEntry {
            path,
            split: Split::Train,
            speaker: "target".into(),
            duration: clip.duration_secs(),
        });
    }
    let n_test = cfg.target_utterances - cfg.target_train;
    assign_test(&mut target, n_test, &mut SplitMix64::stream(seed, "data.split.target"));

    let paths = CorpusPaths {
        source_manifest: out_dir.join("source.jsonl"),
        target_manifest: out_dir.join("target.jsonl"),
    };
    write_manifest(&source, &paths.source_manifest)?;
    write_manifest(&target, &paths.target_manifest)?;
    Ok(paths)
}

fn add_noise(clip: AudioClip, std: f64, seed: u64) -> Result<AudioClip> {
    if std == 0.0 {
        return Ok(clip);
    }
    let mut rng = SplitMix64::new(seed);
    let samples = clip
        .samples
        .iter()
        .map(|&v| (v as f64 + std * rng.normal()).clamp(-1.0, 1.0) as f32)
        .collect();
    AudioClip::new(samples, clip.sample_rate)
}

fn assign_test(entries: &mut [ManifestEntry], n_test: usize, rng: &mut SplitMix64) {
    let mut idx: Vec<usize> = (0..entries.len()).collect();
    rng.shuffle(&mut idx);
    for &i in &idx[..n_test] {
        entries[i].split = Split::Test;
    }
}

// ---------------------------------------------------------------------------
// Batching

/// Decoded clips of one manifest split.
#[derive(Clone)]
pub struct ClipPool {
    pub entries: Vec<ManifestEntry>,
    pub clips: Vec<AudioClip>,
}

impl ClipPool {
    pub fn load(entries: &[ManifestEntry], split: Split, dsp: &DspConfig) -> Result<Self> {
        let entries = split_entries(entries, split);
        if entries.is_empty() {
            return Err(Error::Data(format!("{} split is empty", split.as_str())));
        }
        let clips = entries
            .iter()
            .map(|e| {
                let c = load_wav(&e.path)?;
                if c.sample_rate != dsp.sample_rate {
                    return Err(Error::format(
                        &e.path,
                        format!("sample rate {} differs from configured {}", c.sample_rate, dsp.sample_rate),
                    ));
                }
                Ok(c)
            })
            .collect::<Result<_>>()?;
        Ok(Self { entries, clips })
    }

    pub fn from_manifest(path: &Path, split: Split, dsp: &DspConfig) -> Result<Self> {
        Self::load(&read_manifest(path)?, split, dsp)
    }

    /// Pool without manifest provenance.
    pub fn from_clips(clips: Vec<AudioClip>) -> Self {
        Self { entries: Vec::new(), clips }
    }

    pub fn len(&self) -> usize {
        self.clips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clips.is_empty()
    }
}

pub struct CropItem {
    pub mel: MelSpectrogram,
    pub audio: Vec<f32>,
    /// True when the source clip was shorter than the crop and zero-filled.
    pub padded: bool,
}

pub struct CropBatch {
    pub frames: usize,
    pub items: Vec<CropItem>,
}

impl CropBatch {
    pub fn any_padded(&self) -> bool {
        self.items.iter().any(|i| i.padded)
    }
}

/// Cuts `hop·frames` samples starting on a hop boundary and computes the mel
/// of exactly that segment.
pub fn crop_one(clip: &AudioClip, frames: usize, rng: &mut SplitMix64, dsp: &DspConfig) -> Result<CropItem> {
    let hop = dsp.hop_length;
    let want = hop * frames;
    let (audio, padded) = if clip.len() >= want {
        let slots = (clip.len() - want) / hop + 1;
        let start = rng.below(slots) * hop;
        (clip.samples[start..start + want].to_vec(), false)
    } else {
        let mut a = clip.samples.clone();
        a.resize(want, 0.0);
        (a, true)
    };
    let mel = mel_spectrogram(&AudioClip::new(audio.clone(), clip.sample_rate)?, dsp)?;
    Ok(CropItem { mel, audio, padded })
}

/// Uniform clip choice, then a uniform hop-aligned offset, per item.
pub fn sample_crop_batch(
    pool: &ClipPool,
    batch_size: usize,
    frames: usize,
    rng: &mut SplitMix64,
    dsp: &DspConfig,
) -> Result<CropBatch> {
    if pool.is_empty() {
        return Err(Error::Data("cannot sample from an empty split".into()));
    }
    if batch_size == 0 || frames == 0 {
        return Err(Error::invalid("sample_crop_batch", "batch size and crop frames must be positive"));
    }
    let items = (0..batch_size)
        .map(|_| {
            let clip = &pool.clips[rng.below(pool.len())];
            crop_one(clip, frames, rng, dsp)
        })
        .collect::<Result<_>>()?;
    Ok(CropBatch { frames, items })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_manifest_round_trip() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("m.jsonl");
        write_manifest(&[], &p).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "");
        assert!(read_manifest(&p).unwrap().is_empty());
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("m.jsonl");
        let e = ManifestEntry {
            path: d.path().join("a.wav"),
            split: Split::Test,
            speaker: "s".into(),
            duration: 1.5,
        };
        write_manifest(&[e.clone(), e.clone()], &p).unwrap();
        assert!(fs::read_to_string(&p).unwrap().starts_with("{\"path\":\"a.wav\""));
        assert_eq!(read_manifest(&p).unwrap(), vec![e.clone(), e]);
        fs::write(&p, "{\"path\":\"a.wav\",\"split\":\"train\",\"speaker\":\"s\",\"duration\":1}\nnot json\n").unwrap();
        match read_manifest(&p) {
            Err(Error::Manifest { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        fs::write(&p, "{\"path\":\"a.wav\",\"split\":\"dev\",\"speaker\":\"s\",\"duration\":1}\n").unwrap();
        assert!(read_manifest(&p).is_err());
        assert!(read_manifest(&d.path().join("missing.jsonl")).is_err());
    }

    #[test]
    fn synthesis_is_deterministic_and_normalised() {
        let a = synth_speaker(&SpeakerSpec::child(), 0.5, 7, 16000).unwrap();
        let b = synth_speaker(&SpeakerSpec::child(), 0.5, 7, 16000).unwrap();
        assert_eq!(a, b);
        let peak = a.samples.iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!((peak - 0.95).abs() < 1e-6);
        assert_ne!(a, synth_speaker(&SpeakerSpec::child(), 0.5, 8, 16000).unwrap());
    }

    #[test]
    fn bad_specs_rejected() {
        let mut s = SpeakerSpec::child();
        s.f0_range = (30.0, 100.0);
        assert!(s.validate(16000).is_err());
        let mut s = SpeakerSpec::child();
        s.formants.swap(0, 1);
        assert!(s.validate(16000).is_err());
    }

    #[test]
    fn crop_lengths_and_alignment() {
        let dsp = DspConfig::default();
        let clip = synth_speaker(&SpeakerSpec::child(), 1.0, 1, 16000).unwrap();
        let mut rng = SplitMix64::new(3);
        let item = crop_one(&clip, 32, &mut rng, &dsp).unwrap();
        assert_eq!(item.audio.len(), 8192);
        assert_eq!(item.mel.frames, 32);
        let again = mel_spectrogram(&AudioClip::new(item.audio.clone(), 16000).unwrap(), &dsp).unwrap();
        assert_eq!(again, item.mel);
        let short = AudioClip::new(vec![0.1; 1000], 16000).unwrap();
        let item = crop_one(&short, 8, &mut rng, &dsp).unwrap();
        assert!(item.padded);
        assert_eq!(item.audio.len(), 2048);
    }
}
