//! Waveform I/O and spectral features.
//!
//! Framing convention: the signal is reflect-padded by `(n_fft − hop)/2` on
//! the left and by enough on the right that exactly `ceil(len / hop)` frames
//! of `n_fft` samples fit. Frame `t` starts at padded index `t·hop`. With the
//! default hop of 256 this makes a generator that upsamples 256× produce
//! exactly as many samples as the clip its mel came from.

use std::fs;
use std::io::Write;
use std::path::Path;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::autodiff::ops::matmul_kernel;
use crate::autodiff::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub samples: Vec<f32>,
    pub sample_rate: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f32>, sample_rate: u32) -> Result<Self> {
        let clip = Self {
            samples,
            sample_rate,
        };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.is_empty() {
            return Err(Error::invalid("audio", "clip has no samples"));
        }
        if self.sample_rate == 0 {
            return Err(Error::invalid("audio", "sample rate must be positive"));
        }
        if self.samples.iter().any(|s| !s.is_finite()) {
            return Err(Error::invalid("audio", "clip contains non-finite samples"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DspConfig {
    pub sample_rate: u32,
    pub n_fft: usize,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
    pub log_floor: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            n_fft: 1024,
            win_length: 1024,
            hop_length: 256,
            n_mels: 80,
            fmin: 0.0,
            fmax: 8000.0,
            log_floor: 1e-5,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("dsp: {m}")));
        if self.sample_rate == 0 || self.hop_length == 0 || self.n_mels == 0 {
            return bad("sample_rate, hop_length and n_mels must be positive".into());
        }
        if !self.n_fft.is_power_of_two() {
            return bad(format!("n_fft {} is not a power of two", self.n_fft));
        }
        if self.win_length == 0 || self.win_length > self.n_fft {
            return bad(format!("win_length {} must be in 1..=n_fft", self.win_length));
        }
        if self.hop_length > self.n_fft {
            return bad(format!("hop_length {} exceeds n_fft", self.hop_length));
        }
        if !(0.0 <= self.fmin && self.fmin < self.fmax && self.fmax <= self.sample_rate as f64 / 2.0) {
            return bad(format!("need 0 <= fmin < fmax <= sr/2, got {}..{}", self.fmin, self.fmax));
        }
        if !(self.log_floor > 0.0) {
            return bad("log_floor must be positive".into());
        }
        Ok(())
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    /// Frames produced for a clip of `len` samples.
    pub fn frames_for(&self, len: usize) -> usize {
        len.div_ceil(self.hop_length)
    }

    /// Same framing with a different resolution (used by spectral metrics).
    pub fn with_resolution(&self, n_fft: usize, hop_length: usize, win_length: usize) -> Self {
        Self {
            n_fft,
            hop_length,
            win_length,
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// WAV

fn wav_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::format(path, detail)
}

/// Reads a 16-bit PCM mono RIFF/WAVE file; samples are scaled by 1/32768.
pub fn load_wav(path: &Path) -> Result<AudioClip> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_wav(&bytes).map_err(|d| wav_err(path, d))
}

fn parse_wav(b: &[u8]) -> std::result::Result<AudioClip, String> {
    let u16_at = |i: usize| u16::from_le_bytes([b[i], b[i + 1]]);
    let u32_at = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]);
    if b.len() < 12 {
        return Err("truncated header".into());
    }
    if &b[0..4] != b"RIFF" || &b[8..12] != b"WAVE" {
        return Err("not a RIFF/WAVE file".into());
    }
    let mut pos = 12;
    let mut fmt: Option<(u16, u16, u32, u16)> = None;
    while pos + 8 <= b.len() {
        let id = &b[pos..pos + 4];
        let size = u32_at(pos + 4) as usize;
        let body = pos + 8;
        if id == b"fmt " {
            if size < 16 || body + 16 > b.len() {
                return Err("truncated fmt chunk".into());
            }
            fmt = Some((u16_at(body), u16_at(body + 2), u32_at(body + 4), u16_at(body + 14)));
        } else if id == b"data" {
            let (tag, channels, sr, bits) = fmt.ok_or("data chunk before fmt chunk")?;
            match tag {
                1 => {}
                3 => return Err("unsupported encoding: IEEE float PCM".into()),
                t => return Err(format!("unsupported encoding: format tag {t}")),
            }
            if channels != 1 {
                return Err(format!("unsupported encoding: {channels} channels (mono required)"));
            }
            if bits != 16 {
                return Err(format!("unsupported encoding: {bits}-bit samples (16 required)"));
            }
            if body + size > b.len() {
                return Err("truncated data chunk".into());
            }
            let samples: Vec<f32> = b[body..body + size]
                .chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f32 / 32768.0)
                .collect();
            if samples.is_empty() {
                return Err("empty data chunk".into());
            }
            if sr == 0 {
                return Err("zero sample rate".into());
            }
            return Ok(AudioClip {
                samples,
                sample_rate: sr,
            });
        }
        pos = body + size + (size & 1);
    }
    Err(if fmt.is_none() {
        "truncated header: no fmt chunk".into()
    } else {
        "no data chunk".into()
    })
}

pub fn quantize(x: f32) -> i16 {
    (x.clamp(-1.0, 1.0) * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Writes 16-bit PCM mono, clamping to [-1, 1] before quantization.
pub fn save_wav(clip: &AudioClip, path: &Path) -> Result<()> {
    clip.validate()?;
    let data_len = clip.samples.len() * 2;
    let mut out = Vec::with_capacity(44 + data_len);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&((36 + data_len) as u32).to_le_bytes());
    out.extend_from_slice(b"WAVEfmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&clip.sample_rate.to_le_bytes());
    out.extend_from_slice(&(clip.sample_rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&(data_len as u32).to_le_bytes());
    for &s in &clip.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

// ---------------------------------------------------------------------------
// STFT

/// Mirror index into `[0, len)` without repeating the edge sample.
pub fn reflect_index(i: isize, len: usize) -> usize {
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let m = i.rem_euclid(period);
    if m < len as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

pub fn hann_window(win_length: usize, n_fft: usize) -> Vec<f64> {
    let mut w = vec![0.0; n_fft];
    let off = (n_fft - win_length) / 2;
    for n in 0..win_length {
        w[off + n] = 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win_length as f64).cos();
    }
    w
}

/// Windowed FFT framing for one resolution.
pub struct StftPlan<F: Real> {
    pub n_fft: usize,
    pub hop: usize,
    pub window: Vec<F>,
    fft: Arc<dyn Fft<F>>,
}

impl<F: Real> StftPlan<F> {
    pub fn new(cfg: &DspConfig) -> Result<Self> {
        if !cfg.n_fft.is_power_of_two() {
            return Err(Error::invalid("stft", format!("n_fft {} is not a power of two", cfg.n_fft)));
        }
        if cfg.win_length == 0 || cfg.win_length > cfg.n_fft || cfg.hop_length == 0 || cfg.hop_length > cfg.n_fft {
            return Err(Error::invalid(
                "stft",
                format!("window {} / hop {} incompatible with n_fft {}", cfg.win_length, cfg.hop_length, cfg.n_fft),
            ));
        }
        let fft = FftPlanner::new().plan_fft_forward(cfg.n_fft);
        Ok(Self {
            n_fft: cfg.n_fft,
            hop: cfg.hop_length,
            window: hann_window(cfg.win_length, cfg.n_fft).into_iter().map(F::lit).collect(),
            fft,
        })
    }

    pub fn n_freq(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn frames(&self, len: usize) -> usize {
        len.div_ceil(self.hop)
    }

    pub fn pad_left(&self) -> usize {
        (self.n_fft - self.hop) / 2
    }

    /// Source sample index feeding padded position `i`.
    pub fn source_index(&self, i: usize, len: usize) -> usize {
        reflect_index(i as isize - self.pad_left() as isize, len)
    }

    pub(crate) fn shared_fft(&self) -> Arc<dyn Fft<F>> {
        Arc::clone(&self.fft)
    }

    /// Complex spectrum, frequency-major `[n_fft/2+1 × T]`.
    pub fn spectrum(&self, x: &[F]) -> Result<(Vec<Complex<F>>, usize)> {
        if x.is_empty() {
            return Err(Error::invalid("stft", "empty signal"));
        }
        let t_frames = self.frames(x.len());
        let nf = self.n_freq();
        let mut out = vec![Complex::new(F::zero(), F::zero()); nf * t_frames];
        let mut buf = vec![Complex::new(F::zero(), F::zero()); self.n_fft];
        for t in 0..t_frames {
            for (n, b) in buf.iter_mut().enumerate() {
                let src = self.source_index(t * self.hop + n, x.len());
                *b = Complex::new(x[src] * self.window[n], F::zero());
            }
            self.fft.process(&mut buf);
            for k in 0..nf {
                out[k * t_frames + t] = buf[k];
            }
        }
        Ok((out, t_frames))
    }

    /// Magnitude spectrum `[n_fft/2+1 × T]`.
    pub fn magnitude(&self, x: &[F]) -> Result<(Vec<F>, usize)> {
        let (spec, t) = self.spectrum(x)?;
        Ok((spec.iter().map(|&c| magnitude(c)).collect(), t))
    }
}

#[inline]
pub fn magnitude<F: Real>(c: Complex<F>) -> F {
    (c.re * c.re + c.im * c.im).sqrt()
}

/// Complex STFT of a clip in 64-bit, frequency-major.
pub fn stft(clip: &AudioClip, cfg: &DspConfig) -> Result<(Vec<Complex<f64>>, usize)> {
    clip.validate()?;
    let plan = StftPlan::<f64>::new(cfg)?;
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    plan.spectrum(&x)
}

// ---------------------------------------------------------------------------
// Mel

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Edge frequencies (Hz) of the triangular filters: `n_mels + 2` points
/// equally spaced on the mel scale.
pub fn mel_edges(cfg: &DspConfig) -> Vec<f64> {
    let (lo, hi) = (hz_to_mel(cfg.fmin), hz_to_mel(cfg.fmax));
    (0..cfg.n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as f64 / (cfg.n_mels + 1) as f64))
        .collect()
}

/// HTK-scale triangular filterbank `[n_mels × n_fft/2+1]`, unnormalized.
pub fn mel_filterbank(cfg: &DspConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    let nf = cfg.n_freq();
    let edges = mel_edges(cfg);
    let mut fb = vec![0.0; cfg.n_mels * nf];
    for m in 0..cfg.n_mels {
        let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
        let row = &mut fb[m * nf..(m + 1) * nf];
        for (k, w) in row.iter_mut().enumerate() {
            let f = k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
            let up = (f - lo) / (c - lo);
            let down = (hi - f) / (hi - c);
            *w = up.min(down).max(0.0);
        }
        if row.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config(format!(
                "mel filter {m} ({lo:.1}-{hi:.1} Hz) covers no FFT bin; reduce n_mels or widen fmin/fmax"
            )));
        }
    }
    Ok(fb)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MelSpectrogram {
    pub n_mels: usize,
    pub frames: usize,
    /// Row-major `[n_mels × frames]` natural-log magnitudes.
    pub values: Vec<f32>,
    pub config: DspConfig,
}

impl MelSpectrogram {
    pub fn row(&self, m: usize) -> &[f32] {
        &self.values[m * self.frames..(m + 1) * self.frames]
    }

    pub fn at(&self, m: usize, t: usize) -> f32 {
        self.values[m * self.frames + t]
    }

    /// Column slice `[start, start + len)`.
    pub fn crop(&self, start: usize, len: usize) -> Result<Self> {
        if start + len > self.frames || len == 0 {
            return Err(Error::invalid("mel_crop", format!("{start}+{len} > {}", self.frames)));
        }
        let mut values = Vec::with_capacity(self.n_mels * len);
        for m in 0..self.n_mels {
            values.extend_from_slice(&self.row(m)[start..start + len]);
        }
        Ok(Self {
            n_mels: self.n_mels,
            frames: len,
            values,
            config: self.config.clone(),
        })
    }
}

/// Log-mel from a magnitude spectrum; shared with the differentiable path so
/// both produce identical values.
pub(crate) fn log_mel_from_magnitude<F: Real>(
    mag: &[F],
    fb: &[F],
    n_mels: usize,
    n_freq: usize,
    frames: usize,
    floor: F,
) -> Vec<F> {
    matmul_kernel(fb, mag, n_mels, n_freq, frames)
        .into_iter()
        .map(|v| if v > floor { v } else { floor }.ln())
        .collect()
}

pub fn mel_spectrogram(clip: &AudioClip, cfg: &DspConfig) -> Result<MelSpectrogram> {
    clip.validate()?;
    cfg.validate()?;
    if clip.sample_rate != cfg.sample_rate {
        return Err(Error::invalid(
            "mel_spectrogram",
            format!("clip sample rate {} != configured {} (no resampling)", clip.sample_rate, cfg.sample_rate),
        ));
    }
    let plan = StftPlan::<f32>::new(cfg)?;
    let (mag, frames) = plan.magnitude(&clip.samples)?;
    let fb: Vec<f32> = mel_filterbank(cfg)?.into_iter().map(|v| v as f32).collect();
    let values = log_mel_from_magnitude(&mag, &fb, cfg.n_mels, cfg.n_freq(), frames, cfg.log_floor as f32);
    Ok(MelSpectrogram {
        n_mels: cfg.n_mels,
        frames,
        values,
        config: cfg.clone(),
    })
}

// ---------------------------------------------------------------------------
// AMEL container: magic, version u32, n_mels u32, frames u32, f32 row-major.

pub const MEL_MAGIC: &[u8; 4] = b"AMEL";
pub const MEL_VERSION: u32 = 1;

pub fn write_mel(mel: &MelSpectrogram, path: &Path) -> Result<()> {
    let mut out = Vec::with_capacity(16 + mel.values.len() * 4);
    out.extend_from_slice(MEL_MAGIC);
    out.extend_from_slice(&MEL_VERSION.to_le_bytes());
    out.extend_from_slice(&(mel.n_mels as u32).to_le_bytes());
    out.extend_from_slice(&(mel.frames as u32).to_le_bytes());
    for v in &mel.values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_mel(path: &Path, cfg: &DspConfig) -> Result<MelSpectrogram> {
    let b = fs::read(path).map_err(|e| Error::io(path, e))?;
    if b.len() < 16 || &b[0..4] != MEL_MAGIC {
        return Err(Error::format(path, "not an AMEL file"));
    }
    let word = |i: usize| u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]]) as usize;
    if word(4) != MEL_VERSION as usize {
        return Err(Error::format(path, format!("unsupported AMEL version {}", word(4))));
    }
    let (n_mels, frames) = (word(8), word(12));
    if n_mels == 0 || frames == 0 || b.len() != 16 + n_mels * frames * 4 {
        return Err(Error::format(path, "AMEL header does not match payload size"));
    }
    if n_mels != cfg.n_mels {
        return Err(Error::format(path, format!("{n_mels} mel bands, config expects {}", cfg.n_mels)));
    }
    let values: Vec<f32> = b[16..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::format(path, "non-finite mel values"));
    }
    Ok(MelSpectrogram {
        n_mels,
        frames,
        values,
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn tmp() -> tempfile::TempDir {
        tempfile::tempdir().unwrap()
    }

    fn raw_wav(samples: &[i16], tag: u16, channels: u16, bits: u16) -> Vec<u8> {
        let data: Vec<u8> = samples.iter().flat_map(|s| s.to_le_bytes()).collect();
        let mut b = Vec::new();
        b.extend_from_slice(b"RIFF");
        b.extend_from_slice(&((36 + data.len()) as u32).to_le_bytes());
        b.extend_from_slice(b"WAVEfmt ");
        b.extend_from_slice(&16u32.to_le_bytes());
        b.extend_from_slice(&tag.to_le_bytes());
        b.extend_from_slice(&channels.to_le_bytes());
        b.extend_from_slice(&16000u32.to_le_bytes());
        b.extend_from_slice(&(16000u32 * 2).to_le_bytes());
        b.extend_from_slice(&2u16.to_le_bytes());
        b.extend_from_slice(&bits.to_le_bytes());
        b.extend_from_slice(b"data");
        b.extend_from_slice(&(data.len() as u32).to_le_bytes());
        b.extend_from_slice(&data);
        b
    }

    #[test]
    fn single_sample_scaling() {
        let d = tmp();
        let p = d.path().join("a.wav");
        fs::write(&p, raw_wav(&[0x7FFF], 1, 1, 16)).unwrap();
        let c = load_wav(&p).unwrap();
        assert_eq!(c.samples, vec![32767.0 / 32768.0]);
        assert!((c.samples[0] - 0.99997).abs() < 1e-5);
        assert_eq!(c.sample_rate, 16000);
        fs::write(&p, raw_wav(&[0], 1, 1, 16)).unwrap();
        assert_eq!(load_wav(&p).unwrap().samples, vec![0.0]);
    }

    #[test]
    fn rejects_unsupported_and_truncated() {
        let d = tmp();
        let p = d.path().join("a.wav");
        fs::write(&p, raw_wav(&[1, 2], 1, 2, 16)).unwrap();
        assert!(load_wav(&p).unwrap_err().to_string().contains("channels"));
        fs::write(&p, raw_wav(&[1, 2], 3, 1, 16)).unwrap();
        assert!(load_wav(&p).unwrap_err().to_string().contains("float"));
        fs::write(&p, &raw_wav(&[1, 2], 1, 1, 16)[..20]).unwrap();
        assert!(load_wav(&p).is_err());
        assert!(load_wav(&d.path().join("missing.wav")).is_err());
    }

    #[test]
    fn save_zeros_and_clamp() {
        let d = tmp();
        let p = d.path().join("z.wav");
        save_wav(&AudioClip::new(vec![0.0; 100], 16000).unwrap(), &p).unwrap();
        let c = load_wav(&p).unwrap();
        assert_eq!(c.samples, vec![0.0; 100]);
        save_wav(&AudioClip::new(vec![1.5, -3.0], 16000).unwrap(), &p).unwrap();
        let b = fs::read(&p).unwrap();
        assert_eq!(i16::from_le_bytes([b[44], b[45]]), 0x7FFF);
        assert_eq!(i16::from_le_bytes([b[46], b[47]]), -32768);
    }

    #[test]
    fn random_round_trip_within_one_step() {
        let d = tmp();
        let p = d.path().join("r.wav");
        let mut rng = SplitMix64::new(5);
        let samples: Vec<f32> = (0..2000).map(|_| rng.uniform_in(-1.0, 1.0) as f32).collect();
        let clip = AudioClip::new(samples, 16000).unwrap();
        save_wav(&clip, &p).unwrap();
        let back = load_wav(&p).unwrap();
        for (a, b) in clip.samples.iter().zip(&back.samples) {
            assert!((a - b).abs() <= 1.0 / 32768.0);
        }
        save_wav(&back, &p).unwrap();
        assert_eq!(load_wav(&p).unwrap(), back);
    }

    #[test]
    fn reflect_indices() {
        let v: Vec<usize> = (-3..7).map(|i| reflect_index(i, 4)).collect();
        assert_eq!(v, vec![3, 2, 1, 0, 1, 2, 3, 2, 1, 0]);
        assert_eq!(reflect_index(-5, 1), 0);
    }

    #[test]
    fn silence_has_zero_magnitude() {
        let cfg = DspConfig::default();
        let clip = AudioClip::new(vec![0.0; 3000], 16000).unwrap();
        let (spec, t) = stft(&clip, &cfg).unwrap();
        assert_eq!(t, 12);
        assert!(spec.iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn rejects_non_power_of_two() {
        let cfg = DspConfig {
            n_fft: 1000,
            win_length: 1000,
            ..DspConfig::default()
        };
        let clip = AudioClip::new(vec![0.1; 3000], 16000).unwrap();
        assert!(stft(&clip, &cfg).is_err());
    }

    #[test]
    fn bin_centred_sine_peaks_at_bin() {
        let cfg = DspConfig::default();
        let k = 37;
        let f = k as f64 * 16000.0 / 1024.0;
        // a cosine is even about both ends when 2(L-1)·k/n_fft is an integer,
        // so reflect padding continues it without a phase break
        let samples: Vec<f32> = (0..512 * 15 + 1)
            .map(|n| (0.5 * (2.0 * std::f64::consts::PI * f * n as f64 / 16000.0).cos()) as f32)
            .collect();
        let (spec, t) = stft(&AudioClip::new(samples, 16000).unwrap(), &cfg).unwrap();
        for frame in 0..t {
            let best = (0..cfg.n_freq())
                .max_by(|&a, &b| spec[a * t + frame].norm().partial_cmp(&spec[b * t + frame].norm()).unwrap())
                .unwrap();
            assert_eq!(best, k, "frame {frame}");
        }
    }

    #[test]
    fn parseval_per_frame() {
        let cfg = DspConfig::default();
        let mut rng = SplitMix64::new(9);
        let x: Vec<f64> = (0..3000).map(|_| rng.uniform_in(-1.0, 1.0)).collect();
        let plan = StftPlan::<f64>::new(&cfg).unwrap();
        let (spec, t) = plan.spectrum(&x).unwrap();
        let n = cfg.n_fft;
        for frame in 0..t {
            let energy: f64 = (0..n)
                .map(|i| {
                    let v = x[plan.source_index(frame * cfg.hop_length + i, x.len())] * plan.window[i];
                    v * v
                })
                .sum();
            let mut s = 0.0;
            for k in 0..cfg.n_freq() {
                let m2 = spec[k * t + frame].norm_sqr();
                s += if k == 0 || k == n / 2 { m2 } else { 2.0 * m2 };
            }
            assert!((s / n as f64 - energy).abs() <= 1e-6 * energy);
        }
    }

    #[test]
    fn filterbank_rows_and_areas() {
        let cfg = DspConfig::default();
        let fb = mel_filterbank(&cfg).unwrap();
        let nf = cfg.n_freq();
        let edges = mel_edges(&cfg);
        for m in 0..cfg.n_mels {
            let row = &fb[m * nf..(m + 1) * nf];
            assert!(row.iter().all(|&w| w >= 0.0));
            let nz: Vec<usize> = (0..nf).filter(|&k| row[k] > 0.0).collect();
            assert!(!nz.is_empty());
            assert_eq!(nz.last().unwrap() - nz[0] + 1, nz.len(), "support of row {m} not contiguous");
            // independent trapezoid evaluation of the same triangle at every bin
            let (lo, c, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let area: f64 = (0..nf)
                .map(|k| {
                    let f = k as f64 * 16000.0 / 1024.0;
                    if f > lo && f <= c {
                        (f - lo) / (c - lo)
                    } else if f > c && f < hi {
                        (hi - f) / (hi - c)
                    } else {
                        0.0
                    }
                })
                .sum();
            let sum: f64 = row.iter().sum();
            assert!((sum - area).abs() < 1e-9, "row {m}: {sum} vs {area}");
            if m > 0 {
                assert!(edges[m + 1] > edges[m]);
            }
        }
    }

    #[test]
    fn degenerate_filterbank_rejected() {
        let cfg = DspConfig {
            n_mels: 400,
            fmax: 1000.0,
            ..DspConfig::default()
        };
        assert!(mel_filterbank(&cfg).is_err());
    }

    #[test]
    fn silence_mel_is_floor() {
        let cfg = DspConfig::default();
        let mel = mel_spectrogram(&AudioClip::new(vec![0.0; 1000], 16000).unwrap(), &cfg).unwrap();
        let floor = (1e-5f32).ln();
        assert!(mel.values.iter().all(|&v| v == floor));
    }

    #[test]
    fn frame_count_law() {
        let cfg = DspConfig::default();
        for t0 in [1usize, 4, 17] {
            let clip = AudioClip::new(vec![0.01; 256 * t0], 16000).unwrap();
            assert_eq!(mel_spectrogram(&clip, &cfg).unwrap().frames, t0);
        }
        for len in [1usize, 255, 257, 1000] {
            let clip = AudioClip::new(vec![0.01; len], 16000).unwrap();
            assert_eq!(mel_spectrogram(&clip, &cfg).unwrap().frames, len.div_ceil(256));
        }
    }

    #[test]
    fn half_gain_shifts_log_mel() {
        let cfg = DspConfig::default();
        let mut rng = SplitMix64::new(2);
        let x: Vec<f32> = (0..4096).map(|_| rng.uniform_in(-0.8, 0.8) as f32).collect();
        let half: Vec<f32> = x.iter().map(|v| v * 0.5).collect();
        let a = mel_spectrogram(&AudioClip::new(x, 16000).unwrap(), &cfg).unwrap();
        let b = mel_spectrogram(&AudioClip::new(half, 16000).unwrap(), &cfg).unwrap();
        let floor = (1e-5f32).ln();
        for (va, vb) in a.values.iter().zip(&b.values) {
            if *vb > floor + 1.0 {
                assert!((va - vb - 2f32.ln()).abs() < 1e-4);
            }
        }
    }

    #[test]
    fn sample_rate_mismatch_is_error() {
        let clip = AudioClip::new(vec![0.0; 512], 22050).unwrap();
        assert!(mel_spectrogram(&clip, &DspConfig::default()).is_err());
    }

    #[test]
    fn amel_round_trip_and_corruption() {
        let d = tmp();
        let p = d.path().join("m.amel");
        let cfg = DspConfig::default();
        let mel = mel_spectrogram(&AudioClip::new(vec![0.1; 2000], 16000).unwrap(), &cfg).unwrap();
        write_mel(&mel, &p).unwrap();
        assert_eq!(read_mel(&p, &cfg).unwrap(), mel);
        let mut b = fs::read(&p).unwrap();
        b[12] = 99;
        fs::write(&p, b).unwrap();
        assert!(read_mel(&p, &cfg).is_err());
    }
}
