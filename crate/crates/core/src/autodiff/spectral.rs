//! Differentiable STFT magnitude and log-mel projection.

use rustfft::num_complex::Complex;

use super::tensor::{Real, Tensor};
use crate::audio::{magnitude, StftPlan};
use crate::error::{Error, Result};

/// `|STFT(x)|` of a waveform `[L]` or `[1 × L]`, frequency-major `[n_fft/2+1 × T]`.
///
/// Where a bin has zero magnitude its gradient is taken as zero.
pub fn stft_magnitude<F: Real>(x: &Tensor<F>, plan: &StftPlan<F>) -> Result<Tensor<F>> {
    let len = match x.shape() {
        [l] | [1, l] => *l,
        s => return Err(Error::shape("stft_magnitude", format!("expected waveform, got {s:?}"))),
    };
    let (spec, frames) = plan.spectrum(&x.data())?;
    let mag: Vec<F> = spec.iter().map(|&c| magnitude(c)).collect();
    let nf = plan.n_freq();
    let n_fft = plan.n_fft;
    let hop = plan.hop;
    let window = plan.window.clone();
    let src: Vec<usize> = (0..(frames - 1) * hop + n_fft).map(|i| plan.source_index(i, len)).collect();
    let fft = plan.shared_fft();
    Tensor::from_op(
        "stft_magnitude",
        vec![nf, frames],
        mag.clone(),
        vec![x.clone()],
        Box::new(move |g, _| {
            let mut gx = vec![F::zero(); len];
            let mut buf = vec![Complex::new(F::zero(), F::zero()); n_fft];
            for t in 0..frames {
                for (k, b) in buf.iter_mut().enumerate() {
                    *b = if k < nf && mag[k * frames + t] > F::zero() {
                        spec[k * frames + t].conj() * (g[k * frames + t] / mag[k * frames + t])
                    } else {
                        Complex::new(F::zero(), F::zero())
                    };
                }
                fft.process(&mut buf);
                for (n, b) in buf.iter().enumerate() {
                    gx[src[t * hop + n]] += window[n] * b.re;
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// `log(max(fb · |STFT(x)|, floor))`, `[n_mels × T]`.
pub fn log_mel<F: Real>(x: &Tensor<F>, plan: &StftPlan<F>, filterbank: &Tensor<F>, floor: f64) -> Result<Tensor<F>> {
    filterbank.matmul(&stft_magnitude(x, plan)?)?.clamp_min(floor)?.log()
}
