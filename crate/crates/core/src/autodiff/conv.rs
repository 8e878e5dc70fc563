//! One-dimensional convolution family on `[channels × length]` tensors.

use super::ops::dims2;
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv1dSpec {
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
    pub groups: usize,
}

impl Default for Conv1dSpec {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
            dilation: 1,
            groups: 1,
        }
    }
}

impl Conv1dSpec {
    pub fn padded(padding: usize) -> Self {
        Self {
            padding,
            ..Self::default()
        }
    }

    pub fn output_len(&self, len: usize, kernel: usize) -> Option<usize> {
        let span = self.dilation * (kernel - 1) + 1;
        let padded = len + 2 * self.padding;
        (padded >= span).then(|| (padded - span) / self.stride + 1)
    }
}

/// Range of `t` in `[0, n_t)` with `0 <= t*stride + off < len`.
fn valid_range(off: isize, stride: usize, n_t: usize, len: usize) -> (usize, usize) {
    let s = stride as isize;
    let t0 = if off >= 0 { 0 } else { ((-off) + s - 1) / s };
    let last = len as isize - 1 - off;
    let t1 = if last < 0 { 0 } else { (last / s + 1).min(n_t as isize) };
    let t0 = t0 as usize;
    let t1 = t1.max(0) as usize;
    (t0, t1.max(t0))
}

#[inline]
fn axpy<F: Real>(y: &mut [F], a: F, x: &[F]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let n = a.len().min(b.len());
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a[..n].chunks_exact(8), b[..n].chunks_exact(8));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        for j in 0..8 {
            acc[j] += x[j] * y[j];
        }
    }
    let mut tail = F::zero();
    for (&x, &y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// Cross-correlation. `input [C_in × L]`, `weight [C_out × C_in/groups × K]`,
/// optional `bias [C_out]`.
pub fn conv1d<F: Real>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    spec: Conv1dSpec,
) -> Result<Tensor<F>> {
    let (cin, len) = dims2("conv1d", input)?;
    let &[cout, cin_g, k] = weight.shape() else {
        return Err(Error::shape("conv1d", format!("weight rank 3 expected, got {:?}", weight.shape())));
    };
    let Conv1dSpec {
        stride,
        padding,
        dilation,
        groups,
    } = spec;
    if stride == 0 || dilation == 0 || groups == 0 {
        return Err(Error::invalid("conv1d", "stride, dilation and groups must be positive"));
    }
    if cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
        return Err(Error::shape(
            "conv1d",
            format!("input channels {cin}, weight {:?}, groups {groups}", weight.shape()),
        ));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape("conv1d", format!("bias {:?} for {cout} outputs", b.shape())));
        }
    }
    let lout = spec
        .output_len(len, k)
        .ok_or_else(|| Error::shape("conv1d", format!("input length {len} too short for kernel {k}")))?;
    let cout_g = cout / groups;

    let x = input.data();
    let w = weight.data();
    let mut out = vec![F::zero(); cout * lout];
    if let Some(b) = bias {
        let b = b.data();
        for co in 0..cout {
            out[co * lout..(co + 1) * lout].fill(b[co]);
        }
    }
    for co in 0..cout {
        let g = co / cout_g;
        let orow = &mut out[co * lout..(co + 1) * lout];
        for cig in 0..cin_g {
            let xrow = &x[(g * cin_g + cig) * len..(g * cin_g + cig + 1) * len];
            for kk in 0..k {
                let wv = w[(co * cin_g + cig) * k + kk];
                let off = (kk * dilation) as isize - padding as isize;
                let (t0, t1) = valid_range(off, stride, lout, len);
                if t0 == t1 {
                    continue;
                }
                if stride == 1 {
                    let s0 = (t0 as isize + off) as usize;
                    axpy(&mut orow[t0..t1], wv, &xrow[s0..s0 + (t1 - t0)]);
                } else {
                    for t in t0..t1 {
                        orow[t] += wv * xrow[((t * stride) as isize + off) as usize];
                    }
                }
            }
        }
    }
    drop(x);
    drop(w);

    let (xin, wt) = (input.clone(), weight.clone());
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Tensor::from_op(
        "conv1d",
        vec![cout, lout],
        out,
        parents,
        Box::new(move |go, needs| {
            let x = xin.data();
            let w = wt.data();
            let mut gx = needs[0].then(|| vec![F::zero(); cin * len]);
            let mut gw = needs[1].then(|| vec![F::zero(); cout * cin_g * k]);
            for co in 0..cout {
                let g = co / cout_g;
                let grow = &go[co * lout..(co + 1) * lout];
                for cig in 0..cin_g {
                    let ci = g * cin_g + cig;
                    for kk in 0..k {
                        let widx = (co * cin_g + cig) * k + kk;
                        let off = (kk * dilation) as isize - padding as isize;
                        let (t0, t1) = valid_range(off, stride, lout, len);
                        if t0 == t1 {
                            continue;
                        }
                        if stride == 1 {
                            let s0 = (t0 as isize + off) as usize;
                            let n = t1 - t0;
                            if let Some(gx) = gx.as_mut() {
                                axpy(&mut gx[ci * len + s0..ci * len + s0 + n], w[widx], &grow[t0..t1]);
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += dot(&grow[t0..t1], &x[ci * len + s0..ci * len + s0 + n]);
                            }
                        } else {
                            let mut acc = F::zero();
                            for t in t0..t1 {
                                let src = ci * len + ((t * stride) as isize + off) as usize;
                                if let Some(gx) = gx.as_mut() {
                                    gx[src] += w[widx] * grow[t];
                                }
                                acc += grow[t] * x[src];
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[widx] += acc;
                            }
                        }
                    }
                }
            }
            let mut res = vec![gx, gw];
            if needs.len() > 2 {
                res.push(needs[2].then(|| {
                    (0..cout)
                        .map(|co| go[co * lout..(co + 1) * lout].iter().copied().sum())
                        .collect()
                }));
            }
            res
        }),
    )
}

/// Adjoint of [`conv1d`] (no groups, no dilation). `input [C_in × L]`,
/// `weight [C_in × C_out × K]`, output length `(L−1)·stride − 2·padding + K`.
pub fn conv_transpose1d<F: Real>(
    input: &Tensor<F>,
    weight: &Tensor<F>,
    bias: Option<&Tensor<F>>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<F>> {
    let (cin, len) = dims2("conv_transpose1d", input)?;
    let &[wcin, cout, k] = weight.shape() else {
        return Err(Error::shape(
            "conv_transpose1d",
            format!("weight rank 3 expected, got {:?}", weight.shape()),
        ));
    };
    if wcin != cin {
        return Err(Error::shape(
            "conv_transpose1d",
            format!("input channels {cin}, weight {:?}", weight.shape()),
        ));
    }
    if stride == 0 {
        return Err(Error::invalid("conv_transpose1d", "stride must be positive"));
    }
    if let Some(b) = bias {
        if b.shape() != [cout] {
            return Err(Error::shape(
                "conv_transpose1d",
                format!("bias {:?} for {cout} outputs", b.shape()),
            ));
        }
    }
    let full = (len - 1) * stride + k;
    if full <= 2 * padding {
        return Err(Error::shape(
            "conv_transpose1d",
            format!("output length would be < 1 (len {len}, kernel {k}, padding {padding})"),
        ));
    }
    let lout = full - 2 * padding;

    let x = input.data();
    let w = weight.data();
    let mut out = vec![F::zero(); cout * lout];
    if let Some(b) = bias {
        let b = b.data();
        for co in 0..cout {
            out[co * lout..(co + 1) * lout].fill(b[co]);
        }
    }
    for ci in 0..cin {
        let xrow = &x[ci * len..(ci + 1) * len];
        for co in 0..cout {
            let orow = &mut out[co * lout..(co + 1) * lout];
            for kk in 0..k {
                let wv = w[(ci * cout + co) * k + kk];
                let off = kk as isize - padding as isize;
                let (t0, t1) = valid_range(off, stride, len, lout);
                for t in t0..t1 {
                    orow[((t * stride) as isize + off) as usize] += wv * xrow[t];
                }
            }
        }
    }
    drop(x);
    drop(w);

    let (xin, wt) = (input.clone(), weight.clone());
    let mut parents = vec![input.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    Tensor::from_op(
        "conv_transpose1d",
        vec![cout, lout],
        out,
        parents,
        Box::new(move |go, needs| {
            let x = xin.data();
            let w = wt.data();
            let mut gx = needs[0].then(|| vec![F::zero(); cin * len]);
            let mut gw = needs[1].then(|| vec![F::zero(); cin * cout * k]);
            for ci in 0..cin {
                for co in 0..cout {
                    let grow = &go[co * lout..(co + 1) * lout];
                    for kk in 0..k {
                        let widx = (ci * cout + co) * k + kk;
                        let off = kk as isize - padding as isize;
                        let (t0, t1) = valid_range(off, stride, len, lout);
                        let mut acc = F::zero();
                        for t in t0..t1 {
                            let gv = grow[((t * stride) as isize + off) as usize];
                            if let Some(gx) = gx.as_mut() {
                                gx[ci * len + t] += w[widx] * gv;
                            }
                            acc += gv * x[ci * len + t];
                        }
                        if let Some(gw) = gw.as_mut() {
                            gw[widx] += acc;
                        }
                    }
                }
            }
            let mut res = vec![gx, gw];
            if needs.len() > 2 {
                res.push(needs[2].then(|| {
                    (0..cout)
                        .map(|co| go[co * lout..(co + 1) * lout].iter().copied().sum())
                        .collect()
                }));
            }
            res
        }),
    )
}

/// Average pooling with zero padding counted in every window.
pub fn avg_pool1d<F: Real>(input: &Tensor<F>, kernel: usize, stride: usize, padding: usize) -> Result<Tensor<F>> {
    let (c, len) = dims2("avg_pool1d", input)?;
    if kernel == 0 || stride == 0 {
        return Err(Error::invalid("avg_pool1d", "kernel and stride must be positive"));
    }
    let spec = Conv1dSpec {
        stride,
        padding,
        ..Conv1dSpec::default()
    };
    let lout = spec.output_len(len, kernel).ok_or_else(|| {
        Error::shape("avg_pool1d", format!("length {len} shorter than one window of {kernel}"))
    })?;
    let inv = F::one() / F::lit(kernel as f64);
    let x = input.data();
    let mut out = vec![F::zero(); c * lout];
    for ch in 0..c {
        let xrow = &x[ch * len..(ch + 1) * len];
        let orow = &mut out[ch * lout..(ch + 1) * lout];
        for kk in 0..kernel {
            let off = kk as isize - padding as isize;
            let (t0, t1) = valid_range(off, stride, lout, len);
            for t in t0..t1 {
                orow[t] += xrow[((t * stride) as isize + off) as usize];
            }
        }
        for v in orow.iter_mut() {
            *v *= inv;
        }
    }
    drop(x);
    Tensor::from_op(
        "avg_pool1d",
        vec![c, lout],
        out,
        vec![input.clone()],
        Box::new(move |go, _| {
            let mut gx = vec![F::zero(); c * len];
            for ch in 0..c {
                for kk in 0..kernel {
                    let off = kk as isize - padding as isize;
                    let (t0, t1) = valid_range(off, stride, lout, len);
                    for t in t0..t1 {
                        gx[ch * len + ((t * stride) as isize + off) as usize] += go[ch * lout + t] * inv;
                    }
                }
            }
            vec![Some(gx)]
        }),
    )
}

/// `[C × L] → [C × ceil(L/p) × p]`: zero-pads to a multiple of `p` and folds
/// so the last axis indexes the phase within one period.
pub fn periodize<F: Real>(input: &Tensor<F>, period: usize) -> Result<Tensor<F>> {
    let (c, len) = dims2("periodize", input)?;
    if period == 0 {
        return Err(Error::invalid("periodize", "period must be >= 1"));
    }
    let h = len.div_ceil(period);
    let x = input.data();
    let mut out = vec![F::zero(); c * h * period];
    for ch in 0..c {
        out[ch * h * period..ch * h * period + len].copy_from_slice(&x[ch * len..(ch + 1) * len]);
    }
    drop(x);
    Tensor::from_op(
        "periodize",
        vec![c, h, period],
        out,
        vec![input.clone()],
        Box::new(move |go, _| {
            let mut gx = vec![F::zero(); c * len];
            for ch in 0..c {
                gx[ch * len..(ch + 1) * len].copy_from_slice(&go[ch * h * period..ch * h * period + len]);
            }
            vec![Some(gx)]
        }),
    )
}

/// Selects index `j` of the last axis: `[C × H × W] → [C × H]`.
pub fn select_last<F: Real>(input: &Tensor<F>, j: usize) -> Result<Tensor<F>> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::shape("select_last", format!("rank 3 expected, got {:?}", input.shape())));
    };
    if j >= w {
        return Err(Error::invalid("select_last", format!("index {j} >= {w}")));
    }
    let x = input.data();
    let out: Vec<F> = (0..c * h).map(|r| x[r * w + j]).collect();
    drop(x);
    Tensor::from_op(
        "select_last",
        vec![c, h],
        out,
        vec![input.clone()],
        Box::new(move |go, _| {
            let mut gx = vec![F::zero(); c * h * w];
            for (r, &g) in go.iter().enumerate() {
                gx[r * w + j] = g;
            }
            vec![Some(gx)]
        }),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t2(c: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[c, v.len() / c], v, true).unwrap()
    }

    #[test]
    fn identity_kernel() {
        let x = t2(1, &[1., -2., 3.5, 4.]);
        let w = Tensor::from_f64(&[1, 1, 1], &[1.0], true).unwrap();
        let y = conv1d(&x, &w, None, Conv1dSpec::default()).unwrap();
        assert_eq!(y.to_vec(), x.to_vec());
    }

    #[test]
    fn box_kernel_sums() {
        let x = t2(1, &[1., 2., 3., 4., 5.]);
        let w = Tensor::from_f64(&[1, 1, 3], &[1., 1., 1.], true).unwrap();
        let y = conv1d(&x, &w, None, Conv1dSpec::default()).unwrap();
        assert_eq!(y.to_vec(), vec![6., 9., 12.]);
        let dil = Conv1dSpec {
            dilation: 2,
            ..Conv1dSpec::default()
        };
        assert_eq!(conv1d(&x, &w, None, dil).unwrap().to_vec(), vec![9.]);
    }

    #[test]
    fn conv_rejects_short_input() {
        let x = t2(1, &[1., 2.]);
        let w = Tensor::from_f64(&[1, 1, 3], &[1., 1., 1.], true).unwrap();
        assert!(conv1d(&x, &w, None, Conv1dSpec::default()).is_err());
    }

    #[test]
    fn transpose_stride_two() {
        let x = t2(1, &[1., 1.]);
        let w = Tensor::from_f64(&[1, 1, 2], &[1., 1.], true).unwrap();
        let y = conv_transpose1d(&x, &w, None, 2, 0).unwrap();
        assert_eq!(y.to_vec(), vec![1., 1., 1., 1.]);
    }

    #[test]
    fn transpose_zero_input_gives_bias() {
        let x = Tensor::<f64>::zeros(&[2, 3]).unwrap();
        let w = Tensor::from_f64(&[2, 2, 4], &[0.3; 16], true).unwrap();
        let b = Tensor::from_f64(&[2], &[0.5, -1.0], true).unwrap();
        let y = conv_transpose1d(&x, &w, Some(&b), 2, 1).unwrap();
        assert_eq!(y.shape(), &[2, 6]);
        let v = y.to_vec();
        assert!(v[..6].iter().all(|&a| a == 0.5));
        assert!(v[6..].iter().all(|&a| a == -1.0));
    }

    #[test]
    fn pool_values() {
        let x = t2(1, &[0., 2., 4., 6.]);
        assert_eq!(avg_pool1d(&x, 2, 2, 0).unwrap().to_vec(), vec![1., 5.]);
        let c = t2(1, &[3.0; 16]);
        let y = avg_pool1d(&c, 4, 2, 1).unwrap().to_vec();
        assert!(y[1..y.len() - 1].iter().all(|&v| v == 3.0));
        let once = avg_pool1d(&c, 4, 2, 1).unwrap();
        let twice = avg_pool1d(&once, 4, 2, 1).unwrap();
        assert_eq!(twice.shape()[1], 4);
    }

    #[test]
    fn periodize_layout() {
        let x = t2(1, &[0., 1., 2., 3., 4., 5.]);
        let p = periodize(&x, 2).unwrap();
        assert_eq!(p.shape(), &[1, 3, 2]);
        let v = p.to_vec();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(v[i * 2 + j], (2 * i + j) as f64);
            }
        }
        let odd = periodize(&t2(1, &[1., 2., 3., 4., 5.]), 2).unwrap();
        assert_eq!(odd.to_vec()[5], 0.0);
        let same = periodize(&x, 1).unwrap();
        assert_eq!(same.shape(), &[1, 6, 1]);
        assert_eq!(same.to_vec(), x.to_vec());
        assert_eq!(select_last(&p, 1).unwrap().to_vec(), vec![1., 3., 5.]);
    }
}
