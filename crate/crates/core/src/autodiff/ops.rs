//! Elementwise arithmetic, activations, reductions and reshapes.
//!
//! Broadcasting is limited to same-shape operands or a single-element
//! operand on either side.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

#[derive(Clone, Copy)]
enum Bcast {
    Same,
    LeftScalar,
    RightScalar,
}

fn bcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<(Bcast, Vec<usize>)> {
    let na: usize = a.iter().product();
    let nb: usize = b.iter().product();
    if a == b {
        Ok((Bcast::Same, a.to_vec()))
    } else if nb == 1 {
        Ok((Bcast::RightScalar, a.to_vec()))
    } else if na == 1 {
        Ok((Bcast::LeftScalar, b.to_vec()))
    } else {
        Err(Error::shape(op, format!("{a:?} vs {b:?}")))
    }
}

/// Reduces a full-size gradient onto a broadcast operand.
fn reduce_to<F: Real>(g: Vec<F>, scalar_side: bool) -> Vec<F> {
    if scalar_side {
        vec![g.into_iter().sum()]
    } else {
        g
    }
}

impl<F: Real> Tensor<F> {
    fn binary(
        &self,
        other: &Tensor<F>,
        op: &'static str,
        f: fn(F, F) -> F,
        // (dy/da, dy/db) given (a, b)
        d: fn(F, F) -> (F, F),
    ) -> Result<Tensor<F>> {
        let (mode, shape) = bcast(op, self.shape(), other.shape())?;
        let a = self.data();
        let b = other.data();
        let n: usize = shape.iter().product();
        let at = |i: usize| match mode {
            Bcast::LeftScalar => a[0],
            _ => a[i],
        };
        let bt = |i: usize| match mode {
            Bcast::RightScalar => b[0],
            _ => b[i],
        };
        let out: Vec<F> = (0..n).map(|i| f(at(i), bt(i))).collect();
        drop(a);
        drop(b);
        let (sa, sb) = (self.clone(), other.clone());
        Tensor::from_op(
            op,
            shape,
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let a = sa.data();
                let b = sb.data();
                let mut ga = needs[0].then(|| Vec::with_capacity(g.len()));
                let mut gb = needs[1].then(|| Vec::with_capacity(g.len()));
                for (i, &gi) in g.iter().enumerate() {
                    let ai = if matches!(mode, Bcast::LeftScalar) { a[0] } else { a[i] };
                    let bi = if matches!(mode, Bcast::RightScalar) { b[0] } else { b[i] };
                    let (da, db) = d(ai, bi);
                    if let Some(v) = ga.as_mut() {
                        v.push(gi * da);
                    }
                    if let Some(v) = gb.as_mut() {
                        v.push(gi * db);
                    }
                }
                vec![
                    ga.map(|v| reduce_to(v, matches!(mode, Bcast::LeftScalar))),
                    gb.map(|v| reduce_to(v, matches!(mode, Bcast::RightScalar))),
                ]
            }),
        )
    }

    pub fn add(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, "add", |a, b| a + b, |_, _| (F::one(), F::one()))
    }

    pub fn sub(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, "sub", |a, b| a - b, |_, _| (F::one(), -F::one()))
    }

    pub fn mul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        self.binary(other, "mul", |a, b| a * b, |a, b| (b, a))
    }

    /// Elementwise map with derivative expressed through input `x` and output `y`.
    fn unary(
        &self,
        op: &'static str,
        f: impl Fn(F) -> F,
        deriv: impl Fn(F, F) -> F + 'static,
        keep_output: bool,
    ) -> Result<Tensor<F>> {
        let out: Vec<F> = self.data().iter().map(|&x| f(x)).collect();
        let saved_y = keep_output.then(|| out.clone());
        let src = self.clone();
        Tensor::from_op(
            op,
            self.shape().to_vec(),
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let x = src.data();
                let gx = match &saved_y {
                    Some(y) => g
                        .iter()
                        .zip(x.iter().zip(y))
                        .map(|(&gi, (&xi, &yi))| gi * deriv(xi, yi))
                        .collect(),
                    None => g
                        .iter()
                        .zip(x.iter())
                        .map(|(&gi, &xi)| gi * deriv(xi, F::zero()))
                        .collect(),
                };
                vec![Some(gx)]
            }),
        )
    }

    pub fn scalar_mul(&self, c: f64) -> Result<Tensor<F>> {
        let c = F::lit(c);
        self.unary("scalar_mul", move |x| x * c, move |_, _| c, false)
    }

    pub fn add_scalar(&self, c: f64) -> Result<Tensor<F>> {
        let c = F::lit(c);
        self.unary("add_scalar", move |x| x + c, |_, _| F::one(), false)
    }

    pub fn neg(&self) -> Result<Tensor<F>> {
        self.scalar_mul(-1.0)
    }

    pub fn leaky_relu(&self, slope: f64) -> Result<Tensor<F>> {
        let s = F::lit(slope);
        self.unary(
            "leaky_relu",
            move |x| if x > F::zero() { x } else { x * s },
            move |x, _| if x > F::zero() { F::one() } else { s },
            false,
        )
    }

    pub fn relu(&self) -> Result<Tensor<F>> {
        self.unary(
            "relu",
            |x| if x > F::zero() { x } else { F::zero() },
            |x, _| if x > F::zero() { F::one() } else { F::zero() },
            false,
        )
    }

    pub fn tanh(&self) -> Result<Tensor<F>> {
        self.unary("tanh", |x| x.tanh(), |_, y| F::one() - y * y, true)
    }

    pub fn log(&self) -> Result<Tensor<F>> {
        self.unary("log", |x| x.ln(), |x, _| F::one() / x, false)
    }

    pub fn exp(&self) -> Result<Tensor<F>> {
        self.unary("exp", |x| x.exp(), |_, y| y, true)
    }

    pub fn abs(&self) -> Result<Tensor<F>> {
        self.unary("abs", |x| x.abs(), |x, _| x.signum(), false)
    }

    pub fn square(&self) -> Result<Tensor<F>> {
        self.unary("square", |x| x * x, |x, _| x + x, false)
    }

    /// max(x, lo); the gradient is passed only where x > lo.
    pub fn clamp_min(&self, lo: f64) -> Result<Tensor<F>> {
        let lo = F::lit(lo);
        self.unary(
            "clamp_min",
            move |x| if x > lo { x } else { lo },
            move |x, _| if x > lo { F::one() } else { F::zero() },
            false,
        )
    }

    pub fn sum(&self) -> Result<Tensor<F>> {
        let n = self.numel();
        let s: F = self.data().iter().copied().sum();
        Tensor::from_op(
            "sum",
            vec![1],
            vec![s],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0]; n])]),
        )
    }

    pub fn mean(&self) -> Result<Tensor<F>> {
        let n = self.numel();
        let s: F = self.data().iter().copied().sum();
        let inv = F::one() / F::lit(n as f64);
        Tensor::from_op(
            "mean",
            vec![1],
            vec![s / F::lit(n as f64)],
            vec![self.clone()],
            Box::new(move |g, _| vec![Some(vec![g[0] * inv; n])]),
        )
    }

    fn reduce_axis(&self, axis: usize, op: &'static str, scale_by_len: bool) -> Result<Tensor<F>> {
        let shape = self.shape().to_vec();
        if axis >= shape.len() {
            return Err(Error::invalid(
                op,
                format!("axis {axis} out of range for rank {}", shape.len()),
            ));
        }
        let outer: usize = shape[..axis].iter().product();
        let len = shape[axis];
        let inner: usize = shape[axis + 1..].iter().product();
        let divisor = if scale_by_len { F::lit(len as f64) } else { F::one() };
        let scale = F::one() / divisor;
        let x = self.data();
        let mut out = vec![F::zero(); outer * inner];
        for o in 0..outer {
            for a in 0..len {
                let base = (o * len + a) * inner;
                for i in 0..inner {
                    out[o * inner + i] += x[base + i];
                }
            }
        }
        for v in out.iter_mut() {
            *v = *v / divisor;
        }
        drop(x);
        let mut out_shape: Vec<usize> = shape.clone();
        out_shape.remove(axis);
        if out_shape.is_empty() {
            out_shape.push(1);
        }
        Tensor::from_op(
            op,
            out_shape,
            out,
            vec![self.clone()],
            Box::new(move |g, _| {
                let mut gx = vec![F::zero(); outer * len * inner];
                for o in 0..outer {
                    for a in 0..len {
                        let base = (o * len + a) * inner;
                        for i in 0..inner {
                            gx[base + i] = g[o * inner + i] * scale;
                        }
                    }
                }
                vec![Some(gx)]
            }),
        )
    }

    pub fn sum_axis(&self, axis: usize) -> Result<Tensor<F>> {
        self.reduce_axis(axis, "sum_axis", false)
    }

    pub fn mean_axis(&self, axis: usize) -> Result<Tensor<F>> {
        self.reduce_axis(axis, "mean_axis", true)
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor<F>> {
        let n: usize = shape.iter().product();
        if n != self.numel() {
            return Err(Error::shape(
                "reshape",
                format!("{:?} -> {shape:?}", self.shape()),
            ));
        }
        Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.to_vec(),
            vec![self.clone()],
            Box::new(|g, _| vec![Some(g.to_vec())]),
        )
    }

    pub fn flatten(&self) -> Result<Tensor<F>> {
        self.reshape(&[self.numel()])
    }

    /// `[m × k] · [k × n]`.
    pub fn matmul(&self, other: &Tensor<F>) -> Result<Tensor<F>> {
        let (m, k) = dims2("matmul", self)?;
        let (k2, n) = dims2("matmul", other)?;
        if k != k2 {
            return Err(Error::shape(
                "matmul",
                format!("{:?} x {:?}", self.shape(), other.shape()),
            ));
        }
        let out = matmul_kernel(&self.data(), &other.data(), m, k, n);
        let (a, b) = (self.clone(), other.clone());
        Tensor::from_op(
            "matmul",
            vec![m, n],
            out,
            vec![self.clone(), other.clone()],
            Box::new(move |g, needs| {
                let ga = needs[0].then(|| {
                    // g [m×n] · bᵀ
                    let b = b.data();
                    let mut ga = vec![F::zero(); m * k];
                    for i in 0..m {
                        for p in 0..k {
                            let brow = &b[p * n..(p + 1) * n];
                            let grow = &g[i * n..(i + 1) * n];
                            ga[i * k + p] = grow.iter().zip(brow).map(|(&x, &y)| x * y).sum();
                        }
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    // aᵀ · g
                    let a = a.data();
                    let mut gb = vec![F::zero(); k * n];
                    for i in 0..m {
                        let grow = &g[i * n..(i + 1) * n];
                        for p in 0..k {
                            let av = a[i * k + p];
                            for (o, &gv) in gb[p * n..(p + 1) * n].iter_mut().zip(grow) {
                                *o += av * gv;
                            }
                        }
                    }
                    gb
                });
                vec![ga, gb]
            }),
        )
    }

    /// Concatenates rank-2 tensors `[C × L_i]` along the last axis.
    pub fn concat_last(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let (c, _) = dims2("concat", first)?;
        let mut lens = Vec::with_capacity(parts.len());
        for p in parts {
            let (pc, pl) = dims2("concat", p)?;
            if pc != c {
                return Err(Error::shape("concat", format!("channel {pc} vs {c}")));
            }
            lens.push(pl);
        }
        let total: usize = lens.iter().sum();
        let mut out = vec![F::zero(); c * total];
        let mut off = 0;
        for (p, &l) in parts.iter().zip(&lens) {
            let d = p.data();
            for ch in 0..c {
                out[ch * total + off..ch * total + off + l].copy_from_slice(&d[ch * l..(ch + 1) * l]);
            }
            off += l;
        }
        Tensor::from_op(
            "concat",
            vec![c, total],
            out,
            parts.to_vec(),
            Box::new(move |g, needs| {
                let mut res = Vec::with_capacity(lens.len());
                let mut off = 0;
                for (i, &l) in lens.iter().enumerate() {
                    res.push(needs[i].then(|| {
                        let mut gp = vec![F::zero(); c * l];
                        for ch in 0..c {
                            gp[ch * l..(ch + 1) * l]
                                .copy_from_slice(&g[ch * total + off..ch * total + off + l]);
                        }
                        gp
                    }));
                    off += l;
                }
                res
            }),
        )
    }

    /// Packs single-element tensors into a vector.
    pub fn stack_scalars(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
        if parts.is_empty() {
            return Err(Error::invalid("stack", "no inputs"));
        }
        if let Some(p) = parts.iter().find(|p| p.numel() != 1) {
            return Err(Error::shape("stack", format!("non-scalar part {:?}", p.shape())));
        }
        let out: Vec<F> = parts.iter().map(Tensor::item).collect();
        Tensor::from_op(
            "stack",
            vec![parts.len()],
            out,
            parts.to_vec(),
            Box::new(|g, needs| {
                g.iter()
                    .zip(needs)
                    .map(|(&gi, &n)| n.then(|| vec![gi]))
                    .collect()
            }),
        )
    }
}

pub(crate) fn dims2<F: Real>(op: &'static str, t: &Tensor<F>) -> Result<(usize, usize)> {
    match t.shape() {
        [a, b] => Ok((*a, *b)),
        s => Err(Error::shape(op, format!("expected rank 2, got {s:?}"))),
    }
}

/// Row-major `[m×k]·[k×n]` with ascending-k accumulation. Shared by the
/// differentiable op and the plain feature extractor so both round identically.
pub(crate) fn matmul_kernel<F: Real>(a: &[F], b: &[F], m: usize, k: usize, n: usize) -> Vec<F> {
    let mut out = vec![F::zero(); m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            if av == F::zero() {
                continue;
            }
            for (o, &bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

/// Sums a non-empty list of same-shape tensors left to right.
pub fn sum_all<F: Real>(parts: &[Tensor<F>]) -> Result<Tensor<F>> {
    let (first, rest) = parts
        .split_first()
        .ok_or_else(|| Error::invalid("sum_all", "empty list"))?;
    let mut acc = first.clone();
    for p in rest {
        acc = acc.add(p)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(&[v.len()], v, true).unwrap()
    }

    #[test]
    fn leaky_relu_negative() {
        let x = t(&[-1.0]);
        assert!((x.leaky_relu(DEFAULT_LEAKY_SLOPE).unwrap().item() + 0.2).abs() < 1e-15);
    }

    #[test]
    fn tanh_at_zero() {
        let x = t(&[0.0]);
        let y = x.tanh().unwrap();
        assert_eq!(y.item(), 0.0);
        y.backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
    }

    #[test]
    fn log_gradient_matches_central_difference() {
        let x0 = 0.7;
        let x = t(&[x0]);
        x.log().unwrap().backward().unwrap();
        let h = 1e-5;
        let fd = ((x0 + h).ln() - (x0 - h).ln()) / (2.0 * h);
        assert!((x.grad().unwrap()[0] - fd).abs() / fd < 1e-8);
        assert!((x.grad().unwrap()[0] - 1.0 / x0).abs() < 1e-15);
    }

    #[test]
    fn mean_sum_reductions() {
        let x = t(&[1.0, 2.0, 3.0]);
        let m = x.mean().unwrap();
        assert_eq!(m.item(), 2.0);
        m.backward().unwrap();
        for g in x.grad().unwrap() {
            assert!((g - 1.0 / 3.0).abs() < 1e-15);
        }
        let y = t(&[1.0, 2.0, 3.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(y.grad().unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn axis_reductions() {
        let x = Tensor::<f64>::from_f64(&[2, 3], &[1., 2., 3., 4., 5., 6.], true).unwrap();
        assert_eq!(x.sum_axis(1).unwrap().to_vec(), vec![6.0, 15.0]);
        assert_eq!(x.mean_axis(0).unwrap().to_vec(), vec![2.5, 3.5, 4.5]);
        assert!(x.mean_axis(2).is_err());
    }

    #[test]
    fn scalar_broadcast_both_sides() {
        let a = t(&[1.0, 2.0]);
        let s = t(&[3.0]);
        let y = s.mul(&a).unwrap().sum().unwrap();
        y.backward().unwrap();
        assert_eq!(s.grad().unwrap(), vec![3.0]);
        assert_eq!(a.grad().unwrap(), vec![3.0, 3.0]);
        assert!(t(&[1.0, 2.0]).add(&t(&[1.0, 2.0, 3.0])).is_err());
    }

    #[test]
    fn matmul_values() {
        let a = Tensor::<f64>::from_f64(&[2, 2], &[1., 2., 3., 4.], false).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 1], &[5., 6.], false).unwrap();
        assert_eq!(a.matmul(&b).unwrap().to_vec(), vec![17.0, 39.0]);
    }
}
