//! Vector ops used by the distance-consistency objective.

use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

pub const COSINE_EPS: f64 = 1e-8;
pub const KL_EPS: f64 = 1e-12;
const SIMPLEX_TOL: f64 = 1e-6;

fn vector_len<F: Real>(op: &'static str, t: &Tensor<F>) -> Result<usize> {
    match t.shape() {
        [n] if *n > 0 => Ok(*n),
        s => Err(Error::shape(op, format!("expected non-empty vector, got {s:?}"))),
    }
}

/// Max-subtracted softmax of a vector.
pub fn softmax<F: Real>(input: &Tensor<F>) -> Result<Tensor<F>> {
    let n = vector_len("softmax", input)?;
    let x = input.data();
    let m = x.iter().copied().fold(F::neg_infinity(), F::max);
    let e: Vec<F> = x.iter().map(|&v| (v - m).exp()).collect();
    drop(x);
    let z: F = e.iter().copied().sum();
    let y: Vec<F> = e.into_iter().map(|v| v / z).collect();
    let saved = y.clone();
    Tensor::from_op(
        "softmax",
        vec![n],
        y,
        vec![input.clone()],
        Box::new(move |g, _| {
            let dot: F = g.iter().zip(&saved).map(|(&a, &b)| a * b).sum();
            vec![Some(saved.iter().zip(g).map(|(&y, &gi)| y * (gi - dot)).collect())]
        }),
    )
}

/// `a·b / (max(‖a‖, eps) · max(‖b‖, eps))`.
pub fn cosine_similarity<F: Real>(a: &Tensor<F>, b: &Tensor<F>, eps: f64) -> Result<Tensor<F>> {
    let n = vector_len("cosine_similarity", a)?;
    if vector_len("cosine_similarity", b)? != n {
        return Err(Error::shape(
            "cosine_similarity",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    let eps = F::lit(eps);
    let av = a.data();
    let bv = b.data();
    let ab: F = av.iter().zip(bv.iter()).map(|(&x, &y)| x * y).sum();
    let na = av.iter().map(|&x| x * x).sum::<F>().sqrt();
    let nb = bv.iter().map(|&x| x * x).sum::<F>().sqrt();
    drop(av);
    drop(bv);
    let da = na.max(eps);
    let db = nb.max(eps);
    let s = ab / (da * db);
    let (ta, tb) = (a.clone(), b.clone());
    Tensor::from_op(
        "cosine_similarity",
        vec![1],
        vec![s],
        vec![a.clone(), b.clone()],
        Box::new(move |g, needs| {
            let av = ta.data();
            let bv = tb.data();
            let g = g[0];
            // d s / d a = b/(da·db) − s·a/‖a‖² when ‖a‖ > eps (otherwise da is constant)
            let grad = |x: &[F], y: &[F], nx: F| -> Vec<F> {
                let inv = F::one() / (da * db);
                let corr = if nx > eps { s / (nx * nx) } else { F::zero() };
                x.iter()
                    .zip(y)
                    .map(|(&xi, &yi)| g * (yi * inv - corr * xi))
                    .collect()
            };
            vec![
                needs[0].then(|| grad(&av, &bv, na)),
                needs[1].then(|| grad(&bv, &av, nb)),
            ]
        }),
    )
}

/// `Σ p·(log p − log max(q, 1e-12))` with `0·log 0 = 0`. Both inputs must be
/// probability vectors.
pub fn kl_divergence<F: Real>(p: &Tensor<F>, q: &Tensor<F>) -> Result<Tensor<F>> {
    let n = vector_len("kl_divergence", p)?;
    if vector_len("kl_divergence", q)? != n {
        return Err(Error::shape(
            "kl_divergence",
            format!("{:?} vs {:?}", p.shape(), q.shape()),
        ));
    }
    for (name, t) in [("p", p), ("q", q)] {
        let d = t.data();
        let total: f64 = d.iter().map(|v| v.as_f64()).sum();
        if d.iter().any(|&v| v < F::zero()) || (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(
                "kl_divergence",
                format!("{name} is not a probability vector (sum {total})"),
            ));
        }
    }
    let eps = F::lit(KL_EPS);
    let pv = p.data();
    let qv = q.data();
    let kl: F = pv
        .iter()
        .zip(qv.iter())
        .map(|(&pi, &qi)| {
            if pi > F::zero() {
                pi * (pi.ln() - qi.max(eps).ln())
            } else {
                F::zero()
            }
        })
        .sum();
    drop(pv);
    drop(qv);
    let (tp, tq) = (p.clone(), q.clone());
    Tensor::from_op(
        "kl_divergence",
        vec![1],
        vec![kl],
        vec![p.clone(), q.clone()],
        Box::new(move |g, needs| {
            let pv = tp.data();
            let qv = tq.data();
            let g = g[0];
            let gp = needs[0].then(|| {
                pv.iter()
                    .zip(qv.iter())
                    .map(|(&pi, &qi)| {
                        // the p = 0 boundary is treated as a one-sided limit at eps
                        let lp = pi.max(eps).ln();
                        g * (lp - qi.max(eps).ln() + F::one())
                    })
                    .collect()
            });
            let gq = needs[1].then(|| {
                pv.iter()
                    .zip(qv.iter())
                    .map(|(&pi, &qi)| if qi > eps { -g * pi / qi } else { F::zero() })
                    .collect()
            });
            vec![gp, gq]
        }),
    )
}
