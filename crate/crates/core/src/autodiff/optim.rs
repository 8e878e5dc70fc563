use super::checkpoint::{AdamSnapshot, MomentRecord};
use super::tensor::{Real, Tensor};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.5,
            beta2: 0.9,
            eps: 1e-8,
        }
    }
}

/// Adam with bias correction over a fixed, named parameter list.
pub struct Adam<F: Real> {
    pub config: AdamConfig,
    step: u64,
    params: Vec<(String, Tensor<F>)>,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
}

impl<F: Real> Adam<F> {
    pub fn new(params: Vec<(String, Tensor<F>)>, config: AdamConfig) -> Self {
        let m = params.iter().map(|(_, p)| vec![F::zero(); p.numel()]).collect();
        let v = params.iter().map(|(_, p)| vec![F::zero(); p.numel()]).collect();
        Self {
            config,
            step: 0,
            params,
            m,
            v,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn zero_grad(&self) {
        for (_, p) in &self.params {
            p.zero_grad();
        }
    }

    /// One update of every parameter; gradients are cleared afterwards.
    pub fn step(&mut self) -> Result<()> {
        let grads: Vec<Vec<F>> = self
            .params
            .iter()
            .map(|(name, p)| {
                p.grad().ok_or_else(|| Error::Graph(format!("adam: parameter '{name}' has no gradient")))
            })
            .collect::<Result<_>>()?;
        self.step += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let step_size = F::lit(lr / bc1);
        let bc2_sqrt = F::lit(bc2.sqrt());
        let (b1, b2, eps) = (F::lit(beta1), F::lit(beta2), F::lit(eps));
        let (one_b1, one_b2) = (F::one() - b1, F::one() - b2);
        for (((_, p), g), (m, v)) in self
            .params
            .iter()
            .zip(&grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            p.update_data(|data| {
                for i in 0..data.len() {
                    m[i] = b1 * m[i] + one_b1 * g[i];
                    v[i] = b2 * v[i] + one_b2 * g[i] * g[i];
                    let denom = v[i].sqrt() / bc2_sqrt + eps;
                    data[i] -= step_size * m[i] / denom;
                }
            });
            if p.data().iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite {
                    op: "adam_step",
                    phase: "update",
                });
            }
            p.zero_grad();
        }
        Ok(())
    }

    pub fn snapshot(&self, name: &str) -> AdamSnapshot {
        AdamSnapshot {
            name: name.to_owned(),
            step: self.step,
            lr: self.config.lr,
            beta1: self.config.beta1,
            beta2: self.config.beta2,
            eps: self.config.eps,
            moments: self
                .params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .map(|((pname, _), (m, v))| MomentRecord {
                    param: pname.clone(),
                    m: m.iter().map(|x| x.as_f64() as f32).collect(),
                    v: v.iter().map(|x| x.as_f64() as f32).collect(),
                })
                .collect(),
        }
    }

    /// Restores step count and moments; hyperparameters stay as configured.
    pub fn restore(&mut self, snap: &AdamSnapshot) -> Result<()> {
        if snap.moments.len() != self.params.len() {
            return Err(Error::Checkpoint(format!(
                "optimizer '{}' holds {} moments for {} parameters",
                snap.name,
                snap.moments.len(),
                self.params.len()
            )));
        }
        for (i, rec) in snap.moments.iter().enumerate() {
            let (pname, p) = &self.params[i];
            if &rec.param != pname || rec.m.len() != p.numel() || rec.v.len() != p.numel() {
                return Err(Error::Checkpoint(format!(
                    "optimizer moment '{}' does not match parameter '{pname}'",
                    rec.param
                )));
            }
            self.m[i] = rec.m.iter().map(|&x| F::lit(x as f64)).collect();
            self.v[i] = rec.v.iter().map(|&x| F::lit(x as f64)).collect();
        }
        self.step = snap.step;
        Ok(())
    }
}
