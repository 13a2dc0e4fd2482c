//! SGD and Adam over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::autodiff::params::ParamStore;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd {
        lr: f64,
    },
    Adam {
        lr: f64,
        beta1: f64,
        beta2: f64,
        eps: f64,
        step: u64,
        moments: Vec<Moments>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Optimizer {
    pub fn sgd(lr: f64) -> Self {
        Optimizer::Sgd { lr }
    }

    /// Adam with the standard defaults beta1=0.9, beta2=0.999, eps=1e-8.
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, moments: Vec::new() }
    }

    /// Apply one update. `grads` must align with the store's parameter order;
    /// a NaN/Inf gradient aborts with the offending parameter's name.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<()> {
        if grads.len() != store.len() {
            return Err(Error::ShapeMismatch {
                op: "optimizer_step",
                detail: format!("{} grads for {} params", grads.len(), store.len()),
            });
        }
        for id in store.ids().collect::<Vec<_>>() {
            let g = &grads[id.index()];
            if g.shape() != store.get(id).shape() {
                return Err(Error::ShapeMismatch {
                    op: "optimizer_step",
                    detail: format!(
                        "grad shape {:?} vs param `{}` shape {:?}",
                        g.shape(),
                        store.name(id),
                        store.get(id).shape()
                    ),
                });
            }
            if !g.data().iter().all(|v| v.is_finite()) {
                return Err(Error::NonFinite {
                    context: format!("gradient of `{}`", store.name(id)),
                });
            }
        }

        match self {
            Optimizer::Sgd { lr } => {
                for id in store.ids().collect::<Vec<_>>() {
                    let g = &grads[id.index()];
                    let p = store.get_mut(id).data_mut();
                    for (w, &gv) in p.iter_mut().zip(g.data()) {
                        *w -= *lr * gv;
                    }
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps, step, moments } => {
                if moments.is_empty() {
                    *moments = grads
                        .iter()
                        .map(|g| Moments { m: vec![0.0; g.numel()], v: vec![0.0; g.numel()] })
                        .collect();
                }
                *step += 1;
                let t = *step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for id in store.ids().collect::<Vec<_>>() {
                    let g = grads[id.index()].data();
                    let mom = &mut moments[id.index()];
                    let p = store.get_mut(id).data_mut();
                    for i in 0..p.len() {
                        mom.m[i] = *beta1 * mom.m[i] + (1.0 - *beta1) * g[i];
                        mom.v[i] = *beta2 * mom.v[i] + (1.0 - *beta2) * g[i] * g[i];
                        let m_hat = mom.m[i] / bc1;
                        let v_hat = mom.v[i] / bc2;
                        p[i] -= *lr * m_hat / (v_hat.sqrt() + *eps);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_param(value: f64) -> ParamStore {
        let mut store = ParamStore::new();
        store.add("w", Tensor::scalar(value));
        store
    }

    #[test]
    fn sgd_basic_step() {
        let mut store = single_param(1.0);
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut store, &[Tensor::scalar(1.0)]).unwrap();
        assert!((store.iter().next().unwrap().1.data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        // At t=1 bias correction makes m_hat/sqrt(v_hat) = sign(g), so the
        // update is about -lr.
        let mut store = single_param(0.0);
        let mut opt = Optimizer::adam(0.001);
        opt.step(&mut store, &[Tensor::scalar(1.0)]).unwrap();
        let w = store.iter().next().unwrap().1.data()[0];
        assert!((w + 0.001).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn sgd_converges_on_quadratic() {
        // f(w) = (w - 3)^2, grad = 2(w - 3)
        let mut store = single_param(0.0);
        let mut opt = Optimizer::sgd(0.1);
        for _ in 0..100 {
            let w = store.iter().next().unwrap().1.data()[0];
            let g = 2.0 * (w - 3.0);
            opt.step(&mut store, &[Tensor::scalar(g)]).unwrap();
        }
        let w = store.iter().next().unwrap().1.data()[0];
        assert!((w - 3.0).abs() < 1e-6, "w = {w}");
    }

    #[test]
    fn nan_gradient_names_parameter() {
        let mut store = single_param(0.0);
        let mut opt = Optimizer::sgd(0.1);
        let err = opt.step(&mut store, &[Tensor::scalar(0.0).map(|_| f64::NAN)]).unwrap_err();
        assert!(err.to_string().contains("`w`"), "{err}");
    }
}
