use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

use super::graph::Graph;
use super::Gradients;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moments per parameter plus the step counter.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct AdamState<T> {
    pub step: u64,
    pub moments: BTreeMap<String, (Tensor<T>, Tensor<T>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam<T> {
    pub config: AdamConfig,
    pub state: AdamState<T>,
}

impl<T: Real> Adam<T> {
    pub fn new(config: AdamConfig) -> Self {
        Adam {
            config,
            state: AdamState {
                step: 0,
                moments: BTreeMap::new(),
            },
        }
    }

    /// One bias-corrected Adam update. Rejects the whole step, touching
    /// nothing, if any gradient entry is non-finite or a parameter lacks a
    /// gradient.
    pub fn step_params<'a, I>(&mut self, params: I, grads: &Gradients<T>) -> Result<()>
    where
        I: IntoIterator<Item = (String, &'a mut Tensor<T>)>,
    {
        let params: Vec<(String, &'a mut Tensor<T>)> = params.into_iter().collect();
        for (name, p) in &params {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::contract(format!("no gradient for parameter {name}")))?;
            if !g.same_shape(p) {
                return Err(Error::contract(format!(
                    "gradient for {name} has shape {:?}, parameter {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.all_finite() {
                return Err(Error::NonFiniteGradient(name.clone()));
            }
        }

        self.state.step += 1;
        let c = self.config;
        let t = self.state.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        let (b1, b2) = (T::from_f64(c.beta1), T::from_f64(c.beta2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - c.beta1), T::from_f64(1.0 - c.beta2));
        let (inv_bc1, inv_bc2) = (T::from_f64(1.0 / bc1), T::from_f64(1.0 / bc2));
        let (lr, eps) = (T::from_f64(c.lr), T::from_f64(c.eps));

        for (name, p) in params {
            let g = grads.get(&name).expect("checked above");
            let (m, v) = match self.state.moments.entry(name) {
                std::collections::btree_map::Entry::Occupied(e) => e.into_mut(),
                std::collections::btree_map::Entry::Vacant(e) => {
                    e.insert((Tensor::zeros(p.shape())?, Tensor::zeros(p.shape())?))
                }
            };
            for (((pw, &gw), mw), vw) in p
                .data_mut()
                .iter_mut()
                .zip(g.data())
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                *mw = b1 * *mw + one_b1 * gw;
                *vw = b2 * *vw + one_b2 * gw * gw;
                let m_hat = *mw * inv_bc1;
                let v_hat = *vw * inv_bc2;
                *pw -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    pub fn step(&mut self, graph: &mut Graph<T>, grads: &Gradients<T>) -> Result<()> {
        self.step_params(graph.parameters_mut(), grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(v: f64) -> Tensor<f64> {
        Tensor::from_vec(&[1], vec![v]).unwrap()
    }

    fn grads(v: f64) -> Gradients<f64> {
        let mut g = Gradients::new();
        g.insert("w", scalar(v));
        g
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut w = scalar(0.75);
        adam.step_params([("w".to_string(), &mut w)], &grads(0.0)).unwrap();
        assert_eq!(w.data()[0], 0.75);
        assert_eq!(adam.state.step, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut adam = Adam::new(AdamConfig {
            lr: 0.1,
            ..Default::default()
        });
        let mut w = scalar(0.0);
        adam.step_params([("w".to_string(), &mut w)], &grads(1.0)).unwrap();
        // m_hat = v_hat = 1, so the step is lr / (1 + eps).
        assert!((w.data()[0] + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn descends_a_quadratic() {
        let mut adam = Adam::new(AdamConfig::default());
        let mut w = scalar(1.0);
        let mut trace = vec![1.0];
        for _ in 0..100 {
            let g = 2.0 * w.data()[0];
            adam.step_params([("w".to_string(), &mut w)], &grads(g)).unwrap();
            trace.push(w.data()[0].abs());
        }
        for pair in trace[1..].windows(2) {
            assert!(pair[1] < pair[0]);
        }
        // Roughly lr per step while the gradient sign is stable.
        assert!(trace[100] > 0.89 && trace[100] < 0.91, "{}", trace[100]);
    }

    #[test]
    fn rejects_non_finite_without_mutation() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut w = scalar(1.0);
        let err = adam
            .step_params([("w".to_string(), &mut w)], &grads(f64::NAN))
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteGradient(_)));
        assert_eq!(w.data()[0], 1.0);
        assert_eq!(adam.state.step, 0);
        assert!(adam.state.moments.is_empty());
    }

    #[test]
    fn missing_gradient_is_contract_error() {
        let mut adam = Adam::<f64>::new(AdamConfig::default());
        let mut w = scalar(1.0);
        assert!(adam
            .step_params([("other".to_string(), &mut w)], &grads(1.0))
            .is_err());
    }
}
