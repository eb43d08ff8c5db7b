use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.005,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moments for every parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub t: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(net: &Network, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = net.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn check(&self, net: &Network) -> Result<()> {
        let ok = self.m.len() == net.params().len()
            && net
                .params()
                .iter()
                .zip(&self.m)
                .zip(&self.v)
                .all(|((p, m), v)| m.len() == p.value.len() && v.len() == p.value.len());
        if ok {
            Ok(())
        } else {
            Err(Error::dims("optimizer state does not match the network"))
        }
    }

    /// One bias-corrected update of every non-frozen parameter from its
    /// accumulated gradient.
    pub fn step(&mut self, net: &mut Network) -> Result<()> {
        self.check(net)?;
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.cfg;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        let frozen = net.frozen().to_vec();
        for ((p, m), v) in net.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            if frozen.contains(&p.group) {
                continue;
            }
            for (((w, g), mi), vi) in p.value.iter_mut().zip(&p.grad).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * g;
                *vi = beta2 * *vi + (1.0 - beta2) * g * g;
                let mh = *mi / c1;
                let vh = *vi / c2;
                *w -= lr * mh / (vh.sqrt() + eps);
            }
        }
        Ok(())
    }
}
