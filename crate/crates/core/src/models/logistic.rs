//! L1/L2-regularized logistic regression fitted with accelerated proximal
//! gradient descent (FISTA) and backtracking.
//!
//! Objective: `(1/n) sum_i w_i * logloss_i + R(beta) / (C n)` where `R` is
//! `0.5 ||beta||^2` (L2) or `||beta||_1` (L1). The intercept is not penalized.

use serde::{Deserialize, Serialize};

use super::data::{Dataset, Matrix};
use crate::error::{Error, Result};
use crate::stats::{sigmoid, softplus};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassWeight {
    None,
    Balanced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogisticParams {
    pub penalty: Penalty,
    pub c: f64,
    pub class_weight: ClassWeight,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            penalty: Penalty::L2,
            c: 0.5,
            class_weight: ClassWeight::None,
            max_iter: 100,
        }
    }
}

/// Smooth part of the objective over a fixed batch. For L2 the penalty is
/// included; for L1 it is handled by the proximal step.
pub struct LogisticObjective<'a> {
    x: &'a Matrix,
    y: Vec<f64>,
    w: Vec<f64>,
    l2: f64,
}

impl<'a> LogisticObjective<'a> {
    pub fn new(data: &'a Dataset, params: &LogisticParams) -> Self {
        let n = data.len() as f64;
        let late = data.late_count() as f64;
        let (w_on, w_late) = match params.class_weight {
            ClassWeight::None => (1.0, 1.0),
            ClassWeight::Balanced => (n / (2.0 * (n - late)), n / (2.0 * late)),
        };
        LogisticObjective {
            x: &data.x,
            y: data.targets(),
            w: data
                .y
                .iter()
                .map(|c| if c.is_late() { w_late } else { w_on })
                .collect(),
            l2: match params.penalty {
                Penalty::L2 => 1.0 / (params.c * n),
                Penalty::L1 => 0.0,
            },
        }
    }

    /// Objective and gradient at `beta = [intercept, coef...]`.
    pub fn value_and_gradient(&self, beta: &[f64]) -> (f64, Vec<f64>) {
        let n = self.y.len() as f64;
        let mut grad = vec![0.0; beta.len()];
        let mut value = 0.0;
        for (i, row) in self.x.iter_rows().enumerate() {
            let z = beta[0] + row.iter().zip(&beta[1..]).map(|(a, b)| a * b).sum::<f64>();
            let (y, w) = (self.y[i], self.w[i]);
            value += w * (softplus(z) - y * z);
            let r = w * (sigmoid(z) - y);
            grad[0] += r;
            for (g, v) in grad[1..].iter_mut().zip(row) {
                *g += r * v;
            }
        }
        value /= n;
        grad.iter_mut().for_each(|g| *g /= n);
        for (g, b) in grad[1..].iter_mut().zip(&beta[1..]) {
            value += 0.5 * self.l2 * b * b;
            *g += self.l2 * b;
        }
        (value, grad)
    }

    pub fn value(&self, beta: &[f64]) -> f64 {
        self.value_and_gradient(beta).0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticRegression {
    pub intercept: f64,
    pub coef: Vec<f64>,
}

fn l1_norm(beta: &[f64]) -> f64 {
    beta[1..].iter().map(|b| b.abs()).sum()
}

impl LogisticRegression {
    pub fn fit(data: &Dataset, params: &LogisticParams) -> Result<Self> {
        if !(params.c > 0.0) {
            return Err(Error::InvalidParameter(format!("C {} must be > 0", params.c)));
        }
        data.require_both_classes()?;
        let n = data.len() as f64;
        let obj = LogisticObjective::new(data, params);
        let l1 = match params.penalty {
            Penalty::L1 => 1.0 / (params.c * n),
            Penalty::L2 => 0.0,
        };
        let prox = |v: &mut [f64], step: f64| {
            let t = step * l1;
            for b in v[1..].iter_mut() {
                *b = b.signum() * (b.abs() - t).max(0.0);
            }
        };

        let dim = data.x.cols() + 1;
        let mut beta = vec![0.0; dim];
        let mut momentum = beta.clone();
        let mut t = 1.0f64;
        let mut step = 1.0f64;
        for iter in 0..params.max_iter {
            let (fy, gy) = obj.value_and_gradient(&momentum);
            if !fy.is_finite() {
                return Err(Error::Diverged(format!(
                    "logistic loss {fy} at iteration {iter}, step {step:e}, C {}",
                    params.c
                )));
            }
            let next = loop {
                let mut cand: Vec<f64> = momentum.iter().zip(&gy).map(|(b, g)| b - step * g).collect();
                prox(&mut cand, step);
                let diff: Vec<f64> = cand.iter().zip(&momentum).map(|(a, b)| a - b).collect();
                let lin = gy.iter().zip(&diff).map(|(g, d)| g * d).sum::<f64>();
                let quad = diff.iter().map(|d| d * d).sum::<f64>() / (2.0 * step);
                if obj.value(&cand) <= fy + lin + quad + 1e-12 || step < 1e-12 {
                    break cand;
                }
                step *= 0.5;
            };
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let ratio = (t - 1.0) / t_next;
            momentum = next
                .iter()
                .zip(&beta)
                .map(|(a, b)| a + ratio * (a - b))
                .collect();
            // Restart momentum when the composite objective goes up.
            if obj.value(&next) + l1 * l1_norm(&next) > obj.value(&beta) + l1 * l1_norm(&beta) {
                momentum = next.clone();
                t = 1.0;
            } else {
                t = t_next;
            }
            beta = next;
        }
        let final_loss = obj.value(&beta);
        if !final_loss.is_finite() || beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::Diverged(format!(
                "logistic fit ended with loss {final_loss} after {} iterations",
                params.max_iter
            )));
        }
        Ok(LogisticRegression {
            intercept: beta[0],
            coef: beta[1..].to_vec(),
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows()
            .map(|r| sigmoid(self.intercept + r.iter().zip(&self.coef).map(|(a, b)| a * b).sum::<f64>()))
            .collect()
    }
}
