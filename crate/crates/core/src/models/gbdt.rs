//! Gradient-boosted regression trees on the logistic loss.
//!
//! Trees are grown on histogram bins with second-order (Newton) gains. The L1
//! penalty soft-thresholds the gradient sum of every node before it enters the
//! gain or the leaf value, and the L2 penalty is added to the hessian sum.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::data::{Dataset, Matrix};
use super::tree::{Node, Tree};
use crate::error::{Error, Result};
use crate::stats::{logit, sigmoid, softplus};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtParams {
    pub learning_rate: f64,
    pub n_estimators: usize,
    pub max_depth: usize,
    /// Row fraction drawn without replacement per tree.
    pub subsample: f64,
    /// Column fraction drawn per tree and again per depth level.
    pub colsample: f64,
    pub reg_alpha: f64,
    pub reg_lambda: f64,
    pub min_child_weight: f64,
}

impl Default for GbdtParams {
    fn default() -> Self {
        GbdtParams {
            learning_rate: 0.01,
            n_estimators: 100,
            max_depth: 15,
            subsample: 1.0,
            colsample: 0.7,
            reg_alpha: 1.0,
            reg_lambda: 1.0,
            min_child_weight: 1.0,
        }
    }
}

impl GbdtParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.learning_rate > 0.0) {
            return bad(format!("learning_rate {} must be > 0", self.learning_rate));
        }
        if self.max_depth < 1 {
            return bad("max_depth must be >= 1".into());
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return bad(format!("subsample {} outside (0, 1]", self.subsample));
        }
        if !(self.colsample > 0.0 && self.colsample <= 1.0) {
            return bad(format!("colsample {} outside (0, 1]", self.colsample));
        }
        if self.reg_alpha < 0.0 || self.reg_lambda < 0.0 || self.min_child_weight < 0.0 {
            return bad("regularization terms must be >= 0".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    pub base_score: f64,
    pub learning_rate: f64,
    pub trees: Vec<Tree>,
}

fn soft_threshold(g: f64, alpha: f64) -> f64 {
    if g > alpha {
        g - alpha
    } else if g < -alpha {
        g + alpha
    } else {
        0.0
    }
}

struct RegressionGrower<'a> {
    binned: &'a BinnedMatrix,
    grad: &'a [f64],
    hess: &'a [f64],
    params: &'a GbdtParams,
    level_features: Vec<Vec<usize>>,
    nodes: Vec<Node>,
}

impl RegressionGrower<'_> {
    fn score(&self, g: f64, h: f64) -> f64 {
        let t = soft_threshold(g, self.params.reg_alpha);
        t * t / (h + self.params.reg_lambda)
    }

    fn leaf(&mut self, g: f64, h: f64) -> usize {
        let value = -soft_threshold(g, self.params.reg_alpha) / (h + self.params.reg_lambda);
        self.nodes.push(Node::Leaf { value });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (g, h) = rows
            .iter()
            .fold((0.0, 0.0), |(g, h), &i| (g + self.grad[i], h + self.hess[i]));
        let mcw = self.params.min_child_weight;
        if depth >= self.params.max_depth || h < 2.0 * mcw || rows.len() < 2 {
            return self.leaf(g, h);
        }
        let parent = self.score(g, h);
        let mut best: Option<(f64, usize, usize)> = None;
        for &j in &self.level_features[depth] {
            let nb = self.binned.n_bins(j);
            let mut hist = vec![[0.0f64; 2]; nb];
            let col = self.binned.column(j);
            for &i in &rows {
                let e = &mut hist[col[i] as usize];
                e[0] += self.grad[i];
                e[1] += self.hess[i];
            }
            let (mut gl, mut hl) = (0.0, 0.0);
            for (b, e) in hist.iter().enumerate().take(nb - 1) {
                gl += e[0];
                hl += e[1];
                if e[1] == 0.0 {
                    continue;
                }
                let (gr, hr) = (g - gl, h - hl);
                if hl < mcw || hr < mcw {
                    continue;
                }
                let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
                if gain > 0.0 && best.is_none_or(|(s, _, _)| gain > s) {
                    best = Some((gain, j, b));
                }
            }
        }
        let Some((_, feature, bin)) = best else {
            return self.leaf(g, h);
        };
        let col = self.binned.column(feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] as usize <= bin);
        if left_rows.is_empty() || right_rows.is_empty() {
            return self.leaf(g, h);
        }
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { value: f64::NAN });
        let left = self.grow(left_rows, depth + 1);
        let right = self.grow(right_rows, depth + 1);
        self.nodes[at] = Node::Split {
            feature,
            threshold: self.binned.threshold(feature, bin),
            left,
            right,
        };
        at
    }
}

fn sample_sorted(rng: &mut ChaCha8Rng, n: usize, frac: f64) -> Vec<usize> {
    let k = ((frac * n as f64).round() as usize).clamp(1, n);
    let mut v = if k == n {
        (0..n).collect()
    } else {
        sample(rng, n, k).into_vec()
    };
    v.sort_unstable();
    v
}

/// Mean logistic loss of margins against 0/1 targets.
pub fn log_loss(margins: &[f64], targets: &[f64]) -> f64 {
    margins
        .iter()
        .zip(targets)
        .map(|(&m, &y)| softplus(m) - y * m)
        .sum::<f64>()
        / margins.len() as f64
}

impl Gbdt {
    pub fn fit(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<Self> {
        Self::fit_traced(data, params, seed).map(|(m, _)| m)
    }

    /// Fits and also returns the training loss before the first tree and
    /// after each tree.
    pub fn fit_traced(data: &Dataset, params: &GbdtParams, seed: u64) -> Result<(Self, Vec<f64>)> {
        params.validate()?;
        data.require_both_classes()?;
        let n = data.len();
        let d = data.x.cols();
        let targets = data.targets();
        let base_score = logit(data.late_count() as f64 / n as f64);
        let binned = BinnedMatrix::new(&data.x);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut margins = vec![base_score; n];
        let mut losses = vec![log_loss(&margins, &targets)];
        let mut trees = Vec::with_capacity(params.n_estimators);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];

        for _ in 0..params.n_estimators {
            for i in 0..n {
                let p = sigmoid(margins[i]);
                grad[i] = p - targets[i];
                hess[i] = p * (1.0 - p);
            }
            let rows = sample_sorted(&mut rng, n, params.subsample);
            let tree_features = sample_sorted(&mut rng, d, params.colsample);
            let level_features = (0..params.max_depth)
                .map(|_| {
                    sample_sorted(&mut rng, tree_features.len(), params.colsample)
                        .into_iter()
                        .map(|k| tree_features[k])
                        .collect()
                })
                .collect();
            let mut grower = RegressionGrower {
                binned: &binned,
                grad: &grad,
                hess: &hess,
                params,
                level_features,
                nodes: Vec::new(),
            };
            grower.grow(rows, 0);
            let tree = Tree { nodes: grower.nodes };
            for (i, m) in margins.iter_mut().enumerate() {
                *m += params.learning_rate * tree.predict_row(data.x.row(i));
            }
            let loss = log_loss(&margins, &targets);
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("gbdt training loss became {loss}")));
            }
            losses.push(loss);
            trees.push(tree);
        }
        Ok((
            Gbdt {
                base_score,
                learning_rate: params.learning_rate,
                trees,
            },
            losses,
        ))
    }

    /// Per-tree additions to the margin of `row`.
    pub fn tree_contributions(&self, row: &[f64]) -> Vec<f64> {
        self.trees
            .iter()
            .map(|t| self.learning_rate * t.predict_row(row))
            .collect()
    }

    /// Margin after the first `m` trees.
    pub fn staged_margin(&self, row: &[f64], m: usize) -> f64 {
        let mut margin = self.base_score;
        for t in self.trees.iter().take(m) {
            margin += self.learning_rate * t.predict_row(row);
        }
        margin
    }

    pub fn margin(&self, row: &[f64]) -> f64 {
        self.staged_margin(row, self.trees.len())
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| sigmoid(self.margin(r))).collect()
    }
}
