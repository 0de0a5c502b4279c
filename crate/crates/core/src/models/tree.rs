//! CART classification trees on Gini impurity.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::binning::BinnedMatrix;
use super::data::{Dataset, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Binary tree; `x[feature] <= threshold` goes left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match &self.nodes[at] {
                Node::Leaf { value } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => at = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, at: usize) -> usize {
            match &t.nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, *left).max(walk(t, *right)),
            }
        }
        walk(self, 0)
    }

    /// (feature, threshold) of the root split, if any.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match &self.nodes[0] {
            Node::Split { feature, threshold, .. } => Some((*feature, *threshold)),
            Node::Leaf { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxFeatures {
    All,
    Sqrt,
    Fraction(f64),
}

impl MaxFeatures {
    pub fn count(self, d: usize) -> usize {
        let m = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::Fraction(f) => (f * d as f64).ceil() as usize,
        };
        m.clamp(1, d.max(1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            max_depth: 8,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

impl TreeParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth < 1 {
            return Err(Error::InvalidParameter("max_depth must be >= 1".into()));
        }
        if self.min_samples_leaf < 1 {
            return Err(Error::InvalidParameter("min_samples_leaf must be >= 1".into()));
        }
        if let MaxFeatures::Fraction(f) = self.max_features {
            if !(f > 0.0 && f <= 1.0) {
                return Err(Error::InvalidParameter(format!("max_features fraction {f} outside (0, 1]")));
            }
        }
        Ok(())
    }
}

/// Sum over children of `n - (n0^2 + n1^2) / n`, i.e. size-weighted Gini.
pub(crate) fn gini_score(l0: f64, l1: f64, r0: f64, r1: f64) -> f64 {
    let ln = l0 + l1;
    let rn = r0 + r1;
    (ln - (l0 * l0 + l1 * l1) / ln) + (rn - (r0 * r0 + r1 * r1) / rn)
}

struct Grower<'a> {
    binned: &'a BinnedMatrix,
    late: &'a [bool],
    weights: &'a [u32],
    params: &'a TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

impl Grower<'_> {
    fn leaf(&mut self, n0: f64, n1: f64) -> usize {
        self.nodes.push(Node::Leaf { value: n1 / (n0 + n1) });
        self.nodes.len() - 1
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize) -> usize {
        let (mut n0, mut n1) = (0.0, 0.0);
        for &i in &rows {
            let w = self.weights[i] as f64;
            if self.late[i] {
                n1 += w;
            } else {
                n0 += w;
            }
        }
        let n = n0 + n1;
        if depth >= self.params.max_depth
            || n0 == 0.0
            || n1 == 0.0
            || n < self.params.min_samples_split as f64
        {
            return self.leaf(n0, n1);
        }

        let d = self.binned.n_cols();
        let m = self.params.max_features.count(d);
        let mut features: Vec<usize> = if m == d {
            (0..d).collect()
        } else {
            sample(&mut self.rng, d, m).into_vec()
        };
        features.sort_unstable();

        let min_leaf = self.params.min_samples_leaf as f64;
        let mut best: Option<(f64, usize, usize)> = None;
        for &j in &features {
            let nb = self.binned.n_bins(j);
            let mut hist = vec![[0.0f64; 2]; nb];
            let col = self.binned.column(j);
            for &i in &rows {
                hist[col[i] as usize][self.late[i] as usize] += self.weights[i] as f64;
            }
            let (mut l0, mut l1) = (0.0, 0.0);
            let mut last_nonempty: Option<usize> = None;
            for (b, h) in hist.iter().enumerate() {
                if h[0] + h[1] == 0.0 {
                    continue;
                }
                // Candidate: everything up to the previous non-empty bin goes left.
                if let Some(prev) = last_nonempty {
                    let ln = l0 + l1;
                    let rn = n - ln;
                    if ln >= min_leaf && rn >= min_leaf {
                        let score = gini_score(l0, l1, n0 - l0, n1 - l1);
                        if best.is_none_or(|(s, _, _)| score < s) {
                            best = Some((score, j, prev));
                        }
                    }
                }
                l0 += h[0];
                l1 += h[1];
                last_nonempty = Some(b);
            }
        }

        let Some((_, feature, bin)) = best else {
            return self.leaf(n0, n1);
        };
        let col = self.binned.column(feature);
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) =
            rows.into_iter().partition(|&i| col[i] as usize <= bin);
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

/// Grows a tree over the rows with positive weight. Weights are integer
/// multiplicities (bootstrap counts).
pub(crate) fn grow_classifier(
    binned: &BinnedMatrix,
    late: &[bool],
    weights: &[u32],
    params: &TreeParams,
    seed: u64,
) -> Tree {
    let rows: Vec<usize> = (0..binned.n_rows()).filter(|&i| weights[i] > 0).collect();
    let mut g = Grower {
        binned,
        late,
        weights,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    g.grow(rows, 0);
    Tree { nodes: g.nodes }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub tree: Tree,
}

impl DecisionTree {
    pub fn fit(data: &Dataset, params: &TreeParams, seed: u64) -> Result<Self> {
        params.validate()?;
        if data.is_empty() {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        let binned = BinnedMatrix::new(&data.x);
        let late: Vec<bool> = data.y.iter().map(|c| c.is_late()).collect();
        let weights = vec![1; data.len()];
        Ok(DecisionTree {
            tree: grow_classifier(&binned, &late, &weights, params, seed),
        })
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.tree.predict_row(r)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PaymentClass;

    fn dataset(rows: &[(f64, f64, bool)]) -> Dataset {
        let x = Matrix::from_rows(&rows.iter().map(|r| vec![r.0, r.1]).collect::<Vec<_>>()).unwrap();
        let y = rows.iter().map(|r| PaymentClass::from_late(r.2)).collect();
        Dataset::new(vec!["a".into(), "b".into()], x, y).unwrap()
    }

    #[test]
    fn pure_labels_give_certain_leaf() {
        let data = dataset(&[(1.0, 2.0, true), (3.0, 1.0, true), (2.0, 2.0, true)]);
        let t = DecisionTree::fit(&data, &TreeParams::default(), 0).unwrap();
        assert_eq!(t.predict_proba(&data.x), vec![1.0; 3]);
        assert_eq!(t.tree.nodes.len(), 1);
    }

    #[test]
    fn finds_clean_threshold() {
        let data = dataset(&[(0.0, 5.0, false), (1.0, 3.0, false), (2.0, 9.0, true), (3.0, 1.0, true)]);
        let t = DecisionTree::fit(&data, &TreeParams { max_depth: 1, ..Default::default() }, 0).unwrap();
        assert_eq!(t.tree.root_split(), Some((0, 1.5)));
        assert_eq!(t.predict_proba(&data.x), vec![0.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn depth_limit() {
        let data = dataset(&[(0.0, 0.0, false), (0.0, 1.0, true), (1.0, 0.0, true), (1.0, 1.0, false)]);
        assert!(DecisionTree::fit(&data, &TreeParams { max_depth: 0, ..Default::default() }, 0).is_err());
        let t = DecisionTree::fit(&data, &TreeParams { max_depth: 2, ..Default::default() }, 0).unwrap();
        assert!(t.tree.depth() <= 2);
        assert_eq!(t.predict_proba(&data.x), vec![0.0, 1.0, 1.0, 0.0]);
    }
}
