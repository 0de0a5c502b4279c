//! Classifier suite behind one scoring contract.
//!
//! Every learner maps a feature row to P(Late). [`ScoringModel`] pairs a
//! fitted learner with the column schema it was trained on, standardizes
//! inputs for the scale-sensitive learners, and round-trips through a
//! versioned JSON document.

pub mod binning;
pub mod data;
pub mod forest;
pub mod gbdt;
pub mod grid;
pub mod knn;
pub mod logistic;
pub mod mlp;
pub mod naive_bayes;
pub mod scaler;
pub mod tree;

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use data::{Dataset, Matrix};
pub use forest::{ForestParams, RandomForest};
pub use gbdt::{Gbdt, GbdtParams};
pub use grid::{grid_search, CvRow, GridResult, HyperGrid, Metric};
pub use knn::{Knn, KnnParams};
pub use logistic::{ClassWeight, LogisticParams, LogisticRegression, Penalty};
pub use mlp::{Mlp, MlpParams};
pub use naive_bayes::NaiveBayes;
pub use scaler::StandardScaler;
pub use tree::{DecisionTree, MaxFeatures, TreeParams};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    NaiveBayes,
    LogisticRegression,
    Knn,
    DecisionTree,
    RandomForest,
    Gbdt,
    Mlp,
    Ensemble,
}

impl ModelKind {
    pub const ALL: [ModelKind; 8] = [
        ModelKind::NaiveBayes,
        ModelKind::LogisticRegression,
        ModelKind::Knn,
        ModelKind::DecisionTree,
        ModelKind::RandomForest,
        ModelKind::Gbdt,
        ModelKind::Mlp,
        ModelKind::Ensemble,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::NaiveBayes => "naive_bayes",
            ModelKind::LogisticRegression => "logistic_regression",
            ModelKind::Knn => "knn",
            ModelKind::DecisionTree => "decision_tree",
            ModelKind::RandomForest => "random_forest",
            ModelKind::Gbdt => "gbdt",
            ModelKind::Mlp => "mlp",
            ModelKind::Ensemble => "ensemble",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.map(|k| k.name()).join(", ")
    }

    pub fn default_params(self) -> ModelParams {
        match self {
            ModelKind::NaiveBayes => ModelParams::NaiveBayes,
            ModelKind::LogisticRegression => ModelParams::LogisticRegression(LogisticParams::default()),
            ModelKind::Knn => ModelParams::Knn(KnnParams::default()),
            ModelKind::DecisionTree => ModelParams::DecisionTree(TreeParams::default()),
            ModelKind::RandomForest => ModelParams::RandomForest(ForestParams::default()),
            ModelKind::Gbdt => ModelParams::Gbdt(GbdtParams::default()),
            ModelKind::Mlp => ModelParams::Mlp(MlpParams::default()),
            ModelKind::Ensemble => ModelParams::Ensemble {
                forest: ForestParams::default(),
                gbdt: GbdtParams::default(),
            },
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::UnknownModelKind(s.to_string()))
    }
}

/// Hyperparameters, tagged by model kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelParams {
    NaiveBayes,
    LogisticRegression(LogisticParams),
    Knn(KnnParams),
    DecisionTree(TreeParams),
    RandomForest(ForestParams),
    Gbdt(GbdtParams),
    Mlp(MlpParams),
    /// Mean of random-forest and boosted-tree probabilities.
    Ensemble { forest: ForestParams, gbdt: GbdtParams },
}

impl ModelParams {
    pub fn kind(&self) -> ModelKind {
        match self {
            ModelParams::NaiveBayes => ModelKind::NaiveBayes,
            ModelParams::LogisticRegression(_) => ModelKind::LogisticRegression,
            ModelParams::Knn(_) => ModelKind::Knn,
            ModelParams::DecisionTree(_) => ModelKind::DecisionTree,
            ModelParams::RandomForest(_) => ModelKind::RandomForest,
            ModelParams::Gbdt(_) => ModelKind::Gbdt,
            ModelParams::Mlp(_) => ModelKind::Mlp,
            ModelParams::Ensemble { .. } => ModelKind::Ensemble,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FittedModel {
    NaiveBayes(NaiveBayes),
    LogisticRegression {
        scaler: StandardScaler,
        model: LogisticRegression,
    },
    Knn {
        scaler: StandardScaler,
        model: Knn,
    },
    DecisionTree(DecisionTree),
    RandomForest(RandomForest),
    Gbdt(Gbdt),
    Mlp {
        scaler: StandardScaler,
        model: Mlp,
    },
    Ensemble {
        forest: RandomForest,
        gbdt: Gbdt,
    },
}

impl FittedModel {
    fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        match self {
            FittedModel::NaiveBayes(m) => m.predict_proba(x),
            FittedModel::LogisticRegression { scaler, model } => model.predict_proba(&scaler.transform(x)),
            FittedModel::Knn { scaler, model } => model.predict_proba(&scaler.transform(x)),
            FittedModel::DecisionTree(m) => m.predict_proba(x),
            FittedModel::RandomForest(m) => m.predict_proba(x),
            FittedModel::Gbdt(m) => m.predict_proba(x),
            FittedModel::Mlp { scaler, model } => model.predict_proba(&scaler.transform(x)),
            FittedModel::Ensemble { forest, gbdt } => forest
                .predict_proba(x)
                .into_iter()
                .zip(gbdt.predict_proba(x))
                .map(|(a, b)| 0.5 * (a + b))
                .collect(),
        }
    }
}

fn scaled(data: &Dataset) -> (StandardScaler, Dataset) {
    let scaler = StandardScaler::fit(&data.x);
    let x = scaler.transform(&data.x);
    let d = Dataset {
        columns: data.columns.clone(),
        x,
        y: data.y.clone(),
    };
    (scaler, d)
}

/// A fitted learner plus the feature schema it expects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoringModel {
    pub kind: ModelKind,
    pub schema: Vec<String>,
    pub params: ModelParams,
    pub model: FittedModel,
}

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelDocument {
    format_version: u32,
    kind: ModelKind,
    schema: Vec<String>,
    params: ModelParams,
    model: FittedModel,
}

impl From<ScoringModel> for ModelDocument {
    fn from(m: ScoringModel) -> Self {
        ModelDocument {
            format_version: MODEL_FORMAT_VERSION,
            kind: m.kind,
            schema: m.schema,
            params: m.params,
            model: m.model,
        }
    }
}

impl ScoringModel {
    pub fn fit(params: &ModelParams, data: &Dataset, seed: u64) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::InsufficientData("empty training set".into()));
        }
        let model = match params {
            ModelParams::NaiveBayes => FittedModel::NaiveBayes(NaiveBayes::fit(data)?),
            ModelParams::LogisticRegression(p) => {
                let (scaler, d) = scaled(data);
                FittedModel::LogisticRegression {
                    model: LogisticRegression::fit(&d, p)?,
                    scaler,
                }
            }
            ModelParams::Knn(p) => {
                let (scaler, d) = scaled(data);
                FittedModel::Knn {
                    model: Knn::fit(&d, p)?,
                    scaler,
                }
            }
            ModelParams::DecisionTree(p) => FittedModel::DecisionTree(DecisionTree::fit(data, p, seed)?),
            ModelParams::RandomForest(p) => FittedModel::RandomForest(RandomForest::fit(data, p, seed)?),
            ModelParams::Gbdt(p) => FittedModel::Gbdt(Gbdt::fit(data, p, seed)?),
            ModelParams::Mlp(p) => {
                let (scaler, d) = scaled(data);
                FittedModel::Mlp {
                    model: Mlp::fit(&d, p, seed)?,
                    scaler,
                }
            }
            ModelParams::Ensemble { forest, gbdt } => FittedModel::Ensemble {
                forest: RandomForest::fit(data, forest, seed)?,
                gbdt: Gbdt::fit(data, gbdt, seed.wrapping_add(1))?,
            },
        };
        Ok(ScoringModel {
            kind: params.kind(),
            schema: data.columns.clone(),
            params: params.clone(),
            model,
        })
    }

    /// P(Late) for each row of `x`, whose columns must match the schema.
    pub fn predict_proba(&self, columns: &[String], x: &Matrix) -> Result<Vec<f64>> {
        if columns != self.schema.as_slice() || x.cols() != self.schema.len() {
            return Err(Error::SchemaMismatch {
                expected: self.schema.len(),
                expected_names: self.schema.clone(),
                found_names: columns.to_vec(),
            });
        }
        let p = self.model.predict_proba(x);
        if let Some(bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::Diverged(format!("{} produced probability {bad}", self.kind)));
        }
        Ok(p)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<f64>> {
        self.predict_proba(&data.columns, &data.x)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument::from(self.clone());
        serde_json::to_string(&doc).map_err(|e| Error::Config(format!("model serialization: {e}")))
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ModelDocument =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("model document: {e}")))?;
        if doc.format_version != MODEL_FORMAT_VERSION {
            return Err(Error::Config(format!(
                "model format version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                doc.format_version
            )));
        }
        if doc.params.kind() != doc.kind {
            return Err(Error::Config(format!(
                "model document kind {} does not match its parameters ({})",
                doc.kind,
                doc.params.kind()
            )));
        }
        Ok(ScoringModel {
            kind: doc.kind,
            schema: doc.schema,
            params: doc.params,
            model: doc.model,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let doc = ModelDocument::from(self.clone());
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(std::io::BufWriter::new(f), &doc).map_err(|e| Error::json(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&s)
    }
}
