//! Binary classifiers that map a student's feature vector to the
//! probability of a STEM career: boosted trees, linear discriminant
//! analysis, penalized logistic regression and an RBF support vector
//! machine.
//!
//! Linear and kernel families are fitted on z-scored features (statistics
//! from the training rows); trees see raw values.

pub mod gbdt;
pub mod lda;
pub mod logistic;
pub mod svm;

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureMatrix, Standardizer};
use crate::matrix::Matrix;

pub use gbdt::{Gbdt, GbdtParams};
pub use lda::{Lda, LdaSolver};
pub use logistic::{Logistic, Penalty};
pub use svm::Svm;

pub(crate) fn sigmoid(f: f64) -> f64 {
    if f >= 0.0 {
        1.0 / (1.0 + (-f).exp())
    } else {
        let e = f.exp();
        e / (1.0 + e)
    }
}

/// `−log P(t | margin f)` for a logistic model, overflow-safe.
pub(crate) fn log_loss(f: f64, t: bool) -> f64 {
    let softplus = f.max(0.0) + (-f.abs()).exp().ln_1p();
    softplus - if t { f } else { 0.0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "GBDT")]
    Gbdt,
    #[serde(rename = "LDA")]
    Lda,
    #[serde(rename = "LR")]
    Lr,
    #[serde(rename = "SVM")]
    Svm,
}

impl Family {
    pub const ALL: [Family; 4] = [Family::Gbdt, Family::Lda, Family::Lr, Family::Svm];
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Family::Gbdt => "GBDT",
            Family::Lda => "LDA",
            Family::Lr => "LR",
            Family::Svm => "SVM",
        })
    }
}

/// A classifier family together with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum ClassifierSpec {
    #[serde(rename = "GBDT")]
    Gbdt(GbdtParams),
    #[serde(rename = "LDA")]
    Lda { solver: LdaSolver },
    #[serde(rename = "LR")]
    Lr { c: f64, penalty: Penalty },
    #[serde(rename = "SVM")]
    Svm { c: f64, gamma: Option<f64> },
}

impl ClassifierSpec {
    pub fn family(&self) -> Family {
        match self {
            ClassifierSpec::Gbdt(_) => Family::Gbdt,
            ClassifierSpec::Lda { .. } => Family::Lda,
            ClassifierSpec::Lr { .. } => Family::Lr,
            ClassifierSpec::Svm { .. } => Family::Svm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        match *self {
            ClassifierSpec::Gbdt(p) => {
                if p.n_trees < 1 || p.max_depth < 1 || p.min_samples_leaf < 1 {
                    return bad(format!("{self}: trees, depth and min leaf must be ≥ 1"));
                }
                if !(p.learning_rate > 0.0 && p.learning_rate <= 1.0) {
                    return bad(format!("{self}: shrinkage must be in (0, 1]"));
                }
            }
            ClassifierSpec::Lda { .. } => {}
            ClassifierSpec::Lr { c, .. } | ClassifierSpec::Svm { c, gamma: None } => {
                if !(c > 0.0 && c.is_finite()) {
                    return bad(format!("{self}: C must be positive"));
                }
            }
            ClassifierSpec::Svm { c, gamma: Some(g) } => {
                if !(c > 0.0 && c.is_finite() && g > 0.0 && g.is_finite()) {
                    return bad(format!("{self}: C and gamma must be positive"));
                }
            }
        }
        Ok(())
    }

    fn standardizes(&self) -> bool {
        !matches!(self, ClassifierSpec::Gbdt(_))
    }
}

impl fmt::Display for ClassifierSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ClassifierSpec::Gbdt(p) => write!(
                f,
                "GBDT(trees={}, depth={}, min_leaf={}, shrinkage={})",
                p.n_trees, p.max_depth, p.min_samples_leaf, p.learning_rate
            ),
            ClassifierSpec::Lda { solver } => write!(f, "LDA(solver={solver:?})"),
            ClassifierSpec::Lr { c, penalty } => write!(f, "LR(C={c}, penalty={penalty:?})"),
            ClassifierSpec::Svm { c, gamma: None } => write!(f, "SVM(C={c}, gamma=scale)"),
            ClassifierSpec::Svm { c, gamma: Some(g) } => write!(f, "SVM(C={c}, gamma={g})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family")]
pub enum FittedModel {
    #[serde(rename = "GBDT")]
    Gbdt(Gbdt),
    #[serde(rename = "LDA")]
    Lda(Lda),
    #[serde(rename = "LR")]
    Lr(Logistic),
    #[serde(rename = "SVM")]
    Svm(Svm),
}

/// What a fitted model can say about individual features.
#[derive(Debug, Clone, PartialEq)]
pub enum Coefficients {
    /// Weights of a linear decision function in standardized units.
    Linear(Vec<f64>),
    /// Normalized impurity decrease.
    Importances(Vec<f64>),
    Unsupported,
}

impl Coefficients {
    /// Per-feature magnitudes used to rank features, if any.
    pub fn magnitudes(&self) -> Option<Vec<f64>> {
        match self {
            Coefficients::Linear(w) => Some(w.iter().map(|v| v.abs()).collect()),
            Coefficients::Importances(w) => Some(w.clone()),
            Coefficients::Unsupported => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub spec: ClassifierSpec,
    pub schema: Vec<String>,
    pub standardizer: Option<Standardizer>,
    pub model: FittedModel,
}

const FORMAT: &str = "kt-career-classifier";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Envelope {
    format: String,
    version: u32,
    classifier: TrainedClassifier,
}

fn check_inputs(schema: &[String], x: &Matrix, y: &[bool]) -> Result<()> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    if x.cols() == 0 {
        return Err(Error::Shape("no feature columns".into()));
    }
    if schema.len() != x.cols() {
        return Err(Error::Shape(format!(
            "{} schema names for {} columns",
            schema.len(),
            x.cols()
        )));
    }
    check_finite(schema, x)?;
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels(format!(
            "all {} training labels belong to one class",
            y.len()
        )));
    }
    Ok(())
}

fn check_finite(schema: &[String], x: &Matrix) -> Result<()> {
    for r in x.iter_rows() {
        if let Some(j) = r.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteFeature {
                feature: schema.get(j).cloned().unwrap_or_else(|| format!("column {j}")),
            });
        }
    }
    Ok(())
}

impl TrainedClassifier {
    pub fn fit(spec: &ClassifierSpec, schema: &[String], x: &Matrix, y: &[bool]) -> Result<Self> {
        spec.validate()?;
        check_inputs(schema, x, y)?;
        let standardizer = if spec.standardizes() {
            Some(Standardizer::fit(x)?)
        } else {
            None
        };
        let scaled;
        let xs = match &standardizer {
            Some(s) => {
                scaled = s.transform(x)?;
                &scaled
            }
            None => x,
        };
        let model = match *spec {
            ClassifierSpec::Gbdt(p) => FittedModel::Gbdt(Gbdt::fit(xs, y, p)?),
            ClassifierSpec::Lda { solver } => FittedModel::Lda(Lda::fit(xs, y, solver)?),
            ClassifierSpec::Lr { c, penalty } => FittedModel::Lr(Logistic::fit(xs, y, c, penalty)?),
            ClassifierSpec::Svm { c, gamma } => FittedModel::Svm(Svm::fit(xs, y, c, gamma)?),
        };
        Ok(Self {
            spec: *spec,
            schema: schema.to_vec(),
            standardizer,
            model,
        })
    }

    pub fn fit_table(spec: &ClassifierSpec, table: &FeatureMatrix) -> Result<Self> {
        Self::fit(spec, &table.schema, &table.x, &table.labels)
    }

    pub fn family(&self) -> Family {
        self.spec.family()
    }

    fn prepared(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.schema.len() {
            return Err(Error::Shape(format!(
                "{} columns, model trained on {}",
                x.cols(),
                self.schema.len()
            )));
        }
        check_finite(&self.schema, x)?;
        match &self.standardizer {
            Some(s) => s.transform(x),
            None => Ok(x.clone()),
        }
    }

    /// Raw decision values (log-odds for GBDT, LDA and LR; signed margin for SVM).
    pub fn decision_function(&self, x: &Matrix) -> Result<Vec<f64>> {
        let x = self.prepared(x)?;
        Ok(x.iter_rows().map(|r| self.decision_row(r)).collect())
    }

    fn decision_row(&self, r: &[f64]) -> f64 {
        match &self.model {
            FittedModel::Gbdt(m) => m.decision(r),
            FittedModel::Lda(m) => m.decision(r),
            FittedModel::Lr(m) => m.decision(r),
            FittedModel::Svm(m) => m.decision(r),
        }
    }

    /// Probability of class 1 for each row of a matrix in schema order.
    pub fn predict_proba_matrix(&self, x: &Matrix) -> Result<Vec<f64>> {
        let x = self.prepared(x)?;
        Ok(x.iter_rows()
            .map(|r| match &self.model {
                FittedModel::Svm(m) => m.probability(r),
                _ => sigmoid(self.decision_row(r)),
            })
            .collect())
    }

    /// Probability of class 1; the table's schema must equal the training schema.
    pub fn predict_proba(&self, table: &FeatureMatrix) -> Result<Vec<f64>> {
        if table.schema != self.schema {
            return Err(Error::SchemaMismatch {
                expected: self.schema.clone(),
                found: table.schema.clone(),
            });
        }
        self.predict_proba_matrix(&table.x)
    }

    /// Hard labels; a probability of exactly 0.5 maps to class 0.
    pub fn predict(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(self.predict_proba_matrix(x)?.into_iter().map(|p| p > 0.5).collect())
    }

    pub fn coefficients(&self) -> Coefficients {
        match &self.model {
            FittedModel::Gbdt(m) => Coefficients::Importances(m.importances.clone()),
            FittedModel::Lda(m) => Coefficients::Linear(m.coef.clone()),
            FittedModel::Lr(m) => Coefficients::Linear(m.coef.clone()),
            FittedModel::Svm(_) => Coefficients::Unsupported,
        }
    }

    pub fn save<W: Write>(&self, writer: W) -> Result<()> {
        let envelope = Envelope {
            format: FORMAT.into(),
            version: FORMAT_VERSION,
            classifier: self.clone(),
        };
        serde_json::to_writer_pretty(writer, &envelope)?;
        Ok(())
    }

    pub fn load<R: Read>(reader: R) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_reader(reader)?;
        if value.get("format").and_then(|v| v.as_str()) != Some(FORMAT) {
            return Err(Error::format("classifier file", "missing format tag"));
        }
        let version = value.get("version").and_then(|v| v.as_u64());
        if version != Some(u64::from(FORMAT_VERSION)) {
            return Err(Error::format(
                "classifier file",
                format!("unsupported version {version:?}"),
            ));
        }
        let envelope: Envelope = serde_json::from_value(value)?;
        Ok(envelope.classifier)
    }
}
