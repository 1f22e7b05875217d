use std::io::Write;

use serde::{Deserialize, Serialize};

use super::cv::Summary;
use crate::classify::{ClassifierSpec, Family};
use crate::error::Result;

/// One model family evaluated on one feature set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub model: Family,
    pub features: String,
    pub spec: ClassifierSpec,
    pub train: Summary,
    pub test: Summary,
    /// Outer-fold test scores with hyperparameters re-tuned inside each fold.
    pub nested_test: Option<Summary>,
    /// Surviving feature names when the row comes from feature elimination.
    pub selected: Option<Vec<String>>,
}

impl ReportRow {
    /// Tuned test combined score minus its nested estimate; positive values
    /// indicate optimism from selecting hyperparameters on the reporting folds.
    pub fn selection_gap(&self) -> Option<f64> {
        self.nested_test
            .map(|n| self.test.combined.mean - n.combined.mean)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub rows: Vec<ReportRow>,
}

const HEADER: [&str; 13] = [
    "model",
    "features",
    "split",
    "ap_mean",
    "ap_std",
    "auc_mean",
    "auc_std",
    "rmse_mean",
    "rmse_std",
    "combined_mean",
    "combined_std",
    "hyperparameters",
    "selected_features",
];

impl EvalReport {
    pub fn row(&self, model: Family, features: &str) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.model == model && r.features == features)
    }

    /// Delimited table with one line per (model, features, split); splits are
    /// `train`, `test` and, when computed, `nested_test`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(HEADER)?;
        for row in &self.rows {
            let splits = [("train", Some(row.train)), ("test", Some(row.test)), ("nested_test", row.nested_test)];
            for (split, summary) in splits {
                let Some(s) = summary else { continue };
                let mut record = vec![row.model.to_string(), row.features.clone(), split.to_string()];
                for m in [s.ap, s.auc, s.rmse, s.combined] {
                    record.push(m.mean.to_string());
                    record.push(m.std.to_string());
                }
                record.push(row.spec.to_string());
                record.push(row.selected.as_ref().map(|v| v.join(";")).unwrap_or_default());
                w.write_record(&record)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}
