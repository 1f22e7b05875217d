//! Fixed-length classifier inputs: the ten profile attributes, the last
//! knowledge state, or both concatenated (profile first).

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::data::{StudentProfile, PROFILE_FEATURES};
use crate::dkt::DktModel;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::data::StudentSequence;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureMode {
    /// Profile attributes only.
    Sp,
    /// Last knowledge state only.
    Kt,
    /// Profile attributes followed by the last knowledge state.
    KtSp,
}

impl FeatureMode {
    pub const ALL: [FeatureMode; 3] = [FeatureMode::Sp, FeatureMode::Kt, FeatureMode::KtSp];

    pub fn uses_profile(self) -> bool {
        matches!(self, FeatureMode::Sp | FeatureMode::KtSp)
    }

    pub fn uses_state(self) -> bool {
        matches!(self, FeatureMode::Kt | FeatureMode::KtSp)
    }
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Sp => "SP",
            FeatureMode::Kt => "KT",
            FeatureMode::KtSp => "KT&SP",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "SP" => Ok(FeatureMode::Sp),
            "KT" => Ok(FeatureMode::Kt),
            "KT&SP" | "KTSP" | "KT_SP" => Ok(FeatureMode::KtSp),
            other => Err(Error::Config(format!("unknown feature mode `{other}`"))),
        }
    }
}

/// Ordered feature names for a mode. State features are named `s_<j>`
/// unless explicit skill names are supplied.
pub fn feature_schema(mode: FeatureMode, skill_names: &[String]) -> Vec<String> {
    let mut schema = Vec::new();
    if mode.uses_profile() {
        schema.extend(PROFILE_FEATURES.iter().map(|s| s.to_string()));
    }
    if mode.uses_state() {
        schema.extend(skill_names.iter().cloned());
    }
    schema
}

pub fn default_skill_names(n_skills: usize) -> Vec<String> {
    (0..n_skills).map(|j| format!("s_{j}")).collect()
}

/// One student's classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub schema: Vec<String>,
}

/// `y_T` from a dropout-free pass over the full sequence.
pub fn extract_last_state(model: &DktModel, sequence: &StudentSequence) -> Result<Vec<f64>> {
    if sequence.is_empty() {
        return Err(Error::Range("cannot extract a state from an empty sequence".into()));
    }
    let states = model.predict(sequence)?;
    Ok(states.last().expect("non-empty").to_vec())
}

pub fn build_features(
    profile: &StudentProfile,
    last_state: &[f64],
    mode: FeatureMode,
) -> Result<FeatureVector> {
    build_features_named(profile, last_state, mode, &default_skill_names(last_state.len()))
}

pub fn build_features_named(
    profile: &StudentProfile,
    last_state: &[f64],
    mode: FeatureMode,
    skill_names: &[String],
) -> Result<FeatureVector> {
    if mode.uses_state() && skill_names.len() != last_state.len() {
        return Err(Error::Shape(format!(
            "{} skill names for a state of length {}",
            skill_names.len(),
            last_state.len()
        )));
    }
    let schema = feature_schema(mode, skill_names);
    let mut values = Vec::with_capacity(schema.len());
    if mode.uses_profile() {
        values.extend(profile.feature_values());
    }
    if mode.uses_state() {
        values.extend_from_slice(last_state);
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFiniteFeature {
            feature: schema[i].clone(),
        });
    }
    Ok(FeatureVector { values, schema })
}

/// A labeled feature table.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub schema: Vec<String>,
    pub x: Matrix,
    pub labels: Vec<bool>,
}

impl FeatureMatrix {
    pub fn from_vectors(vectors: Vec<FeatureVector>, labels: Vec<bool>) -> Result<Self> {
        if vectors.len() != labels.len() {
            return Err(Error::Shape("one label per feature vector expected".into()));
        }
        let schema = vectors.first().map(|v| v.schema.clone()).unwrap_or_default();
        if let Some(v) = vectors.iter().find(|v| v.schema != schema) {
            return Err(Error::SchemaMismatch {
                expected: schema,
                found: v.schema.clone(),
            });
        }
        let rows: Vec<Vec<f64>> = vectors.into_iter().map(|v| v.values).collect();
        let x = if rows.is_empty() {
            Matrix::zeros(0, schema.len())
        } else {
            Matrix::from_rows(&rows)?
        };
        Ok(Self { schema, x, labels })
    }

    pub fn select_columns(&self, idx: &[usize]) -> FeatureMatrix {
        FeatureMatrix {
            schema: idx.iter().map(|&j| self.schema[j].clone()).collect(),
            x: self.x.select_cols(idx),
            labels: self.labels.clone(),
        }
    }

    /// Writes the schema as header, one row per student, then `label`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut csv = csv::Writer::from_writer(writer);
        let mut header = self.schema.clone();
        header.push("label".into());
        csv.write_record(&header)?;
        for (row, &label) in self.x.iter_rows().zip(&self.labels) {
            let mut rec: Vec<String> = row.iter().map(f64::to_string).collect();
            rec.push(u8::from(label).to_string());
            csv.write_record(&rec)?;
        }
        csv.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut csv = csv::Reader::from_reader(reader);
        let headers = csv.headers()?.clone();
        let n = headers.len();
        if n == 0 || &headers[n - 1] != "label" {
            return Err(Error::MissingColumn {
                column: "label".into(),
            });
        }
        let schema: Vec<String> = headers.iter().take(n - 1).map(str::to_owned).collect();
        let mut data = Vec::new();
        let mut labels = Vec::new();
        for rec in csv.records() {
            let rec = rec?;
            let line = rec.position().map_or(0, |p| p.line());
            for (j, v) in rec.iter().enumerate() {
                if j + 1 == n {
                    labels.push(match v {
                        "1" => true,
                        "0" => false,
                        other => {
                            return Err(Error::Row {
                                line,
                                message: format!("label must be 0 or 1, got `{other}`"),
                            })
                        }
                    });
                } else {
                    data.push(v.parse::<f64>().map_err(|_| Error::Row {
                        line,
                        message: format!("`{}` is not a number: `{v}`", schema[j]),
                    })?);
                }
            }
        }
        let x = Matrix::new(labels.len(), schema.len(), data)?;
        Ok(Self { schema, x, labels })
    }
}

/// Per-column z-score parameters fitted on a training fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Columns with zero variance, passed through untouched.
    pub constant: Vec<bool>,
}

impl Standardizer {
    pub fn fit(train: &Matrix) -> Result<Self> {
        if train.rows() == 0 {
            return Err(Error::Shape("cannot standardize an empty matrix".into()));
        }
        let n = train.rows() as f64;
        let mut mean = vec![0.0; train.cols()];
        for r in train.iter_rows() {
            mean.iter_mut().zip(r).for_each(|(m, v)| *m += v);
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; train.cols()];
        for r in train.iter_rows() {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.into_iter().map(|s| (s / n).sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(&s, &m)| s <= 1e-12 * (1.0 + m.abs()))
            .collect();
        Ok(Self {
            mean,
            std,
            constant,
        })
    }

    pub fn transform(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.mean.len() {
            return Err(Error::Shape(format!(
                "{} columns, standardizer fitted on {}",
                x.cols(),
                self.mean.len()
            )));
        }
        let mut out = x.clone();
        for i in 0..out.rows() {
            for (j, v) in out.row_mut(i).iter_mut().enumerate() {
                if !self.constant[j] {
                    *v = (*v - self.mean[j]) / self.std[j];
                }
            }
        }
        Ok(out)
    }
}

/// Fits on `train` and transforms both matrices with the training statistics.
pub fn standardize(train: &Matrix, apply: &Matrix) -> Result<(Matrix, Matrix, Standardizer)> {
    let s = Standardizer::fit(train)?;
    Ok((s.transform(train)?, s.transform(apply)?, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile() -> StudentProfile {
        StudentProfile {
            student_id: "a".into(),
            usage_year: "2005".into(),
            num_actions: 12,
            ave_know: 0.4,
            ave_correct: 0.6,
            ave_carelessness: 0.1,
            ave_res_bored: 0.2,
            ave_res_engcon: 0.7,
            ave_res_conf: 0.1,
            ave_res_frust: 0.1,
            ave_res_offtask: 0.2,
            ave_res_gaming: 0.05,
        }
    }

    #[test]
    fn lengths_per_mode() {
        let state = vec![0.5; 102];
        assert_eq!(build_features(&profile(), &state, FeatureMode::KtSp).unwrap().values.len(), 112);
        assert_eq!(build_features(&profile(), &state, FeatureMode::Sp).unwrap().values.len(), 10);
        let f = build_features(&profile(), &[0.5; 5], FeatureMode::Kt).unwrap();
        assert_eq!(f.values.len(), 5);
        assert_eq!(f.schema[4], "s_4");
    }

    #[test]
    fn profile_comes_first() {
        let f = build_features(&profile(), &[0.9, 0.8], FeatureMode::KtSp).unwrap();
        assert_eq!(f.schema[0], "num_actions");
        assert_eq!(f.values[0], 12.0);
        assert_eq!(&f.values[10..], &[0.9, 0.8]);
    }

    #[test]
    fn nan_names_the_feature() {
        let err = build_features(&profile(), &[0.5, f64::NAN], FeatureMode::Kt).unwrap_err();
        assert!(matches!(err, Error::NonFiniteFeature { feature } if feature == "s_1"));
    }

    #[test]
    fn constant_column_passes_through() {
        let x = Matrix::from_rows(&[[3.0, 1.0], [3.0, 2.0], [3.0, 6.0]]).unwrap();
        let (t, _, s) = standardize(&x, &x).unwrap();
        assert_eq!(s.constant, vec![true, false]);
        assert_eq!(t.column(0), vec![3.0; 3]);
        let c = t.column(1);
        let m = c.iter().sum::<f64>() / 3.0;
        let sd = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / 3.0).sqrt();
        assert!(m.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9);
    }

    #[test]
    fn apply_set_uses_training_statistics() {
        let train = Matrix::from_rows(&[[1.0], [3.0]]).unwrap();
        let test = Matrix::from_rows(&[[5.0], [100.0]]).unwrap();
        let (_, t, _) = standardize(&train, &test).unwrap();
        assert_eq!(t.column(0), vec![3.0, 98.0]);
    }

    #[test]
    fn csv_round_trip() {
        let fm = FeatureMatrix::from_vectors(
            vec![
                build_features(&profile(), &[0.25, 0.5], FeatureMode::KtSp).unwrap(),
                build_features(&profile(), &[0.125, 0.75], FeatureMode::KtSp).unwrap(),
            ],
            vec![true, false],
        )
        .unwrap();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        assert_eq!(FeatureMatrix::read_csv(buf.as_slice()).unwrap(), fm);
    }
}
