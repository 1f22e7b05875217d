use serde::{Deserialize, Serialize};

use super::cv::{cross_validate, CvResult};
use super::folds::stratified_kfold;
use crate::classify::{ClassifierSpec, TrainedClassifier};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Candidate subset sizes, capped at the number of features and always
/// including the full set.
pub fn default_sizes(n_features: usize) -> Vec<usize> {
    let mut sizes: Vec<usize> = [5, 8, 10, 12, 15, 20]
        .into_iter()
        .filter(|&s| s < n_features)
        .collect();
    sizes.push(n_features);
    sizes
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeSubset {
    pub size: usize,
    /// Column indices into the original schema, in schema order.
    pub features: Vec<usize>,
    pub names: Vec<String>,
    pub cv: CvResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RfeResult {
    /// Column indices in the order they were removed.
    pub elimination_order: Vec<usize>,
    /// One entry per requested size, ascending.
    pub subsets: Vec<RfeSubset>,
    /// Index into `subsets` with the highest mean test combined score; the
    /// smallest size wins ties.
    pub best: usize,
}

impl RfeResult {
    pub fn best_subset(&self) -> &RfeSubset {
        &self.subsets[self.best]
    }

    pub fn subset_of_size(&self, size: usize) -> Option<&RfeSubset> {
        self.subsets.iter().find(|s| s.size == size)
    }
}

/// Ranks features by repeatedly fitting on all rows and dropping the one
/// with the smallest |coefficient| (or importance), one per round.
///
/// Returns the surviving columns after each round, starting with the full
/// set, so `rankings[d - s]` is the subset of size `s`.
pub fn eliminate(
    spec: &ClassifierSpec,
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    min_size: usize,
) -> Result<Vec<Vec<usize>>> {
    let mut current: Vec<usize> = (0..x.cols()).collect();
    let mut rounds = vec![current.clone()];
    while current.len() > min_size.max(1) {
        let names: Vec<String> = current.iter().map(|&j| schema[j].clone()).collect();
        let model = TrainedClassifier::fit(spec, &names, &x.select_cols(&current), y)?;
        let weights = model.coefficients().magnitudes().ok_or_else(|| {
            Error::Unsupported(format!(
                "{} exposes no coefficients, so features cannot be eliminated",
                spec.family()
            ))
        })?;
        let mut weakest = 0;
        for (k, w) in weights.iter().enumerate() {
            if *w < weights[weakest] {
                weakest = k;
            }
        }
        current.remove(weakest);
        rounds.push(current.clone());
    }
    Ok(rounds)
}

/// Recursive feature elimination with step 1, scoring each requested subset
/// size by stratified cross-validation.
pub fn rfe(
    spec: &ClassifierSpec,
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    sizes: &[usize],
    k: usize,
    seed: u64,
) -> Result<RfeResult> {
    let d = x.cols();
    let mut sizes: Vec<usize> = sizes.to_vec();
    sizes.sort_unstable();
    sizes.dedup();
    if sizes.is_empty() || sizes[0] == 0 || *sizes.last().unwrap() > d {
        return Err(Error::Config(format!(
            "subset sizes must lie in 1..={d}, got {sizes:?}"
        )));
    }
    if spec.family() == crate::classify::Family::Svm {
        return Err(Error::Unsupported(
            "recursive feature elimination needs coefficients; the RBF SVM has none".into(),
        ));
    }
    let rounds = eliminate(spec, schema, x, y, sizes[0])?;
    let elimination_order = rounds
        .windows(2)
        .map(|w| *w[0].iter().find(|j| !w[1].contains(j)).expect("one removed"))
        .collect();
    let assignment = stratified_kfold(y, k, seed)?;
    let subsets = sizes
        .iter()
        .map(|&size| {
            let features = rounds[d - size].clone();
            let names: Vec<String> = features.iter().map(|&j| schema[j].clone()).collect();
            let cv = cross_validate(spec, &names, &x.select_cols(&features), y, &assignment)?;
            Ok(RfeSubset {
                size,
                features,
                names,
                cv,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best = 0;
    for (i, s) in subsets.iter().enumerate() {
        if s.cv.test.combined.mean > subsets[best].cv.test.combined.mean {
            best = i;
        }
    }
    Ok(RfeResult {
        elimination_order,
        subsets,
        best,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sizes_are_capped_and_include_everything() {
        assert_eq!(default_sizes(10), vec![5, 8, 10]);
        assert_eq!(default_sizes(22), vec![5, 8, 10, 12, 15, 20, 22]);
        assert_eq!(default_sizes(3), vec![3]);
    }
}
