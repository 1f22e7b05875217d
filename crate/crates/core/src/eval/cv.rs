use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::folds::{fold_split, stratified_kfold};
use super::metrics::{auc, average_precision, combined_score, rmse};
use crate::classify::{ClassifierSpec, Family, GbdtParams, LdaSolver, Penalty, TrainedClassifier};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The four metrics on one set of predictions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub ap: f64,
    pub auc: f64,
    pub rmse: f64,
    pub combined: f64,
}

impl Scores {
    pub fn compute(probs: &[f64], labels: &[bool]) -> Result<Self> {
        let auc = auc(probs, labels)?;
        let rmse = rmse(probs, labels)?;
        Ok(Self {
            ap: average_precision(probs, labels)?,
            auc,
            rmse,
            combined: combined_score(auc, rmse),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        Self {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Fold-aggregated metrics. The combined mean is computed from the mean AUC
/// and mean RMSE so the table satisfies `combined = AUC + 1 − RMSE` exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub ap: MeanStd,
    pub auc: MeanStd,
    pub rmse: MeanStd,
    pub combined: MeanStd,
}

impl Summary {
    pub fn of(folds: &[Scores]) -> Self {
        let pick = |f: fn(&Scores) -> f64| folds.iter().map(f).collect::<Vec<_>>();
        let auc = MeanStd::of(&pick(|s| s.auc));
        let rmse = MeanStd::of(&pick(|s| s.rmse));
        Self {
            ap: MeanStd::of(&pick(|s| s.ap)),
            auc,
            rmse,
            combined: MeanStd {
                mean: combined_score(auc.mean, rmse.mean),
                std: MeanStd::of(&pick(|s| s.combined)).std,
            },
        }
    }
}

/// Cross-validated scores of one specification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvResult {
    pub spec: ClassifierSpec,
    pub train_folds: Vec<Scores>,
    pub test_folds: Vec<Scores>,
    pub train: Summary,
    pub test: Summary,
}

fn evaluate_fold(
    spec: &ClassifierSpec,
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    assignment: &[usize],
    fold: usize,
) -> Result<(Scores, Scores)> {
    let (train, test) = fold_split(assignment, fold);
    let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<bool>>();
    let (x_train, y_train) = (x.select_rows(&train), pick(&train));
    let (x_test, y_test) = (x.select_rows(&test), pick(&test));
    let model = TrainedClassifier::fit(spec, schema, &x_train, &y_train)?;
    let train_scores = Scores::compute(&model.predict_proba_matrix(&x_train)?, &y_train)?;
    let test_scores = Scores::compute(&model.predict_proba_matrix(&x_test)?, &y_test)?;
    Ok((train_scores, test_scores))
}

fn assemble(spec: ClassifierSpec, folds: Vec<(Scores, Scores)>) -> CvResult {
    let (train_folds, test_folds): (Vec<_>, Vec<_>) = folds.into_iter().unzip();
    CvResult {
        spec,
        train: Summary::of(&train_folds),
        test: Summary::of(&test_folds),
        train_folds,
        test_folds,
    }
}

/// Scores one specification on precomputed fold assignments.
pub fn cross_validate(
    spec: &ClassifierSpec,
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    assignment: &[usize],
) -> Result<CvResult> {
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let folds = (0..k)
        .into_par_iter()
        .map(|f| evaluate_fold(spec, schema, x, y, assignment, f))
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(*spec, folds))
}

/// Hyperparameter grid searched for each family.
pub fn default_grid(family: Family) -> Vec<ClassifierSpec> {
    const C: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];
    match family {
        Family::Gbdt => {
            let mut grid = Vec::new();
            for n_trees in [10, 25, 50, 120, 300] {
                for max_depth in [2, 3, 5, 8] {
                    for min_samples_leaf in [1, 2, 5, 10] {
                        grid.push(ClassifierSpec::Gbdt(GbdtParams {
                            n_trees,
                            max_depth,
                            min_samples_leaf,
                            learning_rate: 0.1,
                        }));
                    }
                }
            }
            grid
        }
        Family::Lda => [LdaSolver::Svd, LdaSolver::Lsqr, LdaSolver::Eigen]
            .into_iter()
            .map(|solver| ClassifierSpec::Lda { solver })
            .collect(),
        Family::Lr => C
            .iter()
            .flat_map(|&c| {
                [Penalty::L1, Penalty::L2]
                    .into_iter()
                    .map(move |penalty| ClassifierSpec::Lr { c, penalty })
            })
            .collect(),
        Family::Svm => C
            .iter()
            .map(|&c| ClassifierSpec::Svm { c, gamma: None })
            .collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSearch {
    /// Index into `results` of the selected specification.
    pub best: usize,
    /// One entry per grid point, in grid order.
    pub results: Vec<CvResult>,
}

impl GridSearch {
    pub fn best_result(&self) -> &CvResult {
        &self.results[self.best]
    }

    pub fn best_spec(&self) -> ClassifierSpec {
        self.results[self.best].spec
    }
}

/// Evaluates every grid point on the same folds and keeps the highest mean
/// test combined score; the earliest grid point wins ties.
pub fn grid_search_on_folds(
    grid: &[ClassifierSpec],
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    assignment: &[usize],
) -> Result<GridSearch> {
    if grid.is_empty() {
        return Err(Error::Config("empty hyperparameter grid".into()));
    }
    let k = assignment.iter().max().map_or(0, |m| m + 1);
    let jobs: Vec<(usize, usize)> = (0..grid.len())
        .flat_map(|g| (0..k).map(move |f| (g, f)))
        .collect();
    let outcomes: Vec<Result<(Scores, Scores)>> = jobs
        .par_iter()
        .map(|&(g, f)| evaluate_fold(&grid[g], schema, x, y, assignment, f))
        .collect();
    let mut outcomes = outcomes.into_iter();
    let mut results = Vec::with_capacity(grid.len());
    for (index, spec) in grid.iter().enumerate() {
        let folds = outcomes
            .by_ref()
            .take(k)
            .collect::<Result<Vec<_>>>()
            .map_err(|e| Error::GridPoint {
                index,
                spec: spec.to_string(),
                source: Box::new(e),
            })?;
        results.push(assemble(*spec, folds));
    }
    let mut best = 0;
    for (i, r) in results.iter().enumerate() {
        if r.test.combined.mean > results[best].test.combined.mean {
            best = i;
        }
    }
    Ok(GridSearch { best, results })
}

/// [`grid_search_on_folds`] with fresh stratified folds.
pub fn grid_search(
    grid: &[ClassifierSpec],
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    k: usize,
    seed: u64,
) -> Result<GridSearch> {
    let assignment = stratified_kfold(y, k, seed)?;
    grid_search_on_folds(grid, schema, x, y, &assignment)
}

/// Outer-fold scores of a full grid search repeated inside each outer
/// training split; free of the selection bias in the tuned score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NestedCv {
    pub chosen: Vec<ClassifierSpec>,
    pub test_folds: Vec<Scores>,
    pub test: Summary,
}

pub fn nested_cv(
    grid: &[ClassifierSpec],
    schema: &[String],
    x: &Matrix,
    y: &[bool],
    k: usize,
    seed: u64,
) -> Result<NestedCv> {
    let outer = stratified_kfold(y, k, seed)?;
    let mut chosen = Vec::with_capacity(k);
    let mut test_folds = Vec::with_capacity(k);
    for f in 0..k {
        let (train, test) = fold_split(&outer, f);
        let pick = |idx: &[usize]| idx.iter().map(|&i| y[i]).collect::<Vec<bool>>();
        let (x_train, y_train) = (x.select_rows(&train), pick(&train));
        let search = grid_search(grid, schema, &x_train, &y_train, k, seed.wrapping_add(1 + f as u64))?;
        let spec = search.best_spec();
        let model = TrainedClassifier::fit(&spec, schema, &x_train, &y_train)?;
        let probs = model.predict_proba_matrix(&x.select_rows(&test))?;
        test_folds.push(Scores::compute(&probs, &pick(&test))?);
        chosen.push(spec);
    }
    Ok(NestedCv {
        chosen,
        test: Summary::of(&test_folds),
        test_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid_sizes() {
        assert_eq!(default_grid(Family::Gbdt).len(), 80);
        assert_eq!(default_grid(Family::Lda).len(), 3);
        assert_eq!(default_grid(Family::Lr).len(), 12);
        assert_eq!(default_grid(Family::Svm).len(), 6);
    }

    #[test]
    fn summary_combined_is_exact() {
        let folds = [
            Scores { ap: 0.5, auc: 0.7, rmse: 0.4, combined: combined_score(0.7, 0.4) },
            Scores { ap: 0.6, auc: 0.6, rmse: 0.45, combined: combined_score(0.6, 0.45) },
        ];
        let s = Summary::of(&folds);
        assert_eq!(s.combined.mean, s.auc.mean + (1.0 - s.rmse.mean));
        assert!((s.auc.std - 0.05).abs() < 1e-15);
    }
}
