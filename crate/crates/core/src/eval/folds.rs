use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Assigns each sample to one of `k` folds so that every fold holds within
/// one sample of its share of each class.
///
/// Each class is shuffled independently and dealt round-robin; the dealing
/// position carries over from the positive class to the negative class so
/// fold sizes also differ by at most one.
///
/// ```
/// use kt_career::eval::stratified_kfold;
///
/// let labels: Vec<bool> = (0..10).map(|i| i < 4).collect();
/// let folds = stratified_kfold(&labels, 2, 7).unwrap();
/// let positives_in_fold0 = (0..10).filter(|&i| folds[i] == 0 && labels[i]).count();
/// assert_eq!(positives_in_fold0, 2);
/// ```
pub fn stratified_kfold(labels: &[bool], k: usize, seed: u64) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {k}")));
    }
    let mut positives: Vec<usize> = (0..labels.len()).filter(|&i| labels[i]).collect();
    let mut negatives: Vec<usize> = (0..labels.len()).filter(|&i| !labels[i]).collect();
    let minority = positives.len().min(negatives.len());
    if k > minority {
        return Err(Error::Config(format!(
            "{k} folds exceed the minority class count {minority}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    positives.shuffle(&mut rng);
    negatives.shuffle(&mut rng);
    let mut assignment = vec![0; labels.len()];
    for (slot, &i) in positives.iter().chain(&negatives).enumerate() {
        assignment[i] = slot % k;
    }
    Ok(assignment)
}

/// Splits sample indices into (train, test) for one fold.
pub fn fold_split(assignment: &[usize], fold: usize) -> (Vec<usize>, Vec<usize>) {
    (0..assignment.len()).partition(|&i| assignment[i] != fold)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cohort_sized_folds_are_balanced() {
        let labels: Vec<bool> = (0..467).map(|i| i < 117).collect();
        let folds = stratified_kfold(&labels, 5, 3).unwrap();
        for f in 0..5 {
            let size = folds.iter().filter(|&&a| a == f).count();
            let pos = (0..467).filter(|&i| folds[i] == f && labels[i]).count();
            assert!((93..=94).contains(&size), "{size}");
            assert!((23..=24).contains(&pos), "{pos}");
        }
    }

    #[test]
    fn leave_one_out_is_impossible_for_binary_labels() {
        let labels = [true, false, true, false];
        assert!(stratified_kfold(&labels, 4, 0).is_err());
    }

    #[test]
    fn seeded() {
        let labels: Vec<bool> = (0..50).map(|i| i % 3 == 0).collect();
        assert_eq!(
            stratified_kfold(&labels, 5, 9).unwrap(),
            stratified_kfold(&labels, 5, 9).unwrap()
        );
        assert_ne!(
            stratified_kfold(&labels, 5, 9).unwrap(),
            stratified_kfold(&labels, 5, 10).unwrap()
        );
    }
}
