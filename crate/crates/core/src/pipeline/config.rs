use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::classify::{ClassifierSpec, Family, GbdtParams, LdaSolver, Penalty};
use crate::cohort::CohortConfig;
use crate::dkt::TrainConfig;
use crate::error::{Error, Result};
use crate::features::FeatureMode;

/// Which knowledge-tracing model a feature set draws its states from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KtVariant {
    #[serde(rename = "DKT")]
    Dkt,
    #[serde(rename = "DKT+")]
    DktPlus,
}

impl KtVariant {
    pub const ALL: [KtVariant; 2] = [KtVariant::Dkt, KtVariant::DktPlus];

    pub fn file_stem(self) -> &'static str {
        match self {
            KtVariant::Dkt => "dkt",
            KtVariant::DktPlus => "dkt_plus",
        }
    }

    /// `base` with the regularizer weights this variant trains under: all
    /// zero for DKT, the configured ones for DKT+.
    pub fn train_config(self, base: &TrainConfig) -> TrainConfig {
        match self {
            KtVariant::Dkt => TrainConfig {
                lambda_r: 0.0,
                lambda_w1: 0.0,
                lambda_w2: 0.0,
                ..base.clone()
            },
            KtVariant::DktPlus => base.clone(),
        }
    }
}

impl fmt::Display for KtVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KtVariant::Dkt => "DKT",
            KtVariant::DktPlus => "DKT+",
        })
    }
}

/// A predictor input: profile only, one model's last state, or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureSet {
    #[serde(rename = "SP")]
    Sp,
    #[serde(rename = "DKT")]
    Dkt,
    #[serde(rename = "DKT+")]
    DktPlus,
    #[serde(rename = "DKT&SP")]
    DktSp,
    #[serde(rename = "DKT+&SP")]
    DktPlusSp,
}

impl FeatureSet {
    pub const ALL: [FeatureSet; 5] = [
        FeatureSet::Sp,
        FeatureSet::Dkt,
        FeatureSet::DktPlus,
        FeatureSet::DktSp,
        FeatureSet::DktPlusSp,
    ];

    pub fn variant(self) -> Option<KtVariant> {
        match self {
            FeatureSet::Sp => None,
            FeatureSet::Dkt | FeatureSet::DktSp => Some(KtVariant::Dkt),
            FeatureSet::DktPlus | FeatureSet::DktPlusSp => Some(KtVariant::DktPlus),
        }
    }

    pub fn mode(self) -> FeatureMode {
        match self {
            FeatureSet::Sp => FeatureMode::Sp,
            FeatureSet::Dkt | FeatureSet::DktPlus => FeatureMode::Kt,
            FeatureSet::DktSp | FeatureSet::DktPlusSp => FeatureMode::KtSp,
        }
    }

    pub fn file_stem(self) -> &'static str {
        match self {
            FeatureSet::Sp => "sp",
            FeatureSet::Dkt => "dkt",
            FeatureSet::DktPlus => "dkt_plus",
            FeatureSet::DktSp => "dkt_sp",
            FeatureSet::DktPlusSp => "dkt_plus_sp",
        }
    }
}

impl fmt::Display for FeatureSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureSet::Sp => "SP",
            FeatureSet::Dkt => "DKT",
            FeatureSet::DktPlus => "DKT+",
            FeatureSet::DktSp => "DKT&SP",
            FeatureSet::DktPlusSp => "DKT+&SP",
        })
    }
}

/// Predictor training and evaluation settings. The grid lists are crossed
/// per family in the order GBDT trees × depth × min leaf, LR C × penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub families: Vec<Family>,
    /// Re-tune inside every outer fold to report an unbiased test score.
    pub nested_cv: bool,
    pub rfe: bool,
    /// Subset sizes for elimination; capped sizes from
    /// [`crate::eval::default_sizes`] when absent.
    pub rfe_sizes: Option<Vec<usize>>,
    pub rfe_families: Vec<Family>,
    pub rfe_features: Vec<FeatureSet>,
    pub gbdt_trees: Vec<usize>,
    pub gbdt_depth: Vec<usize>,
    pub gbdt_min_leaf: Vec<usize>,
    pub gbdt_learning_rate: f64,
    pub lda_solvers: Vec<LdaSolver>,
    pub lr_c: Vec<f64>,
    pub lr_penalties: Vec<Penalty>,
    pub svm_c: Vec<f64>,
    /// RBF width; `1 / (d · var(X))` when absent.
    pub svm_gamma: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        const C: [f64; 6] = [0.001, 0.01, 0.1, 1.0, 10.0, 100.0];
        Self {
            folds: 5,
            families: Family::ALL.to_vec(),
            nested_cv: false,
            rfe: false,
            rfe_sizes: None,
            rfe_families: vec![Family::Lr, Family::Lda, Family::Gbdt],
            rfe_features: vec![FeatureSet::DktPlusSp],
            gbdt_trees: vec![10, 25, 50, 120, 300],
            gbdt_depth: vec![2, 3, 5, 8],
            gbdt_min_leaf: vec![1, 2, 5, 10],
            gbdt_learning_rate: 0.1,
            lda_solvers: vec![LdaSolver::Svd, LdaSolver::Lsqr, LdaSolver::Eigen],
            lr_c: C.to_vec(),
            lr_penalties: vec![Penalty::L1, Penalty::L2],
            svm_c: C.to_vec(),
            svm_gamma: None,
        }
    }
}

impl EvalConfig {
    pub fn grid(&self, family: Family) -> Vec<ClassifierSpec> {
        match family {
            Family::Gbdt => {
                let mut grid = Vec::new();
                for &n_trees in &self.gbdt_trees {
                    for &max_depth in &self.gbdt_depth {
                        for &min_samples_leaf in &self.gbdt_min_leaf {
                            grid.push(ClassifierSpec::Gbdt(GbdtParams {
                                n_trees,
                                max_depth,
                                min_samples_leaf,
                                learning_rate: self.gbdt_learning_rate,
                            }));
                        }
                    }
                }
                grid
            }
            Family::Lda => self
                .lda_solvers
                .iter()
                .map(|&solver| ClassifierSpec::Lda { solver })
                .collect(),
            Family::Lr => self
                .lr_c
                .iter()
                .flat_map(|&c| {
                    self.lr_penalties
                        .iter()
                        .map(move |&penalty| ClassifierSpec::Lr { c, penalty })
                })
                .collect(),
            Family::Svm => self
                .svm_c
                .iter()
                .map(|&c| ClassifierSpec::Svm {
                    c,
                    gamma: self.svm_gamma,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.folds < 2 {
            return Err(Error::Config("eval.folds must be at least 2".into()));
        }
        if self.families.is_empty() {
            return Err(Error::Config("eval.families is empty".into()));
        }
        for &family in &self.families {
            let grid = self.grid(family);
            if grid.is_empty() {
                return Err(Error::Config(format!("the {family} grid is empty")));
            }
            for spec in &grid {
                spec.validate()?;
            }
        }
        if let Some(sizes) = &self.rfe_sizes {
            if sizes.is_empty() || sizes.contains(&0) {
                return Err(Error::Config("eval.rfe_sizes must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Everything one pipeline run depends on.
///
/// Read from a TOML file of `key = value` lines; nested settings use dotted
/// keys such as `kt.hidden = 32` or `eval.lr_c = [0.1, 1.0]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds cohort generation, network initialization and fold assignment.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Interaction log; the generated cohort's when absent.
    pub clickstream: Option<PathBuf>,
    /// Student profiles with labels; the generated cohort's when absent.
    pub profiles: Option<PathBuf>,
    pub features: Vec<FeatureSet>,
    pub cohort: CohortConfig,
    pub kt: TrainConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: None,
            out_dir: PathBuf::from("out"),
            clickstream: None,
            profiles: None,
            features: FeatureSet::ALL.to_vec(),
            cohort: CohortConfig::default(),
            kt: TrainConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a seed is required (config `seed` or --seed)".into()))
    }

    /// The cohort settings with the run seed applied.
    pub fn cohort_config(&self) -> Result<CohortConfig> {
        Ok(CohortConfig {
            seed: self.seed()?,
            ..self.cohort.clone()
        })
    }

    /// Training settings for `variant` with the run seed applied.
    pub fn kt_config(&self, variant: KtVariant) -> Result<TrainConfig> {
        let mut config = variant.train_config(&self.kt);
        config.seed = self.seed()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.seed()?;
        self.kt.validate()?;
        self.eval.validate()?;
        if self.features.is_empty() {
            return Err(Error::Config("`features` is empty".into()));
        }
        for (name, path) in [("clickstream", &self.clickstream), ("profiles", &self.profiles)] {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(Error::Config(format!("{name} file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form, ignoring the output directory so
    /// that relocated runs compare equal.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::default_grid;

    #[test]
    fn default_grids_match_the_harness() {
        let eval = EvalConfig::default();
        for family in Family::ALL {
            assert_eq!(eval.grid(family), default_grid(family));
        }
    }

    #[test]
    fn dotted_keys_reach_nested_settings() {
        let c = RunConfig::parse(
            "seed = 3\nfeatures = [\"SP\", \"DKT+&SP\"]\nkt.hidden = 16\neval.lr_c = [1.0]\ncohort.n_students = 50\n",
        )
        .unwrap();
        assert_eq!(c.seed, Some(3));
        assert_eq!(c.features, vec![FeatureSet::Sp, FeatureSet::DktPlusSp]);
        assert_eq!(c.kt.hidden, 16);
        assert_eq!(c.eval.grid(Family::Lr).len(), 2);
        assert_eq!(c.cohort.n_students, 50);
        assert_eq!(c.kt_config(KtVariant::Dkt).unwrap().lambda_w2, 0.0);
        assert_eq!(c.kt_config(KtVariant::DktPlus).unwrap().lambda_w2, 3.0);
    }

    #[test]
    fn unknown_keys_and_missing_seed_are_rejected() {
        assert!(RunConfig::parse("sed = 1").is_err());
        assert!(RunConfig::parse("kt.hiden = 1").is_err());
        assert!(matches!(RunConfig::default().validate(), Err(Error::Config(_))));
    }

    #[test]
    fn round_trips_through_toml() {
        let c = RunConfig {
            seed: Some(7),
            ..RunConfig::default()
        };
        let back = RunConfig::parse(&c.to_toml().unwrap()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn hash_ignores_the_output_directory_only() {
        let a = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        let moved = RunConfig {
            out_dir: "elsewhere".into(),
            ..a.clone()
        };
        let reseeded = RunConfig {
            seed: Some(2),
            ..a.clone()
        };
        assert_eq!(a.hash(), moved.hash());
        assert_ne!(a.hash(), reseeded.hash());
    }
}
