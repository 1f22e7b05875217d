//! Group comparisons between STEM and non-STEM students: two-sample t-tests
//! with effect sizes, per-skill t-scores of knowledge states, 1-D
//! discriminant projections with class histograms, and normalized learning
//! gain.

pub mod stats;

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::classify::lda::{Lda, LdaSolver};
use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::state::KnowledgeStateSequence;

pub use stats::{ln_gamma, regularized_beta, t_cdf, t_quantile, t_two_sided_p, t_upper_tail};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variance {
    /// Student's test with a pooled variance estimate.
    Pooled,
    /// Welch's test with Satterthwaite degrees of freedom.
    Welch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTestResult {
    /// Statistic for `mean_a − mean_b`.
    pub t_score: f64,
    pub df: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// `(mean_a − mean_b) / pooled std`.
    pub cohens_d: f64,
    pub mean_a: f64,
    pub std_a: f64,
    pub n_a: usize,
    pub mean_b: f64,
    pub std_b: f64,
    pub n_b: usize,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Pooled-variance two-sample t-test of `a` against `b`.
///
/// ```
/// use kt_career::analysis::t_test;
///
/// let r = t_test(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0]).unwrap();
/// assert!((r.t_score + 3.674234614174767).abs() < 1e-12);
/// assert_eq!(r.df, 4.0);
/// assert_eq!(r.cohens_d, -3.0);
/// ```
pub fn t_test(a: &[f64], b: &[f64]) -> Result<TTestResult> {
    t_test_with(a, b, Variance::Pooled)
}

pub fn t_test_with(a: &[f64], b: &[f64], variance: Variance) -> Result<TTestResult> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Range(format!(
            "t-test needs at least 2 samples per group, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Range("t-test samples must be finite".into()));
    }
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / (na + nb - 2.0);
    let diff = ma - mb;
    let (t, df) = match variance {
        Variance::Pooled => (diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt(), na + nb - 2.0),
        Variance::Welch => {
            let (sa, sb) = (va / na, vb / nb);
            let df = (sa + sb).powi(2) / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
            (diff / (sa + sb).sqrt(), df)
        }
    };
    let (t, df, d) = if pooled == 0.0 {
        if diff != 0.0 {
            return Err(Error::DegenerateVariance);
        }
        (0.0, na + nb - 2.0, 0.0)
    } else {
        (t, df, diff / pooled.sqrt())
    };
    Ok(TTestResult {
        t_score: t,
        df,
        p_value: t_two_sided_p(t, df),
        cohens_d: d,
        mean_a: ma,
        std_a: va.sqrt(),
        n_a: a.len(),
        mean_b: mb,
        std_b: vb.sqrt(),
        n_b: b.len(),
    })
}

/// Upper-tail test of `H1: μ_a > μ_b`, reported in both variance forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OneTailedTest {
    pub pooled: TTestResult,
    pub p_value: f64,
    pub welch: TTestResult,
    pub welch_p_value: f64,
}

pub fn one_tailed_mean_test(a: &[f64], b: &[f64]) -> Result<OneTailedTest> {
    let pooled = t_test_with(a, b, Variance::Pooled)?;
    let welch = t_test_with(a, b, Variance::Welch)?;
    Ok(OneTailedTest {
        p_value: t_upper_tail(pooled.t_score, pooled.df),
        welch_p_value: t_upper_tail(welch.t_score, welch.df),
        pooled,
        welch,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkillTTest {
    pub skill: usize,
    /// `None` when both groups are constant with different values.
    pub test: Option<TTestResult>,
}

/// One t-test per skill column, computed as (non-STEM − STEM): a negative
/// score means the STEM group's mean knowledge is higher.
pub fn skill_ttest_map(stem: &Matrix, non_stem: &Matrix) -> Result<Vec<SkillTTest>> {
    if stem.cols() != non_stem.cols() {
        return Err(Error::Shape(format!(
            "{} skills for STEM, {} for non-STEM",
            stem.cols(),
            non_stem.cols()
        )));
    }
    (0..stem.cols())
        .map(|j| match t_test(&non_stem.column(j), &stem.column(j)) {
            Ok(t) => Ok(SkillTTest {
                skill: j,
                test: Some(t),
            }),
            Err(Error::DegenerateVariance) => Ok(SkillTTest {
                skill: j,
                test: None,
            }),
            Err(e) => Err(e),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection {
    pub values: Vec<f64>,
    /// Fisher direction `S⁻¹(μ₁ − μ₀)`.
    pub direction: Vec<f64>,
    /// Set when a ridge was added to a near-singular pooled covariance.
    pub regularized: bool,
}

/// Projects every row onto the Fisher discriminant direction.
pub fn lda_project_1d(x: &Matrix, y: &[bool]) -> Result<Projection> {
    if x.rows() != y.len() {
        return Err(Error::Shape(format!("{} rows but {} labels", x.rows(), y.len())));
    }
    let pos = y.iter().filter(|&&t| t).count();
    if pos == 0 || pos == y.len() {
        return Err(Error::DegenerateLabels("projection needs both classes".into()));
    }
    if !x.is_finite() {
        return Err(Error::Range("projection features must be finite".into()));
    }
    let lda = Lda::fit(x, y, LdaSolver::Eigen)?;
    Ok(Projection {
        values: x.iter_rows().map(|r| dot(&lda.coef, r)).collect(),
        direction: lda.coef,
        regularized: lda.regularized,
    })
}

pub const HISTOGRAM_BINS: usize = 30;

/// Equal-width bins over the pooled range, counted per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub edges: Vec<f64>,
    pub positive: Vec<usize>,
    pub negative: Vec<usize>,
}

impl ClassHistogram {
    pub fn new(values: &[f64], labels: &[bool], bins: usize) -> Result<Self> {
        if values.is_empty() || values.len() != labels.len() || bins == 0 {
            return Err(Error::Shape("histogram needs matching, non-empty inputs".into()));
        }
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let (lo, hi) = if hi > lo { (lo, hi) } else { (lo - 0.5, hi + 0.5) };
        let width = (hi - lo) / bins as f64;
        let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
        let mut positive = vec![0; bins];
        let mut negative = vec![0; bins];
        for (&v, &t) in values.iter().zip(labels) {
            let b = (((v - lo) / width) as usize).min(bins - 1);
            if t {
                positive[b] += 1;
            } else {
                negative[b] += 1;
            }
        }
        Ok(Self {
            edges,
            positive,
            negative,
        })
    }

    /// `Σ min(p₊(b), p₋(b))` over bins of the per-class relative frequencies.
    pub fn overlap_coefficient(&self) -> f64 {
        let np = self.positive.iter().sum::<usize>() as f64;
        let nn = self.negative.iter().sum::<usize>() as f64;
        if np == 0.0 || nn == 0.0 {
            return 0.0;
        }
        self.positive
            .iter()
            .zip(&self.negative)
            .map(|(&p, &n)| (p as f64 / np).min(n as f64 / nn))
            .sum()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["bin_start", "bin_end", "stem_count", "non_stem_count"])?;
        for b in 0..self.positive.len() {
            w.write_record([
                self.edges[b].to_string(),
                self.edges[b + 1].to_string(),
                self.positive[b].to_string(),
                self.negative[b].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub const NLG_WINDOW: usize = 10;

/// `(post − pre) / (1 − pre)`.
pub fn normalized_gain(pre: f64, post: f64) -> Result<f64> {
    if pre >= 1.0 {
        return Err(Error::UndefinedNlg);
    }
    Ok((post - pre) / (1.0 - pre))
}

/// Normalized learning gain of one trajectory. The score of a step is its
/// mean knowledge over skills; pre and post average the first and last
/// `window` steps, which overlap when the sequence is shorter than
/// `2 · window`.
pub fn nlg(states: &KnowledgeStateSequence, window: usize) -> Result<f64> {
    let t = states.n_steps();
    if t < 2 || window == 0 {
        return Err(Error::Range(format!(
            "learning gain needs at least 2 steps and a positive window, got {t} and {window}"
        )));
    }
    let scores = states.step_means();
    let w = window.min(t);
    let avg = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
    normalized_gain(avg(&scores[..w]), avg(&scores[t - w..]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NlgResult {
    pub stem: Vec<f64>,
    pub non_stem: Vec<f64>,
    /// One-tailed test of STEM mean gain above non-STEM mean gain.
    pub test: OneTailedTest,
}

pub fn nlg_comparison(stem: &[f64], non_stem: &[f64]) -> Result<NlgResult> {
    Ok(NlgResult {
        stem: stem.to_vec(),
        non_stem: non_stem.to_vec(),
        test: one_tailed_mean_test(stem, non_stem)?,
    })
}

/// Attribute table: name, t, p, d and group summaries (STEM first).
/// Each test must have been computed as (non-STEM, STEM).
pub fn write_ttest_table<W: Write>(rows: &[(String, Option<TTestResult>)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "attribute",
        "t_score",
        "p_value",
        "cohens_d",
        "stem_mean",
        "stem_std",
        "non_stem_mean",
        "non_stem_std",
    ])?;
    for (name, test) in rows {
        match test {
            Some(t) => w.write_record([
                name.clone(),
                t.t_score.to_string(),
                t.p_value.to_string(),
                t.cohens_d.to_string(),
                t.mean_b.to_string(),
                t.std_b.to_string(),
                t.mean_a.to_string(),
                t.std_a.to_string(),
            ])?,
            None => w.write_record([name.as_str(), "", "", "", "", "", "", ""])?,
        }
    }
    w.flush()?;
    Ok(())
}
