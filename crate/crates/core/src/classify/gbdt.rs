//! Gradient-boosted regression trees on the logistic loss.

use serde::{Deserialize, Serialize};

use super::{log_loss, sigmoid};
use crate::error::Result;
use crate::matrix::Matrix;

/// Hyperparameters for [`Gbdt::fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GbdtParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A regression tree stored as a flat node arena; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf(_))).count()
    }
}

/// One boosting stage: a tree and the step applied to its leaf values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub tree: Tree,
    pub step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gbdt {
    /// Log-odds of the training base rate.
    pub init: f64,
    pub stages: Vec<Stage>,
    /// Normalized total impurity decrease per feature.
    pub importances: Vec<f64>,
    /// Mean training log-loss after initialization and after each stage.
    pub train_loss: Vec<f64>,
}

struct Grower<'a> {
    x: &'a Matrix,
    residual: &'a [f64],
    hessian: &'a [f64],
    params: GbdtParams,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

struct BestSplit {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, members: &[usize]) -> f64 {
        let num: f64 = members.iter().map(|&i| self.residual[i]).sum();
        let den: f64 = members.iter().map(|&i| self.hessian[i]).sum();
        if den < 1e-150 {
            0.0
        } else {
            num / den
        }
    }

    /// `sorted[j]` lists the node's samples ordered by feature `j`.
    fn best_split(&self, sorted: &[Vec<usize>]) -> Option<BestSplit> {
        let n = sorted[0].len();
        let min_leaf = self.params.min_samples_leaf.max(1);
        if n < 2 * min_leaf {
            return None;
        }
        let total: f64 = sorted[0].iter().map(|&i| self.residual[i]).sum();
        let parent = total * total / n as f64;
        let mut best: Option<BestSplit> = None;
        for (feature, order) in sorted.iter().enumerate() {
            let mut left_sum = 0.0;
            for (left_n, pair) in (1..).zip(order.windows(2)) {
                left_sum += self.residual[pair[0]];
                let (a, b) = (self.x.get(pair[0], feature), self.x.get(pair[1], feature));
                let right_n = n - left_n;
                if a < b && left_n >= min_leaf && right_n >= min_leaf {
                    let right_sum = total - left_sum;
                    let gain = left_sum * left_sum / left_n as f64
                        + right_sum * right_sum / right_n as f64
                        - parent;
                    if gain > best.as_ref().map_or(1e-12, |s| s.gain) {
                        best = Some(BestSplit {
                            gain,
                            feature,
                            threshold: a + (b - a) / 2.0,
                        });
                    }
                }
            }
        }
        best
    }

    fn grow(&mut self, sorted: Vec<Vec<usize>>, depth: usize, goes_left: &mut [bool]) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(&sorted[0])));
        if depth >= self.params.max_depth {
            return id;
        }
        let Some(split) = self.best_split(&sorted) else {
            return id;
        };
        self.gains[split.feature] += split.gain;
        for &i in &sorted[0] {
            goes_left[i] = self.x.get(i, split.feature) <= split.threshold;
        }
        let (l, r): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|order| order.into_iter().partition(|&i| goes_left[i]))
            .unzip();
        let left = self.grow(l, depth + 1, goes_left);
        let right = self.grow(r, depth + 1, goes_left);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

fn mean_loss(margin: &[f64], y: &[bool]) -> f64 {
    margin
        .iter()
        .zip(y)
        .map(|(&f, &t)| log_loss(f, t))
        .sum::<f64>()
        / y.len() as f64
}

impl Gbdt {
    /// Fits stagewise trees to the negative logistic-loss gradient with
    /// Newton leaf values. A stage whose shrunken step would raise the
    /// training loss has its step halved until it does not.
    pub fn fit(x: &Matrix, y: &[bool], params: GbdtParams) -> Result<Self> {
        let n = x.rows();
        let pos = y.iter().filter(|&&t| t).count() as f64;
        let rate = pos / n as f64;
        let init = (rate / (1.0 - rate)).ln();
        let order: Vec<Vec<usize>> = (0..x.cols())
            .map(|j| {
                let mut idx: Vec<usize> = (0..n).collect();
                idx.sort_by(|&a, &b| x.get(a, j).total_cmp(&x.get(b, j)));
                idx
            })
            .collect();

        let mut margin = vec![init; n];
        let mut gains = vec![0.0; x.cols()];
        let mut stages = Vec::with_capacity(params.n_trees);
        let mut train_loss = vec![mean_loss(&margin, y)];
        let mut goes_left = vec![false; n];
        for _ in 0..params.n_trees {
            let p: Vec<f64> = margin.iter().map(|&f| sigmoid(f)).collect();
            let residual: Vec<f64> = p.iter().zip(y).map(|(&p, &t)| f64::from(t) - p).collect();
            let hessian: Vec<f64> = p.iter().map(|&p| p * (1.0 - p)).collect();
            let mut grower = Grower {
                x,
                residual: &residual,
                hessian: &hessian,
                params,
                nodes: Vec::new(),
                gains: vec![0.0; x.cols()],
            };
            grower.grow(order.clone(), 0, &mut goes_left);
            let tree = Tree {
                nodes: grower.nodes,
            };
            let update: Vec<f64> = (0..n).map(|i| tree.predict(x.row(i))).collect();

            let previous = *train_loss.last().expect("initial loss");
            let mut step = params.learning_rate;
            let mut candidate: Vec<f64>;
            let mut loss;
            let mut halvings = 0;
            loop {
                candidate = margin.iter().zip(&update).map(|(f, u)| f + step * u).collect();
                loss = mean_loss(&candidate, y);
                if loss <= previous || halvings == 40 {
                    break;
                }
                step /= 2.0;
                halvings += 1;
            }
            if loss > previous {
                step = 0.0;
                loss = previous;
                candidate = margin.clone();
            }
            gains.iter_mut().zip(&grower.gains).for_each(|(g, s)| *g += s);
            margin = candidate;
            train_loss.push(loss);
            stages.push(Stage { tree, step });
        }
        let total: f64 = gains.iter().sum();
        let importances = if total > 0.0 {
            gains.iter().map(|g| g / total).collect()
        } else {
            gains
        };
        Ok(Self {
            init,
            stages,
            importances,
            train_loss,
        })
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.init
            + self
                .stages
                .iter()
                .map(|s| s.step * s.tree.predict(x))
                .sum::<f64>()
    }

    /// The model truncated to its first `k` stages.
    pub fn truncated(&self, k: usize) -> Self {
        Self {
            init: self.init,
            stages: self.stages[..k.min(self.stages.len())].to_vec(),
            importances: self.importances.clone(),
            train_loss: self.train_loss[..=k.min(self.stages.len())].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n_trees: usize, max_depth: usize) -> GbdtParams {
        GbdtParams {
            n_trees,
            max_depth,
            min_samples_leaf: 1,
            learning_rate: 0.1,
        }
    }

    #[test]
    fn single_stump_splits_at_the_midpoint() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [false, false, true, true];
        let g = Gbdt::fit(&x, &y, params(1, 1)).unwrap();
        assert_eq!(g.init, 0.0);
        let tree = &g.stages[0].tree;
        assert_eq!(tree.n_leaves(), 2);
        assert!(matches!(tree.nodes[0], Node::Split { threshold, .. } if threshold == 1.5));
        // Residuals ±0.5, hessian 0.25: Newton leaf values are ±2.
        assert_eq!(tree.predict(&[0.0]), -2.0);
        assert_eq!(tree.predict(&[3.0]), 2.0);
    }

    #[test]
    fn min_leaf_blocks_small_children() {
        let x = Matrix::new(4, 1, vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let y = [true, false, false, false];
        let g = Gbdt::fit(
            &x,
            &y,
            GbdtParams {
                min_samples_leaf: 2,
                ..params(1, 3)
            },
        )
        .unwrap();
        assert_eq!(g.stages[0].tree.n_leaves(), 2);
    }

    #[test]
    fn zero_stage_truncation_predicts_the_base_rate() {
        let x = Matrix::new(5, 1, vec![0.0, 1.0, 2.0, 3.0, 4.0]).unwrap();
        let y = [true, false, false, true, false];
        let g = Gbdt::fit(&x, &y, params(5, 2)).unwrap().truncated(0);
        assert!((sigmoid(g.decision(&[1.0])) - 0.4).abs() < 1e-15);
    }
}
