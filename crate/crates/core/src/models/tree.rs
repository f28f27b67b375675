//! Variance-reduction regression trees plus the two ensembles built on them.
//!
//! Split search walks presorted index lists, so each level costs
//! `O(n * features)`. Ties between equally good splits go to the lowest
//! feature index, then the lowest threshold.

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::FitReport;

const LEAF: usize = usize::MAX;

#[derive(Debug, Clone, PartialEq)]
pub struct Node {
    /// `LEAF` for leaves.
    pub feature: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    pub nodes: Vec<Node>,
}

impl RegressionTree {
    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            if node.feature == LEAF {
                return node.value;
            }
            i = if row[node.feature] <= node.threshold { node.left } else { node.right };
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &RegressionTree, i: usize) -> usize {
            let n = &t.nodes[i];
            if n.feature == LEAF {
                0
            } else {
                1 + walk(t, n.left).max(walk(t, n.right))
            }
        }
        walk(self, 0)
    }

    pub(crate) fn is_leaf(node: &Node) -> bool {
        node.feature == LEAF
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means all.
    pub max_features: Option<usize>,
}

struct Grower<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    params: TreeParams,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
}

/// Fits one tree on the rows listed in `indices` (duplicates allowed, as
/// produced by bootstrap sampling).
pub fn grow_tree(x: &DMatrix<f64>, y: &[f64], indices: &[usize], params: TreeParams, seed: u64) -> RegressionTree {
    let p = x.ncols();
    let sorted: Vec<Vec<usize>> = (0..p)
        .map(|f| {
            let mut idx = indices.to_vec();
            let col = x.column(f);
            idx.sort_by(|&a, &b| col[a].total_cmp(&col[b]).then(a.cmp(&b)));
            idx
        })
        .collect();
    let mut g = Grower {
        x,
        y,
        params,
        rng: ChaCha8Rng::seed_from_u64(seed),
        nodes: Vec::new(),
    };
    if p == 0 {
        let mean = indices.iter().map(|&i| y[i]).sum::<f64>() / indices.len().max(1) as f64;
        g.nodes.push(leaf(mean));
    } else {
        g.build(sorted, 0);
    }
    RegressionTree { nodes: g.nodes }
}

fn leaf(value: f64) -> Node {
    Node {
        feature: LEAF,
        threshold: 0.0,
        left: 0,
        right: 0,
        value,
    }
}

struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn build(&mut self, sorted: Vec<Vec<usize>>, depth: usize) -> usize {
        let members = &sorted[0];
        let n = members.len();
        let sum: f64 = members.iter().map(|&i| self.y[i]).sum();
        let mean = sum / n as f64;
        let id = self.nodes.len();
        self.nodes.push(leaf(mean));

        let first = self.y[members[0]];
        let pure = members.iter().all(|&i| self.y[i] == first);
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_samples_leaf {
            return id;
        }
        let Some(split) = self.best_split(&sorted, sum) else {
            return id;
        };

        let col = self.x.column(split.feature);
        let (left, right): (Vec<Vec<usize>>, Vec<Vec<usize>>) = sorted
            .into_iter()
            .map(|list| list.into_iter().partition(|&i| col[i] <= split.threshold))
            .unzip();
        let l = self.build(left, depth + 1);
        let r = self.build(right, depth + 1);
        self.nodes[id] = Node {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
            value: mean,
        };
        id
    }

    fn best_split(&mut self, sorted: &[Vec<usize>], total: f64) -> Option<Split> {
        let p = sorted.len();
        let mut candidates: Vec<usize> = match self.params.max_features {
            Some(k) if k < p => sample(&mut self.rng, p, k).into_vec(),
            _ => (0..p).collect(),
        };
        candidates.sort_unstable();
        if let Some(s) = self.scan(sorted, &candidates, total) {
            return Some(s);
        }
        // no valid split among the sampled features: keep looking in the rest
        if candidates.len() < p {
            let rest: Vec<usize> = (0..p).filter(|f| candidates.binary_search(f).is_err()).collect();
            return self.scan(sorted, &rest, total);
        }
        None
    }

    fn scan(&self, sorted: &[Vec<usize>], features: &[usize], total: f64) -> Option<Split> {
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Split> = None;
        for &f in features {
            let list = &sorted[f];
            let n = list.len();
            let col = self.x.column(f);
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[list[k]];
                let nl = k + 1;
                let nr = n - nl;
                if nl < min_leaf || nr < min_leaf {
                    continue;
                }
                let (a, b) = (col[list[k]], col[list[k + 1]]);
                if a >= b {
                    continue;
                }
                let right_sum = total - left_sum;
                // n * (between-group variance); the parent term is constant per node
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64
                    - total * total / n as f64;
                if gain > 0.0 && best.as_ref().map_or(true, |s| gain > s.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(Split {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

/// SplitMix64 step, used to derive independent child seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    pub trees: Vec<RegressionTree>,
}

impl Forest {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.trees.iter().map(|t| t.predict(row)).sum::<f64>() / self.trees.len() as f64
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ForestParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub bootstrap: bool,
    /// Bootstrap sample size as a fraction of `n`.
    pub subsample: f64,
    pub seed: u64,
}

/// Bagged trees with `ceil(p / 3)` candidate features per split.
pub fn fit_forest(x: &DMatrix<f64>, y: &[f64], params: ForestParams) -> Forest {
    use rayon::prelude::*;
    let n = x.nrows();
    let mtry = x.ncols().div_ceil(3).max(1);
    let tree_params = TreeParams {
        max_features: Some(mtry),
        ..params.tree
    };
    let trees = (0..params.n_trees as u64)
        .into_par_iter()
        .map(|t| {
            let seed = derive_seed(params.seed, t);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let indices: Vec<usize> = if params.bootstrap {
                let m = ((n as f64 * params.subsample).round() as usize).max(1);
                (0..m).map(|_| rng.gen_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, &indices, tree_params, derive_seed(seed, 1))
        })
        .collect();
    Forest { trees }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Boosted {
    pub init: f64,
    pub learning_rate: f64,
    pub trees: Vec<RegressionTree>,
}

impl Boosted {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.init + self.learning_rate * self.trees.iter().map(|t| t.predict(row)).sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct BoostParams {
    pub n_trees: usize,
    pub tree: TreeParams,
    pub learning_rate: f64,
    /// Fraction of rows, drawn without replacement, per round.
    pub subsample: f64,
    pub seed: u64,
}

/// Stagewise least-squares boosting. The report's `loss_history` holds the
/// training mean squared error after each round.
pub fn fit_boosted(x: &DMatrix<f64>, y: &[f64], params: BoostParams) -> (Boosted, FitReport) {
    let n = x.nrows();
    let init = y.iter().sum::<f64>() / n as f64;
    let mut current = vec![init; n];
    let mut trees = Vec::with_capacity(params.n_trees);
    let mut report = FitReport {
        converged: true,
        ..FitReport::default()
    };
    let rows: Vec<Vec<f64>> = (0..n).map(|i| x.row(i).iter().copied().collect()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    for round in 0..params.n_trees {
        let residual: Vec<f64> = y.iter().zip(&current).map(|(t, c)| t - c).collect();
        let indices: Vec<usize> = if params.subsample < 1.0 {
            let m = ((n as f64 * params.subsample).round() as usize).clamp(1, n);
            let mut idx = sample(&mut rng, n, m).into_vec();
            idx.sort_unstable();
            idx
        } else {
            (0..n).collect()
        };
        let tree = grow_tree(x, &residual, &indices, params.tree, derive_seed(params.seed, round as u64));
        for (c, row) in current.iter_mut().zip(&rows) {
            *c += params.learning_rate * tree.predict(row);
        }
        trees.push(tree);
        let mse = y.iter().zip(&current).map(|(t, c)| (t - c) * (t - c)).sum::<f64>() / n as f64;
        report.loss_history.push(mse);
        report.iterations = round + 1;
    }
    (
        Boosted {
            init,
            learning_rate: params.learning_rate,
            trees,
        },
        report,
    )
}
