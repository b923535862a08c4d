use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_trees: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(k))`.
    pub mtry: Option<usize>,
    /// `None` grows until `min_leaf` stops splitting.
    pub max_depth: Option<usize>,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, min_leaf: 5, mtry: None, max_depth: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    Leaf { value: f64, count: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf { value, .. } => return value,
                Node::Split { feature, threshold, left, right } => {
                    at = if row[feature] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
    pub mtry: usize,
    pub seed: u64,
    pub n_features: usize,
    /// Training target had zero variance; every tree is a single leaf.
    pub degenerate: bool,
}

/// Bagged variance-reduction regression trees. Tree `t` draws from the
/// ChaCha stream `t` of `seed`, so the fit does not depend on thread count.
pub fn forest_fit(x: &DMatrix<f64>, y: &[f64], params: ForestParams, seed: u64) -> Result<ForestModel, StatsError> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(StatsError::DimensionMismatch { expected: n, got: y.len() });
    }
    if params.min_leaf == 0 || params.n_trees == 0 {
        return Err(StatsError::InvalidArgument { name: "forest", reason: "n_trees and min_leaf must be >= 1".into() });
    }
    if n < 2 * params.min_leaf {
        return Err(StatsError::TooFewObservations { n, needed: 2 * params.min_leaf });
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite { what: "forest input" });
    }
    let mtry = params.mtry.unwrap_or(((k as f64).sqrt().ceil()) as usize).clamp(1, k.max(1));
    let first = y[0];
    let degenerate = y.iter().all(|v| *v == first);
    let trees = if degenerate {
        vec![Tree { nodes: vec![Node::Leaf { value: first, count: n }] }; params.n_trees]
    } else {
        let columns: Vec<Vec<f64>> = (0..k).map(|j| x.column(j).iter().copied().collect()).collect();
        let builder =
            TreeBuilder { columns: &columns, y, min_leaf: params.min_leaf, max_depth: params.max_depth, mtry };
        (0..params.n_trees)
            .into_par_iter()
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(t as u64);
                builder.build(&mut rng)
            })
            .collect()
    };
    Ok(ForestModel { trees, params, mtry, seed, n_features: k, degenerate })
}

/// Mean prediction over trees, summed in tree order.
pub fn forest_predict(model: &ForestModel, x: &DMatrix<f64>) -> Result<Vec<f64>, StatsError> {
    if x.ncols() != model.n_features {
        return Err(StatsError::DimensionMismatch { expected: model.n_features, got: x.ncols() });
    }
    let m = model.trees.len() as f64;
    Ok((0..x.nrows())
        .into_par_iter()
        .map(|i| {
            let row: Vec<f64> = x.row(i).iter().copied().collect();
            model.trees.iter().map(|t| t.predict(&row)).sum::<f64>() / m
        })
        .collect())
}

struct TreeBuilder<'a> {
    columns: &'a [Vec<f64>],
    y: &'a [f64],
    min_leaf: usize,
    max_depth: Option<usize>,
    mtry: usize,
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
}

impl TreeBuilder<'_> {
    fn build(&self, rng: &mut ChaCha8Rng) -> Tree {
        let n = self.y.len();
        let rows: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
        let mut nodes = vec![Node::Leaf { value: 0.0, count: 0 }];
        let mut stack = vec![Pending { node: 0, rows, depth: 0 }];
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        while let Some(Pending { node, rows, depth }) = stack.pop() {
            let sum: f64 = rows.iter().map(|&r| self.y[r]).sum();
            let count = rows.len();
            let can_split = count >= 2 * self.min_leaf && self.max_depth.is_none_or(|d| depth < d);
            let split = if can_split { self.best_split(&rows, sum, rng, &mut pairs) } else { None };
            match split {
                Some((feature, threshold)) => {
                    let (l, r): (Vec<usize>, Vec<usize>) =
                        rows.into_iter().partition(|&i| self.columns[feature][i] <= threshold);
                    let left = nodes.len();
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    nodes.push(Node::Leaf { value: 0.0, count: 0 });
                    nodes[node] = Node::Split { feature, threshold, left, right: left + 1 };
                    stack.push(Pending { node: left + 1, rows: r, depth: depth + 1 });
                    stack.push(Pending { node: left, rows: l, depth: depth + 1 });
                }
                None => nodes[node] = Node::Leaf { value: sum / count as f64, count },
            }
        }
        Tree { nodes }
    }

    /// Best SSE-reducing split over `mtry` sampled features.
    fn best_split(
        &self,
        rows: &[usize],
        total: f64,
        rng: &mut ChaCha8Rng,
        pairs: &mut Vec<(f64, f64)>,
    ) -> Option<(usize, f64)> {
        let n = rows.len();
        let parent = total * total / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        for feature in sample(rng, self.columns.len(), self.mtry).into_iter() {
            let col = &self.columns[feature];
            pairs.clear();
            pairs.extend(rows.iter().map(|&r| (col[r], self.y[r])));
            pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
            if pairs[0].0 == pairs[n - 1].0 {
                continue;
            }
            let mut left = 0.0;
            for i in 0..n - self.min_leaf {
                left += pairs[i].1;
                let n_left = i + 1;
                if n_left < self.min_leaf || pairs[i].0 == pairs[i + 1].0 {
                    continue;
                }
                let right = total - left;
                let score = left * left / n_left as f64 + right * right / (n - n_left) as f64;
                if score > parent * (1.0 + 1e-12) + 1e-12 && best.is_none_or(|b| score > b.2) {
                    // The midpoint of adjacent floats can round up to the
                    // upper value, which would empty the right child.
                    let mid = 0.5 * (pairs[i].0 + pairs[i + 1].0);
                    let threshold = if mid < pairs[i + 1].0 { mid } else { pairs[i].0 };
                    best = Some((feature, threshold, score));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_design(n: usize, k: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(n, k, |_, _| rng.random::<f64>())
    }

    #[test]
    fn adjacent_float_split_keeps_both_children() {
        let lo = 1.0f64;
        let hi = f64::from_bits(lo.to_bits() + 1);
        let xs: Vec<f64> = (0..20).map(|i| if i < 10 { lo } else { hi }).collect();
        let y: Vec<f64> = (0..20).map(|i| f64::from(i >= 10)).collect();
        let x = DMatrix::from_column_slice(20, 1, &xs);
        let m = forest_fit(&x, &y, ForestParams { n_trees: 10, ..Default::default() }, 1).unwrap();
        assert!(forest_predict(&m, &x).unwrap().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn constant_target_predicts_constant() {
        let x = uniform_design(50, 2, 1);
        let m = forest_fit(&x, &[3.5; 50], ForestParams::default(), 7).unwrap();
        assert!(m.degenerate);
        assert!(forest_predict(&m, &x).unwrap().iter().all(|p| *p == 3.5));
    }

    #[test]
    fn beats_mean_predictor() {
        let x = uniform_design(2000, 1, 2);
        let y: Vec<f64> = x.column(0).iter().copied().collect();
        let m = forest_fit(&x, &y, ForestParams::default(), 3).unwrap();
        let xt = uniform_design(500, 1, 4);
        let pred = forest_predict(&m, &xt).unwrap();
        let mse: f64 = pred.iter().zip(xt.column(0).iter()).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / 500.0;
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let base: f64 = xt.column(0).iter().map(|t| (mean - t).powi(2)).sum::<f64>() / 500.0;
        assert!(mse < 0.25 * base, "{mse} vs {base}");
    }

    #[test]
    fn leaves_respect_min_leaf_and_seed() {
        let x = uniform_design(300, 3, 5);
        let y: Vec<f64> = (0..300).map(|i| x[(i, 0)] + x[(i, 1)].powi(2)).collect();
        let p = ForestParams { n_trees: 20, ..Default::default() };
        let a = forest_fit(&x, &y, p, 11).unwrap();
        let b = forest_fit(&x, &y, p, 11).unwrap();
        assert_eq!(a, b);
        for t in &a.trees {
            for node in &t.nodes {
                if let Node::Leaf { count, .. } = node {
                    assert!(*count >= 5);
                }
            }
        }
        let pa = forest_predict(&a, &x).unwrap();
        let reversed = ForestModel { trees: a.trees.iter().rev().cloned().collect(), ..a.clone() };
        let pr = forest_predict(&reversed, &x).unwrap();
        assert!(pa.iter().zip(&pr).all(|(u, v)| (u - v).abs() < 1e-12));
    }

    #[test]
    fn too_few_rows() {
        let x = uniform_design(9, 1, 1);
        assert!(forest_fit(&x, &[0.0; 9], ForestParams::default(), 0).is_err());
    }
}
