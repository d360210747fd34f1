//! Bagged regression trees.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, stream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means ⌈p/3⌉.
    pub mtry: Option<usize>,
    pub seed: u64,
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_trees: 200, max_depth: 6, min_leaf: 5, mtry: None, seed: 0, bootstrap: true }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(f64),
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    fn predict_row(&self, x: &DMatrix<f64>, i: usize) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => {
                    at = if x[(i, feature)] <= threshold { left } else { right };
                }
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    pub trees: Vec<Tree>,
    pub params: ForestParams,
}

impl Forest {
    pub fn predict(&self, x: &DMatrix<f64>) -> Vec<f64> {
        let k = self.trees.len() as f64;
        (0..x.nrows())
            .map(|i| self.trees.iter().map(|t| t.predict_row(x, i)).sum::<f64>() / k)
            .collect()
    }
}

struct Builder<'a> {
    x: &'a DMatrix<f64>,
    y: &'a [f64],
    max_depth: usize,
    min_leaf: usize,
    mtry: usize,
    nodes: Vec<Node>,
}

impl Builder<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        idx.iter().map(|&i| self.y[i]).sum::<f64>() / idx.len() as f64
    }

    /// Best variance-reduction split over `features`; ties keep the lowest
    /// feature index, then the lowest threshold.
    fn best_split(&self, idx: &[usize], features: &[usize]) -> Option<(usize, f64)> {
        let n = idx.len();
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / n as f64;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut order = idx.to_vec();
        for &f in features {
            order.sort_by(|&a, &b| self.x[(a, f)].total_cmp(&self.x[(b, f)]));
            let mut left_sum = 0.0;
            for k in 0..n - 1 {
                left_sum += self.y[order[k]];
                let nl = k + 1;
                let nr = n - nl;
                let xv = self.x[(order[k], f)];
                let xn = self.x[(order[k + 1], f)];
                if xv == xn || nl < self.min_leaf || nr < self.min_leaf {
                    continue;
                }
                let right_sum = total - left_sum;
                let gain = left_sum * left_sum / nl as f64 + right_sum * right_sum / nr as f64 - base;
                if gain > 1e-12 * base.abs().max(1e-300) && best.is_none_or(|(_, _, g)| gain > g) {
                    best = Some((f, 0.5 * (xv + xn), gain));
                }
            }
        }
        best.map(|(f, t, _)| (f, t))
    }

    fn grow<R: Rng>(&mut self, idx: Vec<usize>, depth: usize, rng: &mut R) -> usize {
        let slot = self.nodes.len();
        self.nodes.push(Node::Leaf(self.leaf_value(&idx)));
        if depth >= self.max_depth || idx.len() < 2 * self.min_leaf {
            return slot;
        }
        let p = self.x.ncols();
        let mut features: Vec<usize> = (0..p).collect();
        if self.mtry < p {
            features.shuffle(rng);
            features.truncate(self.mtry);
            features.sort_unstable();
        }
        if let Some((feature, threshold)) = self.best_split(&idx, &features) {
            let (l, r): (Vec<usize>, Vec<usize>) =
                idx.iter().partition(|&&i| self.x[(i, feature)] <= threshold);
            let left = self.grow(l, depth + 1, rng);
            let right = self.grow(r, depth + 1, rng);
            self.nodes[slot] = Node::Split { feature, threshold, left, right };
        }
        slot
    }
}

/// Fits `n_trees` regression trees, each on a bootstrap resample (when
/// enabled) with a stream keyed by `(seed, tree index)`.
pub fn fit_forest(design: &DMatrix<f64>, y: &[f64], params: &ForestParams) -> Result<Forest> {
    let (n, p) = design.shape();
    if params.n_trees == 0 {
        return Err(Error::Invalid("n_trees must be at least 1".into()));
    }
    if params.min_leaf == 0 {
        return Err(Error::Invalid("min_leaf must be at least 1".into()));
    }
    if n != y.len() || n == 0 {
        return Err(Error::Invalid(format!("design has {n} rows but y has {}", y.len())));
    }
    let mtry = params.mtry.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1));
    let trees = (0..params.n_trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream(derive_seed(params.seed, t as u64), 0);
            let idx: Vec<usize> = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut b = Builder {
                x: design,
                y,
                max_depth: params.max_depth,
                min_leaf: params.min_leaf,
                mtry,
                nodes: Vec::new(),
            };
            b.grow(idx, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(Forest { trees, params: params.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::design;

    #[test]
    fn depth_zero_predicts_mean() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let y = [1.0, 5.0, 2.0, 4.0];
        let params = ForestParams { n_trees: 1, max_depth: 0, bootstrap: false, ..Default::default() };
        let f = fit_forest(&design(&[&x], 4, false), &y, &params).unwrap();
        assert!(f.predict(&design(&[&[9.0, -1.0]], 2, false)).iter().all(|&v| v == 3.0));
    }

    #[test]
    fn step_function_fits_exactly() {
        // One feature; y jumps from 0 to 1 between x=4 and x=5. The only
        // zero-error split is at 4.5.
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|&v| if v > 4.0 { 1.0 } else { 0.0 }).collect();
        let xm = design(&[&x], 10, false);
        let params = ForestParams { n_trees: 1, max_depth: 1, min_leaf: 1, bootstrap: false, ..Default::default() };
        let f = fit_forest(&xm, &y, &params).unwrap();
        assert_eq!(f.predict(&xm), y);
        assert_eq!(f.trees[0].nodes[0], Node::Split { feature: 0, threshold: 4.5, left: 1, right: 2 });
    }

    #[test]
    fn deterministic_given_seed() {
        let x: Vec<f64> = (0..50).map(|i| ((i * 37) % 50) as f64).collect();
        let z: Vec<f64> = (0..50).map(|i| ((i * 11) % 7) as f64).collect();
        let y: Vec<f64> = x.iter().zip(&z).map(|(a, b)| a.sin() + b).collect();
        let xm = design(&[&x, &z], 50, false);
        let params = ForestParams { n_trees: 20, seed: 3, ..Default::default() };
        let a = fit_forest(&xm, &y, &params).unwrap().predict(&xm);
        let b = fit_forest(&xm, &y, &params).unwrap().predict(&xm);
        assert_eq!(a, b);
        let other = ForestParams { seed: 4, ..params };
        assert_ne!(a, fit_forest(&xm, &y, &other).unwrap().predict(&xm));
    }

    #[test]
    fn validates_params() {
        let xm = design(&[&[1.0, 2.0]], 2, false);
        assert!(fit_forest(&xm, &[1.0, 2.0], &ForestParams { n_trees: 0, ..Default::default() }).is_err());
        assert!(fit_forest(&xm, &[1.0, 2.0], &ForestParams { min_leaf: 0, ..Default::default() }).is_err());
    }
}
