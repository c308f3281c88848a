//! Cross-fitted orthogonal forest for one binary treatment with a single
//! scalar covariate.
//!
//! Nuisances are a ridge outcome regression and an L2 logistic propensity,
//! both fitted out-of-fold. The effect function is an honest random forest
//! on the residualised data whose leaves solve the local moment
//! `sum t~ (y~ - theta t~) = 0`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const PROPENSITY_CLIP: f64 = 0.01;
const MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestParams {
    pub n_estimators: usize,
    pub min_samples_leaf: usize,
    /// L2 penalty of both nuisance models.
    pub alpha: f64,
    /// Cross-fitting folds.
    pub cv: usize,
    /// Newton iterations for the propensity model.
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            n_estimators: 200,
            min_samples_leaf: 10,
            alpha: 1.0,
            cv: 3,
            max_iter: 500,
            seed: 0,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_estimators == 0 || self.min_samples_leaf == 0 || self.cv < 2 || self.max_iter == 0 {
            return Err(Error::Config(
                "forest needs n_estimators, min_samples_leaf, max_iter >= 1 and cv >= 2".into(),
            ));
        }
        if self.alpha.is_nan() || self.alpha < 0.0 {
            return Err(Error::Config("forest alpha must be >= 0".into()));
        }
        Ok(())
    }
}

/// Standardised design: returns (mean, scale) so that z = (x - mean) / scale.
fn standardise(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, if var > 0.0 { var.sqrt() } else { 1.0 })
}

/// Ridge fit of `y ~ b0 + b1 z` with the intercept unpenalised.
fn ridge(z: &[f64], y: &[f64], alpha: f64) -> (f64, f64) {
    let n = z.len() as f64;
    let mz = z.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let szz: f64 = z.iter().map(|v| (v - mz).powi(2)).sum();
    let szy: f64 = z.iter().zip(y).map(|(a, b)| (a - mz) * (b - my)).sum();
    let b1 = if szz + alpha > 0.0 { szy / (szz + alpha) } else { 0.0 };
    (my - b1 * mz, b1)
}

fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// L2-penalised logistic regression on `[1, z]` by Newton's method.
fn logistic(z: &[f64], t: &[f64], alpha: f64, max_iter: usize) -> (f64, f64) {
    let (mut b0, mut b1) = (0.0, 0.0);
    for _ in 0..max_iter {
        let (mut g0, mut g1, mut h00, mut h01, mut h11) = (0.0, -alpha * b1, 0.0, 0.0, alpha);
        for (&zi, &ti) in z.iter().zip(t) {
            let p = sigmoid(b0 + b1 * zi);
            let w = p * (1.0 - p);
            g0 += ti - p;
            g1 += (ti - p) * zi;
            h00 += w;
            h01 += w * zi;
            h11 += w * zi * zi;
        }
        // Small ridge on the intercept keeps the Hessian invertible when
        // every record is treated (or none is).
        h00 += 1e-6;
        let det = h00 * h11 - h01 * h01;
        if det.abs() < 1e-12 {
            break;
        }
        let d0 = (h11 * g0 - h01 * g1) / det;
        let d1 = (h00 * g1 - h01 * g0) / det;
        b0 += d0;
        b1 += d1;
        if d0.abs().max(d1.abs()) < 1e-10 {
            break;
        }
    }
    (b0, b1)
}

enum Node {
    Leaf(Vec<usize>),
    Split { threshold: f64, left: Box<Node>, right: Box<Node> },
}

impl Node {
    fn leaf_for(&self, x: f64) -> &[usize] {
        match self {
            Node::Leaf(ids) => ids,
            Node::Split { threshold, left, right } => {
                if x <= *threshold {
                    left.leaf_for(x)
                } else {
                    right.leaf_for(x)
                }
            }
        }
    }
}

struct Residuals<'a> {
    x: &'a [f64],
    y: Vec<f64>,
    t: Vec<f64>,
}

impl Residuals<'_> {
    fn theta(&self, ids: &[usize]) -> f64 {
        let num: f64 = ids.iter().map(|&i| self.t[i] * self.y[i]).sum();
        let den: f64 = ids.iter().map(|&i| self.t[i] * self.t[i]).sum();
        if den > 1e-12 {
            num / den
        } else {
            0.0
        }
    }
}

/// Grows one honest tree: `split` decides thresholds, `est` fills leaves.
fn grow(res: &Residuals<'_>, mut split: Vec<usize>, mut est: Vec<usize>, min_leaf: usize, depth: usize) -> Node {
    if depth >= MAX_DEPTH || split.len() < 2 * min_leaf || est.len() < 2 * min_leaf {
        return Node::Leaf(est);
    }
    split.sort_by(|&a, &b| res.x[a].total_cmp(&res.x[b]));
    est.sort_by(|&a, &b| res.x[a].total_cmp(&res.x[b]));
    let mut best: Option<(f64, f64)> = None;
    for k in min_leaf..=split.len() - min_leaf {
        let (lo, hi) = (res.x[split[k - 1]], res.x[split[k]]);
        if lo == hi {
            continue;
        }
        let threshold = 0.5 * (lo + hi);
        let est_left = est.partition_point(|&i| res.x[i] <= threshold);
        if est_left < min_leaf || est.len() - est_left < min_leaf {
            continue;
        }
        let (l, r) = split.split_at(k);
        let gain = (l.len() * r.len()) as f64 * (res.theta(l) - res.theta(r)).powi(2);
        if best.is_none_or(|(g, _)| gain > g) {
            best = Some((gain, threshold));
        }
    }
    let Some((_, threshold)) = best else {
        return Node::Leaf(est);
    };
    let (sl, sr): (Vec<usize>, Vec<usize>) = split.iter().partition(|&&i| res.x[i] <= threshold);
    let (el, er): (Vec<usize>, Vec<usize>) = est.iter().partition(|&&i| res.x[i] <= threshold);
    Node::Split {
        threshold,
        left: Box::new(grow(res, sl, el, min_leaf, depth + 1)),
        right: Box::new(grow(res, sr, er, min_leaf, depth + 1)),
    }
}

/// Expected outcome under treatment, averaged over the sample:
/// `mean_i [ m(x_i) + (1 - e(x_i)) * theta(x_i) ]`.
pub fn treated_outcome(x: &[f64], y: &[f64], t: &[f64], params: &ForestParams, seed: u64) -> f64 {
    let n = x.len();
    assert!(n > 0 && y.len() == n && t.len() == n);
    let (mx, sx) = standardise(x);
    let z: Vec<f64> = x.iter().map(|v| (v - mx) / sx).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let folds = params.cv.min(n);

    let mut m_hat = vec![0.0; n];
    let mut e_hat = vec![0.0; n];
    for fold in 0..folds {
        let (held, train): (Vec<usize>, Vec<usize>) = (0..n).partition(|&k| k % folds == fold);
        let held: Vec<usize> = held.into_iter().map(|k| order[k]).collect();
        let mut train: Vec<usize> = train.into_iter().map(|k| order[k]).collect();
        if train.is_empty() {
            train = held.clone();
        }
        let zt: Vec<f64> = train.iter().map(|&i| z[i]).collect();
        let yt: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let tt: Vec<f64> = train.iter().map(|&i| t[i]).collect();
        let (a0, a1) = ridge(&zt, &yt, params.alpha);
        let (b0, b1) = logistic(&zt, &tt, params.alpha, params.max_iter);
        for i in held {
            m_hat[i] = a0 + a1 * z[i];
            e_hat[i] = sigmoid(b0 + b1 * z[i]).clamp(PROPENSITY_CLIP, 1.0 - PROPENSITY_CLIP);
        }
    }

    let res = Residuals {
        x,
        y: (0..n).map(|i| y[i] - m_hat[i]).collect(),
        t: (0..n).map(|i| t[i] - e_hat[i]).collect(),
    };

    let trees: Vec<Node> = (0..params.n_estimators)
        .map(|_| {
            let mut ids: Vec<usize> = (0..n).collect();
            ids.shuffle(&mut rng);
            let sub = &ids[..n.div_ceil(2).max(1)];
            let half = sub.len() / 2;
            let (split, est) = sub.split_at(half);
            let est = if est.is_empty() { split } else { est };
            grow(&res, split.to_vec(), est.to_vec(), params.min_samples_leaf, 0)
        })
        .collect();

    let mut total = 0.0;
    for i in 0..n {
        let mut weights = vec![0.0; n];
        for tree in &trees {
            let leaf = tree.leaf_for(x[i]);
            let w = 1.0 / leaf.len() as f64;
            for &j in leaf {
                weights[j] += w;
            }
        }
        let num: f64 = (0..n).map(|j| weights[j] * res.t[j] * res.y[j]).sum();
        let den: f64 = (0..n).map(|j| weights[j] * res.t[j] * res.t[j]).sum();
        let theta = if den > 1e-12 { num / den } else { 0.0 };
        total += m_hat[i] + (1.0 - e_hat[i]) * theta;
    }
    total / n as f64
}
