//! Classical classifiers over feature vectors: multinomial logistic
//! regression, one-vs-rest linear SVM, a CART random forest and their
//! soft-voting ensemble.
//!
//! Models serialise to JSON via serde; floats round-trip exactly.

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::data::N_CLASSES;
use crate::error::{Error, Result};
use crate::rng::{self, rng_for};

const STD_FLOOR: f64 = 1e-8;

fn check_inputs(x: &[Vec<f64>], y: Option<&[usize]>, op: &str) -> Result<usize> {
    let d = x.first().map(Vec::len).ok_or_else(|| {
        Error::InvalidArgument(format!("{op}: no training rows"))
    })?;
    for (r, row) in x.iter().enumerate() {
        if row.len() != d {
            return Err(Error::InvalidArgument(format!(
                "{op}: row {r} has {} features, expected {d}",
                row.len()
            )));
        }
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(op, format!("row {r} feature {c} is {}", row[c])));
        }
    }
    if let Some(y) = y {
        if y.len() != x.len() {
            return Err(Error::InvalidArgument(format!(
                "{op}: {} rows but {} labels",
                x.len(),
                y.len()
            )));
        }
        if let Some(&bad) = y.iter().find(|&&l| l >= N_CLASSES) {
            return Err(Error::InvalidArgument(format!("{op}: label {bad} out of range")));
        }
    }
    Ok(d)
}

fn softmax_row(z: &[f64]) -> Vec<f64> {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn argmax(row: &[f64]) -> usize {
    crate::cnn::argmax(row)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalerStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl ScalerStats {
    pub fn fit(x: &[Vec<f64>]) -> Result<Self> {
        let d = check_inputs(x, None, "scaler")?;
        let n = x.len() as f64;
        let mut mean = vec![0.0; d];
        for row in x {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for row in x {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                *s += (v - m).powi(2);
            }
        }
        let std = var.into_iter().map(|s| (s / n).sqrt().max(STD_FLOOR)).collect();
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(&self.mean)
                    .zip(&self.std)
                    .map(|((v, m), s)| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LogRegConfig {
    pub l2: f64,
    pub iters: usize,
    pub lr: f64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            iters: 500,
            lr: 0.05,
        }
    }
}

/// `weights` is `classes x features`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearModel {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl LinearModel {
    pub fn zeros(classes: usize, d: usize) -> Self {
        Self {
            weights: vec![vec![0.0; d]; classes],
            bias: vec![0.0; classes],
        }
    }

    pub fn scores(&self, row: &[f64]) -> Vec<f64> {
        self.weights
            .iter()
            .zip(&self.bias)
            .map(|(w, b)| b + w.iter().zip(row).map(|(a, x)| a * x).sum::<f64>())
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogReg {
    pub model: LinearModel,
}

impl LogReg {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| softmax_row(&self.model.scores(r))).collect()
    }
}

/// Softmax regression: mean cross-entropy plus `l2/2 * |W|^2`, minimised
/// with full-batch Adam from zero weights.
pub fn fit_logreg(x: &[Vec<f64>], y: &[usize], cfg: &LogRegConfig) -> Result<LogReg> {
    let d = check_inputs(x, Some(y), "fit_logreg")?;
    let n = x.len() as f64;
    let k = N_CLASSES;
    let mut model = LinearModel::zeros(k, d);
    let (b1, b2, eps) = (0.9f64, 0.999f64, 1e-8);
    let size = k * (d + 1);
    let (mut m, mut v) = (vec![0.0; size], vec![0.0; size]);
    let mut grad = vec![0.0; size];
    for t in 1..=cfg.iters {
        grad.fill(0.0);
        for (row, &label) in x.iter().zip(y) {
            let p = softmax_row(&model.scores(row));
            for (c, &pc) in p.iter().enumerate().take(k) {
                let g = (pc - f64::from(u8::from(c == label))) / n;
                let base = c * (d + 1);
                for (gw, xv) in grad[base..base + d].iter_mut().zip(row) {
                    *gw += g * xv;
                }
                grad[base + d] += g;
            }
        }
        for c in 0..k {
            for j in 0..d {
                grad[c * (d + 1) + j] += cfg.l2 * model.weights[c][j];
            }
        }
        let (c1, c2) = (1.0 - b1.powi(t as i32), 1.0 - b2.powi(t as i32));
        for (i, g) in grad.iter().enumerate() {
            m[i] = b1 * m[i] + (1.0 - b1) * g;
            v[i] = b2 * v[i] + (1.0 - b2) * g * g;
            let step = cfg.lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
            let (c, j) = (i / (d + 1), i % (d + 1));
            if j == d {
                model.bias[c] -= step;
            } else {
                model.weights[c][j] -= step;
            }
        }
    }
    Ok(LogReg { model })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    /// Step size at the first update.
    pub eta0: f64,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            epochs: 50,
            eta0: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearSvm {
    pub model: LinearModel,
}

impl LinearSvm {
    pub fn margins(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        x.iter().map(|r| self.model.scores(r)).collect()
    }

    /// Softmax over the one-vs-rest margins.
    pub fn pseudo_proba(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        self.margins(x).iter().map(|m| softmax_row(m)).collect()
    }
}

/// Mean hinge loss of one binary classifier (`targets` are +-1).
pub fn hinge_loss(w: &[f64], b: f64, x: &[Vec<f64>], targets: &[f64]) -> f64 {
    let total: f64 = x
        .iter()
        .zip(targets)
        .map(|(row, t)| {
            let s = b + w.iter().zip(row).map(|(a, v)| a * v).sum::<f64>();
            (1.0 - t * s).max(0.0)
        })
        .sum();
    total / x.len() as f64
}

/// Binary SVM: minimises `lambda/2 |w|^2 + mean hinge` with
/// `lambda = 1 / (C n)` by SGD with step `eta0 / (1 + eta0 * lambda * t)`.
/// The bias is not regularised.
pub fn fit_binary_svm(
    x: &[Vec<f64>],
    targets: &[f64],
    cfg: &SvmConfig,
    seed: u64,
    stream: u64,
) -> (Vec<f64>, f64) {
    let d = x[0].len();
    let lambda = 1.0 / (cfg.c * x.len() as f64);
    let (mut w, mut b) = (vec![0.0; d], 0.0);
    let mut order: Vec<usize> = (0..x.len()).collect();
    let mut t = 0usize;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng_for(seed, &[rng::TAG_SVM, stream, epoch as u64]));
        for &i in &order {
            let eta = cfg.eta0 / (1.0 + cfg.eta0 * lambda * t as f64);
            let s = b + w.iter().zip(&x[i]).map(|(a, v)| a * v).sum::<f64>();
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|a| *a *= shrink);
            if targets[i] * s < 1.0 {
                for (a, v) in w.iter_mut().zip(&x[i]) {
                    *a += eta * targets[i] * v;
                }
                b += eta * targets[i];
            }
            t += 1;
        }
    }
    (w, b)
}

pub fn fit_linear_svm(x: &[Vec<f64>], y: &[usize], cfg: &SvmConfig, seed: u64) -> Result<LinearSvm> {
    let d = check_inputs(x, Some(y), "fit_linear_svm")?;
    if !(cfg.c > 0.0 && cfg.eta0 > 0.0) {
        return Err(Error::InvalidArgument("SVM C and eta0 must be positive".into()));
    }
    let mut model = LinearModel::zeros(N_CLASSES, d);
    for c in 0..N_CLASSES {
        let targets: Vec<f64> = y.iter().map(|&l| if l == c { 1.0 } else { -1.0 }).collect();
        let (w, b) = fit_binary_svm(x, &targets, cfg, seed, c as u64);
        model.weights[c] = w;
        model.bias[c] = b;
    }
    Ok(LinearSvm { model })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until nodes are pure or too small to split.
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub features_per_split: usize,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: None,
            min_samples_split: 2,
            features_per_split: 8,
            bootstrap: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Leaf {
        proba: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Nodes in creation order; node 0 is the root. Samples with
/// `x[feature] <= threshold` go left.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn predict_row(&self, row: &[f64]) -> &[f64] {
        let mut k = 0;
        loop {
            match &self.nodes[k] {
                Node::Leaf { proba } => return proba,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => k = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(t: &Tree, k: usize) -> usize {
            match t.nodes[k] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(t, left).max(walk(t, right)),
            }
        }
        walk(self, 0)
    }
}

/// Gini impurity `1 - sum p_c^2` of a class histogram.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

struct SplitChoice {
    feature: usize,
    threshold: f64,
    score: f64,
}

fn histogram(idx: &[usize], y: &[usize]) -> [usize; N_CLASSES] {
    let mut h = [0; N_CLASSES];
    for &i in idx {
        h[y[i]] += 1;
    }
    h
}

/// Lowest weighted child Gini over midpoints of distinct sorted values.
fn best_split_on(x: &[Vec<f64>], y: &[usize], idx: &[usize], feature: usize, best: &mut Option<SplitChoice>) {
    let mut vals: Vec<(f64, usize)> = idx.iter().map(|&i| (x[i][feature], y[i])).collect();
    vals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = histogram(idx, y);
    let n = vals.len();
    let mut left = [0usize; N_CLASSES];
    for s in 1..n {
        left[vals[s - 1].1] += 1;
        if vals[s].0 <= vals[s - 1].0 {
            continue;
        }
        let mut right = total;
        for c in 0..N_CLASSES {
            right[c] -= left[c];
        }
        let score = (s as f64 * gini(&left) + (n - s) as f64 * gini(&right)) / n as f64;
        if best.as_ref().is_none_or(|b| score < b.score) {
            let threshold = vals[s - 1].0 + (vals[s].0 - vals[s - 1].0) / 2.0;
            *best = Some(SplitChoice {
                feature,
                threshold,
                score,
            });
        }
    }
}

fn grow_tree(x: &[Vec<f64>], y: &[usize], sample: Vec<usize>, cfg: &ForestConfig, rng: &mut rng::Rng) -> Tree {
    let d = x[0].len();
    let mut nodes = Vec::new();
    // (node slot, samples, depth)
    let mut work = vec![(0usize, sample, 0usize)];
    nodes.push(Node::Leaf { proba: Vec::new() });
    let mut features: Vec<usize> = (0..d).collect();
    while let Some((slot, idx, depth)) = work.pop() {
        let hist = histogram(&idx, y);
        let n = idx.len();
        let leaf = Node::Leaf {
            proba: hist.iter().map(|&c| c as f64 / n as f64).collect(),
        };
        let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || n < cfg.min_samples_split || cfg.max_depth.is_some_and(|m| depth >= m) {
            nodes[slot] = leaf;
            continue;
        }
        features.shuffle(rng);
        let k = cfg.features_per_split.min(d);
        let mut best = None;
        for &f in &features[..k] {
            best_split_on(x, y, &idx, f, &mut best);
        }
        // every sampled feature was constant here: try the rest
        if best.is_none() {
            for &f in &features[k..] {
                best_split_on(x, y, &idx, f, &mut best);
            }
        }
        let Some(choice) = best else {
            nodes[slot] = leaf;
            continue;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| x[i][choice.feature] <= choice.threshold);
        let (left, right) = (nodes.len(), nodes.len() + 1);
        nodes.push(Node::Leaf { proba: Vec::new() });
        nodes.push(Node::Leaf { proba: Vec::new() });
        nodes[slot] = Node::Split {
            feature: choice.feature,
            threshold: choice.threshold,
            left,
            right,
        };
        work.push((right, r, depth + 1));
        work.push((left, l, depth + 1));
    }
    Tree { nodes }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    pub trees: Vec<Tree>,
}

impl Forest {
    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let k = self.trees.len() as f64;
        x.iter()
            .map(|row| {
                let mut acc = vec![0.0; N_CLASSES];
                for t in &self.trees {
                    for (a, p) in acc.iter_mut().zip(t.predict_row(row)) {
                        *a += p;
                    }
                }
                acc.into_iter().map(|a| a / k).collect()
            })
            .collect()
    }
}

pub fn fit_forest(x: &[Vec<f64>], y: &[usize], cfg: &ForestConfig, seed: u64) -> Result<Forest> {
    check_inputs(x, Some(y), "fit_forest")?;
    if cfg.n_trees == 0 || cfg.features_per_split == 0 || cfg.min_samples_split < 2 {
        return Err(Error::InvalidArgument(
            "forest needs n_trees, features_per_split >= 1 and min_samples_split >= 2".into(),
        ));
    }
    if cfg.max_depth == Some(0) {
        return Err(Error::InvalidArgument("max_depth must be positive".into()));
    }
    let n = x.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = rng_for(seed, &[rng::TAG_FOREST, t as u64]);
            let sample = if cfg.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            grow_tree(x, y, sample, cfg, &mut rng)
        })
        .collect();
    Ok(Forest { trees })
}

/// Unweighted mean of several models' probability rows.
pub fn soft_vote(probas: &[Vec<Vec<f64>>]) -> Result<(Vec<usize>, Vec<Vec<f64>>)> {
    let first = probas
        .first()
        .ok_or_else(|| Error::InvalidArgument("soft vote needs at least one model".into()))?;
    if let Some(bad) = probas.iter().find(|p| p.len() != first.len()) {
        return Err(Error::InvalidArgument(format!(
            "soft vote: models disagree on row count ({} vs {})",
            first.len(),
            bad.len()
        )));
    }
    let k = probas.len() as f64;
    let mean: Vec<Vec<f64>> = (0..first.len())
        .map(|r| {
            let width = first[r].len();
            let mut acc = vec![0.0; width];
            for p in probas {
                for (a, v) in acc.iter_mut().zip(&p[r]) {
                    *a += v;
                }
            }
            acc.into_iter().map(|a| a / k).collect()
        })
        .collect();
    let labels = mean.iter().map(|r| argmax(r)).collect();
    Ok((labels, mean))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub logreg: LogRegConfig,
    pub svm: SvmConfig,
    pub forest: ForestConfig,
}

/// The three fitted baselines plus the scaler shared by LR and SVM.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Baselines {
    pub scaler: ScalerStats,
    pub logreg: LogReg,
    pub svm: LinearSvm,
    pub forest: Forest,
}

/// Per-model probabilities on one feature matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineProba {
    pub logreg: Vec<Vec<f64>>,
    pub svm: Vec<Vec<f64>>,
    pub forest: Vec<Vec<f64>>,
    pub voting: Vec<Vec<f64>>,
}

impl Baselines {
    pub fn fit(x: &[Vec<f64>], y: &[usize], cfg: &BaselineConfig, seed: u64) -> Result<Self> {
        let scaler = ScalerStats::fit(x)?;
        let z = scaler.transform(x);
        Ok(Self {
            logreg: fit_logreg(&z, y, &cfg.logreg)?,
            svm: fit_linear_svm(&z, y, &cfg.svm, seed)?,
            forest: fit_forest(x, y, &cfg.forest, seed)?,
            scaler,
        })
    }

    pub fn predict_proba(&self, x: &[Vec<f64>]) -> Result<BaselineProba> {
        let z = self.scaler.transform(x);
        let logreg = self.logreg.predict_proba(&z);
        let svm = self.svm.pseudo_proba(&z);
        let forest = self.forest.predict_proba(x);
        let (_, voting) = soft_vote(&[logreg.clone(), svm.clone(), forest.clone()])?;
        Ok(BaselineProba {
            logreg,
            svm,
            forest,
            voting,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("baseline models serialise")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            detail: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pad(v: &[f64]) -> Vec<f64> {
        let mut r = v.to_vec();
        r.resize(59, 0.0);
        r
    }

    fn two_clusters(n: usize, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let mut rng = rng_for(seed, &[1]);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let c = i % 2;
            let centre = if c == 0 { -3.0 } else { 3.0 };
            x.push(pad(&[
                centre + rng.random_range(-1.0..1.0),
                centre + rng.random_range(-1.0..1.0),
            ]));
            y.push(c * 3);
        }
        (x, y)
    }

    #[test]
    fn scaler_standardises() {
        let x = vec![vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = ScalerStats::fit(&x).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, STD_FLOOR]);
        assert_eq!(s.transform(&x), vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
    }

    #[test]
    fn logreg_separates_clusters() {
        let (x, y) = two_clusters(200, 3);
        let m = fit_logreg(&x, &y, &LogRegConfig::default()).unwrap();
        let p = m.predict_proba(&x);
        let acc = p.iter().zip(&y).filter(|(r, &l)| argmax(r) == l).count() as f64 / 200.0;
        assert!(acc >= 0.99);
        for r in &p {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_logreg_is_uniform() {
        let m = LogReg {
            model: LinearModel::zeros(8, 59),
        };
        let p = m.predict_proba(&[pad(&[1.0, 2.0])]);
        assert!(p[0].iter().all(|&v| (v - 0.125).abs() < 1e-15));
    }

    #[test]
    fn logreg_ignores_row_duplication() {
        let (x, y) = two_clusters(40, 5);
        let cfg = LogRegConfig {
            iters: 50,
            ..Default::default()
        };
        let a = fit_logreg(&x, &y, &cfg).unwrap();
        let x2: Vec<_> = x.iter().chain(&x).cloned().collect();
        let y2: Vec<_> = y.iter().chain(&y).copied().collect();
        let b = fit_logreg(&x2, &y2, &cfg).unwrap();
        for (wa, wb) in a.model.weights.iter().flatten().zip(b.model.weights.iter().flatten()) {
            assert!((wa - wb).abs() < 1e-9);
        }
    }

    #[test]
    fn logreg_rejects_nan() {
        let x = vec![vec![f64::NAN, 1.0]];
        assert!(fit_logreg(&x, &[0], &LogRegConfig::default()).is_err());
    }

    #[test]
    fn svm_separable_binary() {
        let (x, y) = two_clusters(100, 7);
        let targets: Vec<f64> = y.iter().map(|&l| if l == 0 { 1.0 } else { -1.0 }).collect();
        let (w, b) = fit_binary_svm(&x, &targets, &SvmConfig::default(), 0, 0);
        assert!(hinge_loss(&w, b, &x, &targets) < 1e-2);
        let m = fit_linear_svm(&x, &y, &SvmConfig::default(), 0).unwrap();
        let acc = m
            .margins(&x)
            .iter()
            .zip(&y)
            .filter(|(r, &l)| argmax(r) == l)
            .count();
        assert_eq!(acc, 100);
    }

    #[test]
    fn svm_pseudo_proba_properties() {
        let m = LinearSvm {
            model: LinearModel::zeros(8, 3),
        };
        assert!(m.pseudo_proba(&[vec![1.0, 2.0, 3.0]])[0]
            .iter()
            .all(|&v| (v - 0.125).abs() < 1e-15));
        let margins = [0.3, -1.0, 2.0, 0.1];
        let scaled: Vec<f64> = margins.iter().map(|v| v * 7.5).collect();
        assert_eq!(argmax(&softmax_row(&margins)), argmax(&softmax_row(&scaled)));
    }

    #[test]
    fn gini_values() {
        assert_eq!(gini(&[5, 0, 0]), 0.0);
        assert!((gini(&[3, 3]) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn single_tree_memorises_distinct_samples() {
        let mut rng = rng_for(11, &[2]);
        let x: Vec<Vec<f64>> = (0..150)
            .map(|_| (0..59).map(|_| rng.random::<f64>()).collect())
            .collect();
        let y: Vec<usize> = (0..150).map(|_| rng.random_range(0..8)).collect();
        let cfg = ForestConfig {
            n_trees: 1,
            bootstrap: false,
            ..Default::default()
        };
        let f = fit_forest(&x, &y, &cfg, 4).unwrap();
        let p = f.predict_proba(&x);
        assert!(p.iter().zip(&y).all(|(r, &l)| r[l] == 1.0));
    }

    #[test]
    fn one_class_forest() {
        let x: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64; 4]).collect();
        let f = fit_forest(&x, &[2; 10], &ForestConfig::default(), 0).unwrap();
        for r in f.predict_proba(&[vec![100.0; 4]]) {
            assert_eq!(r[2], 1.0);
        }
    }

    #[test]
    fn forest_order_invariant_and_deterministic() {
        let (x, y) = two_clusters(60, 9);
        let cfg = ForestConfig {
            n_trees: 7,
            ..Default::default()
        };
        let a = fit_forest(&x, &y, &cfg, 4).unwrap();
        assert_eq!(a, fit_forest(&x, &y, &cfg, 4).unwrap());
        let mut rev = a.clone();
        rev.trees.reverse();
        let (pa, pr) = (a.predict_proba(&x), rev.predict_proba(&x));
        for (ra, rr) in pa.iter().zip(&pr) {
            for (u, v) in ra.iter().zip(rr) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn soft_vote_arithmetic() {
        let (labels, mean) = soft_vote(&[
            vec![vec![0.6, 0.4]],
            vec![vec![0.2, 0.8]],
            vec![vec![0.55, 0.45]],
        ])
        .unwrap();
        assert!((mean[0][0] - 0.45).abs() < 1e-12);
        assert_eq!(labels, vec![1]);
        let same = vec![vec![0.25, 0.75]];
        assert_eq!(soft_vote(&[same.clone(), same.clone(), same.clone()]).unwrap().1, same);
        assert!(soft_vote(&[]).is_err());
        assert!(soft_vote(&[same.clone(), vec![]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let (x, y) = two_clusters(40, 1);
        let cfg = BaselineConfig {
            logreg: LogRegConfig {
                iters: 20,
                ..Default::default()
            },
            svm: SvmConfig {
                epochs: 3,
                ..Default::default()
            },
            forest: ForestConfig {
                n_trees: 3,
                ..Default::default()
            },
        };
        let b = Baselines::fit(&x, &y, &cfg, 2).unwrap();
        assert_eq!(Baselines::from_json(&b.to_json()).unwrap(), b);
        let p = b.predict_proba(&x).unwrap();
        for r in &p.voting {
            assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
