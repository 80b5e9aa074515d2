//! Confusion matrix, precision/recall/F1/accuracy, one-vs-rest ROC-AUC and
//! average precision. Undefined ratios (0/0) are reported as 0.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::cnn::argmax;
use crate::data::{DefectClass, N_CLASSES};
use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: [[u64; N_CLASSES]; N_CLASSES],
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let names: Vec<&str> = DefectClass::ALL.iter().map(|c| c.name()).collect();
        let mut s = format!("true\\pred,{}\n", names.join(","));
        for (name, row) in names.iter().zip(&self.counts) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            let _ = writeln!(s, "{name},{}", cells.join(","));
        }
        s
    }
}

pub fn confusion(y_true: &[usize], y_pred: &[usize]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::InvalidArgument(format!(
            "{} true labels but {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t >= N_CLASSES || p >= N_CLASSES {
            return Err(Error::InvalidArgument(format!("label pair ({t}, {p}) out of range")));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
}

pub fn prf_accuracy(cm: &ConfusionMatrix) -> Result<Prf> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::UndefinedMetric("confusion matrix is empty".into()));
    }
    let (mut precision, mut recall, mut f1) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..N_CLASSES {
        let tp = cm.counts[c][c];
        let col: u64 = (0..N_CLASSES).map(|r| cm.counts[r][c]).sum();
        let row: u64 = cm.counts[c].iter().sum();
        let (p, r) = (ratio(tp, col), ratio(tp, row));
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let trace: u64 = (0..N_CLASSES).map(|c| cm.counts[c][c]).sum();
    Ok(Prf {
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        accuracy: trace as f64 / total as f64,
        precision,
        recall,
        f1,
    })
}

/// Points of the descending-score sweep, one per distinct score.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    pub threshold: f64,
    pub tp: u64,
    pub fp: u64,
}

fn sweep(scores: &[f64], labels: &[bool]) -> Result<(Vec<SweepPoint>, u64, u64)> {
    if scores.len() != labels.len() {
        return Err(Error::InvalidArgument(format!(
            "{} scores but {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::numeric("metric sweep", format!("score {s}")));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    let (mut tp, mut fp) = (0, 0);
    let mut k = 0;
    while k < order.len() {
        let s = scores[order[k]];
        while k < order.len() && scores[order[k]] == s {
            if labels[order[k]] {
                tp += 1;
            } else {
                fp += 1;
            }
            k += 1;
        }
        points.push(SweepPoint { threshold: s, tp, fp });
    }
    Ok((points, pos, neg))
}

/// `(threshold, fpr, tpr)` from `(+inf, 0, 0)` to `(min score, 1, 1)`.
pub fn roc_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (points, pos, neg) = sweep(scores, labels)?;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("ROC needs both classes present".into()));
    }
    let mut out = vec![(f64::INFINITY, 0.0, 0.0)];
    out.extend(points.iter().map(|p| (p.threshold, ratio(p.fp, neg), ratio(p.tp, pos))));
    Ok(out)
}

/// Trapezoidal area under the ROC curve; tied scores form one step.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = roc_points(scores, labels)?;
    Ok(pts
        .windows(2)
        .map(|w| (w[1].1 - w[0].1) * (w[1].2 + w[0].2) / 2.0)
        .sum())
}

/// `(threshold, recall, precision)` at each distinct score, descending.
pub fn pr_points(scores: &[f64], labels: &[bool]) -> Result<Vec<(f64, f64, f64)>> {
    let (points, pos, _) = sweep(scores, labels)?;
    if pos == 0 {
        return Err(Error::UndefinedMetric("precision-recall needs a positive".into()));
    }
    Ok(points
        .iter()
        .map(|p| (p.threshold, ratio(p.tp, pos), ratio(p.tp, p.tp + p.fp)))
        .collect())
}

/// `sum_n (R_n - R_{n-1}) P_n` over the descending sweep.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    let pts = pr_points(scores, labels)?;
    let mut prev_r = 0.0;
    let mut ap = 0.0;
    for (_, r, p) in pts {
        ap += (r - prev_r) * p;
        prev_r = r;
    }
    Ok(ap)
}

fn one_vs_rest(proba: &[Vec<f64>], y_true: &[usize], c: usize) -> (Vec<f64>, Vec<bool>) {
    (
        proba.iter().map(|r| r[c]).collect(),
        y_true.iter().map(|&y| y == c).collect(),
    )
}

fn missing_classes(y_true: &[usize]) -> Vec<&'static str> {
    DefectClass::ALL
        .into_iter()
        .filter(|c| !y_true.contains(&c.label()))
        .map(|c| c.name())
        .collect()
}

/// Per-class one-vs-rest AUC and AP (score = probability column).
pub fn per_class_auc_ap(proba: &[Vec<f64>], y_true: &[usize]) -> Result<(Vec<f64>, Vec<f64>)> {
    if proba.len() != y_true.len() || proba.iter().any(|r| r.len() != N_CLASSES) {
        return Err(Error::InvalidArgument(format!(
            "expected {} probability rows of width {N_CLASSES}",
            y_true.len()
        )));
    }
    let missing = missing_classes(y_true);
    if !missing.is_empty() {
        return Err(Error::UndefinedMetric(format!(
            "classes absent from labels: {}",
            missing.join(", ")
        )));
    }
    let mut auc = Vec::with_capacity(N_CLASSES);
    let mut ap = Vec::with_capacity(N_CLASSES);
    for c in 0..N_CLASSES {
        let (s, l) = one_vs_rest(proba, y_true, c);
        auc.push(roc_auc(&s, &l)?);
        ap.push(average_precision(&s, &l)?);
    }
    Ok((auc, ap))
}

pub fn mean_auc_ap(proba: &[Vec<f64>], y_true: &[usize]) -> Result<(f64, f64)> {
    let (auc, ap) = per_class_auc_ap(proba, y_true)?;
    let n = N_CLASSES as f64;
    Ok((auc.iter().sum::<f64>() / n, ap.iter().sum::<f64>() / n))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub class: String,
    pub support: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub auc: f64,
    pub ap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub model: String,
    pub n: u64,
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub mean_auc: f64,
    pub mean_ap: f64,
    pub per_class: Vec<ClassReport>,
    pub confusion: ConfusionMatrix,
}

/// Full report for one model: labels are the row argmax of `proba`.
pub fn evaluate(model: &str, proba: &[Vec<f64>], y_true: &[usize]) -> Result<MetricsReport> {
    let y_pred: Vec<usize> = proba.iter().map(|r| argmax(r)).collect();
    let cm = confusion(y_true, &y_pred)?;
    let prf = prf_accuracy(&cm)?;
    let (auc, ap) = per_class_auc_ap(proba, y_true)?;
    let per_class = DefectClass::ALL
        .iter()
        .enumerate()
        .map(|(c, class)| ClassReport {
            class: class.name().to_string(),
            support: cm.counts[c].iter().sum(),
            precision: prf.precision[c],
            recall: prf.recall[c],
            f1: prf.f1[c],
            auc: auc[c],
            ap: ap[c],
        })
        .collect();
    let n = N_CLASSES as f64;
    Ok(MetricsReport {
        model: model.to_string(),
        n: cm.total(),
        accuracy: prf.accuracy,
        macro_precision: prf.macro_precision,
        macro_recall: prf.macro_recall,
        macro_f1: prf.macro_f1,
        mean_auc: auc.iter().sum::<f64>() / n,
        mean_ap: ap.iter().sum::<f64>() / n,
        per_class,
        confusion: cm,
    })
}

/// `class,threshold,fpr,tpr` rows for every class.
pub fn roc_csv(proba: &[Vec<f64>], y_true: &[usize]) -> Result<String> {
    let mut s = String::from("class,threshold,fpr,tpr\n");
    for class in DefectClass::ALL {
        let (sc, l) = one_vs_rest(proba, y_true, class.label());
        for (t, fpr, tpr) in roc_points(&sc, &l)? {
            let _ = writeln!(s, "{},{t},{fpr},{tpr}", class.name());
        }
    }
    Ok(s)
}

/// `class,threshold,recall,precision` rows for every class.
pub fn pr_csv(proba: &[Vec<f64>], y_true: &[usize]) -> Result<String> {
    let mut s = String::from("class,threshold,recall,precision\n");
    for class in DefectClass::ALL {
        let (sc, l) = one_vs_rest(proba, y_true, class.label());
        for (t, r, p) in pr_points(&sc, &l)? {
            let _ = writeln!(s, "{},{t},{r},{p}", class.name());
        }
    }
    Ok(s)
}
