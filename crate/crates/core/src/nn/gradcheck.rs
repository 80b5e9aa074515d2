//! Central finite-difference gradient checks. The numeric side uses only
//! forward passes at `f64`, so it shares no code with `backward`.

use crate::error::Result;

use super::network::Network;
use super::ops;
use super::tensor::{Scalar, Tensor};

/// Loss heads available to the checker.
#[derive(Clone, Debug)]
pub enum LossHead {
    /// Softmax over the output row, then cross-entropy against one-hot rows.
    SoftmaxCrossEntropy(Tensor<f64>),
    Mse(Tensor<f64>),
}

impl LossHead {
    fn value<T: Scalar>(&self, out: &Tensor<T>) -> Result<T> {
        match self {
            LossHead::SoftmaxCrossEntropy(y) => {
                ops::cross_entropy(&ops::softmax_rows(out)?, &y.cast())
            }
            LossHead::Mse(t) => ops::mse_loss(out, &t.cast()),
        }
    }

    fn grad<T: Scalar>(&self, out: &Tensor<T>) -> Result<Tensor<T>> {
        match self {
            LossHead::SoftmaxCrossEntropy(y) => {
                ops::softmax_cross_entropy_grad(&ops::softmax_rows(out)?, &y.cast())
            }
            LossHead::Mse(t) => Ok(ops::mse_grad(out, &t.cast())),
        }
    }
}

pub fn loss<T: Scalar>(net: &Network<T>, x: &Tensor<T>, head: &LossHead) -> Result<T> {
    head.value(&net.forward(x)?)
}

/// Analytic gradients, one vector per parameter, widened to `f64`.
pub fn analytic<T: Scalar>(net: &Network<T>, x: &Tensor<T>, head: &LossHead) -> Result<Vec<Vec<f64>>> {
    let mut net = net.clone();
    net.params.zero_grad();
    let (out, tape) = net.forward_train(x)?;
    let g = head.grad(&out)?;
    net.backward(tape, g)?;
    Ok(net
        .params
        .iter()
        .map(|p| p.grad.data().iter().map(|v| v.as_f64()).collect())
        .collect())
}

pub fn numeric(net: &Network<f64>, x: &Tensor<f64>, head: &LossHead, h: f64) -> Result<Vec<Vec<f64>>> {
    let mut probe = net.clone();
    let mut all = Vec::new();
    for pi in 0..net.params.len() {
        let n = net.params.iter().nth(pi).expect("index in range").value.len();
        let mut grads = Vec::with_capacity(n);
        for k in 0..n {
            let orig = probe.params.iter().nth(pi).expect("index").value.data()[k];
            set(&mut probe, pi, k, orig + h);
            let up = loss(&probe, x, head)?;
            set(&mut probe, pi, k, orig - h);
            let down = loss(&probe, x, head)?;
            set(&mut probe, pi, k, orig);
            grads.push((up - down) / (2.0 * h));
        }
        all.push(grads);
    }
    Ok(all)
}

fn set(net: &mut Network<f64>, param: usize, k: usize, v: f64) {
    net.params.iter_mut().nth(param).expect("index").value.data_mut()[k] = v;
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub checked: usize,
}

/// Relative error `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Compares analytic gradients of `net` (at its own precision) against
/// `f64` central differences of the same graph.
pub fn check<T: Scalar>(
    net: &Network<T>,
    x: &Tensor<T>,
    head: &LossHead,
    h: f64,
    floor: f64,
) -> Result<GradCheckReport> {
    let a = analytic(net, x, head)?;
    let n = numeric(&net.cast::<f64>(), &x.cast::<f64>(), head, h)?;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        checked: 0,
    };
    for ((ga, gn), p) in a.iter().zip(&n).zip(net.params.iter()) {
        for (&x, &y) in ga.iter().zip(gn) {
            let e = rel_error(x, y, floor);
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst_param = p.name.clone();
            }
        }
    }
    Ok(report)
}
