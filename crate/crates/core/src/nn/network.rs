//! Sequential networks with recorded forward passes and reverse-mode
//! gradients.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::rng::Rng;

use super::ops;
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub usize);

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T = f32> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

/// Named parameters, each with a gradient buffer of identical shape.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamSet<T = f32> {
    params: Vec<Param<T>>,
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self { params: Vec::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> ParamId {
        let grad = Tensor::zeros(value.shape());
        self.params.push(Param {
            name: name.into(),
            value,
            grad,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &Param<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param<T> {
        &mut self.params[id.0]
    }

    pub fn by_name(&self, name: &str) -> Option<&Param<T>> {
        self.params.iter().find(|p| p.name == name)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        for p in &mut self.params {
            p.grad.data_mut().fill(T::zero());
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamSet<U> {
        ParamSet {
            params: self
                .params
                .iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
        }
    }

    /// Replaces every value with the same-named entry of `other`.
    pub fn assign_from(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::InvalidArgument(format!(
                "parameter count mismatch: {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for p in &mut self.params {
            let src = other.by_name(&p.name).ok_or_else(|| {
                Error::InvalidArgument(format!("missing parameter `{}`", p.name))
            })?;
            if src.value.shape() != p.value.shape() {
                return Err(Error::shape(
                    "assign_from",
                    format!(
                        "`{}` has shape {:?}, expected {:?}",
                        p.name,
                        src.value.shape(),
                        p.value.shape()
                    ),
                ));
            }
            p.value = src.value.clone();
        }
        Ok(())
    }
}

/// He-normal initialisation: `N(0, 2 / fan_in)`.
pub fn he_normal<T: Scalar>(shape: &[usize], fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            T::of(z * std)
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches generated length")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    Conv2dSame { kernel: ParamId, bias: ParamId },
    TransposedConv2x2 { kernel: ParamId, bias: ParamId },
    MaxPool2x2,
    Relu,
    Flatten,
    Dense { weight: ParamId, bias: ParamId },
}

impl Layer {
    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2dSame { .. } => "conv2d_same",
            Layer::TransposedConv2x2 { .. } => "transposed_conv_s2",
            Layer::MaxPool2x2 => "maxpool_2x2",
            Layer::Relu => "relu",
            Layer::Flatten => "flatten",
            Layer::Dense { .. } => "dense",
        }
    }
}

enum Cache<T> {
    Input(Tensor<T>),
    Pool { in_shape: Vec<usize>, argmax: Vec<u32> },
    Output(Tensor<T>),
    Shape(Vec<usize>),
}

/// Per-layer values recorded by [`Network::forward_train`].
pub struct Tape<T> {
    caches: Vec<Cache<T>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T = f32> {
    pub layers: Vec<Layer>,
    pub params: ParamSet<T>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer>, params: ParamSet<T>) -> Self {
        Self { layers, params }
    }

    pub fn forward(&self, x: &Tensor<T>) -> Result<Tensor<T>> {
        Ok(self.run(x, 0..self.layers.len(), false)?.0)
    }

    /// Runs only `layers[range]`.
    pub fn forward_range(&self, x: &Tensor<T>, range: std::ops::Range<usize>) -> Result<Tensor<T>> {
        Ok(self.run(x, range, false)?.0)
    }

    pub fn forward_train(&self, x: &Tensor<T>) -> Result<(Tensor<T>, Tape<T>)> {
        let (out, caches) = self.run(x, 0..self.layers.len(), true)?;
        Ok((out, Tape { caches }))
    }

    fn run(
        &self,
        x: &Tensor<T>,
        range: std::ops::Range<usize>,
        record: bool,
    ) -> Result<(Tensor<T>, Vec<Cache<T>>)> {
        let mut caches = Vec::with_capacity(if record { range.len() } else { 0 });
        let mut cur = x.clone();
        for layer in &self.layers[range] {
            let next = match *layer {
                Layer::Conv2dSame { kernel, bias } => ops::conv2d_same(
                    &cur,
                    &self.params.get(kernel).value,
                    &self.params.get(bias).value,
                )?,
                Layer::TransposedConv2x2 { kernel, bias } => ops::transposed_conv_s2(
                    &cur,
                    &self.params.get(kernel).value,
                    &self.params.get(bias).value,
                )?,
                Layer::Dense { weight, bias } => ops::dense(
                    &cur,
                    &self.params.get(weight).value,
                    &self.params.get(bias).value,
                )?,
                Layer::MaxPool2x2 => {
                    let pooled = ops::maxpool_2x2(&cur)?;
                    if record {
                        caches.push(Cache::Pool {
                            in_shape: cur.shape().to_vec(),
                            argmax: pooled.argmax,
                        });
                    }
                    cur = pooled.output;
                    continue;
                }
                Layer::Relu => {
                    let out = ops::relu(&cur);
                    if record {
                        caches.push(Cache::Output(out.clone()));
                    }
                    cur = out;
                    continue;
                }
                Layer::Flatten => {
                    let in_shape = cur.shape().to_vec();
                    let n = in_shape[0];
                    let rest = cur.len() / n;
                    if record {
                        caches.push(Cache::Shape(in_shape));
                    }
                    cur = cur.reshape(&[n, rest])?;
                    continue;
                }
            };
            if record {
                caches.push(Cache::Input(std::mem::replace(&mut cur, next)));
            } else {
                cur = next;
            }
            cur.ensure_finite(layer.name())?;
        }
        Ok((cur, caches))
    }

    /// Accumulates `d loss / d param` into every parameter's gradient buffer,
    /// given `grad_out = d loss / d output` of the recorded pass.
    pub fn backward(&mut self, tape: Tape<T>, grad_out: Tensor<T>) -> Result<()> {
        let mut g = grad_out;
        for (idx, (layer, cache)) in self
            .layers
            .iter()
            .zip(tape.caches)
            .enumerate()
            .rev()
        {
            let need_input = idx > 0;
            let (weight_id, bias_id, grads) = match (*layer, cache) {
                (Layer::Conv2dSame { kernel, bias }, Cache::Input(x)) => (
                    kernel,
                    bias,
                    ops::conv2d_same_backward(&x, &self.params.get(kernel).value, &g, need_input)?,
                ),
                (Layer::TransposedConv2x2 { kernel, bias }, Cache::Input(x)) => (
                    kernel,
                    bias,
                    ops::transposed_conv_s2_backward(
                        &x,
                        &self.params.get(kernel).value,
                        &g,
                        need_input,
                    )?,
                ),
                (Layer::Dense { weight, bias }, Cache::Input(x)) => (
                    weight,
                    bias,
                    ops::dense_backward(&x, &self.params.get(weight).value, &g, need_input)?,
                ),
                (Layer::MaxPool2x2, Cache::Pool { in_shape, argmax }) => {
                    g = ops::maxpool_2x2_backward(&in_shape, &argmax, &g)?;
                    continue;
                }
                (Layer::Relu, Cache::Output(y)) => {
                    g = ops::relu_backward(&y, &g);
                    continue;
                }
                (Layer::Flatten, Cache::Shape(s)) => {
                    g = g.reshape(&s)?;
                    continue;
                }
                _ => unreachable!("tape recorded by this network's forward pass"),
            };
            grads.weight.ensure_finite(layer.name())?;
            grads.bias.ensure_finite(layer.name())?;
            accumulate(&mut self.params.get_mut(weight_id).grad, &grads.weight);
            accumulate(&mut self.params.get_mut(bias_id).grad, &grads.bias);
            if let Some(dx) = grads.input {
                g = dx;
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Network<U> {
        Network {
            layers: self.layers.clone(),
            params: self.params.cast(),
        }
    }
}

fn accumulate<T: Scalar>(dst: &mut Tensor<T>, src: &Tensor<T>) {
    for (d, &s) in dst.data_mut().iter_mut().zip(src.data()) {
        *d = *d + s;
    }
}
