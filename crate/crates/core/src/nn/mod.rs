//! Feed-forward networks with manual backpropagation.
//!
//! A [`Network`] is an ordered list of layers validated for shape
//! compatibility at construction, so a well-shaped input can never trip a
//! shape error mid-forward. Training is plain SGD ([`sgd_train`]) and every
//! analytic gradient can be audited against central finite differences
//! ([`grad_check`]).

mod io;
mod layers;
mod train;

pub use io::{load_network, save_network};
pub use layers::{Activation, ConvLayer, DeconvLayer, DenseLayer, Layer, LayerGradient, Loss};
pub use train::{sgd_train, TrainConfig};

use crate::error::{Error, Result};
use crate::tensor::{unroll, Tensor};
use layers::{layer_backward, layer_forward};

/// A validated stack of layers plus a training objective.
#[derive(Debug, Clone)]
pub struct Network {
    layers: Vec<Layer>,
    loss: Loss,
    /// shapes[i] is the input shape of layer i; shapes[layers.len()] is the output shape.
    shapes: Vec<Vec<usize>>,
}

/// Cached activations from one forward pass. `activations[0]` is the input,
/// `activations[i + 1]` the output of layer `i`.
#[derive(Debug)]
pub struct ForwardPass {
    pub activations: Vec<Tensor>,
    pool_indices: Vec<Option<Vec<usize>>>,
}

impl ForwardPass {
    pub fn prediction(&self) -> &Tensor {
        self.activations.last().unwrap()
    }
}

/// Per-layer parameter gradients, aligned with the network's layer list.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub per_layer: Vec<LayerGradient>,
}

impl Gradients {
    /// Flattens every parameter gradient in network order (for each layer:
    /// weights/filters row-major, then bias). Matches [`Network::params_flat`].
    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in &self.per_layer {
            match g {
                LayerGradient::Dense { weights, bias }
                | LayerGradient::Conv { filters: weights, bias }
                | LayerGradient::Deconv { filters: weights, bias } => {
                    out.extend_from_slice(weights.data());
                    out.extend_from_slice(bias.data());
                }
                LayerGradient::None => {}
            }
        }
        out
    }

    /// Adds `other` into `self`, layer by layer (batch accumulation).
    pub fn accumulate(&mut self, other: &Gradients) {
        for (mine, theirs) in self.per_layer.iter_mut().zip(&other.per_layer) {
            match (mine, theirs) {
                (
                    LayerGradient::Dense { weights: w, bias: b },
                    LayerGradient::Dense { weights: ow, bias: ob },
                )
                | (
                    LayerGradient::Conv { filters: w, bias: b },
                    LayerGradient::Conv { filters: ow, bias: ob },
                )
                | (
                    LayerGradient::Deconv { filters: w, bias: b },
                    LayerGradient::Deconv { filters: ow, bias: ob },
                ) => {
                    for (x, y) in w.data_mut().iter_mut().zip(ow.data()) {
                        *x += y;
                    }
                    for (x, y) in b.data_mut().iter_mut().zip(ob.data()) {
                        *x += y;
                    }
                }
                (LayerGradient::None, LayerGradient::None) => {}
                _ => unreachable!("gradient layer kinds always match the network"),
            }
        }
    }
}

impl Network {
    /// Validates that adjacent layers agree on shapes (and that every
    /// `MaxUnpool` pair points at a compatible earlier `MaxPool`), then
    /// freezes the layer stack.
    pub fn new(input_shape: Vec<usize>, layers: Vec<Layer>, loss: Loss) -> Result<Network> {
        if input_shape.is_empty() || input_shape.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("bad network input shape {input_shape:?}")));
        }
        let mut shapes = vec![input_shape];
        for (i, layer) in layers.iter().enumerate() {
            let out = layer.output_shape(i, shapes.last().unwrap())?;
            if let Layer::MaxUnpool { pair: Some(p) } = layer {
                let ok = *p < i
                    && matches!(layers[*p], Layer::MaxPool)
                    && shapes[*p] == out
                    && shapes[*p + 1] == shapes[i];
                if !ok {
                    return Err(Error::shape(format!(
                        "layer {i}: unpool pair {p} is not a max-pool with mirrored shapes"
                    )));
                }
            }
            shapes.push(out);
        }
        Ok(Network { layers, loss, shapes })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn loss_kind(&self) -> Loss {
        self.loss
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn output_shape(&self) -> &[usize] {
        self.shapes.last().unwrap()
    }

    /// Shape of the activation produced by layer `index`.
    pub fn layer_output_shape(&self, index: usize) -> &[usize] {
        &self.shapes[index + 1]
    }

    /// Runs the network, caching every intermediate activation.
    pub fn forward(&self, x: &Tensor) -> Result<ForwardPass> {
        if x.shape() != self.input_shape() {
            return Err(Error::shape(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape(),
                x.shape()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pool_indices: Vec<Option<Vec<usize>>> = vec![None; self.layers.len()];
        activations.push(x.clone());
        for (i, layer) in self.layers.iter().enumerate() {
            let step = layer_forward(layer, i, activations.last().unwrap(), &pool_indices)?;
            pool_indices[i] = step.pool_argmax;
            activations.push(step.output);
        }
        Ok(ForwardPass { activations, pool_indices })
    }

    /// Final activation only.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward(x)?.activations.pop().unwrap())
    }

    /// Loss of a cached prediction against `target`.
    pub fn loss_value(&self, pass: &ForwardPass, target: &Tensor) -> Result<f64> {
        let pred = pass.prediction();
        if pred.shape() != target.shape() {
            return Err(Error::shape(format!(
                "target shape {:?} does not match prediction {:?}",
                target.shape(),
                pred.shape()
            )));
        }
        Ok(self.loss.value(pred.data(), target.data()))
    }

    /// Backpropagates the loss gradient through every layer. Gradients have
    /// the same shapes as the parameters they correspond to.
    pub fn backward(&self, pass: &ForwardPass, target: &Tensor) -> Result<Gradients> {
        let pred = pass.prediction();
        if pred.shape() != target.shape() {
            return Err(Error::shape(format!(
                "target shape {:?} does not match prediction {:?}",
                target.shape(),
                pred.shape()
            )));
        }
        let mut delta = self.loss.gradient(pred.data(), target.data());
        let mut per_layer = vec![LayerGradient::None; self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let (grad, dx) = layer_backward(
                &self.layers[i],
                &pass.activations[i],
                &pass.activations[i + 1],
                &delta,
                pass.pool_indices[i].as_ref(),
                &pass.pool_indices,
            )?;
            per_layer[i] = grad;
            delta = dx;
        }
        Ok(Gradients { per_layer })
    }

    /// The activation at `layer_index` for input `x`, flattened to rank-1 in
    /// unroll order if necessary. This is the embedding extractor: point it
    /// at the last hidden layer.
    pub fn extract_embedding(&self, layer_index: usize, x: &Tensor) -> Result<Tensor> {
        if layer_index >= self.layers.len() {
            return Err(Error::argument(format!(
                "layer index {layer_index} out of range for {} layers",
                self.layers.len()
            )));
        }
        let mut pass = self.forward(x)?;
        let act = pass.activations.swap_remove(layer_index + 1);
        if act.rank() == 1 {
            Ok(act)
        } else {
            unroll(&act)
        }
    }

    pub fn param_len(&self) -> usize {
        self.layers.iter().map(Layer::param_len).sum()
    }

    /// All parameters flattened in network order (matches [`Gradients::flat`]).
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_len());
        for layer in &self.layers {
            match layer {
                Layer::Dense(d) => {
                    out.extend_from_slice(d.weights.data());
                    out.extend_from_slice(d.bias.data());
                }
                Layer::Conv(c) => {
                    out.extend_from_slice(c.filters.data());
                    out.extend_from_slice(c.bias.data());
                }
                Layer::Deconv(d) => {
                    out.extend_from_slice(d.filters.data());
                    out.extend_from_slice(d.bias.data());
                }
                _ => {}
            }
        }
        out
    }

    /// Overwrites all parameters from a flat slice in network order.
    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_len() {
            return Err(Error::argument(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                values.len()
            )));
        }
        let mut at = 0;
        for layer in &mut self.layers {
            for tensor in layer_param_tensors(layer) {
                let n = tensor.len();
                tensor.data_mut().copy_from_slice(&values[at..at + n]);
                at += n;
            }
        }
        Ok(())
    }

    /// In-place SGD step: `theta -= step * grad`.
    pub(crate) fn apply_gradients(&mut self, grads: &Gradients, step: f64) {
        for (layer, grad) in self.layers.iter_mut().zip(&grads.per_layer) {
            let tensors = layer_param_tensors(layer);
            match (tensors.len(), grad) {
                (2, LayerGradient::Dense { weights, bias })
                | (2, LayerGradient::Conv { filters: weights, bias })
                | (2, LayerGradient::Deconv { filters: weights, bias }) => {
                    let mut it = tensors.into_iter();
                    let w = it.next().unwrap();
                    for (p, g) in w.data_mut().iter_mut().zip(weights.data()) {
                        *p -= step * g;
                    }
                    let b = it.next().unwrap();
                    for (p, g) in b.data_mut().iter_mut().zip(bias.data()) {
                        *p -= step * g;
                    }
                }
                (0, LayerGradient::None) => {}
                _ => unreachable!("gradient layer kinds always match the network"),
            }
        }
    }

    /// Splits a validated network into a prefix and suffix at `index`
    /// (prefix gets layers `0..index`). Unpool pairs that cross the cut are
    /// detached and fall back to top-left placement.
    pub fn split_at(&self, index: usize, prefix_loss: Loss, suffix_loss: Loss) -> Result<(Network, Network)> {
        if index > self.layers.len() {
            return Err(Error::argument(format!("split index {index} out of range")));
        }
        let head: Vec<Layer> = self.layers[..index].to_vec();
        let tail: Vec<Layer> = self.layers[index..]
            .iter()
            .map(|l| match l {
                Layer::MaxUnpool { pair: Some(p) } if *p < index => Layer::MaxUnpool { pair: None },
                Layer::MaxUnpool { pair: Some(p) } => Layer::MaxUnpool { pair: Some(p - index) },
                other => other.clone(),
            })
            .collect();
        let head_net = Network::new(self.shapes[0].clone(), head, prefix_loss)?;
        let tail_net = Network::new(self.shapes[index].clone(), tail, suffix_loss)?;
        Ok((head_net, tail_net))
    }
}

fn layer_param_tensors(layer: &mut Layer) -> Vec<&mut Tensor> {
    match layer {
        Layer::Dense(d) => vec![&mut d.weights, &mut d.bias],
        Layer::Conv(c) => vec![&mut c.filters, &mut c.bias],
        Layer::Deconv(d) => vec![&mut d.filters, &mut d.bias],
        _ => vec![],
    }
}

/// Central finite-difference gradient of the loss for every parameter.
/// Independent of [`Network::backward`]; this is the audit path.
pub fn numeric_gradients(net: &Network, x: &Tensor, target: &Tensor, epsilon: f64) -> Result<Vec<f64>> {
    if epsilon <= 0.0 {
        return Err(Error::argument("epsilon must be positive"));
    }
    let mut probe = net.clone();
    let base = net.params_flat();
    let mut grads = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for i in 0..base.len() {
        params[i] = base[i] + epsilon;
        probe.set_params_flat(&params)?;
        let up = probe.loss_value(&probe.forward(x)?, target)?;
        params[i] = base[i] - epsilon;
        probe.set_params_flat(&params)?;
        let down = probe.loss_value(&probe.forward(x)?, target)?;
        params[i] = base[i];
        grads.push((up - down) / (2.0 * epsilon));
    }
    Ok(grads)
}

/// Worst relative disagreement between two gradient vectors:
/// `max_i |a_i - n_i| / max(1e-8, |a_i| + |n_i|)`, 0 for empty input.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / f64::max(1e-8, a.abs() + n.abs()))
        .fold(0.0, f64::max)
}

/// Compares backpropagation against central finite differences and returns
/// the worst relative error over all parameters (0 for a parameterless net).
pub fn grad_check(net: &Network, x: &Tensor, target: &Tensor, epsilon: f64) -> Result<f64> {
    let pass = net.forward(x)?;
    let analytic = net.backward(&pass, target)?.flat();
    let numeric = numeric_gradients(net, x, target, epsilon)?;
    Ok(max_relative_error(&analytic, &numeric))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    fn dense_net(weights: &[Vec<f64>], bias: &[f64], act: Activation, loss: Loss) -> Network {
        let w = Tensor::from_rows(weights).unwrap();
        let b = Tensor::from_vec(bias.to_vec()).unwrap();
        let inputs = w.shape()[0];
        Network::new(
            vec![inputs],
            vec![Layer::dense_from(w, b, act).unwrap()],
            loss,
        )
        .unwrap()
    }

    #[test]
    fn zero_dense_layer_maps_to_zero() {
        let net = dense_net(
            &[vec![0.0, 0.0], vec![0.0, 0.0]],
            &[0.0, 0.0],
            Activation::Identity,
            Loss::SquaredError,
        );
        let y = net.predict(&Tensor::from_vec(vec![3.0, -1.5]).unwrap()).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn identity_dense_layer_is_identity() {
        let net = dense_net(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.0, 0.0],
            Activation::Identity,
            Loss::SquaredError,
        );
        let x = Tensor::from_vec(vec![0.25, -2.0]).unwrap();
        assert_eq!(net.predict(&x).unwrap().data(), x.data());
    }

    #[test]
    fn sigmoid_scalar_formula() {
        // dense(2 -> 1), W = [[1],[1]], b = [0.5], x = (0,0): sigmoid(0.5).
        let net = dense_net(
            &[vec![1.0], vec![1.0]],
            &[0.5],
            Activation::Sigmoid,
            Loss::SquaredError,
        );
        let y = net.predict(&Tensor::from_vec(vec![0.0, 0.0]).unwrap()).unwrap();
        assert!((y.data()[0] - 0.6224593312018546).abs() < 1e-12);
    }

    #[test]
    fn forward_rejects_wrong_input_shape() {
        let net = dense_net(&[vec![1.0]], &[0.0], Activation::Identity, Loss::SquaredError);
        assert!(net.forward(&Tensor::from_vec(vec![1.0, 2.0]).unwrap()).is_err());
    }

    #[test]
    fn construction_rejects_incompatible_layers() {
        let mut rng = SeededRng::new(1);
        let layers = vec![
            Layer::dense(2, 3, Activation::Tanh, &mut rng).unwrap(),
            Layer::dense(4, 1, Activation::Identity, &mut rng).unwrap(),
        ];
        let err = Network::new(vec![2], layers, Loss::SquaredError).unwrap_err();
        assert!(err.to_string().contains("layer 1"), "{err}");
    }

    #[test]
    fn gradients_zero_at_exact_minimum() {
        let net = dense_net(
            &[vec![1.0, 0.0], vec![0.0, 1.0]],
            &[0.0, 0.0],
            Activation::Identity,
            Loss::SquaredError,
        );
        let x = Tensor::from_vec(vec![0.5, -0.5]).unwrap();
        let pass = net.forward(&x).unwrap();
        let grads = net.backward(&pass, &x).unwrap();
        assert!(grads.flat().iter().all(|g| *g == 0.0));
    }

    #[test]
    fn hand_differentiated_linear_gradient() {
        // y = w x with w = 2, x = 1, target 0, L = (y - t)^2: dL/dw = 2*2*1 = 4.
        let net = dense_net(&[vec![2.0]], &[0.0], Activation::Identity, Loss::SquaredError);
        let x = Tensor::from_vec(vec![1.0]).unwrap();
        let t = Tensor::from_vec(vec![0.0]).unwrap();
        let pass = net.forward(&x).unwrap();
        let g = net.backward(&pass, &t).unwrap().flat();
        assert!((g[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn grad_check_dense_random() {
        let mut rng = SeededRng::new(42);
        let net = Network::new(
            vec![3],
            vec![
                Layer::dense(3, 5, Activation::Tanh, &mut rng).unwrap(),
                Layer::dense(5, 2, Activation::Sigmoid, &mut rng).unwrap(),
            ],
            Loss::SquaredError,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.3, -0.8, 0.5]).unwrap();
        let t = Tensor::from_vec(vec![0.2, 0.9]).unwrap();
        let err = grad_check(&net, &x, &t, 1e-5).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_gradients_are_caught() {
        let mut rng = SeededRng::new(7);
        let net = Network::new(
            vec![2],
            vec![Layer::dense(2, 3, Activation::Tanh, &mut rng).unwrap()],
            Loss::SquaredError,
        )
        .unwrap();
        let x = Tensor::from_vec(vec![0.4, -0.2]).unwrap();
        let t = Tensor::from_vec(vec![0.1, 0.0, 0.5]).unwrap();
        let pass = net.forward(&x).unwrap();
        let mut corrupted = net.backward(&pass, &t).unwrap().flat();
        for g in &mut corrupted {
            *g *= 1.5;
        }
        let numeric = numeric_gradients(&net, &x, &t, 1e-5).unwrap();
        assert!(max_relative_error(&corrupted, &numeric) > 1e-2);
    }

    #[test]
    fn grad_check_on_parameterless_net_is_zero() {
        let net = Network::new(
            vec![2, 2, 1],
            vec![Layer::Unroll],
            Loss::SquaredError,
        )
        .unwrap();
        let x = Tensor::new(vec![2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let t = Tensor::from_vec(vec![0.0; 4]).unwrap();
        assert_eq!(grad_check(&net, &x, &t, 1e-5).unwrap(), 0.0);
    }

    #[test]
    fn extract_embedding_identity_hidden() {
        let mut rng = SeededRng::new(3);
        let id = Layer::dense_from(
            Tensor::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap(),
            Tensor::from_vec(vec![0.0, 0.0]).unwrap(),
            Activation::Identity,
        )
        .unwrap();
        let out = Layer::dense(2, 1, Activation::Identity, &mut rng).unwrap();
        let net = Network::new(vec![2], vec![id, out], Loss::SquaredError).unwrap();
        let x = Tensor::from_vec(vec![0.7, -0.3]).unwrap();
        let emb = net.extract_embedding(0, &x).unwrap();
        assert_eq!(emb.data(), x.data());
        assert!(net.extract_embedding(5, &x).is_err());
    }

    #[test]
    fn unpool_places_values_back_at_pool_argmax() {
        // pool -> unpool(paired): the argmax entries survive, everything else is zeroed.
        let net = Network::new(
            vec![4, 4, 1],
            vec![Layer::MaxPool, Layer::MaxUnpool { pair: Some(0) }],
            Loss::SquaredError,
        )
        .unwrap();
        let mut data = vec![0.0; 16];
        data[5] = 3.0; // window (0,0)
        data[2] = 7.0; // window (0,1)
        data[8] = 1.0; // window (1,0)
        data[15] = 9.0; // window (1,1)
        let x = Tensor::new(vec![4, 4, 1], data.clone()).unwrap();
        let y = net.predict(&x).unwrap();
        assert_eq!(y.data(), &data[..]);
    }
}
