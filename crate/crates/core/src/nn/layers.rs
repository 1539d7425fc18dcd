//! Layer kinds and their forward/backward rules.

use crate::error::{Error, Result};
use crate::rng::SeededRng;
use crate::tensor::{roll, unroll, Tensor};

/// Elementwise activation functions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Tanh,
    Sigmoid,
    Relu,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Identity => x,
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            Activation::Relu => x.max(0.0),
        }
    }

    /// Derivative expressed in terms of the activation *output* `y`.
    /// ReLU's subgradient at the kink is taken as 0.
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Identity => 1.0,
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Activation::Identity => "identity",
            Activation::Tanh => "tanh",
            Activation::Sigmoid => "sigmoid",
            Activation::Relu => "relu",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "identity" => Ok(Activation::Identity),
            "tanh" => Ok(Activation::Tanh),
            "sigmoid" => Ok(Activation::Sigmoid),
            "relu" => Ok(Activation::Relu),
            other => Err(Error::argument(format!("unknown activation {other:?}"))),
        }
    }
}

/// Training objectives. Squared error sums over output components; binary
/// cross-entropy expects predictions in (0, 1) and clamps at 1e-12 in both
/// the value and the gradient so the two stay consistent.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    SquaredError,
    BinaryCrossEntropy,
}

const BCE_EPS: f64 = 1e-12;

impl Loss {
    pub fn value(self, prediction: &[f64], target: &[f64]) -> f64 {
        match self {
            Loss::SquaredError => prediction
                .iter()
                .zip(target)
                .map(|(p, t)| (p - t) * (p - t))
                .sum(),
            Loss::BinaryCrossEntropy => prediction
                .iter()
                .zip(target)
                .map(|(p, t)| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                })
                .sum(),
        }
    }

    /// dL/dprediction, componentwise.
    pub fn gradient(self, prediction: &[f64], target: &[f64]) -> Vec<f64> {
        match self {
            Loss::SquaredError => prediction
                .iter()
                .zip(target)
                .map(|(p, t)| 2.0 * (p - t))
                .collect(),
            Loss::BinaryCrossEntropy => prediction
                .iter()
                .zip(target)
                .map(|(p, t)| {
                    let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                    -t / p + (1.0 - t) / (1.0 - p)
                })
                .collect(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Loss::SquaredError => "squared-error",
            Loss::BinaryCrossEntropy => "binary-cross-entropy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "squared-error" => Ok(Loss::SquaredError),
            "binary-cross-entropy" => Ok(Loss::BinaryCrossEntropy),
            other => Err(Error::argument(format!("unknown loss {other:?}"))),
        }
    }
}

/// Fully-connected layer: `y = act(x . W + b)` with `W` shaped `in x out`.
#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub weights: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Convolution layer (valid cross-correlation, stride 1) with filter bank
/// `f x f x C x K` mapping a C-channel grid to a K-channel grid.
#[derive(Debug, Clone)]
pub struct ConvLayer {
    pub filters: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// Transposed convolution: the adjoint of [`ConvLayer`]'s linear map, growing
/// an `h x w x K` grid to `(h+f-1) x (w+f-1) x C`. Filters share the conv
/// layout `f x f x C x K`; the bias has one entry per *output* channel C.
#[derive(Debug, Clone)]
pub struct DeconvLayer {
    pub filters: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

/// One step of a feed-forward network.
///
/// `MaxPool` is fixed at 2x2 windows with stride 2 and records argmax
/// positions during the forward pass. `MaxUnpool` doubles both grid
/// dimensions; when `pair` names an earlier `MaxPool` in the same network it
/// scatters values to that pool's recorded argmax positions, otherwise to the
/// top-left cell of each window.
#[derive(Debug, Clone)]
pub enum Layer {
    Dense(DenseLayer),
    Conv(ConvLayer),
    Deconv(DeconvLayer),
    MaxPool,
    MaxUnpool { pair: Option<usize> },
    Unroll,
    Roll { shape: [usize; 3] },
}

fn init_uniform(rng: &mut SeededRng, fan_in: usize, len: usize) -> Vec<f64> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    (0..len).map(|_| rng.uniform(-bound, bound)).collect()
}

impl Layer {
    /// Dense layer with weights uniform on [-1/sqrt(in), 1/sqrt(in)] and zero bias.
    pub fn dense(inputs: usize, outputs: usize, activation: Activation, rng: &mut SeededRng) -> Result<Layer> {
        if inputs == 0 || outputs == 0 {
            return Err(Error::argument("dense layer sizes must be positive"));
        }
        Ok(Layer::Dense(DenseLayer {
            weights: Tensor::new(vec![inputs, outputs], init_uniform(rng, inputs, inputs * outputs))?,
            bias: Tensor::zeros(vec![outputs])?,
            activation,
        }))
    }

    /// Dense layer from explicit parameters.
    pub fn dense_from(weights: Tensor, bias: Tensor, activation: Activation) -> Result<Layer> {
        if weights.rank() != 2 || bias.rank() != 1 || weights.shape()[1] != bias.len() {
            return Err(Error::shape(format!(
                "dense parameters inconsistent: weights {:?}, bias {:?}",
                weights.shape(),
                bias.shape()
            )));
        }
        Ok(Layer::Dense(DenseLayer { weights, bias, activation }))
    }

    /// Convolution layer, `filter_size x filter_size`, `in_channels -> out_channels`.
    pub fn conv(
        filter_size: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Layer> {
        if filter_size == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::argument("conv layer sizes must be positive"));
        }
        let fan_in = filter_size * filter_size * in_channels;
        let len = fan_in * out_channels;
        Ok(Layer::Conv(ConvLayer {
            filters: Tensor::new(
                vec![filter_size, filter_size, in_channels, out_channels],
                init_uniform(rng, fan_in, len),
            )?,
            bias: Tensor::zeros(vec![out_channels])?,
            activation,
        }))
    }

    /// Transposed convolution, `in_channels -> out_channels` while growing the grid.
    pub fn deconv(
        filter_size: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Layer> {
        if filter_size == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::argument("deconv layer sizes must be positive"));
        }
        let fan_in = filter_size * filter_size * in_channels;
        let len = filter_size * filter_size * out_channels * in_channels;
        Ok(Layer::Deconv(DeconvLayer {
            filters: Tensor::new(
                vec![filter_size, filter_size, out_channels, in_channels],
                init_uniform(rng, fan_in, len),
            )?,
            bias: Tensor::zeros(vec![out_channels])?,
            activation,
        }))
    }

    /// Output shape for a given input shape, or a shape error naming `index`.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let fail = |msg: String| Err(Error::shape(format!("layer {index}: {msg}")));
        match self {
            Layer::Dense(d) => {
                let inputs = d.weights.shape()[0];
                if input != [inputs] {
                    return fail(format!("dense expects rank-1 input of length {inputs}, got {input:?}"));
                }
                Ok(vec![d.weights.shape()[1]])
            }
            Layer::Conv(c) => {
                let [f, _, fc, k] = [
                    c.filters.shape()[0],
                    c.filters.shape()[1],
                    c.filters.shape()[2],
                    c.filters.shape()[3],
                ];
                match input {
                    [h, w, ch] if *ch == fc && f <= *h && f <= *w => Ok(vec![h - f + 1, w - f + 1, k]),
                    _ => fail(format!(
                        "conv with filters {:?} cannot take input {input:?}",
                        c.filters.shape()
                    )),
                }
            }
            Layer::Deconv(d) => {
                let [f, _, c_out, k_in] = [
                    d.filters.shape()[0],
                    d.filters.shape()[1],
                    d.filters.shape()[2],
                    d.filters.shape()[3],
                ];
                match input {
                    [h, w, ch] if *ch == k_in => Ok(vec![h + f - 1, w + f - 1, c_out]),
                    _ => fail(format!(
                        "deconv with filters {:?} cannot take input {input:?}",
                        d.filters.shape()
                    )),
                }
            }
            Layer::MaxPool => match input {
                [h, w, _] if *h < 2 || *w < 2 => fail("2x2 pool would reduce a dimension to zero".into()),
                [h, w, c] if h % 2 == 0 && w % 2 == 0 => Ok(vec![h / 2, w / 2, *c]),
                [_, _, _] => fail("2x2 pool requires even grid dimensions".into()),
                _ => fail(format!("pool expects rank-3 input, got {input:?}")),
            },
            Layer::MaxUnpool { .. } => match input {
                [h, w, c] => Ok(vec![h * 2, w * 2, *c]),
                _ => fail(format!("unpool expects rank-3 input, got {input:?}")),
            },
            Layer::Unroll => match input {
                [h, w, c] => Ok(vec![h * w * c]),
                _ => fail(format!("unroll expects rank-3 input, got {input:?}")),
            },
            Layer::Roll { shape } => {
                let need: usize = shape.iter().product();
                match input {
                    [n] if *n == need => Ok(shape.to_vec()),
                    _ => fail(format!("roll to {shape:?} needs rank-1 input of length {need}, got {input:?}")),
                }
            }
        }
    }

    pub fn param_len(&self) -> usize {
        match self {
            Layer::Dense(d) => d.weights.len() + d.bias.len(),
            Layer::Conv(c) => c.filters.len() + c.bias.len(),
            Layer::Deconv(d) => d.filters.len() + d.bias.len(),
            _ => 0,
        }
    }
}

/// Gradient of the loss with respect to one layer's parameters.
#[derive(Debug, Clone)]
pub enum LayerGradient {
    Dense { weights: Tensor, bias: Tensor },
    Conv { filters: Tensor, bias: Tensor },
    Deconv { filters: Tensor, bias: Tensor },
    None,
}

/// Result of one forward pass through a layer.
pub(crate) struct LayerForward {
    pub output: Tensor,
    /// For MaxPool: flat index into the layer *input* chosen for each output element.
    pub pool_argmax: Option<Vec<usize>>,
}

pub(crate) fn layer_forward(
    layer: &Layer,
    index: usize,
    input: &Tensor,
    pool_indices: &[Option<Vec<usize>>],
) -> Result<LayerForward> {
    let out = match layer {
        Layer::Dense(d) => {
            let w = d.weights.shape();
            let (n_in, n_out) = (w[0], w[1]);
            let x = input.data();
            let mut z = d.bias.data().to_vec();
            for i in 0..n_in {
                let xi = x[i];
                if xi == 0.0 {
                    continue;
                }
                let wrow = d.weights.row(i);
                for o in 0..n_out {
                    z[o] += xi * wrow[o];
                }
            }
            for v in &mut z {
                *v = d.activation.apply(*v);
            }
            LayerForward { output: Tensor::from_vec(z)?, pool_argmax: None }
        }
        Layer::Conv(c) => {
            let mut out = crate::tensor::conv2d_valid(input, &c.filters)?;
            let k = c.bias.len();
            let data = out.data_mut();
            for (i, v) in data.iter_mut().enumerate() {
                *v = c.activation.apply(*v + c.bias.data()[i % k]);
            }
            LayerForward { output: out, pool_argmax: None }
        }
        Layer::Deconv(d) => {
            let [h, w, k_in] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let fs = d.filters.shape();
            let (f, c_out) = (fs[0], fs[2]);
            let (oh, ow) = (h + f - 1, w + f - 1);
            let mut out = vec![0.0; oh * ow * c_out];
            for i in 0..h {
                for j in 0..w {
                    for kk in 0..k_in {
                        let x = input.at3(i, j, kk);
                        if x == 0.0 {
                            continue;
                        }
                        for u in 0..f {
                            for v in 0..f {
                                let o_base = ((i + u) * ow + (j + v)) * c_out;
                                for cc in 0..c_out {
                                    out[o_base + cc] += x * d.filters.at4(u, v, cc, kk);
                                }
                            }
                        }
                    }
                }
            }
            for (i, v) in out.iter_mut().enumerate() {
                *v = d.activation.apply(*v + d.bias.data()[i % c_out]);
            }
            LayerForward { output: Tensor::new(vec![oh, ow, c_out], out)?, pool_argmax: None }
        }
        Layer::MaxPool => {
            let [h, w, c] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let (oh, ow) = (h / 2, w / 2);
            let mut out = vec![0.0; oh * ow * c];
            let mut argmax = vec![0usize; oh * ow * c];
            for i in 0..oh {
                for j in 0..ow {
                    for k in 0..c {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_idx = 0;
                        for du in 0..2 {
                            for dv in 0..2 {
                                let (r, s) = (2 * i + du, 2 * j + dv);
                                let idx = (r * w + s) * c + k;
                                let v = input.data()[idx];
                                if v > best {
                                    best = v;
                                    best_idx = idx;
                                }
                            }
                        }
                        let o = (i * ow + j) * c + k;
                        out[o] = best;
                        argmax[o] = best_idx;
                    }
                }
            }
            LayerForward {
                output: Tensor::new(vec![oh, ow, c], out)?,
                pool_argmax: Some(argmax),
            }
        }
        Layer::MaxUnpool { pair } => {
            let [h, w, c] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let (oh, ow) = (h * 2, w * 2);
            let mut out = vec![0.0; oh * ow * c];
            let recorded = pair.and_then(|p| pool_indices.get(p).and_then(|v| v.as_ref()));
            for i in 0..h {
                for j in 0..w {
                    for k in 0..c {
                        let in_idx = (i * w + j) * c + k;
                        let out_idx = match recorded {
                            Some(indices) => indices[in_idx],
                            None => ((2 * i) * ow + 2 * j) * c + k,
                        };
                        out[out_idx] = input.data()[in_idx];
                    }
                }
            }
            LayerForward { output: Tensor::new(vec![oh, ow, c], out)?, pool_argmax: None }
        }
        Layer::Unroll => LayerForward { output: unroll(input)?, pool_argmax: None },
        Layer::Roll { shape } => LayerForward { output: roll(input, *shape)?, pool_argmax: None },
    };
    // Shape errors in the kernels above would lack the layer index; validation
    // at construction means they only fire on internal inconsistencies.
    let _ = index;
    Ok(out)
}

/// One backward step: given dL/doutput, produce the parameter gradient and
/// dL/dinput. `output` is this layer's activation output from the forward
/// pass, `input` its input.
pub(crate) fn layer_backward(
    layer: &Layer,
    input: &Tensor,
    output: &Tensor,
    delta_out: &[f64],
    pool_argmax: Option<&Vec<usize>>,
    pool_indices: &[Option<Vec<usize>>],
) -> Result<(LayerGradient, Vec<f64>)> {
    match layer {
        Layer::Dense(d) => {
            let w = d.weights.shape();
            let (n_in, n_out) = (w[0], w[1]);
            let dz: Vec<f64> = delta_out
                .iter()
                .zip(output.data())
                .map(|(g, y)| g * d.activation.derivative_from_output(*y))
                .collect();
            let mut dw = vec![0.0; n_in * n_out];
            let mut dx = vec![0.0; n_in];
            for i in 0..n_in {
                let xi = input.data()[i];
                let wrow = d.weights.row(i);
                let dwrow = &mut dw[i * n_out..(i + 1) * n_out];
                let mut acc = 0.0;
                for o in 0..n_out {
                    dwrow[o] = xi * dz[o];
                    acc += wrow[o] * dz[o];
                }
                dx[i] = acc;
            }
            Ok((
                LayerGradient::Dense {
                    weights: Tensor::new(vec![n_in, n_out], dw)?,
                    bias: Tensor::from_vec(dz)?,
                },
                dx,
            ))
        }
        Layer::Conv(c) => {
            let [h, w, ch] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let fs = c.filters.shape();
            let (f, k) = (fs[0], fs[3]);
            let (oh, ow) = (h - f + 1, w - f + 1);
            let dz: Vec<f64> = delta_out
                .iter()
                .zip(output.data())
                .map(|(g, y)| g * c.activation.derivative_from_output(*y))
                .collect();
            let mut dfilters = vec![0.0; f * f * ch * k];
            let mut dbias = vec![0.0; k];
            let mut dx = vec![0.0; h * w * ch];
            for i in 0..oh {
                for j in 0..ow {
                    let dz_base = (i * ow + j) * k;
                    for kk in 0..k {
                        dbias[kk] += dz[dz_base + kk];
                    }
                    for u in 0..f {
                        for v in 0..f {
                            let in_base = ((i + u) * w + (j + v)) * ch;
                            for cc in 0..ch {
                                let x = input.data()[in_base + cc];
                                let f_base = ((u * f + v) * ch + cc) * k;
                                let mut acc = 0.0;
                                for kk in 0..k {
                                    let g = dz[dz_base + kk];
                                    dfilters[f_base + kk] += x * g;
                                    acc += c.filters.data()[f_base + kk] * g;
                                }
                                dx[in_base + cc] += acc;
                            }
                        }
                    }
                }
            }
            Ok((
                LayerGradient::Conv {
                    filters: Tensor::new(vec![f, f, ch, k], dfilters)?,
                    bias: Tensor::from_vec(dbias)?,
                },
                dx,
            ))
        }
        Layer::Deconv(d) => {
            let [h, w, k_in] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let fs = d.filters.shape();
            let (f, c_out) = (fs[0], fs[2]);
            let ow = w + f - 1;
            let dz: Vec<f64> = delta_out
                .iter()
                .zip(output.data())
                .map(|(g, y)| g * d.activation.derivative_from_output(*y))
                .collect();
            let mut dfilters = vec![0.0; f * f * c_out * k_in];
            let mut dbias = vec![0.0; c_out];
            let mut dx = vec![0.0; h * w * k_in];
            for (idx, g) in dz.iter().enumerate() {
                dbias[idx % c_out] += g;
            }
            for i in 0..h {
                for j in 0..w {
                    for kk in 0..k_in {
                        let x = input.at3(i, j, kk);
                        let mut acc = 0.0;
                        for u in 0..f {
                            for v in 0..f {
                                let dz_base = ((i + u) * ow + (j + v)) * c_out;
                                for cc in 0..c_out {
                                    let g = dz[dz_base + cc];
                                    let fi = ((u * f + v) * c_out + cc) * k_in + kk;
                                    dfilters[fi] += x * g;
                                    acc += d.filters.data()[fi] * g;
                                }
                            }
                        }
                        dx[(i * w + j) * k_in + kk] = acc;
                    }
                }
            }
            Ok((
                LayerGradient::Deconv {
                    filters: Tensor::new(vec![f, f, c_out, k_in], dfilters)?,
                    bias: Tensor::from_vec(dbias)?,
                },
                dx,
            ))
        }
        Layer::MaxPool => {
            let argmax = pool_argmax.expect("pool indices recorded in forward pass");
            let mut dx = vec![0.0; input.len()];
            for (o, &src) in argmax.iter().enumerate() {
                dx[src] += delta_out[o];
            }
            Ok((LayerGradient::None, dx))
        }
        Layer::MaxUnpool { pair } => {
            let [h, w, c] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let ow = w * 2;
            let recorded = pair.and_then(|p| pool_indices.get(p).and_then(|v| v.as_ref()));
            let mut dx = vec![0.0; input.len()];
            for i in 0..h {
                for j in 0..w {
                    for k in 0..c {
                        let in_idx = (i * w + j) * c + k;
                        let out_idx = match recorded {
                            Some(indices) => indices[in_idx],
                            None => ((2 * i) * ow + 2 * j) * c + k,
                        };
                        dx[in_idx] = delta_out[out_idx];
                    }
                }
            }
            Ok((LayerGradient::None, dx))
        }
        Layer::Unroll => {
            let [h, w, c] = [input.shape()[0], input.shape()[1], input.shape()[2]];
            let grad = Tensor::new(vec![h * w * c], delta_out.to_vec())?;
            Ok((LayerGradient::None, roll(&grad, [h, w, c])?.data().to_vec()))
        }
        Layer::Roll { shape } => {
            let grad = Tensor::new(shape.to_vec(), delta_out.to_vec())?;
            Ok((LayerGradient::None, unroll(&grad)?.data().to_vec()))
        }
    }
}
