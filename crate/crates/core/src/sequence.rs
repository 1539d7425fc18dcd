//! Simple recurrent networks over variable-length sequences.
//!
//! The hidden state update is `h_t = g_h(x_t Wx + bx + h_{t-1} Wh + bh)` with
//! `h_0 = 0`, and the per-step output is `o_t = g_o(h_t Wo + bo)`. The
//! sequence embedding is the final hidden state `h_T`, which has a fixed
//! length regardless of how long the sequence is. Many-to-one training
//! backpropagates through time with the loss applied to `o_T` only.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::nn::{Activation, Loss};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// The six trainable tensors of the recurrent cell plus its activations.
#[derive(Debug, Clone)]
pub struct RnnParams {
    /// `p x l` input map.
    pub wx: Tensor,
    pub bx: Tensor,
    /// `l x l` recurrence.
    pub wh: Tensor,
    pub bh: Tensor,
    /// `l x j_o` output map.
    pub wo: Tensor,
    pub bo: Tensor,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

impl RnnParams {
    /// Fresh parameters with uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`
    /// weights and zero biases.
    pub fn new(
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut SeededRng,
    ) -> Result<Self> {
        if input_dim == 0 || hidden_dim == 0 || output_dim == 0 {
            return Err(Error::argument("rnn dimensions must be positive"));
        }
        let init = |rng: &mut SeededRng, fan_in: usize, len: usize| -> Vec<f64> {
            let b = 1.0 / (fan_in as f64).sqrt();
            (0..len).map(|_| rng.uniform(-b, b)).collect()
        };
        Ok(RnnParams {
            wx: Tensor::new(vec![input_dim, hidden_dim], init(rng, input_dim, input_dim * hidden_dim))?,
            bx: Tensor::zeros(vec![hidden_dim])?,
            wh: Tensor::new(vec![hidden_dim, hidden_dim], init(rng, hidden_dim, hidden_dim * hidden_dim))?,
            bh: Tensor::zeros(vec![hidden_dim])?,
            wo: Tensor::new(vec![hidden_dim, output_dim], init(rng, hidden_dim, hidden_dim * output_dim))?,
            bo: Tensor::zeros(vec![output_dim])?,
            hidden_activation,
            output_activation,
        })
    }

    /// Wraps explicit tensors, checking the six shapes against each other.
    #[allow(clippy::too_many_arguments)]
    pub fn from_tensors(
        wx: Tensor,
        bx: Tensor,
        wh: Tensor,
        bh: Tensor,
        wo: Tensor,
        bo: Tensor,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Result<Self> {
        let ok = wx.rank() == 2
            && wh.rank() == 2
            && wo.rank() == 2
            && wh.shape() == [wx.shape()[1], wx.shape()[1]]
            && wo.shape()[0] == wx.shape()[1]
            && bx.shape() == [wx.shape()[1]]
            && bh.shape() == [wx.shape()[1]]
            && bo.shape() == [wo.shape()[1]];
        if !ok {
            return Err(Error::shape(format!(
                "inconsistent rnn parameter shapes: wx {:?} bx {:?} wh {:?} bh {:?} wo {:?} bo {:?}",
                wx.shape(),
                bx.shape(),
                wh.shape(),
                bh.shape(),
                wo.shape(),
                bo.shape()
            )));
        }
        Ok(RnnParams { wx, bx, wh, bh, wo, bo, hidden_activation, output_activation })
    }

    pub fn input_dim(&self) -> usize {
        self.wx.shape()[0]
    }

    pub fn hidden_dim(&self) -> usize {
        self.wx.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.wo.shape()[1]
    }

    fn tensors(&self) -> [&Tensor; 6] {
        [&self.wx, &self.bx, &self.wh, &self.bh, &self.wo, &self.bo]
    }

    fn tensors_mut(&mut self) -> [&mut Tensor; 6] {
        [&mut self.wx, &mut self.bx, &mut self.wh, &mut self.bh, &mut self.wo, &mut self.bo]
    }

    pub fn param_len(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Parameters flattened in the fixed order wx, bx, wh, bh, wo, bo.
    pub fn params_flat(&self) -> Vec<f64> {
        self.tensors().iter().flat_map(|t| t.data().iter().copied()).collect()
    }

    pub fn set_params_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.param_len() {
            return Err(Error::argument(format!(
                "expected {} parameters, got {}",
                self.param_len(),
                values.len()
            )));
        }
        let mut at = 0;
        for t in self.tensors_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&values[at..at + n]);
            at += n;
        }
        Ok(())
    }
}

/// A variable-length sequence of equal-length step vectors (`T >= 1`).
#[derive(Debug, Clone, PartialEq)]
pub struct Sequence {
    steps: Vec<Vec<f64>>,
}

impl Sequence {
    pub fn new(steps: Vec<Vec<f64>>) -> Result<Self> {
        if steps.is_empty() {
            return Err(Error::argument("sequence must have at least one step"));
        }
        let p = steps[0].len();
        if p == 0 || steps.iter().any(|s| s.len() != p) {
            return Err(Error::shape("sequence steps must all have the same positive length"));
        }
        if steps.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::domain("non-finite value in sequence"));
        }
        Ok(Sequence { steps })
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        false // T >= 1 by construction
    }

    pub fn dim(&self) -> usize {
        self.steps[0].len()
    }

    pub fn steps(&self) -> &[Vec<f64>] {
        &self.steps
    }

    /// Drops every step after the first `t` (used to check that the past does
    /// not depend on the future).
    pub fn truncated(&self, t: usize) -> Result<Sequence> {
        Sequence::new(self.steps[..t.min(self.len())].to_vec())
    }
}

fn affine(x: &[f64], w: &Tensor, bias: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    debug_assert_eq!(x.len(), rows);
    let mut out = bias.to_vec();
    for r in 0..rows {
        let xr = x[r];
        if xr == 0.0 {
            continue;
        }
        let wrow = w.row(r);
        for c in 0..cols {
            out[c] += xr * wrow[c];
        }
    }
    out
}

/// One state update: `h_t = g_h(x_t Wx + bx + h_prev Wh + bh)`.
pub fn rnn_step(x_t: &[f64], h_prev: &[f64], params: &RnnParams) -> Result<Vec<f64>> {
    if x_t.len() != params.input_dim() {
        return Err(Error::shape(format!(
            "step has length {}, rnn expects {}",
            x_t.len(),
            params.input_dim()
        )));
    }
    if h_prev.len() != params.hidden_dim() {
        return Err(Error::shape(format!(
            "hidden state has length {}, rnn expects {}",
            h_prev.len(),
            params.hidden_dim()
        )));
    }
    let mut z = affine(x_t, &params.wx, params.bx.data());
    let mem = affine(h_prev, &params.wh, params.bh.data());
    for (zv, m) in z.iter_mut().zip(mem) {
        *zv = params.hidden_activation.apply(*zv + m);
    }
    Ok(z)
}

/// Runs the cell over a whole sequence from `h0`, returning every hidden
/// state and every output `o_t = g_o(h_t Wo + bo)`.
pub fn rnn_forward(
    seq: &Sequence,
    params: &RnnParams,
    h0: &[f64],
) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut hidden = Vec::with_capacity(seq.len());
    let mut outputs = Vec::with_capacity(seq.len());
    let mut h = h0.to_vec();
    for step in seq.steps() {
        h = rnn_step(step, &h, params)?;
        let mut o = affine(&h, &params.wo, params.bo.data());
        for v in &mut o {
            *v = params.output_activation.apply(*v);
        }
        hidden.push(h.clone());
        outputs.push(o);
    }
    Ok((hidden, outputs))
}

/// The sequence embedding: `h_T` with a zero initial state. Fixed length
/// regardless of the sequence length.
pub fn sequence_embed(seq: &Sequence, params: &RnnParams) -> Result<Vec<f64>> {
    let h0 = vec![0.0; params.hidden_dim()];
    let (hidden, _) = rnn_forward(seq, params, &h0)?;
    Ok(hidden.into_iter().last().unwrap())
}

/// Gradients for the six parameter tensors, flattened in the same order as
/// [`RnnParams::params_flat`].
#[derive(Debug, Clone)]
pub struct RnnGradients {
    pub wx: Vec<f64>,
    pub bx: Vec<f64>,
    pub wh: Vec<f64>,
    pub bh: Vec<f64>,
    pub wo: Vec<f64>,
    pub bo: Vec<f64>,
}

impl RnnGradients {
    fn zeros(params: &RnnParams) -> Self {
        RnnGradients {
            wx: vec![0.0; params.wx.len()],
            bx: vec![0.0; params.bx.len()],
            wh: vec![0.0; params.wh.len()],
            bh: vec![0.0; params.bh.len()],
            wo: vec![0.0; params.wo.len()],
            bo: vec![0.0; params.bo.len()],
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        [&self.wx, &self.bx, &self.wh, &self.bh, &self.wo, &self.bo]
            .into_iter()
            .flatten()
            .copied()
            .collect()
    }

    fn accumulate(&mut self, other: &RnnGradients) {
        for (mine, theirs) in [
            (&mut self.wx, &other.wx),
            (&mut self.bx, &other.bx),
            (&mut self.wh, &other.wh),
            (&mut self.bh, &other.bh),
            (&mut self.wo, &other.wo),
            (&mut self.bo, &other.bo),
        ] {
            for (a, b) in mine.iter_mut().zip(theirs) {
                *a += b;
            }
        }
    }
}

/// Loss of the final output against a scalar-or-vector target.
pub fn many_to_one_loss(seq: &Sequence, target: &[f64], params: &RnnParams, loss: Loss) -> Result<f64> {
    let h0 = vec![0.0; params.hidden_dim()];
    let (_, outputs) = rnn_forward(seq, params, &h0)?;
    let o_last = outputs.last().unwrap();
    if o_last.len() != target.len() {
        return Err(Error::shape(format!(
            "target has length {}, output has length {}",
            target.len(),
            o_last.len()
        )));
    }
    Ok(loss.value(o_last, target))
}

/// Backpropagation through time for the many-to-one objective (loss on the
/// final output only). Returns the loss value and the parameter gradients.
pub fn bptt(seq: &Sequence, target: &[f64], params: &RnnParams, loss: Loss) -> Result<(f64, RnnGradients)> {
    let (l, j_o) = (params.hidden_dim(), params.output_dim());
    let h0 = vec![0.0; l];
    let (hidden, outputs) = rnn_forward(seq, params, &h0)?;
    let o_last = outputs.last().unwrap();
    if o_last.len() != target.len() {
        return Err(Error::shape(format!(
            "target has length {}, output has length {}",
            target.len(),
            o_last.len()
        )));
    }
    let loss_value = loss.value(o_last, target);
    let mut grads = RnnGradients::zeros(params);

    // Output layer: delta on the pre-activation of o_T.
    let dz_o: Vec<f64> = loss
        .gradient(o_last, target)
        .iter()
        .zip(o_last)
        .map(|(g, y)| g * params.output_activation.derivative_from_output(*y))
        .collect();
    let h_last = hidden.last().unwrap();
    for r in 0..l {
        for c in 0..j_o {
            grads.wo[r * j_o + c] += h_last[r] * dz_o[c];
        }
    }
    for (b, g) in grads.bo.iter_mut().zip(&dz_o) {
        *b += g;
    }
    // dL/dh_T through the output map.
    let mut dh: Vec<f64> = (0..l).map(|r| crate::tensor::dot(params.wo.row(r), &dz_o)).collect();

    for t in (0..seq.len()).rev() {
        let h_t = &hidden[t];
        let dz: Vec<f64> = dh
            .iter()
            .zip(h_t)
            .map(|(g, y)| g * params.hidden_activation.derivative_from_output(*y))
            .collect();
        let x_t = &seq.steps()[t];
        let p = params.input_dim();
        for r in 0..p {
            let xr = x_t[r];
            if xr != 0.0 {
                for c in 0..l {
                    grads.wx[r * l + c] += xr * dz[c];
                }
            }
        }
        let h_prev: &[f64] = if t == 0 { &h0 } else { &hidden[t - 1] };
        for r in 0..l {
            let hr = h_prev[r];
            if hr != 0.0 {
                for c in 0..l {
                    grads.wh[r * l + c] += hr * dz[c];
                }
            }
        }
        for ((bx, bh), g) in grads.bx.iter_mut().zip(grads.bh.iter_mut()).zip(&dz) {
            *bx += g;
            *bh += g;
        }
        dh = (0..l).map(|r| crate::tensor::dot(params.wh.row(r), &dz)).collect();
    }
    Ok((loss_value, grads))
}

/// Central finite-difference audit of [`bptt`]: worst relative disagreement
/// over all parameters.
pub fn bptt_grad_check(seq: &Sequence, target: &[f64], params: &RnnParams, loss: Loss, epsilon: f64) -> Result<f64> {
    let (_, analytic) = bptt(seq, target, params, loss)?;
    let analytic = analytic.flat();
    let base = params.params_flat();
    let mut probe = params.clone();
    let mut numeric = Vec::with_capacity(base.len());
    let mut values = base.clone();
    for i in 0..base.len() {
        values[i] = base[i] + epsilon;
        probe.set_params_flat(&values)?;
        let up = many_to_one_loss(seq, target, &probe, loss)?;
        values[i] = base[i] - epsilon;
        probe.set_params_flat(&values)?;
        let down = many_to_one_loss(seq, target, &probe, loss)?;
        values[i] = base[i];
        numeric.push((up - down) / (2.0 * epsilon));
    }
    Ok(crate::nn::max_relative_error(&analytic, &numeric))
}

/// Trains a many-to-one RNN. Binary labels use binary cross-entropy with a
/// sigmoid output; real labels use squared error with an identity output.
/// Batches count sequences; each sequence is processed whole, so no padding
/// is ever introduced. Returns the parameters and the per-epoch mean loss
/// (measured after each epoch's updates).
pub fn many_to_one_fit(
    sequences: &[Sequence],
    labels: &[f64],
    cfg: &crate::nn::TrainConfig,
    hidden_dim: usize,
    loss: Loss,
) -> Result<(RnnParams, Vec<f64>)> {
    if sequences.is_empty() {
        return Err(Error::argument("many_to_one_fit: empty dataset"));
    }
    if sequences.len() != labels.len() {
        return Err(Error::argument(format!(
            "{} sequences but {} labels",
            sequences.len(),
            labels.len()
        )));
    }
    let p = sequences[0].dim();
    if sequences.iter().any(|s| s.dim() != p) {
        return Err(Error::shape("sequences must share one step dimension"));
    }
    if loss == Loss::BinaryCrossEntropy && labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::domain("binary cross-entropy labels must be 0 or 1"));
    }
    let output_activation = match loss {
        Loss::BinaryCrossEntropy => Activation::Sigmoid,
        Loss::SquaredError => Activation::Identity,
    };
    let mut rng = SeededRng::new(cfg.seed);
    let mut params = RnnParams::new(p, hidden_dim, 1, Activation::Tanh, output_activation, &mut rng)?;

    let mut order: Vec<usize> = (0..sequences.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        for batch in order.chunks(cfg.batch_size) {
            let mut total: Option<RnnGradients> = None;
            for &idx in batch {
                let (_, grads) = bptt(&sequences[idx], &[labels[idx]], &params, loss)?;
                match &mut total {
                    Some(acc) => acc.accumulate(&grads),
                    None => total = Some(grads),
                }
            }
            let grads = total.expect("non-empty batch");
            let step = cfg.learning_rate / batch.len() as f64;
            let flat = grads.flat();
            let mut values = params.params_flat();
            for (v, g) in values.iter_mut().zip(&flat) {
                *v -= step * g;
            }
            params.set_params_flat(&values)?;
        }
        let mut epoch_loss = 0.0;
        for (seq, label) in sequences.iter().zip(labels) {
            epoch_loss += many_to_one_loss(seq, &[*label], &params, loss)?;
        }
        history.push(epoch_loss / sequences.len() as f64);
    }
    Ok((params, history))
}

/// Fraction of sequences whose final output, thresholded at 0.5, matches the
/// binary label.
pub fn binary_accuracy(sequences: &[Sequence], labels: &[f64], params: &RnnParams) -> Result<f64> {
    let mut correct = 0usize;
    for (seq, label) in sequences.iter().zip(labels) {
        let h0 = vec![0.0; params.hidden_dim()];
        let (_, outputs) = rnn_forward(seq, params, &h0)?;
        let predicted = if outputs.last().unwrap()[0] >= 0.5 { 1.0 } else { 0.0 };
        if predicted == *label {
            correct += 1;
        }
    }
    Ok(correct as f64 / sequences.len() as f64)
}

/// Writes a sequence dataset: one record per line, steps separated by `;`,
/// components by `,`, and an optional trailing `|label`.
pub fn write_sequences(records: &[(Sequence, Option<f64>)]) -> String {
    let mut out = String::new();
    for (seq, label) in records {
        let steps: Vec<String> = seq
            .steps()
            .iter()
            .map(|s| s.iter().map(|v| crate::serial::fmt_f64(*v)).collect::<Vec<_>>().join(","))
            .collect();
        out.push_str(&steps.join(";"));
        if let Some(label) = label {
            let _ = write!(out, "|{}", crate::serial::fmt_f64(*label));
        }
        out.push('\n');
    }
    out
}

/// Parses the sequence dataset format written by [`write_sequences`].
pub fn parse_sequences(text: &str) -> Result<Vec<(Sequence, Option<f64>)>> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let ln = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (body, label) = match line.split_once('|') {
            Some((b, l)) => (b, Some(crate::serial::parse_f64(l.trim(), ln)?)),
            None => (line, None),
        };
        let steps: Vec<Vec<f64>> = body
            .split(';')
            .map(|step| {
                step.split(',')
                    .map(|tok| crate::serial::parse_f64(tok.trim(), ln))
                    .collect::<Result<Vec<f64>>>()
            })
            .collect::<Result<_>>()?;
        let seq = Sequence::new(steps).map_err(|e| Error::parse(ln, e.to_string()))?;
        records.push((seq, label));
    }
    Ok(records)
}
