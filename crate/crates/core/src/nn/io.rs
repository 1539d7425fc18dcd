//! Self-describing text format for trained networks.
//!
//! Layout: a `network` magic line, the loss, the input shape, the layer
//! count, then per layer a header line (kind, shapes, activation) optionally
//! followed by one line of weights and one of biases, each value printed with
//! 17 significant digits so save/load round-trips are exact.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::serial::{join_f64, parse_usize, split_f64};
use crate::tensor::Tensor;

use super::layers::{Activation, ConvLayer, DeconvLayer, DenseLayer, Layer, Loss};
use super::Network;

pub fn save_network(net: &Network) -> String {
    let mut out = String::new();
    out.push_str("network\n");
    let _ = writeln!(out, "loss {}", net.loss_kind().name());
    let _ = writeln!(
        out,
        "input {}",
        net.input_shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(" ")
    );
    let _ = writeln!(out, "layers {}", net.layers().len());
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                let s = d.weights.shape();
                let _ = writeln!(out, "layer dense {} {} {}", s[0], s[1], d.activation.name());
                let _ = writeln!(out, "{}", join_f64(d.weights.data()));
                let _ = writeln!(out, "{}", join_f64(d.bias.data()));
            }
            Layer::Conv(c) => {
                let s = c.filters.shape();
                let _ = writeln!(out, "layer conv {} {} {} {}", s[0], s[2], s[3], c.activation.name());
                let _ = writeln!(out, "{}", join_f64(c.filters.data()));
                let _ = writeln!(out, "{}", join_f64(c.bias.data()));
            }
            Layer::Deconv(d) => {
                let s = d.filters.shape();
                let _ = writeln!(out, "layer deconv {} {} {} {}", s[0], s[3], s[2], d.activation.name());
                let _ = writeln!(out, "{}", join_f64(d.filters.data()));
                let _ = writeln!(out, "{}", join_f64(d.bias.data()));
            }
            Layer::MaxPool => out.push_str("layer maxpool\n"),
            Layer::MaxUnpool { pair } => {
                match pair {
                    Some(p) => {
                        let _ = writeln!(out, "layer maxunpool {p}");
                    }
                    None => out.push_str("layer maxunpool none\n"),
                };
            }
            Layer::Unroll => out.push_str("layer unroll\n"),
            Layer::Roll { shape } => {
                let _ = writeln!(out, "layer roll {} {} {}", shape[0], shape[1], shape[2]);
            }
        }
    }
    out
}

pub fn load_network(text: &str) -> Result<Network> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = || lines.next().ok_or_else(|| Error::parse(0, "unexpected end of network file"));

    let (ln, magic) = next()?;
    if magic.trim() != "network" {
        return Err(Error::parse(ln, "expected magic line \"network\""));
    }
    let (ln, loss_line) = next()?;
    let loss = match loss_line.trim().strip_prefix("loss ") {
        Some(name) => Loss::from_name(name.trim())?,
        None => return Err(Error::parse(ln, "expected \"loss <name>\"")),
    };
    let (ln, input_line) = next()?;
    let input_shape: Vec<usize> = match input_line.trim().strip_prefix("input ") {
        Some(rest) => rest
            .split_whitespace()
            .map(|t| parse_usize(t, ln))
            .collect::<Result<_>>()?,
        None => return Err(Error::parse(ln, "expected \"input <dims>\"")),
    };
    let (ln, count_line) = next()?;
    let n_layers = match count_line.trim().strip_prefix("layers ") {
        Some(rest) => parse_usize(rest.trim(), ln)?,
        None => return Err(Error::parse(ln, "expected \"layers <count>\"")),
    };

    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let (ln, header) = next()?;
        let tokens: Vec<&str> = header.split_whitespace().collect();
        if tokens.first() != Some(&"layer") || tokens.len() < 2 {
            return Err(Error::parse(ln, format!("expected a layer header, got {header:?}")));
        }
        let layer = match tokens[1] {
            "dense" => {
                if tokens.len() != 5 {
                    return Err(Error::parse(ln, "dense header needs: in out activation"));
                }
                let (n_in, n_out) = (parse_usize(tokens[2], ln)?, parse_usize(tokens[3], ln)?);
                let activation = Activation::from_name(tokens[4])?;
                let (wln, wline) = next()?;
                let weights = Tensor::new(vec![n_in, n_out], split_f64(wline, n_in * n_out, wln)?)?;
                let (bln, bline) = next()?;
                let bias = Tensor::new(vec![n_out], split_f64(bline, n_out, bln)?)?;
                Layer::Dense(DenseLayer { weights, bias, activation })
            }
            "conv" | "deconv" => {
                if tokens.len() != 6 {
                    return Err(Error::parse(ln, "conv header needs: f in_ch out_ch activation"));
                }
                let f = parse_usize(tokens[2], ln)?;
                let in_ch = parse_usize(tokens[3], ln)?;
                let out_ch = parse_usize(tokens[4], ln)?;
                let activation = Activation::from_name(tokens[5])?;
                // Filters are stored f x f x C x K with C the conv input
                // channels; a deconv's input channels sit in the K slot.
                let (c, k) = if tokens[1] == "conv" { (in_ch, out_ch) } else { (out_ch, in_ch) };
                let (wln, wline) = next()?;
                let filters = Tensor::new(vec![f, f, c, k], split_f64(wline, f * f * c * k, wln)?)?;
                let (bln, bline) = next()?;
                let bias = Tensor::new(vec![out_ch], split_f64(bline, out_ch, bln)?)?;
                if tokens[1] == "conv" {
                    Layer::Conv(ConvLayer { filters, bias, activation })
                } else {
                    Layer::Deconv(DeconvLayer { filters, bias, activation })
                }
            }
            "maxpool" => Layer::MaxPool,
            "maxunpool" => {
                if tokens.len() != 3 {
                    return Err(Error::parse(ln, "maxunpool header needs a pair index or \"none\""));
                }
                let pair = if tokens[2] == "none" { None } else { Some(parse_usize(tokens[2], ln)?) };
                Layer::MaxUnpool { pair }
            }
            "unroll" => Layer::Unroll,
            "roll" => {
                if tokens.len() != 5 {
                    return Err(Error::parse(ln, "roll header needs three dimensions"));
                }
                Layer::Roll {
                    shape: [
                        parse_usize(tokens[2], ln)?,
                        parse_usize(tokens[3], ln)?,
                        parse_usize(tokens[4], ln)?,
                    ],
                }
            }
            other => return Err(Error::parse(ln, format!("unknown layer kind {other:?}"))),
        };
        layers.push(layer);
    }
    Network::new(input_shape, layers, loss)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;

    #[test]
    fn save_load_roundtrip_is_exact() {
        let mut rng = SeededRng::new(31);
        let net = Network::new(
            vec![6, 6, 1],
            vec![
                Layer::conv(3, 1, 2, Activation::Tanh, &mut rng).unwrap(),
                Layer::MaxPool,
                Layer::Unroll,
                Layer::dense(8, 3, Activation::Identity, &mut rng).unwrap(),
            ],
            Loss::SquaredError,
        )
        .unwrap();
        let text = save_network(&net);
        let back = load_network(&text).unwrap();
        assert_eq!(net.params_flat(), back.params_flat());
        assert_eq!(save_network(&back), text);
    }

    #[test]
    fn load_rejects_garbage_with_line_number() {
        let err = load_network("network\nloss squared-error\ninput 2\nlayers 1\nlayer dense 2 x tanh\n")
            .unwrap_err();
        assert!(err.to_string().contains("line 5"), "{err}");
    }
}
