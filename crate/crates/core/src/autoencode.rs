//! Bottleneck autoencoders: fully-connected for vectors, convolutional for
//! image-like grids. The decoder always mirrors the encoder layer for layer,
//! and the encoder half is what downstream stages keep as the embedding
//! function.

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::{sgd_train, Activation, Layer, Loss, Network, TrainConfig};
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Fully-connected autoencoder description. `hidden` lists the encoder's
/// hidden sizes before the bottleneck; the decoder mirrors them back.
#[derive(Debug, Clone)]
pub struct DenseAeSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub bottleneck: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// One encoder stage of a convolutional autoencoder: a square convolution
/// with `filters` output channels, optionally followed by a 2x2 max-pool.
#[derive(Debug, Clone)]
pub struct ConvStage {
    pub filter_size: usize,
    pub filters: usize,
    pub pool: bool,
}

/// Convolutional autoencoder description. The encoder runs the stages, then
/// unrolls the final feature map into a dense layer down to `bottleneck`; the
/// decoder mirrors everything with transposed convolutions and max-unpooling.
#[derive(Debug, Clone)]
pub struct ConvAeSpec {
    pub input_shape: [usize; 3],
    pub stages: Vec<ConvStage>,
    pub bottleneck: usize,
    pub activation: Activation,
    pub output_activation: Activation,
}

/// Architecture of an undercomplete autoencoder (bottleneck strictly smaller
/// than the input dimension).
#[derive(Debug, Clone)]
pub enum AutoencoderSpec {
    Dense(DenseAeSpec),
    Conv(ConvAeSpec),
}

impl ConvAeSpec {
    /// The default test-scale architecture: 3x3 filters, 4 then 8 channels,
    /// one pool after the first stage.
    pub fn default_for(input_shape: [usize; 3], bottleneck: usize) -> ConvAeSpec {
        ConvAeSpec {
            input_shape,
            stages: vec![
                ConvStage { filter_size: 3, filters: 4, pool: true },
                ConvStage { filter_size: 3, filters: 8, pool: false },
            ],
            bottleneck,
            activation: Activation::Tanh,
            output_activation: Activation::Identity,
        }
    }

    /// Shape of the feature map after every stage.
    fn stage_shapes(&self) -> Result<Vec<[usize; 3]>> {
        let [mut h, mut w, _] = self.input_shape;
        let mut shapes = Vec::new();
        for (i, stage) in self.stages.iter().enumerate() {
            if stage.filter_size == 0 || stage.filters == 0 {
                return Err(Error::argument(format!("stage {i}: filter size and count must be positive")));
            }
            if stage.filter_size > h || stage.filter_size > w {
                return Err(Error::shape(format!(
                    "stage {i}: {0}x{0} filter larger than {h}x{w} map",
                    stage.filter_size
                )));
            }
            h = h - stage.filter_size + 1;
            w = w - stage.filter_size + 1;
            if stage.pool {
                if h < 2 || w < 2 {
                    return Err(Error::shape(format!("stage {i}: pooling reduces a dimension to zero")));
                }
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::shape(format!("stage {i}: pooling needs even dimensions, map is {h}x{w}")));
                }
                h /= 2;
                w /= 2;
            }
            shapes.push([h, w, stage.filters]);
        }
        Ok(shapes)
    }
}

/// Builds the composed (encoder + decoder) network for a spec and returns it
/// with the index of the first decoder layer.
pub fn build_autoencoder(spec: &AutoencoderSpec, seed: u64) -> Result<(Network, usize)> {
    let mut rng = SeededRng::new(seed);
    match spec {
        AutoencoderSpec::Dense(d) => {
            if d.bottleneck >= d.input_dim {
                return Err(Error::argument(format!(
                    "bottleneck {} must be strictly smaller than the input dimension {}",
                    d.bottleneck, d.input_dim
                )));
            }
            if d.bottleneck == 0 || d.hidden.iter().any(|&h| h == 0) {
                return Err(Error::argument("layer sizes must be positive"));
            }
            let mut layers = Vec::new();
            let mut widths = vec![d.input_dim];
            widths.extend_from_slice(&d.hidden);
            widths.push(d.bottleneck);
            for pair in widths.windows(2) {
                layers.push(Layer::dense(pair[0], pair[1], d.hidden_activation, &mut rng)?);
            }
            let split = layers.len();
            let mut mirrored: Vec<usize> = widths.clone();
            mirrored.reverse();
            for (i, pair) in mirrored.windows(2).enumerate() {
                let act = if i + 2 == mirrored.len() { d.output_activation } else { d.hidden_activation };
                layers.push(Layer::dense(pair[0], pair[1], act, &mut rng)?);
            }
            let net = Network::new(vec![d.input_dim], layers, Loss::SquaredError)?;
            Ok((net, split))
        }
        AutoencoderSpec::Conv(c) => {
            let flat_input: usize = c.input_shape.iter().product();
            if c.bottleneck >= flat_input {
                return Err(Error::argument(format!(
                    "bottleneck {} must be strictly smaller than the input size {flat_input}",
                    c.bottleneck
                )));
            }
            if c.bottleneck == 0 || c.stages.is_empty() {
                return Err(Error::argument("conv autoencoder needs a positive bottleneck and at least one stage"));
            }
            let shapes = c.stage_shapes()?;
            let last = *shapes.last().unwrap();
            let flat = last[0] * last[1] * last[2];

            let mut layers = Vec::new();
            let mut pool_layer_index = Vec::new(); // per stage: Some(composed layer index)
            let mut in_ch = c.input_shape[2];
            for stage in &c.stages {
                layers.push(Layer::conv(stage.filter_size, in_ch, stage.filters, c.activation, &mut rng)?);
                if stage.pool {
                    pool_layer_index.push(Some(layers.len()));
                    layers.push(Layer::MaxPool);
                } else {
                    pool_layer_index.push(None);
                }
                in_ch = stage.filters;
            }
            layers.push(Layer::Unroll);
            layers.push(Layer::dense(flat, c.bottleneck, c.activation, &mut rng)?);
            let split = layers.len();

            layers.push(Layer::dense(c.bottleneck, flat, c.activation, &mut rng)?);
            layers.push(Layer::Roll { shape: last });
            for (i, stage) in c.stages.iter().enumerate().rev() {
                if stage.pool {
                    layers.push(Layer::MaxUnpool { pair: pool_layer_index[i] });
                }
                let out_ch = if i == 0 { c.input_shape[2] } else { c.stages[i - 1].filters };
                let act = if i == 0 { c.output_activation } else { c.activation };
                layers.push(Layer::deconv(stage.filter_size, stage.filters, out_ch, act, &mut rng)?);
            }
            let net = Network::new(c.input_shape.to_vec(), layers, Loss::SquaredError)?;
            Ok((net, split))
        }
    }
}

/// Trains a fully-connected autoencoder on `n x p` data and returns the
/// encoder, the decoder and the per-epoch mean reconstruction error.
pub fn ae_fit(x: &Tensor, spec: &AutoencoderSpec, cfg: &TrainConfig) -> Result<(Network, Network, Vec<f64>)> {
    let dense = match spec {
        AutoencoderSpec::Dense(d) => d,
        AutoencoderSpec::Conv(_) => return Err(Error::argument("ae_fit expects a dense spec; use conv_ae_fit")),
    };
    if x.rank() != 2 || x.shape()[1] != dense.input_dim {
        return Err(Error::shape(format!(
            "data shape {:?} does not match input dimension {}",
            x.shape(),
            dense.input_dim
        )));
    }
    let rows: Vec<Tensor> = (0..x.shape()[0])
        .map(|i| Tensor::from_vec(x.row(i).to_vec()))
        .collect::<Result<_>>()?;
    let (net, split) = build_autoencoder(spec, cfg.seed)?;
    let (trained, history) = sgd_train(&net, &rows, &rows, cfg)?;
    let (encoder, decoder) = trained.split_at(split, Loss::SquaredError, Loss::SquaredError)?;
    Ok((encoder, decoder, history))
}

/// Trains a convolutional autoencoder on same-shaped grids (images or data
/// cuboids) against themselves.
pub fn conv_ae_fit(
    images: &[Tensor],
    spec: &AutoencoderSpec,
    cfg: &TrainConfig,
) -> Result<(Network, Network, Vec<f64>)> {
    let conv = match spec {
        AutoencoderSpec::Conv(c) => c,
        AutoencoderSpec::Dense(_) => return Err(Error::argument("conv_ae_fit expects a conv spec; use ae_fit")),
    };
    if images.is_empty() {
        return Err(Error::argument("conv_ae_fit: empty dataset"));
    }
    for (i, img) in images.iter().enumerate() {
        if img.shape() != conv.input_shape {
            return Err(Error::shape(format!(
                "image {i} has shape {:?}, expected {:?}",
                img.shape(),
                conv.input_shape
            )));
        }
    }
    let (net, split) = build_autoencoder(spec, cfg.seed)?;
    let (trained, history) = sgd_train(&net, images, images, cfg)?;
    let (encoder, decoder) = trained.split_at(split, Loss::SquaredError, Loss::SquaredError)?;
    Ok((encoder, decoder, history))
}

/// Runs the encoder over a batch and collects the embeddings into a table.
/// Ids default to the position in the batch; failures name the item id.
pub fn encode_batch(encoder: &Network, inputs: &[Tensor], ids: Option<&[String]>) -> Result<EmbeddingTable> {
    let dim: usize = encoder.output_shape().iter().product();
    let mut table = EmbeddingTable::new(dim)?;
    if let Some(ids) = ids {
        if ids.len() != inputs.len() {
            return Err(Error::argument(format!(
                "{} ids for {} inputs",
                ids.len(),
                inputs.len()
            )));
        }
    }
    for (i, x) in inputs.iter().enumerate() {
        let id = match ids {
            Some(ids) => ids[i].clone(),
            None => i.to_string(),
        };
        let emb = encoder
            .extract_embedding(encoder.layers().len() - 1, x)
            .map_err(|e| Error::argument(format!("item {id:?}: {e}")))?;
        table.insert(id, emb.data().to_vec())?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dense_spec(p: usize, l: usize) -> AutoencoderSpec {
        AutoencoderSpec::Dense(DenseAeSpec {
            input_dim: p,
            hidden: vec![],
            bottleneck: l,
            hidden_activation: Activation::Identity,
            output_activation: Activation::Identity,
        })
    }

    #[test]
    fn bottleneck_must_be_undercomplete() {
        let x = Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let cfg = TrainConfig::new(0.1, 1, 1, 0).unwrap();
        assert!(ae_fit(&x, &dense_spec(2, 2), &cfg).is_err());
        assert!(ae_fit(&x, &dense_spec(2, 3), &cfg).is_err());
    }

    #[test]
    fn one_dimensional_subspace_is_learned() {
        // Data on a line through the origin: a linear 1-bottleneck AE can
        // reconstruct it exactly, so the loss should collapse.
        let dir = [0.6, 0.8];
        let rows: Vec<Vec<f64>> = (-10..=10)
            .map(|i| dir.iter().map(|d| d * i as f64 / 10.0).collect())
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let cfg = TrainConfig::new(0.05, 600, rows.len(), 3).unwrap();
        let (_, _, history) = ae_fit(&x, &dense_spec(2, 1), &cfg).unwrap();
        let (first, last) = (history[0], *history.last().unwrap());
        assert!(last < 1e-4 * first.max(1.0), "loss went {first} -> {last}");
    }

    #[test]
    fn ae_fit_is_seed_deterministic() {
        let rows: Vec<Vec<f64>> = (0..12)
            .map(|i| vec![(i as f64).sin(), (i as f64).cos(), i as f64 / 12.0])
            .collect();
        let x = Tensor::from_rows(&rows).unwrap();
        let cfg = TrainConfig::new(0.05, 15, 4, 9).unwrap();
        let (enc1, _, h1) = ae_fit(&x, &dense_spec(3, 2), &cfg).unwrap();
        let (enc2, _, h2) = ae_fit(&x, &dense_spec(3, 2), &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(enc1.params_flat(), enc2.params_flat());
    }

    #[test]
    fn conv_roundtrip_preserves_shape_untrained() {
        let spec = AutoencoderSpec::Conv(ConvAeSpec::default_for([16, 16, 1], 8));
        let (net, split) = build_autoencoder(&spec, 1).unwrap();
        assert_eq!(net.output_shape(), &[16, 16, 1]);
        assert_eq!(net.layer_output_shape(split - 1), &[8]);
        let mut rng = SeededRng::new(2);
        let img = Tensor::new(vec![16, 16, 1], (0..256).map(|_| rng.next_f64()).collect()).unwrap();
        let out = net.predict(&img).unwrap();
        assert_eq!(out.shape(), img.shape());
    }

    #[test]
    fn encode_batch_contract() {
        let spec = dense_spec(3, 2);
        let (net, split) = build_autoencoder(&spec, 5).unwrap();
        let (encoder, _) = net.split_at(split, Loss::SquaredError, Loss::SquaredError).unwrap();

        let empty = encode_batch(&encoder, &[], None).unwrap();
        assert_eq!(empty.len(), 0);
        assert_eq!(empty.dimension(), 2);

        let x = Tensor::from_vec(vec![1.0, -1.0, 0.5]).unwrap();
        let table = encode_batch(&encoder, &[x.clone(), x.clone()], None).unwrap();
        assert_eq!(table.get("0"), table.get("1"));
        assert_eq!(table.get("0").unwrap().len(), 2);
    }
}
