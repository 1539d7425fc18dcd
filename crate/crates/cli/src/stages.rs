//! Stage schemas and executors: one entry per pipeline stage kind.
//!
//! Every stage reads files, computes through the core library, and writes
//! files; randomness comes from the stage seed (an explicit `seed` key, or
//! derived from the global seed and the stage name), so outputs are pure
//! functions of (inputs, parameters, global seed).

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use ratekit::autoencode::{
    ae_fit, conv_ae_fit, encode_batch, AutoencoderSpec, ConvAeSpec, ConvStage, DenseAeSpec,
};
use ratekit::dimred::{pca_fit, standardize};
use ratekit::embedding::EmbeddingTable;
use ratekit::evaluate::{extrinsic_compare, nearest_neighbors, SplitSpec};
use ratekit::geo::{
    attach_features, crae_embed, crae_fit, default_crae_stages, smoothness_score, span_grid,
    GeoPointSet,
};
use ratekit::glm::{
    assemble_features, glm_fit, glm_predict, DesignMatrix, GlmFamily, GlmModel,
};
use ratekit::nn::{save_network, Activation, Loss, TrainConfig};
use ratekit::pnm::parse_pnm;
use ratekit::sequence::{many_to_one_fit, parse_sequences, sequence_embed};
use ratekit::serial::fmt_f64;
use ratekit::tensor::Tensor;
use ratekit::text::{build_vocab, doc_centroid, tokenize, word2vec_train, Word2VecMode};

use crate::config::{PipelineConfig, StageConfig};
use crate::error::{PipelineError, Result};
use crate::synth;
use crate::tabular::Table;

/// Declarative description of a stage kind used by upfront validation.
pub struct StageSchema {
    pub kind: &'static str,
    pub required: &'static [&'static str],
    pub optional: &'static [&'static str],
    /// Keys whose (comma-separated) values are input paths.
    pub inputs: &'static [&'static str],
    /// Keys whose values are output paths.
    pub outputs: &'static [&'static str],
    /// Extra value-level checks run at validation time.
    pub check: fn(&HashMap<String, String>) -> std::result::Result<(), String>,
}

fn no_check(_: &HashMap<String, String>) -> std::result::Result<(), String> {
    Ok(())
}

fn check_synth(params: &HashMap<String, String>) -> std::result::Result<(), String> {
    let generators = [
        "tabular-latent",
        "marker-sequences",
        "cluster-corpus",
        "square-images",
        "smooth-geo-field",
    ];
    match params.get("generator") {
        Some(g) if generators.contains(&g.as_str()) => Ok(()),
        Some(g) => Err(format!("unknown generator {g:?}")),
        None => Ok(()), // required-key check reports it
    }
}

fn check_family(params: &HashMap<String, String>) -> std::result::Result<(), String> {
    if let Some(kind) = params.get("family") {
        let link = params.get("link").map(String::as_str);
        parse_family(kind, link).map_err(|e| e.to_string())?;
    }
    Ok(())
}

pub const KNOWN_KINDS: &[&str] = &[
    "synth",
    "standardize",
    "pca",
    "ae",
    "conv-ae",
    "word2vec",
    "doc-embed",
    "rnn-embed",
    "crae",
    "assemble",
    "glm-fit",
    "glm-predict",
    "eval-intrinsic",
    "eval-extrinsic",
];

pub fn schema_for(kind: &str) -> Option<&'static StageSchema> {
    const SCHEMAS: &[StageSchema] = &[
        StageSchema {
            kind: "synth",
            required: &["generator", "out"],
            optional: &["n", "p", "noise", "dim", "max-len", "count", "docs", "tokens-per-cluster", "seed"],
            inputs: &[],
            outputs: &["out"],
            check: check_synth,
        },
        StageSchema {
            kind: "standardize",
            required: &["input", "out"],
            optional: &[],
            inputs: &["input"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "pca",
            required: &["input", "components", "out-embeddings"],
            optional: &["out-model"],
            inputs: &["input"],
            outputs: &["out-embeddings", "out-model"],
            check: no_check,
        },
        StageSchema {
            kind: "ae",
            required: &["input", "bottleneck", "out-embeddings"],
            optional: &["hidden", "epochs", "learning-rate", "batch", "seed", "out-encoder"],
            inputs: &["input"],
            outputs: &["out-embeddings", "out-encoder"],
            check: no_check,
        },
        StageSchema {
            kind: "conv-ae",
            required: &["input", "bottleneck", "out-embeddings"],
            optional: &["stages", "epochs", "learning-rate", "batch", "seed", "out-encoder"],
            inputs: &["input"],
            outputs: &["out-embeddings", "out-encoder"],
            check: no_check,
        },
        StageSchema {
            kind: "word2vec",
            required: &["input", "mode", "dimension", "out"],
            optional: &["window", "negatives", "min-count", "epochs", "learning-rate", "seed", "normalize"],
            inputs: &["input"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "doc-embed",
            required: &["corpus", "vectors", "out"],
            optional: &["min-count", "normalize"],
            inputs: &["corpus", "vectors"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "rnn-embed",
            required: &["input", "hidden", "out"],
            optional: &["epochs", "learning-rate", "batch", "seed", "loss"],
            inputs: &["input"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "crae",
            required: &["input", "q", "components", "out-embeddings"],
            optional: &[
                "spacing", "cutoff", "mask", "epochs", "learning-rate", "batch", "seed",
                "out-encoder", "out-report", "neighbors",
            ],
            inputs: &["input"],
            outputs: &["out-embeddings", "out-encoder", "out-report"],
            check: no_check,
        },
        StageSchema {
            kind: "assemble",
            required: &["inputs", "out"],
            optional: &["names"],
            inputs: &["inputs"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "glm-fit",
            required: &["design", "response", "family", "out-model"],
            optional: &["link", "response-column", "out-report"],
            inputs: &["design", "response"],
            outputs: &["out-model", "out-report"],
            check: check_family,
        },
        StageSchema {
            kind: "glm-predict",
            required: &["model", "design", "out"],
            optional: &[],
            inputs: &["model", "design"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "eval-intrinsic",
            required: &["embeddings", "query", "k", "out"],
            optional: &["format"],
            inputs: &["embeddings"],
            outputs: &["out"],
            check: no_check,
        },
        StageSchema {
            kind: "eval-extrinsic",
            required: &["base", "augmented", "response", "family", "out"],
            optional: &["link", "response-column", "train-fraction", "folds", "seed", "format"],
            inputs: &["base", "augmented", "response"],
            outputs: &["out"],
            check: check_family,
        },
    ];
    SCHEMAS.iter().find(|s| s.kind == kind)
}

/// Paths a finished stage read and wrote, for the manifest.
pub struct StageArtifacts {
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
}

fn fnv1a(text: &str) -> u64 {
    let mut hash = 0xcbf2_9ce4_8422_2325u64;
    for b in text.bytes() {
        hash ^= u64::from(b);
        hash = hash.wrapping_mul(0x100_0000_01b3);
    }
    hash
}

/// Stage randomness: an explicit `seed` key wins, otherwise mix the global
/// seed with the stage name.
fn stage_seed(config: &PipelineConfig, stage: &StageConfig) -> Result<u64> {
    match stage.get("seed") {
        Some(raw) => raw.parse().map_err(|_| {
            PipelineError::validation(format!("stage {:?}: bad seed {raw:?}", stage.name))
        }),
        None => Ok(config.seed ^ fnv1a(&stage.name)),
    }
}

fn write_file(path: &Path, content: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(path, content)?;
    Ok(())
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(PipelineError::Io)
}

fn stage_err(stage: &StageConfig, source: ratekit::Error) -> PipelineError {
    PipelineError::Stage { stage: stage.name.clone(), source }
}

fn train_config(stage: &StageConfig, seed: u64, lr: f64, epochs: usize, batch: usize) -> Result<TrainConfig> {
    let lr = stage.parse_or("learning-rate", lr)?;
    let epochs = stage.parse_or("epochs", epochs)?;
    let batch = stage.parse_or("batch", batch)?;
    TrainConfig::new(lr, epochs, batch, seed).map_err(|e| stage_err(stage, e))
}

/// Runs one stage and reports what it touched.
pub fn execute(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    match stage.kind.as_str() {
        "synth" => run_synth(config, stage),
        "standardize" => run_standardize(config, stage),
        "pca" => run_pca(config, stage),
        "ae" => run_ae(config, stage),
        "conv-ae" => run_conv_ae(config, stage),
        "word2vec" => run_word2vec(config, stage),
        "doc-embed" => run_doc_embed(config, stage),
        "rnn-embed" => run_rnn_embed(config, stage),
        "crae" => run_crae(config, stage),
        "assemble" => run_assemble(config, stage),
        "glm-fit" => run_glm_fit(config, stage),
        "glm-predict" => run_glm_predict(config, stage),
        "eval-intrinsic" => run_eval_intrinsic(config, stage),
        "eval-extrinsic" => run_eval_extrinsic(config, stage),
        other => Err(PipelineError::validation(format!("unknown stage kind {other:?}"))),
    }
}

fn run_synth(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let out = config.resolve(stage.require("out")?);
    let seed = stage_seed(config, stage)?;
    match stage.require("generator")? {
        "tabular-latent" => {
            let n = stage.parse_or("n", 2000usize)?;
            let p = stage.parse_or("p", 30usize)?;
            let noise = stage.parse_or("noise", 1.0f64)?;
            let table = synth::tabular_latent(n, p, noise, seed).map_err(|e| stage_err(stage, e))?;
            write_file(&out, &table.to_csv())?;
        }
        "marker-sequences" => {
            let n = stage.parse_or("n", 200usize)?;
            let dim = stage.parse_or("dim", 3usize)?;
            let max_len = stage.parse_or("max-len", 10usize)?;
            write_file(&out, &synth::marker_sequences_text(n, dim, max_len, seed))?;
        }
        "cluster-corpus" => {
            let tokens = stage.parse_or("tokens-per-cluster", 10usize)?;
            let docs = stage.parse_or("docs", 2000usize)?;
            write_file(&out, &synth::cluster_corpus(tokens, docs, seed))?;
        }
        "square-images" => {
            let count = stage.parse_or("count", 60usize)?;
            synth::write_square_images(&out, count, seed).map_err(|e| stage_err(stage, e))?;
        }
        "smooth-geo-field" => {
            let n = stage.parse_or("n", 500usize)?;
            let p = stage.parse_or("p", 4usize)?;
            let noise = stage.parse_or("noise", 0.5f64)?;
            let pts = synth::smooth_geo_field(n, p, noise, seed).map_err(|e| stage_err(stage, e))?;
            write_file(&out, &pts.to_csv())?;
        }
        other => {
            return Err(PipelineError::validation(format!("unknown generator {other:?}")));
        }
    }
    Ok(StageArtifacts { inputs: vec![], outputs: vec![out] })
}

/// Column indices a tabular stage should not treat as features.
fn response_columns(table: &Table) -> Vec<usize> {
    table.column_index("y").into_iter().collect()
}

fn run_standardize(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out = config.resolve(stage.require("out")?);
    let table = Table::from_csv(&read_file(&input)?).map_err(|e| stage_err(stage, e))?;
    let drop = response_columns(&table);
    let features = table.features(&drop).map_err(|e| stage_err(stage, e))?;
    let (scaled, _, _) = standardize(&features).map_err(|e| stage_err(stage, e))?;

    let mut rows = Vec::with_capacity(table.n_rows());
    for i in 0..table.n_rows() {
        let mut row = Vec::with_capacity(table.columns.len());
        let mut at = 0;
        for j in 0..table.columns.len() {
            if drop.contains(&j) {
                row.push(table.rows[i][j]);
            } else {
                row.push(scaled.at2(i, at));
                at += 1;
            }
        }
        rows.push(row);
    }
    let result = Table::new(table.ids.clone(), table.columns.clone(), rows)
        .map_err(|e| stage_err(stage, e))?;
    write_file(&out, &result.to_csv())?;
    Ok(StageArtifacts { inputs: vec![input], outputs: vec![out] })
}

fn table_embeddings(ids: &[String], rows: Vec<Vec<f64>>, dim: usize) -> ratekit::Result<EmbeddingTable> {
    let mut table = EmbeddingTable::new(dim)?;
    for (id, row) in ids.iter().zip(rows) {
        table.insert(id.clone(), row)?;
    }
    Ok(table)
}

fn run_pca(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out_embeddings = config.resolve(stage.require("out-embeddings")?);
    let components: usize = stage.parse_required("components")?;
    let table = Table::from_csv(&read_file(&input)?).map_err(|e| stage_err(stage, e))?;
    let features = table.features(&response_columns(&table)).map_err(|e| stage_err(stage, e))?;
    let model = pca_fit(&features, components).map_err(|e| stage_err(stage, e))?;
    let rows: Vec<Vec<f64>> = (0..features.shape()[0])
        .map(|i| model.encode(features.row(i)))
        .collect::<ratekit::Result<_>>()
        .map_err(|e| stage_err(stage, e))?;
    let emb = table_embeddings(&table.ids, rows, components).map_err(|e| stage_err(stage, e))?;
    write_file(&out_embeddings, &emb.to_text())?;

    let mut outputs = vec![out_embeddings];
    if let Some(path) = stage.get("out-model") {
        let path = config.resolve(path);
        write_file(&path, &model.to_text())?;
        outputs.push(path);
    }
    Ok(StageArtifacts { inputs: vec![input], outputs })
}

fn run_ae(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out_embeddings = config.resolve(stage.require("out-embeddings")?);
    let bottleneck: usize = stage.parse_required("bottleneck")?;
    let seed = stage_seed(config, stage)?;
    let table = Table::from_csv(&read_file(&input)?).map_err(|e| stage_err(stage, e))?;
    let features = table.features(&response_columns(&table)).map_err(|e| stage_err(stage, e))?;
    let hidden: Vec<usize> = match stage.get("hidden") {
        None => vec![],
        Some(raw) => raw
            .split(',')
            .map(|t| {
                t.trim().parse().map_err(|_| {
                    PipelineError::validation(format!("stage {:?}: bad hidden size {t:?}", stage.name))
                })
            })
            .collect::<Result<_>>()?,
    };
    let spec = AutoencoderSpec::Dense(DenseAeSpec {
        input_dim: features.shape()[1],
        hidden,
        bottleneck,
        hidden_activation: Activation::Tanh,
        output_activation: Activation::Identity,
    });
    let cfg = train_config(stage, seed, 0.01, 200, 10)?;
    let (encoder, _, _) = ae_fit(&features, &spec, &cfg).map_err(|e| stage_err(stage, e))?;
    let inputs_t: Vec<Tensor> = (0..features.shape()[0])
        .map(|i| Tensor::from_vec(features.row(i).to_vec()))
        .collect::<ratekit::Result<_>>()
        .map_err(|e| stage_err(stage, e))?;
    let emb = encode_batch(&encoder, &inputs_t, Some(&table.ids)).map_err(|e| stage_err(stage, e))?;
    write_file(&out_embeddings, &emb.to_text())?;

    let mut outputs = vec![out_embeddings];
    if let Some(path) = stage.get("out-encoder") {
        let path = config.resolve(path);
        write_file(&path, &save_network(&encoder))?;
        outputs.push(path);
    }
    Ok(StageArtifacts { inputs: vec![input], outputs })
}

fn parse_conv_stages(stage: &StageConfig) -> Result<Vec<ConvStage>> {
    // Syntax: whitespace-separated "FxK" or "FxKp" tokens (p = pool after).
    match stage.get("stages") {
        None => Ok(vec![
            ConvStage { filter_size: 3, filters: 4, pool: true },
            ConvStage { filter_size: 3, filters: 8, pool: false },
        ]),
        Some(raw) => raw
            .split_whitespace()
            .map(|tok| {
                let (body, pool) = match tok.strip_suffix('p') {
                    Some(b) => (b, true),
                    None => (tok, false),
                };
                let (f, k) = body.split_once('x').ok_or_else(|| {
                    PipelineError::validation(format!(
                        "stage {:?}: conv stage {tok:?} must look like 3x8 or 3x8p",
                        stage.name
                    ))
                })?;
                let parse = |t: &str| {
                    t.parse::<usize>().map_err(|_| {
                        PipelineError::validation(format!(
                            "stage {:?}: bad conv stage number {t:?}",
                            stage.name
                        ))
                    })
                };
                Ok(ConvStage { filter_size: parse(f)?, filters: parse(k)?, pool })
            })
            .collect(),
    }
}

fn run_conv_ae(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input_dir = config.resolve(stage.require("input")?);
    let out_embeddings = config.resolve(stage.require("out-embeddings")?);
    let bottleneck: usize = stage.parse_required("bottleneck")?;
    let seed = stage_seed(config, stage)?;

    let mut entries: Vec<PathBuf> = std::fs::read_dir(&input_dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            matches!(
                p.extension().and_then(|e| e.to_str()),
                Some("pgm" | "pnm" | "ppm")
            )
        })
        .collect();
    entries.sort();
    if entries.is_empty() {
        return Err(PipelineError::validation(format!(
            "stage {:?}: no .pgm/.pnm/.ppm files under {}",
            stage.name,
            input_dir.display()
        )));
    }
    let mut images = Vec::with_capacity(entries.len());
    let mut ids = Vec::with_capacity(entries.len());
    for path in &entries {
        images.push(parse_pnm(&read_file(path)?).map_err(|e| stage_err(stage, e))?);
        ids.push(path.file_stem().unwrap().to_string_lossy().into_owned());
    }
    let shape = images[0].shape();
    let spec = AutoencoderSpec::Conv(ConvAeSpec {
        input_shape: [shape[0], shape[1], shape[2]],
        stages: parse_conv_stages(stage)?,
        bottleneck,
        activation: Activation::Tanh,
        output_activation: Activation::Identity,
    });
    let cfg = train_config(stage, seed, 0.002, 40, 4)?;
    let (encoder, _, _) = conv_ae_fit(&images, &spec, &cfg).map_err(|e| stage_err(stage, e))?;
    let emb = encode_batch(&encoder, &images, Some(&ids)).map_err(|e| stage_err(stage, e))?;
    write_file(&out_embeddings, &emb.to_text())?;

    let mut outputs = vec![out_embeddings];
    if let Some(path) = stage.get("out-encoder") {
        let path = config.resolve(path);
        write_file(&path, &save_network(&encoder))?;
        outputs.push(path);
    }
    Ok(StageArtifacts { inputs: vec![input_dir], outputs })
}

fn run_word2vec(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out = config.resolve(stage.require("out")?);
    let dimension: usize = stage.parse_required("dimension")?;
    let mode = match stage.require("mode")? {
        "cbow" => Word2VecMode::Cbow,
        "skipgram" => Word2VecMode::Skipgram,
        other => {
            return Err(PipelineError::validation(format!(
                "stage {:?}: mode must be cbow or skipgram, got {other:?}",
                stage.name
            )))
        }
    };
    let normalize = stage.parse_or("normalize", true)?;
    let min_count: u64 = stage.parse_or("min-count", 1u64)?;
    let window: usize = stage.parse_or("window", 2usize)?;
    let negatives: usize = stage.parse_or("negatives", 5usize)?;
    let seed = stage_seed(config, stage)?;

    let corpus: Vec<Vec<String>> =
        read_file(&input)?.lines().map(|l| tokenize(l, normalize)).collect();
    let vocab = build_vocab(&corpus, min_count).map_err(|e| stage_err(stage, e))?;
    let cfg = train_config(stage, seed, 0.05, 8, 1)?;
    let (table, _) = word2vec_train(&corpus, &vocab, mode, window, dimension, negatives, &cfg)
        .map_err(|e| stage_err(stage, e))?;
    write_file(&out, &table.to_text())?;
    Ok(StageArtifacts { inputs: vec![input], outputs: vec![out] })
}

fn run_doc_embed(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let corpus_path = config.resolve(stage.require("corpus")?);
    let vectors_path = config.resolve(stage.require("vectors")?);
    let out = config.resolve(stage.require("out")?);
    let normalize = stage.parse_or("normalize", true)?;
    let min_count: u64 = stage.parse_or("min-count", 1u64)?;

    let corpus: Vec<Vec<String>> =
        read_file(&corpus_path)?.lines().map(|l| tokenize(l, normalize)).collect();
    let vocab = build_vocab(&corpus, min_count).map_err(|e| stage_err(stage, e))?;
    let vectors = EmbeddingTable::from_text(&read_file(&vectors_path)?).map_err(|e| stage_err(stage, e))?;
    let mut table = EmbeddingTable::new(vectors.dimension()).map_err(|e| stage_err(stage, e))?;
    for (i, doc) in corpus.iter().enumerate() {
        let centroid = doc_centroid(doc, &vectors, &vocab)
            .map_err(|e| stage_err(stage, ratekit::Error::Domain(format!("document {i}: {e}"))))?;
        table.insert(i.to_string(), centroid).map_err(|e| stage_err(stage, e))?;
    }
    write_file(&out, &table.to_text())?;
    Ok(StageArtifacts { inputs: vec![corpus_path, vectors_path], outputs: vec![out] })
}

fn run_rnn_embed(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out = config.resolve(stage.require("out")?);
    let hidden: usize = stage.parse_required("hidden")?;
    let seed = stage_seed(config, stage)?;
    let loss = match stage.get("loss").unwrap_or("bce") {
        "bce" => Loss::BinaryCrossEntropy,
        "squared" => Loss::SquaredError,
        other => {
            return Err(PipelineError::validation(format!(
                "stage {:?}: loss must be bce or squared, got {other:?}",
                stage.name
            )))
        }
    };
    let records = parse_sequences(&read_file(&input)?).map_err(|e| stage_err(stage, e))?;
    let mut sequences = Vec::with_capacity(records.len());
    let mut labels = Vec::with_capacity(records.len());
    for (i, (seq, label)) in records.into_iter().enumerate() {
        let label = label.ok_or_else(|| {
            stage_err(stage, ratekit::Error::Argument(format!("record {i} has no label")))
        })?;
        sequences.push(seq);
        labels.push(label);
    }
    let cfg = train_config(stage, seed, 0.1, 200, 4)?;
    let (params, _) =
        many_to_one_fit(&sequences, &labels, &cfg, hidden, loss).map_err(|e| stage_err(stage, e))?;
    let mut table = EmbeddingTable::new(hidden).map_err(|e| stage_err(stage, e))?;
    for (i, seq) in sequences.iter().enumerate() {
        let emb = sequence_embed(seq, &params).map_err(|e| stage_err(stage, e))?;
        table.insert(i.to_string(), emb).map_err(|e| stage_err(stage, e))?;
    }
    write_file(&out, &table.to_text())?;
    Ok(StageArtifacts { inputs: vec![input], outputs: vec![out] })
}

fn run_crae(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let input = config.resolve(stage.require("input")?);
    let out_embeddings = config.resolve(stage.require("out-embeddings")?);
    let q: usize = stage.parse_required("q")?;
    let components: usize = stage.parse_required("components")?;
    let seed = stage_seed(config, stage)?;

    let pts = GeoPointSet::from_csv(&read_file(&input)?).map_err(|e| stage_err(stage, e))?;
    let spacing = match stage.get("spacing") {
        Some(raw) => raw.parse().map_err(|_| {
            PipelineError::validation(format!("stage {:?}: bad spacing {raw:?}", stage.name))
        })?,
        None => pts.default_spacing(),
    };
    let cutoff = stage.parse_or("cutoff", spacing * q as f64)?;
    let mask = stage.parse_or("mask", true)?;

    let mut cuboids = Vec::with_capacity(pts.points().len());
    for point in pts.points() {
        let grid = span_grid((point.x, point.y), q, spacing).map_err(|e| stage_err(stage, e))?;
        cuboids.push(
            attach_features(&grid, &pts, cutoff, mask, point.id.clone())
                .map_err(|e| stage_err(stage, e))?,
        );
    }
    let (cuboids, _, _) =
        ratekit::geo::standardize_cuboids(&cuboids).map_err(|e| stage_err(stage, e))?;
    let cfg = train_config(stage, seed, 0.002, 30, 8)?;
    let (encoder, _) =
        crae_fit(&cuboids, components, &default_crae_stages(), &cfg).map_err(|e| stage_err(stage, e))?;

    let mut table = EmbeddingTable::new(components).map_err(|e| stage_err(stage, e))?;
    for cuboid in &cuboids {
        let emb = crae_embed(&encoder, cuboid).map_err(|e| stage_err(stage, e))?;
        table.insert(cuboid.source_id.clone(), emb).map_err(|e| stage_err(stage, e))?;
    }
    write_file(&out_embeddings, &table.to_text())?;

    let mut outputs = vec![out_embeddings];
    if let Some(path) = stage.get("out-encoder") {
        let path = config.resolve(path);
        write_file(&path, &save_network(&encoder))?;
        outputs.push(path);
    }
    if let Some(path) = stage.get("out-report") {
        let k: usize = stage.parse_or("neighbors", 5usize)?;
        let coords: Vec<(f64, f64)> = pts.points().iter().map(|p| (p.x, p.y)).collect();
        let score = smoothness_score(&table, &coords, k).map_err(|e| stage_err(stage, e))?;
        let report = format!(
            "points: {}\nq: {q}\nspacing: {}\ncutoff: {}\nneighbors: {k}\nsmoothness: {}\n",
            pts.points().len(),
            fmt_f64(spacing),
            fmt_f64(cutoff),
            fmt_f64(score),
        );
        let path = config.resolve(path);
        write_file(&path, &report)?;
        outputs.push(path);
    }
    Ok(StageArtifacts { inputs: vec![input], outputs })
}

/// Reads comma-separated embedding files into named blocks whose rows follow
/// the given id order.
fn blocks_from_embeddings(
    config: &PipelineConfig,
    stage: &StageConfig,
    key: &str,
    ids: &[String],
) -> Result<(Vec<(String, Vec<Vec<f64>>)>, Vec<PathBuf>)> {
    let raw = stage.require(key)?;
    let paths: Vec<PathBuf> = raw
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| config.resolve(s))
        .collect();
    let names: Vec<String> = match stage.get("names") {
        Some(raw) if key == "inputs" => raw.split(',').map(|s| s.trim().to_owned()).collect(),
        _ => paths
            .iter()
            .map(|p| p.file_stem().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
    };
    if names.len() != paths.len() {
        return Err(PipelineError::validation(format!(
            "stage {:?}: {} names for {} inputs",
            stage.name,
            names.len(),
            paths.len()
        )));
    }
    let mut blocks = Vec::with_capacity(paths.len());
    for (path, name) in paths.iter().zip(names) {
        let table = EmbeddingTable::from_text(&read_file(path)?).map_err(|e| stage_err(stage, e))?;
        let rows: Vec<Vec<f64>> = ids
            .iter()
            .map(|id| {
                table.get(id).map(<[f64]>::to_vec).ok_or_else(|| {
                    stage_err(
                        stage,
                        ratekit::Error::Argument(format!(
                            "embedding file {} is missing id {id:?}",
                            path.display()
                        )),
                    )
                })
            })
            .collect::<Result<_>>()?;
        blocks.push((name, rows));
    }
    Ok((blocks, paths))
}

fn run_assemble(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let out = config.resolve(stage.require("out")?);
    // Row order comes from the first embedding file.
    let first = stage
        .require("inputs")?
        .split(',')
        .map(str::trim)
        .find(|s| !s.is_empty())
        .ok_or_else(|| PipelineError::validation(format!("stage {:?}: empty inputs", stage.name)))?;
    let first_table =
        EmbeddingTable::from_text(&read_file(&config.resolve(first))?).map_err(|e| stage_err(stage, e))?;
    let ids: Vec<String> = first_table.ids().to_vec();
    let (blocks, paths) = blocks_from_embeddings(config, stage, "inputs", &ids)?;
    let design = assemble_features(ids.len(), &blocks).map_err(|e| stage_err(stage, e))?;

    let rows: Vec<Vec<f64>> = (0..design.n_rows()).map(|i| design.row(i).to_vec()).collect();
    let table = Table::new(ids, design.names().to_vec(), rows).map_err(|e| stage_err(stage, e))?;
    write_file(&out, &table.to_csv())?;
    Ok(StageArtifacts { inputs: paths, outputs: vec![out] })
}

/// Reads a design-matrix CSV (id + named columns, intercept first) back into
/// a `DesignMatrix`, preserving the column names.
fn design_from_table(stage: &StageConfig, table: &Table) -> Result<(Vec<String>, DesignMatrix)> {
    let design = DesignMatrix::from_named_rows(table.columns.clone(), &table.rows)
        .map_err(|e| stage_err(stage, e))?;
    Ok((table.ids.clone(), design))
}

fn load_response(
    config: &PipelineConfig,
    stage: &StageConfig,
    ids: &[String],
) -> Result<(PathBuf, Vec<f64>)> {
    let path = config.resolve(stage.require("response")?);
    let column = stage.get("response-column").unwrap_or("y");
    let table = Table::from_csv(&read_file(&path)?).map_err(|e| stage_err(stage, e))?;
    let idx = table.column_index(column).ok_or_else(|| {
        stage_err(stage, ratekit::Error::Argument(format!("response file has no column {column:?}")))
    })?;
    if table.ids != ids {
        return Err(stage_err(
            stage,
            ratekit::Error::Argument("response ids do not match design ids".into()),
        ));
    }
    Ok((path, table.column(idx)))
}

fn parse_family(kind: &str, link: Option<&str>) -> ratekit::Result<GlmFamily> {
    match link {
        Some(link) => GlmFamily::from_names(kind, link),
        None => {
            let canonical = match kind {
                "gaussian" => "identity",
                "poisson" | "gamma" => "log",
                "binomial" => "logit",
                other => return Err(ratekit::Error::Argument(format!("unknown family {other:?}"))),
            };
            GlmFamily::from_names(kind, canonical)
        }
    }
}

fn run_glm_fit(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let design_path = config.resolve(stage.require("design")?);
    let out_model = config.resolve(stage.require("out-model")?);
    let family = parse_family(stage.require("family")?, stage.get("link")).map_err(|e| stage_err(stage, e))?;
    let table = Table::from_csv(&read_file(&design_path)?).map_err(|e| stage_err(stage, e))?;
    let (ids, design) = design_from_table(stage, &table)?;
    let (response_path, y) = load_response(config, stage, &ids)?;
    let model = glm_fit(&design, &y, family, None).map_err(|e| stage_err(stage, e))?;
    write_file(&out_model, &model.to_text())?;

    let mut outputs = vec![out_model];
    if let Some(path) = stage.get("out-report") {
        let path = config.resolve(path);
        write_file(&path, &model.report())?;
        outputs.push(path);
    }
    Ok(StageArtifacts { inputs: vec![design_path, response_path], outputs })
}

fn run_glm_predict(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let model_path = config.resolve(stage.require("model")?);
    let design_path = config.resolve(stage.require("design")?);
    let out = config.resolve(stage.require("out")?);
    let model = GlmModel::from_text(&read_file(&model_path)?).map_err(|e| stage_err(stage, e))?;
    let table = Table::from_csv(&read_file(&design_path)?).map_err(|e| stage_err(stage, e))?;
    let (ids, design) = design_from_table(stage, &table)?;
    let mu = glm_predict(&model, &design, None).map_err(|e| stage_err(stage, e))?;
    let rows: Vec<Vec<f64>> = mu.into_iter().map(|m| vec![m]).collect();
    let result = Table::new(ids, vec!["mean".into()], rows).map_err(|e| stage_err(stage, e))?;
    write_file(&out, &result.to_csv())?;
    Ok(StageArtifacts { inputs: vec![model_path, design_path], outputs: vec![out] })
}

fn run_eval_intrinsic(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let embeddings_path = config.resolve(stage.require("embeddings")?);
    let out = config.resolve(stage.require("out")?);
    let k: usize = stage.parse_required("k")?;
    let query = stage.require("query")?;
    let table = EmbeddingTable::from_text(&read_file(&embeddings_path)?).map_err(|e| stage_err(stage, e))?;
    let report = nearest_neighbors(&table, query, k).map_err(|e| stage_err(stage, e))?;
    let text = match stage.get("format").unwrap_or("text") {
        "kv" => report.to_kv(),
        _ => report.to_report_text(),
    };
    write_file(&out, &text)?;
    Ok(StageArtifacts { inputs: vec![embeddings_path], outputs: vec![out] })
}

fn run_eval_extrinsic(config: &PipelineConfig, stage: &StageConfig) -> Result<StageArtifacts> {
    let out = config.resolve(stage.require("out")?);
    let family = parse_family(stage.require("family")?, stage.get("link")).map_err(|e| stage_err(stage, e))?;
    let response_path = config.resolve(stage.require("response")?);
    let column = stage.get("response-column").unwrap_or("y");
    let response = Table::from_csv(&read_file(&response_path)?).map_err(|e| stage_err(stage, e))?;
    let idx = response.column_index(column).ok_or_else(|| {
        stage_err(stage, ratekit::Error::Argument(format!("response file has no column {column:?}")))
    })?;
    let y = response.column(idx);

    let (base_blocks, mut inputs) = blocks_from_embeddings(config, stage, "base", &response.ids)?;
    let (aug_blocks, aug_paths) = blocks_from_embeddings(config, stage, "augmented", &response.ids)?;
    inputs.extend(aug_paths);
    inputs.push(response_path);

    let split = SplitSpec {
        train_fraction: stage.parse_or("train-fraction", 0.7)?,
        seed: stage_seed(config, stage)?,
        folds: match stage.get("folds") {
            None => None,
            Some(raw) => Some(raw.parse().map_err(|_| {
                PipelineError::validation(format!("stage {:?}: bad folds {raw:?}", stage.name))
            })?),
        },
    };
    let report = extrinsic_compare(&base_blocks, &aug_blocks, &y, family, &split)
        .map_err(|e| stage_err(stage, e))?;
    let text = match stage.get("format").unwrap_or("text") {
        "kv" => report.to_kv(),
        _ => report.to_report_text(),
    };
    write_file(&out, &text)?;
    Ok(StageArtifacts { inputs, outputs: vec![out] })
}
