//! Corpus handling and word embeddings.
//!
//! word2vec here is the classic pair of models trained with negative
//! sampling: CBOW (averaged context vectors predict the center word) and
//! skipgram (the center word predicts each context word). The word vectors
//! are the rows of the input-side weight matrix. Everything draws from
//! [`SeededRng`], so a fixed seed reproduces the table bit for bit.

use std::collections::HashMap;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::nn::TrainConfig;
use crate::rng::SeededRng;

/// One-hot encoding: a length-`k` vector with a single 1 at (1-based)
/// position `j`.
pub fn one_hot(j: usize, k: usize) -> Result<Vec<f64>> {
    if j == 0 || j > k {
        return Err(Error::argument(format!("one_hot index {j} out of range 1..={k}")));
    }
    let mut v = vec![0.0; k];
    v[j - 1] = 1.0;
    Ok(v)
}

/// Splits text into tokens. With `normalize` set, text is lowercased and
/// split on runs of non-alphanumeric characters; otherwise it is split on
/// whitespace only (for pre-tokenized corpora).
pub fn tokenize(text: &str, normalize: bool) -> Vec<String> {
    if normalize {
        text.to_lowercase()
            .split(|c: char| !c.is_alphanumeric())
            .filter(|t| !t.is_empty())
            .map(str::to_owned)
            .collect()
    } else {
        text.split_whitespace().map(str::to_owned).collect()
    }
}

/// Token inventory of a corpus: a bijection between retained tokens and
/// indices `0..|V|-1`, with per-token counts.
#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    total_tokens: u64,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    /// Number of tokens in the corpus the vocabulary was built from
    /// (counting occurrences of dropped types too).
    pub fn total_tokens(&self) -> u64 {
        self.total_tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn count(&self, index: usize) -> u64 {
        self.counts[index]
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }
}

/// Builds a vocabulary from tokenized documents, dropping tokens seen fewer
/// than `min_count` times. Indices are assigned by descending count with
/// lexicographic tie-breaks, so the assignment is deterministic.
pub fn build_vocab(corpus: &[Vec<String>], min_count: u64) -> Result<Vocabulary> {
    if min_count == 0 {
        return Err(Error::argument("min_count must be at least 1"));
    }
    let mut counts: HashMap<&str, u64> = HashMap::new();
    let mut total_tokens = 0u64;
    for doc in corpus {
        for token in doc {
            *counts.entry(token.as_str()).or_insert(0) += 1;
            total_tokens += 1;
        }
    }
    let mut kept: Vec<(&str, u64)> =
        counts.into_iter().filter(|(_, c)| *c >= min_count).collect();
    if kept.is_empty() {
        return Err(Error::argument("no token survives the min_count filter"));
    }
    kept.sort_by(|(ta, ca), (tb, cb)| cb.cmp(ca).then_with(|| ta.cmp(tb)));
    let tokens: Vec<String> = kept.iter().map(|(t, _)| (*t).to_owned()).collect();
    let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    Ok(Vocabulary {
        index,
        counts: kept.iter().map(|(_, c)| *c).collect(),
        tokens,
        total_tokens,
    })
}

/// Which word2vec model to train.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Word2VecMode {
    Cbow,
    Skipgram,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Cumulative unigram^0.75 distribution for negative sampling.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(vocab: &Vocabulary) -> NoiseTable {
        let mut cumulative = Vec::with_capacity(vocab.size());
        let mut acc = 0.0;
        for i in 0..vocab.size() {
            acc += (vocab.count(i) as f64).powf(0.75);
            cumulative.push(acc);
        }
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut SeededRng) -> usize {
        let u = rng.next_f64() * self.cumulative.last().unwrap();
        self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
    }
}

/// Trains word2vec with negative sampling and returns the input-side word
/// vectors as an embedding table keyed by token, plus the per-epoch mean
/// negative-sampling loss.
///
/// The context window is symmetric with `window` words on each side,
/// truncated at document boundaries. A sampled negative equal to the positive
/// target is skipped rather than redrawn. Documents are visited in corpus
/// order, shuffled per epoch when the config says so.
pub fn word2vec_train(
    corpus: &[Vec<String>],
    vocab: &Vocabulary,
    mode: Word2VecMode,
    window: usize,
    dimension: usize,
    negatives: usize,
    cfg: &TrainConfig,
) -> Result<(EmbeddingTable, Vec<f64>)> {
    if window == 0 || dimension == 0 {
        return Err(Error::argument("window and dimension must be positive"));
    }
    if vocab.size() < negatives + 1 {
        return Err(Error::argument(format!(
            "vocabulary of {} tokens cannot supply {negatives} negatives plus a target",
            vocab.size()
        )));
    }

    let docs: Vec<Vec<usize>> = corpus
        .iter()
        .map(|doc| doc.iter().filter_map(|t| vocab.index_of(t)).collect())
        .collect();

    let v = vocab.size();
    let mut rng = SeededRng::new(cfg.seed);
    // Classic word2vec initialization: small uniform input vectors, zero
    // output vectors.
    let bound = 0.5 / dimension as f64;
    let mut w_in: Vec<f64> = (0..v * dimension).map(|_| rng.uniform(-bound, bound)).collect();
    let mut w_out = vec![0.0; v * dimension];
    let noise = NoiseTable::new(vocab);

    let mut order: Vec<usize> = (0..docs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut grad_h = vec![0.0; dimension];
    let mut h = vec![0.0; dimension];

    for _ in 0..cfg.epochs {
        if cfg.shuffle {
            rng.shuffle(&mut order);
        }
        let mut epoch_loss = 0.0;
        let mut updates = 0u64;
        for &d in &order {
            let doc = &docs[d];
            for center in 0..doc.len() {
                let lo = center.saturating_sub(window);
                let hi = (center + window).min(doc.len() - 1);
                match mode {
                    Word2VecMode::Cbow => {
                        if hi == lo {
                            continue; // no context at all
                        }
                        // h = mean of context input vectors.
                        h.iter_mut().for_each(|x| *x = 0.0);
                        let mut n_ctx = 0.0;
                        for c in lo..=hi {
                            if c == center {
                                continue;
                            }
                            let row = &w_in[doc[c] * dimension..(doc[c] + 1) * dimension];
                            for (hv, r) in h.iter_mut().zip(row) {
                                *hv += r;
                            }
                            n_ctx += 1.0;
                        }
                        if n_ctx == 0.0 {
                            continue;
                        }
                        h.iter_mut().for_each(|x| *x /= n_ctx);
                        epoch_loss += train_pair(
                            &h,
                            doc[center],
                            negatives,
                            &noise,
                            &mut rng,
                            &mut w_out,
                            dimension,
                            cfg.learning_rate,
                            &mut grad_h,
                        );
                        updates += 1;
                        // The input gradient splits evenly over the averaged context.
                        let scale = cfg.learning_rate / n_ctx;
                        for c in lo..=hi {
                            if c == center {
                                continue;
                            }
                            let row = &mut w_in[doc[c] * dimension..(doc[c] + 1) * dimension];
                            for (r, g) in row.iter_mut().zip(&grad_h) {
                                *r -= scale * g;
                            }
                        }
                    }
                    Word2VecMode::Skipgram => {
                        for c in lo..=hi {
                            if c == center {
                                continue;
                            }
                            let center_row: Vec<f64> =
                                w_in[doc[center] * dimension..(doc[center] + 1) * dimension].to_vec();
                            epoch_loss += train_pair(
                                &center_row,
                                doc[c],
                                negatives,
                                &noise,
                                &mut rng,
                                &mut w_out,
                                dimension,
                                cfg.learning_rate,
                                &mut grad_h,
                            );
                            updates += 1;
                            let row =
                                &mut w_in[doc[center] * dimension..(doc[center] + 1) * dimension];
                            for (r, g) in row.iter_mut().zip(&grad_h) {
                                *r -= cfg.learning_rate * g;
                            }
                        }
                    }
                }
            }
        }
        history.push(if updates > 0 { epoch_loss / updates as f64 } else { 0.0 });
    }

    let mut table = EmbeddingTable::new(dimension)?;
    for i in 0..v {
        table.insert(vocab.token(i), w_in[i * dimension..(i + 1) * dimension].to_vec())?;
    }
    Ok((table, history))
}

/// One positive + `negatives` sampled targets against hidden vector `h`.
/// Applies the learning rate to the output vectors in place, leaves the raw
/// dL/dh in `grad_h` (the caller scales the input-side update), and returns
/// the negative-sampling loss of the pair.
#[allow(clippy::too_many_arguments)]
fn train_pair(
    h: &[f64],
    positive: usize,
    negatives: usize,
    noise: &NoiseTable,
    rng: &mut SeededRng,
    w_out: &mut [f64],
    dimension: usize,
    learning_rate: f64,
    grad_h: &mut [f64],
) -> f64 {
    grad_h.iter_mut().for_each(|x| *x = 0.0);
    let mut loss = 0.0;

    // (target, label) pairs: the true word then the noise words.
    let mut apply = |target: usize, label: f64, grad_h: &mut [f64], loss: &mut f64| {
        let row = &mut w_out[target * dimension..(target + 1) * dimension];
        let score: f64 = row.iter().zip(h).map(|(a, b)| a * b).sum();
        let p = sigmoid(score);
        *loss += if label == 1.0 {
            -p.max(1e-12).ln()
        } else {
            -(1.0 - p).max(1e-12).ln()
        };
        let g = p - label;
        for (gh, r) in grad_h.iter_mut().zip(row.iter()) {
            *gh += g * r;
        }
        for (r, hv) in row.iter_mut().zip(h) {
            *r -= learning_rate * g * hv;
        }
    };

    apply(positive, 1.0, grad_h, &mut loss);
    for _ in 0..negatives {
        let sample = noise.sample(rng);
        if sample == positive {
            continue;
        }
        apply(sample, 0.0, grad_h, &mut loss);
    }
    loss
}

/// Mean embedding of the in-vocabulary tokens of a document. Out-of-vocabulary
/// tokens are skipped and do not count toward the divisor; a document with no
/// known token is an error.
pub fn doc_centroid(doc: &[String], table: &EmbeddingTable, vocab: &Vocabulary) -> Result<Vec<f64>> {
    let mut centroid = vec![0.0; table.dimension()];
    let mut known = 0.0;
    for token in doc {
        if !vocab.contains(token) {
            continue;
        }
        let row = table
            .get(token)
            .ok_or_else(|| Error::argument(format!("token {token:?} in vocabulary but not in table")))?;
        for (c, v) in centroid.iter_mut().zip(row) {
            *c += v;
        }
        known += 1.0;
    }
    if known == 0.0 {
        return Err(Error::domain("document has no in-vocabulary token"));
    }
    for c in &mut centroid {
        *c /= known;
    }
    Ok(centroid)
}
