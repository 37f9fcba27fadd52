//! Content encoder and duration-based upsampler.
//!
//! A token sequence of length `L` is embedded, positionally tagged, and
//! passed through a small residual feed-forward block to give the hidden
//! sequence `H` (`L x d`). A two-layer duration head with a softplus output
//! predicts a positive raw duration per token; [`integer_durations`] rounds
//! those to positive integers, optionally rescaled so they sum to an exact
//! frame budget, and [`upsample`] repeats each hidden row by its duration to
//! produce the `N x d` content condition with `N = sum(durations) >= L`.
//!
//! Rounding durations to integers means no gradient reaches the duration
//! head through the upsampled output; the head trains only if given its own
//! objective. Gradients do flow through the repeated rows back into the
//! encoder, which the composed gradient check in the tests exercises.
//!
//! An empty content prompt is not an encoder input: it selects the null
//! content condition at the call site (see [`ContentEncoder::condition`]),
//! which is how audio-only generation is requested.

use crate::tape::{NodeId, Tape, TapeError, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ContentError {
    #[error("invalid content config: {0}")]
    BadConfig(String),
    #[error("unknown token id {token}; vocabulary size is {vocab}")]
    UnknownToken { token: usize, vocab: usize },
    #[error("character {0:?} is outside the toy character set (a-z and space)")]
    UnknownChar(char),
    #[error("token sequence is empty")]
    EmptyTokens,
    #[error("token sequence has length {got}, limit is {max}")]
    TooLong { got: usize, max: usize },
    #[error("frame budget {budget} is below the token count {len}")]
    BudgetTooSmall { budget: usize, len: usize },
    #[error("durations sum to {got}, expected budget {expected}")]
    BudgetMismatch { expected: usize, got: usize },
    #[error("duration at index {index} is zero; durations must be positive")]
    ZeroDuration { index: usize },
    #[error("{rows} hidden rows but {durations} durations")]
    LengthMismatch { rows: usize, durations: usize },
    #[error(transparent)]
    Tape(#[from] TapeError),
}

/// Sizes and seed for a [`ContentEncoder`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContentConfig {
    /// Vocabulary size for integer tokens.
    pub vocab: usize,
    /// Width of the hidden sequence (and of each upsampled frame).
    pub d: usize,
    /// Hidden width of the feed-forward and duration heads.
    pub d_hidden: usize,
    /// Maximum token sequence length.
    pub max_len: usize,
    pub seed: u64,
}

/// Token ids for the toy character set: `'a'..='z'` then space.
pub const CHAR_VOCAB: usize = 27;

impl ContentConfig {
    /// Character-level configuration sized for short toy prompts.
    pub fn toy_chars() -> Self {
        ContentConfig {
            vocab: CHAR_VOCAB,
            d: 3,
            d_hidden: 8,
            max_len: 32,
            seed: 11,
        }
    }

    pub fn validate(&self) -> Result<(), ContentError> {
        for (name, v) in [
            ("vocab", self.vocab),
            ("d", self.d),
            ("d_hidden", self.d_hidden),
            ("max_len", self.max_len),
        ] {
            if v == 0 {
                return Err(ContentError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// Map a toy text prompt to token ids. Uppercase folds to lowercase; any
/// character outside `a-z` and space is an error.
pub fn tokenize_chars(text: &str) -> Result<Vec<usize>, ContentError> {
    text.chars()
        .map(|c| {
            let lower = c.to_ascii_lowercase();
            match lower {
                'a'..='z' => Ok(lower as usize - 'a' as usize),
                ' ' => Ok(26),
                other => Err(ContentError::UnknownChar(other)),
            }
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentParams {
    pub embed: Tensor,
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
    pub w_dur1: Tensor,
    pub b_dur1: Tensor,
    pub w_dur2: Tensor,
    pub b_dur2: Tensor,
    /// Sinusoidal positional tags, fixed.
    pub pos: Tensor,
}

/// Node handles for the trainable content tensors staged on a tape.
pub(crate) struct ContentNodeParams {
    embed: NodeId,
    w1: NodeId,
    b1: NodeId,
    w2: NodeId,
}

/// A fully processed content prompt.
#[derive(Clone, Debug, PartialEq)]
pub struct ContentSequence {
    pub tokens: Vec<usize>,
    /// Encoded hidden sequence, `L x d`.
    pub hidden: Tensor,
    /// Positive integer duration per token.
    pub durations: Vec<usize>,
    /// Hidden rows repeated by duration, `N x d` with `N = sum(durations)`.
    pub upsampled: Tensor,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContentEncoder {
    config: ContentConfig,
    params: ContentParams,
}

impl ContentEncoder {
    pub fn init(config: ContentConfig) -> Result<Self, ContentError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut randn = |rows: usize, cols: usize, scale: f64| {
            Tensor::from_fn(rows, cols, |_, _| {
                let n: f64 = StandardNormal.sample(&mut rng);
                scale * n
            })
        };
        let sc = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let params = ContentParams {
            embed: randn(config.vocab, config.d, 0.5),
            w1: randn(config.d, config.d_hidden, sc(config.d)),
            b1: Tensor::zeros(1, config.d_hidden),
            w2: randn(config.d_hidden, config.d, sc(config.d_hidden)),
            w_dur1: randn(config.d, config.d_hidden, sc(config.d)),
            b_dur1: Tensor::zeros(1, config.d_hidden),
            w_dur2: randn(config.d_hidden, 1, sc(config.d_hidden)),
            b_dur2: Tensor::zeros(1, 1),
            pos: crate::scorenet::sinusoidal_table(config.max_len, config.d),
        };
        Ok(ContentEncoder { config, params })
    }

    pub fn config(&self) -> &ContentConfig {
        &self.config
    }

    pub fn params(&self) -> &ContentParams {
        &self.params
    }

    pub fn tensor_names(&self) -> Vec<String> {
        ["embed", "w1", "b1", "w2", "w_dur1", "b_dur1", "w_dur2", "b_dur2"]
            .iter()
            .map(|s| s.to_string())
            .collect()
    }

    /// All parameter tensors, ordered as [`Self::tensor_names`], for
    /// external optimizers or serialization.
    pub fn trainable(&self) -> Vec<&Tensor> {
        let p = &self.params;
        vec![
            &p.embed, &p.w1, &p.b1, &p.w2, &p.w_dur1, &p.b_dur1, &p.w_dur2, &p.b_dur2,
        ]
    }

    /// Mutable view of [`Self::trainable`], same order.
    pub fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let p = &mut self.params;
        vec![
            &mut p.embed,
            &mut p.w1,
            &mut p.b1,
            &mut p.w2,
            &mut p.w_dur1,
            &mut p.b_dur1,
            &mut p.w_dur2,
            &mut p.b_dur2,
        ]
    }

    fn check_tokens(&self, tokens: &[usize]) -> Result<(), ContentError> {
        if tokens.is_empty() {
            return Err(ContentError::EmptyTokens);
        }
        if tokens.len() > self.config.max_len {
            return Err(ContentError::TooLong {
                got: tokens.len(),
                max: self.config.max_len,
            });
        }
        for &t in tokens {
            if t >= self.config.vocab {
                return Err(ContentError::UnknownToken {
                    token: t,
                    vocab: self.config.vocab,
                });
            }
        }
        Ok(())
    }

    /// Stage the encoder tensors that participate in gradient flow. The
    /// duration head is deliberately absent: integer rounding blocks its
    /// gradient path, so it never appears on a training tape.
    pub(crate) fn stage_params(&self, tape: &mut Tape) -> (ContentNodeParams, Vec<NodeId>) {
        let embed = tape.input(self.params.embed.clone());
        let w1 = tape.input(self.params.w1.clone());
        let b1 = tape.input(self.params.b1.clone());
        let w2 = tape.input(self.params.w2.clone());
        (
            ContentNodeParams { embed, w1, b1, w2 },
            vec![embed, w1, b1, w2],
        )
    }

    /// Record the encoding on a tape: embedding lookup, positional tags, and
    /// a residual feed-forward block. Returns the `L x d` hidden node.
    pub(crate) fn encode_on_tape(
        &self,
        tape: &mut Tape,
        np: &ContentNodeParams,
        tokens: &[usize],
    ) -> Result<NodeId, ContentError> {
        self.check_tokens(tokens)?;
        let l = tokens.len();
        let x = tape.gather_rows(np.embed, tokens)?;
        let pos = tape.input(Tensor::from_fn(l, self.config.d, |i, j| {
            self.params.pos.get(i, j)
        }));
        let x = tape.add(x, pos)?;
        let a = tape.matmul(x, np.w1)?;
        let a = tape.add_broadcast_row(a, np.b1)?;
        let a = tape.silu(a);
        let a = tape.matmul(a, np.w2)?;
        let h = tape.add(x, a)?;
        Ok(h)
    }

    /// Deterministic encoding of a token sequence into `H` (`L x d`).
    pub fn encode_content(&self, tokens: &[usize]) -> Result<Tensor, ContentError> {
        let mut tape = Tape::new();
        let (np, _) = self.stage_params(&mut tape);
        let h = self.encode_on_tape(&mut tape, &np, tokens)?;
        Ok(tape.value(h).clone())
    }

    /// Raw positive duration per hidden row: a two-layer feed-forward head
    /// with a softplus output.
    pub fn predict_durations(&self, hidden: &Tensor) -> Result<Vec<f64>, ContentError> {
        let p = &self.params;
        if hidden.cols() != self.config.d {
            return Err(ContentError::BadConfig(format!(
                "hidden width {} does not match d = {}",
                hidden.cols(),
                self.config.d
            )));
        }
        let mut tape = Tape::new();
        let h = tape.input(hidden.clone());
        let w1 = tape.input(p.w_dur1.clone());
        let b1 = tape.input(p.b_dur1.clone());
        let w2 = tape.input(p.w_dur2.clone());
        let b2 = tape.input(p.b_dur2.clone());
        let a = tape.matmul(h, w1)?;
        let a = tape.add_broadcast_row(a, b1)?;
        let a = tape.silu(a);
        let a = tape.matmul(a, w2)?;
        let a = tape.add_broadcast_row(a, b2)?;
        Ok(tape.value(a).data().iter().map(|&x| softplus(x)).collect())
    }

    /// Run the full pipeline: encode, predict durations, round to integers
    /// (hitting `n_target` exactly when given), and upsample.
    pub fn process(
        &self,
        tokens: &[usize],
        n_target: Option<usize>,
    ) -> Result<ContentSequence, ContentError> {
        let hidden = self.encode_content(tokens)?;
        let raw = self.predict_durations(&hidden)?;
        let durations = integer_durations(&raw, n_target)?;
        let upsampled = upsample(&hidden, &durations, n_target)?;
        Ok(ContentSequence {
            tokens: tokens.to_vec(),
            hidden,
            durations,
            upsampled,
        })
    }

    /// Content condition for a toy text prompt: an empty prompt selects the
    /// null condition (`None`), which is the audio-only generation mode.
    pub fn condition(
        &self,
        text: &str,
        n_target: Option<usize>,
    ) -> Result<Option<Tensor>, ContentError> {
        if text.is_empty() {
            return Ok(None);
        }
        let tokens = tokenize_chars(text)?;
        Ok(Some(self.process(&tokens, n_target)?.upsampled))
    }
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// Round raw positive durations to positive integers.
///
/// Without a budget, each entry rounds to the nearest integer with a floor of
/// one (degenerate raw values get duration 1). With a budget `N`, every token
/// first receives one frame and the remaining `N - L` are split
/// proportionally to the raw predictions by largest-remainder rounding, ties
/// broken by index, so the result sums to `N` exactly while staying positive.
pub fn integer_durations(
    raw: &[f64],
    n_target: Option<usize>,
) -> Result<Vec<usize>, ContentError> {
    let l = raw.len();
    if l == 0 {
        return Err(ContentError::EmptyTokens);
    }
    match n_target {
        None => Ok(raw
            .iter()
            .map(|&r| {
                if r.is_finite() {
                    (r.round() as usize).max(1)
                } else {
                    1
                }
            })
            .collect()),
        Some(n) => {
            if n < l {
                return Err(ContentError::BudgetTooSmall { budget: n, len: l });
            }
            let extras = n - l;
            let mut weights: Vec<f64> = raw
                .iter()
                .map(|&r| if r.is_finite() && r > 0.0 { r } else { 0.0 })
                .collect();
            let total: f64 = weights.iter().sum();
            if total <= 0.0 {
                weights = vec![1.0; l];
            }
            let total: f64 = weights.iter().sum();
            let shares: Vec<f64> = weights
                .iter()
                .map(|w| extras as f64 * w / total)
                .collect();
            let mut durations: Vec<usize> = shares.iter().map(|s| 1 + s.floor() as usize).collect();
            let assigned: usize = durations.iter().sum();
            let mut order: Vec<usize> = (0..l).collect();
            order.sort_by(|&a, &b| {
                let ra = shares[a] - shares[a].floor();
                let rb = shares[b] - shares[b].floor();
                rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
            });
            for &i in order.iter().take(n - assigned) {
                durations[i] += 1;
            }
            debug_assert_eq!(durations.iter().sum::<usize>(), n);
            Ok(durations)
        }
    }
}

/// Repeat row `i` of `hidden` exactly `durations[i]` times, order-preserving.
/// When `expected_total` is given the durations must sum to it exactly.
pub fn upsample(
    hidden: &Tensor,
    durations: &[usize],
    expected_total: Option<usize>,
) -> Result<Tensor, ContentError> {
    if durations.len() != hidden.rows() {
        return Err(ContentError::LengthMismatch {
            rows: hidden.rows(),
            durations: durations.len(),
        });
    }
    if let Some(index) = durations.iter().position(|&d| d == 0) {
        return Err(ContentError::ZeroDuration { index });
    }
    let total: usize = durations.iter().sum();
    if let Some(expected) = expected_total {
        if total != expected {
            return Err(ContentError::BudgetMismatch {
                expected,
                got: total,
            });
        }
    }
    let mut tape = Tape::new();
    let h = tape.input(hidden.clone());
    let up = tape.repeat_rows(h, durations)?;
    Ok(tape.value(up).clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scorenet::{NetConfig, ScoreNet};
    use proptest::prelude::*;
    use rand::Rng;

    fn toy_encoder(seed: u64) -> ContentEncoder {
        let mut cfg = ContentConfig::toy_chars();
        cfg.seed = seed;
        ContentEncoder::init(cfg).unwrap()
    }

    #[test]
    fn single_token_gives_one_row() {
        let enc = toy_encoder(1);
        let h = enc.encode_content(&[4]).unwrap();
        assert_eq!(h.shape(), (1, enc.config().d));
    }

    #[test]
    fn identical_sequences_encode_identically() {
        let enc = toy_encoder(2);
        let a = enc.encode_content(&[0, 5, 3]).unwrap();
        let b = enc.encode_content(&[0, 5, 3]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn token_validation_errors() {
        let enc = toy_encoder(3);
        assert!(matches!(
            enc.encode_content(&[]),
            Err(ContentError::EmptyTokens)
        ));
        assert!(matches!(
            enc.encode_content(&[CHAR_VOCAB]),
            Err(ContentError::UnknownToken { .. })
        ));
        let long = vec![0usize; enc.config().max_len + 1];
        assert!(matches!(
            enc.encode_content(&long),
            Err(ContentError::TooLong { .. })
        ));
    }

    #[test]
    fn char_tokenizer_round_trip() {
        assert_eq!(tokenize_chars("ab z").unwrap(), vec![0, 1, 26, 25]);
        assert_eq!(tokenize_chars("AB").unwrap(), vec![0, 1]);
        assert!(matches!(
            tokenize_chars("a!b"),
            Err(ContentError::UnknownChar('!'))
        ));
    }

    #[test]
    fn empty_prompt_selects_null_condition() {
        let enc = toy_encoder(4);
        assert_eq!(enc.condition("", Some(8)).unwrap(), None);
        let some = enc.condition("hi", Some(8)).unwrap();
        assert_eq!(some.unwrap().shape(), (8, enc.config().d));
    }

    #[test]
    fn uniform_raw_rescales_evenly() {
        let d = integer_durations(&[0.7; 5], Some(10)).unwrap();
        assert_eq!(d, vec![2, 2, 2, 2, 2]);
    }

    #[test]
    fn skewed_raw_hits_budget_exactly() {
        let d = integer_durations(&[1.0, 1.0, 1.0, 1.0, 7.0], Some(10)).unwrap();
        assert_eq!(d.iter().sum::<usize>(), 10);
        assert!(d.iter().all(|&x| x >= 1));
        // With one guaranteed frame each, the five extras split as
        // [0.45, 0.45, 0.45, 0.45, 3.18]; the first two remainders win.
        assert_eq!(d, vec![2, 2, 1, 1, 4]);
    }

    #[test]
    fn budget_equal_to_length_gives_all_ones() {
        let d = integer_durations(&[3.0, 0.2, 9.0, 1.0], Some(4)).unwrap();
        assert_eq!(d, vec![1, 1, 1, 1]);
    }

    #[test]
    fn unbudgeted_rounding_floors_at_one() {
        let d = integer_durations(&[0.2, 1.6, 2.5, f64::NAN], None).unwrap();
        assert_eq!(d, vec![1, 2, 3, 1]);
    }

    #[test]
    fn degenerate_weights_fall_back_to_uniform() {
        let d = integer_durations(&[0.0, 0.0, 0.0], Some(9)).unwrap();
        assert_eq!(d, vec![3, 3, 3]);
    }

    #[test]
    fn budget_below_length_is_rejected() {
        assert!(matches!(
            integer_durations(&[1.0; 5], Some(4)),
            Err(ContentError::BudgetTooSmall { budget: 4, len: 5 })
        ));
    }

    proptest! {
        #[test]
        fn budgeted_durations_always_sum_exactly(
            raw in proptest::collection::vec(0.01f64..20.0, 1..12),
            extra in 0usize..40,
        ) {
            let n = raw.len() + extra;
            let d = integer_durations(&raw, Some(n)).unwrap();
            prop_assert_eq!(d.iter().sum::<usize>(), n);
            prop_assert!(d.iter().all(|&x| x >= 1));
        }
    }

    #[test]
    fn upsample_with_unit_durations_is_identity() {
        let h = Tensor::from_vec(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let up = upsample(&h, &[1, 1, 1], Some(3)).unwrap();
        assert_eq!(up, h);
    }

    #[test]
    fn upsample_repeats_rows_in_order() {
        let h = Tensor::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let up = upsample(&h, &[2, 1], None).unwrap();
        assert_eq!(up.data(), &[1.0, 2.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn upsample_validation_errors() {
        let h = Tensor::zeros(2, 2);
        assert!(matches!(
            upsample(&h, &[1], None),
            Err(ContentError::LengthMismatch { .. })
        ));
        assert!(matches!(
            upsample(&h, &[1, 0], None),
            Err(ContentError::ZeroDuration { index: 1 })
        ));
        assert!(matches!(
            upsample(&h, &[2, 2], Some(5)),
            Err(ContentError::BudgetMismatch { expected: 5, got: 4 })
        ));
    }

    #[test]
    fn upsampled_rows_match_duration_counts() {
        let enc = toy_encoder(5);
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        for _ in 0..20 {
            let l = rng.gen_range(1..6);
            let tokens: Vec<usize> = (0..l).map(|_| rng.gen_range(0..CHAR_VOCAB)).collect();
            let n = l + rng.gen_range(0..10);
            let seq = enc.process(&tokens, Some(n)).unwrap();
            assert_eq!(seq.upsampled.rows(), n);
            assert!(seq.tokens.len() <= seq.upsampled.rows());
            // Every output row is a copy of its source hidden row.
            let mut row = 0;
            for (i, &dur) in seq.durations.iter().enumerate() {
                for _ in 0..dur {
                    assert_eq!(seq.upsampled.row_slice(row), seq.hidden.row_slice(i));
                    row += 1;
                }
            }
        }
    }

    #[test]
    fn predicted_durations_are_positive() {
        let enc = toy_encoder(6);
        let h = enc.encode_content(&[1, 2, 3, 4]).unwrap();
        let raw = enc.predict_durations(&h).unwrap();
        assert_eq!(raw.len(), 4);
        assert!(raw.iter().all(|&r| r > 0.0 && r.is_finite()));
    }

    #[test]
    fn gradient_flows_through_upsampling_into_encoder() {
        // Composed model: content encoder -> repeat-upsample -> score
        // network -> squared error. The analytic gradients over BOTH
        // parameter sets must match finite differences, and the encoder
        // embedding must actually receive signal through the repeated rows.
        let enc = toy_encoder(7);
        let net = ScoreNet::init(NetConfig {
            d: 2,
            d_desc: 3,
            d_cont: enc.config().d,
            d_model: 6,
            n_cont_tokens_max: 6,
            n_timesteps: 16,
            layers: 1,
            seed: 70,
        })
        .unwrap();
        let tokens = [2usize, 9];
        let durations = [2usize, 1];
        let z = [0.4, -0.3];
        let t = 5;
        let eps = [0.9, -1.1];
        let desc = [0.2, -0.5, 0.1];

        let loss_of = |enc: &ContentEncoder, net: &ScoreNet| -> f64 {
            let mut tape = Tape::new();
            let (cnp, _) = enc.stage_params(&mut tape);
            let (snp, _) = net.stage_params(&mut tape);
            let h = enc.encode_on_tape(&mut tape, &cnp, &tokens).unwrap();
            let up = tape.repeat_rows(h, &durations).unwrap();
            let desc_node = tape.input(Tensor::row(&desc));
            let out = net
                .forward_on_tape(&mut tape, &snp, &z, t, desc_node, up)
                .unwrap();
            let target = tape.input(Tensor::row(&eps));
            let diff = tape.sub(out, target).unwrap();
            let loss = tape.sumsq(diff);
            tape.value(loss).as_scalar().unwrap()
        };

        // Analytic pass.
        let mut tape = Tape::new();
        let (cnp, cids) = enc.stage_params(&mut tape);
        let (snp, sids) = net.stage_params(&mut tape);
        let h = enc.encode_on_tape(&mut tape, &cnp, &tokens).unwrap();
        let up = tape.repeat_rows(h, &durations).unwrap();
        let desc_node = tape.input(Tensor::row(&desc));
        let out = net
            .forward_on_tape(&mut tape, &snp, &z, t, desc_node, up)
            .unwrap();
        let target = tape.input(Tensor::row(&eps));
        let diff = tape.sub(out, target).unwrap();
        let loss = tape.sumsq(diff);
        tape.backward(loss).unwrap();

        let embed_grad_norm: f64 = tape.grad(cids[0]).data().iter().map(|g| g * g).sum();
        assert!(
            embed_grad_norm > 1e-12,
            "no gradient reached the embedding through the upsampled rows"
        );

        let h_fd = 1e-5;
        // Staged encoder tensors (embedding and feed-forward block).
        for (slot, id) in cids.iter().enumerate() {
            let analytic = tape.grad(*id).clone();
            for k in 0..analytic.data().len() {
                let mut plus = enc.clone();
                plus.trainable_mut()[slot].data_mut()[k] += h_fd;
                let mut minus = enc.clone();
                minus.trainable_mut()[slot].data_mut()[k] -= h_fd;
                let numeric = (loss_of(&plus, &net) - loss_of(&minus, &net)) / (2.0 * h_fd);
                let a = analytic.data()[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
                assert!(rel < 1e-4, "encoder tensor {slot} entry {k}: rel {rel}");
            }
        }
        // Score network tensors.
        for (slot, id) in sids.iter().enumerate() {
            let analytic = tape.grad(*id).clone();
            for k in 0..analytic.data().len() {
                let mut plus = net.clone();
                plus.trainable_mut()[slot].data_mut()[k] += h_fd;
                let mut minus = net.clone();
                minus.trainable_mut()[slot].data_mut()[k] -= h_fd;
                let numeric = (loss_of(&enc, &plus) - loss_of(&enc, &minus)) / (2.0 * h_fd);
                let a = analytic.data()[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
                assert!(rel < 1e-4, "net tensor {slot} entry {k}: rel {rel}");
            }
        }
    }
}
