//! Trainable noise-prediction network with two conditioning paths.
//!
//! The network takes a noisy latent, a timestep, and a [`ConditionPair`]
//! holding an optional description vector and an optional content token
//! sequence. The description is concatenated with a sinusoidal timestep
//! embedding and projected into the trunk input; the content sequence is read
//! through one cross-attention block. Absent conditions are replaced by
//! dedicated learned null embeddings rather than zeros, so "no condition" is
//! a point the network can distinguish from real data.
//!
//! At full scale this role is played by a U-Net; here the backbone is an MLP
//! trunk plus single-head cross-attention, which keeps the two conditioning
//! pathways intact while staying small enough for finite-difference gradient
//! validation (see [`ScoreNet::grad_check`]).
//!
//! Training minimizes the standard re-weighted denoising objective: sample a
//! timestep and a Gaussian noise vector, form the noisy latent, and regress
//! the network output onto the noise with squared error, with each condition
//! independently dropped at some probability so all four condition masks stay
//! trainable.

use crate::diffusion::{
    forward_diffuse, ConditionMask, DiffusionError, Latent, NoisePrediction, NoiseSchedule,
};
use crate::tape::{NodeId, Tape, TapeError, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScoreNetError {
    #[error("invalid network config: {0}")]
    BadConfig(String),
    #[error("latent dimension {got} does not match configured d = {expected}")]
    LatentDimMismatch { expected: usize, got: usize },
    #[error("description vector has length {got}, expected {expected}")]
    DescDimMismatch { expected: usize, got: usize },
    #[error("content tokens have width {got}, expected {expected}")]
    ContDimMismatch { expected: usize, got: usize },
    #[error("content sequence has {got} tokens, limit is {max}")]
    TooManyTokens { got: usize, max: usize },
    #[error("content sequence is empty; use a null condition instead")]
    EmptyContent,
    #[error("timestep {t} outside embedding table of {max} steps")]
    TimestepOutOfRange { t: usize, max: usize },
    #[error("dropout probability {0} outside [0, 1]")]
    BadDropout(f64),
    #[error("training batch is empty")]
    EmptyBatch,
    #[error("non-finite value in {context}; diagnostics: {diagnostics}")]
    NonFinite { context: String, diagnostics: String },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("checkpoint tensor {name} has shape {got_rows}x{got_cols}, expected {rows}x{cols}")]
    CheckpointShape {
        name: String,
        rows: usize,
        cols: usize,
        got_rows: usize,
        got_cols: usize,
    },
    #[error("checkpoint i/o: {0}")]
    CheckpointIo(#[from] std::io::Error),
    #[error("checkpoint encoding: {0}")]
    CheckpointFormat(#[from] serde_json::Error),
    #[error(transparent)]
    Tape(#[from] TapeError),
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// Dimensions and seed for a [`ScoreNet`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetConfig {
    /// Latent dimension.
    pub d: usize,
    /// Description-condition dimension.
    pub d_desc: usize,
    /// Width of each content token.
    pub d_cont: usize,
    /// Hidden width of the trunk.
    pub d_model: usize,
    /// Maximum content sequence length.
    pub n_cont_tokens_max: usize,
    /// Size of the timestep embedding table; timesteps must stay below this.
    pub n_timesteps: usize,
    /// Number of residual trunk blocks. Zero is allowed and leaves the trunk
    /// as the conditioning sum alone.
    pub layers: usize,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl NetConfig {
    /// Small configuration suitable for the toy worlds and for
    /// finite-difference validation.
    pub fn toy() -> Self {
        NetConfig {
            d: 2,
            d_desc: 3,
            d_cont: 3,
            d_model: 32,
            n_cont_tokens_max: 8,
            n_timesteps: 1000,
            layers: 2,
            seed: 7,
        }
    }

    pub fn validate(&self) -> Result<(), ScoreNetError> {
        let dims = [
            ("d", self.d),
            ("d_desc", self.d_desc),
            ("d_cont", self.d_cont),
            ("d_model", self.d_model),
            ("n_cont_tokens_max", self.n_cont_tokens_max),
            ("n_timesteps", self.n_timesteps),
        ];
        for (name, v) in dims {
            if v == 0 {
                return Err(ScoreNetError::BadConfig(format!("{name} must be >= 1")));
            }
        }
        Ok(())
    }
}

/// One residual feed-forward block of the trunk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrunkLayer {
    pub w1: Tensor,
    pub b1: Tensor,
    pub w2: Tensor,
}

/// Named parameter tensors. The sinusoidal tables (`t_emb`, `pos_tags`) are
/// stored alongside the trainable tensors but never receive optimizer
/// updates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    /// Learned stand-in for an absent description condition.
    pub null_desc: Tensor,
    /// Learned stand-in for an absent content sequence (a single token).
    pub null_cont: Tensor,
    pub w_in: Tensor,
    pub b_in: Tensor,
    /// Projects the concatenated (description, timestep embedding) row.
    pub w_cond: Tensor,
    pub b_cond: Tensor,
    pub w_q: Tensor,
    pub w_k: Tensor,
    pub w_v: Tensor,
    pub w_o: Tensor,
    pub trunk: Vec<TrunkLayer>,
    pub w_out: Tensor,
    pub b_out: Tensor,
    /// Sinusoidal timestep embedding table, `n_timesteps x d_model`. Fixed.
    pub t_emb: Tensor,
    /// Sinusoidal positional tags added to content tokens, fixed.
    pub pos_tags: Tensor,
}

/// Sinusoidal embedding table: row `p` interleaves `sin(p / 10000^(2i/dim))`
/// and `cos` of the same angle.
pub fn sinusoidal_table(rows: usize, dim: usize) -> Tensor {
    Tensor::from_fn(rows, dim, |pos, j| {
        let i = (j / 2) as f64;
        let angle = pos as f64 / 10000f64.powf(2.0 * i / dim as f64);
        if j % 2 == 0 {
            angle.sin()
        } else {
            angle.cos()
        }
    })
}

fn randn_tensor(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Tensor {
    Tensor::from_fn(rows, cols, |_, _| {
        scale * rng.sample::<f64, _>(StandardNormal)
    })
}

/// The two conditioning inputs. `None` selects the learned null embedding for
/// that path.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionPair {
    pub desc: Option<Vec<f64>>,
    /// Content tokens as an `L x d_cont` matrix, already encoded.
    pub cont: Option<Tensor>,
}

impl ConditionPair {
    pub fn null() -> Self {
        ConditionPair {
            desc: None,
            cont: None,
        }
    }

    pub fn new(desc: Option<Vec<f64>>, cont: Option<Tensor>) -> Self {
        ConditionPair { desc, cont }
    }

    /// One-hot description over `n_desc` labels and a single one-hot content
    /// token over `n_cont` labels; the encoding used with the toy worlds.
    pub fn one_hot(desc_label: usize, n_desc: usize, cont_label: usize, n_cont: usize) -> Self {
        ConditionPair {
            desc: Some(one_hot_vec(desc_label, n_desc)),
            cont: Some(Tensor::row(&one_hot_vec(cont_label, n_cont))),
        }
    }

    /// Which conditions are present.
    pub fn mask(&self) -> ConditionMask {
        match (self.desc.is_some(), self.cont.is_some()) {
            (true, true) => ConditionMask::Both,
            (true, false) => ConditionMask::DescOnly,
            (false, true) => ConditionMask::ContOnly,
            (false, false) => ConditionMask::Neither,
        }
    }

    /// Keep only the conditions the mask allows; the rest become null.
    pub fn masked(&self, mask: ConditionMask) -> ConditionPair {
        ConditionPair {
            desc: if mask.has_desc() {
                self.desc.clone()
            } else {
                None
            },
            cont: if mask.has_cont() {
                self.cont.clone()
            } else {
                None
            },
        }
    }
}

fn one_hot_vec(label: usize, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    if label < n {
        v[label] = 1.0;
    }
    v
}

/// Draws the dropout mask used by [`Trainer::training_step`]: each condition
/// is independently dropped with probability `p`, so at p = 0.1 the four
/// masks occur with frequencies (0.81, 0.09, 0.09, 0.01).
pub fn dropout_mask(rng: &mut ChaCha8Rng, p: f64) -> ConditionMask {
    let keep_desc = rng.gen::<f64>() >= p;
    let keep_cont = rng.gen::<f64>() >= p;
    match (keep_desc, keep_cont) {
        (true, true) => ConditionMask::Both,
        (true, false) => ConditionMask::DescOnly,
        (false, true) => ConditionMask::ContOnly,
        (false, false) => ConditionMask::Neither,
    }
}

/// One supervised regression target: predict `eps` from `(z_t, t, cond)`.
#[derive(Clone, Debug)]
pub struct TrainSample {
    pub z_t: Vec<f64>,
    pub t: usize,
    pub eps: Vec<f64>,
    pub cond: ConditionPair,
}

/// Per-tensor result of a finite-difference gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub per_tensor: Vec<(String, f64)>,
}

/// Node handles for every trainable tensor staged on a tape.
pub(crate) struct NodeParams {
    null_desc: NodeId,
    null_cont: NodeId,
    w_in: NodeId,
    b_in: NodeId,
    w_cond: NodeId,
    b_cond: NodeId,
    w_q: NodeId,
    w_k: NodeId,
    w_v: NodeId,
    w_o: NodeId,
    trunk: Vec<(NodeId, NodeId, NodeId)>,
    w_out: NodeId,
    b_out: NodeId,
}

/// The score network: configuration plus parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreNet {
    config: NetConfig,
    params: Params,
}

impl ScoreNet {
    /// Random initialization, deterministic in `config.seed`.
    pub fn init(config: NetConfig) -> Result<Self, ScoreNetError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let d = config.d;
        let dd = config.d_desc;
        let dc = config.d_cont;
        let dm = config.d_model;
        let sc = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let trunk = (0..config.layers)
            .map(|_| TrunkLayer {
                w1: randn_tensor(&mut rng, dm, dm, sc(dm)),
                b1: Tensor::zeros(1, dm),
                w2: randn_tensor(&mut rng, dm, dm, sc(dm)),
            })
            .collect();
        let params = Params {
            null_desc: randn_tensor(&mut rng, 1, dd, 0.5),
            null_cont: randn_tensor(&mut rng, 1, dc, 0.5),
            w_in: randn_tensor(&mut rng, d, dm, sc(d)),
            b_in: Tensor::zeros(1, dm),
            w_cond: randn_tensor(&mut rng, dd + dm, dm, sc(dd + dm)),
            b_cond: Tensor::zeros(1, dm),
            w_q: randn_tensor(&mut rng, dm, dm, sc(dm)),
            w_k: randn_tensor(&mut rng, dc, dm, sc(dc)),
            w_v: randn_tensor(&mut rng, dc, dm, sc(dc)),
            w_o: randn_tensor(&mut rng, dm, dm, sc(dm)),
            trunk,
            w_out: randn_tensor(&mut rng, dm, d, sc(dm)),
            b_out: Tensor::zeros(1, d),
            t_emb: sinusoidal_table(config.n_timesteps, dm),
            pos_tags: sinusoidal_table(config.n_cont_tokens_max, dc),
        };
        Ok(ScoreNet { config, params })
    }

    pub fn config(&self) -> &NetConfig {
        &self.config
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Names of the trainable tensors, in the order used by
    /// [`ScoreNet::trainable`] and the optimizer state.
    pub fn tensor_names(&self) -> Vec<String> {
        let mut names = vec![
            "null_desc".to_string(),
            "null_cont".to_string(),
            "w_in".to_string(),
            "b_in".to_string(),
            "w_cond".to_string(),
            "b_cond".to_string(),
            "w_q".to_string(),
            "w_k".to_string(),
            "w_v".to_string(),
            "w_o".to_string(),
        ];
        for i in 0..self.params.trunk.len() {
            names.push(format!("trunk.{i}.w1"));
            names.push(format!("trunk.{i}.b1"));
            names.push(format!("trunk.{i}.w2"));
        }
        names.push("w_out".to_string());
        names.push("b_out".to_string());
        names
    }

    pub(crate) fn trainable(&self) -> Vec<&Tensor> {
        let p = &self.params;
        let mut v = vec![
            &p.null_desc,
            &p.null_cont,
            &p.w_in,
            &p.b_in,
            &p.w_cond,
            &p.b_cond,
            &p.w_q,
            &p.w_k,
            &p.w_v,
            &p.w_o,
        ];
        for layer in &p.trunk {
            v.push(&layer.w1);
            v.push(&layer.b1);
            v.push(&layer.w2);
        }
        v.push(&p.w_out);
        v.push(&p.b_out);
        v
    }

    pub(crate) fn trainable_mut(&mut self) -> Vec<&mut Tensor> {
        let p = &mut self.params;
        let mut v: Vec<&mut Tensor> = vec![
            &mut p.null_desc,
            &mut p.null_cont,
            &mut p.w_in,
            &mut p.b_in,
            &mut p.w_cond,
            &mut p.b_cond,
            &mut p.w_q,
            &mut p.w_k,
            &mut p.w_v,
            &mut p.w_o,
        ];
        for layer in &mut p.trunk {
            v.push(&mut layer.w1);
            v.push(&mut layer.b1);
            v.push(&mut layer.w2);
        }
        v.push(&mut p.w_out);
        v.push(&mut p.b_out);
        v
    }

    /// Stage every trainable tensor as a tape input. Returns the structured
    /// handles plus the flat id list in `tensor_names` order.
    pub(crate) fn stage_params(&self, tape: &mut Tape) -> (NodeParams, Vec<NodeId>) {
        let ids: Vec<NodeId> = self
            .trainable()
            .into_iter()
            .map(|t| tape.input(t.clone()))
            .collect();
        let n_fixed = 10;
        let trunk = (0..self.params.trunk.len())
            .map(|i| {
                (
                    ids[n_fixed + 3 * i],
                    ids[n_fixed + 3 * i + 1],
                    ids[n_fixed + 3 * i + 2],
                )
            })
            .collect();
        let np = NodeParams {
            null_desc: ids[0],
            null_cont: ids[1],
            w_in: ids[2],
            b_in: ids[3],
            w_cond: ids[4],
            b_cond: ids[5],
            w_q: ids[6],
            w_k: ids[7],
            w_v: ids[8],
            w_o: ids[9],
            trunk,
            w_out: ids[ids.len() - 2],
            b_out: ids[ids.len() - 1],
        };
        (np, ids)
    }

    /// Validate a condition pair and stage it: real conditions become tape
    /// inputs, absent ones resolve to the staged null embeddings.
    pub(crate) fn stage_condition(
        &self,
        tape: &mut Tape,
        np: &NodeParams,
        c: &ConditionPair,
    ) -> Result<(NodeId, NodeId), ScoreNetError> {
        let desc_node = match &c.desc {
            Some(v) => {
                if v.len() != self.config.d_desc {
                    return Err(ScoreNetError::DescDimMismatch {
                        expected: self.config.d_desc,
                        got: v.len(),
                    });
                }
                tape.input(Tensor::row(v))
            }
            None => np.null_desc,
        };
        let cont_node = match &c.cont {
            Some(m) => {
                if m.rows() == 0 {
                    return Err(ScoreNetError::EmptyContent);
                }
                if m.cols() != self.config.d_cont {
                    return Err(ScoreNetError::ContDimMismatch {
                        expected: self.config.d_cont,
                        got: m.cols(),
                    });
                }
                if m.rows() > self.config.n_cont_tokens_max {
                    return Err(ScoreNetError::TooManyTokens {
                        got: m.rows(),
                        max: self.config.n_cont_tokens_max,
                    });
                }
                tape.input(m.clone())
            }
            None => np.null_cont,
        };
        Ok((desc_node, cont_node))
    }

    /// Record the full forward pass on a tape. `desc` is a `1 x d_desc` node
    /// and `cont` an `L x d_cont` node; either may be the corresponding null
    /// embedding, or the output of a content encoder when training end to
    /// end. Returns the `1 x d` noise-prediction node.
    pub(crate) fn forward_on_tape(
        &self,
        tape: &mut Tape,
        np: &NodeParams,
        z_t: &[f64],
        t: usize,
        desc: NodeId,
        cont: NodeId,
    ) -> Result<NodeId, ScoreNetError> {
        if z_t.len() != self.config.d {
            return Err(ScoreNetError::LatentDimMismatch {
                expected: self.config.d,
                got: z_t.len(),
            });
        }
        if t >= self.config.n_timesteps {
            return Err(ScoreNetError::TimestepOutOfRange {
                t,
                max: self.config.n_timesteps,
            });
        }
        let n_tok = tape.value(cont).rows();
        if n_tok > self.config.n_cont_tokens_max {
            return Err(ScoreNetError::TooManyTokens {
                got: n_tok,
                max: self.config.n_cont_tokens_max,
            });
        }

        let z = tape.input(Tensor::row(z_t));
        let temb = tape.input(Tensor::row(self.params.t_emb.row_slice(t)));

        // Trunk input: latent projection plus the projected concatenation of
        // the description condition with the timestep embedding.
        let zin = tape.matmul(z, np.w_in)?;
        let zin = tape.add(zin, np.b_in)?;
        let cond_cat = tape.concat_cols(desc, temb)?;
        let cond = tape.matmul(cond_cat, np.w_cond)?;
        let cond = tape.add(cond, np.b_cond)?;
        let pre = tape.add(zin, cond)?;
        let h0 = tape.silu(pre);

        // Single-head cross-attention read over the positionally tagged
        // content tokens.
        let tags = tape.input(Tensor::from_fn(n_tok, self.config.d_cont, |i, j| {
            self.params.pos_tags.get(i, j)
        }));
        let tokens = tape.add(cont, tags)?;
        let q = tape.matmul(h0, np.w_q)?;
        let k = tape.matmul(tokens, np.w_k)?;
        let v = tape.matmul(tokens, np.w_v)?;
        let kt = tape.transpose(k);
        let scores = tape.matmul(q, kt)?;
        let scores = tape.scale(scores, 1.0 / (self.config.d_model as f64).sqrt());
        let attn = tape.softmax_rows(scores);
        let read = tape.matmul(attn, v)?;
        let read = tape.matmul(read, np.w_o)?;
        let mut h = tape.add(h0, read)?;

        for &(w1, b1, w2) in &np.trunk {
            let a = tape.matmul(h, w1)?;
            let a = tape.add(a, b1)?;
            let a = tape.silu(a);
            let a = tape.matmul(a, w2)?;
            h = tape.add(h, a)?;
        }

        let out = tape.matmul(h, np.w_out)?;
        let out = tape.add(out, np.b_out)?;
        Ok(out)
    }

    /// Deterministic forward pass. Identical inputs give identical outputs.
    pub fn predict_noise(
        &self,
        z_t: &Latent,
        t: usize,
        c: &ConditionPair,
    ) -> Result<NoisePrediction, ScoreNetError> {
        let mut tape = Tape::new();
        let (np, _) = self.stage_params(&mut tape);
        let (desc, cont) = self.stage_condition(&mut tape, &np, c)?;
        let out = self.forward_on_tape(&mut tape, &np, &z_t.values, t, desc, cont)?;
        let values = tape.value(out).data().to_vec();
        if values.iter().any(|x| !x.is_finite()) {
            return Err(ScoreNetError::NonFinite {
                context: "predict_noise output".to_string(),
                diagnostics: format!("t = {t}, z_t = {:?}", z_t.values),
            });
        }
        Ok(NoisePrediction::new(values))
    }

    /// Squared-error loss of one sample: `|eps - eps_hat|^2`.
    pub fn sample_loss(&self, s: &TrainSample) -> Result<f64, ScoreNetError> {
        let (loss, _, _) = self.sample_loss_tape(s)?;
        Ok(loss)
    }

    fn sample_loss_tape(&self, s: &TrainSample) -> Result<(f64, Tape, Vec<NodeId>), ScoreNetError> {
        if s.eps.len() != self.config.d {
            return Err(ScoreNetError::LatentDimMismatch {
                expected: self.config.d,
                got: s.eps.len(),
            });
        }
        let mut tape = Tape::new();
        let (np, ids) = self.stage_params(&mut tape);
        let (desc, cont) = self.stage_condition(&mut tape, &np, &s.cond)?;
        let out = self.forward_on_tape(&mut tape, &np, &s.z_t, s.t, desc, cont)?;
        let target = tape.input(Tensor::row(&s.eps));
        let diff = tape.sub(out, target)?;
        let loss = tape.sumsq(diff);
        let loss_value = tape.value(loss).as_scalar().expect("sumsq is scalar");
        tape.backward(loss)?;
        Ok((loss_value, tape, ids))
    }

    /// Loss and analytic gradients with respect to every trainable tensor,
    /// in `tensor_names` order.
    pub fn sample_loss_grads(
        &self,
        s: &TrainSample,
    ) -> Result<(f64, Vec<Tensor>), ScoreNetError> {
        let (loss, tape, ids) = self.sample_loss_tape(s)?;
        let grads = ids.iter().map(|id| tape.grad(*id).clone()).collect();
        Ok((loss, grads))
    }

    /// Compare analytic gradients against central finite differences with
    /// step `h` for every parameter entry. Returns the worst relative error,
    /// computed against an absolute floor of 1e-2 so near-zero gradients do
    /// not inflate finite-difference rounding noise.
    pub fn grad_check(&self, s: &TrainSample, h: f64) -> Result<GradCheckReport, ScoreNetError> {
        let (_, analytic) = self.sample_loss_grads(s)?;
        self.compare_grads(s, h, &analytic)
    }

    fn compare_grads(
        &self,
        s: &TrainSample,
        h: f64,
        analytic: &[Tensor],
    ) -> Result<GradCheckReport, ScoreNetError> {
        let names = self.tensor_names();
        let mut per_tensor = Vec::with_capacity(names.len());
        let mut max_rel = 0.0f64;
        for (idx, name) in names.iter().enumerate() {
            let n_entries = analytic[idx].data().len();
            let mut worst = 0.0f64;
            for k in 0..n_entries {
                let mut plus = self.clone();
                plus.trainable_mut()[idx].data_mut()[k] += h;
                let mut minus = self.clone();
                minus.trainable_mut()[idx].data_mut()[k] -= h;
                let numeric = (plus.sample_loss(s)? - minus.sample_loss(s)?) / (2.0 * h);
                let a = analytic[idx].data()[k];
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-2);
                if rel > worst {
                    worst = rel;
                }
            }
            if worst > max_rel {
                max_rel = worst;
            }
            per_tensor.push((name.clone(), worst));
        }
        Ok(GradCheckReport {
            max_rel_error: max_rel,
            per_tensor,
        })
    }
}

/// One training step's outcome: the mean batch loss and the dropout mask
/// drawn for each item, in batch order.
#[derive(Clone, Debug)]
pub struct StepReport {
    pub loss: f64,
    pub masks: Vec<ConditionMask>,
}

/// Adam optimizer state wrapped around a [`ScoreNet`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Trainer {
    net: ScoreNet,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps_adam: f64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    step: u64,
}

impl Trainer {
    /// The learning rate matching the reference full-scale configuration.
    /// Toy problems converge far faster with larger rates.
    pub const DEFAULT_LR: f64 = 2e-5;

    pub fn new(net: ScoreNet, lr: f64) -> Self {
        let (m, v) = Self::zero_moments(&net);
        Trainer {
            net,
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps_adam: 1e-8,
            m,
            v,
            step: 0,
        }
    }

    fn zero_moments(net: &ScoreNet) -> (Vec<Tensor>, Vec<Tensor>) {
        let zeros: Vec<Tensor> = net
            .trainable()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        (zeros.clone(), zeros)
    }

    pub fn net(&self) -> &ScoreNet {
        &self.net
    }

    pub fn into_net(self) -> ScoreNet {
        self.net
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One optimizer step on a batch of clean latents with their conditions.
    ///
    /// For each item: draw a uniform timestep and a standard-normal noise
    /// vector, form the noisy latent, independently drop each condition with
    /// probability `dropout_p`, and accumulate the squared-error gradient.
    /// The mean loss over the batch is returned along with the per-item
    /// dropout masks. A non-finite loss aborts before any parameter update.
    pub fn training_step(
        &mut self,
        batch: &[(Vec<f64>, ConditionPair)],
        schedule: &NoiseSchedule,
        dropout_p: f64,
        rng: &mut ChaCha8Rng,
    ) -> Result<StepReport, ScoreNetError> {
        if batch.is_empty() {
            return Err(ScoreNetError::EmptyBatch);
        }
        if !(0.0..=1.0).contains(&dropout_p) || !dropout_p.is_finite() {
            return Err(ScoreNetError::BadDropout(dropout_p));
        }
        let d = self.net.config.d;
        let inv_b = 1.0 / batch.len() as f64;
        let mut grad_acc: Vec<Tensor> = self
            .net
            .trainable()
            .iter()
            .map(|t| Tensor::zeros(t.rows(), t.cols()))
            .collect();
        let mut total_loss = 0.0;
        let mut masks = Vec::with_capacity(batch.len());

        for (i, (z0, cond)) in batch.iter().enumerate() {
            if z0.len() != d {
                return Err(ScoreNetError::LatentDimMismatch {
                    expected: d,
                    got: z0.len(),
                });
            }
            let t = rng.gen_range(0..schedule.steps().min(self.net.config.n_timesteps));
            let eps: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let mask = dropout_mask(rng, dropout_p);
            masks.push(mask);
            let z_t = forward_diffuse(
                &Latent::clean(z0.clone()),
                t,
                &NoisePrediction::new(eps.clone()),
                schedule,
            )?;
            let sample = TrainSample {
                z_t: z_t.values,
                t,
                eps,
                cond: cond.masked(mask),
            };
            let (loss, grads) = self.net.sample_loss_grads(&sample)?;
            if !loss.is_finite() {
                return Err(ScoreNetError::NonFinite {
                    context: format!("training loss for batch item {i}"),
                    diagnostics: format!(
                        "t = {}, z0 = {:?}, mask = {:?}, step = {}",
                        sample.t, z0, mask, self.step
                    ),
                });
            }
            total_loss += loss * inv_b;
            for (acc, g) in grad_acc.iter_mut().zip(&grads) {
                for (a, x) in acc.data_mut().iter_mut().zip(g.data()) {
                    *a += x * inv_b;
                }
            }
        }

        self.apply_adam(&grad_acc)?;
        Ok(StepReport {
            loss: total_loss,
            masks,
        })
    }

    fn apply_adam(&mut self, grads: &[Tensor]) -> Result<(), ScoreNetError> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.beta1.powf(t);
        let bc2 = 1.0 - self.beta2.powf(t);
        for ((m, v), g) in self.m.iter_mut().zip(self.v.iter_mut()).zip(grads) {
            for ((mi, vi), gi) in m
                .data_mut()
                .iter_mut()
                .zip(v.data_mut().iter_mut())
                .zip(g.data())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
            }
        }
        // A zero learning rate must leave parameters bit-identical, so the
        // update loop is skipped entirely rather than adding a zero.
        if self.lr != 0.0 {
            let lr = self.lr;
            let eps = self.eps_adam;
            let m = &self.m;
            let v = &self.v;
            for (idx, p) in self.net.trainable_mut().into_iter().enumerate() {
                for ((pi, mi), vi) in p
                    .data_mut()
                    .iter_mut()
                    .zip(m[idx].data())
                    .zip(v[idx].data())
                {
                    let m_hat = mi / bc1;
                    let v_hat = vi / bc2;
                    *pi -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
        let names = self.net.tensor_names();
        for (idx, p) in self.net.trainable().iter().enumerate() {
            if p.data().iter().any(|x| !x.is_finite()) {
                return Err(ScoreNetError::NonFinite {
                    context: format!("parameter tensor {} after optimizer step", names[idx]),
                    diagnostics: format!("step = {}", self.step),
                });
            }
        }
        Ok(())
    }
}

const CHECKPOINT_VERSION: u32 = 1;

/// Serializable training state: network, optimizer moments, and the RNG
/// position, so a resumed run continues the exact same trajectory.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub trainer: Trainer,
    pub rng: ChaCha8Rng,
}

impl Checkpoint {
    pub fn new(trainer: &Trainer, rng: &ChaCha8Rng) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            trainer: trainer.clone(),
            rng: rng.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ScoreNetError> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ScoreNetError> {
        let json = std::fs::read_to_string(path)?;
        let ck: Checkpoint = serde_json::from_str(&json)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(ScoreNetError::CheckpointVersion {
                found: ck.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        ck.trainer.net.config.validate()?;
        Ok(ck)
    }

    pub fn into_parts(self) -> (Trainer, ChaCha8Rng) {
        (self.trainer, self.rng)
    }
}

/// Adapter from a trained network to the guided sampler's interface: a base
/// condition pair is fixed, and each mask evaluation nulls the corresponding
/// parts before calling [`ScoreNet::predict_noise`].
pub fn masked_predictor<'a>(
    net: &'a ScoreNet,
    base: &'a ConditionPair,
) -> impl Fn(&Latent, usize, ConditionMask) -> Result<NoisePrediction, DiffusionError> + Sync + 'a {
    move |z, t, mask| {
        net.predict_noise(z, t, &base.masked(mask))
            .map_err(|e| DiffusionError::ScoreFn(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::ToyWorld;
    use rand::SeedableRng;

    fn tiny_config(seed: u64) -> NetConfig {
        NetConfig {
            d: 2,
            d_desc: 3,
            d_cont: 3,
            d_model: 6,
            n_cont_tokens_max: 4,
            n_timesteps: 16,
            layers: 1,
            seed,
        }
    }

    fn random_sample(net: &ScoreNet, rng: &mut ChaCha8Rng, mask: ConditionMask) -> TrainSample {
        let cfg = net.config();
        let cond = ConditionPair::new(
            Some((0..cfg.d_desc).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()),
            Some(Tensor::from_fn(3, cfg.d_cont, |_, _| {
                rng.sample::<f64, _>(StandardNormal)
            })),
        )
        .masked(mask);
        TrainSample {
            z_t: (0..cfg.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            t: rng.gen_range(0..cfg.n_timesteps),
            eps: (0..cfg.d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            cond,
        }
    }

    #[test]
    fn config_rejects_zero_dims() {
        let mut cfg = tiny_config(1);
        cfg.d_model = 0;
        assert!(matches!(
            ScoreNet::init(cfg),
            Err(ScoreNetError::BadConfig(_))
        ));
    }

    #[test]
    fn null_condition_forward_is_deterministic() {
        let net = ScoreNet::init(tiny_config(2)).unwrap();
        let z = Latent::at(vec![0.3, -0.8], 5);
        let a = net.predict_noise(&z, 5, &ConditionPair::null()).unwrap();
        let b = net.predict_noise(&z, 5, &ConditionPair::null()).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn output_dimension_matches_config() {
        let net = ScoreNet::init(tiny_config(3)).unwrap();
        let z = Latent::at(vec![0.1, 0.2], 0);
        let c = ConditionPair::one_hot(1, 3, 2, 3);
        let out = net.predict_noise(&z, 0, &c).unwrap();
        assert_eq!(out.dim(), 2);
    }

    #[test]
    fn permuting_content_tokens_changes_output() {
        let net = ScoreNet::init(tiny_config(4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let tokens = Tensor::from_fn(3, 3, |_, _| rng.sample::<f64, _>(StandardNormal));
        let permuted = Tensor::from_fn(3, 3, |i, j| tokens.get(2 - i, j));
        let z = Latent::at(vec![0.4, -0.2], 7);
        let a = net
            .predict_noise(&z, 7, &ConditionPair::new(None, Some(tokens)))
            .unwrap();
        let b = net
            .predict_noise(&z, 7, &ConditionPair::new(None, Some(permuted)))
            .unwrap();
        let diff: f64 = a
            .values
            .iter()
            .zip(&b.values)
            .map(|(x, y)| (x - y).abs())
            .sum();
        assert!(
            diff > 1e-9,
            "positional tags should make token order matter, diff = {diff}"
        );
    }

    #[test]
    fn input_validation_errors() {
        let net = ScoreNet::init(tiny_config(5)).unwrap();
        let c = ConditionPair::null();
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![1.0], 0), 0, &c),
            Err(ScoreNetError::LatentDimMismatch { .. })
        ));
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![0.0, 0.0], 99), 99, &c),
            Err(ScoreNetError::TimestepOutOfRange { .. })
        ));
        let bad_desc = ConditionPair::new(Some(vec![1.0; 5]), None);
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![0.0, 0.0], 0), 0, &bad_desc),
            Err(ScoreNetError::DescDimMismatch { .. })
        ));
        let bad_cont = ConditionPair::new(None, Some(Tensor::zeros(2, 7)));
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![0.0, 0.0], 0), 0, &bad_cont),
            Err(ScoreNetError::ContDimMismatch { .. })
        ));
        let long_cont = ConditionPair::new(None, Some(Tensor::zeros(9, 3)));
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![0.0, 0.0], 0), 0, &long_cont),
            Err(ScoreNetError::TooManyTokens { .. })
        ));
        let empty_cont = ConditionPair::new(None, Some(Tensor::zeros(0, 3)));
        assert!(matches!(
            net.predict_noise(&Latent::at(vec![0.0, 0.0], 0), 0, &empty_cont),
            Err(ScoreNetError::EmptyContent)
        ));
    }

    #[test]
    fn grad_check_full_network_five_seeds() {
        for seed in 0..5u64 {
            let net = ScoreNet::init(tiny_config(10 + seed)).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
            let mask = ConditionMask::ALL[(seed % 4) as usize];
            let sample = random_sample(&net, &mut rng, mask);
            let report = net.grad_check(&sample, 1e-5).unwrap();
            assert!(
                report.max_rel_error < 1e-4,
                "seed {seed}: worst relative error {} (per tensor: {:?})",
                report.max_rel_error,
                report.per_tensor
            );
        }
    }

    #[test]
    fn output_head_gradients_are_exact_for_quadratic_loss() {
        // The loss is exactly quadratic in the output head, so central
        // differences agree to rounding error there.
        let net = ScoreNet::init(tiny_config(20)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let sample = random_sample(&net, &mut rng, ConditionMask::Both);
        let report = net.grad_check(&sample, 1e-5).unwrap();
        for (name, err) in &report.per_tensor {
            if name == "w_out" || name == "b_out" {
                assert!(*err < 1e-8, "{name} error {err} above rounding scale");
            }
        }
    }

    #[test]
    fn corrupted_gradient_is_detected() {
        let net = ScoreNet::init(tiny_config(30)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let sample = random_sample(&net, &mut rng, ConditionMask::Both);
        let (_, mut grads) = net.sample_loss_grads(&sample).unwrap();
        let idx = net
            .tensor_names()
            .iter()
            .position(|n| n == "w_in")
            .unwrap();
        for g in grads[idx].data_mut() {
            *g = -*g;
        }
        let report = net.compare_grads(&sample, 1e-5, &grads).unwrap();
        assert!(
            report.max_rel_error > 0.1,
            "sign flip must be flagged, got {}",
            report.max_rel_error
        );
    }

    #[test]
    fn dropout_mask_frequencies_within_binomial_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let n = 10_000;
        let mut counts = [0usize; 4];
        for _ in 0..n {
            let m = dropout_mask(&mut rng, 0.1);
            let idx = ConditionMask::ALL.iter().position(|x| *x == m).unwrap();
            counts[idx] += 1;
        }
        let expected = [0.81, 0.09, 0.09, 0.01];
        for (i, &p) in expected.iter().enumerate() {
            let sigma = (p * (1.0 - p) / n as f64).sqrt();
            let observed = counts[i] as f64 / n as f64;
            assert!(
                (observed - p).abs() < 3.0 * sigma,
                "mask {:?}: observed {observed}, expected {p} +/- {}",
                ConditionMask::ALL[i],
                3.0 * sigma
            );
        }
    }

    #[test]
    fn zero_learning_rate_leaves_params_bit_identical() {
        let net = ScoreNet::init(tiny_config(50)).unwrap();
        let before = net.clone();
        let mut trainer = Trainer::new(net, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(51);
        let schedule = NoiseSchedule::linear(16, 1e-4, 0.02).unwrap();
        let batch = vec![(vec![0.5, -0.25], ConditionPair::one_hot(0, 3, 1, 3))];
        trainer
            .training_step(&batch, &schedule, 0.1, &mut rng)
            .unwrap();
        for (a, b) in before
            .trainable()
            .iter()
            .zip(trainer.net().trainable().iter())
        {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn full_dropout_trains_unconditionally() {
        // At dropout 1.0 every item is trained with both conditions nulled,
        // so the network never sees a real condition.
        let net = ScoreNet::init(tiny_config(60)).unwrap();
        let mut trainer = Trainer::new(net, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let schedule = NoiseSchedule::linear(16, 1e-4, 0.02).unwrap();
        let batch: Vec<_> = (0..8)
            .map(|i| {
                (
                    vec![i as f64 * 0.1, -0.2],
                    ConditionPair::one_hot(i % 3, 3, i % 3, 3),
                )
            })
            .collect();
        let report = trainer
            .training_step(&batch, &schedule, 1.0, &mut rng)
            .unwrap();
        assert!(report.masks.iter().all(|m| *m == ConditionMask::Neither));
    }

    #[test]
    fn training_step_validates_inputs() {
        let net = ScoreNet::init(tiny_config(70)).unwrap();
        let mut trainer = Trainer::new(net, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let schedule = NoiseSchedule::linear(16, 1e-4, 0.02).unwrap();
        assert!(matches!(
            trainer.training_step(&[], &schedule, 0.1, &mut rng),
            Err(ScoreNetError::EmptyBatch)
        ));
        let batch = vec![(vec![0.0, 0.0], ConditionPair::null())];
        assert!(matches!(
            trainer.training_step(&batch, &schedule, 1.5, &mut rng),
            Err(ScoreNetError::BadDropout(_))
        ));
    }

    #[test]
    fn nan_input_aborts_without_touching_params() {
        let net = ScoreNet::init(tiny_config(80)).unwrap();
        let before = net.clone();
        let mut trainer = Trainer::new(net, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(81);
        let schedule = NoiseSchedule::linear(16, 1e-4, 0.02).unwrap();
        let batch = vec![(vec![f64::NAN, 0.0], ConditionPair::null())];
        let err = trainer.training_step(&batch, &schedule, 0.1, &mut rng);
        assert!(matches!(err, Err(ScoreNetError::NonFinite { .. })));
        for (a, b) in before
            .trainable()
            .iter()
            .zip(trainer.net().trainable().iter())
        {
            assert_eq!(a.data(), b.data());
        }
    }

    #[test]
    fn training_reduces_loss_on_toy_world() {
        let world = ToyWorld::default_verification();
        let cfg = NetConfig {
            d: world.dim(),
            d_desc: world.n_desc_labels(),
            d_cont: world.n_cont_labels(),
            d_model: 24,
            n_cont_tokens_max: 4,
            n_timesteps: 1000,
            layers: 1,
            seed: 90,
        };
        let net = ScoreNet::init(cfg).unwrap();
        let mut trainer = Trainer::new(net, 2e-3);
        let schedule = NoiseSchedule::default_linear();
        let mut rng = ChaCha8Rng::seed_from_u64(91);
        let n_steps = 1200;
        let batch_size = 16;
        let mut losses = Vec::with_capacity(n_steps);
        for _ in 0..n_steps {
            let batch: Vec<_> = (0..batch_size)
                .map(|_| {
                    let (z0, a, b) = world.draw(None, None, &mut rng).unwrap();
                    (
                        z0.values,
                        ConditionPair::one_hot(
                            a,
                            world.n_desc_labels(),
                            b,
                            world.n_cont_labels(),
                        ),
                    )
                })
                .collect();
            let report = trainer
                .training_step(&batch, &schedule, 0.1, &mut rng)
                .unwrap();
            losses.push(report.loss);
        }
        // The loss at initialization sits near E|eps|^2 = d; ten steps at
        // this learning rate barely move it.
        let head: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let tail: f64 = losses[n_steps - 100..].iter().sum::<f64>() / 100.0;
        let d = world.dim() as f64;
        assert!(
            head > 0.5 * d && head < 2.5 * d,
            "initial loss {head} far from the expected plateau near {d}"
        );
        assert!(
            tail < 0.8 * head,
            "no training progress: first-10 mean {head}, last-100 mean {tail}"
        );
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact() {
        let net = ScoreNet::init(tiny_config(100)).unwrap();
        let mut trainer = Trainer::new(net, 1e-3);
        let mut rng = ChaCha8Rng::seed_from_u64(101);
        let schedule = NoiseSchedule::linear(16, 1e-4, 0.02).unwrap();
        let batch = vec![
            (vec![0.2, 0.4], ConditionPair::one_hot(0, 3, 1, 3)),
            (vec![-0.3, 0.1], ConditionPair::one_hot(2, 3, 0, 3)),
        ];
        for _ in 0..3 {
            trainer
                .training_step(&batch, &schedule, 0.1, &mut rng)
                .unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ckpt.json");
        Checkpoint::new(&trainer, &rng).save(&path).unwrap();
        let (mut restored, mut rng2) = Checkpoint::load(&path).unwrap().into_parts();
        for (a, b) in trainer
            .net()
            .trainable()
            .iter()
            .zip(restored.net().trainable().iter())
        {
            for (x, y) in a.data().iter().zip(b.data()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        // The restored state continues on the identical trajectory.
        let r1 = trainer
            .training_step(&batch, &schedule, 0.1, &mut rng)
            .unwrap();
        let r2 = restored
            .training_step(&batch, &schedule, 0.1, &mut rng2)
            .unwrap();
        assert_eq!(r1.loss.to_bits(), r2.loss.to_bits());
    }

    #[test]
    fn checkpoint_rejects_unknown_version() {
        let net = ScoreNet::init(tiny_config(110)).unwrap();
        let trainer = Trainer::new(net, 1e-3);
        let rng = ChaCha8Rng::seed_from_u64(111);
        let mut ck = Checkpoint::new(&trainer, &rng);
        ck.version = 99;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(&path, serde_json::to_string(&ck).unwrap()).unwrap();
        assert!(matches!(
            Checkpoint::load(&path),
            Err(ScoreNetError::CheckpointVersion { found: 99, .. })
        ));
    }

    #[test]
    fn masked_predictor_nulls_conditions_per_mask() {
        let net = ScoreNet::init(tiny_config(120)).unwrap();
        let base = ConditionPair::one_hot(1, 3, 2, 3);
        let f = masked_predictor(&net, &base);
        let z = Latent::at(vec![0.2, -0.6], 3);
        let full = f(&z, 3, ConditionMask::Both).unwrap();
        let none = f(&z, 3, ConditionMask::Neither).unwrap();
        let direct_null = net.predict_noise(&z, 3, &ConditionPair::null()).unwrap();
        assert_eq!(none.values, direct_null.values);
        assert_ne!(full.values, none.values);
    }
}
