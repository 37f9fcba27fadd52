//! Noise schedules, the variance-preserving forward process, DDIM reverse
//! steps, and the classifier-free guidance combiners.
//!
//! The forward process is `q(z_t | z_0) = N(sqrt(abar_t) z_0, (1 - abar_t) I)`
//! where `abar_t` is the cumulative product of `1 - beta`. All operations here
//! work on the epsilon parameterization: a prediction `eps_hat` relates to the
//! score of the diffused marginal by `score = -eps_hat / sqrt(1 - abar_t)`.
//! That conversion is applied exactly once, in [`crate::oracle`], which
//! exposes exact scores in epsilon form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum DiffusionError {
    #[error("invalid schedule range: T={t}, beta_min={beta_min}, beta_max={beta_max} (need T >= 1 and 0 < beta_min <= beta_max < 1)")]
    InvalidScheduleRange { t: usize, beta_min: f64, beta_max: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("timestep {t} out of range for schedule with {steps} steps")]
    TimestepOutOfRange { t: usize, steps: usize },
    #[error("invalid timestep order: t_prev={t_prev} must be smaller than t={t}")]
    InvalidTimestepOrder { t: usize, t_prev: usize },
    #[error("invalid step count {n_steps} for schedule with {steps} steps")]
    InvalidStepCount { n_steps: usize, steps: usize },
    #[error("guidance weights must be finite and non-negative, got ({w_desc}, {w_cont})")]
    InvalidGuidanceWeights { w_desc: f64, w_cont: f64 },
    #[error("eta must be non-negative, got {0}")]
    InvalidEta(f64),
    #[error("score function failed: {0}")]
    ScoreFn(String),
}

/// Per-step noise variances and their cumulative products for a
/// variance-preserving forward process.
///
/// Invariants held by construction: `beta[t]` in `(0, 1)`,
/// `alpha_bar[t] = alpha_bar[t-1] * (1 - beta[t])`, `alpha_bar` strictly
/// decreasing with `alpha_bar[0] < 1` and `alpha_bar[T-1] > 0`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseSchedule {
    beta: Vec<f64>,
    alpha_bar: Vec<f64>,
}

impl NoiseSchedule {
    /// Linear beta schedule: `beta` linearly spaced from `beta_min` to
    /// `beta_max` over `t_steps` steps.
    pub fn linear(t_steps: usize, beta_min: f64, beta_max: f64) -> Result<Self, DiffusionError> {
        if t_steps < 1
            || !(beta_min > 0.0)
            || !(beta_max < 1.0)
            || !(beta_min <= beta_max)
            || !beta_min.is_finite()
            || !beta_max.is_finite()
        {
            return Err(DiffusionError::InvalidScheduleRange { t: t_steps, beta_min, beta_max });
        }
        let beta: Vec<f64> = if t_steps == 1 {
            vec![beta_min]
        } else {
            (0..t_steps)
                .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (t_steps - 1) as f64)
                .collect()
        };
        let mut alpha_bar = Vec::with_capacity(t_steps);
        let mut prod = 1.0;
        for b in &beta {
            prod *= 1.0 - b;
            alpha_bar.push(prod);
        }
        Ok(Self { beta, alpha_bar })
    }

    /// Default training schedule: 1000 steps, beta from 1e-4 to 0.02.
    pub fn default_linear() -> Self {
        Self::linear(1000, 1e-4, 0.02).expect("default schedule parameters are valid")
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.beta[t]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bar[t]
    }

    pub fn betas(&self) -> &[f64] {
        &self.beta
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bar
    }

    fn check_t(&self, t: usize) -> Result<(), DiffusionError> {
        if t >= self.steps() {
            Err(DiffusionError::TimestepOutOfRange { t, steps: self.steps() })
        } else {
            Ok(())
        }
    }
}

/// Creates a linear-beta [`NoiseSchedule`].
pub fn make_schedule(
    t_steps: usize,
    beta_min: f64,
    beta_max: f64,
) -> Result<NoiseSchedule, DiffusionError> {
    NoiseSchedule::linear(t_steps, beta_min, beta_max)
}

/// A point in latent space, tagged with the diffusion time it lives at.
/// `t == None` marks a clean (fully denoised) latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Latent {
    pub values: Vec<f64>,
    pub t: Option<usize>,
}

impl Latent {
    pub fn clean(values: Vec<f64>) -> Self {
        Self { values, t: None }
    }

    pub fn at(values: Vec<f64>, t: usize) -> Self {
        Self { values, t: Some(t) }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// The epsilon output of a score network for one latent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoisePrediction {
    pub values: Vec<f64>,
}

impl NoisePrediction {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Independent guidance strengths for the description and content conditions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GuidanceWeights {
    pub w_desc: f64,
    pub w_cont: f64,
}

impl GuidanceWeights {
    pub fn new(w_desc: f64, w_cont: f64) -> Result<Self, DiffusionError> {
        if !w_desc.is_finite() || !w_cont.is_finite() || w_desc < 0.0 || w_cont < 0.0 {
            return Err(DiffusionError::InvalidGuidanceWeights { w_desc, w_cont });
        }
        Ok(Self { w_desc, w_cont })
    }

    /// Default for joint generation.
    pub fn joint() -> Self {
        Self { w_desc: 7.0, w_cont: 7.0 }
    }

    /// Content-dominant setting, used when linguistic accuracy matters most.
    pub fn content_dominant() -> Self {
        Self { w_desc: 1.0, w_cont: 9.0 }
    }

    /// Description-dominant setting, used for audio generation from an empty
    /// content prompt.
    pub fn description_dominant() -> Self {
        Self { w_desc: 9.0, w_cont: 1.0 }
    }
}

/// Which of the two conditions a score evaluation sees. The guided sampler
/// evaluates all four.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ConditionMask {
    /// Both conditions present.
    Both,
    /// Description only; content nulled.
    DescOnly,
    /// Content only; description nulled.
    ContOnly,
    /// Both conditions nulled.
    Neither,
}

impl ConditionMask {
    pub const ALL: [ConditionMask; 4] = [
        ConditionMask::Both,
        ConditionMask::DescOnly,
        ConditionMask::ContOnly,
        ConditionMask::Neither,
    ];

    pub fn has_desc(self) -> bool {
        matches!(self, ConditionMask::Both | ConditionMask::DescOnly)
    }

    pub fn has_cont(self) -> bool {
        matches!(self, ConditionMask::Both | ConditionMask::ContOnly)
    }
}

fn check_dims(expected: usize, got: usize) -> Result<(), DiffusionError> {
    if expected != got {
        Err(DiffusionError::DimensionMismatch { expected, got })
    } else {
        Ok(())
    }
}

/// Applies the forward process at step `t`:
/// `z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps`.
pub fn forward_diffuse(
    z0: &Latent,
    t: usize,
    eps: &NoisePrediction,
    schedule: &NoiseSchedule,
) -> Result<Latent, DiffusionError> {
    schedule.check_t(t)?;
    check_dims(z0.dim(), eps.dim())?;
    let ab = schedule.alpha_bar(t);
    let (sa, sb) = (ab.sqrt(), (1.0 - ab).sqrt());
    let values = z0
        .values
        .iter()
        .zip(&eps.values)
        .map(|(z, e)| sa * z + sb * e)
        .collect();
    Ok(Latent::at(values, t))
}

/// One reverse DDIM step from `t` to `t_prev`.
///
/// Predicts `z0_hat = (z_t - sqrt(1 - abar_t) eps_hat) / sqrt(abar_t)` and
/// re-noises it toward `t_prev`. `t_prev == None` targets the clean state
/// (`abar = 1`). With `eta == 0` the step is a deterministic function of its
/// inputs and `rng` is never touched.
pub fn ddim_step(
    z_t: &Latent,
    eps_hat: &NoisePrediction,
    t: usize,
    t_prev: Option<usize>,
    schedule: &NoiseSchedule,
    eta: f64,
    rng: &mut ChaCha8Rng,
) -> Result<Latent, DiffusionError> {
    schedule.check_t(t)?;
    check_dims(z_t.dim(), eps_hat.dim())?;
    if !(eta >= 0.0) {
        return Err(DiffusionError::InvalidEta(eta));
    }
    if let Some(tp) = t_prev {
        schedule.check_t(tp)?;
        if tp >= t {
            return Err(DiffusionError::InvalidTimestepOrder { t, t_prev: tp });
        }
    }

    let ab_t = schedule.alpha_bar(t);
    let ab_prev = t_prev.map_or(1.0, |tp| schedule.alpha_bar(tp));
    let sqrt_ab_t = ab_t.sqrt();
    let sqrt_one_minus_ab_t = (1.0 - ab_t).sqrt();

    let sigma = if eta > 0.0 {
        let variance = (1.0 - ab_prev) / (1.0 - ab_t) * (1.0 - ab_t / ab_prev);
        eta * variance.max(0.0).sqrt()
    } else {
        0.0
    };
    let dir_coeff = (1.0 - ab_prev - sigma * sigma).max(0.0).sqrt();
    let sqrt_ab_prev = ab_prev.sqrt();

    let mut values: Vec<f64> = z_t
        .values
        .iter()
        .zip(&eps_hat.values)
        .map(|(z, e)| {
            let z0_hat = (z - sqrt_one_minus_ab_t * e) / sqrt_ab_t;
            sqrt_ab_prev * z0_hat + dir_coeff * e
        })
        .collect();
    if sigma > 0.0 {
        for v in &mut values {
            let n: f64 = StandardNormal.sample(rng);
            *v += sigma * n;
        }
    }
    Ok(Latent { values, t: t_prev })
}

/// Unified classifier-free guidance over one merged condition:
/// `eps_cond + w (eps_cond - eps_null)`.
pub fn unified_cfg_combine(
    eps_cond: &NoisePrediction,
    eps_null: &NoisePrediction,
    w: f64,
) -> Result<NoisePrediction, DiffusionError> {
    check_dims(eps_cond.dim(), eps_null.dim())?;
    let values = eps_cond
        .values
        .iter()
        .zip(&eps_null.values)
        .map(|(c, n)| c + w * (c - n))
        .collect();
    Ok(NoisePrediction::new(values))
}

/// Dual classifier-free guidance with independent strengths per condition:
///
/// `eps_full + w_desc (eps_desc_only - eps_null) + w_cont (eps_cont_only - eps_null)`
///
/// where `eps_desc_only` is evaluated with the content condition nulled and
/// `eps_cont_only` with the description condition nulled.
pub fn dual_cfg_combine(
    eps_full: &NoisePrediction,
    eps_desc_only: &NoisePrediction,
    eps_cont_only: &NoisePrediction,
    eps_null: &NoisePrediction,
    g: &GuidanceWeights,
) -> Result<NoisePrediction, DiffusionError> {
    check_dims(eps_full.dim(), eps_desc_only.dim())?;
    check_dims(eps_full.dim(), eps_cont_only.dim())?;
    check_dims(eps_full.dim(), eps_null.dim())?;
    let values = (0..eps_full.dim())
        .map(|i| {
            eps_full.values[i]
                + g.w_desc * (eps_desc_only.values[i] - eps_null.values[i])
                + g.w_cont * (eps_cont_only.values[i] - eps_null.values[i])
        })
        .collect();
    Ok(NoisePrediction::new(values))
}

/// A conditioned noise predictor that can be evaluated under any of the four
/// condition masks. The conditions themselves live inside the implementor;
/// the mask selects which of them are replaced by the null condition.
pub trait MaskedScore {
    fn predict(
        &self,
        z: &Latent,
        t: usize,
        mask: ConditionMask,
    ) -> Result<NoisePrediction, DiffusionError>;
}

impl<F> MaskedScore for F
where
    F: Fn(&Latent, usize, ConditionMask) -> Result<NoisePrediction, DiffusionError>,
{
    fn predict(
        &self,
        z: &Latent,
        t: usize,
        mask: ConditionMask,
    ) -> Result<NoisePrediction, DiffusionError> {
        self(z, t, mask)
    }
}

/// Evenly spaced reverse-chain timesteps: `n_steps` indices from `T-1` down
/// to `0` inclusive.
pub fn sampling_timesteps(t_steps: usize, n_steps: usize) -> Result<Vec<usize>, DiffusionError> {
    if n_steps < 1 || n_steps > t_steps {
        return Err(DiffusionError::InvalidStepCount { n_steps, steps: t_steps });
    }
    if n_steps == 1 {
        return Ok(vec![t_steps - 1]);
    }
    let ts = (0..n_steps)
        .map(|k| {
            let frac = (n_steps - 1 - k) as f64 / (n_steps - 1) as f64;
            ((t_steps - 1) as f64 * frac).round() as usize
        })
        .collect();
    Ok(ts)
}

/// Runs the full guided reverse chain.
///
/// Draws `z_T` from a standard normal seeded by `seed`, then applies
/// deterministic DDIM steps (`eta = 0`), combining the four masked score
/// evaluations with [`dual_cfg_combine`] at every step. Identical inputs and
/// seed produce identical output.
pub fn sample<S: MaskedScore>(
    score_fn: &S,
    schedule: &NoiseSchedule,
    n_steps: usize,
    g: &GuidanceWeights,
    dim: usize,
    seed: u64,
) -> Result<Latent, DiffusionError> {
    let ts = sampling_timesteps(schedule.steps(), n_steps)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
    let mut z = Latent::at(init, ts[0]);

    for (i, &t) in ts.iter().enumerate() {
        let t_prev = ts.get(i + 1).copied();
        let eps = guided_prediction(score_fn, &z, t, g)?;
        z = ddim_step(&z, &eps, t, t_prev, schedule, 0.0, &mut rng)?;
    }
    Ok(z)
}

/// The four masked evaluations of one step, combined per dual guidance.
///
/// Weights at zero short-circuit the evaluations they would ignore, so
/// unguided sampling costs a single score call per step.
pub fn guided_prediction<S: MaskedScore>(
    score_fn: &S,
    z: &Latent,
    t: usize,
    g: &GuidanceWeights,
) -> Result<NoisePrediction, DiffusionError> {
    let eps_full = score_fn.predict(z, t, ConditionMask::Both)?;
    if g.w_desc == 0.0 && g.w_cont == 0.0 {
        return Ok(eps_full);
    }
    let eps_desc = score_fn.predict(z, t, ConditionMask::DescOnly)?;
    let eps_cont = score_fn.predict(z, t, ConditionMask::ContOnly)?;
    let eps_null = score_fn.predict(z, t, ConditionMask::Neither)?;
    dual_cfg_combine(&eps_full, &eps_desc, &eps_cont, &eps_null, g)
}
