//! Analytic ground truth: a labeled Gaussian-mixture world whose diffused
//! conditional scores are exact.
//!
//! Each latent is drawn from one mixture component indexed by a pair of
//! labels `(a, b)` — a description label and a content label. A component is
//! an isotropic Gaussian `N(mu_ab, sigma_ab^2 I)` with prior weight `pi_ab`.
//! Under the variance-preserving forward process the mixture stays a mixture:
//! component `(a, b)` diffuses to `N(sqrt(abar_t) mu_ab, (abar_t sigma_ab^2 +
//! 1 - abar_t) I)`, so the conditional score under any label mask is a
//! posterior-weighted sum of Gaussian scores and can be evaluated to machine
//! precision. That makes this module the reference against which the guidance
//! combiners, the sampler, and trained networks are all checked.
//!
//! Worlds built by [`ToyWorld::product_grid`] have product priors and means
//! that separate by coordinate block, which makes the two labels conditionally
//! independent given the latent at every diffusion time. For those worlds the
//! dual-guidance decomposition
//! `eps(z|a,b) - eps(z|0) = [eps(z|a) - eps(z|0)] + [eps(z|b) - eps(z|0)]`
//! is an exact identity; [`verify_decomposition`] measures it numerically.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{
    dual_cfg_combine, unified_cfg_combine, ConditionMask, DiffusionError, GuidanceWeights, Latent,
    NoisePrediction, NoiseSchedule,
};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("unknown label: desc={desc:?}, cont={cont:?} for a {n_desc}x{n_cont} world")]
    UnknownLabel { desc: Option<usize>, cont: Option<usize>, n_desc: usize, n_cont: usize },
    #[error("component weights must be positive and sum to 1 (got sum {0})")]
    BadWeights(f64),
    #[error("component {index} has dimension {got}, expected {expected}")]
    BadComponentDim { index: usize, expected: usize, got: usize },
    #[error("component sigma must be positive, got {0}")]
    BadSigma(f64),
    #[error("world must have at least one component per label pair")]
    Empty,
    #[error(transparent)]
    Diffusion(#[from] DiffusionError),
}

/// One mixture component: the Gaussian attached to a `(desc, cont)` label
/// pair.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Component {
    pub desc_label: usize,
    pub cont_label: usize,
    pub mean: Vec<f64>,
    pub sigma: f64,
    pub weight: f64,
}

/// A labeled Gaussian-mixture data distribution with exactly computable
/// diffused scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToyWorld {
    dim: usize,
    n_desc: usize,
    n_cont: usize,
    components: Vec<Component>,
}

impl ToyWorld {
    /// Builds a world from explicit components. Weights must sum to 1.
    pub fn new(components: Vec<Component>) -> Result<Self, OracleError> {
        if components.is_empty() {
            return Err(OracleError::Empty);
        }
        let dim = components[0].mean.len();
        let mut sum = 0.0;
        let mut n_desc = 0;
        let mut n_cont = 0;
        for (i, c) in components.iter().enumerate() {
            if c.mean.len() != dim {
                return Err(OracleError::BadComponentDim {
                    index: i,
                    expected: dim,
                    got: c.mean.len(),
                });
            }
            if !(c.sigma > 0.0) || !c.sigma.is_finite() {
                return Err(OracleError::BadSigma(c.sigma));
            }
            if !(c.weight > 0.0) {
                return Err(OracleError::BadWeights(c.weight));
            }
            sum += c.weight;
            n_desc = n_desc.max(c.desc_label + 1);
            n_cont = n_cont.max(c.cont_label + 1);
        }
        if (sum - 1.0).abs() > 1e-9 {
            return Err(OracleError::BadWeights(sum));
        }
        Ok(Self { dim, n_desc, n_cont, components })
    }

    /// A conditionally independent world: the description label places the
    /// first coordinate, the content label places the second, priors are the
    /// product of per-label priors. Means sit on the grid
    /// `linspace(lo, hi, n)` per axis.
    ///
    /// Coordinates beyond the first two (if `dim > 2`) carry a fixed
    /// label-independent standard normal factor, which preserves conditional
    /// independence.
    pub fn product_grid(
        dim: usize,
        n_desc: usize,
        n_cont: usize,
        lo: f64,
        hi: f64,
        sigma: f64,
    ) -> Result<Self, OracleError> {
        assert!(dim >= 2, "product grid world needs at least two coordinates");
        let axis = |n: usize, i: usize| {
            if n == 1 {
                (lo + hi) / 2.0
            } else {
                lo + (hi - lo) * i as f64 / (n - 1) as f64
            }
        };
        let mut components = Vec::with_capacity(n_desc * n_cont);
        let w = 1.0 / (n_desc * n_cont) as f64;
        for a in 0..n_desc {
            for b in 0..n_cont {
                let mut mean = vec![0.0; dim];
                mean[0] = axis(n_desc, a);
                mean[1] = axis(n_cont, b);
                components.push(Component {
                    desc_label: a,
                    cont_label: b,
                    mean,
                    sigma,
                    weight: w,
                });
            }
        }
        Self::new(components)
    }

    /// The default verification world: `d = 2`, 3 description labels x 3
    /// content labels, means on the `[-1, 1]` grid, `sigma = 0.3`.
    pub fn default_verification() -> Self {
        Self::product_grid(2, 3, 3, -1.0, 1.0, 0.3)
            .expect("default verification world parameters are valid")
    }

    /// A 2x2 world whose labels are coupled beyond conditional independence:
    /// means stay on a product grid but the prior concentrates on the
    /// diagonal label pairs, so `p(a, b | z) != p(a | z) p(b | z)`.
    pub fn correlated_2x2() -> Self {
        let mut components = Vec::new();
        for a in 0..2usize {
            for b in 0..2usize {
                let weight = if a == b { 0.4 } else { 0.1 };
                components.push(Component {
                    desc_label: a,
                    cont_label: b,
                    mean: vec![if a == 0 { -1.0 } else { 1.0 }, if b == 0 { -1.0 } else { 1.0 }],
                    sigma: 0.3,
                    weight,
                });
            }
        }
        Self::new(components).expect("correlated world parameters are valid")
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_desc_labels(&self) -> usize {
        self.n_desc
    }

    pub fn n_cont_labels(&self) -> usize {
        self.n_cont
    }

    pub fn components(&self) -> &[Component] {
        &self.components
    }

    fn check_labels(
        &self,
        desc: Option<usize>,
        cont: Option<usize>,
    ) -> Result<(), OracleError> {
        let desc_ok = desc.map_or(true, |a| a < self.n_desc);
        let cont_ok = cont.map_or(true, |b| b < self.n_cont);
        if desc_ok && cont_ok {
            Ok(())
        } else {
            Err(OracleError::UnknownLabel {
                desc,
                cont,
                n_desc: self.n_desc,
                n_cont: self.n_cont,
            })
        }
    }

    /// Components selected by conditioning on the given labels, with
    /// renormalized weights.
    fn conditional_components(
        &self,
        desc: Option<usize>,
        cont: Option<usize>,
    ) -> Result<Vec<(f64, &Component)>, OracleError> {
        self.check_labels(desc, cont)?;
        let selected: Vec<&Component> = self
            .components
            .iter()
            .filter(|c| desc.map_or(true, |a| c.desc_label == a))
            .filter(|c| cont.map_or(true, |b| c.cont_label == b))
            .collect();
        let total: f64 = selected.iter().map(|c| c.weight).sum();
        if selected.is_empty() || total <= 0.0 {
            return Err(OracleError::UnknownLabel {
                desc,
                cont,
                n_desc: self.n_desc,
                n_cont: self.n_cont,
            });
        }
        Ok(selected.into_iter().map(|c| (c.weight / total, c)).collect())
    }

    /// Draws a clean latent conditioned on the given labels (both, one, or
    /// none).
    pub fn draw(
        &self,
        desc: Option<usize>,
        cont: Option<usize>,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Latent, usize, usize), OracleError> {
        let comps = self.conditional_components(desc, cont)?;
        let u: f64 = rng.gen();
        let mut acc = 0.0;
        let mut chosen = comps.last().expect("non-empty").1;
        for (w, c) in &comps {
            acc += w;
            if u <= acc {
                chosen = c;
                break;
            }
        }
        let values = chosen
            .mean
            .iter()
            .map(|m| {
                let n: f64 = StandardNormal.sample(rng);
                m + chosen.sigma * n
            })
            .collect();
        Ok((Latent::clean(values), chosen.desc_label, chosen.cont_label))
    }

    /// Log-density of the diffused conditional mixture at `(z, t)` under the
    /// masked labels. Brute-force evaluation over all selected components;
    /// exists so tests can finite-difference it against [`Self::diffused_score`].
    pub fn log_density(
        &self,
        z: &Latent,
        t: usize,
        schedule: &NoiseSchedule,
        desc: Option<usize>,
        cont: Option<usize>,
    ) -> Result<f64, OracleError> {
        let comps = self.conditional_components(desc, cont)?;
        let ab = schedule.alpha_bar(t);
        let logs: Vec<f64> = comps
            .iter()
            .map(|(w, c)| {
                let var = ab * c.sigma * c.sigma + (1.0 - ab);
                let sq: f64 = z
                    .values
                    .iter()
                    .zip(&c.mean)
                    .map(|(zi, mi)| {
                        let d = zi - ab.sqrt() * mi;
                        d * d
                    })
                    .sum();
                w.ln() - 0.5 * sq / var
                    - 0.5 * self.dim as f64 * (2.0 * std::f64::consts::PI * var).ln()
            })
            .collect();
        Ok(log_sum_exp(&logs))
    }

    /// Exact epsilon-form score of the diffused mixture at `(z, t)` under the
    /// masked conditioning.
    ///
    /// The diffused component `(a, b)` is `N(sqrt(abar_t) mu_ab, v_ab I)` with
    /// `v_ab = abar_t sigma_ab^2 + 1 - abar_t`; the mixture score is the
    /// posterior-weighted sum of component scores, and
    /// `eps = -sqrt(1 - abar_t) * score`.
    pub fn diffused_score(
        &self,
        z: &Latent,
        t: usize,
        schedule: &NoiseSchedule,
        mask: &OracleMask,
    ) -> Result<NoisePrediction, OracleError> {
        let comps = self.conditional_components(mask.desc, mask.cont)?;
        let ab = schedule.alpha_bar(t);
        let sqrt_ab = ab.sqrt();

        // Posterior responsibilities via log-sum-exp.
        let log_terms: Vec<f64> = comps
            .iter()
            .map(|(w, c)| {
                let var = ab * c.sigma * c.sigma + (1.0 - ab);
                let sq: f64 = z
                    .values
                    .iter()
                    .zip(&c.mean)
                    .map(|(zi, mi)| {
                        let d = zi - sqrt_ab * mi;
                        d * d
                    })
                    .sum();
                w.ln() - 0.5 * sq / var - 0.5 * self.dim as f64 * var.ln()
            })
            .collect();
        let lse = log_sum_exp(&log_terms);

        let mut score = vec![0.0; self.dim];
        for ((_, c), lt) in comps.iter().zip(&log_terms) {
            let resp = (lt - lse).exp();
            let var = ab * c.sigma * c.sigma + (1.0 - ab);
            for (i, (zi, mi)) in z.values.iter().zip(&c.mean).enumerate() {
                score[i] += resp * (-(zi - sqrt_ab * mi) / var);
            }
        }
        let scale = -(1.0 - ab).sqrt();
        Ok(NoisePrediction::new(score.into_iter().map(|s| scale * s).collect()))
    }

    /// Adapter for the guided sampler: a masked score over a fixed label
    /// pair.
    pub fn masked_score<'a>(
        &'a self,
        schedule: &'a NoiseSchedule,
        desc: usize,
        cont: usize,
    ) -> impl Fn(&Latent, usize, ConditionMask) -> Result<NoisePrediction, DiffusionError> + 'a + Sync
    {
        move |z: &Latent, t: usize, mask: ConditionMask| {
            self.diffused_score(z, t, schedule, &OracleMask::from_condition(mask, desc, cont))
                .map_err(|e| DiffusionError::ScoreFn(e.to_string()))
        }
    }
}

/// Label selection for one oracle score evaluation: `None` is the null
/// condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleMask {
    pub desc: Option<usize>,
    pub cont: Option<usize>,
}

impl OracleMask {
    pub fn both(desc: usize, cont: usize) -> Self {
        Self { desc: Some(desc), cont: Some(cont) }
    }

    pub fn desc_only(desc: usize) -> Self {
        Self { desc: Some(desc), cont: None }
    }

    pub fn cont_only(cont: usize) -> Self {
        Self { desc: None, cont: Some(cont) }
    }

    pub fn neither() -> Self {
        Self { desc: None, cont: None }
    }

    pub fn from_condition(mask: ConditionMask, desc: usize, cont: usize) -> Self {
        Self {
            desc: mask.has_desc().then_some(desc),
            cont: mask.has_cont().then_some(cont),
        }
    }
}

fn log_sum_exp(logs: &[f64]) -> f64 {
    let m = logs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m.is_infinite() {
        return m;
    }
    m + logs.iter().map(|l| (l - m).exp()).sum::<f64>().ln()
}

/// Outcome of [`verify_decomposition`]: the worst observed deviation from the
/// dual-guidance score decomposition and from the equal-weights equivalence
/// between the dual and unified combiners.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecompositionReport {
    pub samples: usize,
    pub tol: f64,
    pub max_deviation: f64,
    pub max_equivalence_deviation: f64,
    pub passed: bool,
    /// The `(z, t, desc, cont)` sample that produced the worst deviation.
    pub worst: Option<WorstSample>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct WorstSample {
    pub z: Vec<f64>,
    pub t: usize,
    pub desc: usize,
    pub cont: usize,
    pub deviation: f64,
}

/// Checks, over random `(z, t, a, b)`, that
/// `eps(z|a,b) - eps(z|0) = [eps(z|a) - eps(z|0)] + [eps(z|b) - eps(z|0)]`
/// and that the dual combiner at equal weights `(w, w)` reproduces the
/// unified combiner at `w`, both within `tol` in the max norm.
pub fn verify_decomposition(
    world: &ToyWorld,
    schedule: &NoiseSchedule,
    samples: usize,
    tol: f64,
    seed: u64,
) -> Result<DecompositionReport, OracleError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut max_dev = 0.0f64;
    let mut max_eq = 0.0f64;
    let mut worst = None;
    let w = 7.0;

    for _ in 0..samples {
        let a = rng.gen_range(0..world.n_desc_labels());
        let b = rng.gen_range(0..world.n_cont_labels());
        let t = rng.gen_range(0..schedule.steps());
        let values: Vec<f64> =
            (0..world.dim()).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal)).collect();
        let z = Latent::at(values, t);

        let eps_full = world.diffused_score(&z, t, schedule, &OracleMask::both(a, b))?;
        let eps_desc = world.diffused_score(&z, t, schedule, &OracleMask::desc_only(a))?;
        let eps_cont = world.diffused_score(&z, t, schedule, &OracleMask::cont_only(b))?;
        let eps_null = world.diffused_score(&z, t, schedule, &OracleMask::neither())?;

        let dev = (0..world.dim())
            .map(|i| {
                let lhs = eps_full.values[i] - eps_null.values[i];
                let rhs = (eps_desc.values[i] - eps_null.values[i])
                    + (eps_cont.values[i] - eps_null.values[i]);
                (lhs - rhs).abs()
            })
            .fold(0.0f64, f64::max);
        if dev > max_dev {
            max_dev = dev;
            worst = Some(WorstSample { z: z.values.clone(), t, desc: a, cont: b, deviation: dev });
        }

        let g = GuidanceWeights::new(w, w)?;
        let dual = dual_cfg_combine(&eps_full, &eps_desc, &eps_cont, &eps_null, &g)?;
        let unified = unified_cfg_combine(&eps_full, &eps_null, w)?;
        let eq_dev = dual
            .values
            .iter()
            .zip(&unified.values)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        max_eq = max_eq.max(eq_dev);
    }

    let passed = max_dev <= tol && max_eq <= tol;
    Ok(DecompositionReport {
        samples,
        tol,
        max_deviation: max_dev,
        max_equivalence_deviation: max_eq,
        passed,
        worst,
    })
}
