//! The acceptance gate: one test per release criterion, each printing a
//! single PASS/FAIL line (visible under `cargo test --test acceptance --
//! --nocapture`). Every check here runs against an independent reference:
//! closed-form mixture scores, brute-force alignment, hand-derived fixture
//! labels, or a rerun of the same command.

use duodiff::clients::ReplayAsrClient;
use duodiff::commands::{cmd_sample, cmd_sweep, derive_seed};
use duodiff::config::RunConfig;
use duodiff::datapipe::{
    curate, mix_snr, standardize, Label, SegmentRecord, TARGET_SAMPLES,
};
use duodiff::diffusion::{
    sample, ConditionMask, GuidanceWeights, Latent, NoiseSchedule,
};
use duodiff::fixtures::{noise_segment, tone_segment, write_curation_fixture};
use duodiff::metrics::{
    edit_distance, frechet_distance, kl_divergence, wer, EmbeddingSet, TokenSeq,
};
use duodiff::oracle::{verify_decomposition, OracleMask, ToyWorld};
use duodiff::scorenet::{
    dropout_mask, ConditionPair, NetConfig, ScoreNet, TrainSample, Trainer,
};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::time::Instant;

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {} ({detail})",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

/// Mean and standard error of a set of scalar draws.
fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[test]
fn criterion_1_score_decomposition_identity() {
    let start = Instant::now();
    let world = ToyWorld::default_verification();
    let schedule = NoiseSchedule::default_linear();
    let rep = verify_decomposition(&world, &schedule, 1000, 1e-9, 99).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = rep.passed
        && rep.max_deviation <= 1e-9
        && rep.max_equivalence_deviation <= 1e-9
        && elapsed < 10.0;
    report(
        "1 (conditional score decomposition)",
        ok,
        &format!(
            "max deviation {:.3e}, dual-vs-unified {:.3e}, {:.1}s",
            rep.max_deviation, rep.max_equivalence_deviation, elapsed
        ),
    );
}

#[test]
fn criterion_2_guidance_monotonicity() {
    let start = Instant::now();
    let world = ToyWorld::default_verification();
    let schedule = NoiseSchedule::default_linear();
    let (desc_label, cont_label) = (0usize, 2usize);
    let score = world.masked_score(&schedule, desc_label, cont_label);

    // Unit direction from the corpus mean toward the content-conditional
    // mean: the axis that content guidance is supposed to push along.
    let mut e_all = vec![0.0; world.dim()];
    let mut e_cont = vec![0.0; world.dim()];
    let mut w_cont_total = 0.0;
    for c in world.components() {
        for (acc, m) in e_all.iter_mut().zip(&c.mean) {
            *acc += c.weight * m;
        }
        if c.cont_label == cont_label {
            w_cont_total += c.weight;
            for (acc, m) in e_cont.iter_mut().zip(&c.mean) {
                *acc += c.weight * m;
            }
        }
    }
    for v in &mut e_cont {
        *v /= w_cont_total;
    }
    let diff: Vec<f64> = e_cont.iter().zip(&e_all).map(|(c, a)| c - a).collect();
    let norm = diff.iter().map(|x| x * x).sum::<f64>().sqrt();
    let dir: Vec<f64> = diff.iter().map(|x| x / norm).collect();

    let n = 10_000usize;
    let w_cont_grid = [0.0, 1.0, 3.0, 5.0, 7.0, 9.0];
    let mut ok = true;
    let mut detail = String::new();
    for (di, &w_desc) in [0.0, 5.0].iter().enumerate() {
        let mut prev: Option<(f64, f64)> = None;
        for (ci, &w_cont) in w_cont_grid.iter().enumerate() {
            let g = GuidanceWeights::new(w_desc, w_cont).unwrap();
            let base = 1_000_000 * (di as u64 + 1) + 10_000 * (ci as u64 + 1);
            let projections: Vec<f64> = (0..n)
                .into_par_iter()
                .map(|i| {
                    let seed = derive_seed(&[base, i as u64]);
                    let z = sample(&score, &schedule, 100, &g, world.dim(), seed)
                        .expect("oracle sampling succeeds");
                    z.values.iter().zip(&dir).map(|(zi, di)| zi * di).sum()
                })
                .collect();
            let (mean, se) = mean_se(&projections);
            if let Some((pm, pse)) = prev {
                let margin = 3.0 * (se * se + pse * pse).sqrt();
                if mean < pm - margin {
                    ok = false;
                    detail = format!(
                        "projection dropped {pm:.4} -> {mean:.4} at w_desc {w_desc}, w_cont {w_cont}"
                    );
                }
            }
            prev = Some((mean, se));
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    ok &= elapsed < 300.0;
    if detail.is_empty() {
        detail = format!(
            "content projection non-decreasing over both w_desc rows, {elapsed:.0}s"
        );
    }
    report("2 (guidance monotonicity)", ok, &detail);
}

/// Exact output moments of the unguided reverse chain for one Gaussian
/// component: the chain starts at N(0, 1) per coordinate and every step is
/// affine in `z`, so mean and standard deviation transport in closed form.
/// An independent reduction of the same update algebra the sampler uses.
fn transported_moments(
    schedule: &NoiseSchedule,
    n_steps: usize,
    mu: &[f64],
    sigma: f64,
) -> (Vec<f64>, f64) {
    let ts = duodiff::diffusion::sampling_timesteps(schedule.steps(), n_steps).unwrap();
    let mut m = vec![0.0; mu.len()];
    let mut s = 1.0;
    for (k, &t) in ts.iter().enumerate() {
        let ab_t = schedule.alpha_bar(t);
        let ab_prev = ts.get(k + 1).map_or(1.0, |&tp| schedule.alpha_bar(tp));
        let v_t = ab_t * sigma * sigma + 1.0 - ab_t;
        for (mi, &mu_i) in m.iter_mut().zip(mu) {
            let eps_m = (1.0 - ab_t).sqrt() * (*mi - ab_t.sqrt() * mu_i) / v_t;
            let z0_m = (*mi - (1.0 - ab_t).sqrt() * eps_m) / ab_t.sqrt();
            *mi = ab_prev.sqrt() * z0_m + (1.0 - ab_prev).sqrt() * eps_m;
        }
        let slope = ab_prev.sqrt() * (ab_t * sigma * sigma / v_t) / ab_t.sqrt()
            + ((1.0 - ab_prev) * (1.0 - ab_t)).sqrt() / v_t;
        s *= slope;
    }
    (m, s)
}

#[test]
fn criterion_3_sampler_recovers_component_means() {
    let world = ToyWorld::default_verification();
    let schedule = NoiseSchedule::default_linear();
    let g = GuidanceWeights::new(0.0, 0.0).unwrap();
    let n = 10_000usize;

    let mut worst_sigmas: f64 = 0.0;
    let mut worst_offset: f64 = 0.0;
    let mut pred_std = 0.0;
    let mut ok = true;
    for c in world.components() {
        // Where this finite chain provably lands: within 0.01 of the
        // component mean, or the chain itself does not recover the
        // conditional component and nothing downstream can.
        let (m_star, s_star) = transported_moments(&schedule, 100, &c.mean, c.sigma);
        pred_std = s_star;
        for (m, &target) in m_star.iter().zip(&c.mean) {
            let offset = (m - target).abs();
            worst_offset = worst_offset.max(offset);
            if offset > 0.01 {
                ok = false;
            }
        }

        let score = world.masked_score(&schedule, c.desc_label, c.cont_label);
        let base = 7_000_000 + 100_000 * (3 * c.desc_label + c.cont_label) as u64;
        let draws: Vec<Vec<f64>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let seed = derive_seed(&[base, i as u64]);
                sample(&score, &schedule, 100, &g, world.dim(), seed)
                    .expect("oracle sampling succeeds")
                    .values
            })
            .collect();
        for (coord, &target) in m_star.iter().enumerate() {
            let xs: Vec<f64> = draws.iter().map(|z| z[coord]).collect();
            let (mean, se) = mean_se(&xs);
            let sigmas = (mean - target).abs() / se;
            worst_sigmas = worst_sigmas.max(sigmas);
            if sigmas > 3.0 {
                ok = false;
            }
            // The chain output is an affine image of a Gaussian, so the
            // spread must match the transported one too.
            let std = se * (n as f64).sqrt();
            if (std - s_star).abs() > 3.0 * s_star / (2.0 * n as f64).sqrt() {
                ok = false;
            }
        }
    }
    report(
        "3 (unguided sampler hits component means)",
        ok,
        &format!(
            "chain mean within {worst_offset:.4} of every component mean, sample moments within {worst_sigmas:.2} standard errors of the exact chain output (std {pred_std:.4})"
        ),
    );
}

#[test]
fn criterion_4_training_converges_to_oracle() {
    let world = ToyWorld::default_verification();
    let schedule = NoiseSchedule::default_linear();
    let config = NetConfig::toy();
    let d = config.d;
    let net = ScoreNet::init(config).unwrap();
    let batch_size = 16;
    let dropout_p = 0.1;

    let draw_batch = |rng: &mut ChaCha8Rng| -> Vec<(Vec<f64>, ConditionPair)> {
        (0..batch_size)
            .map(|_| {
                let (z0, a, b) = world.draw(None, None, rng).unwrap();
                (z0.values, ConditionPair::one_hot(a, 3, b, 3))
            })
            .collect()
    };

    // The initial plateau, measured without moving the weights: a zero
    // learning rate leaves the parameters bit-identical.
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut probe = Trainer::new(net.clone(), 0.0);
    let mut plateau = 0.0;
    let probe_steps = 25;
    for _ in 0..probe_steps {
        let batch = draw_batch(&mut rng);
        plateau += probe.training_step(&batch, &schedule, dropout_p, &mut rng).unwrap().loss
            / probe_steps as f64;
    }

    let mut trainer = Trainer::new(net, 2e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut halved_at: Option<usize> = None;
    let mut window = Vec::with_capacity(100);
    for step in 0..5000 {
        let batch = draw_batch(&mut rng);
        let loss = trainer.training_step(&batch, &schedule, dropout_p, &mut rng).unwrap().loss;
        window.push(loss);
        if window.len() == 100 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            if halved_at.is_none() && mean < 0.5 * plateau {
                halved_at = Some(step);
            }
            window.clear();
        }
    }

    // Epsilon-MSE against the closed-form scores, per condition mask, on
    // fresh forward-process draws.
    let net = trainer.net();
    let mut eval_rng = ChaCha8Rng::seed_from_u64(505);
    let n_eval = 400;
    let mut mse = [0.0f64; 4];
    for _ in 0..n_eval {
        let (z0, a, b) = world.draw(None, None, &mut eval_rng).unwrap();
        let t = eval_rng.gen_range(0..schedule.steps());
        let eps: Vec<f64> =
            (0..d).map(|_| eval_rng.sample::<f64, _>(StandardNormal)).collect();
        let z_t = duodiff::diffusion::forward_diffuse(
            &z0,
            t,
            &duodiff::diffusion::NoisePrediction::new(eps),
            &schedule,
        )
        .unwrap();
        let cond = ConditionPair::one_hot(a, 3, b, 3);
        for (k, mask) in ConditionMask::ALL.iter().enumerate() {
            let got = net.predict_noise(&z_t, t, &cond.masked(*mask)).unwrap();
            let want = world
                .diffused_score(&z_t, t, &schedule, &OracleMask::from_condition(*mask, a, b))
                .unwrap();
            let err: f64 = got
                .values
                .iter()
                .zip(&want.values)
                .map(|(g, w)| (g - w) * (g - w))
                .sum();
            mse[k] += err / n_eval as f64;
        }
    }
    let worst_mse = mse.iter().cloned().fold(0.0, f64::max);

    // Analytic gradients against central finite differences.
    let (z0, a, b) = world.draw(None, None, &mut eval_rng).unwrap();
    let t = 300;
    let eps: Vec<f64> = (0..d).map(|_| eval_rng.sample::<f64, _>(StandardNormal)).collect();
    let z_t = duodiff::diffusion::forward_diffuse(
        &z0,
        t,
        &duodiff::diffusion::NoisePrediction::new(eps.clone()),
        &schedule,
    )
    .unwrap();
    let sample = TrainSample {
        z_t: z_t.values,
        t,
        eps,
        cond: ConditionPair::one_hot(a, 3, b, 3),
    };
    let grad = net.grad_check(&sample, 1e-5).unwrap();

    let ok = halved_at.is_some() && worst_mse < 0.1 * d as f64 && grad.max_rel_error < 1e-4;
    report(
        "4 (training converges to the oracle)",
        ok,
        &format!(
            "loss halved from plateau {plateau:.2} at step {:?}, worst mask MSE {worst_mse:.4} < {:.1}, grad check {:.2e}",
            halved_at,
            0.1 * d as f64,
            grad.max_rel_error
        ),
    );
}

#[test]
fn criterion_5_dropout_mask_frequencies() {
    let p = 0.1;
    let n = 10_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(606);
    let mut counts = [0usize; 4];
    for _ in 0..n {
        let k = match dropout_mask(&mut rng, p) {
            ConditionMask::Both => 0,
            ConditionMask::DescOnly => 1,
            ConditionMask::ContOnly => 2,
            ConditionMask::Neither => 3,
        };
        counts[k] += 1;
    }
    let expected = [0.81, 0.09, 0.09, 0.01];
    let mut ok = true;
    let mut worst = 0.0f64;
    for (&count, &e) in counts.iter().zip(&expected) {
        let freq = count as f64 / n as f64;
        let sigma = (e * (1.0 - e) / n as f64).sqrt();
        let dev = (freq - e).abs() / sigma;
        worst = worst.max(dev);
        if dev > 3.0 {
            ok = false;
        }
    }
    report(
        "5 (condition dropout frequencies)",
        ok,
        &format!(
            "observed {:?} vs (0.81, 0.09, 0.09, 0.01), worst {worst:.2} sigma",
            counts
        ),
    );
}

#[test]
fn criterion_6_curation_fixture_labels() {
    let dir = std::env::temp_dir().join("duodiff-acceptance-curation");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let fixture = write_curation_fixture(&dir).unwrap();
    let primary = ReplayAsrClient::from_file(&fixture.replay_primary).unwrap();
    let secondary = ReplayAsrClient::from_file(&fixture.replay_secondary).unwrap();
    let out = dir.join("segments.jsonl");
    curate(&fixture.manifest, &primary, &secondary, &out).unwrap();

    let text = std::fs::read_to_string(&out).unwrap();
    let records: Vec<SegmentRecord> =
        text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mut ok = records.len() == fixture.expected.len();
    let mut mismatches = 0;
    for (rec, exp) in records.iter().zip(&fixture.expected) {
        if rec.id != exp.id || rec.label != exp.label || rec.text_cont != exp.text_cont {
            ok = false;
            mismatches += 1;
        }
    }

    // The two threshold boundaries are rejections, not acceptances.
    let by_id = |id: &str| records.iter().find(|r| r.id == id).unwrap();
    ok &= by_id("r02").label == Label::NonSpeech; // english prob exactly 0.5
    ok &= by_id("r03").label == Label::NonSpeech; // cross wer exactly 0.5
    report(
        "6 (curation rules on the replay fixture)",
        ok,
        &format!(
            "{} records, {mismatches} label mismatches, both boundary cases rejected",
            records.len()
        ),
    );
}

#[test]
fn criterion_7_snr_mixing_and_standardization() {
    let speech = standardize(&tone_segment(220.0, 22_050, 11.0, 0.4, "commonvoice")).unwrap();
    let noise = standardize(&noise_segment(9, 44_100, 12.0, 0.3, "noise")).unwrap();

    let mut ok = true;
    let mut worst_db = 0.0f64;
    for &snr_db in &[4.0, 10.0, 20.0] {
        let mix = mix_snr(&speech, &noise, snr_db).unwrap();
        let residual: Vec<f64> = mix
            .samples()
            .iter()
            .zip(speech.samples())
            .map(|(m, s)| m - s)
            .collect();
        let achieved = 20.0 * (speech.rms() / duodiff::datapipe::rms(&residual)).log10();
        let err = (achieved - snr_db).abs();
        worst_db = worst_db.max(err);
        if err > 0.01 {
            ok = false;
        }
    }

    let once = standardize(&tone_segment(330.0, 8_000, 3.0, 0.5, "clips")).unwrap();
    let twice = standardize(&once).unwrap();
    ok &= once.samples().len() == TARGET_SAMPLES;
    ok &= once.samples() == twice.samples() && once.rate() == twice.rate();
    report(
        "7 (snr mixing and standardization)",
        ok,
        &format!(
            "worst snr error {worst_db:.4} dB, standardize idempotent at {TARGET_SAMPLES} samples"
        ),
    );
}

/// Minimum edit cost over explicitly enumerated monotone alignments: matched
/// pairs cost 0 or 1 (substitution), everything unmatched costs 1. A
/// different algorithm from the dynamic program it checks.
fn alignment_edit_cost(a: &[u8], b: &[u8]) -> usize {
    let (la, lb) = (a.len(), b.len());
    let mut best = la + lb;
    for ma in 0u32..1 << la {
        for mb in 0u32..1 << lb {
            if ma.count_ones() != mb.count_ones() {
                continue;
            }
            let ia = (0..la).filter(|i| ma >> i & 1 == 1);
            let ib: Vec<usize> = (0..lb).filter(|i| mb >> i & 1 == 1).collect();
            let subs = ia.zip(&ib).filter(|(x, y)| a[*x] != b[**y]).count();
            let m = ma.count_ones() as usize;
            best = best.min(la - m + lb - m + subs);
        }
    }
    best
}

#[test]
fn criterion_8_metric_oracles() {
    // Every sequence pair over a two-word vocabulary up to length six,
    // checked against the alignment enumeration.
    let mut seqs: Vec<Vec<u8>> = vec![vec![]];
    for len in 1..=6usize {
        for bits in 0u32..1 << len {
            seqs.push((0..len).map(|i| (bits >> i & 1) as u8).collect());
        }
    }
    let to_tokens = |s: &[u8]| {
        TokenSeq::from_words(
            s.iter().map(|&w| if w == 0 { "aa".to_string() } else { "bb".to_string() }).collect(),
        )
    };
    let mut wer_ok = true;
    let mut checked = 0usize;
    for a in &seqs {
        let ta = to_tokens(a);
        for b in &seqs {
            let tb = to_tokens(b);
            let dp = edit_distance(&ta, &tb);
            let brute = alignment_edit_cost(a, b);
            if dp != brute {
                wer_ok = false;
            }
            if !a.is_empty() {
                let w = wer(&ta, &tb).unwrap();
                if (w - brute as f64 / a.len() as f64).abs() > 1e-12 {
                    wer_ok = false;
                }
            }
            checked += 1;
        }
    }

    // Frechet distance: the scalar closed form, then random covariance pairs
    // against a Denman-Beavers square-root oracle.
    let scalar = |mu: f64, var: f64| {
        EmbeddingSet::from_moments(vec![mu], vec![vec![var]]).unwrap()
    };
    let mut frechet_ok = true;
    for (ma, va, mb, vb) in [(0.0, 1.0, 3.0, 1.0), (1.0, 4.0, -2.0, 0.25), (0.5, 2.0, 0.5, 2.0)] {
        let got = frechet_distance(&scalar(ma, va), &scalar(mb, vb)).unwrap();
        let want = (ma - mb).powi(2) + (va.sqrt() - vb.sqrt()).powi(2);
        if (got - want).abs() > 1e-6 {
            frechet_ok = false;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    for _ in 0..5 {
        let d = 4;
        let spd = |rng: &mut ChaCha8Rng| {
            let a = DMatrix::<f64>::from_fn(d, d, |_, _| rng.sample::<f64, _>(StandardNormal));
            &a * a.transpose() + DMatrix::identity(d, d) * 0.1
        };
        let (sa, sb) = (spd(&mut rng), spd(&mut rng));
        let mu_a: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mu_b: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let rows = |m: &DMatrix<f64>| {
            (0..d).map(|i| (0..d).map(|j| m[(i, j)]).collect()).collect::<Vec<Vec<f64>>>()
        };
        let set_a = EmbeddingSet::from_moments(mu_a.clone(), rows(&sa)).unwrap();
        let set_b = EmbeddingSet::from_moments(mu_b.clone(), rows(&sb)).unwrap();
        let got = frechet_distance(&set_a, &set_b).unwrap();

        // Denman-Beavers iteration for sqrt(sa * sb), no eigendecomposition.
        let mut y = &sa * &sb;
        let mut z = DMatrix::<f64>::identity(d, d);
        for _ in 0..100 {
            let y_next = (&y + z.clone().try_inverse().unwrap()) * 0.5;
            let z_next = (&z + y.clone().try_inverse().unwrap()) * 0.5;
            y = y_next;
            z = z_next;
        }
        let mean_term: f64 = mu_a.iter().zip(&mu_b).map(|(x, y)| (x - y) * (x - y)).sum();
        let want = mean_term + sa.trace() + sb.trace() - 2.0 * y.trace();
        if (got - want).abs() > 1e-6 {
            frechet_ok = false;
        }
    }

    // KL divergence never goes negative on random distribution pairs.
    let mut kl_ok = true;
    let mut min_kl = f64::INFINITY;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=8);
        let draw = |rng: &mut ChaCha8Rng| {
            let raw: Vec<f64> = (0..k).map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = raw.iter().sum();
            raw.into_iter().map(|x| x / total).collect::<Vec<f64>>()
        };
        let (p, q) = (draw(&mut rng), draw(&mut rng));
        let kl = kl_divergence(&p, &q).unwrap();
        min_kl = min_kl.min(kl);
        if kl < -1e-12 {
            kl_ok = false;
        }
    }

    let ok = wer_ok && frechet_ok && kl_ok;
    report(
        "8 (metric oracles)",
        ok,
        &format!(
            "{checked} alignment pairs exact, frechet within 1e-6 of closed form and matrix-sqrt oracle, min kl {min_kl:.2e}"
        ),
    );
}

#[test]
fn criterion_9_byte_identical_reruns() {
    let base = std::env::temp_dir().join("duodiff-acceptance-rerun");
    let _ = std::fs::remove_dir_all(&base);

    let mut config = RunConfig {
        out_dir: base.join("sample"),
        n_samples: 60,
        n_sample_steps: 40,
        ..RunConfig::default()
    };
    let mut ok = true;
    let mut detail = Vec::new();

    let out = cmd_sample(&config).unwrap();
    let mut first: Vec<(String, Vec<u8>)> = Vec::new();
    for path in [&out.csv, &config.out_dir.join("effective.cfg"), out.svg.as_ref().unwrap()] {
        first.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(path).unwrap(),
        ));
    }
    let out2 = cmd_sample(&config).unwrap();
    for (name, bytes) in &first {
        let again = std::fs::read(config.out_dir.join(name)).unwrap();
        if &again != bytes {
            ok = false;
            detail.push(format!("sample {name} differs"));
        }
    }
    assert_eq!(out.mean, out2.mean);

    config.out_dir = base.join("sweep");
    config.n_samples = 40;
    config.n_sample_steps = 20;
    config.sweep_grid = vec![5.0, 9.0];
    let out = cmd_sweep(&config).unwrap();
    let mut first: Vec<(String, Vec<u8>)> = Vec::new();
    for path in [&out.csv, &config.out_dir.join("effective.cfg"), out.svg.as_ref().unwrap()] {
        first.push((
            path.file_name().unwrap().to_string_lossy().into_owned(),
            std::fs::read(path).unwrap(),
        ));
    }
    cmd_sweep(&config).unwrap();
    for (name, bytes) in &first {
        let again = std::fs::read(config.out_dir.join(name)).unwrap();
        if &again != bytes {
            ok = false;
            detail.push(format!("sweep {name} differs"));
        }
    }

    report(
        "9 (byte-identical reruns)",
        ok,
        &if detail.is_empty() {
            "sample and sweep artifacts identical across reruns".to_string()
        } else {
            detail.join("; ")
        },
    );
}
