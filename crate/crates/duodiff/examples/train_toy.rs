//! Train the noise-prediction network on the analytic grid world.
//!
//! Each step draws clean latents with their label pair, diffuses them to a
//! random timestep, and regresses the injected noise. Conditions drop out
//! independently with probability 0.1, so the same network learns all four
//! conditional modes (both, description only, content only, neither) and
//! can later be combined by dual guidance. After training, the example
//! checks the analytic gradients against finite differences and compares
//! the network's predictions to the exact oracle scores.
//!
//! Run with `cargo run --release --example train_toy`.

use duodiff::diffusion::{ConditionMask, Latent, NoiseSchedule};
use duodiff::oracle::{OracleMask, ToyWorld};
use duodiff::scorenet::{
    Checkpoint, ConditionPair, NetConfig, ScoreNet, TrainSample, Trainer,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn main() {
    let schedule = NoiseSchedule::linear(200, 1e-4, 0.02).expect("valid schedule");
    let world = ToyWorld::default_verification();
    let config = NetConfig {
        n_timesteps: 200,
        ..NetConfig::toy()
    };
    let net = ScoreNet::init(config).expect("valid network config");
    let mut trainer = Trainer::new(net, 2e-3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let steps = 600;
    let batch = 16;
    println!("training {steps} steps, batch {batch}, dropout 0.1");
    let mut window = Vec::with_capacity(100);
    for step in 0..steps {
        let mut items = Vec::with_capacity(batch);
        for _ in 0..batch {
            let (z0, a, b) = world.draw(None, None, &mut rng).expect("draw");
            items.push((z0.values, ConditionPair::one_hot(a, 3, b, 3)));
        }
        let report = trainer
            .training_step(&items, &schedule, 0.1, &mut rng)
            .expect("training step");
        // Single-batch losses are noisy; report the mean over each window.
        window.push(report.loss);
        if (step + 1) % 100 == 0 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            println!("  steps {:>4}..{:>4}: mean loss {mean:.4}", step + 1 - window.len(), step);
            window.clear();
        }
    }

    // Gradient check on a fresh sample: analytic tape gradients against
    // central finite differences, reported as the worst relative error.
    let t = 120;
    let eps: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let (z0, a, b) = world.draw(None, None, &mut rng).expect("draw");
    let z_t = duodiff::diffusion::forward_diffuse(
        &Latent::clean(z0.values),
        t,
        &duodiff::diffusion::NoisePrediction::new(eps.clone()),
        &schedule,
    )
    .expect("forward diffusion");
    let sample = TrainSample {
        z_t: z_t.values,
        t,
        eps,
        cond: ConditionPair::one_hot(a, 3, b, 3),
    };
    let check = trainer.net().grad_check(&sample, 1e-5).expect("grad check");
    println!("\ngradient check: max relative error {:.3e}", check.max_rel_error);
    assert!(check.max_rel_error < 1e-4, "gradients must match finite differences");

    // How close did we get to the truth? Compare predictions to the exact
    // mixture scores at a few points, under every mask.
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let t = rng.gen_range(0..schedule.steps());
        let (z0, a, b) = world.draw(None, None, &mut rng).expect("draw");
        let noise: Vec<f64> = (0..2).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let z_t = duodiff::diffusion::forward_diffuse(
            &Latent::clean(z0.values),
            t,
            &duodiff::diffusion::NoisePrediction::new(noise),
            &schedule,
        )
        .expect("forward diffusion");
        let cond = ConditionPair::one_hot(a, 3, b, 3);
        for mask in ConditionMask::ALL {
            let predicted = trainer
                .net()
                .predict_noise(&z_t, t, &cond.masked(mask))
                .expect("prediction");
            let exact = world
                .diffused_score(&z_t, t, &schedule, &OracleMask::from_condition(mask, a, b))
                .expect("oracle score");
            let err: f64 = predicted
                .values
                .iter()
                .zip(&exact.values)
                .map(|(p, e)| (p - e) * (p - e))
                .sum();
            worst = worst.max(err.sqrt());
        }
    }
    println!("worst prediction distance to the exact score: {worst:.3}");

    let out = std::env::temp_dir().join("duodiff-train-toy");
    std::fs::create_dir_all(&out).expect("create output dir");
    let path = out.join("checkpoint.json");
    Checkpoint::new(&trainer, &rng).save(&path).expect("save checkpoint");
    println!("checkpoint written to {}", path.display());
}
