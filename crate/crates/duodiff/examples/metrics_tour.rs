//! A walk through the evaluation metrics with hand-checkable numbers.
//!
//! Run with `cargo run --example metrics_tour`.

use duodiff::metrics::{
    delta_wer, edit_distance, embedding_cosine, frechet_distance, kl_divergence, wer,
    EmbeddingSet, TokenSeq,
};

fn main() {
    // Text normalizes before comparison: case, punctuation, and whitespace
    // never count as errors.
    let reference = TokenSeq::from_text("The quick brown fox, jumps!");
    let exact = TokenSeq::from_text("the QUICK brown fox jumps");
    let sloppy = TokenSeq::from_text("the quick brown box jumped over");
    println!("reference tokens: {:?}", reference.words());
    println!(
        "edit distance exact = {}, sloppy = {}",
        edit_distance(&reference, &exact),
        edit_distance(&reference, &sloppy)
    );
    println!(
        "wer exact = {:.3}, sloppy = {:.3}",
        wer(&reference, &exact).unwrap(),
        wer(&reference, &sloppy).unwrap()
    );

    // Relative error rate between two transcription systems: the secondary
    // hypothesis plays reference. Zero means the systems agree perfectly,
    // whatever the truth is.
    let primary = TokenSeq::from_text("turn left at the bridge");
    let secondary = TokenSeq::from_text("turn left at the ridge");
    println!(
        "delta wer between systems = {:.3}",
        delta_wer(&primary, &secondary).unwrap()
    );

    // Divergence between label distributions, in nats. The uniform-vs-skewed
    // pair has the closed form ln(4/3)/2.
    let p = [0.5, 0.5];
    let q = [0.25, 0.75];
    println!(
        "kl(p || q) = {:.6} (closed form {:.6})",
        kl_divergence(&p, &q).unwrap(),
        (4.0f64 / 3.0).ln() / 2.0
    );

    // Fréchet distance between embedding populations. In one dimension it
    // reduces to (mu_a - mu_b)^2 + (sigma_a - sigma_b)^2; these two pools
    // share their variance, so only the means contribute.
    let real = vec![vec![3.0], vec![5.0]];
    let generated = vec![vec![0.0], vec![2.0]];
    let real_set = EmbeddingSet::from_vectors(&real).unwrap();
    let gen_set = EmbeddingSet::from_vectors(&generated).unwrap();
    println!(
        "frechet 1-d = {:.3} (means 1 vs 4, shared variance)",
        frechet_distance(&gen_set, &real_set).unwrap()
    );

    // And in higher dimension, against itself, it vanishes.
    let cloud = vec![
        vec![0.1, -0.2, 0.3],
        vec![1.0, 0.4, -0.5],
        vec![-0.3, 0.8, 0.2],
        vec![0.6, -0.1, 0.9],
    ];
    let set = EmbeddingSet::from_vectors(&cloud).unwrap();
    println!("frechet self = {:.3e}", frechet_distance(&set, &set).unwrap());

    // Embedding cosine: alignment between a description and what got
    // generated, on whatever joint embedding the caller provides.
    println!(
        "cosine aligned = {:.3}, orthogonal = {:.3}",
        embedding_cosine(&[1.0, 1.0], &[2.0, 2.0]).unwrap(),
        embedding_cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap()
    );
}
