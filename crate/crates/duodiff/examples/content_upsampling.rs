//! From text to a fixed-length content condition.
//!
//! The content path takes a token sequence of length `L`, encodes it, predicts
//! a duration per token, and repeats each hidden row by its duration to reach
//! a target length `N >= L`. This example walks the pipeline on a real prompt
//! and shows the budgeted rounding on a hand-checkable case.
//!
//! Run with `cargo run --example content_upsampling`.

use duodiff::content::{
    integer_durations, tokenize_chars, upsample, ContentConfig, ContentEncoder,
};

fn main() {
    let encoder = ContentEncoder::init(ContentConfig::toy_chars()).unwrap();

    let text = "hello world";
    let tokens = tokenize_chars(text).unwrap();
    println!("prompt {:?} tokenizes to {} tokens: {:?}", text, tokens.len(), tokens);

    // Free-running: durations are whatever the predictor rounds to.
    let free = encoder.process(&tokens, None).unwrap();
    println!(
        "free durations {:?} (sum {}), upsampled shape {}x{}",
        free.durations,
        free.durations.iter().sum::<usize>(),
        free.upsampled.rows(),
        free.upsampled.cols()
    );

    // Budgeted: the same prompt forced to exactly N frames.
    let n_target = 24;
    let budgeted = encoder.process(&tokens, Some(n_target)).unwrap();
    assert_eq!(budgeted.durations.iter().sum::<usize>(), n_target);
    assert!(tokens.len() <= n_target);
    println!(
        "budget {} durations {:?}, upsampled shape {}x{}",
        n_target,
        budgeted.durations,
        budgeted.upsampled.rows(),
        budgeted.upsampled.cols()
    );

    // Every upsampled row is an exact copy of its source hidden row, in order.
    let mut row = 0;
    for (i, &d) in budgeted.durations.iter().enumerate() {
        for _ in 0..d {
            for c in 0..budgeted.hidden.cols() {
                assert_eq!(budgeted.upsampled.get(row, c), budgeted.hidden.get(i, c));
            }
            row += 1;
        }
    }
    println!("verified: each of the {} rows repeats its token's hidden state", row);

    // The budgeted rounding by hand. Raw predictions [1,1,1,1,7] with a budget
    // of 10: each token gets one frame, the 5 spare frames split 5/11 each to
    // the light tokens and 35/11 to the heavy one. Floors give [1,1,1,1,4] and
    // the two leftover frames go to the largest remainders, indices 0 and 1.
    let raw = [1.0, 1.0, 1.0, 1.0, 7.0];
    let rounded = integer_durations(&raw, Some(10)).unwrap();
    println!("raw {:?} with budget 10 rounds to {:?}", raw, rounded);
    assert_eq!(rounded, vec![2, 2, 1, 1, 4]);

    // A budget below the token count cannot give every token a frame.
    let err = integer_durations(&raw, Some(3)).unwrap_err();
    println!("budget 3 for 5 tokens fails: {}", err);

    // upsample checks the budget too: durations must sum to the target.
    let err = upsample(&budgeted.hidden, &budgeted.durations, Some(n_target + 1)).unwrap_err();
    println!("mismatched budget fails: {}", err);

    // An empty prompt is the null condition, not an error.
    assert!(encoder.condition("", Some(16)).unwrap().is_none());
    let cond = encoder.condition("say it", Some(16)).unwrap().unwrap();
    println!(
        "condition for a prompt is {}x{}; the empty prompt selects None",
        cond.rows(),
        cond.cols()
    );
}
