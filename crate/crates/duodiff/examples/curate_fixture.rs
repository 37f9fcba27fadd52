//! Run the curation rules over the bundled synthetic corpus.
//!
//! The fixture synthesizes twenty WAV segments with replayed transcription
//! responses that exercise every labeling rule: agreement and disagreement
//! between the two backends, both threshold boundaries (language
//! probability exactly 0.5, cross transcript error rate exactly 0.5), the
//! shipped-transcript shortcut for clips under ten seconds, and every
//! failure path (missing audio, missing backend response, missing language
//! probability). Failures never drop a record: they come out labeled
//! unresolved, ready for a later pass.
//!
//! Run with `cargo run --example curate_fixture`.

use duodiff::clients::ReplayAsrClient;
use duodiff::datapipe::{curate, Label, SegmentRecord};
use duodiff::fixtures::write_curation_fixture;

fn main() {
    let dir = std::env::temp_dir().join("duodiff-curate-fixture");
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).expect("create fixture dir");

    let fixture = write_curation_fixture(&dir).expect("fixture synthesis");
    println!("fixture corpus in {}", dir.display());

    let primary = ReplayAsrClient::from_file(&fixture.replay_primary).expect("primary replay");
    let secondary =
        ReplayAsrClient::from_file(&fixture.replay_secondary).expect("secondary replay");
    let out = dir.join("segments.jsonl");
    let summary = curate(&fixture.manifest, &primary, &secondary, &out).expect("curation runs");

    let text = std::fs::read_to_string(&out).expect("read output manifest");
    let records: Vec<SegmentRecord> = text
        .lines()
        .map(|l| serde_json::from_str(l).expect("valid record"))
        .collect();

    println!("\n{:<5} {:<11} {}", "id", "label", "why");
    for r in &records {
        let label = match r.label {
            Label::Speech => "speech",
            Label::NonSpeech => "non-speech",
            Label::Unresolved => "unresolved",
        };
        println!("{:<5} {:<11} {}", r.id, label, r.provenance);
    }

    println!(
        "\ntotals: {} speech, {} non-speech, {} unresolved of {}",
        summary.speech, summary.non_speech, summary.unresolved, summary.total
    );

    // The expected labels ship with the fixture; the run must match them.
    for (record, expect) in records.iter().zip(&fixture.expected) {
        assert_eq!(record.id, expect.id);
        assert_eq!(record.label, expect.label, "record {}", record.id);
        assert_eq!(record.text_cont, expect.text_cont, "record {}", record.id);
    }
    println!("all {} labels match the fixture ground truth", records.len());
}
