//! Deterministic test data: synthesized audio, manifests, replay fixtures.
//!
//! Everything here is generated from fixed seeds and hand-derived expected
//! outcomes, so curation and evaluation can be exercised end to end with no
//! external services and no recorded binary assets. The curation fixture in
//! particular covers every labeling rule, including both threshold
//! boundaries and every failure path.

use crate::clients::AsrResponse;
use crate::datapipe::{
    write_wav, AudioSegment, DatapipeError, Label, ManifestEntry,
};
use crate::metrics::{
    CosinePair, DistPair, EmbeddingPools, EvalInput, TranscriptTriple, EVAL_SCHEMA,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

/// A pure sine burst, handy as a stand-in speech clip.
pub fn tone_segment(
    freq: f64,
    rate: u32,
    seconds: f64,
    amp: f64,
    source: &str,
) -> AudioSegment {
    let n = (rate as f64 * seconds).round() as usize;
    let samples = (0..n)
        .map(|i| amp * (2.0 * std::f64::consts::PI * freq * i as f64 / rate as f64).sin())
        .collect();
    AudioSegment::new(samples, rate, source).expect("tone is nonempty")
}

/// Seeded uniform noise, a stand-in for a background-sound clip.
pub fn noise_segment(seed: u64, rate: u32, seconds: f64, amp: f64, source: &str) -> AudioSegment {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (rate as f64 * seconds).round() as usize;
    let samples = (0..n).map(|_| amp * (2.0 * rng.gen::<f64>() - 1.0)).collect();
    AudioSegment::new(samples, rate, source).expect("noise is nonempty")
}

/// What curation is expected to decide for one fixture record.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedRecord {
    pub id: String,
    pub label: Label,
    pub text_cont: Option<String>,
}

/// Paths and ground truth for the synthesized curation corpus.
#[derive(Debug)]
pub struct CurationFixture {
    pub manifest: PathBuf,
    pub replay_primary: PathBuf,
    pub replay_secondary: PathBuf,
    pub expected: Vec<ExpectedRecord>,
}

struct FixtureRow {
    id: &'static str,
    /// None synthesizes no file: the manifest points at a missing path.
    audio: Option<(f64, u32, f64)>,
    source: &'static str,
    transcript: Option<&'static str>,
    /// Replay entry for the primary backend, if any.
    primary: Option<&'static str>,
    /// Replay entry for the secondary backend: text plus language prob.
    secondary: Option<(&'static str, Option<f64>)>,
    expect: Label,
    expect_text: Option<&'static str>,
}

fn fixture_rows() -> Vec<FixtureRow> {
    use Label::*;
    vec![
        // Clean agreement, confidently English.
        FixtureRow {
            id: "r01",
            audio: Some((220.0, 16_000, 2.0)),
            source: "audioset",
            transcript: None,
            primary: Some("hello world how are you"),
            secondary: Some(("hello world how are you", Some(0.95))),
            expect: Speech,
            expect_text: Some("hello world how are you"),
        },
        // Language probability exactly at the threshold: rejected, the
        // comparison is strict.
        FixtureRow {
            id: "r02",
            audio: Some((240.0, 16_000, 1.5)),
            source: "audioset",
            transcript: None,
            primary: Some("the weather is fine"),
            secondary: Some(("the weather is fine", Some(0.5))),
            expect: NonSpeech,
            expect_text: None,
        },
        // Cross error rate exactly at the threshold: four reference words,
        // two substitutions.
        FixtureRow {
            id: "r03",
            audio: Some((260.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("open the back gate"),
            secondary: Some(("open the front door", Some(0.9))),
            expect: NonSpeech,
            expect_text: None,
        },
        // One substitution in five, through the resampling path.
        FixtureRow {
            id: "r04",
            audio: Some((280.0, 22_050, 3.0)),
            source: "commonvoice",
            transcript: None,
            primary: Some("one two tree four five"),
            secondary: Some(("one two three four five", Some(0.9))),
            expect: Speech,
            expect_text: Some("one two tree four five"),
        },
        // Primary hears nothing. The secondary backend is never consulted,
        // so its replay entry is deliberately absent.
        FixtureRow {
            id: "r05",
            audio: Some((300.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some(""),
            secondary: None,
            expect: NonSpeech,
            expect_text: None,
        },
        // Primary output that normalizes to nothing.
        FixtureRow {
            id: "r06",
            audio: Some((320.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("...!"),
            secondary: None,
            expect: NonSpeech,
            expect_text: None,
        },
        // Just inside both thresholds.
        FixtureRow {
            id: "r07",
            audio: Some((340.0, 16_000, 2.0)),
            source: "commonvoice",
            transcript: None,
            primary: Some("turn left at the bridge"),
            secondary: Some(("turn left at the ridge", Some(0.51))),
            expect: Speech,
            expect_text: Some("turn left at the bridge"),
        },
        // Just below the language threshold.
        FixtureRow {
            id: "r08",
            audio: Some((360.0, 16_000, 2.0)),
            source: "audioset",
            transcript: None,
            primary: Some("music playing softly now"),
            secondary: Some(("music playing softly now", Some(0.49))),
            expect: NonSpeech,
            expect_text: None,
        },
        // Confidently English but the transcripts disagree badly: three
        // substitutions in five.
        FixtureRow {
            id: "r09",
            audio: Some((380.0, 16_000, 2.0)),
            source: "audioset",
            transcript: None,
            primary: Some("dog cat fish white black"),
            secondary: Some(("red green blue white black", Some(0.9))),
            expect: NonSpeech,
            expect_text: None,
        },
        // Shipped transcript, under ten seconds: kept verbatim, no backend
        // calls. Neither replay file has an entry, which proves the skip.
        FixtureRow {
            id: "r10",
            audio: Some((400.0, 16_000, 8.0)),
            source: "commonvoice",
            transcript: Some("shipped transcript for short clip"),
            primary: None,
            secondary: None,
            expect: Speech,
            expect_text: Some("shipped transcript for short clip"),
        },
        // Shipped transcript but twelve seconds long: the shortcut does not
        // apply, the backends decide, and the content text is the primary
        // transcript rather than the shipped one.
        FixtureRow {
            id: "r11",
            audio: Some((420.0, 16_000, 12.0)),
            source: "commonvoice",
            transcript: Some("ignored long transcript"),
            primary: Some("this went through the models"),
            secondary: Some(("this went through the models", Some(0.9))),
            expect: Speech,
            expect_text: Some("this went through the models"),
        },
        // Shipped transcript at exactly ten seconds: the shortcut needs
        // strictly less, so the backends run and reject on language.
        FixtureRow {
            id: "r12",
            audio: Some((440.0, 16_000, 10.0)),
            source: "commonvoice",
            transcript: Some("boundary transcript"),
            primary: Some("borderline duration clip here"),
            secondary: Some(("borderline duration clip here", Some(0.3))),
            expect: NonSpeech,
            expect_text: None,
        },
        // Primary backend has no answer for this id.
        FixtureRow {
            id: "r13",
            audio: Some((460.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: None,
            secondary: None,
            expect: Unresolved,
            expect_text: None,
        },
        // Secondary answers without a language probability.
        FixtureRow {
            id: "r14",
            audio: Some((480.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("speech like sounds here"),
            secondary: Some(("speech like sounds here", None)),
            expect: Unresolved,
            expect_text: None,
        },
        // Perfect agreement through the upsampling path.
        FixtureRow {
            id: "r15",
            audio: Some((200.0, 8_000, 2.0)),
            source: "commonvoice",
            transcript: None,
            primary: Some("identical words again"),
            secondary: Some(("identical words again", Some(1.0))),
            expect: Speech,
            expect_text: Some("identical words again"),
        },
        // Case and punctuation differences vanish under normalization, and
        // the content text keeps the raw primary transcript.
        FixtureRow {
            id: "r16",
            audio: Some((500.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("Hello, WORLD!"),
            secondary: Some(("hello world", Some(0.9))),
            expect: Speech,
            expect_text: Some("Hello, WORLD!"),
        },
        // Secondary hears nothing at all: total disagreement.
        FixtureRow {
            id: "r17",
            audio: Some((520.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("words were heard"),
            secondary: Some(("", Some(0.9))),
            expect: NonSpeech,
            expect_text: None,
        },
        // The manifest points at a file that does not exist.
        FixtureRow {
            id: "r18",
            audio: None,
            source: "audioset",
            transcript: None,
            primary: None,
            secondary: None,
            expect: Unresolved,
            expect_text: None,
        },
        // Insertions blow past the threshold: one reference word, two
        // insertions, error rate two.
        FixtureRow {
            id: "r19",
            audio: Some((540.0, 16_000, 1.0)),
            source: "audioset",
            transcript: None,
            primary: Some("go go go"),
            secondary: Some(("go", Some(0.8))),
            expect: NonSpeech,
            expect_text: None,
        },
        // Background sound: the primary transcript is empty.
        FixtureRow {
            id: "r20",
            audio: Some((560.0, 16_000, 3.0)),
            source: "audioset",
            transcript: None,
            primary: Some(""),
            secondary: None,
            expect: NonSpeech,
            expect_text: None,
        },
    ]
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DatapipeError + '_ {
    move |source| DatapipeError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), DatapipeError> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text).map_err(io_err(path))
}

/// Synthesize the twenty-record curation corpus into `dir`: WAV files, a
/// JSONL manifest, and one replay fixture per transcription backend. The
/// returned ground truth covers seven speech, ten non-speech, and three
/// unresolved records.
pub fn write_curation_fixture(dir: &Path) -> Result<CurationFixture, DatapipeError> {
    let rows = fixture_rows();
    let wav_dir = dir.join("wav");
    std::fs::create_dir_all(&wav_dir).map_err(io_err(&wav_dir))?;

    let mut manifest_lines = String::new();
    let mut primary_map: BTreeMap<String, AsrResponse> = BTreeMap::new();
    let mut secondary_map: BTreeMap<String, AsrResponse> = BTreeMap::new();
    let mut expected = Vec::with_capacity(rows.len());

    for row in &rows {
        let wav_rel = format!("wav/{}.wav", row.id);
        if let Some((freq, rate, seconds)) = row.audio {
            let clip = tone_segment(freq, rate, seconds, 0.4, row.source);
            write_wav(&dir.join(&wav_rel), &clip)?;
        }
        let entry = ManifestEntry {
            id: row.id.to_string(),
            wav: wav_rel,
            source: row.source.to_string(),
            transcript: row.transcript.map(|t| t.to_string()),
        };
        manifest_lines.push_str(&serde_json::to_string(&entry)?);
        manifest_lines.push('\n');

        if let Some(text) = row.primary {
            primary_map.insert(
                row.id.to_string(),
                AsrResponse {
                    text: text.to_string(),
                    language_prob: None,
                },
            );
        }
        if let Some((text, prob)) = row.secondary {
            secondary_map.insert(
                row.id.to_string(),
                AsrResponse {
                    text: text.to_string(),
                    language_prob: prob,
                },
            );
        }
        expected.push(ExpectedRecord {
            id: row.id.to_string(),
            label: row.expect,
            text_cont: row.expect_text.map(|t| t.to_string()),
        });
    }

    let manifest = dir.join("manifest.jsonl");
    std::fs::write(&manifest, manifest_lines).map_err(io_err(&manifest))?;
    let replay_primary = dir.join("replay_primary.json");
    write_json(&replay_primary, &primary_map)?;
    let replay_secondary = dir.join("replay_secondary.json");
    write_json(&replay_secondary, &secondary_map)?;

    Ok(CurationFixture {
        manifest,
        replay_primary,
        replay_secondary,
        expected,
    })
}

/// Ground truth for the evaluation fixture, derived by hand.
#[derive(Clone, Debug)]
pub struct ExpectedEval {
    pub wer_mean: f64,
    pub delta_wer_mean: f64,
    pub kl_mean: f64,
    pub frechet: f64,
    pub cosine_mean: f64,
}

#[derive(Debug)]
pub struct EvalFixture {
    pub input: PathBuf,
    pub expected: ExpectedEval,
}

/// Write a small evaluation batch whose every aggregate has a closed-form
/// value.
///
/// Transcripts: the first item is exact (rate 0) and its secondary differs
/// by one word in four; the second drops one reference word in three and its
/// secondary matches the reference. Hence the mean error rate is 1/6 and the
/// mean shift is (1/4 + 1/3) / 2.
///
/// Distributions: one identical pair (divergence 0) and one with
/// p = (1/2, 1/2), q = (1/4, 3/4), divergence ln(4/3)/2.
///
/// Embeddings: one-dimensional pools with means 1 and 4 and equal sample
/// variance 2, so the Fréchet distance is 9. Cosines: orthogonal and
/// parallel pairs average one half.
pub fn write_eval_fixture(dir: &Path) -> Result<EvalFixture, DatapipeError> {
    let input_value = EvalInput {
        schema: EVAL_SCHEMA.to_string(),
        transcripts: vec![
            TranscriptTriple {
                id: "t1".to_string(),
                reference: "the quick brown fox".to_string(),
                primary: "the quick brown fox".to_string(),
                secondary: "the quick brown box".to_string(),
            },
            TranscriptTriple {
                id: "t2".to_string(),
                reference: "hello there world".to_string(),
                primary: "hello world".to_string(),
                secondary: "hello there world".to_string(),
            },
        ],
        distributions: vec![
            DistPair {
                id: "d1".to_string(),
                p: vec![0.5, 0.5],
                q: vec![0.5, 0.5],
            },
            DistPair {
                id: "d2".to_string(),
                p: vec![0.5, 0.5],
                q: vec![0.25, 0.75],
            },
        ],
        embeddings: Some(EmbeddingPools {
            real: vec![vec![3.0], vec![5.0]],
            generated: vec![vec![0.0], vec![2.0]],
        }),
        cosine_pairs: vec![
            CosinePair {
                id: "c1".to_string(),
                a: vec![1.0, 0.0],
                b: vec![0.0, 1.0],
            },
            CosinePair {
                id: "c2".to_string(),
                a: vec![1.0, 1.0],
                b: vec![2.0, 2.0],
            },
        ],
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let input = dir.join("eval_input.json");
    write_json(&input, &input_value)?;
    let expected = ExpectedEval {
        wer_mean: (0.0 + 1.0 / 3.0) / 2.0,
        delta_wer_mean: (0.25 + 1.0 / 3.0) / 2.0,
        kl_mean: 0.5 * (4.0f64 / 3.0).ln() / 2.0,
        frechet: 9.0,
        cosine_mean: 0.5,
    };
    Ok(EvalFixture { input, expected })
}
