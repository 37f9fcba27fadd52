//! Audio standardization, noise mixing, and transcript-driven curation.
//!
//! Raw corpus segments arrive at arbitrary sample rates and lengths with
//! unreliable or missing transcripts. This module turns them into uniform
//! ten-second 16 kHz clips and sorts them into speech and non-speech pools
//! by cross-checking two transcription backends. Every rule here is a pure
//! function of the transcripts and probabilities involved, so a replay
//! client reproduces labels bit for bit.

use crate::clients::AsrClient;
use crate::metrics::{wer, MetricsError, TokenSeq};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::io::Cursor;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Every standardized clip is resampled to this rate.
pub const TARGET_RATE: u32 = 16_000;
/// Standardized clip length in seconds.
pub const TARGET_SECONDS: f64 = 10.0;
/// Standardized clip length in samples: exactly ten seconds at 16 kHz.
pub const TARGET_SAMPLES: usize = 160_000;

/// Probability that an eligible read-speech clip gets a noise bed mixed in.
pub const MIX_PROB: f64 = 0.5;
/// Signal-to-noise range, in dB, for the mixing policy.
pub const SNR_RANGE_DB: (f64, f64) = (4.0, 20.0);
/// Source tag that marks clean read speech eligible for noise mixing.
/// Segments from any other source pass through untouched.
pub const MIXABLE_SOURCE: &str = "commonvoice";

#[derive(Debug, Error)]
pub enum DatapipeError {
    #[error("audio segment has no samples")]
    EmptyAudio,
    #[error("sample rate must be positive")]
    ZeroRate,
    #[error("expected a standardized clip ({TARGET_SAMPLES} samples at {TARGET_RATE} Hz), got {samples} samples at {rate} Hz")]
    NotStandardized { samples: usize, rate: u32 },
    #[error("noise bed is silent; cannot scale it to a target snr")]
    SilentNoise,
    #[error("speech is silent; snr is undefined")]
    SilentSpeech,
    #[error("snr must be finite, got {0}")]
    BadSnr(f64),
    #[error("wav {path}: {source}")]
    Wav {
        path: PathBuf,
        source: hound::Error,
    },
    #[error("wav encode: {0}")]
    WavEncode(hound::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("manifest line {line}: {source}")]
    ManifestFormat {
        line: usize,
        source: serde_json::Error,
    },
    #[error("record serialization: {0}")]
    RecordFormat(#[from] serde_json::Error),
    #[error("a speech record must carry content text")]
    SpeechWithoutText,
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

/// A mono audio clip tagged with its sample rate and corpus of origin.
#[derive(Clone, Debug, PartialEq)]
pub struct AudioSegment {
    samples: Vec<f64>,
    rate: u32,
    pub source: String,
}

impl AudioSegment {
    pub fn new(samples: Vec<f64>, rate: u32, source: &str) -> Result<Self, DatapipeError> {
        if samples.is_empty() {
            return Err(DatapipeError::EmptyAudio);
        }
        if rate == 0 {
            return Err(DatapipeError::ZeroRate);
        }
        Ok(AudioSegment {
            samples,
            rate,
            source: source.to_string(),
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn rate(&self) -> u32 {
        self.rate
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.rate as f64
    }

    pub fn is_standardized(&self) -> bool {
        self.rate == TARGET_RATE && self.samples.len() == TARGET_SAMPLES
    }

    /// Root-mean-square amplitude.
    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }
}

pub fn rms(samples: &[f64]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    (samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64).sqrt()
}

/// Read a WAV file into a mono segment. Multi-channel input is averaged down
/// to one channel; 16-bit integer and 32-bit float encodings are accepted.
pub fn read_wav(path: &Path, source: &str) -> Result<AudioSegment, DatapipeError> {
    let mut reader = hound::WavReader::open(path).map_err(|source| DatapipeError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = reader.spec();
    let channels = spec.channels.max(1) as usize;
    let wrap = |source: hound::Error| DatapipeError::Wav {
        path: path.to_path_buf(),
        source,
    };
    let interleaved: Vec<f64> = match spec.sample_format {
        hound::SampleFormat::Int => {
            let scale = (1i64 << (spec.bits_per_sample - 1)) as f64;
            reader
                .samples::<i32>()
                .map(|s| s.map(|v| v as f64 / scale))
                .collect::<Result<_, _>>()
                .map_err(wrap)?
        }
        hound::SampleFormat::Float => reader
            .samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<Result<_, _>>()
            .map_err(wrap)?,
    };
    let mono: Vec<f64> = interleaved
        .chunks(channels)
        .map(|frame| frame.iter().sum::<f64>() / channels as f64)
        .collect();
    AudioSegment::new(mono, spec.sample_rate, source)
}

/// Write a segment as 16-bit PCM WAV, clamping to [-1, 1].
pub fn write_wav(path: &Path, segment: &AudioSegment) -> Result<(), DatapipeError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: segment.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut writer = hound::WavWriter::create(path, spec).map_err(|source| DatapipeError::Wav {
        path: path.to_path_buf(),
        source,
    })?;
    for &s in &segment.samples {
        writer
            .write_sample(quantize_i16(s))
            .map_err(|source| DatapipeError::Wav {
                path: path.to_path_buf(),
                source,
            })?;
    }
    writer.finalize().map_err(|source| DatapipeError::Wav {
        path: path.to_path_buf(),
        source,
    })
}

// The same power-of-two scale the reader divides by, so a round trip costs
// at most half a quantization step.
fn quantize_i16(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Encode a segment as an in-memory 16-bit PCM WAV, the byte format the
/// transcription contract expects.
pub fn wav_bytes(segment: &AudioSegment) -> Result<Vec<u8>, DatapipeError> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: segment.rate,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut cursor = Cursor::new(Vec::new());
    {
        let mut writer =
            hound::WavWriter::new(&mut cursor, spec).map_err(DatapipeError::WavEncode)?;
        for &s in &segment.samples {
            writer
                .write_sample(quantize_i16(s))
                .map_err(DatapipeError::WavEncode)?;
        }
        writer.finalize().map_err(DatapipeError::WavEncode)?;
    }
    Ok(cursor.into_inner())
}

/// Windowed-sinc resampler. The kernel is a Hann-windowed sinc, 16 zero
/// crossings per side, widened proportionally when downsampling so the
/// cutoff sits at the output Nyquist. Aliasing suppression is adequate for
/// speech; no curation rule depends on resampler exactness. A same-rate
/// call returns the input unchanged, which keeps standardization idempotent
/// down to the bit.
pub fn resample(samples: &[f64], from_rate: u32, to_rate: u32) -> Vec<f64> {
    if from_rate == to_rate || samples.is_empty() {
        return samples.to_vec();
    }
    let ratio = to_rate as f64 / from_rate as f64;
    let out_len = ((samples.len() as f64) * ratio).round().max(1.0) as usize;
    let cutoff = ratio.min(1.0);
    let half_width = 16.0 / cutoff;
    let n = samples.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for i in 0..out_len {
        let center = i as f64 / ratio;
        let lo = ((center - half_width).floor() as isize).max(0);
        let hi = ((center + half_width).ceil() as isize).min(n - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for k in lo..=hi {
            let t = k as f64 - center;
            let w = hann(t / half_width) * cutoff * sinc(cutoff * t);
            acc += w * samples[k as usize];
            norm += w;
        }
        // Normalizing by the window mass pins the DC gain at one and
        // flattens edge droop from kernel truncation.
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}

fn sinc(t: f64) -> f64 {
    if t.abs() < 1e-12 {
        1.0
    } else {
        let pt = std::f64::consts::PI * t;
        pt.sin() / pt
    }
}

fn hann(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        0.5 * (1.0 + (std::f64::consts::PI * u).cos())
    }
}

/// Bring a clip to the canonical training shape: 16 kHz mono, exactly ten
/// seconds. Longer clips keep their first ten seconds; shorter ones are
/// right-padded with silence. Standardizing an already standardized clip is
/// the identity.
pub fn standardize(segment: &AudioSegment) -> Result<AudioSegment, DatapipeError> {
    if segment.samples.is_empty() {
        return Err(DatapipeError::EmptyAudio);
    }
    let mut samples = resample(&segment.samples, segment.rate, TARGET_RATE);
    samples.truncate(TARGET_SAMPLES);
    samples.resize(TARGET_SAMPLES, 0.0);
    AudioSegment::new(samples, TARGET_RATE, &segment.source)
}

/// Which noise bed got mixed into a clip, and at what level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixInfo {
    pub noise_id: String,
    pub snr_db: f64,
}

/// Mix a noise bed into a speech clip at a chosen signal-to-noise ratio.
/// Both clips must already be standardized. The noise gain is
/// `(rms_speech / rms_noise) * 10^(-snr/20)`, so the realized SNR matches
/// the request exactly up to floating-point rounding.
pub fn mix_snr(
    speech: &AudioSegment,
    noise: &AudioSegment,
    snr_db: f64,
) -> Result<AudioSegment, DatapipeError> {
    for clip in [speech, noise] {
        if !clip.is_standardized() {
            return Err(DatapipeError::NotStandardized {
                samples: clip.samples.len(),
                rate: clip.rate,
            });
        }
    }
    if !snr_db.is_finite() {
        return Err(DatapipeError::BadSnr(snr_db));
    }
    let rms_speech = speech.rms();
    let rms_noise = noise.rms();
    if rms_noise <= 0.0 {
        return Err(DatapipeError::SilentNoise);
    }
    if rms_speech <= 0.0 {
        return Err(DatapipeError::SilentSpeech);
    }
    let gain = rms_speech / rms_noise * 10f64.powf(-snr_db / 20.0);
    let samples = speech
        .samples
        .iter()
        .zip(&noise.samples)
        .map(|(s, n)| s + gain * n)
        .collect();
    AudioSegment::new(samples, TARGET_RATE, &speech.source)
}

/// Apply the training-time augmentation policy to one standardized clip:
/// only read speech tagged [`MIXABLE_SOURCE`] is eligible, half of those
/// clips get a noise bed drawn uniformly from the pool, and the SNR is
/// uniform over [`SNR_RANGE_DB`]. Everything else passes through unchanged.
pub fn maybe_mix(
    speech: &AudioSegment,
    noise_pool: &[(String, AudioSegment)],
    rng: &mut ChaCha8Rng,
) -> Result<(AudioSegment, Option<MixInfo>), DatapipeError> {
    if speech.source != MIXABLE_SOURCE || noise_pool.is_empty() {
        return Ok((speech.clone(), None));
    }
    if rng.gen::<f64>() >= MIX_PROB {
        return Ok((speech.clone(), None));
    }
    let pick = rng.gen_range(0..noise_pool.len());
    let snr_db = rng.gen_range(SNR_RANGE_DB.0..SNR_RANGE_DB.1);
    let (noise_id, noise) = &noise_pool[pick];
    let mixed = mix_snr(speech, noise, snr_db)?;
    Ok((
        mixed,
        Some(MixInfo {
            noise_id: noise_id.clone(),
            snr_db,
        }),
    ))
}

/// Transcripts from the two backends plus the secondary backend's language
/// identification, the complete input to the labeling rule.
#[derive(Clone, Debug, PartialEq)]
pub struct TranscriptPair {
    pub primary_text: String,
    pub secondary_text: String,
    pub english_prob: f64,
}

/// Pool assignment for one curated segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Speech,
    NonSpeech,
    /// A backend failed for this segment; it is kept for a later pass rather
    /// than silently dropped.
    Unresolved,
}

/// One line of the curated output manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SegmentRecord {
    pub schema: String,
    pub id: String,
    pub label: Label,
    /// Content text for speech segments. Present if and only if the label is
    /// speech.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_cont: Option<String>,
    /// Which rule produced the label, for auditability.
    pub provenance: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mix: Option<MixInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub const RECORD_SCHEMA: &str = "segment/v1";

impl SegmentRecord {
    pub fn speech(id: &str, text_cont: &str, provenance: &str) -> Self {
        SegmentRecord {
            schema: RECORD_SCHEMA.to_string(),
            id: id.to_string(),
            label: Label::Speech,
            text_cont: Some(text_cont.to_string()),
            provenance: provenance.to_string(),
            mix: None,
            error: None,
        }
    }

    pub fn non_speech(id: &str, provenance: &str) -> Self {
        SegmentRecord {
            schema: RECORD_SCHEMA.to_string(),
            id: id.to_string(),
            label: Label::NonSpeech,
            text_cont: None,
            provenance: provenance.to_string(),
            mix: None,
            error: None,
        }
    }

    pub fn unresolved(id: &str, provenance: &str, error: &str) -> Self {
        SegmentRecord {
            schema: RECORD_SCHEMA.to_string(),
            id: id.to_string(),
            label: Label::Unresolved,
            text_cont: None,
            provenance: provenance.to_string(),
            mix: None,
            error: Some(error.to_string()),
        }
    }

    /// Speech records carry content text; the other labels never do.
    pub fn check_invariant(&self) -> Result<(), DatapipeError> {
        match (self.label, &self.text_cont) {
            (Label::Speech, None) => Err(DatapipeError::SpeechWithoutText),
            _ => Ok(()),
        }
    }
}

/// Strict threshold on the secondary backend's English probability.
pub const ENGLISH_PROB_MIN: f64 = 0.5;
/// Strict threshold on the word error rate between the two transcripts.
pub const CROSS_WER_MAX: f64 = 0.5;

/// The pure labeling rule. A segment whose primary transcript normalizes to
/// nothing is non-speech. Otherwise it is a candidate, accepted as speech
/// only if the language probability exceeds [`ENGLISH_PROB_MIN`] and the
/// word error rate of the primary transcript against the secondary one is
/// below [`CROSS_WER_MAX`], both strictly. Accepted segments take the
/// primary transcript as their content text.
pub fn classify_from_transcripts(pair: &TranscriptPair) -> Result<SegmentRecord, DatapipeError> {
    classify_pair("", pair)
}

fn classify_pair(id: &str, pair: &TranscriptPair) -> Result<SegmentRecord, DatapipeError> {
    if TokenSeq::from_text(&pair.primary_text).is_empty() {
        return Ok(SegmentRecord::non_speech(id, "primary transcript empty"));
    }
    if !(pair.english_prob > ENGLISH_PROB_MIN) {
        return Ok(SegmentRecord::non_speech(
            id,
            &format!("english prob {} not above {ENGLISH_PROB_MIN}", pair.english_prob),
        ));
    }
    if TokenSeq::from_text(&pair.secondary_text).is_empty() {
        // The backends disagree completely: one hears words, the other hears
        // none. No finite error rate exists against an empty reference, so
        // the candidate is rejected.
        return Ok(SegmentRecord::non_speech(id, "secondary transcript empty"));
    }
    let cross = wer(
        &TokenSeq::from_text(&pair.secondary_text),
        &TokenSeq::from_text(&pair.primary_text),
    )?;
    if !(cross < CROSS_WER_MAX) {
        return Ok(SegmentRecord::non_speech(
            id,
            &format!("cross transcript wer {cross} not below {CROSS_WER_MAX}"),
        ));
    }
    Ok(SegmentRecord::speech(
        id,
        &pair.primary_text,
        &format!("accepted: english prob {} and cross wer {cross}", pair.english_prob),
    ))
}

/// Label one standardized segment by consulting the two transcription
/// backends. The primary backend runs first; if its transcript normalizes
/// to nothing the segment is non-speech and the secondary backend is never
/// called. Backend failures, including a secondary response with no
/// language probability, yield an unresolved record rather than an error.
pub fn classify_segment(
    id: &str,
    segment: &AudioSegment,
    primary: &dyn AsrClient,
    secondary: &dyn AsrClient,
) -> Result<SegmentRecord, DatapipeError> {
    let bytes = wav_bytes(segment)?;
    let primary_resp = match primary.transcribe(id, &bytes) {
        Ok(r) => r,
        Err(e) => {
            return Ok(SegmentRecord::unresolved(
                id,
                "primary transcription failed",
                &e.to_string(),
            ))
        }
    };
    if TokenSeq::from_text(&primary_resp.text).is_empty() {
        return Ok(SegmentRecord::non_speech(id, "primary transcript empty"));
    }
    let secondary_resp = match secondary.transcribe(id, &bytes) {
        Ok(r) => r,
        Err(e) => {
            return Ok(SegmentRecord::unresolved(
                id,
                "secondary transcription failed",
                &e.to_string(),
            ))
        }
    };
    let english_prob = match secondary_resp.language_prob {
        Some(p) => p,
        None => {
            return Ok(SegmentRecord::unresolved(
                id,
                "secondary transcription failed",
                "secondary response carried no language probability",
            ))
        }
    };
    classify_pair(
        id,
        &TranscriptPair {
            primary_text: primary_resp.text,
            secondary_text: secondary_resp.text,
            english_prob,
        },
    )
}

/// One line of the input manifest: where the audio lives, which corpus it
/// came from, and any transcript that shipped with it.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    /// WAV path, absolute or relative to the manifest file.
    pub wav: String,
    pub source: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transcript: Option<String>,
}

/// Label counts and per-record failures from one curation run.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CurationSummary {
    pub total: usize,
    pub speech: usize,
    pub non_speech: usize,
    pub unresolved: usize,
    pub errors: Vec<CurationIssue>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurationIssue {
    pub id: String,
    pub message: String,
}

/// Read a JSONL manifest.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, DatapipeError> {
    let text = std::fs::read_to_string(path).map_err(|source| DatapipeError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut entries = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry = serde_json::from_str(line)
            .map_err(|source| DatapipeError::ManifestFormat { line: i + 1, source })?;
        entries.push(entry);
    }
    Ok(entries)
}

/// Run the full curation pass over a manifest, writing one record per input
/// segment to `out_path` in input order, JSONL. Segments that already carry
/// a transcript and run shorter than ten seconds keep it verbatim and skip
/// both backends. Failures on one record never abort the pass: the record
/// comes out unresolved and the failure is echoed in the summary.
pub fn curate(
    manifest_path: &Path,
    primary: &dyn AsrClient,
    secondary: &dyn AsrClient,
    out_path: &Path,
) -> Result<CurationSummary, DatapipeError> {
    let entries = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or_else(|| Path::new("."));
    let mut records = Vec::with_capacity(entries.len());
    for entry in &entries {
        records.push(curate_one(entry, base, primary, secondary));
    }
    let mut summary = CurationSummary {
        total: records.len(),
        ..CurationSummary::default()
    };
    let mut out = String::new();
    for record in &records {
        record.check_invariant()?;
        match record.label {
            Label::Speech => summary.speech += 1,
            Label::NonSpeech => summary.non_speech += 1,
            Label::Unresolved => {
                summary.unresolved += 1;
                summary.errors.push(CurationIssue {
                    id: record.id.clone(),
                    message: record
                        .error
                        .clone()
                        .unwrap_or_else(|| record.provenance.clone()),
                });
            }
        }
        out.push_str(&serde_json::to_string(record)?);
        out.push('\n');
    }
    std::fs::write(out_path, out).map_err(|source| DatapipeError::Io {
        path: out_path.to_path_buf(),
        source,
    })?;
    Ok(summary)
}

fn curate_one(
    entry: &ManifestEntry,
    base: &Path,
    primary: &dyn AsrClient,
    secondary: &dyn AsrClient,
) -> SegmentRecord {
    let wav_path = {
        let p = Path::new(&entry.wav);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };
    let segment = match read_wav(&wav_path, &entry.source) {
        Ok(s) => s,
        Err(e) => return SegmentRecord::unresolved(&entry.id, "audio unreadable", &e.to_string()),
    };
    // Short clips with a shipped transcript keep it; both backends stay idle.
    if let Some(transcript) = &entry.transcript {
        if segment.duration_s() < TARGET_SECONDS {
            return SegmentRecord::speech(&entry.id, transcript, "pre-existing transcript");
        }
    }
    let standardized = match standardize(&segment) {
        Ok(s) => s,
        Err(e) => {
            return SegmentRecord::unresolved(&entry.id, "standardization failed", &e.to_string())
        }
    };
    match classify_segment(&entry.id, &standardized, primary, secondary) {
        Ok(r) => r,
        Err(e) => SegmentRecord::unresolved(&entry.id, "classification failed", &e.to_string()),
    }
}
