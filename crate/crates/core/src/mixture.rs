//! Training and evaluation data protocol.
//!
//! Mixtures are a target utterance plus one interfering speaker and an
//! optional second source (speaker, music, noise or nothing), scaled so the
//! target-to-total-interference ratio hits the requested SNR. Clips are
//! conditioned to 5 s, and visual embeddings can be masked with the average,
//! duplicate or zero replacement strategies.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::dsp::AudioSignal;
use crate::model::VisualEmbeddingFrame;
use crate::{Error, Result, BLOCK_LEN, SAMPLE_RATE, VIDEO_FPS};

/// Clip duration used for training and evaluation.
pub const CLIP_SECONDS: usize = 5;
pub const CLIP_SAMPLES: usize = CLIP_SECONDS * SAMPLE_RATE as usize;
pub const CLIP_FRAMES: usize = CLIP_SECONDS * VIDEO_FPS as usize;
/// Sampled SNR range in dB.
pub const SNR_RANGE_DB: (f64, f64) = (-10.0, 10.0);
/// Longest run of masked video frames.
pub const MAX_MASKED_FRAMES: usize = 10;
/// Peak level after normalization.
pub const PEAK_LIMIT: f32 = 0.99;

/// Kind of clip listed in a catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ClipKind {
    Speech,
    Music,
    Noise,
}

impl ClipKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ClipKind::Speech => "speech",
            ClipKind::Music => "music",
            ClipKind::Noise => "noise",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "speech" => Some(ClipKind::Speech),
            "music" => Some(ClipKind::Music),
            "noise" => Some(ClipKind::Noise),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CatalogEntry {
    pub split: String,
    pub kind: ClipKind,
    pub clip: String,
}

/// Clip ids grouped by split and kind.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Catalog {
    entries: Vec<CatalogEntry>,
}

impl Catalog {
    pub fn new(entries: Vec<CatalogEntry>) -> Self {
        Self { entries }
    }

    pub fn entries(&self) -> &[CatalogEntry] {
        &self.entries
    }

    pub fn partition(&self, split: &str, kind: ClipKind) -> Vec<&str> {
        self.entries
            .iter()
            .filter(|e| e.split == split && e.kind == kind)
            .map(|e| e.clip.as_str())
            .collect()
    }

    fn require(&self, split: &str, kind: ClipKind, min: usize) -> Result<Vec<&str>> {
        let clips = self.partition(split, kind);
        if clips.len() < min {
            return Err(Error::EmptyPartition { split: String::from(split), kind: kind.as_str() });
        }
        Ok(clips)
    }
}

/// Role of one interfering source.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InterfererKind {
    Speaker,
    Music,
    Noise,
    None,
}

impl InterfererKind {
    pub const ALL: [InterfererKind; 4] =
        [InterfererKind::Speaker, InterfererKind::Music, InterfererKind::Noise, InterfererKind::None];

    pub fn as_str(self) -> &'static str {
        match self {
            InterfererKind::Speaker => "speaker",
            InterfererKind::Music => "music",
            InterfererKind::Noise => "noise",
            InterfererKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }

    fn clip_kind(self) -> Option<ClipKind> {
        match self {
            InterfererKind::Speaker => Some(ClipKind::Speech),
            InterfererKind::Music => Some(ClipKind::Music),
            InterfererKind::Noise => Some(ClipKind::Noise),
            InterfererKind::None => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InterfererSpec {
    pub kind: InterfererKind,
    /// `None` exactly when `kind` is [`InterfererKind::None`].
    pub clip: Option<String>,
}

/// Everything needed to rebuild one mixture exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct MixtureScenario {
    pub target: String,
    pub interferers: Vec<InterfererSpec>,
    pub snr_db: f64,
    pub seed: u64,
}

impl MixtureScenario {
    /// Interferers that contribute a signal.
    pub fn active_interferers(&self) -> impl Iterator<Item = (InterfererKind, &str)> {
        self.interferers.iter().filter_map(|i| i.clip.as_deref().map(|c| (i.kind, c)))
    }
}

/// Evaluation conditions beyond the two-source training recipe.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Condition {
    /// Target plus one noise or music source.
    NoiseOnly,
    /// Target plus `n` interfering speakers.
    Speakers(usize),
}

/// Training-recipe scenario: one interfering speaker, a second source uniform
/// over speaker/music/noise/none, SNR uniform on `[-10, 10]` dB.
pub fn sample_scenario(seed: u64, catalog: &Catalog, split: &str) -> Result<MixtureScenario> {
    let speech = catalog.require(split, ClipKind::Speech, 2)?;
    let music = catalog.require(split, ClipKind::Music, 1)?;
    let noise = catalog.require(split, ClipKind::Noise, 1)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target_index = rng.gen_range(0..speech.len());
    let target = speech[target_index];
    let first = pick_other(&mut rng, &speech, &[target_index]);
    let mut interferers = vec![InterfererSpec {
        kind: InterfererKind::Speaker,
        clip: Some(String::from(speech[first])),
    }];
    let second = InterfererKind::ALL[rng.gen_range(0..InterfererKind::ALL.len())];
    let clip = match second {
        InterfererKind::Speaker => Some(String::from(speech[pick_other(&mut rng, &speech, &[target_index])])),
        InterfererKind::Music => Some(String::from(music[rng.gen_range(0..music.len())])),
        InterfererKind::Noise => Some(String::from(noise[rng.gen_range(0..noise.len())])),
        InterfererKind::None => None,
    };
    interferers.push(InterfererSpec { kind: second, clip });
    let snr_db = rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1);
    Ok(MixtureScenario { target: String::from(target), interferers, snr_db, seed })
}

/// Scenario for a fixed evaluation condition. `snr_db` is sampled when `None`.
pub fn sample_condition(
    seed: u64,
    catalog: &Catalog,
    split: &str,
    condition: Condition,
    snr_db: Option<f64>,
) -> Result<MixtureScenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let interferers = match condition {
        Condition::NoiseOnly => {
            let speech = catalog.require(split, ClipKind::Speech, 1)?;
            let target_index = rng.gen_range(0..speech.len());
            let kind = if rng.gen_bool(0.5) { InterfererKind::Noise } else { InterfererKind::Music };
            let pool = catalog.require(split, kind.clip_kind().unwrap_or(ClipKind::Noise), 1)?;
            let clip = String::from(pool[rng.gen_range(0..pool.len())]);
            (speech[target_index], vec![InterfererSpec { kind, clip: Some(clip) }])
        }
        Condition::Speakers(n) => {
            if n == 0 {
                return Err(Error::NoInterference);
            }
            let speech = catalog.require(split, ClipKind::Speech, n + 1)?;
            let mut used = vec![rng.gen_range(0..speech.len())];
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let i = pick_other(&mut rng, &speech, &used);
                used.push(i);
                list.push(InterfererSpec { kind: InterfererKind::Speaker, clip: Some(String::from(speech[i])) });
            }
            (speech[used[0]], list)
        }
    };
    let snr_db = snr_db.unwrap_or_else(|| rng.gen_range(SNR_RANGE_DB.0..=SNR_RANGE_DB.1));
    Ok(MixtureScenario { target: String::from(interferers.0), interferers: interferers.1, snr_db, seed })
}

/// Uniform index into `pool` avoiding `exclude` (which must leave a choice).
fn pick_other(rng: &mut ChaCha8Rng, pool: &[&str], exclude: &[usize]) -> usize {
    let candidates: Vec<usize> = (0..pool.len()).filter(|i| !exclude.contains(i)).collect();
    candidates[rng.gen_range(0..candidates.len())]
}

/// Output of [`mix`]. `target` and `interference` carry the same gain as
/// `mixture`, so `mixture == target + interference` up to rounding.
#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    pub mixture: AudioSignal,
    pub target: AudioSignal,
    pub interference: AudioSignal,
    /// Peak-normalization gain applied to all three signals.
    pub gain: f64,
}

fn mean_power(samples: &[f32]) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    samples.iter().map(|&s| (s as f64) * (s as f64)).sum::<f64>() / samples.len() as f64
}

/// `10 log10(P_target / P_interference)` over the full signals.
pub fn snr_db(target: &[f32], interference: &[f32]) -> f64 {
    10.0 * libm::log10(mean_power(target) / mean_power(interference))
}

/// Sums `interference`, scales it to `snr_db` against `target` and peak
/// normalizes the mixture to at most 0.99.
pub fn mix(target: &AudioSignal, interference: &[AudioSignal], snr_db: f64) -> Result<Mixture> {
    if interference.is_empty() {
        return Err(Error::NoInterference);
    }
    let len = target.len();
    if let Some(bad) = interference.iter().find(|s| s.len() != len) {
        return Err(Error::LengthMismatch(len, bad.len()));
    }
    let target_power = mean_power(target.samples());
    if target_power == 0.0 {
        return Err(Error::ZeroPowerTarget);
    }
    let mut summed = vec![0.0f64; len];
    for signal in interference {
        for (acc, &s) in summed.iter_mut().zip(signal.samples()) {
            *acc += s as f64;
        }
    }
    let noise_power = summed.iter().map(|v| v * v).sum::<f64>() / len as f64;
    if noise_power == 0.0 {
        return Err(Error::NoInterference);
    }
    let scale = libm::sqrt(target_power / (noise_power * libm::pow(10.0, snr_db / 10.0)));
    let mixed: Vec<f64> = target.samples().iter().zip(&summed).map(|(&t, &n)| t as f64 + n * scale).collect();
    let peak = mixed.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > PEAK_LIMIT as f64 { PEAK_LIMIT as f64 / peak } else { 1.0 };
    let to_f32 = |v: f64| (v * gain) as f32;
    Ok(Mixture {
        mixture: AudioSignal::new(mixed.iter().map(|&v| to_f32(v)).collect())?,
        target: AudioSignal::new(target.samples().iter().map(|&t| to_f32(t as f64)).collect())?,
        interference: AudioSignal::new(summed.iter().map(|&n| to_f32(n * scale)).collect())?,
        gain,
    })
}

/// Head offset, in video frames, of a seeded excerpt when `excess` frames must go.
fn excerpt_offset(seed: u64, excess: usize) -> usize {
    if excess == 0 {
        return 0;
    }
    ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_c11f).gen_range(0..=excess)
}

/// Zero-pads or trims audio to exactly 5 s. Longer clips lose a seeded head
/// offset, aligned to 40 ms so audio and video trimmed with the same seed
/// stay in sync.
pub fn pad_or_trim_audio(signal: &AudioSignal, seed: u64) -> AudioSignal {
    let samples = signal.samples();
    let mut out = if samples.len() > CLIP_SAMPLES {
        let excess = (samples.len() - CLIP_SAMPLES) / BLOCK_LEN;
        let start = excerpt_offset(seed, excess) * BLOCK_LEN;
        samples[start..start + CLIP_SAMPLES].to_vec()
    } else {
        samples.to_vec()
    };
    out.resize(CLIP_SAMPLES, 0.0);
    AudioSignal::new(out).expect("input samples were finite")
}

/// Pads with the last frame or trims to exactly 125 frames, re-indexed from 0.
pub fn pad_or_trim_embeddings(frames: &[VisualEmbeddingFrame], seed: u64, dim: usize) -> Vec<VisualEmbeddingFrame> {
    let start = excerpt_offset(seed, frames.len().saturating_sub(CLIP_FRAMES));
    let mut out: Vec<VisualEmbeddingFrame> = frames.iter().skip(start).take(CLIP_FRAMES).cloned().collect();
    let filler = out.last().cloned().unwrap_or_else(|| VisualEmbeddingFrame::invalid(0, dim));
    out.resize(CLIP_FRAMES, filler);
    for (i, f) in out.iter_mut().enumerate() {
        f.index = i as u64;
    }
    out
}

/// Replacement strategy for masked video frames.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MaskMethod {
    /// Mean embedding of the clip.
    Average,
    /// The frame preceding the window.
    Duplicate,
    /// The encoder output for an all-zero input.
    Zero,
}

impl MaskMethod {
    pub const ALL: [MaskMethod; 3] = [MaskMethod::Average, MaskMethod::Duplicate, MaskMethod::Zero];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AugmentationSpec {
    pub method: MaskMethod,
    pub start: usize,
    pub len: usize,
}

impl AugmentationSpec {
    /// Seeded method, length in `1..=10` and start inside a `frames`-long clip.
    pub fn sample<R: Rng>(rng: &mut R, frames: usize) -> Self {
        let method = MaskMethod::ALL[rng.gen_range(0..MaskMethod::ALL.len())];
        let len = rng.gen_range(1..=MAX_MASKED_FRAMES.min(frames.max(1)));
        let start = rng.gen_range(0..=frames.saturating_sub(len));
        Self { method, start, len }
    }
}

/// Replaces the frames in `spec`'s window. Frames outside it are untouched.
pub fn augment_embeddings(
    frames: &mut [VisualEmbeddingFrame],
    spec: &AugmentationSpec,
    zero_embedding: &[f32],
) -> Result<()> {
    if spec.len == 0 || spec.len > MAX_MASKED_FRAMES {
        return Err(Error::AugmentationLength(spec.len));
    }
    let end = spec.start + spec.len;
    if end > frames.len() {
        return Err(Error::WindowOutOfBounds { start: spec.start, end, frames: frames.len() });
    }
    if let Some(bad) = frames.iter().find(|f| f.vector.len() != zero_embedding.len()) {
        return Err(Error::EmbeddingDim { expected: zero_embedding.len(), actual: bad.vector.len() });
    }
    let replacement = match spec.method {
        MaskMethod::Zero => zero_embedding.to_vec(),
        MaskMethod::Duplicate if spec.start == 0 => zero_embedding.to_vec(),
        MaskMethod::Duplicate => frames[spec.start - 1].vector.clone(),
        MaskMethod::Average => clip_mean(frames, zero_embedding.len()),
    };
    for frame in &mut frames[spec.start..end] {
        frame.vector.clone_from(&replacement);
        frame.valid = true;
    }
    Ok(())
}

/// Element-wise mean over all frames, in f64.
pub fn clip_mean(frames: &[VisualEmbeddingFrame], dim: usize) -> Vec<f32> {
    let mut acc = vec![0.0f64; dim];
    for f in frames {
        for (a, &v) in acc.iter_mut().zip(&f.vector) {
            *a += v as f64;
        }
    }
    let n = frames.len().max(1) as f64;
    acc.into_iter().map(|a| (a / n) as f32).collect()
}

/// Human-readable id for a scenario, stable across runs.
pub fn scenario_id(scenario: &MixtureScenario) -> String {
    format!("s{:016x}", scenario.seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn catalog() -> Catalog {
        let mut entries = Vec::new();
        for i in 0..6 {
            entries.push(CatalogEntry { split: "train".into(), kind: ClipKind::Speech, clip: format!("spk{i}") });
        }
        entries.push(CatalogEntry { split: "train".into(), kind: ClipKind::Music, clip: "m0".into() });
        entries.push(CatalogEntry { split: "train".into(), kind: ClipKind::Noise, clip: "n0".into() });
        entries.push(CatalogEntry { split: "test".into(), kind: ClipKind::Speech, clip: "t0".into() });
        Catalog::new(entries)
    }

    fn tone(len: usize, f: f32, amp: f32) -> AudioSignal {
        AudioSignal::new((0..len).map(|n| amp * (n as f32 * f).sin()).collect()).unwrap()
    }

    #[test]
    fn snr_definitions() {
        let t = tone(8_000, 0.05, 0.3);
        let n = tone(8_000, 0.31, 0.1);
        let m = mix(&t, std::slice::from_ref(&n), 0.0).unwrap();
        let pt = mean_power(m.target.samples());
        let pn = mean_power(m.interference.samples());
        assert!(((pt - pn) / pt).abs() < 1e-6);
        let m = mix(&t, &[n], -10.0).unwrap();
        let ratio = mean_power(m.interference.samples()) / mean_power(m.target.samples());
        assert!((ratio - 10.0).abs() < 1e-5);
    }

    #[test]
    fn mix_errors() {
        let t = tone(100, 0.1, 0.5);
        assert_eq!(mix(&t, &[], 0.0), Err(Error::NoInterference));
        assert_eq!(mix(&AudioSignal::zeros(100), std::slice::from_ref(&t), 0.0), Err(Error::ZeroPowerTarget));
        assert_eq!(mix(&t, &[AudioSignal::zeros(99)], 0.0), Err(Error::LengthMismatch(100, 99)));
    }

    #[test]
    fn peak_normalization_keeps_reference_consistent() {
        let t = tone(4_000, 0.05, 0.9);
        let n = tone(4_000, 0.21, 0.9);
        let m = mix(&t, &[n], -5.0).unwrap();
        assert!(m.gain < 1.0);
        let peak = m.mixture.samples().iter().fold(0.0f32, |a, v| a.max(v.abs()));
        assert!(peak <= PEAK_LIMIT + 1e-6);
        for ((x, s), n) in m.mixture.samples().iter().zip(m.target.samples()).zip(m.interference.samples()) {
            assert!((x - (s + n)).abs() < 1e-6);
        }
    }

    #[test]
    fn scenarios_are_seeded() {
        let c = catalog();
        let a = sample_scenario(42, &c, "train").unwrap();
        assert_eq!(a, sample_scenario(42, &c, "train").unwrap());
        assert_eq!(a.interferers[0].kind, InterfererKind::Speaker);
        assert_ne!(a.interferers[0].clip.as_deref(), Some(a.target.as_str()));
        assert!((-10.0..=10.0).contains(&a.snr_db));
        match sample_scenario(1, &c, "test") {
            Err(Error::EmptyPartition { split, kind }) => assert_eq!((split.as_str(), kind), ("test", "speech")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn evaluation_conditions() {
        let c = catalog();
        let s = sample_condition(3, &c, "train", Condition::Speakers(3), Some(-5.0)).unwrap();
        assert_eq!(s.interferers.len(), 3);
        assert_eq!(s.snr_db, -5.0);
        let mut clips: Vec<&str> = s.active_interferers().map(|(_, c)| c).collect();
        clips.push(&s.target);
        clips.sort();
        clips.dedup();
        assert_eq!(clips.len(), 4);
        let n = sample_condition(3, &c, "train", Condition::NoiseOnly, None).unwrap();
        assert!(matches!(n.interferers[0].kind, InterfererKind::Noise | InterfererKind::Music));
        assert_eq!(sample_condition(3, &c, "train", Condition::Speakers(0), None), Err(Error::NoInterference));
    }

    #[test]
    fn clip_conditioning() {
        let short = tone(48_000, 0.1, 0.5);
        let padded = pad_or_trim_audio(&short, 0);
        assert_eq!(padded.len(), CLIP_SAMPLES);
        assert!(padded.samples()[48_000..].iter().all(|&s| s == 0.0));
        assert_eq!(&padded.samples()[..48_000], short.samples());

        let long = AudioSignal::new((0..112_000).map(|n| n as f32 / 112_000.0).collect()).unwrap();
        let a = pad_or_trim_audio(&long, 9);
        assert_eq!(a, pad_or_trim_audio(&long, 9));
        assert_eq!(a.len(), CLIP_SAMPLES);
        let start = (a.samples()[0] * 112_000.0).round() as usize;
        assert_eq!(start % BLOCK_LEN, 0);

        let frames: Vec<_> = (0..125).map(|i| VisualEmbeddingFrame::new(i, vec![i as f32])).collect();
        assert_eq!(pad_or_trim_embeddings(&frames, 3, 1), frames);
        let few = pad_or_trim_embeddings(&frames[..100], 3, 1);
        assert_eq!(few.len(), 125);
        assert!(few[100..].iter().all(|f| f.vector == [99.0]));
        assert_eq!(few[124].index, 124);
        let many: Vec<_> = (0..175).map(|i| VisualEmbeddingFrame::new(i, vec![i as f32])).collect();
        let cut = pad_or_trim_embeddings(&many, 9, 1);
        assert_eq!(cut[0].vector[0] as usize * BLOCK_LEN, start);
    }

    fn stream(n: usize) -> Vec<VisualEmbeddingFrame> {
        (0..n).map(|i| VisualEmbeddingFrame::new(i as u64, vec![i as f32, -(i as f32)])).collect()
    }

    #[test]
    fn augmentation_modes() {
        let zero = [7.0, 8.0];
        let original = stream(30);

        let mut s = original.clone();
        augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Zero, start: 10, len: 5 }, &zero).unwrap();
        assert!(s[10..15].iter().all(|f| f.vector == zero));
        assert_eq!(s[..10], original[..10]);
        assert_eq!(s[15..], original[15..]);

        let mut s = original.clone();
        augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Duplicate, start: 10, len: 5 }, &zero)
            .unwrap();
        assert!(s[10..15].iter().all(|f| f.vector == original[9].vector));

        let mut s = original.clone();
        augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Duplicate, start: 0, len: 3 }, &zero)
            .unwrap();
        assert!(s[..3].iter().all(|f| f.vector == zero));

        let constant: Vec<_> = (0..20).map(|i| VisualEmbeddingFrame::new(i, vec![0.25, -1.5])).collect();
        let mut s = constant.clone();
        augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Average, start: 4, len: 10 }, &zero)
            .unwrap();
        assert_eq!(s, constant);

        let mut s = original.clone();
        assert_eq!(
            augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Zero, start: 25, len: 6 }, &zero),
            Err(Error::WindowOutOfBounds { start: 25, end: 31, frames: 30 })
        );
        assert_eq!(
            augment_embeddings(&mut s, &AugmentationSpec { method: MaskMethod::Zero, start: 0, len: 11 }, &zero),
            Err(Error::AugmentationLength(11))
        );
    }

    #[test]
    fn sampled_augmentations_are_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..500 {
            let spec = AugmentationSpec::sample(&mut rng, 125);
            assert!((1..=10).contains(&spec.len) && spec.start + spec.len <= 125);
        }
    }

    #[test]
    fn second_source_and_snr_distribution() {
        let c = catalog();
        let n = 10_000;
        let mut counts = [0usize; 4];
        let mut snr_sum = 0.0;
        for seed in 0..n {
            let s = sample_scenario(seed, &c, "train").unwrap();
            counts[InterfererKind::ALL.iter().position(|k| *k == s.interferers[1].kind).unwrap()] += 1;
            snr_sum += s.snr_db;
        }
        // Binomial(n, 1/4): sigma = sqrt(n * 1/4 * 3/4)
        let sigma = (n as f64 * 0.25 * 0.75).sqrt();
        for c in counts {
            assert!((c as f64 - n as f64 * 0.25).abs() <= 3.0 * sigma, "{counts:?}");
        }
        let mean = snr_sum / n as f64;
        assert!((-0.5..=0.5).contains(&mean), "{mean}");
    }

    proptest::proptest! {
        #[test]
        fn augmentation_is_local(seed in 0u64..10_000, frames in 1usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let spec = AugmentationSpec::sample(&mut rng, frames);
            let original = stream(frames);
            let mut s = original.clone();
            augment_embeddings(&mut s, &spec, &[0.5, 0.5]).unwrap();
            for (i, (a, b)) in s.iter().zip(&original).enumerate() {
                if i < spec.start || i >= spec.start + spec.len {
                    proptest::prop_assert_eq!(a, b);
                }
            }
        }

        #[test]
        fn conditioned_lengths_are_exact(len in 0usize..200_000, frames in 0usize..300, seed: u64) {
            let audio = AudioSignal::new(vec![0.25; len]).unwrap();
            proptest::prop_assert_eq!(pad_or_trim_audio(&audio, seed).len(), CLIP_SAMPLES);
            let stream = stream(frames);
            proptest::prop_assert_eq!(pad_or_trim_embeddings(&stream, seed, 2).len(), CLIP_FRAMES);
        }

        #[test]
        fn mix_hits_requested_snr(seed: u64, snr in -10.0f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let t = AudioSignal::new((0..4000).map(|_| rng.gen_range(-0.5f32..0.5)).collect()).unwrap();
            let n = AudioSignal::new((0..4000).map(|_| rng.gen_range(-0.8f32..0.8)).collect()).unwrap();
            let m = mix(&t, &[n], snr).unwrap();
            proptest::prop_assert!((snr_db(m.target.samples(), m.interference.samples()) - snr).abs() < 1e-4);
        }
    }
}
