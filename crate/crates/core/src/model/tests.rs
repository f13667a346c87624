use super::offline::fill_context;
use super::*;
use crate::dsp::AudioSignal;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn small_config() -> ModelConfig {
    ModelConfig {
        embedding_dim: 24,
        conv_channels: [16, 12, 12, 10, 8],
        lstm_hidden: 20,
        fc_widths: [18, 14],
        concat_order: ConcatOrder::AudioVisual,
    }
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f32) -> Vec<f32> {
    (0..len).map(|_| rng.gen_range(-scale..scale)).collect()
}

/// Straightforward f64 forward pass over the stored tensor layout.
fn reference_forward(
    weights: &ModelWeights,
    context: &[f32],
    embedding: &[f32],
    hidden: &mut [f64],
    cell: &mut [f64],
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<f64>) {
    let cfg = weights.config();
    let t = |name: &str| -> Vec<f64> { weights.tensor(name).unwrap().data.iter().map(|&v| v as f64).collect() };
    let mut x: Vec<f64> = Vec::new();
    let mut convs = Vec::new();
    let mut inputs = BINS;
    for layer in 1..=CONV_LAYERS {
        let w = t(&format!("conv{layer}.weight"));
        let b = t(&format!("conv{layer}.bias"));
        let scale = t(&format!("conv{layer}.bn.scale"));
        let shift = t(&format!("conv{layer}.bn.shift"));
        let mean = t(&format!("conv{layer}.bn.running_mean"));
        let var = t(&format!("conv{layer}.bn.running_var"));
        let kernel = CONV_KERNELS[layer - 1];
        let channels = cfg.conv_channels[layer - 1];
        let mut y = vec![0.0f64; channels];
        for o in 0..channels {
            let mut acc = b[o];
            for c in 0..inputs {
                for k in 0..kernel {
                    let input = if layer == 1 { context[k * BINS + c] as f64 } else { x[c] };
                    acc += w[(o * inputs + c) * kernel + k] * input;
                }
            }
            let normed = (acc - mean[o]) / (var[o] + BATCH_NORM_EPS as f64).sqrt() * scale[o] + shift[o];
            y[o] = normed.max(0.0);
        }
        convs.push(y.clone());
        x = y;
        inputs = channels;
    }
    let fused: Vec<f64> = x.iter().copied().chain(embedding.iter().map(|&v| v as f64)).collect();
    let h = cfg.lstm_hidden;
    let (wi, wh, bi, bh) = (t("lstm.weight_ih"), t("lstm.weight_hh"), t("lstm.bias_ih"), t("lstm.bias_hh"));
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let gate = |row: usize| -> f64 {
        let a: f64 = (0..fused.len()).map(|j| wi[row * fused.len() + j] * fused[j]).sum();
        let r: f64 = (0..h).map(|j| wh[row * h + j] * hidden[j]).sum();
        a + r + bi[row] + bh[row]
    };
    let gates: Vec<f64> = (0..4 * h).map(gate).collect();
    for j in 0..h {
        let c = sig(gates[h + j]) * cell[j] + sig(gates[j]) * gates[2 * h + j].tanh();
        cell[j] = c;
        hidden[j] = sig(gates[3 * h + j]) * c.tanh();
    }
    let mut fcs = Vec::new();
    let mut x = hidden.to_vec();
    for layer in 1..=3 {
        let w = t(&format!("fc{layer}.weight"));
        let b = t(&format!("fc{layer}.bias"));
        let y: Vec<f64> = (0..b.len())
            .map(|o| {
                let v = b[o] + (0..x.len()).map(|j| w[o * x.len() + j] * x[j]).sum::<f64>();
                if layer < 3 { v.max(0.0) } else { v }
            })
            .collect();
        fcs.push(y.clone());
        x = y;
    }
    let mask = x.iter().map(|&v| sig(v)).collect();
    (convs, fcs, mask)
}

fn max_abs(a: &[f32], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y).abs()).fold(0.0, f64::max)
}

#[test]
fn default_parameter_count_is_in_bracket() {
    let cfg = ModelConfig::default();
    let conv1 = 257 * 5 * 256 + 3 * 256;
    let conv = 256 * 256 + 3 * 256;
    let lstm = 4 * 512 * (256 + 512) + 4 * 512 * 512 + 2 * 4 * 512;
    let fc = (512 * 512 + 512) * 2 + 512 * 257 + 257;
    assert_eq!(cfg.parameter_count(), conv1 + 4 * conv + lstm + fc);
    assert!((3_000_000..=8_000_000).contains(&cfg.parameter_count()));
    let wide = ModelConfig::with_embedding_dim(768);
    assert!((3_000_000..=8_000_000).contains(&wide.parameter_count()));
}

#[test]
fn missing_and_misshapen_tensors_are_named() {
    let cfg = small_config();
    let weights = random_weights(&cfg, 1).unwrap();
    let mut tensors: BTreeMap<String, Tensor> =
        weights.tensors().map(|(s, t)| (s.name, t.clone())).collect();
    let zero = weights.zero_embedding().to_vec();

    let mut missing = tensors.clone();
    missing.remove("lstm.bias_hh");
    assert_eq!(
        ModelWeights::new(cfg.clone(), zero.clone(), missing),
        Err(Error::MissingTensor("lstm.bias_hh".to_string()))
    );

    tensors.insert("fc3.weight".to_string(), Tensor::new(vec![256, 14], vec![0.0; 256 * 14]).unwrap());
    match ModelWeights::new(cfg.clone(), zero.clone(), tensors) {
        Err(Error::TensorShape { name, expected, actual }) => {
            assert_eq!(name, "fc3.weight");
            assert_eq!(expected, vec![257, 14]);
            assert_eq!(actual, vec![256, 14]);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert!(matches!(
        ModelWeights::new(cfg, vec![0.0; 3], BTreeMap::new()),
        Err(Error::EmbeddingDim { expected: 24, actual: 3 })
    ));
}

#[test]
fn zero_context_with_identity_batch_norm_encodes_to_zero() {
    let cfg = small_config();
    let mut weights = random_weights(&cfg, 2).unwrap();
    for layer in 1..=CONV_LAYERS {
        for (suffix, value) in [("bias", 0.0), ("bn.scale", 1.0), ("bn.shift", 0.0), ("bn.running_mean", 0.0), ("bn.running_var", 1.0)] {
            weights.tensor_mut(&format!("conv{layer}.{suffix}")).unwrap().data.fill(value);
        }
    }
    let model = FusionModel::new(weights);
    let mut latent = vec![1.0; model.latent_dim()];
    model.audio_encode(&vec![0.0; CONTEXT_FRAMES * BINS], &mut latent).unwrap();
    assert!(latent.iter().all(|&v| v == 0.0));
}

#[test]
fn audio_encode_rejects_bad_context() {
    let model = FusionModel::new(random_weights(&small_config(), 3).unwrap());
    let mut latent = vec![0.0; model.latent_dim()];
    let mut ctx = vec![0.0; CONTEXT_FRAMES * BINS];
    ctx[7] = f32::INFINITY;
    assert_eq!(model.audio_encode(&ctx, &mut latent), Err(Error::NonFinite("audio context")));
    assert!(matches!(model.audio_encode(&ctx[1..], &mut latent), Err(Error::ShapeMismatch { .. })));
}

#[test]
fn context_window_ignores_frames_beyond_two() {
    let frames = 12;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let a = random_vec(&mut rng, frames * BINS, 1.0);
    let mut b = a.clone();
    let t = 5;
    for v in &mut b[(t + 3) * BINS..(t + 4) * BINS] {
        *v += 1.0;
    }
    let (mut ca, mut cb) = (vec![0.0; CONTEXT_FRAMES * BINS], vec![0.0; CONTEXT_FRAMES * BINS]);
    fill_context(&a, frames, t, &mut ca);
    fill_context(&b, frames, t, &mut cb);
    assert_eq!(ca, cb);
    fill_context(&a, frames, 0, &mut ca);
    assert_eq!(&ca[..BINS], &a[..BINS]);
    assert_eq!(&ca[BINS..2 * BINS], &a[..BINS]);
    fill_context(&a, frames, frames - 1, &mut ca);
    assert_eq!(&ca[4 * BINS..], &a[(frames - 1) * BINS..]);
}

#[test]
fn upsampling_holds_each_frame_four_times() {
    let zero = vec![9.0, 9.0];
    let frames = vec![
        VisualEmbeddingFrame::new(0, vec![1.0, 2.0]),
        VisualEmbeddingFrame::new(1, vec![3.0, 4.0]),
        VisualEmbeddingFrame::invalid(2, 2),
    ];
    let up = upsample_embeddings(&frames, &zero);
    assert_eq!(up.len(), 12);
    assert!(up[..4].iter().all(|v| *v == [1.0, 2.0]));
    assert!(up[4..8].iter().all(|v| *v == [3.0, 4.0]));
    assert!(up[8..].iter().all(|v| *v == [9.0, 9.0]));
    assert!(upsample_embeddings(&[], &zero).is_empty());
}

#[test]
fn forward_matches_f64_reference_at_every_layer() {
    let cfg = small_config();
    for seed in 0..5u64 {
        let weights = random_weights(&cfg, seed).unwrap();
        let model = FusionModel::new(weights.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let mut state = model.initial_state();
        let (mut h, mut c) = (vec![0.0f64; cfg.lstm_hidden], vec![0.0f64; cfg.lstm_hidden]);
        for _step in 0..3 {
            let context: Vec<f32> = (0..CONTEXT_FRAMES * BINS).map(|_| rng.gen_range(0.0..3.0)).collect();
            let embedding = random_vec(&mut rng, cfg.embedding_dim, 1.0);
            let trace = model.trace(&context, &embedding, &mut state).unwrap();
            let (convs, fcs, mask) = reference_forward(&weights, &context, &embedding, &mut h, &mut c);
            for (got, want) in trace.conv.iter().zip(&convs) {
                assert!(max_abs(got, want) < 1e-4);
            }
            assert!(max_abs(&trace.lstm_hidden, &h) < 1e-4);
            assert!(max_abs(&trace.lstm_cell, &c) < 1e-4);
            for (got, want) in trace.fc.iter().zip(&fcs) {
                assert!(max_abs(got, want) < 1e-4);
            }
            assert!(max_abs(&trace.mask, &mask) < 1e-4);
        }
    }
}

#[test]
fn default_width_forward_matches_reference() {
    let cfg = ModelConfig::default();
    let weights = random_weights(&cfg, 11).unwrap();
    let model = FusionModel::new(weights.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let context: Vec<f32> = (0..CONTEXT_FRAMES * BINS).map(|_| rng.gen_range(0.0..3.0)).collect();
    let embedding = random_vec(&mut rng, cfg.embedding_dim, 1.0);
    let mut state = model.initial_state();
    let trace = model.trace(&context, &embedding, &mut state).unwrap();
    let (mut h, mut c) = (vec![0.0; cfg.lstm_hidden], vec![0.0; cfg.lstm_hidden]);
    let (_, _, mask) = reference_forward(&weights, &context, &embedding, &mut h, &mut c);
    assert!(max_abs(&trace.mask, &mask) < 1e-4);
}

#[test]
fn mask_is_strictly_inside_unit_interval_and_deterministic() {
    let cfg = small_config();
    let mut weights = random_weights(&cfg, 5).unwrap();
    // Push logits to both extremes.
    let bias = &mut weights.tensor_mut("fc3.bias").unwrap().data;
    for (i, b) in bias.iter_mut().enumerate() {
        *b = if i % 2 == 0 { 500.0 } else { -500.0 };
    }
    let model = FusionModel::new(weights);
    let latent = vec![0.3; model.latent_dim()];
    let embedding = vec![0.1; cfg.embedding_dim];
    let (mut s1, mut s2) = (model.initial_state(), model.initial_state());
    let (mut m1, mut m2) = (vec![0.0; BINS], vec![0.0; BINS]);
    model.mask_step(&latent, &embedding, &mut s1, &mut m1).unwrap();
    model.mask_step(&latent, &embedding, &mut s2, &mut m2).unwrap();
    assert_eq!(m1, m2);
    assert_eq!(s1, s2);
    assert!(m1.iter().all(|&m| m > 0.0 && m < 1.0));
    assert!(matches!(
        model.mask_step(&latent, &embedding[1..], &mut s1, &mut m1),
        Err(Error::EmbeddingDim { .. })
    ));
}

#[test]
fn corrupted_weights_surface_as_non_finite() {
    let cfg = small_config();
    let weights = random_weights(&cfg, 6).unwrap();
    let mut model = FusionModel::new(weights);
    model.fcs[2].weight.fill(f32::MAX);
    model.fcs[1].bias.fill(1e30);
    let latent = vec![0.3; model.latent_dim()];
    let mut state = model.initial_state();
    let mut mask = vec![0.0; BINS];
    assert!(matches!(
        model.mask_step(&latent, &vec![0.0; cfg.embedding_dim], &mut state, &mut mask),
        Err(Error::NonFinite(_))
    ));
}

struct CountingMasker {
    dim: usize,
    zero: Vec<f32>,
    calls: usize,
    distinct_embeddings: Vec<Vec<f32>>,
}

impl FrameMasker for CountingMasker {
    fn embedding_dim(&self) -> usize {
        self.dim
    }
    fn zero_embedding(&self) -> &[f32] {
        &self.zero
    }
    fn reset(&mut self) {}
    fn mask_frame(&mut self, _context: &[f32], embedding: &[f32], mask: &mut [f32]) -> Result<()> {
        self.calls += 1;
        if self.distinct_embeddings.last().map(|v| v.as_slice()) != Some(embedding) {
            self.distinct_embeddings.push(embedding.to_vec());
        }
        mask.fill(0.5);
        Ok(())
    }
}

#[test]
fn five_seconds_consume_500_mask_frames_from_125_video_frames() {
    let frames: Vec<_> = (0..125).map(|i| VisualEmbeddingFrame::new(i, vec![i as f32])).collect();
    let mut masker = CountingMasker { dim: 1, zero: vec![-1.0], calls: 0, distinct_embeddings: Vec::new() };
    let out = enhance_offline(&AudioSignal::zeros(80_000), &frames, &mut masker).unwrap();
    assert_eq!(out.len(), 80_000);
    assert_eq!(masker.calls, 500);
    assert_eq!(masker.distinct_embeddings.len(), 125);

    let err = enhance_offline(&AudioSignal::zeros(80_000), &frames[..124], &mut masker);
    assert_eq!(err, Err(Error::EmbeddingStreamTooShort { required: 125, available: 124 }));
}

#[test]
fn offline_enhancement_is_contractive_on_silence() {
    let model = FusionModel::new(random_weights(&small_config(), 7).unwrap());
    let frames: Vec<_> = (0..25).map(|i| VisualEmbeddingFrame::new(i, vec![0.2; 24])).collect();
    let out = enhance_offline(&AudioSignal::zeros(16_000), &frames, &mut model.stream()).unwrap();
    assert!(out.samples().iter().all(|&s| s == 0.0));
}

#[test]
fn offline_rejects_gapped_embeddings() {
    let model = FusionModel::new(random_weights(&small_config(), 8).unwrap());
    let mut frames: Vec<_> = (0..3).map(|i| VisualEmbeddingFrame::new(i, vec![0.2; 24])).collect();
    frames[2].index = 5;
    assert_eq!(
        enhance_offline(&AudioSignal::zeros(1_600), &frames, &mut model.stream()),
        Err(Error::EmbeddingOrder { position: 2, index: 5 })
    );
}
