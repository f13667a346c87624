//! Mask-estimation network inference.
//!
//! The audio stream is a 5-layer CNN over compressed magnitude frames. The
//! first layer has a temporal kernel of 5 (two past frames, the current one,
//! two future frames) and treats the 257 frequency bins as input channels, so
//! it collapses the context window to one latent frame. Layers 2-5 are 1x1.
//! Every conv is followed by inference-mode batch norm and ReLU.
//!
//! The latent is concatenated (audio first) with the visual embedding held
//! at the audio frame rate, fed through one unidirectional LSTM step and
//! three dense layers (ReLU, ReLU, sigmoid) to produce one 257-bin mask frame.

mod init;
mod layers;
mod offline;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, BINS, CONTEXT_FRAMES, FRAMES_PER_BLOCK};
use layers::{relu_in_place, sigmoid, Affine, Dense};

pub use offline::enhance_offline;

/// Batch-norm variance epsilon.
pub const BATCH_NORM_EPS: f32 = 1e-5;
/// Number of conv layers in the audio stream.
pub const CONV_LAYERS: usize = 5;
/// Temporal kernel of each conv layer.
pub const CONV_KERNELS: [usize; CONV_LAYERS] = [CONTEXT_FRAMES, 1, 1, 1, 1];

/// Largest value below 1.0; keeps the mask strictly inside `(0, 1)`.
const MASK_MAX: f32 = 1.0 - f32::EPSILON / 2.0;

/// Order in which the audio latent and visual embedding are concatenated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConcatOrder {
    AudioVisual,
}

/// Layer widths. Everything except the 257-bin output is weight-file driven.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub embedding_dim: usize,
    pub conv_channels: [usize; CONV_LAYERS],
    pub lstm_hidden: usize,
    pub fc_widths: [usize; 2],
    pub concat_order: ConcatOrder,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::with_embedding_dim(512)
    }
}

impl ModelConfig {
    pub fn with_embedding_dim(embedding_dim: usize) -> Self {
        Self {
            embedding_dim,
            conv_channels: [256; CONV_LAYERS],
            lstm_hidden: 512,
            fc_widths: [512, 512],
            concat_order: ConcatOrder::AudioVisual,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.embedding_dim == 0 {
            return Err(Error::InvalidConfig("embedding_dim must be positive".to_string()));
        }
        if self.conv_channels.iter().chain(&self.fc_widths).any(|&w| w == 0) || self.lstm_hidden == 0 {
            return Err(Error::InvalidConfig("layer widths must be positive".to_string()));
        }
        Ok(())
    }

    /// Width of the LSTM input: audio latent followed by the embedding.
    pub fn fusion_width(&self) -> usize {
        self.conv_channels[CONV_LAYERS - 1] + self.embedding_dim
    }

    /// Every tensor the network needs, in canonical file order.
    pub fn tensor_specs(&self) -> Vec<TensorSpec> {
        let mut specs = Vec::new();
        let mut inputs = BINS;
        for (i, (&channels, &kernel)) in self.conv_channels.iter().zip(&CONV_KERNELS).enumerate() {
            let layer = i + 1;
            specs.push(TensorSpec::new(format!("conv{layer}.weight"), vec![channels, inputs, kernel], true));
            specs.push(TensorSpec::new(format!("conv{layer}.bias"), vec![channels], true));
            specs.push(TensorSpec::new(format!("conv{layer}.bn.scale"), vec![channels], true));
            specs.push(TensorSpec::new(format!("conv{layer}.bn.shift"), vec![channels], true));
            specs.push(TensorSpec::new(format!("conv{layer}.bn.running_mean"), vec![channels], false));
            specs.push(TensorSpec::new(format!("conv{layer}.bn.running_var"), vec![channels], false));
            inputs = channels;
        }
        let h = self.lstm_hidden;
        specs.push(TensorSpec::new("lstm.weight_ih".to_string(), vec![4 * h, self.fusion_width()], true));
        specs.push(TensorSpec::new("lstm.weight_hh".to_string(), vec![4 * h, h], true));
        specs.push(TensorSpec::new("lstm.bias_ih".to_string(), vec![4 * h], true));
        specs.push(TensorSpec::new("lstm.bias_hh".to_string(), vec![4 * h], true));
        let widths = [self.fc_widths[0], self.fc_widths[1], BINS];
        let mut inputs = h;
        for (i, &w) in widths.iter().enumerate() {
            specs.push(TensorSpec::new(format!("fc{}.weight", i + 1), vec![w, inputs], true));
            specs.push(TensorSpec::new(format!("fc{}.bias", i + 1), vec![w], true));
            inputs = w;
        }
        specs
    }

    /// Trainable parameters (batch-norm running statistics excluded).
    pub fn parameter_count(&self) -> usize {
        self.tensor_specs().iter().filter(|s| s.trainable).map(|s| s.len()).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub trainable: bool,
}

impl TensorSpec {
    fn new(name: String, shape: Vec<usize>, trainable: bool) -> Self {
        Self { name, shape, trainable }
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major f32 tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::ShapeMismatch { what: "tensor data", expected, actual: data.len() });
        }
        Ok(Self { shape, data })
    }
}

/// Named-tensor container for every fusion-model parameter plus metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    config: ModelConfig,
    zero_embedding: Vec<f32>,
    tensors: BTreeMap<String, Tensor>,
}

impl ModelWeights {
    /// Validates that every expected tensor is present with the right shape.
    pub fn new(
        config: ModelConfig,
        zero_embedding: Vec<f32>,
        mut tensors: BTreeMap<String, Tensor>,
    ) -> Result<Self> {
        config.validate()?;
        if zero_embedding.len() != config.embedding_dim {
            return Err(Error::EmbeddingDim { expected: config.embedding_dim, actual: zero_embedding.len() });
        }
        if zero_embedding.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("zero_embedding"));
        }
        let mut ordered = BTreeMap::new();
        for spec in config.tensor_specs() {
            let tensor = tensors.remove(&spec.name).ok_or_else(|| Error::MissingTensor(spec.name.clone()))?;
            if tensor.shape != spec.shape {
                return Err(Error::TensorShape { name: spec.name, expected: spec.shape, actual: tensor.shape });
            }
            if tensor.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("weight tensor"));
            }
            ordered.insert(spec.name, tensor);
        }
        if let Some(name) = tensors.keys().next() {
            return Err(Error::InvalidConfig(format!("unexpected tensor {name}")));
        }
        Ok(Self { config, zero_embedding, tensors: ordered })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn zero_embedding(&self) -> &[f32] {
        &self.zero_embedding
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.get(name)
    }

    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.get_mut(name)
    }

    /// Tensors in canonical file order.
    pub fn tensors(&self) -> impl Iterator<Item = (TensorSpec, &Tensor)> + '_ {
        self.config.tensor_specs().into_iter().map(move |spec| {
            let tensor = &self.tensors[&spec.name];
            (spec, tensor)
        })
    }

    pub fn parameter_count(&self) -> usize {
        self.config.parameter_count()
    }

    fn take(&self, name: &str) -> &[f32] {
        &self.tensors[name].data
    }
}

/// Recurrent state of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub hidden: Vec<f32>,
    pub cell: Vec<f32>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        Self { hidden: vec![0.0; hidden], cell: vec![0.0; hidden] }
    }
}

/// One 25 fps visual embedding. `valid == false` marks a missing or occluded frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VisualEmbeddingFrame {
    pub index: u64,
    pub vector: Vec<f32>,
    pub valid: bool,
}

impl VisualEmbeddingFrame {
    pub fn new(index: u64, vector: Vec<f32>) -> Self {
        Self { index, vector, valid: true }
    }

    pub fn invalid(index: u64, dim: usize) -> Self {
        Self { index, vector: vec![0.0; dim], valid: false }
    }
}

/// Holds each 25 fps embedding for the four 100 Hz audio frames it spans.
/// Invalid frames are replaced by `zero_embedding`.
pub fn upsample_embeddings<'a>(
    frames: &'a [VisualEmbeddingFrame],
    zero_embedding: &'a [f32],
) -> Vec<&'a [f32]> {
    frames
        .iter()
        .flat_map(|f| {
            let v: &[f32] = if f.valid { &f.vector } else { zero_embedding };
            core::iter::repeat_n(v, FRAMES_PER_BLOCK)
        })
        .collect()
}

/// Activations at every layer boundary of one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub conv: [Vec<f32>; CONV_LAYERS],
    pub lstm_hidden: Vec<f32>,
    pub lstm_cell: Vec<f32>,
    pub fc: [Vec<f32>; 3],
    pub mask: Vec<f32>,
}

/// Immutable, shareable inference network.
#[derive(Debug, Clone)]
pub struct FusionModel {
    weights: ModelWeights,
    convs: Vec<Dense>,
    norms: Vec<Affine>,
    lstm_input: Dense,
    lstm_recurrent: Dense,
    fcs: [Dense; 3],
}

impl FusionModel {
    pub fn new(weights: ModelWeights) -> Self {
        let cfg = weights.config.clone();
        let mut convs = Vec::with_capacity(CONV_LAYERS);
        let mut norms = Vec::with_capacity(CONV_LAYERS);
        let mut inputs = BINS;
        for (i, &channels) in cfg.conv_channels.iter().enumerate() {
            let layer = i + 1;
            let kernel = CONV_KERNELS[i];
            let raw = weights.take(&format!("conv{layer}.weight"));
            // Stored [out][in][k]; inference wants [out][k][in] to match time-major context.
            let mut weight = vec![0.0f32; raw.len()];
            for o in 0..channels {
                for c in 0..inputs {
                    for k in 0..kernel {
                        weight[(o * kernel + k) * inputs + c] = raw[(o * inputs + c) * kernel + k];
                    }
                }
            }
            convs.push(Dense {
                weight,
                bias: weights.take(&format!("conv{layer}.bias")).to_vec(),
                inputs: inputs * kernel,
            });
            norms.push(Affine::from_batch_norm(
                weights.take(&format!("conv{layer}.bn.scale")),
                weights.take(&format!("conv{layer}.bn.shift")),
                weights.take(&format!("conv{layer}.bn.running_mean")),
                weights.take(&format!("conv{layer}.bn.running_var")),
                BATCH_NORM_EPS,
            ));
            inputs = channels;
        }
        let combined_bias: Vec<f32> = weights
            .take("lstm.bias_ih")
            .iter()
            .zip(weights.take("lstm.bias_hh"))
            .map(|(a, b)| a + b)
            .collect();
        let lstm_input = Dense {
            weight: weights.take("lstm.weight_ih").to_vec(),
            bias: combined_bias,
            inputs: cfg.fusion_width(),
        };
        let lstm_recurrent = Dense {
            weight: weights.take("lstm.weight_hh").to_vec(),
            bias: vec![0.0; 4 * cfg.lstm_hidden],
            inputs: cfg.lstm_hidden,
        };
        let fc = |i: usize, inputs: usize| Dense {
            weight: weights.take(&format!("fc{i}.weight")).to_vec(),
            bias: weights.take(&format!("fc{i}.bias")).to_vec(),
            inputs,
        };
        let fcs = [fc(1, cfg.lstm_hidden), fc(2, cfg.fc_widths[0]), fc(3, cfg.fc_widths[1])];
        Self { weights, convs, norms, lstm_input, lstm_recurrent, fcs }
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn config(&self) -> &ModelConfig {
        &self.weights.config
    }

    pub fn embedding_dim(&self) -> usize {
        self.weights.config.embedding_dim
    }

    pub fn latent_dim(&self) -> usize {
        self.weights.config.conv_channels[CONV_LAYERS - 1]
    }

    pub fn zero_embedding(&self) -> &[f32] {
        &self.weights.zero_embedding
    }

    pub fn initial_state(&self) -> LstmState {
        LstmState::zeros(self.weights.config.lstm_hidden)
    }

    /// Starts a per-stream session with zeroed recurrent state.
    pub fn stream(&self) -> FusionStream<'_> {
        FusionStream::new(self)
    }

    /// Encodes `CONTEXT_FRAMES x 257` compressed magnitudes (time-major,
    /// oldest first) into the latent of the center frame.
    pub fn audio_encode(&self, context: &[f32], latent: &mut [f32]) -> Result<()> {
        let mut scratch = Scratch::new(self);
        self.encode_into(context, &mut scratch, None)?;
        latent.copy_from_slice(&scratch.conv[CONV_LAYERS - 1]);
        Ok(())
    }

    /// One LSTM step plus the dense head. Advances `state` in place.
    pub fn mask_step(
        &self,
        latent: &[f32],
        embedding: &[f32],
        state: &mut LstmState,
        mask: &mut [f32],
    ) -> Result<()> {
        let mut scratch = Scratch::new(self);
        self.step_into(latent, embedding, state, &mut scratch, mask, None)
    }

    /// Full forward step recording every layer boundary.
    pub fn trace(&self, context: &[f32], embedding: &[f32], state: &mut LstmState) -> Result<LayerTrace> {
        let mut scratch = Scratch::new(self);
        let mut trace = LayerTrace {
            conv: Default::default(),
            lstm_hidden: Vec::new(),
            lstm_cell: Vec::new(),
            fc: Default::default(),
            mask: vec![0.0; BINS],
        };
        self.encode_into(context, &mut scratch, Some(&mut trace))?;
        let latent = core::mem::take(&mut scratch.conv[CONV_LAYERS - 1]);
        let mut mask = vec![0.0; BINS];
        self.step_into(&latent, embedding, state, &mut scratch, &mut mask, Some(&mut trace))?;
        trace.mask = mask;
        Ok(trace)
    }

    fn encode_into(&self, context: &[f32], scratch: &mut Scratch, mut trace: Option<&mut LayerTrace>) -> Result<()> {
        if context.len() != CONTEXT_FRAMES * BINS {
            return Err(Error::ShapeMismatch {
                what: "audio context",
                expected: CONTEXT_FRAMES * BINS,
                actual: context.len(),
            });
        }
        if context.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("audio context"));
        }
        for i in 0..CONV_LAYERS {
            let (done, rest) = scratch.conv.split_at_mut(i);
            let input: &[f32] = if i == 0 { context } else { &done[i - 1] };
            let out = &mut rest[0];
            self.convs[i].forward(input, out);
            self.norms[i].relu_in_place(out);
            if let Some(t) = trace.as_deref_mut() {
                t.conv[i] = out.clone();
            }
        }
        Ok(())
    }

    fn step_into(
        &self,
        latent: &[f32],
        embedding: &[f32],
        state: &mut LstmState,
        scratch: &mut Scratch,
        mask: &mut [f32],
        mut trace: Option<&mut LayerTrace>,
    ) -> Result<()> {
        let cfg = &self.weights.config;
        if latent.len() != self.latent_dim() {
            return Err(Error::ShapeMismatch { what: "audio latent", expected: self.latent_dim(), actual: latent.len() });
        }
        if embedding.len() != cfg.embedding_dim {
            return Err(Error::EmbeddingDim { expected: cfg.embedding_dim, actual: embedding.len() });
        }
        if mask.len() != BINS {
            return Err(Error::ShapeMismatch { what: "mask frame", expected: BINS, actual: mask.len() });
        }
        let h = cfg.lstm_hidden;
        scratch.fused[..latent.len()].copy_from_slice(latent);
        scratch.fused[latent.len()..].copy_from_slice(embedding);
        self.lstm_input.forward(&scratch.fused, &mut scratch.gates);
        self.lstm_recurrent.forward(&state.hidden, &mut scratch.recurrent);
        // Gate order: input, forget, cell candidate, output.
        for j in 0..h {
            let i_gate = sigmoid(scratch.gates[j] + scratch.recurrent[j]);
            let f_gate = sigmoid(scratch.gates[h + j] + scratch.recurrent[h + j]);
            let g = libm::tanhf(scratch.gates[2 * h + j] + scratch.recurrent[2 * h + j]);
            let o_gate = sigmoid(scratch.gates[3 * h + j] + scratch.recurrent[3 * h + j]);
            let c = f_gate * state.cell[j] + i_gate * g;
            state.cell[j] = c;
            state.hidden[j] = o_gate * libm::tanhf(c);
        }
        if state.hidden.iter().chain(&state.cell).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("lstm state"));
        }
        if let Some(t) = trace.as_deref_mut() {
            t.lstm_hidden = state.hidden.clone();
            t.lstm_cell = state.cell.clone();
        }
        self.fcs[0].forward(&state.hidden, &mut scratch.fc1);
        relu_in_place(&mut scratch.fc1);
        self.fcs[1].forward(&scratch.fc1, &mut scratch.fc2);
        relu_in_place(&mut scratch.fc2);
        self.fcs[2].forward(&scratch.fc2, mask);
        if let Some(t) = trace {
            t.fc = [scratch.fc1.clone(), scratch.fc2.clone(), mask.to_vec()];
        }
        for m in mask.iter_mut() {
            if !m.is_finite() {
                return Err(Error::NonFinite("mask logits"));
            }
            *m = sigmoid(*m).clamp(f32::MIN_POSITIVE, MASK_MAX);
        }
        Ok(())
    }
}

/// Preallocated buffers for one forward step.
#[derive(Debug, Clone)]
struct Scratch {
    conv: [Vec<f32>; CONV_LAYERS],
    fused: Vec<f32>,
    gates: Vec<f32>,
    recurrent: Vec<f32>,
    fc1: Vec<f32>,
    fc2: Vec<f32>,
}

impl Scratch {
    fn new(model: &FusionModel) -> Self {
        let cfg = model.config();
        Self {
            conv: core::array::from_fn(|i| vec![0.0; cfg.conv_channels[i]]),
            fused: vec![0.0; cfg.fusion_width()],
            gates: vec![0.0; 4 * cfg.lstm_hidden],
            recurrent: vec![0.0; 4 * cfg.lstm_hidden],
            fc1: vec![0.0; cfg.fc_widths[0]],
            fc2: vec![0.0; cfg.fc_widths[1]],
        }
    }
}

/// Per-frame mask producer driven by the offline and streaming pipelines.
pub trait FrameMasker {
    fn embedding_dim(&self) -> usize;

    /// Substitute for missing or invalid visual frames.
    fn zero_embedding(&self) -> &[f32];

    /// Clears recurrent state at stream start.
    fn reset(&mut self);

    /// `context` holds `CONTEXT_FRAMES x 257` compressed magnitudes, time-major,
    /// centered on the frame being masked. Writes 257 gains into `mask`.
    fn mask_frame(&mut self, context: &[f32], embedding: &[f32], mask: &mut [f32]) -> Result<()>;
}

impl<M: FrameMasker + ?Sized> FrameMasker for &mut M {
    fn embedding_dim(&self) -> usize {
        (**self).embedding_dim()
    }

    fn zero_embedding(&self) -> &[f32] {
        (**self).zero_embedding()
    }

    fn reset(&mut self) {
        (**self).reset()
    }

    fn mask_frame(&mut self, context: &[f32], embedding: &[f32], mask: &mut [f32]) -> Result<()> {
        (**self).mask_frame(context, embedding, mask)
    }
}

/// A [`FusionModel`] bound to one stream's recurrent state.
#[derive(Debug, Clone)]
pub struct FusionStream<'m> {
    model: &'m FusionModel,
    state: LstmState,
    scratch: Scratch,
}

impl<'m> FusionStream<'m> {
    pub fn new(model: &'m FusionModel) -> Self {
        Self { model, state: model.initial_state(), scratch: Scratch::new(model) }
    }

    pub fn model(&self) -> &'m FusionModel {
        self.model
    }

    pub fn state(&self) -> &LstmState {
        &self.state
    }
}

impl FrameMasker for FusionStream<'_> {
    fn embedding_dim(&self) -> usize {
        self.model.embedding_dim()
    }

    fn zero_embedding(&self) -> &[f32] {
        self.model.zero_embedding()
    }

    fn reset(&mut self) {
        self.state = self.model.initial_state();
    }

    fn mask_frame(&mut self, context: &[f32], embedding: &[f32], mask: &mut [f32]) -> Result<()> {
        self.model.encode_into(context, &mut self.scratch, None)?;
        let latent = core::mem::take(&mut self.scratch.conv[CONV_LAYERS - 1]);
        let result = self.model.step_into(&latent, embedding, &mut self.state, &mut self.scratch, mask, None);
        self.scratch.conv[CONV_LAYERS - 1] = latent;
        result
    }
}

pub use init::random_weights;

#[cfg(test)]
mod tests;
