//! Export manifest and golden activation files.
//!
//! The manifest is line oriented. Blank lines and `#` comments are ignored,
//! every other line is a keyword followed by space-separated fields:
//!
//! ```text
//! format avse-export 1
//! weights model.rvnw
//! embedding_dim 512
//! encoder vsriw
//! zero_embedding <free text describing how the zero embedding was produced>
//! parameter_count 3876097
//! tensor conv1.weight 256x257x5 <sha256 of the f32le data>
//! golden <seed> <step> <layer> <relative path>
//! ```
//!
//! Golden files are bare little-endian f32 arrays. For each seed the steps
//! run in order from a zero LSTM state; layer names are `context` and
//! `embedding` (inputs), `conv1`..`conv5`, `lstm_hidden`, `lstm_cell`,
//! `fc1`..`fc3` (fc3 before the sigmoid) and `mask`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use avse_core::model::{FusionModel, LayerTrace, ModelWeights};
use avse_core::{BINS, CONTEXT_FRAMES};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::binio::f32_bytes;
use crate::error::{FormatError, Result};

pub const FORMAT_TAG: &str = "avse-export";
pub const FORMAT_VERSION: u32 = 1;
/// Default golden tolerance, max absolute difference.
pub const GOLDEN_TOLERANCE: f32 = 1e-4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct GoldenRecord {
    pub seed: u64,
    pub step: usize,
    pub layer: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExportManifest {
    pub weights: Option<PathBuf>,
    pub embedding_dim: usize,
    pub encoder: Option<String>,
    pub zero_embedding: Option<String>,
    pub parameter_count: usize,
    pub tensors: Vec<TensorRecord>,
    pub golden: Vec<GoldenRecord>,
}

pub fn tensor_sha256(data: &[f32]) -> String {
    format!("{:x}", Sha256::digest(f32_bytes(data)))
}

fn parse_shape(s: &str) -> Option<Vec<usize>> {
    s.split('x').map(|d| d.parse().ok()).collect()
}

fn format_shape(shape: &[usize]) -> String {
    shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("x")
}

pub const GOLDEN_LAYERS: [&str; 13] = [
    "context", "embedding", "conv1", "conv2", "conv3", "conv4", "conv5", "lstm_hidden", "lstm_cell", "fc1", "fc2",
    "fc3", "mask",
];

impl ExportManifest {
    pub fn parse(text: &str) -> Result<Self> {
        let mut m = ExportManifest::default();
        let mut saw_format = false;
        let (mut saw_dim, mut saw_count) = (false, false);
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
            let rest = rest.trim();
            let fields: Vec<&str> = rest.split_whitespace().collect();
            let err = |msg: &str| FormatError::line(line_no, format!("{key}: {msg}"));
            match key {
                "format" => {
                    if fields != [FORMAT_TAG, "1"] {
                        return Err(err(&format!("expected `{FORMAT_TAG} {FORMAT_VERSION}`")));
                    }
                    saw_format = true;
                }
                "weights" if !rest.is_empty() => m.weights = Some(PathBuf::from(rest)),
                "encoder" if !rest.is_empty() => m.encoder = Some(rest.to_string()),
                "zero_embedding" if !rest.is_empty() => m.zero_embedding = Some(rest.to_string()),
                "embedding_dim" => {
                    m.embedding_dim = rest.parse().map_err(|_| err("expected an integer"))?;
                    saw_dim = true;
                }
                "parameter_count" => {
                    m.parameter_count = rest.parse().map_err(|_| err("expected an integer"))?;
                    saw_count = true;
                }
                "tensor" => {
                    let [name, shape, sha] = fields[..] else {
                        return Err(err("expected `tensor <name> <shape> <sha256>`"));
                    };
                    let shape = parse_shape(shape).ok_or_else(|| err("malformed shape"))?;
                    if sha.len() != 64 || !sha.bytes().all(|b| b.is_ascii_hexdigit()) {
                        return Err(err("malformed sha256"));
                    }
                    m.tensors.push(TensorRecord { name: name.to_string(), shape, sha256: sha.to_ascii_lowercase() });
                }
                "golden" => {
                    let [seed, step, layer, path] = fields[..] else {
                        return Err(err("expected `golden <seed> <step> <layer> <path>`"));
                    };
                    if !GOLDEN_LAYERS.contains(&layer) {
                        return Err(err(&format!("unknown layer {layer}")));
                    }
                    m.golden.push(GoldenRecord {
                        seed: seed.parse().map_err(|_| err("malformed seed"))?,
                        step: step.parse().map_err(|_| err("malformed step"))?,
                        layer: layer.to_string(),
                        path: PathBuf::from(path),
                    });
                }
                _ => return Err(FormatError::line(line_no, format!("unrecognized line `{line}`"))),
            }
        }
        if !saw_format {
            return Err(FormatError::invalid("manifest has no format line"));
        }
        if !saw_dim || !saw_count {
            return Err(FormatError::invalid("manifest needs embedding_dim and parameter_count"));
        }
        Ok(m)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Manifest describing `weights` exactly, without golden records.
    pub fn describe(weights: &ModelWeights) -> Self {
        ExportManifest {
            weights: None,
            embedding_dim: weights.config().embedding_dim,
            encoder: None,
            zero_embedding: None,
            parameter_count: weights.parameter_count(),
            tensors: weights
                .tensors()
                .map(|(spec, t)| TensorRecord { name: spec.name, shape: t.shape.clone(), sha256: tensor_sha256(&t.data) })
                .collect(),
            golden: Vec::new(),
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "format {FORMAT_TAG} {FORMAT_VERSION}").unwrap();
        if let Some(w) = &self.weights {
            writeln!(s, "weights {}", w.display()).unwrap();
        }
        writeln!(s, "embedding_dim {}", self.embedding_dim).unwrap();
        if let Some(e) = &self.encoder {
            writeln!(s, "encoder {e}").unwrap();
        }
        if let Some(z) = &self.zero_embedding {
            writeln!(s, "zero_embedding {z}").unwrap();
        }
        writeln!(s, "parameter_count {}", self.parameter_count).unwrap();
        for t in &self.tensors {
            writeln!(s, "tensor {} {} {}", t.name, format_shape(&t.shape), t.sha256).unwrap();
        }
        for g in &self.golden {
            writeln!(s, "golden {} {} {} {}", g.seed, g.step, g.layer, g.path.display()).unwrap();
        }
        s
    }

    /// Checks that `weights` agree with every shape, checksum and count listed.
    pub fn check_weights(&self, weights: &ModelWeights) -> Result<()> {
        let mismatch = |msg: String| Err(FormatError::Invalid(format!("manifest mismatch: {msg}")));
        if self.embedding_dim != weights.config().embedding_dim {
            return mismatch(format!("embedding_dim {} vs {}", self.embedding_dim, weights.config().embedding_dim));
        }
        if self.parameter_count != weights.parameter_count() {
            return mismatch(format!("parameter_count {} vs {}", self.parameter_count, weights.parameter_count()));
        }
        let listed: BTreeMap<&str, &TensorRecord> = self.tensors.iter().map(|t| (t.name.as_str(), t)).collect();
        for (spec, tensor) in weights.tensors() {
            let Some(record) = listed.get(spec.name.as_str()) else {
                return mismatch(format!("tensor {} is not listed", spec.name));
            };
            if record.shape != tensor.shape {
                return mismatch(format!("tensor {} shape {:?} vs {:?}", spec.name, record.shape, tensor.shape));
            }
            if record.sha256 != tensor_sha256(&tensor.data) {
                return mismatch(format!("tensor {} checksum", spec.name));
            }
        }
        if listed.len() != weights.tensors().count() {
            let extra = listed.keys().find(|n| weights.tensor(n).is_none()).copied().unwrap_or("?");
            return mismatch(format!("tensor {extra} is not in the weights"));
        }
        Ok(())
    }
}

/// Largest deviation found for one golden file.
#[derive(Debug, Clone, PartialEq)]
pub struct GoldenComparison {
    pub seed: u64,
    pub step: usize,
    pub layer: String,
    pub max_abs_error: f32,
}

pub fn read_f32le(path: &Path) -> Result<Vec<f32>> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 4 != 0 {
        return Err(FormatError::invalid(format!("{} is not a whole number of f32 values", path.display())));
    }
    Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect())
}

fn trace_layer<'t>(trace: &'t LayerTrace, layer: &str) -> Option<&'t [f32]> {
    Some(match layer {
        "lstm_hidden" => &trace.lstm_hidden,
        "lstm_cell" => &trace.lstm_cell,
        "mask" => &trace.mask,
        "fc1" => &trace.fc[0],
        "fc2" => &trace.fc[1],
        "fc3" => &trace.fc[2],
        _ => {
            let i: usize = layer.strip_prefix("conv")?.parse().ok()?;
            trace.conv.get(i.checked_sub(1)?)?
        }
    })
}

/// Replays every golden step through `model` and reports the per-file error.
/// Paths are resolved against `base`.
pub fn compare_golden(manifest: &ExportManifest, model: &FusionModel, base: &Path) -> Result<Vec<GoldenComparison>> {
    let mut grouped: BTreeMap<u64, BTreeMap<usize, BTreeMap<&str, &Path>>> = BTreeMap::new();
    for g in &manifest.golden {
        grouped.entry(g.seed).or_default().entry(g.step).or_default().insert(&g.layer, &g.path);
    }
    let mut out = Vec::new();
    for (seed, steps) in grouped {
        let mut state = model.initial_state();
        for (expected_step, (step, files)) in steps.into_iter().enumerate() {
            if step != expected_step {
                return Err(FormatError::invalid(format!("golden seed {seed}: step {expected_step} is missing")));
            }
            let input = |name: &str, len: usize| -> Result<Vec<f32>> {
                let path = files
                    .get(name)
                    .ok_or_else(|| FormatError::invalid(format!("golden seed {seed} step {step}: no {name} file")))?;
                let v = read_f32le(&base.join(path))?;
                if v.len() != len {
                    return Err(FormatError::invalid(format!("golden {name} has {} values, expected {len}", v.len())));
                }
                Ok(v)
            };
            let context = input("context", CONTEXT_FRAMES * BINS)?;
            let embedding = input("embedding", model.embedding_dim())?;
            let trace = model.trace(&context, &embedding, &mut state)?;
            for (layer, path) in files {
                let Some(actual) = trace_layer(&trace, layer) else { continue };
                let expected = read_f32le(&base.join(path))?;
                if expected.len() != actual.len() {
                    return Err(FormatError::invalid(format!(
                        "golden {layer} seed {seed} step {step}: {} values, engine has {}",
                        expected.len(),
                        actual.len()
                    )));
                }
                let max_abs_error = expected.iter().zip(actual).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max);
                out.push(GoldenComparison { seed, step, layer: layer.to_string(), max_abs_error });
            }
        }
    }
    Ok(out)
}

/// Writes golden files for `steps` seeded random steps of `model` into `dir`
/// and returns their records, paths relative to `dir`.
pub fn write_golden(model: &FusionModel, dir: &Path, seed: u64, steps: usize) -> Result<Vec<GoldenRecord>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut state = model.initial_state();
    let mut records = Vec::new();
    for step in 0..steps {
        let context: Vec<f32> = (0..CONTEXT_FRAMES * BINS).map(|_| rng.gen_range(0.0..2.0)).collect();
        let embedding: Vec<f32> = (0..model.embedding_dim()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let trace = model.trace(&context, &embedding, &mut state)?;
        let mut layers: Vec<(&str, &[f32])> = vec![("context", &context), ("embedding", &embedding)];
        for name in &GOLDEN_LAYERS[2..] {
            layers.push((name, trace_layer(&trace, name).expect("known layer")));
        }
        debug_assert_eq!(layers.len(), GOLDEN_LAYERS.len());
        for (layer, data) in layers {
            let rel = PathBuf::from(format!("seed{seed}/step{step}/{layer}.f32"));
            let path = dir.join(&rel);
            std::fs::create_dir_all(path.parent().expect("has parent"))?;
            crate::atomic::write_atomic(&path, |f| Ok(std::io::Write::write_all(f, &f32_bytes(data))?))?;
            records.push(GoldenRecord { seed, step, layer: layer.to_string(), path: rel });
        }
    }
    Ok(records)
}
