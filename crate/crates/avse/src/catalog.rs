//! Text formats of the mixture harness.
//!
//! Catalog: one clip per line, `<split> <kind> <path>`, where kind is
//! `speech`, `music` or `noise` and the path (which may contain spaces) is
//! relative to the catalog file. Speech clips may have a visual embedding
//! stream next to them with the same stem and an `.rvne` extension.
//!
//! Scenario manifest: `<key> <value>` lines, enough to rebuild a mixture
//! exactly:
//!
//! ```text
//! id s000000000000002a
//! seed 42
//! split train
//! snr_db -3.25
//! target spk/a.wav
//! interferer speaker spk/b.wav
//! interferer none
//! mixture mix.wav
//! reference mix.ref.wav
//! embeddings mix.rvne
//! enhanced mix.enh.wav
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use avse_core::mixture::{Catalog, CatalogEntry, ClipKind, InterfererKind, InterfererSpec, MixtureScenario};

use crate::error::{FormatError, Result};

fn records(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn split_key(line: &str) -> (&str, &str) {
    match line.split_once(char::is_whitespace) {
        Some((k, v)) => (k, v.trim()),
        None => (line, ""),
    }
}

pub fn parse_catalog(text: &str) -> Result<Catalog> {
    let mut entries = Vec::new();
    for (line, record) in records(text) {
        let (split, rest) = split_key(record);
        let (kind, path) = split_key(rest);
        if path.is_empty() {
            return Err(FormatError::line(line, "expected `<split> <kind> <path>`"));
        }
        let kind = ClipKind::parse(kind)
            .ok_or_else(|| FormatError::line(line, format!("unknown kind `{kind}`, expected speech, music or noise")))?;
        entries.push(CatalogEntry { split: split.to_string(), kind, clip: path.to_string() });
    }
    Ok(Catalog::new(entries))
}

pub fn read_catalog(path: &Path) -> Result<Catalog> {
    parse_catalog(&std::fs::read_to_string(path)?)
}

/// Conventional embedding stream path for a speech clip.
pub fn embeddings_for(clip: &Path) -> PathBuf {
    clip.with_extension("rvne")
}

/// A scenario plus the files produced or consumed for it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioRecord {
    pub id: String,
    pub split: String,
    pub scenario: MixtureScenario,
    pub mixture: Option<PathBuf>,
    pub reference: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub enhanced: Option<PathBuf>,
}

impl ScenarioRecord {
    pub fn to_text(&self) -> String {
        let s = &self.scenario;
        let mut out = String::new();
        writeln!(out, "id {}", self.id).unwrap();
        writeln!(out, "seed {}", s.seed).unwrap();
        writeln!(out, "split {}", self.split).unwrap();
        // Shortest representation that parses back to the same f64.
        writeln!(out, "snr_db {:?}", s.snr_db).unwrap();
        writeln!(out, "target {}", s.target).unwrap();
        for i in &s.interferers {
            match &i.clip {
                Some(c) => writeln!(out, "interferer {} {c}", i.kind.as_str()).unwrap(),
                None => writeln!(out, "interferer {}", i.kind.as_str()).unwrap(),
            }
        }
        for (key, path) in [
            ("mixture", &self.mixture),
            ("reference", &self.reference),
            ("embeddings", &self.embeddings),
            ("enhanced", &self.enhanced),
        ] {
            if let Some(p) = path {
                writeln!(out, "{key} {}", p.display()).unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut id = None;
        let mut seed = None;
        let mut split = None;
        let mut snr_db = None;
        let mut target = None;
        let mut interferers = Vec::new();
        let mut paths: [Option<PathBuf>; 4] = Default::default();
        for (line, record) in records(text) {
            let (key, value) = split_key(record);
            let err = |msg: &str| FormatError::line(line, format!("{key}: {msg}"));
            if value.is_empty() {
                return Err(err("missing value"));
            }
            match key {
                "id" => id = Some(value.to_string()),
                "seed" => seed = Some(value.parse::<u64>().map_err(|_| err("expected an unsigned integer"))?),
                "split" => split = Some(value.to_string()),
                "snr_db" => {
                    let v: f64 = value.parse().map_err(|_| err("expected a number"))?;
                    if !v.is_finite() {
                        return Err(err("must be finite"));
                    }
                    snr_db = Some(v);
                }
                "target" => target = Some(value.to_string()),
                "interferer" => {
                    let (kind, clip) = split_key(value);
                    let kind = InterfererKind::parse(kind).ok_or_else(|| err(&format!("unknown kind `{kind}`")))?;
                    let clip = match (kind, clip.is_empty()) {
                        (InterfererKind::None, true) => None,
                        (InterfererKind::None, false) => return Err(err("`none` takes no clip")),
                        (_, true) => return Err(err("missing clip")),
                        (_, false) => Some(clip.to_string()),
                    };
                    interferers.push(InterfererSpec { kind, clip });
                }
                "mixture" => paths[0] = Some(PathBuf::from(value)),
                "reference" => paths[1] = Some(PathBuf::from(value)),
                "embeddings" => paths[2] = Some(PathBuf::from(value)),
                "enhanced" => paths[3] = Some(PathBuf::from(value)),
                _ => return Err(FormatError::line(line, format!("unrecognized key `{key}`"))),
            }
        }
        let missing = |k: &str| FormatError::invalid(format!("scenario manifest has no `{k}` line"));
        let seed = seed.ok_or_else(|| missing("seed"))?;
        let [mixture, reference, embeddings, enhanced] = paths;
        Ok(ScenarioRecord {
            id: id.ok_or_else(|| missing("id"))?,
            split: split.ok_or_else(|| missing("split"))?,
            scenario: MixtureScenario {
                target: target.ok_or_else(|| missing("target"))?,
                interferers,
                snr_db: snr_db.ok_or_else(|| missing("snr_db"))?,
                seed,
            },
            mixture,
            reference,
            embeddings,
            enhanced,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }
}

/// `key = value` (or `key value`) lines; `#` starts a comment line.
pub fn parse_config(text: &str) -> Result<Vec<(String, String)>> {
    records(text)
        .map(|(line, record)| {
            let (key, value) = match record.split_once('=') {
                Some((k, v)) => (k.trim(), v.trim()),
                None => split_key(record),
            };
            if key.is_empty() || key.contains(char::is_whitespace) {
                return Err(FormatError::line(line, format!("malformed setting `{record}`")));
            }
            Ok((key.to_string(), value.to_string()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use avse_core::mixture::sample_scenario;

    #[test]
    fn catalog_parsing() {
        let c = parse_catalog("# demo\ntrain speech a b.wav\n\ntrain noise n.wav\ntest music m.wav\n").unwrap();
        assert_eq!(c.entries().len(), 3);
        assert_eq!(c.partition("train", ClipKind::Speech), ["a b.wav"]);
        let err = parse_catalog("train speech a.wav\ntrain drums d.wav\n").unwrap_err();
        assert_eq!(err.to_string(), "line 2: unknown kind `drums`, expected speech, music or noise");
        assert!(parse_catalog("train speech\n").unwrap_err().to_string().starts_with("line 1:"));
    }

    #[test]
    fn scenario_round_trip() {
        let text = "train speech s0.wav\ntrain speech s1.wav\ntrain speech s2.wav\ntrain music m.wav\ntrain noise n.wav\n";
        let c = parse_catalog(text).unwrap();
        for seed in 0..50 {
            let record = ScenarioRecord {
                id: format!("s{seed}"),
                split: "train".into(),
                scenario: sample_scenario(seed, &c, "train").unwrap(),
                mixture: Some("m.wav".into()),
                reference: None,
                embeddings: Some("dir with space/e.rvne".into()),
                enhanced: None,
            };
            assert_eq!(ScenarioRecord::parse(&record.to_text()).unwrap(), record);
        }
    }

    #[test]
    fn scenario_errors_name_the_line() {
        let err = ScenarioRecord::parse("id a\nseed 1\nsplit x\nsnr_db loud\n").unwrap_err();
        assert_eq!(err.to_string(), "line 4: snr_db: expected a number");
        let err = ScenarioRecord::parse("id a\ninterferer none x.wav\n").unwrap_err();
        assert!(err.to_string().starts_with("line 2:"));
        let err = ScenarioRecord::parse("id a\nseed 1\n").unwrap_err();
        assert!(err.to_string().contains("split"));
    }

    #[test]
    fn config_lines() {
        let c = parse_config("# x\nweights = a.rvnw\ndeadline-strict = true\nseed 4\n").unwrap();
        assert_eq!(c[0], ("weights".into(), "a.rvnw".into()));
        assert_eq!(c[2], ("seed".into(), "4".into()));
        assert!(parse_config("a b = c\n").unwrap_err().to_string().starts_with("line 1:"));
    }
}
