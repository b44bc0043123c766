//! Dataset manifests: a JSON document listing classes, feature geometry and
//! per-sample feature files (paths relative to the manifest).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::{read_features, write_features};
use super::sample::AVSample;
use crate::encoders::{AudioInput, VisualInput};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VisualLayout {
    /// Each visual file is a `[1, dim]` clip descriptor.
    Features { dim: usize },
    /// Each visual file is `[N_f, height, width]` grayscale frames.
    Frames { height: usize, width: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub clip_id: String,
    pub subject_id: String,
    pub label: usize,
    #[serde(default)]
    pub visual: Option<String>,
    #[serde(default)]
    pub audio: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub class_names: Vec<String>,
    pub visual: VisualLayout,
    /// `F_a`.
    pub audio_features: usize,
    pub samples: Vec<ManifestEntry>,
}

/// A loaded, validated dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub class_names: Vec<String>,
    pub visual: VisualLayout,
    pub audio_features: usize,
    pub samples: Vec<AVSample>,
}

impl Dataset {
    pub fn classes(&self) -> usize {
        self.class_names.len()
    }

    /// Keeps only samples of the named classes, relabelled `0..names.len()`
    /// in the order given.
    pub fn select_classes(&self, names: &[String]) -> Result<Dataset> {
        let mut remap = vec![None; self.classes()];
        for (new, name) in names.iter().enumerate() {
            let old = self
                .class_names
                .iter()
                .position(|c| c == name)
                .ok_or_else(|| Error::InvalidConfig(format!("unknown class `{name}`")))?;
            if remap[old].replace(new).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "class `{name}` selected twice"
                )));
            }
        }
        if names.len() < 2 {
            return Err(Error::InvalidConfig("select at least two classes".into()));
        }
        let samples = self
            .samples
            .iter()
            .filter_map(|s| remap[s.label].map(|label| AVSample { label, ..s.clone() }))
            .collect();
        Ok(Dataset {
            class_names: names.to_vec(),
            visual: self.visual,
            audio_features: self.audio_features,
            samples,
        })
    }
}

fn check_header(m: &DatasetManifest) -> Result<()> {
    if m.format_version != MANIFEST_VERSION {
        return Err(Error::UnknownVersion {
            what: "manifest",
            found: m.format_version,
            expected: MANIFEST_VERSION,
        });
    }
    let fmt = |detail: String| Error::Format {
        what: "manifest",
        detail,
    };
    if m.class_names.len() < 2 {
        return Err(fmt("at least two classes are required".into()));
    }
    let unique: BTreeSet<_> = m.class_names.iter().collect();
    if unique.len() != m.class_names.len() {
        return Err(fmt("class names must be unique".into()));
    }
    if m.audio_features == 0 {
        return Err(fmt("audio_features must be positive".into()));
    }
    Ok(())
}

fn check_visual(
    clip: &str,
    layout: VisualLayout,
    t: &crate::numerics::Tensor,
) -> Result<VisualInput> {
    let mismatch = |detail: String| Error::DimMismatch {
        clip: clip.to_string(),
        detail,
    };
    match layout {
        VisualLayout::Features { dim } => {
            if t.shape() != [1, dim] {
                return Err(mismatch(format!(
                    "visual features {:?}, manifest declares [1, {dim}]",
                    t.shape()
                )));
            }
            Ok(VisualInput::Features(t.clone()))
        }
        VisualLayout::Frames { height, width } => match t.shape() {
            &[n, h, w] if h == height && w == width && n >= 2 => Ok(VisualInput::Frames(t.clone())),
            s => Err(mismatch(format!(
                "visual frames {s:?}, manifest declares [N_f>=2, {height}, {width}]"
            ))),
        },
    }
}

/// Loads every sample, failing on the first malformed entry without
/// returning a partial dataset.
pub fn load_manifest(path: &Path) -> Result<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
        what: "manifest",
        detail: format!("{}: {e}", path.display()),
    })?;
    check_header(&manifest)?;
    let root = path.parent().unwrap_or(Path::new("."));

    let mut seen = BTreeSet::new();
    let mut samples = Vec::with_capacity(manifest.samples.len());
    for e in &manifest.samples {
        let bad_label = |detail: String| Error::BadLabel {
            clip: e.clip_id.clone(),
            detail,
        };
        if e.clip_id.trim().is_empty() || !seen.insert(e.clip_id.clone()) {
            return Err(Error::Format {
                what: "manifest",
                detail: format!("empty or duplicate clip_id `{}`", e.clip_id),
            });
        }
        if e.subject_id.trim().is_empty() {
            return Err(bad_label("empty subject_id".into()));
        }
        let label_name = manifest
            .class_names
            .get(e.label)
            .ok_or_else(|| {
                bad_label(format!(
                    "label {} outside 0..{}",
                    e.label,
                    manifest.class_names.len()
                ))
            })?
            .clone();
        let load = |rel: &String| -> Result<crate::numerics::Tensor> {
            let p: PathBuf = root.join(rel);
            if !p.is_file() {
                return Err(Error::MissingFile {
                    clip: e.clip_id.clone(),
                    path: p,
                });
            }
            read_features(&p).map_err(|err| match err {
                Error::Format { detail, .. } => Error::DimMismatch {
                    clip: e.clip_id.clone(),
                    detail,
                },
                other => other,
            })
        };
        let visual = e
            .visual
            .as_ref()
            .map(|rel| check_visual(&e.clip_id, manifest.visual, &load(rel)?))
            .transpose()?;
        let audio = match &e.audio {
            Some(rel) => {
                let t = load(rel)?;
                match t.shape() {
                    &[_, f] if f == manifest.audio_features => Some(AudioInput { features: t }),
                    s => {
                        return Err(Error::DimMismatch {
                            clip: e.clip_id.clone(),
                            detail: format!(
                                "audio features {s:?}, manifest declares [T_a, {}]",
                                manifest.audio_features
                            ),
                        })
                    }
                }
            }
            None => None,
        };
        samples.push(AVSample {
            clip_id: e.clip_id.clone(),
            subject_id: e.subject_id.clone(),
            visual,
            audio,
            label: e.label,
            label_name,
        });
    }
    Ok(Dataset {
        class_names: manifest.class_names,
        visual: manifest.visual,
        audio_features: manifest.audio_features,
        samples,
    })
}

/// Writes feature files under `dir/features/` and `dir/manifest.json`;
/// returns the manifest path.
pub fn write_dataset(dir: &Path, dataset: &Dataset) -> Result<PathBuf> {
    let feat_dir = dir.join("features");
    fs::create_dir_all(&feat_dir).map_err(|e| Error::io(&feat_dir, e))?;
    let mut entries = Vec::with_capacity(dataset.samples.len());
    for s in &dataset.samples {
        let visual = match &s.visual {
            Some(VisualInput::Features(t)) | Some(VisualInput::Frames(t)) => {
                let rel = format!("features/{}.visual.feat", s.clip_id);
                write_features(&dir.join(&rel), t)?;
                Some(rel)
            }
            None => None,
        };
        let audio = match &s.audio {
            Some(a) => {
                let rel = format!("features/{}.audio.feat", s.clip_id);
                write_features(&dir.join(&rel), &a.features)?;
                Some(rel)
            }
            None => None,
        };
        entries.push(ManifestEntry {
            clip_id: s.clip_id.clone(),
            subject_id: s.subject_id.clone(),
            label: s.label,
            visual,
            audio,
        });
    }
    let manifest = DatasetManifest {
        format_version: MANIFEST_VERSION,
        class_names: dataset.class_names.clone(),
        visual: dataset.visual,
        audio_features: dataset.audio_features,
        samples: entries,
    };
    let path = dir.join(MANIFEST_FILE);
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    fs::write(&path, json).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
