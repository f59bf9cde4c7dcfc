//! JSON manifests describing utterances, their artifacts and splits.
//!
//! Relative paths are resolved against the manifest's directory.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::features::FeatureKind;
use super::labels::{LabelSequence, Vocab, VocabKind};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Utterance {
    pub id: String,
    pub split: Split,
    /// Raw or preprocessed recording container.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emg: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub audio: Option<String>,
    /// Index into the recording's segment list.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub segment: Option<usize>,
    /// Feature containers keyed by kind name (`diag-e`, `ss-h`, ...).
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub features: BTreeMap<String, String>,
    /// Per-layer SS feature containers, in layer order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub layers: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<Vec<u32>>,
    /// Phoneme symbols, including `space` word separators.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phonemes: Option<Vec<String>>,
}

impl Utterance {
    pub fn new(id: impl Into<String>, split: Split) -> Self {
        Self {
            id: id.into(),
            split,
            emg: None,
            audio: None,
            segment: None,
            features: BTreeMap::new(),
            layers: Vec::new(),
            units: None,
            phonemes: None,
        }
    }

    pub fn feature(&self, kind: FeatureKind) -> Option<&str> {
        self.features.get(kind.name()).map(String::as_str)
    }

    fn paths(&self) -> impl Iterator<Item = &String> {
        self.emg
            .iter()
            .chain(self.audio.iter())
            .chain(self.features.values())
            .chain(self.layers.iter())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub version: u32,
    /// Electrode count `V` shared by all EMG features.
    pub electrodes: usize,
    #[serde(default = "default_unit_count")]
    pub unit_count: usize,
    /// Phoneme id ↔ string table; the default inventory when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phonemes: Option<Vec<String>>,
    pub utterances: Vec<Utterance>,
    #[serde(skip)]
    pub root: PathBuf,
}

fn default_unit_count() -> usize {
    super::labels::UNIT_COUNT
}

impl Manifest {
    pub fn new(electrodes: usize) -> Self {
        Self {
            version: MANIFEST_VERSION,
            electrodes,
            unit_count: default_unit_count(),
            phonemes: None,
            utterances: Vec::new(),
            root: PathBuf::new(),
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut m: Manifest = serde_json::from_slice(&fs::read(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent)?;
            }
        }
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    /// Checks version, unique ids, label ranges and split disjointness.
    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        let mut ids = HashSet::new();
        for u in &self.utterances {
            if !ids.insert(u.id.as_str()) {
                return Err(Error::SplitLeakage(format!(
                    "utterance id {:?} listed more than once",
                    u.id
                )));
            }
        }
        // A test artifact reused by a train/val utterance leaks test data.
        let mut owner: HashMap<&str, (&str, Split)> = HashMap::new();
        for u in &self.utterances {
            for p in u.paths() {
                if let Some(&(other, split)) = owner.get(p.as_str()) {
                    let crosses = (split == Split::Test) != (u.split == Split::Test);
                    if crosses {
                        return Err(Error::SplitLeakage(format!(
                            "{p:?} is shared by test and non-test utterances ({other:?}, {:?})",
                            u.id
                        )));
                    }
                } else {
                    owner.insert(p.as_str(), (u.id.as_str(), u.split));
                }
            }
        }
        let phonemes = self.phoneme_vocab()?;
        for u in &self.utterances {
            if let Some(units) = &u.units {
                LabelSequence::with_size(VocabKind::Units, self.unit_count, units.clone())?;
            }
            if let Some(ph) = &u.phonemes {
                phonemes.encode(&ph.join(" "))?;
            }
        }
        Ok(())
    }

    pub fn phoneme_vocab(&self) -> Result<Vocab> {
        match &self.phonemes {
            Some(t) => Vocab::phonemes(t.clone()),
            None => Ok(Vocab::default_phonemes()),
        }
    }

    pub fn vocab(&self, kind: VocabKind) -> Result<Vocab> {
        match kind {
            VocabKind::Units => Ok(Vocab::units(self.unit_count)),
            VocabKind::Phonemes => self.phoneme_vocab(),
        }
    }

    /// Target labels of an utterance, if present.
    pub fn labels(&self, u: &Utterance, kind: VocabKind) -> Result<Option<LabelSequence>> {
        match kind {
            VocabKind::Units => u
                .units
                .as_ref()
                .map(|s| LabelSequence::with_size(VocabKind::Units, self.unit_count, s.clone()))
                .transpose(),
            VocabKind::Phonemes => {
                let vocab = self.phoneme_vocab()?;
                u.phonemes
                    .as_ref()
                    .map(|p| vocab.encode(&p.join(" ")))
                    .transpose()
            }
        }
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &Utterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }
}

/// Gesture repetitions grouped by subject, for clustering analyses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureManifest {
    pub version: u32,
    pub classes: usize,
    pub subjects: Vec<GestureSubject>,
    #[serde(skip)]
    pub root: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureSubject {
    pub id: String,
    pub items: Vec<GestureItem>,
}

/// One repetition: either a recording container (covariance over the whole
/// interval) or a single-frame `vec-e` container.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GestureItem {
    pub path: String,
    pub label: usize,
}

impl GestureManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let mut m: GestureManifest = serde_json::from_slice(&fs::read(path)?)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)?;
        Ok(())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        let p = Path::new(rel);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.root.join(p)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != MANIFEST_VERSION {
            return Err(Error::Format(format!(
                "unsupported manifest version {}",
                self.version
            )));
        }
        for s in &self.subjects {
            if let Some(it) = s.items.iter().find(|it| it.label >= self.classes) {
                return Err(Error::Format(format!(
                    "subject {}: label {} out of range for {} classes",
                    s.id, it.label, self.classes
                )));
            }
        }
        Ok(())
    }
}
