//! Dataset ingestion and on-disk formats.

mod container;
mod features;
mod labels;
mod manifest;
mod recording;

use std::fs;
use std::path::Path;

pub use container::{
    decode_container, read_container, write_container, ContainerKind, Header, HEADER_LEN, MAGIC,
};
pub use features::{
    load_feature_sequence, save_feature_sequence, FeatureKind, FeatureSequence, DEFAULT_HOP_MS,
    DEFAULT_WINDOW_MS, MEL_BANDS, SS_DIMS,
};
pub use labels::{LabelSequence, Vocab, VocabKind, DEFAULT_PHONEMES, SPACE, UNIT_COUNT};
pub use manifest::{
    GestureItem, GestureManifest, GestureSubject, Manifest, Split, Utterance, MANIFEST_VERSION,
};
pub use recording::{
    load_recording, load_waveform, meta_path, save_recording, save_waveform, Recording,
    RecordingMeta, DEFAULT_FS,
};

use crate::error::{Error, Result};

/// Writes unit ids as one space-separated, newline-terminated line, the
/// textual input expected by unit-to-speech vocoders.
pub fn emit_unit_transcript(units: &LabelSequence, path: &Path) -> Result<()> {
    fs::write(path, unit_transcript(units)?)?;
    Ok(())
}

pub fn unit_transcript(units: &LabelSequence) -> Result<String> {
    if units.kind() != VocabKind::Units {
        return Err(Error::InvalidArgument(
            "unit transcripts require a unit vocabulary".into(),
        ));
    }
    Ok(format!("{units}\n"))
}

pub fn read_unit_transcript(path: &Path, unit_count: usize) -> Result<LabelSequence> {
    let text = fs::read_to_string(path)?;
    let ids = text
        .split_whitespace()
        .map(|t| {
            t.parse::<u32>()
                .map_err(|_| Error::Format(format!("bad unit id {t:?} in {}", path.display())))
        })
        .collect::<Result<Vec<_>>>()?;
    LabelSequence::with_size(VocabKind::Units, unit_count, ids)
}
