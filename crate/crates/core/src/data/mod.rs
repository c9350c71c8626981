//! Recordings, cardiac-cycle extraction, cross-validation folds and a
//! synthetic PCG generator.

mod folds;
mod manifest;
mod segment;
mod store;
mod synth;
mod wav;

use serde::{Deserialize, Serialize};

pub use folds::{make_folds, FoldAssignment, FOLDS, TRAIN_ONLY};
pub use manifest::{read_folds_csv, read_labels_csv, write_folds_csv, write_labels_csv};
pub use segment::{segment_cycles, MAX_BPM, MIN_BPM, MIN_VALID_LEN};
pub use store::{read_cycle_store, write_cycle_store};
pub use synth::{synth_pcg, SynthConfig, SynthParams, SynthRecording};
pub use wav::{load_recording, write_wav};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Normal,
    Abnormal,
}

impl Label {
    /// Training target: 0 normal, 1 abnormal.
    pub fn target(self) -> f64 {
        match self {
            Label::Normal => 0.0,
            Label::Abnormal => 1.0,
        }
    }

    /// Manifest code: −1 normal, 1 abnormal.
    pub fn code(self) -> i8 {
        match self {
            Label::Normal => -1,
            Label::Abnormal => 1,
        }
    }

    pub fn from_code(code: i64) -> Option<Self> {
        match code {
            -1 => Some(Label::Normal),
            1 => Some(Label::Abnormal),
            _ => None,
        }
    }
}

/// Contributing database, taken from the first letter of a PhysioNet-style
/// record id (`a0001` → `A`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Subset {
    A,
    B,
    C,
    D,
    E,
    F,
    Synthetic,
}

impl Subset {
    pub fn from_id(id: &str) -> Self {
        match id.as_bytes().first() {
            Some(b'a') => Subset::A,
            Some(b'b') => Subset::B,
            Some(b'c') => Subset::C,
            Some(b'd') => Subset::D,
            Some(b'e') => Subset::E,
            Some(b'f') => Subset::F,
            _ => Subset::Synthetic,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordingMeta {
    pub id: String,
    pub subset: Subset,
    pub label: Label,
}

impl RecordingMeta {
    pub fn new(id: impl Into<String>, label: Label) -> Self {
        let id = id.into();
        Self {
            subset: Subset::from_id(&id),
            id,
            label,
        }
    }
}

/// One cardiac cycle, left-aligned and zero-padded to the cycle length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub recording_id: String,
    pub label: Label,
    /// Offset of the first sample within the source recording.
    pub start: usize,
    pub valid_len: usize,
    #[serde(skip)]
    pub samples: Vec<f64>,
}

/// Splits cycles into `(train, validation)` for validation fold `k`.
/// Recordings of other folds, and train-only recordings, go to training.
pub fn split_fold(cycles: &[CycleRecord], folds: &FoldAssignment, k: i32) -> crate::Result<(Vec<CycleRecord>, Vec<CycleRecord>)> {
    if !(0..folds::FOLDS as i32).contains(&k) {
        return Err(crate::Error::arg("k", format!("fold {k} outside 0..{}", folds::FOLDS)));
    }
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for c in cycles {
        let f = folds.fold_of(&c.recording_id).ok_or_else(|| crate::Error::Format {
            what: "fold manifest",
            reason: format!("recording {} has no fold", c.recording_id),
        })?;
        if f == k {
            val.push(c.clone());
        } else {
            train.push(c.clone());
        }
    }
    Ok((train, val))
}

/// Keeps at most `max` cycles per recording, in their original order.
pub fn limit_cycles_per_recording(cycles: &[CycleRecord], max: usize) -> Vec<CycleRecord> {
    let mut seen = std::collections::BTreeMap::<&str, usize>::new();
    cycles
        .iter()
        .filter(|c| {
            let n = seen.entry(&c.recording_id).or_default();
            *n += 1;
            *n <= max
        })
        .cloned()
        .collect()
}

/// Recording metadata recovered from a cycle list, one entry per recording
/// in first-seen order.
pub fn recordings_of(cycles: &[CycleRecord]) -> Vec<RecordingMeta> {
    let mut seen = std::collections::BTreeSet::new();
    cycles
        .iter()
        .filter(|c| seen.insert(c.recording_id.as_str()))
        .map(|c| RecordingMeta::new(c.recording_id.clone(), c.label))
        .collect()
}
