//! Labelled 32x32 lesion patches: synthetic generation, rotation
//! augmentation, patient-level fold splitting and file I/O.

mod augment;
mod folds;
mod io;
mod synth;

pub use augment::{augment, rotate_bilinear, AugmentConfig};
pub use folds::{split_folds, FoldSplit};
pub use io::{load_manifest, load_patches, read_pgm, write_manifest, write_pgm};
pub use synth::{generate_synthetic, SynthConfig};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::SampleView;

pub const PATCH_LEN: usize = crate::sequencer::PATCH_SIZE * crate::sequencer::PATCH_SIZE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Benign = 0,
    Malignant = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(v: u64) -> Option<Label> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Malignant),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchRecord {
    /// Row-major 32x32 intensities in `[0, 1]`.
    pub image: Vec<f32>,
    pub label: Label,
    pub patient_id: String,
    pub lesion_id: String,
    pub rotation_deg: f64,
    pub is_augmented: bool,
}

/// Records together with their patient-level fold assignment.
#[derive(Debug, Clone)]
pub struct PatchDataset {
    pub records: Vec<PatchRecord>,
    pub split: FoldSplit,
}

impl PatchDataset {
    pub fn new(records: Vec<PatchRecord>, split: FoldSplit) -> Result<Self> {
        for r in &records {
            if split.fold_of(&r.patient_id).is_none() {
                return Err(Error::Config(format!(
                    "patient {} has no fold assignment",
                    r.patient_id
                )));
            }
            if r.image.len() != PATCH_LEN {
                return Err(Error::shape(format!(
                    "record {}/{} has {} pixels, expected {PATCH_LEN}",
                    r.patient_id,
                    r.lesion_id,
                    r.image.len()
                )));
            }
        }
        Ok(PatchDataset { records, split })
    }

    pub fn n_folds(&self) -> usize {
        self.split.n_folds
    }

    /// Indices of training (all other folds) and test (`fold`) records.
    pub fn train_test_indices(&self, fold: usize) -> (Vec<usize>, Vec<usize>) {
        let (mut train, mut test) = (Vec::new(), Vec::new());
        for (i, r) in self.records.iter().enumerate() {
            if self.split.fold_of(&r.patient_id) == Some(fold) {
                test.push(i);
            } else {
                train.push(i);
            }
        }
        (train, test)
    }

    pub fn view(&self, indices: &[usize]) -> SampleView<'_> {
        let images = indices.iter().map(|&i| &self.records[i].image[..]).collect();
        let labels = indices.iter().map(|&i| self.records[i].label.index()).collect();
        SampleView::new(images, labels).expect("equal lengths by construction")
    }
}
