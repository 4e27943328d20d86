use serde::{Deserialize, Serialize};

use super::{Label, PatchRecord};
use crate::error::{Error, Result};
use crate::sequencer::PATCH_SIZE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub malignant_step_deg: f64,
    pub benign_step_deg: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            malignant_step_deg: 45.0,
            benign_step_deg: 10.0,
        }
    }
}

fn rotations(step: f64) -> Result<usize> {
    let count = 360.0 / step;
    if !(step > 0.0 && step <= 360.0) || (count - count.round()).abs() > 1e-9 {
        return Err(Error::Config(format!(
            "rotation step {step} does not divide 360 evenly"
        )));
    }
    Ok(count.round() as usize)
}

impl AugmentConfig {
    pub fn validate(&self) -> Result<()> {
        rotations(self.malignant_step_deg)?;
        rotations(self.benign_step_deg)?;
        Ok(())
    }
}

fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Rotates a square image about its centre by `degrees` (positive turns
/// the x axis toward the y axis, i.e. clockwise on screen with y pointing
/// down), with bilinear interpolation. Samples falling outside the source
/// take `background`.
pub fn rotate_bilinear(image: &[f32], size: usize, degrees: f64, background: f32) -> Vec<f32> {
    let c = (size as f64 - 1.0) / 2.0;
    let (s, co) = degrees.to_radians().sin_cos();
    let max = (size - 1) as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            let sx = snap(co * dx + s * dy + c);
            let sy = snap(-s * dx + co * dy + c);
            if !(0.0..=max).contains(&sx) || !(0.0..=max).contains(&sy) {
                out.push(background);
                continue;
            }
            let (x0, y0) = (sx.floor() as usize, sy.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(size - 1), (y0 + 1).min(size - 1));
            let (fx, fy) = (sx - x0 as f64, sy - y0 as f64);
            let at = |xx: usize, yy: usize| image[yy * size + xx] as f64;
            let v = (1.0 - fy) * ((1.0 - fx) * at(x0, y0) + fx * at(x1, y0))
                + fy * ((1.0 - fx) * at(x0, y1) + fx * at(x1, y1));
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

fn border_mean(image: &[f32], size: usize) -> f32 {
    let mut sum = 0.0f64;
    let mut n = 0;
    for i in 0..size {
        for (x, y) in [(i, 0), (i, size - 1), (0, i), (size - 1, i)] {
            sum += image[y * size + x] as f64;
            n += 1;
        }
    }
    (sum / n as f64) as f32
}

/// Expands each base lesion into its rotated copies (0 degrees included):
/// `360 / malignant_step` per malignant lesion, `360 / benign_step` per
/// benign one.
pub fn augment(records: &[PatchRecord], cfg: &AugmentConfig) -> Result<Vec<PatchRecord>> {
    let malignant = rotations(cfg.malignant_step_deg)?;
    let benign = rotations(cfg.benign_step_deg)?;
    let mut out = Vec::new();
    for r in records {
        if r.is_augmented || r.rotation_deg != 0.0 {
            return Err(Error::Config(format!(
                "record {}/{} is already augmented",
                r.patient_id, r.lesion_id
            )));
        }
        let (count, step) = match r.label {
            Label::Malignant => (malignant, cfg.malignant_step_deg),
            Label::Benign => (benign, cfg.benign_step_deg),
        };
        let background = border_mean(&r.image, PATCH_SIZE);
        for k in 0..count {
            let deg = k as f64 * step;
            let image = if k == 0 {
                r.image.clone()
            } else {
                rotate_bilinear(&r.image, PATCH_SIZE, deg, background)
            };
            out.push(PatchRecord {
                image,
                rotation_deg: deg,
                is_augmented: k != 0,
                ..r.clone()
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base(label: Label) -> PatchRecord {
        PatchRecord {
            image: (0..PATCH_SIZE * PATCH_SIZE)
                .map(|i| (i % 7) as f32 / 7.0)
                .collect(),
            label,
            patient_id: "p1".into(),
            lesion_id: "l1".into(),
            rotation_deg: 0.0,
            is_augmented: false,
        }
    }

    #[test]
    fn default_steps_give_eight_and_thirty_six() {
        let recs = augment(
            &[base(Label::Malignant), base(Label::Benign)],
            &AugmentConfig::default(),
        )
        .unwrap();
        assert_eq!(recs.len(), 44);
        assert_eq!(recs.iter().filter(|r| r.label == Label::Malignant).count(), 8);
        assert_eq!(recs[0].image, base(Label::Malignant).image);
        assert!(!recs[0].is_augmented);
        assert!(recs[1].is_augmented);
        assert_eq!(recs[1].rotation_deg, 45.0);
        assert!(recs.iter().all(|r| (0.0..360.0).contains(&r.rotation_deg)));
    }

    #[test]
    fn rejects_steps_not_dividing_360() {
        let cfg = AugmentConfig {
            malignant_step_deg: 7.0,
            ..AugmentConfig::default()
        };
        assert!(augment(&[base(Label::Benign)], &cfg).is_err());
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_already_augmented_input() {
        let mut r = base(Label::Benign);
        r.is_augmented = true;
        assert!(augment(&[r], &AugmentConfig::default()).is_err());
    }

    #[test]
    fn quarter_turn_of_symmetric_cross_is_identity() {
        let n = PATCH_SIZE;
        let mut img = vec![0.1f32; n * n];
        for i in 0..n {
            for t in 14..18 {
                img[t * n + i] = 0.9;
                img[i * n + t] = 0.9;
            }
        }
        let rotated = rotate_bilinear(&img, n, 90.0, 0.0);
        for (a, b) in rotated.iter().zip(&img) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn quarter_turn_moves_top_left_to_top_right() {
        let n = 4;
        let mut img = vec![0.0f32; n * n];
        img[0] = 1.0; // top-left
        let r = rotate_bilinear(&img, n, 90.0, 0.0);
        assert!((r[n - 1] - 1.0).abs() < 1e-6);
        assert!((r.iter().sum::<f32>() - 1.0).abs() < 1e-6);
    }
}
