use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use super::{FoldSplit, Label, PatchDataset, PatchRecord, PATCH_LEN};
use crate::error::{Error, Result};
use crate::sequencer::PATCH_SIZE;

/// Grayscale image with intensities scaled to `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<f32>,
}

fn pgm_tokens(bytes: &[u8], count: usize) -> std::result::Result<(Vec<String>, usize), String> {
    let mut tokens = Vec::new();
    let mut i = 0;
    while tokens.len() < count {
        while i < bytes.len() && bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if i < bytes.len() && bytes[i] == b'#' {
            while i < bytes.len() && bytes[i] != b'\n' {
                i += 1;
            }
            continue;
        }
        let start = i;
        while i < bytes.len() && !bytes[i].is_ascii_whitespace() {
            i += 1;
        }
        if start == i {
            return Err("truncated header".into());
        }
        tokens.push(String::from_utf8_lossy(&bytes[start..i]).into_owned());
    }
    Ok((tokens, i))
}

/// Parses binary (`P5`) or ASCII (`P2`) 8-bit PGM data.
pub fn read_pgm(bytes: &[u8]) -> std::result::Result<GrayImage, String> {
    let (header, end) = pgm_tokens(bytes, 4)?;
    let num = |s: &str| s.parse::<usize>().map_err(|_| format!("bad header field {s:?}"));
    let (width, height, maxval) = (num(&header[1])?, num(&header[2])?, num(&header[3])?);
    if width == 0 || height == 0 {
        return Err("empty image".into());
    }
    if maxval == 0 || maxval > 255 {
        return Err(format!("maxval {maxval} is not 8-bit"));
    }
    let n = width * height;
    let raw: Vec<usize> = match header[0].as_str() {
        "P5" => {
            let data = bytes.get(end + 1..end + 1 + n).ok_or("truncated pixel data")?;
            data.iter().map(|&b| b as usize).collect()
        }
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[end..]);
            let vals: std::result::Result<Vec<usize>, String> = text
                .split_ascii_whitespace()
                .take(n)
                .map(num)
                .collect();
            let vals = vals?;
            if vals.len() != n {
                return Err("truncated pixel data".into());
            }
            vals
        }
        other => return Err(format!("unsupported PGM magic {other:?}")),
    };
    if raw.iter().any(|&v| v > maxval) {
        return Err("pixel exceeds maxval".into());
    }
    Ok(GrayImage {
        width,
        height,
        pixels: raw.iter().map(|&v| v as f32 / maxval as f32).collect(),
    })
}

/// Writes a binary 8-bit PGM from `[0, 1]` intensities.
pub fn write_pgm(path: &Path, width: usize, height: usize, pixels: &[f32]) -> Result<()> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(
        pixels
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Bilinear resampling to `size x size` (pixel-centre aligned).
fn resample(img: &GrayImage, size: usize) -> Vec<f32> {
    if img.width == size && img.height == size {
        return img.pixels.clone();
    }
    let sx = img.width as f64 / size as f64;
    let sy = img.height as f64 / size as f64;
    let mut out = Vec::with_capacity(size * size);
    for y in 0..size {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (img.height - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(img.height - 1);
        let ty = fy - y0 as f64;
        for x in 0..size {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (img.width - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(img.width - 1);
            let tx = fx - x0 as f64;
            let at = |xx: usize, yy: usize| img.pixels[yy * img.width + xx] as f64;
            let v = (1.0 - ty) * ((1.0 - tx) * at(x0, y0) + tx * at(x1, y0))
                + ty * ((1.0 - tx) * at(x0, y1) + tx * at(x1, y1));
            out.push(v.clamp(0.0, 1.0) as f32);
        }
    }
    out
}

/// Loads `index.csv` (`filename, patient_id, lesion_id, label`) and the PGM
/// files it names from `dir`. Every problem is reported; any problem fails
/// the load.
pub fn load_patches(dir: &Path) -> Result<Vec<PatchRecord>> {
    let index = dir.join("index.csv");
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(&index)
        .map_err(|e| Error::Input {
            path: index.clone(),
            reason: e.to_string(),
        })?;

    let mut records = Vec::new();
    let mut problems = Vec::new();
    let mut listed = BTreeSet::new();
    for (line, row) in reader.records().enumerate() {
        let row = match row {
            Ok(r) => r,
            Err(e) => {
                problems.push(format!("index line {}: {e}", line + 1));
                continue;
            }
        };
        if line == 0 && row.get(0) == Some("filename") {
            continue;
        }
        if row.len() != 4 {
            problems.push(format!(
                "index line {}: expected 4 columns, found {}",
                line + 1,
                row.len()
            ));
            continue;
        }
        let file = &row[0];
        listed.insert(file.to_string());
        let label = match row[3].parse::<u64>().ok().and_then(Label::from_index) {
            Some(l) => l,
            None => {
                problems.push(format!("{file}: label {:?} is not 0 or 1", &row[3]));
                continue;
            }
        };
        let image = fs::read(dir.join(file))
            .map_err(|e| e.to_string())
            .and_then(|b| read_pgm(&b));
        match image {
            Ok(img) => records.push(PatchRecord {
                image: resample(&img, PATCH_SIZE),
                label,
                patient_id: row[1].to_string(),
                lesion_id: row[2].to_string(),
                rotation_deg: 0.0,
                is_augmented: false,
            }),
            Err(e) => problems.push(format!("{file}: unreadable image: {e}")),
        }
    }

    if let Ok(entries) = fs::read_dir(dir) {
        let mut unlisted: Vec<String> = entries
            .filter_map(|e| e.ok())
            .map(|e| e.file_name().to_string_lossy().into_owned())
            .filter(|n| n.ends_with(".pgm") && !listed.contains(n))
            .collect();
        unlisted.sort();
        problems.extend(unlisted.into_iter().map(|n| format!("{n}: missing index entry")));
    }

    if !problems.is_empty() {
        return Err(Error::Input {
            path: dir.to_path_buf(),
            reason: problems.join("; "),
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(records)
}

const MANIFEST_FIELDS: [&str; 7] = [
    "record",
    "patient_id",
    "lesion_id",
    "label",
    "rotation_deg",
    "is_augmented",
    "fold",
];

/// Writes every record with its fold index, followed by its 1024 pixels.
pub fn write_manifest(path: &Path, data: &PatchDataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Input {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let mut header: Vec<String> = MANIFEST_FIELDS.iter().map(|s| s.to_string()).collect();
    header.extend((0..PATCH_LEN).map(|i| format!("px{i}")));
    w.write_record(&header)?;
    for (i, r) in data.records.iter().enumerate() {
        let fold = data.split.fold_of(&r.patient_id).expect("validated dataset");
        let mut row = vec![
            i.to_string(),
            r.patient_id.clone(),
            r.lesion_id.clone(),
            r.label.index().to_string(),
            r.rotation_deg.to_string(),
            r.is_augmented.to_string(),
            fold.to_string(),
        ];
        row.extend(r.image.iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a manifest written by [`write_manifest`].
pub fn load_manifest(path: &Path) -> Result<PatchDataset> {
    let bad = |reason: String| Error::Input {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| bad(e.to_string()))?;
    let mut records = Vec::new();
    let mut assignment = std::collections::BTreeMap::new();
    for (line, row) in reader.records().enumerate() {
        let row = row?;
        let at = |msg: &str| bad(format!("row {}: {msg}", line + 1));
        if row.len() != MANIFEST_FIELDS.len() + PATCH_LEN {
            return Err(at("wrong column count"));
        }
        let label = row[3]
            .parse::<u64>()
            .ok()
            .and_then(Label::from_index)
            .ok_or_else(|| at("label must be 0 or 1"))?;
        let fold: usize = row[6].parse().map_err(|_| at("bad fold"))?;
        let image = row
            .iter()
            .skip(MANIFEST_FIELDS.len())
            .map(|v| v.parse::<f32>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| at("bad pixel value"))?;
        let patient_id = row[1].to_string();
        if let Some(prev) = assignment.insert(patient_id.clone(), fold) {
            if prev != fold {
                return Err(at("patient appears in two folds"));
            }
        }
        records.push(PatchRecord {
            image,
            label,
            patient_id,
            lesion_id: row[2].to_string(),
            rotation_deg: row[4].parse().map_err(|_| at("bad rotation"))?,
            is_augmented: row[5].parse().map_err(|_| at("bad is_augmented"))?,
        });
    }
    let n_folds = assignment.values().max().map_or(0, |m| m + 1);
    PatchDataset::new(
        records,
        FoldSplit {
            n_folds,
            assignment,
        },
    )
}
