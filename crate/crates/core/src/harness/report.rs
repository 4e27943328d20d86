use std::path::Path;

use serde::Serialize;

use super::{ConfusionCounts, EvolutionReport, GenerationRecord};
use crate::error::{Error, Result};
use crate::sequencer::POSITIONS_PER_FILTER;

pub const SUMMARY_COLUMNS: [&str; 11] = [
    "generation",
    "anf",
    "rsl_table",
    "rsl_last_layer",
    "sensitivity_mean",
    "sensitivity_std",
    "specificity_mean",
    "specificity_std",
    "accuracy_mean",
    "accuracy_std",
    "time_s",
];

const FOLD_COLUMNS: [&str; 14] = [
    "generation",
    "fold",
    "alive_filters_total",
    "rsl_table",
    "rsl_last_layer",
    "active_synapses",
    "tp",
    "fp",
    "tn",
    "fn",
    "sensitivity",
    "specificity",
    "accuracy",
    "forward_time_s",
];

/// Per-generation aggregate across folds. Means and standard deviations
/// skip folds where the metric is undefined; the std is the sample
/// (n - 1) estimate and 0 for a single fold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationSummary {
    pub generation: usize,
    pub n_folds: usize,
    /// Mean alive filters across folds, rounded to one decimal.
    pub anf: f64,
    pub rsl_table: f64,
    pub rsl_last_layer: f64,
    pub sensitivity_mean: Option<f64>,
    pub sensitivity_std: Option<f64>,
    pub specificity_mean: Option<f64>,
    pub specificity_std: Option<f64>,
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub time_s: Option<f64>,
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn mean_std(values: &[f64]) -> Option<(f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Some((mean, std))
}

/// Aggregates fold rows into one summary row per generation, in
/// generation order.
pub fn summarize(records: &[GenerationRecord]) -> Vec<GenerationSummary> {
    let mut generations: Vec<usize> = records.iter().map(|r| r.generation).collect();
    generations.sort_unstable();
    generations.dedup();
    generations
        .into_iter()
        .map(|g| {
            let rows: Vec<&GenerationRecord> = records.iter().filter(|r| r.generation == g).collect();
            let collect = |f: &dyn Fn(&GenerationRecord) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter_map(|r| f(r)).collect()
            };
            let alive = collect(&|r| Some(r.alive_filters_total as f64));
            let last = collect(&|r| Some(r.rsl_last_layer as f64));
            let sens = mean_std(&collect(&|r| r.sensitivity));
            let spec = mean_std(&collect(&|r| r.specificity));
            let (acc_mean, acc_std) =
                mean_std(&collect(&|r| Some(r.accuracy))).expect("generation has rows");
            let times = collect(&|r| r.forward_time_s);
            let anf = round1(mean_std(&alive).expect("generation has rows").0);
            GenerationSummary {
                generation: g,
                n_folds: rows.len(),
                anf,
                rsl_table: round1(anf * POSITIONS_PER_FILTER as f64),
                rsl_last_layer: round1(mean_std(&last).expect("generation has rows").0),
                sensitivity_mean: sens.map(|s| s.0),
                sensitivity_std: sens.map(|s| s.1),
                specificity_mean: spec.map(|s| s.0),
                specificity_std: spec.map(|s| s.1),
                accuracy_mean: acc_mean,
                accuracy_std: acc_std,
                time_s: (times.len() == rows.len()).then(|| mean_std(&times).map(|t| t.0)).flatten(),
            }
        })
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NaN".to_string(), |x| x.to_string())
}

fn parse_opt(s: &str) -> Option<f64> {
    match s {
        "" | "NaN" => None,
        _ => s.parse().ok(),
    }
}

pub fn write_summary_csv(path: &Path, summary: &[GenerationSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    for s in summary {
        w.write_record([
            s.generation.to_string(),
            format!("{:.1}", s.anf),
            format!("{:.1}", s.rsl_table),
            format!("{:.1}", s.rsl_last_layer),
            opt(s.sensitivity_mean),
            opt(s.sensitivity_std),
            opt(s.specificity_mean),
            opt(s.specificity_std),
            s.accuracy_mean.to_string(),
            s.accuracy_std.to_string(),
            s.time_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_fold_csv(path: &Path, records: &[GenerationRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(FOLD_COLUMNS)?;
    for r in records {
        let c = &r.confusion;
        w.write_record([
            r.generation.to_string(),
            r.fold.to_string(),
            r.alive_filters_total.to_string(),
            r.rsl_table.to_string(),
            r.rsl_last_layer.to_string(),
            r.active_synapses.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.tn.to_string(),
            c.fn_.to_string(),
            opt(r.sensitivity),
            opt(r.specificity),
            r.accuracy.to_string(),
            r.forward_time_s.map(|t| t.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_fold_csv(path: &Path) -> Result<Vec<GenerationRecord>> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().ne(FOLD_COLUMNS) {
        return Err(Error::Input {
            path: path.to_path_buf(),
            reason: format!("unexpected header {:?}", headers.iter().collect::<Vec<_>>()),
        });
    }
    let mut out = Vec::new();
    for (line, row) in r.records().enumerate() {
        let row = row?;
        let bad = |what: &str| Error::Input {
            path: path.to_path_buf(),
            reason: format!("row {}: bad {what}", line + 2),
        };
        let int = |i: usize| -> Result<u64> { row[i].parse().map_err(|_| bad(FOLD_COLUMNS[i])) };
        out.push(GenerationRecord {
            generation: int(0)? as usize,
            fold: int(1)? as usize,
            alive_filters_total: int(2)? as usize,
            rsl_table: int(3)? as usize,
            rsl_last_layer: int(4)? as usize,
            active_synapses: int(5)?,
            confusion: ConfusionCounts {
                tp: int(6)?,
                fp: int(7)?,
                tn: int(8)?,
                fn_: int(9)?,
            },
            sensitivity: parse_opt(&row[10]),
            specificity: parse_opt(&row[11]),
            accuracy: row[12].parse().map_err(|_| bad("accuracy"))?,
            forward_time_s: parse_opt(&row[13]),
        });
    }
    Ok(out)
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'static str,
    config: &'a super::EvolutionRunConfig,
    seed_scheme: &'static str,
    provenance: &'a serde_json::Value,
    hardware: Hardware,
    files: Vec<&'static str>,
}

#[derive(Serialize)]
struct Hardware {
    cpu_model: Option<String>,
    logical_cpus: usize,
    os: &'static str,
    arch: &'static str,
}

fn hardware() -> Hardware {
    let cpu_model = std::fs::read_to_string("/proc/cpuinfo").ok().and_then(|s| {
        s.lines()
            .find(|l| l.starts_with("model name"))
            .and_then(|l| l.split(':').nth(1))
            .map(|m| m.trim().to_string())
    });
    Hardware {
        cpu_model,
        logical_cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
        os: std::env::consts::OS,
        arch: std::env::consts::ARCH,
    }
}

/// Writes `folds.csv`, `summary.csv`, `baseline.csv` (when present) and
/// `run_manifest.json` into `out_dir`. Output is a pure function of the
/// report, so re-emitting gives identical bytes.
pub fn emit_report(report: &EvolutionReport, out_dir: &Path) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    write_fold_csv(&out_dir.join("folds.csv"), &report.records)?;
    write_summary_csv(&out_dir.join("summary.csv"), &report.summary)?;
    let mut files = vec!["folds.csv", "summary.csv"];
    if let Some(baseline) = &report.baseline {
        write_fold_csv(&out_dir.join("baseline.csv"), baseline)?;
        files.push("baseline.csv");
    }
    files.push("run_manifest.json");
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config: &report.config,
        seed_scheme: "derive_seed(master_seed, fold, generation, purpose), ChaCha8 streams",
        provenance: &report.provenance,
        hardware: hardware(),
        files,
    };
    let path = out_dir.join("run_manifest.json");
    let text = serde_json::to_string_pretty(&manifest)?;
    std::fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}
