//! Dataset directories: `manifest.json`, `samples.csv` and an optional
//! `groundtruth.csv`. Values are written with 17 significant digits so a
//! save/load round trip is bit-exact.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{LabeledSpectrum, NoiseDecomposition, SpectralDataset, Spectrum};
use crate::error::{NptError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.csv";
pub const GROUND_TRUTH_FILE: &str = "groundtruth.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub environment_id: String,
    #[serde(rename = "W")]
    pub bins: usize,
    pub classes: Vec<usize>,
    /// Sample count per class, keyed by class label.
    pub counts: BTreeMap<usize, usize>,
    pub seed: u64,
    pub normalized: bool,
    #[serde(default)]
    pub has_ground_truth: bool,
}

pub(crate) fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn parse_f64(s: &str, path: &Path) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| NptError::format(path, format!("not a number: {s:?}")))
}

fn parse_usize(s: &str, path: &Path) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| NptError::format(path, format!("not an integer: {s:?}")))
}

pub fn save_dataset(dataset: &SpectralDataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| NptError::io(dir, e))?;
    let mut counts = BTreeMap::new();
    for s in &dataset.samples {
        *counts.entry(s.class).or_insert(0) += 1;
    }
    let has_gt = dataset.samples.iter().all(|s| s.ground_truth.is_some()) && !dataset.is_empty();
    let manifest = DatasetManifest {
        environment_id: dataset.environment_id.clone(),
        bins: dataset.bins,
        classes: dataset.classes(),
        counts,
        seed: dataset.seed,
        normalized: dataset.normalized,
        has_ground_truth: has_gt,
    };
    let mpath = dir.join(MANIFEST_FILE);
    fs::write(&mpath, serde_json::to_string_pretty(&manifest)?).map_err(|e| NptError::io(&mpath, e))?;

    let spath = dir.join(SAMPLES_FILE);
    let mut w = csv::Writer::from_path(&spath)?;
    let mut header = vec!["class".to_string(), "concentration".into(), "sample_index".into()];
    header.extend((0..dataset.bins).map(|i| format!("v{i}")));
    w.write_record(&header)?;
    for s in &dataset.samples {
        let mut row = vec![
            s.class.to_string(),
            fmt_f64(s.concentration_mg_per_l),
            s.sample_index.to_string(),
        ];
        row.extend(s.spectrum.values().iter().map(|&v| fmt_f64(v)));
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| NptError::io(&spath, e))?;

    let gpath = dir.join(GROUND_TRUTH_FILE);
    if has_gt {
        let mut w = csv::Writer::from_path(&gpath)?;
        let mut header = vec!["sample_index".to_string(), "component".into()];
        header.extend((0..dataset.bins).map(|i| format!("v{i}")));
        w.write_record(&header)?;
        for s in &dataset.samples {
            let gt = s.ground_truth.as_ref().expect("checked");
            for (name, part) in [("X", &gt.signal), ("N", &gt.environmental), ("xi", &gt.baseline)] {
                let mut row = vec![s.sample_index.to_string(), name.to_string()];
                row.extend(part.values().iter().map(|&v| fmt_f64(v)));
                w.write_record(&row)?;
            }
        }
        w.flush().map_err(|e| NptError::io(&gpath, e))?;
    } else if gpath.exists() {
        fs::remove_file(&gpath).map_err(|e| NptError::io(&gpath, e))?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<SpectralDataset> {
    let mpath = dir.join(MANIFEST_FILE);
    if !mpath.exists() {
        return Err(NptError::Missing(mpath));
    }
    let text = fs::read_to_string(&mpath).map_err(|e| NptError::io(&mpath, e))?;
    let manifest: DatasetManifest =
        serde_json::from_str(&text).map_err(|e| NptError::format(&mpath, e.to_string()))?;
    let w = manifest.bins;
    if w == 0 {
        return Err(NptError::format(&mpath, "W must be positive"));
    }

    let spath = dir.join(SAMPLES_FILE);
    if !spath.exists() {
        return Err(NptError::Missing(spath));
    }
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&spath)?;
    let mut samples = Vec::new();
    for rec in reader.records() {
        let rec = rec?;
        if rec.len() != w + 3 {
            return Err(NptError::format(
                &spath,
                format!("row has {} values, manifest says W={w}", rec.len().saturating_sub(3)),
            ));
        }
        let values = rec.iter().skip(3).map(|v| parse_f64(v, &spath)).collect::<Result<Vec<_>>>()?;
        samples.push(LabeledSpectrum {
            spectrum: Spectrum::new(values)?,
            class: parse_usize(&rec[0], &spath)?,
            concentration_mg_per_l: parse_f64(&rec[1], &spath)?,
            environment_id: manifest.environment_id.clone(),
            sample_index: parse_usize(&rec[2], &spath)?,
            ground_truth: None,
        });
    }
    let mut counts = BTreeMap::new();
    for s in &samples {
        *counts.entry(s.class).or_insert(0usize) += 1;
    }
    if counts != manifest.counts {
        return Err(NptError::format(&spath, "class counts disagree with manifest"));
    }

    let gpath = dir.join(GROUND_TRUTH_FILE);
    if manifest.has_ground_truth {
        if !gpath.exists() {
            return Err(NptError::Missing(gpath));
        }
        let mut parts: BTreeMap<usize, [Option<Spectrum>; 3]> = BTreeMap::new();
        let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(&gpath)?;
        for rec in reader.records() {
            let rec = rec?;
            if rec.len() != w + 2 {
                return Err(NptError::format(&gpath, "ground-truth row length does not match W"));
            }
            let idx = parse_usize(&rec[0], &gpath)?;
            let slot = match &rec[1] {
                "X" => 0,
                "N" => 1,
                "xi" => 2,
                other => return Err(NptError::format(&gpath, format!("unknown component {other:?}"))),
            };
            let values = rec.iter().skip(2).map(|v| parse_f64(v, &gpath)).collect::<Result<Vec<_>>>()?;
            parts.entry(idx).or_default()[slot] = Some(Spectrum::new(values)?);
        }
        for s in &mut samples {
            let entry = parts
                .remove(&s.sample_index)
                .ok_or_else(|| NptError::format(&gpath, format!("no ground truth for sample {}", s.sample_index)))?;
            let [Some(signal), Some(environmental), Some(baseline)] = entry else {
                return Err(NptError::format(&gpath, format!("incomplete ground truth for sample {}", s.sample_index)));
            };
            s.ground_truth = Some(NoiseDecomposition {
                signal,
                environmental,
                baseline,
            });
        }
    }
    Ok(SpectralDataset {
        environment_id: manifest.environment_id,
        bins: w,
        samples,
        normalized: manifest.normalized,
        seed: manifest.seed,
    })
}
