//! Scan directories: `scans/NNNNNN.prs` or `scans/NNNNNN.csv`, plus
//! `ground_truth.csv` and per-frame `labels/NNNNNN.txt` for synthetic data.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::format::{load_point_scan, load_polar_scan, save_point_scan, save_polar_scan, save_trajectory};
use super::synth::{BinLabel, FrameLabels, PointLabel, SyntheticSequence};
use super::Scan;
use crate::error::{Error, Result};

pub const SCANS_DIR: &str = "scans";
pub const LABELS_DIR: &str = "labels";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.csv";

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn point_label(l: PointLabel) -> &'static str {
    match l {
        PointLabel::Static => "static",
        PointLabel::Mover => "mover",
        PointLabel::Clutter => "clutter",
    }
}

fn bin_code(l: BinLabel) -> char {
    match l {
        BinLabel::Empty => '.',
        BinLabel::Landmark => 'L',
        BinLabel::Mover => 'M',
        BinLabel::Speckle => 's',
        BinLabel::Ghost => 'g',
        BinLabel::Saturation => 'S',
    }
}

/// Writes a synthetic sequence into `dir`.
///
/// Point labels are one word per detection line; polar labels are one row of
/// single-character codes per azimuth (`.` empty, `L` landmark, `M` mover,
/// `s` speckle, `g` ghost, `S` saturation).
pub fn save_sequence(seq: &SyntheticSequence, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let scans_dir = dir.join(SCANS_DIR);
    let labels_dir = dir.join(LABELS_DIR);
    create_dir(&scans_dir)?;
    create_dir(&labels_dir)?;
    for (k, scan) in seq.scans.iter().enumerate() {
        match scan {
            Scan::Polar(p) => save_polar_scan(p, scans_dir.join(format!("{k:06}.prs")))?,
            Scan::Points(p) => save_point_scan(p, scans_dir.join(format!("{k:06}.csv")))?,
        }
    }
    for (k, labels) in seq.labels.iter().enumerate() {
        let path = labels_dir.join(format!("{k:06}.txt"));
        let mut text = String::new();
        match labels {
            FrameLabels::Points(l) => {
                for l in l {
                    text.push_str(point_label(*l));
                    text.push('\n');
                }
            }
            FrameLabels::Polar(l) => {
                let width = match &seq.scans[k] {
                    Scan::Polar(p) => p.range_bin_count.max(1),
                    Scan::Points(_) => l.len().max(1),
                };
                for row in l.chunks(width) {
                    text.extend(row.iter().map(|b| bin_code(*b)));
                    text.push('\n');
                }
            }
        }
        let mut f = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        f.write_all(text.as_bytes()).map_err(|e| Error::io(&path, e))?;
    }
    save_trajectory(&seq.ground_truth, dir.join(GROUND_TRUTH_FILE))
}

/// Scan files of a directory (its `scans/` subdirectory when present), sorted
/// by file name.
pub fn scan_files(dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let sub = dir.join(SCANS_DIR);
    let root = if sub.is_dir() { sub } else { dir.to_path_buf() };
    let entries = fs::read_dir(&root).map_err(|e| Error::io(&root, e))?;
    let mut files = Vec::new();
    for e in entries {
        let path = e.map_err(|e| Error::io(&root, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && (ext == "prs" || ext == "csv") {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Loads every scan of a directory in file-name order.
///
/// All files must be of one kind and timestamps strictly increasing.
pub fn load_scan_dir(dir: impl AsRef<Path>) -> Result<Vec<Scan>> {
    let dir = dir.as_ref();
    let files = scan_files(dir)?;
    if files.is_empty() {
        return Err(Error::InsufficientInput(format!(
            "{}: no .prs or .csv scan files",
            dir.display()
        )));
    }
    let polar = files[0].extension().is_some_and(|e| e == "prs");
    let mut scans = Vec::with_capacity(files.len());
    for path in &files {
        let is_polar = path.extension().is_some_and(|e| e == "prs");
        if is_polar != polar {
            return Err(Error::malformed(path, "mixed polar (.prs) and point (.csv) scans"));
        }
        let scan = if is_polar {
            Scan::Polar(load_polar_scan(path)?)
        } else {
            Scan::Points(load_point_scan(path)?)
        };
        if let Some(prev) = scans.last().map(Scan::timestamp) {
            if scan.timestamp() <= prev {
                return Err(Error::NonMonotonicTime {
                    path: path.clone(),
                    timestamp: scan.timestamp(),
                });
            }
        }
        scans.push(scan);
    }
    Ok(scans)
}
