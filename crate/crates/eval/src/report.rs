//! Per-video records and the CSV report.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;
use smite_core::LabelVideo;

use crate::annotations::load_annotations;
use crate::error::{EvalError, Result};
use crate::metrics::{contour_f, miou, per_segment};

#[derive(Debug, Clone, PartialEq)]
pub struct SegmentScore {
    pub segment: u8,
    pub iou: Option<f64>,
    pub f_measure: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalRecord {
    pub video: String,
    pub category: String,
    pub annotated: Vec<usize>,
    pub segments: Vec<SegmentScore>,
    pub miou: f64,
    pub f_measure: f64,
}

pub fn evaluate(
    video: &str,
    category: &str,
    pred: &LabelVideo,
    gt: &LabelVideo,
    annotated: &[usize],
    tolerance: f64,
) -> Result<EvalRecord> {
    let segments = per_segment(pred, gt, annotated, tolerance)?
        .into_iter()
        .map(|(segment, iou, f_measure)| SegmentScore {
            segment,
            iou,
            f_measure,
        })
        .collect();
    Ok(EvalRecord {
        video: video.to_string(),
        category: category.to_string(),
        annotated: annotated.to_vec(),
        segments,
        miou: miou(pred, gt, annotated)?,
        f_measure: contour_f(pred, gt, annotated, tolerance)?,
    })
}

/// `(category, mean mIoU, mean F)` per category in name order, then
/// `("all", …)` over every video.
pub fn category_means(records: &[EvalRecord]) -> Vec<(String, f64, f64)> {
    let mut groups: BTreeMap<&str, Vec<&EvalRecord>> = BTreeMap::new();
    for r in records {
        groups.entry(&r.category).or_default().push(r);
    }
    let mean = |rs: &[&EvalRecord]| {
        let n = rs.len() as f64;
        (
            rs.iter().map(|r| r.miou).sum::<f64>() / n,
            rs.iter().map(|r| r.f_measure).sum::<f64>() / n,
        )
    };
    let mut out: Vec<_> = groups
        .iter()
        .map(|(c, rs)| {
            let (m, f) = mean(rs);
            (c.to_string(), m, f)
        })
        .collect();
    if !records.is_empty() {
        let all: Vec<_> = records.iter().collect();
        let (m, f) = mean(&all);
        out.push(("all".into(), m, f));
    }
    out
}

#[derive(Serialize)]
struct Row<'a> {
    video: &'a str,
    category: &'a str,
    segment: String,
    miou: String,
    f_measure: String,
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| format!("{v:.6}"))
}

/// One row per segment and one `all` row per video, followed by `mean`
/// rows per category and overall.
pub fn write_report(records: &[EvalRecord], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for r in records {
        for s in &r.segments {
            w.serialize(Row {
                video: &r.video,
                category: &r.category,
                segment: s.segment.to_string(),
                miou: cell(s.iou),
                f_measure: cell(s.f_measure),
            })?;
        }
        w.serialize(Row {
            video: &r.video,
            category: &r.category,
            segment: "all".into(),
            miou: cell(Some(r.miou)),
            f_measure: cell(Some(r.f_measure)),
        })?;
    }
    for (category, m, f) in category_means(records) {
        w.serialize(Row {
            video: "mean",
            category: &category,
            segment: "all".into(),
            miou: cell(Some(m)),
            f_measure: cell(Some(f)),
        })?;
    }
    w.flush()?;
    Ok(())
}

fn has_pngs(dir: &Path) -> Result<bool> {
    for entry in std::fs::read_dir(dir)? {
        if entry?.path().extension().is_some_and(|e| e.eq_ignore_ascii_case("png")) {
            return Ok(true);
        }
    }
    Ok(false)
}

fn category_of(gt_dir: &Path) -> String {
    std::fs::read_to_string(gt_dir.join("category.txt"))
        .map(|s| s.trim().to_string())
        .ok()
        .filter(|s| !s.is_empty())
        .unwrap_or_else(|| "unknown".into())
}

fn evaluate_pair(name: &str, pred_dir: &Path, gt_dir: &Path, tolerance: f64) -> Result<EvalRecord> {
    let pred = LabelVideo::load_dir(pred_dir, u8::MAX)?;
    let ann = load_annotations(gt_dir, None, Some(pred.frames()))?;
    if ann.gt.frames() != pred.frames() {
        return Err(EvalError::ShapeMismatch(format!(
            "{name}: masks reach frame {} but the prediction has {} frames",
            ann.gt.frames() - 1,
            pred.frames()
        )));
    }
    let k = ann.gt.num_segments.max(pred.labels.iter().copied().max().unwrap_or(0));
    let gt = LabelVideo::new(ann.gt.labels, k)?;
    let pred = LabelVideo::new(pred.labels, k)?;
    evaluate(name, &category_of(gt_dir), &pred, &gt, &ann.annotated, tolerance)
}

/// Evaluates one video (both directories hold masks) or every
/// subdirectory of `gt_root` against the same-named one under
/// `pred_root`. Videos are scored in parallel and returned in name order.
/// A `category.txt` next to the ground-truth masks sets the category.
pub fn evaluate_dirs(pred_root: &Path, gt_root: &Path, tolerance: f64) -> Result<Vec<EvalRecord>> {
    if has_pngs(gt_root)? {
        let name = gt_root
            .file_name()
            .map_or_else(|| "video".into(), |n| n.to_string_lossy().into_owned());
        return Ok(vec![evaluate_pair(&name, pred_root, gt_root, tolerance)?]);
    }
    let mut names: Vec<(String, PathBuf)> = std::fs::read_dir(gt_root)?
        .filter_map(|e| e.ok())
        .filter(|e| e.path().is_dir())
        .map(|e| (e.file_name().to_string_lossy().into_owned(), e.path()))
        .collect();
    names.sort();
    names
        .par_iter()
        .map(|(name, gt_dir)| evaluate_pair(name, &pred_root.join(name), gt_dir, tolerance))
        .collect()
}
