//! Confusion matrices, per-class F1 and overall accuracy against a
//! (optionally boundary-eroded) reference.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rasters::palette::write_ppm;
use crate::rasters::{erode_labels, LabelMap, UNDEFINED};

/// Rows are reference classes, columns predicted classes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub classes: usize,
    pub counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self { classes, counts: vec![0; classes * classes] }
    }

    pub fn get(&self, reference: usize, predicted: usize) -> u64 {
        self.counts[reference * self.classes + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|i| self.get(i, i)).sum()
    }

    /// Reference count `C_i` per class.
    pub fn row_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|i| (0..self.classes).map(|j| self.get(i, j)).sum()).collect()
    }

    /// Predicted count `P_i` per class.
    pub fn col_sums(&self) -> Vec<u64> {
        (0..self.classes).map(|j| (0..self.classes).map(|i| self.get(i, j)).sum()).collect()
    }

    pub fn overall_accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::Dimension(format!("merging {}-class and {}-class matrices", self.classes, other.classes)));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        Ok(())
    }
}

/// Adds every pixel with a defined reference to `cm`.
pub fn accumulate(cm: &mut ConfusionMatrix, predicted: &LabelMap, reference: &LabelMap) -> Result<()> {
    if (predicted.height, predicted.width) != (reference.height, reference.width) {
        return Err(Error::Dimension(format!(
            "prediction is {}x{}, reference {}x{}",
            predicted.height, predicted.width, reference.height, reference.width
        )));
    }
    let k = cm.classes;
    for (&p, &r) in predicted.values.iter().zip(&reference.values) {
        if r == UNDEFINED {
            continue;
        }
        if r as usize >= k {
            return Err(Error::Label(format!("reference class {r} outside 0..{k}")));
        }
        if p as usize >= k {
            return Err(Error::Label(format!("predicted class {p} outside 0..{k}")));
        }
        cm.counts[r as usize * k + p as usize] += 1;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `None` when the class is absent from both reference and prediction.
    pub f1: Option<f64>,
    pub support: u64,
}

pub fn class_scores(cm: &ConfusionMatrix) -> Vec<ClassScores> {
    let rows = cm.row_sums();
    let cols = cm.col_sums();
    (0..cm.classes)
        .map(|i| {
            let (tp, c, p) = (cm.get(i, i), rows[i], cols[i]);
            let recall = (c > 0).then(|| tp as f64 / c as f64);
            let precision = (p > 0).then(|| tp as f64 / p as f64);
            let f1 = if c == 0 && p == 0 {
                None
            } else if tp == 0 {
                Some(0.0)
            } else {
                // Equal to 2 * precision * recall / (precision + recall).
                Some(2.0 * tp as f64 / (c + p) as f64)
            };
            ClassScores { precision, recall, f1, support: c }
        })
        .collect()
}

pub fn f1_scores(cm: &ConfusionMatrix) -> Vec<Option<f64>> {
    class_scores(cm).into_iter().map(|s| s.f1).collect()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalMetadata {
    pub model: Option<String>,
    pub dataset: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub per_class: Vec<ClassScores>,
    pub overall_accuracy: Option<f64>,
    /// Mean over classes with a defined F1.
    pub mean_f1: Option<f64>,
    /// Mean weighted by reference support.
    pub weighted_mean_f1: Option<f64>,
    pub confusion: ConfusionMatrix,
    pub eroded: bool,
    pub erode_radius: usize,
    pub metadata: EvalMetadata,
}

impl EvalReport {
    pub fn from_confusion(cm: ConfusionMatrix, classes: &[String], erode_radius: usize) -> Self {
        let per_class = class_scores(&cm);
        let defined: Vec<f64> = per_class.iter().filter_map(|s| s.f1).collect();
        let mean_f1 = (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64);
        let support: u64 = per_class.iter().filter(|s| s.f1.is_some()).map(|s| s.support).sum();
        let weighted_mean_f1 = (support > 0).then(|| {
            per_class.iter().filter_map(|s| s.f1.map(|f| f * s.support as f64)).sum::<f64>() / support as f64
        });
        Self {
            classes: class_names(classes, cm.classes),
            overall_accuracy: cm.overall_accuracy(),
            per_class,
            mean_f1,
            weighted_mean_f1,
            confusion: cm,
            eroded: erode_radius > 0,
            erode_radius,
            metadata: EvalMetadata::default(),
        }
    }

    pub fn f1(&self, class: usize) -> Option<f64> {
        self.per_class[class].f1
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Aligned plain-text table, percentages with two decimals.
    pub fn to_table(&self) -> String {
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:.2}", 100.0 * v));
        let name_w = self.classes.iter().map(|c| c.len()).max().unwrap_or(5).max(5);
        let mut out = String::new();
        let _ = writeln!(out, "{:<name_w$}  {:>9}  {:>9}  {:>9}  {:>10}", "class", "precision", "recall", "F1", "support");
        for (name, s) in self.classes.iter().zip(&self.per_class) {
            let _ = writeln!(
                out,
                "{:<name_w$}  {:>9}  {:>9}  {:>9}  {:>10}",
                name,
                pct(s.precision),
                pct(s.recall),
                pct(s.f1),
                s.support
            );
        }
        let _ = writeln!(out, "overall accuracy: {}", pct(self.overall_accuracy));
        let _ = writeln!(out, "mean F1: {}  (support-weighted: {})", pct(self.mean_f1), pct(self.weighted_mean_f1));
        let _ = writeln!(out, "reference eroded: {} (radius {})", self.eroded, self.erode_radius);
        out
    }
}

fn class_names(classes: &[String], k: usize) -> Vec<String> {
    (0..k).map(|i| classes.get(i).cloned().unwrap_or_else(|| format!("class_{i}"))).collect()
}

/// Erodes the reference by `erode_radius`, then scores `predicted` against it.
pub fn evaluate(
    predicted: &LabelMap,
    reference: &LabelMap,
    classes: &[String],
    erode_radius: usize,
) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(classes.len());
    accumulate(&mut cm, predicted, &erode_labels(reference, erode_radius))?;
    Ok(EvalReport::from_confusion(cm, classes, erode_radius))
}

/// Scores several prediction/reference pairs into one report.
pub fn evaluate_many<'a>(
    pairs: impl IntoIterator<Item = (&'a LabelMap, &'a LabelMap)>,
    classes: &[String],
    erode_radius: usize,
) -> Result<EvalReport> {
    let mut cm = ConfusionMatrix::new(classes.len());
    for (p, r) in pairs {
        accumulate(&mut cm, p, &erode_labels(r, erode_radius))?;
    }
    Ok(EvalReport::from_confusion(cm, classes, erode_radius))
}

const HEAT_CELL: usize = 24;
const HEAT_LOW: [f32; 3] = [235.0, 235.0, 235.0];
const HEAT_HIGH: [f32; 3] = [180.0, 20.0, 20.0];

/// Row-normalized confusion matrix as RGB cells running from light gray (0)
/// to red (1).
pub fn heat_map(cm: &ConfusionMatrix) -> (usize, Vec<u8>) {
    let k = cm.classes;
    let side = k * HEAT_CELL;
    let rows = cm.row_sums();
    let mut rgb = vec![0u8; side * side * 3];
    for y in 0..side {
        for x in 0..side {
            let (r, p) = (y / HEAT_CELL, x / HEAT_CELL);
            let v = if rows[r] == 0 { 0.0 } else { cm.get(r, p) as f32 / rows[r] as f32 };
            for c in 0..3 {
                rgb[(y * side + x) * 3 + c] = (HEAT_LOW[c] + v * (HEAT_HIGH[c] - HEAT_LOW[c])).round() as u8;
            }
        }
    }
    (side, rgb)
}

pub fn write_heat_map(cm: &ConfusionMatrix, path: &Path) -> Result<()> {
    let (side, rgb) = heat_map(cm);
    write_ppm(path, side, side, &rgb)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn names(k: usize) -> Vec<String> {
        (0..k).map(|i| format!("c{i}")).collect()
    }

    #[test]
    fn hand_counted_matrix() {
        let reference = LabelMap::new(3, 3, vec![0, 0, 1, 1, 1, 2, 2, 2, 255]).unwrap();
        let predicted = LabelMap::new(3, 3, vec![0, 1, 1, 1, 2, 2, 0, 2, 0]).unwrap();
        let mut cm = ConfusionMatrix::new(3);
        accumulate(&mut cm, &predicted, &reference).unwrap();
        assert_eq!(cm.counts, vec![1, 1, 0, 0, 2, 1, 1, 0, 2]);
        assert_eq!(cm.total(), 8);
    }

    #[test]
    fn f1_by_hand() {
        // Class 0: tp 2, reference count 4, predicted count 2.
        let mut cm = ConfusionMatrix::new(2);
        cm.counts = vec![2, 2, 0, 5];
        let s = &class_scores(&cm)[0];
        assert_eq!(s.recall, Some(0.5));
        assert_eq!(s.precision, Some(1.0));
        assert!((s.f1.unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn absent_class_is_null() {
        let mut cm = ConfusionMatrix::new(3);
        cm.counts = vec![4, 0, 0, 1, 3, 0, 0, 0, 0];
        let r = EvalReport::from_confusion(cm, &names(3), 0);
        assert_eq!(r.f1(2), None);
        let f0 = 2.0 * 4.0 / 9.0;
        let f1 = 2.0 * 3.0 / 7.0;
        assert!((r.mean_f1.unwrap() - (f0 + f1) / 2.0).abs() < 1e-12);
        assert!((r.weighted_mean_f1.unwrap() - (4.0 * f0 + 4.0 * f1) / 8.0).abs() < 1e-12);
    }

    #[test]
    fn zero_true_positives() {
        let mut cm = ConfusionMatrix::new(2);
        cm.counts = vec![0, 3, 0, 0];
        assert_eq!(f1_scores(&cm), vec![Some(0.0), Some(0.0)]);
    }

    #[test]
    fn out_of_range_class() {
        let a = LabelMap::new(1, 2, vec![0, 7]).unwrap();
        let b = LabelMap::new(1, 2, vec![0, 1]).unwrap();
        assert!(matches!(accumulate(&mut ConfusionMatrix::new(3), &a, &b), Err(Error::Label(_))));
        assert!(matches!(accumulate(&mut ConfusionMatrix::new(3), &b, &a), Err(Error::Label(_))));
    }

    #[test]
    fn heat_map_extremes() {
        let mut cm = ConfusionMatrix::new(2);
        cm.counts = vec![5, 0, 0, 0];
        let (side, rgb) = heat_map(&cm);
        assert_eq!(side, 48);
        assert_eq!(&rgb[..3], &[180, 20, 20]);
        assert_eq!(&rgb[(30 * side + 30) * 3..(30 * side + 30) * 3 + 3], &[235, 235, 235]);
    }
}
