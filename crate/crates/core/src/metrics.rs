//! Confusion-matrix metrics for pixel labelings: multi-class MCC, accuracy
//! and intersection over union.

use std::fmt::Write as _;
use std::ops::{Add, AddAssign};

use crate::error::{Error, Result};
use crate::labels::{ClassId, ClassMembershipMap, NUM_CLASSES};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    k: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            counts: vec![0; k * k],
        }
    }

    pub fn from_counts(k: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != k * k {
            return Err(Error::InvalidInput(format!(
                "{k}x{k} confusion matrix needs {} counts",
                k * k
            )));
        }
        Ok(Self { k, counts })
    }

    /// Pixel-wise comparison of two label maps of equal size.
    pub fn accumulate(truth: &ClassMembershipMap, prediction: &ClassMembershipMap) -> Result<Self> {
        let mut cm = Self::new(NUM_CLASSES);
        cm.add_maps(truth, prediction)?;
        Ok(cm)
    }

    pub fn add_maps(&mut self, truth: &ClassMembershipMap, prediction: &ClassMembershipMap) -> Result<()> {
        if truth.dims() != prediction.dims() {
            return Err(Error::InvalidInput(format!(
                "label maps differ in size: {:?} vs {:?}",
                truth.dims(),
                prediction.dims()
            )));
        }
        for (&t, &p) in truth
            .labels()
            .as_slice()
            .iter()
            .zip(prediction.labels().as_slice())
        {
            self.record(t as usize, p as usize);
        }
        Ok(())
    }

    #[inline]
    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth * self.k + predicted] += 1;
    }

    pub fn classes(&self) -> usize {
        self.k
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.k + predicted]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.k).map(|i| self.get(i, i)).sum()
    }

    /// Number of pixels whose true class is `k`.
    pub fn true_total(&self, k: usize) -> u64 {
        (0..self.k).map(|j| self.get(k, j)).sum()
    }

    /// Number of pixels predicted as `k`.
    pub fn predicted_total(&self, k: usize) -> u64 {
        (0..self.k).map(|i| self.get(i, k)).sum()
    }

    pub fn tp(&self, k: usize) -> u64 {
        self.get(k, k)
    }

    pub fn fp(&self, k: usize) -> u64 {
        self.predicted_total(k) - self.tp(k)
    }

    pub fn fn_(&self, k: usize) -> u64 {
        self.true_total(k) - self.tp(k)
    }

    pub fn tn(&self, k: usize) -> u64 {
        self.total() - self.tp(k) - self.fp(k) - self.fn_(k)
    }

    pub fn accuracy(&self) -> f64 {
        let s = self.total();
        if s == 0 {
            0.0
        } else {
            self.trace() as f64 / s as f64
        }
    }

    /// `TP / (TP + FP + FN)`; `None` when the class appears in neither truth
    /// nor prediction.
    pub fn iou(&self, k: usize) -> Option<f64> {
        let denom = self.tp(k) + self.fp(k) + self.fn_(k);
        (denom > 0).then(|| self.tp(k) as f64 / denom as f64)
    }

    /// Mean IU over the classes for which it is defined.
    pub fn iou_global(&self) -> Option<f64> {
        let defined: Vec<f64> = (0..self.k).filter_map(|k| self.iou(k)).collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    /// Multi-class Matthews correlation coefficient; 0 for a degenerate
    /// denominator.
    pub fn mcc(&self) -> f64 {
        let s = self.total() as f64;
        let c = self.trace() as f64;
        let mut pt = 0.0;
        let mut pp = 0.0;
        let mut tt = 0.0;
        for k in 0..self.k {
            let p = self.predicted_total(k) as f64;
            let t = self.true_total(k) as f64;
            pt += p * t;
            pp += p * p;
            tt += t * t;
        }
        let denom = ((s * s - pp) * (s * s - tt)).sqrt();
        if denom == 0.0 || !denom.is_finite() {
            0.0
        } else {
            ((c * s - pt) / denom).clamp(-1.0, 1.0)
        }
    }

    pub fn report(&self) -> MetricsReport {
        MetricsReport {
            mcc: self.mcc(),
            accuracy: self.accuracy(),
            iou_per_class: (0..self.k).map(|k| self.iou(k)).collect(),
            iou_global: self.iou_global(),
        }
    }
}

impl AddAssign<&ConfusionMatrix> for ConfusionMatrix {
    fn add_assign(&mut self, rhs: &ConfusionMatrix) {
        assert_eq!(self.k, rhs.k, "confusion matrices of different size");
        for (a, b) in self.counts.iter_mut().zip(&rhs.counts) {
            *a += b;
        }
    }
}

impl Add for ConfusionMatrix {
    type Output = ConfusionMatrix;
    fn add(mut self, rhs: ConfusionMatrix) -> ConfusionMatrix {
        self += &rhs;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mcc: f64,
    pub accuracy: f64,
    pub iou_per_class: Vec<Option<f64>>,
    pub iou_global: Option<f64>,
}

impl MetricsReport {
    /// `metric,class,value` rows; undefined IU values are left empty.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,class,value\n");
        let _ = writeln!(s, "mcc,all,{}", self.mcc);
        let _ = writeln!(s, "acc,all,{}", self.accuracy);
        for (k, iou) in self.iou_per_class.iter().enumerate() {
            let name = ClassId::from_index(k)
                .map(|c| c.name().to_string())
                .unwrap_or_else(|| k.to_string());
            match iou {
                Some(v) => {
                    let _ = writeln!(s, "iou,{name},{v}");
                }
                None => {
                    let _ = writeln!(s, "iou,{name},");
                }
            }
        }
        match self.iou_global {
            Some(v) => {
                let _ = writeln!(s, "iou_global,all,{v}");
            }
            None => s.push_str("iou_global,all,\n"),
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::image::Grid2;
    use proptest::prelude::*;

    fn map(rows: &[&[ClassId]]) -> ClassMembershipMap {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        ClassMembershipMap::from_labels(Grid2::from_fn(w, h, |r, c| rows[r][c] as u8)).unwrap()
    }

    fn binary_mcc(tp: f64, fp: f64, fn_: f64, tn: f64) -> f64 {
        let d = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
        if d == 0.0 {
            0.0
        } else {
            (tp * tn - fp * fn_) / d
        }
    }

    #[test]
    fn identical_maps_are_diagonal() {
        use ClassId::*;
        let m = map(&[&[Road, Sky, Vehicle], &[Road, Road, Background]]);
        let cm = ConfusionMatrix::accumulate(&m, &m).unwrap();
        assert_eq!(cm.trace(), cm.total());
        assert_eq!(cm.mcc(), 1.0);
        assert_eq!(cm.iou(Road as usize), Some(1.0));
    }

    #[test]
    fn hand_counted_two_by_two() {
        use ClassId::*;
        let truth = map(&[&[Road, Road], &[Vehicle, Vehicle]]);
        let pred = map(&[&[Road, Vehicle], &[Vehicle, Vehicle]]);
        let cm = ConfusionMatrix::accumulate(&truth, &pred).unwrap();
        assert_eq!(cm.get(1, 1), 1);
        assert_eq!(cm.get(1, 2), 1);
        assert_eq!(cm.get(2, 2), 2);
        assert_eq!(cm.total(), 4);
    }

    #[test]
    fn empty_and_mismatched_maps() {
        let e = ClassMembershipMap::filled(0, 0, ClassId::Road);
        let cm = ConfusionMatrix::accumulate(&e, &e).unwrap();
        assert_eq!(cm.total(), 0);
        assert_eq!(cm.mcc(), 0.0);
        let a = ClassMembershipMap::filled(2, 2, ClassId::Road);
        let b = ClassMembershipMap::filled(3, 2, ClassId::Road);
        assert!(ConfusionMatrix::accumulate(&a, &b).is_err());
    }

    #[test]
    fn iou_eight_of_twelve() {
        // road: 8 hits, 2 false alarms, 2 misses
        let mut cm = ConfusionMatrix::new(2);
        for _ in 0..8 {
            cm.record(1, 1);
        }
        for _ in 0..2 {
            cm.record(0, 1);
            cm.record(1, 0);
        }
        for _ in 0..5 {
            cm.record(0, 0);
        }
        assert!((cm.iou(1).unwrap() - 8.0 / 12.0).abs() < 1e-15);
        let absent = ConfusionMatrix::new(3);
        assert_eq!(absent.iou(2), None);
        assert_eq!(absent.iou_global(), None);
    }

    #[test]
    fn binary_reference_value() {
        let cm = ConfusionMatrix::from_counts(2, vec![2, 1, 0, 3]).unwrap();
        let expected = (2.0 * 3.0 - 1.0 * 0.0) / (2.0f64 * 3.0 * 3.0 * 4.0).sqrt();
        assert!((cm.mcc() - expected).abs() < 1e-12);
        assert!((cm.mcc() - 0.7071).abs() < 1e-4);
    }

    #[test]
    fn single_predicted_class_is_zero() {
        let cm = ConfusionMatrix::from_counts(3, vec![0, 4, 0, 0, 5, 0, 0, 2, 0]).unwrap();
        assert_eq!(cm.mcc(), 0.0);
    }

    #[test]
    fn csv_report_lists_every_class() {
        let cm = ConfusionMatrix::from_counts(
            NUM_CLASSES,
            (0..36).map(|i| if i % 7 == 0 { 3 } else { 0 }).collect(),
        )
        .unwrap();
        let csv = cm.report().to_csv();
        assert!(csv.starts_with("metric,class,value\nmcc,all,1\n"));
        assert_eq!(csv.lines().count(), 1 + 2 + NUM_CLASSES + 1);
    }

    proptest! {
        #[test]
        fn two_class_mcc_equals_binary_formula(c in proptest::collection::vec(0u64..1000, 4)) {
            let cm = ConfusionMatrix::from_counts(2, c.clone()).unwrap();
            // class 1 positive: tp = c11, fn = c10, fp = c01, tn = c00
            let b = binary_mcc(c[3] as f64, c[1] as f64, c[2] as f64, c[0] as f64);
            prop_assert!((cm.mcc() - b).abs() <= 1e-12);
        }

        #[test]
        fn mcc_is_permutation_invariant(c in proptest::collection::vec(0u64..50, 9), perm in Just([2usize, 0, 1])) {
            let cm = ConfusionMatrix::from_counts(3, c.clone()).unwrap();
            let mut p = ConfusionMatrix::new(3);
            for i in 0..3 { for j in 0..3 {
                p.counts[perm[i] * 3 + perm[j]] = c[i * 3 + j];
            }}
            prop_assert!((cm.mcc() - p.mcc()).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&cm.mcc()));
            prop_assert!((0.0..=1.0).contains(&cm.accuracy()));
        }
    }
}
