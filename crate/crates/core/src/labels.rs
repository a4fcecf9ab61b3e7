//! Scene classes and per-pixel class membership maps.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::image::{decode_pgm_raw, encode_pgm, Grid2};

pub const NUM_CLASSES: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum ClassId {
    Background = 0,
    Road = 1,
    Vehicle = 2,
    Sky = 3,
    Vru = 4,
    Infrastructure = 5,
}

impl ClassId {
    pub const ALL: [ClassId; NUM_CLASSES] = [
        ClassId::Background,
        ClassId::Road,
        ClassId::Vehicle,
        ClassId::Sky,
        ClassId::Vru,
        ClassId::Infrastructure,
    ];

    pub fn from_index(i: usize) -> Option<ClassId> {
        Self::ALL.get(i).copied()
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassId::Background => "background",
            ClassId::Road => "road",
            ClassId::Vehicle => "vehicle",
            ClassId::Sky => "sky",
            ClassId::Vru => "vru",
            ClassId::Infrastructure => "infrastructure",
        }
    }

    /// Other road users whose pixels may hide the road border.
    pub fn is_road_user(self) -> bool {
        matches!(self, ClassId::Vehicle | ClassId::Vru)
    }
}

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ClassId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        ClassId::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown class `{s}`")))
    }
}

/// Per-pixel class labels, optionally with the per-class probability maps
/// they were derived from.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassMembershipMap {
    labels: Grid2<u8>,
    probabilities: Option<Vec<Grid2<f32>>>,
}

impl ClassMembershipMap {
    pub fn from_labels(labels: Grid2<u8>) -> Result<Self> {
        if let Some(bad) = labels.as_slice().iter().find(|&&l| l as usize >= NUM_CLASSES) {
            return Err(Error::InvalidInput(format!("label {bad} out of range 0..=5")));
        }
        Ok(Self {
            labels,
            probabilities: None,
        })
    }

    pub fn filled(width: usize, height: usize, class: ClassId) -> Self {
        Self {
            labels: Grid2::filled(width, height, class as u8),
            probabilities: None,
        }
    }

    /// Labels every pixel with the argmax class (lowest index wins ties).
    pub fn from_probabilities(probabilities: Vec<Grid2<f32>>) -> Result<Self> {
        if probabilities.len() != NUM_CLASSES {
            return Err(Error::InvalidInput(format!(
                "expected {NUM_CLASSES} probability maps, got {}",
                probabilities.len()
            )));
        }
        let (h, w) = probabilities[0].dims();
        if probabilities.iter().any(|p| p.dims() != (h, w)) {
            return Err(Error::InvalidInput("probability maps differ in size".into()));
        }
        let labels = Grid2::from_fn(w, h, |r, c| {
            let mut best = 0;
            for k in 1..NUM_CLASSES {
                if *probabilities[k].get(r, c) > *probabilities[best].get(r, c) {
                    best = k;
                }
            }
            best as u8
        });
        Ok(Self {
            labels,
            probabilities: Some(probabilities),
        })
    }

    pub fn width(&self) -> usize {
        self.labels.width()
    }

    pub fn height(&self) -> usize {
        self.labels.height()
    }

    pub fn dims(&self) -> (usize, usize) {
        self.labels.dims()
    }

    #[inline]
    pub fn class_at(&self, row: usize, col: usize) -> ClassId {
        ClassId::ALL[*self.labels.get(row, col) as usize]
    }

    pub fn set_class(&mut self, row: usize, col: usize, class: ClassId) {
        self.labels.set(row, col, class as u8);
        self.probabilities = None;
    }

    pub fn labels(&self) -> &Grid2<u8> {
        &self.labels
    }

    pub fn probabilities(&self) -> Option<&[Grid2<f32>]> {
        self.probabilities.as_deref()
    }

    pub fn count(&self, class: ClassId) -> usize {
        self.labels
            .as_slice()
            .iter()
            .filter(|&&l| l == class as u8)
            .count()
    }

    pub fn load_pgm(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let (raw, _) = decode_pgm_raw(&bytes, path)?;
        if raw.as_slice().iter().any(|&v| v as usize >= NUM_CLASSES) {
            return Err(Error::parse(path, "label values must lie in 0..=5"));
        }
        Self::from_labels(raw.map(|&v| v as u8))
    }

    pub fn to_pgm(&self) -> Vec<u8> {
        encode_pgm(&self.labels)
    }

    pub fn save_pgm(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_pgm()).map_err(|e| Error::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argmax_labels() {
        let mut probs: Vec<Grid2<f32>> = (0..NUM_CLASSES)
            .map(|_| Grid2::filled(2, 1, 0.0f32))
            .collect();
        probs[1].set(0, 0, 0.7);
        probs[0].set(0, 0, 0.3);
        probs[4].set(0, 1, 1.0);
        let m = ClassMembershipMap::from_probabilities(probs).unwrap();
        assert_eq!(m.class_at(0, 0), ClassId::Road);
        assert_eq!(m.class_at(0, 1), ClassId::Vru);
    }

    #[test]
    fn names_round_trip() {
        for c in ClassId::ALL {
            assert_eq!(c.name().parse::<ClassId>().unwrap(), c);
        }
        assert!(ClassMembershipMap::from_labels(Grid2::filled(1, 1, 6u8)).is_err());
    }

    #[test]
    fn pgm_round_trip_keeps_raw_labels() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("l.pgm");
        let m = ClassMembershipMap::from_labels(Grid2::from_fn(4, 3, |r, c| ((r + c) % 6) as u8))
            .unwrap();
        m.save_pgm(&p).unwrap();
        assert_eq!(ClassMembershipMap::load_pgm(&p).unwrap(), m);
    }
}
