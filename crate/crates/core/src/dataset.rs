use std::collections::BTreeMap;

use crate::augment::ClassSets;
use crate::error::{FdgError, Result};
use crate::linalg::SampleMatrix;
use crate::ClassId;

/// Labelled samples of one dataset, one column per sample.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    labels: Vec<ClassId>,
    samples: SampleMatrix,
}

impl EmbeddingSet {
    pub fn new(labels: Vec<ClassId>, samples: SampleMatrix) -> Result<Self> {
        if labels.len() != samples.len() {
            return Err(FdgError::LabelCountMismatch {
                labels: labels.len(),
                samples: samples.len(),
            });
        }
        Ok(Self { labels, samples })
    }

    /// Concatenates class sets in ascending class order.
    pub fn from_class_sets(sets: &ClassSets) -> Result<Self> {
        let dim = match sets.values().next() {
            Some(m) => m.dim(),
            None => return Err(FdgError::InvalidShape("no classes".into())),
        };
        let mut labels = Vec::new();
        let mut data = Vec::new();
        for (&class, m) in sets {
            if m.dim() != dim {
                return Err(FdgError::DimensionMismatch {
                    expected: dim,
                    found: m.dim(),
                });
            }
            labels.extend(std::iter::repeat_n(class, m.len()));
            data.extend_from_slice(m.as_slice());
        }
        let n = labels.len();
        Self::new(labels, SampleMatrix::from_sample_major(dim, n, data)?)
    }

    pub fn labels(&self) -> &[ClassId] {
        &self.labels
    }

    pub fn samples(&self) -> &SampleMatrix {
        &self.samples
    }

    pub fn dim(&self) -> usize {
        self.samples.dim()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn counts(&self) -> BTreeMap<ClassId, usize> {
        let mut counts = BTreeMap::new();
        for &l in &self.labels {
            *counts.entry(l).or_insert(0) += 1;
        }
        counts
    }

    /// Splits the samples by label, keeping their relative order.
    pub fn by_class(&self) -> ClassSets {
        let mut idx: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
        for (i, &l) in self.labels.iter().enumerate() {
            idx.entry(l).or_default().push(i);
        }
        idx.into_iter()
            .map(|(c, i)| (c, self.samples.select_columns(&i)))
            .collect()
    }

    pub fn concat(&self, other: &EmbeddingSet) -> Result<EmbeddingSet> {
        let samples = self.samples.concat(&other.samples)?;
        let mut labels = self.labels.clone();
        labels.extend_from_slice(&other.labels);
        EmbeddingSet::new(labels, samples)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_and_rejoin() {
        let m = SampleMatrix::from_sample_major(1, 4, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let set = EmbeddingSet::new(vec![5, 2, 5, 2], m).unwrap();
        let by = set.by_class();
        assert_eq!(by[&2].as_slice(), &[2.0, 4.0]);
        assert_eq!(by[&5].as_slice(), &[1.0, 3.0]);
        assert_eq!(set.counts(), BTreeMap::from([(2, 2), (5, 2)]));
        let back = EmbeddingSet::from_class_sets(&by).unwrap();
        assert_eq!(back.labels(), &[2, 2, 5, 5]);
        assert_eq!(back.samples().as_slice(), &[2.0, 4.0, 1.0, 3.0]);
    }

    #[test]
    fn label_count_checked() {
        let m = SampleMatrix::from_sample_major(1, 2, vec![1.0, 2.0]).unwrap();
        assert!(matches!(
            EmbeddingSet::new(vec![0], m),
            Err(FdgError::LabelCountMismatch {
                labels: 1,
                samples: 2
            })
        ));
    }
}
