use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functional::cmp_f64;

/// Observations on a totally ordered covariate. Repeated covariate values are
/// merged into one point that carries all of its responses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainSample {
    z: Vec<f64>,
    groups: Vec<Vec<f64>>,
}

impl ChainSample {
    /// Sort by covariate and merge ties.
    pub fn from_pairs(z: &[f64], y: &[f64]) -> Result<Self> {
        if z.len() != y.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                actual: y.len(),
            });
        }
        if z.is_empty() {
            return Err(Error::EmptyInput);
        }
        if z.iter().chain(y).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observations must be finite".into()));
        }
        let mut pairs: Vec<(f64, f64)> = z.iter().copied().zip(y.iter().copied()).collect();
        // Stable sort keeps the input order of responses within a tie.
        pairs.sort_by(|a, b| cmp_f64(&a.0, &b.0));
        let mut zs: Vec<f64> = Vec::new();
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for (zi, yi) in pairs {
            match zs.last() {
                Some(&last) if last == zi => groups.last_mut().unwrap().push(yi),
                _ => {
                    zs.push(zi);
                    groups.push(vec![yi]);
                }
            }
        }
        Ok(ChainSample { z: zs, groups })
    }

    /// Build from already aggregated points; `z` must be strictly increasing.
    pub fn from_groups(z: Vec<f64>, groups: Vec<Vec<f64>>) -> Result<Self> {
        if z.len() != groups.len() {
            return Err(Error::DimensionMismatch {
                expected: z.len(),
                actual: groups.len(),
            });
        }
        if z.is_empty() {
            return Err(Error::EmptyInput);
        }
        if z.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidParameter("covariates must be strictly increasing".into()));
        }
        if groups.iter().any(|g| g.is_empty()) {
            return Err(Error::InvalidParameter("every covariate needs an observation".into()));
        }
        if z.iter().chain(groups.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("observations must be finite".into()));
        }
        Ok(ChainSample { z, groups })
    }

    /// One observation per covariate `0, 1, ..., n-1`.
    pub fn from_responses(y: &[f64]) -> Result<Self> {
        let z: Vec<f64> = (0..y.len()).map(|i| i as f64).collect();
        Self::from_pairs(&z, y)
    }

    /// Number of distinct covariate points.
    pub fn len(&self) -> usize {
        self.z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.z.is_empty()
    }

    /// Total number of observations, counting multiplicities.
    pub fn n_obs(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    pub fn z(&self) -> &[f64] {
        &self.z
    }

    pub fn groups(&self) -> &[Vec<f64>] {
        &self.groups
    }

    pub fn multiplicity(&self, i: usize) -> usize {
        self.groups[i].len()
    }

    pub fn multiplicities(&self) -> Vec<usize> {
        self.groups.iter().map(Vec::len).collect()
    }

    /// Subsample on a contiguous range of covariate points.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start >= range.end || range.end > self.len() {
            return Err(Error::Range {
                start: range.start,
                end: range.end,
                len: self.len(),
            });
        }
        Ok(ChainSample {
            z: self.z[range.clone()].to_vec(),
            groups: self.groups[range].to_vec(),
        })
    }

    /// All `(z, y)` observation pairs, in covariate order.
    pub fn pairs(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.z
            .iter()
            .zip(&self.groups)
            .flat_map(|(&z, g)| g.iter().map(move |&y| (z, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ties_are_merged_and_sorted() {
        let s = ChainSample::from_pairs(&[2.0, 1.0, 2.0, 0.5], &[10.0, 20.0, 30.0, 40.0]).unwrap();
        assert_eq!(s.z(), &[0.5, 1.0, 2.0]);
        assert_eq!(s.groups(), &[vec![40.0], vec![20.0], vec![10.0, 30.0]]);
        assert_eq!(s.n_obs(), 4);
        assert_eq!(s.multiplicities(), vec![1, 1, 2]);
    }

    #[test]
    fn rejects_malformed_input() {
        assert_eq!(ChainSample::from_pairs(&[], &[]), Err(Error::EmptyInput));
        assert!(ChainSample::from_pairs(&[1.0], &[1.0, 2.0]).is_err());
        assert!(ChainSample::from_pairs(&[f64::NAN], &[1.0]).is_err());
        assert!(ChainSample::from_groups(vec![1.0, 1.0], vec![vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn slicing() {
        let s = ChainSample::from_responses(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.slice(1..3).unwrap().groups(), &[vec![1.0], vec![2.0]]);
        assert!(s.slice(2..2).is_err());
        assert!(s.slice(1..4).is_err());
    }
}
