//! Seeded tuning/evaluation splits.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SEEDS: [u64; 10] = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub tuning_fraction: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// Keep the positive/negative ratio equal on both sides.
    #[serde(default = "default_stratify")]
    pub stratify: bool,
}

fn default_seeds() -> Vec<u64> {
    DEFAULT_SEEDS.to_vec()
}

fn default_stratify() -> bool {
    true
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            tuning_fraction: 0.5,
            seeds: default_seeds(),
            stratify: true,
        }
    }
}

impl SplitSpec {
    pub fn new(tuning_fraction: f64, seeds: Vec<u64>, stratify: bool) -> Result<Self> {
        let spec = Self {
            tuning_fraction,
            seeds,
            stratify,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_fraction(self.tuning_fraction)?;
        if self.seeds.is_empty() {
            return Err(Error::Parameter("split spec needs at least one seed".into()));
        }
        let distinct: BTreeSet<_> = self.seeds.iter().collect();
        if distinct.len() != self.seeds.len() {
            return Err(Error::Parameter(format!("split seeds must be distinct, got {:?}", self.seeds)));
        }
        Ok(())
    }
}

fn check_fraction(f: f64) -> Result<()> {
    if f > 0.0 && f < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("tuning fraction must lie in (0, 1), got {f}")))
    }
}

/// Positions (not ids) into the split dataset, each side sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub seed: u64,
    pub tuning: Vec<usize>,
    pub evaluation: Vec<usize>,
}

impl Split {
    /// Both sides are disjoint and together cover `0..n`.
    pub fn check_partition(&self, n: usize) -> Result<()> {
        let mut seen = vec![false; n];
        for &i in self.tuning.iter().chain(&self.evaluation) {
            if i >= n || seen[i] {
                return Err(Error::Protocol(format!("split {} reuses or overruns position {i}", self.seed)));
            }
            seen[i] = true;
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::Protocol(format!("split {} leaves positions unassigned", self.seed)));
        }
        Ok(())
    }
}

/// Splits `0..strata.len()`. With `stratify`, each stratum (value of the
/// flag) contributes `round(fraction · size)` samples to the tuning side;
/// otherwise `round(fraction · n)` samples are drawn overall.
pub fn make_split(strata: &[bool], fraction: f64, seed: u64, stratify: bool) -> Result<Split> {
    check_fraction(fraction)?;
    let n = strata.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tuning = Vec::new();
    let mut evaluation = Vec::new();
    let groups: Vec<Vec<usize>> = if stratify {
        [true, false]
            .iter()
            .map(|flag| (0..n).filter(|&i| strata[i] == *flag).collect())
            .collect()
    } else {
        vec![(0..n).collect()]
    };
    for mut group in groups {
        group.shuffle(&mut rng);
        let take = (fraction * group.len() as f64).round() as usize;
        tuning.extend_from_slice(&group[..take]);
        evaluation.extend_from_slice(&group[take..]);
    }
    if tuning.is_empty() || evaluation.is_empty() {
        return Err(Error::Parameter(format!(
            "tuning fraction {fraction} leaves an empty side for {n} samples"
        )));
    }
    tuning.sort_unstable();
    evaluation.sort_unstable();
    Ok(Split {
        seed,
        tuning,
        evaluation,
    })
}

/// One split per seed of `spec`; `strata` are the stratification flags
/// (correctness or membership).
pub fn make_splits(strata: &[bool], spec: &SplitSpec) -> Result<Vec<Split>> {
    spec.validate()?;
    let min_size = (2.0 / spec.tuning_fraction.min(1.0 - spec.tuning_fraction)).ceil() as usize;
    if strata.len() < min_size {
        return Err(Error::Parameter(format!(
            "{} samples are too few for tuning fraction {} (need at least {min_size})",
            strata.len(),
            spec.tuning_fraction
        )));
    }
    spec.seeds
        .iter()
        .map(|&seed| {
            let split = make_split(strata, spec.tuning_fraction, seed, spec.stratify)?;
            split.check_partition(strata.len())?;
            Ok(split)
        })
        .collect()
}
