use rand::Rng;
use serde::{Deserialize, Serialize};

use super::density::{DensitySlot, NUM_SLOTS};
use crate::error::{Error, Result};

const SUM_TOLERANCE: f64 = 1e-9;

/// Per-primitive categorical distributions over the density slots.
///
/// The JSON form is an array with one 100-element probability vector per
/// primitive, so an externally trained model can supply it directly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct DensityPrior {
    probs: Vec<Vec<f64>>,
}

impl DensityPrior {
    pub fn new(probs: Vec<Vec<f64>>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::domain("prior has no primitives"));
        }
        for (k, p) in probs.iter().enumerate() {
            if p.len() != NUM_SLOTS {
                return Err(Error::domain(format!(
                    "prior row {k} has {} entries, expected {NUM_SLOTS}",
                    p.len()
                )));
            }
            if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
                return Err(Error::domain(format!("prior row {k} has a negative entry")));
            }
            let sum: f64 = p.iter().sum();
            if (sum - 1.0).abs() > SUM_TOLERANCE {
                return Err(Error::domain(format!("prior row {k} sums to {sum}")));
            }
        }
        Ok(DensityPrior { probs })
    }

    pub fn uniform(num_primitives: usize) -> Self {
        DensityPrior {
            probs: vec![vec![1.0 / NUM_SLOTS as f64; NUM_SLOTS]; num_primitives],
        }
    }

    pub fn one_hot(slots: &[DensitySlot]) -> Self {
        DensityPrior {
            probs: slots
                .iter()
                .map(|s| {
                    let mut row = vec![0.0; NUM_SLOTS];
                    row[s.index()] = 1.0;
                    row
                })
                .collect(),
        }
    }

    /// Uniform over the listed slots for every primitive.
    pub fn uniform_over(num_primitives: usize, support: &[DensitySlot]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::domain("empty prior support"));
        }
        let mut row = vec![0.0; NUM_SLOTS];
        for s in support {
            row[s.index()] += 1.0 / support.len() as f64;
        }
        Self::new(vec![row; num_primitives])
    }

    pub fn num_primitives(&self) -> usize {
        self.probs.len()
    }

    pub fn probabilities(&self, primitive: usize) -> &[f64] {
        &self.probs[primitive]
    }

    /// Draw one slot vector by inverse-CDF sampling, one uniform per primitive.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<DensitySlot> {
        self.probs
            .iter()
            .map(|row| {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut last_positive = 0;
                for (i, p) in row.iter().enumerate() {
                    if *p > 0.0 {
                        last_positive = i;
                        acc += p;
                        if u < acc {
                            return DensitySlot::from_index(i).unwrap();
                        }
                    }
                }
                DensitySlot::from_index(last_positive).unwrap()
            })
            .collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|source| Error::Json {
            context: "density prior".into(),
            source,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("priors always serialize")
    }
}

impl TryFrom<Vec<Vec<f64>>> for DensityPrior {
    type Error = Error;

    fn try_from(probs: Vec<Vec<f64>>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<DensityPrior> for Vec<Vec<f64>> {
    fn from(p: DensityPrior) -> Self {
        p.probs
    }
}
