use std::collections::HashSet;

use rand::seq::index;

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};
use crate::rng::rng_from_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubsampleMode {
    /// n rows drawn uniformly without replacement, in draw order.
    Rows(usize),
    /// k decision-makers drawn uniformly without replacement; all of their
    /// rows are kept in original order.
    DecisionMakers(usize),
}

pub fn subsample(data: &ChoiceDataset, mode: SubsampleMode, seed: u64) -> Result<ChoiceDataset> {
    let mut rng = rng_from_seed(seed);
    match mode {
        SubsampleMode::Rows(n) => {
            if n == 0 || n > data.len() {
                return Err(PumError::Data(format!("cannot draw {n} rows from {} observations", data.len())));
            }
            let picked = index::sample(&mut rng, data.len(), n).into_vec();
            data.select(&picked)
        }
        SubsampleMode::DecisionMakers(k) => {
            let ids = data.ids().ok_or_else(|| PumError::Data("decision-maker sampling needs ids".into()))?;
            let mut seen = HashSet::new();
            let distinct: Vec<u64> = ids.iter().copied().filter(|id| seen.insert(*id)).collect();
            if k == 0 || k > distinct.len() {
                return Err(PumError::Data(format!("cannot draw {k} decision-makers from {}", distinct.len())));
            }
            let chosen: HashSet<u64> =
                index::sample(&mut rng, distinct.len(), k).into_iter().map(|i| distinct[i]).collect();
            let rows: Vec<usize> = (0..data.len()).filter(|&i| chosen.contains(&ids[i])).collect();
            data.select(&rows)
        }
    }
}
