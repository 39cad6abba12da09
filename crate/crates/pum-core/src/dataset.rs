//! Choice observations and datasets.
//!
//! Features are stored contiguously, observation-major, each observation a
//! row-major K×d block (row i holds the attributes of alternative i).

use serde::{Deserialize, Serialize};

use crate::error::{PumError, Result};

/// One choice situation with owned features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub k: usize,
    pub d: usize,
    /// Row-major K×d feature matrix.
    pub x: Vec<f64>,
    pub y: usize,
}

impl Observation {
    pub fn new(k: usize, d: usize, x: Vec<f64>, y: usize) -> Result<Self> {
        ObservationRef::validate(k, d, &x, y)?;
        Ok(Self { k, d, x, y })
    }

    pub fn view(&self) -> ObservationRef<'_> {
        ObservationRef { k: self.k, d: self.d, x: &self.x, y: self.y }
    }
}

/// Borrowed view of an observation.
#[derive(Debug, Clone, Copy)]
pub struct ObservationRef<'a> {
    pub k: usize,
    pub d: usize,
    pub x: &'a [f64],
    pub y: usize,
}

impl<'a> ObservationRef<'a> {
    fn validate(k: usize, d: usize, x: &[f64], y: usize) -> Result<()> {
        if k == 0 || d == 0 {
            return Err(PumError::InvalidParameter("K and d must be >= 1".into()));
        }
        if x.len() != k * d {
            return Err(PumError::DimensionMismatch { expected: k * d, got: x.len() });
        }
        if y >= k {
            return Err(PumError::InvalidParameter(format!("choice {y} out of range for K = {k}")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(PumError::NonFinite("features"));
        }
        Ok(())
    }

    /// Attributes of alternative `i`.
    #[inline]
    pub fn row(&self, i: usize) -> &'a [f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    /// V = x β.
    #[inline]
    pub fn utilities_into(&self, beta: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.k) {
            *o = self.row(i).iter().zip(beta).map(|(a, b)| a * b).sum();
        }
    }

    pub fn utilities(&self, beta: &[f64]) -> Vec<f64> {
        let mut v = vec![0.0; self.k];
        self.utilities_into(beta, &mut v);
        v
    }

    /// out += scale · xᵀ w.
    #[inline]
    pub fn add_transpose_times(&self, w: &[f64], scale: f64, out: &mut [f64]) {
        for (i, &wi) in w.iter().enumerate().take(self.k) {
            let s = scale * wi;
            if s != 0.0 {
                for (o, a) in out.iter_mut().zip(self.row(i)) {
                    *o += s * a;
                }
            }
        }
    }

    /// Frobenius norm of the feature matrix.
    pub fn frobenius_norm(&self) -> f64 {
        self.x.iter().map(|a| a * a).sum::<f64>().sqrt()
    }

    pub fn to_owned(&self) -> Observation {
        Observation { k: self.k, d: self.d, x: self.x.to_vec(), y: self.y }
    }
}

/// N observations sharing K alternatives and d attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChoiceDataset {
    k: usize,
    d: usize,
    features: Vec<f64>,
    choices: Vec<usize>,
    ids: Option<Vec<u64>>,
}

impl ChoiceDataset {
    pub fn new(k: usize, d: usize, features: Vec<f64>, choices: Vec<usize>, ids: Option<Vec<u64>>) -> Result<Self> {
        let n = choices.len();
        if n == 0 {
            return Err(PumError::Data("dataset must contain at least one observation".into()));
        }
        if features.len() != n * k * d {
            return Err(PumError::DimensionMismatch { expected: n * k * d, got: features.len() });
        }
        if let Some(ids) = &ids {
            if ids.len() != n {
                return Err(PumError::DimensionMismatch { expected: n, got: ids.len() });
            }
        }
        for (i, &y) in choices.iter().enumerate() {
            ObservationRef::validate(k, d, &features[i * k * d..(i + 1) * k * d], y)?;
        }
        Ok(Self { k, d, features, choices, ids })
    }

    pub fn from_observations(obs: &[Observation], ids: Option<Vec<u64>>) -> Result<Self> {
        let first =
            obs.first().ok_or_else(|| PumError::Data("dataset must contain at least one observation".into()))?;
        let (k, d) = (first.k, first.d);
        let mut features = Vec::with_capacity(obs.len() * k * d);
        let mut choices = Vec::with_capacity(obs.len());
        for o in obs {
            if o.k != k || o.d != d {
                return Err(PumError::Data("observations disagree on K or d".into()));
            }
            features.extend_from_slice(&o.x);
            choices.push(o.y);
        }
        Self::new(k, d, features, choices, ids)
    }

    pub fn len(&self) -> usize {
        self.choices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.choices.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn choices(&self) -> &[usize] {
        &self.choices
    }

    pub fn ids(&self) -> Option<&[u64]> {
        self.ids.as_deref()
    }

    #[inline]
    pub fn observation(&self, n: usize) -> ObservationRef<'_> {
        let block = self.k * self.d;
        ObservationRef { k: self.k, d: self.d, x: &self.features[n * block..(n + 1) * block], y: self.choices[n] }
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = ObservationRef<'_>> + '_ {
        (0..self.len()).map(move |n| self.observation(n))
    }

    /// Rows at `indices`, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let block = self.k * self.d;
        let mut features = Vec::with_capacity(indices.len() * block);
        let mut choices = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(PumError::Data(format!("row index {i} out of range")));
            }
            features.extend_from_slice(&self.features[i * block..(i + 1) * block]);
            choices.push(self.choices[i]);
        }
        let ids = self.ids.as_ref().map(|ids| indices.iter().map(|&i| ids[i]).collect());
        Self::new(self.k, self.d, features, choices, ids)
    }

    /// Largest per-observation Frobenius norm, an upper bound on max_n ‖x_n‖₂.
    pub fn max_feature_norm(&self) -> f64 {
        self.iter().map(|o| o.frobenius_norm()).fold(0.0, f64::max)
    }

    /// (1/N) Σ_n x_nᵀ x_n as a row-major d×d matrix.
    pub fn feature_gram(&self) -> Vec<f64> {
        let d = self.d;
        let mut m = vec![0.0; d * d];
        for o in self.iter() {
            for i in 0..self.k {
                let r = o.row(i);
                for a in 0..d {
                    for b in 0..d {
                        m[a * d + b] += r[a] * r[b];
                    }
                }
            }
        }
        let n = self.len() as f64;
        m.iter_mut().for_each(|x| *x /= n);
        m
    }
}
