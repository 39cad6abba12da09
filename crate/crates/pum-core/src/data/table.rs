//! Wide-format CSV: one row per choice situation, one block of attribute
//! columns per alternative.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataset::ChoiceDataset;
use crate::error::{PumError, Result};

/// Columns describing one alternative.
///
/// Attribute entries are products of factors joined by `*`, where a factor is
/// a numeric literal, a column name, or `(1-COLUMN)`. A plain column name is
/// the common case; `TRAIN_CO*(1-GA)` zeroes the cost for pass holders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlternativeColumns {
    pub name: String,
    /// Value of the choice column that selects this alternative.
    pub code: String,
    pub attributes: Vec<String>,
    #[serde(default)]
    pub availability: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub alternatives: Vec<AlternativeColumns>,
    pub choice_column: String,
    #[serde(default)]
    pub id_column: Option<String>,
}

impl CsvSchema {
    /// Layout written by [`write_csv`]: optional `id`, `choice` holding the
    /// 0-based alternative index, then `a{i}_x{j}` for every alternative i and
    /// attribute j.
    pub fn generic(k: usize, d: usize, with_ids: bool) -> Self {
        Self {
            alternatives: (0..k)
                .map(|i| AlternativeColumns {
                    name: format!("a{i}"),
                    code: i.to_string(),
                    attributes: (0..d).map(|j| format!("a{i}_x{j}")).collect(),
                    availability: None,
                })
                .collect(),
            choice_column: "choice".into(),
            id_column: with_ids.then(|| "id".into()),
        }
    }

    /// Swissmetro layout with alternative-specific constants for TRAIN and
    /// CAR (SM is the reference), travel time, cost (zero for GA holders on
    /// TRAIN and SM) and headway. The utility model is a reconstruction of
    /// the customary one, not a published ground truth.
    pub fn swissmetro() -> Self {
        let alt = |name: &str, code: &str, attrs: [&str; 5], av: &str| AlternativeColumns {
            name: name.into(),
            code: code.into(),
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            availability: Some(av.into()),
        };
        Self {
            alternatives: vec![
                alt("TRAIN", "1", ["1", "0", "TRAIN_TT", "TRAIN_CO*(1-GA)", "TRAIN_HE"], "TRAIN_AV"),
                alt("SM", "2", ["0", "0", "SM_TT", "SM_CO*(1-GA)", "SM_HE"], "SM_AV"),
                alt("CAR", "3", ["0", "1", "CAR_TT", "CAR_CO", "0"], "CAR_AV"),
            ],
            choice_column: "CHOICE".into(),
            id_column: Some("ID".into()),
        }
    }

    pub fn k(&self) -> usize {
        self.alternatives.len()
    }

    pub fn d(&self) -> usize {
        self.alternatives.first().map_or(0, |a| a.attributes.len())
    }

    fn validate(&self) -> Result<()> {
        if self.alternatives.is_empty() {
            return Err(PumError::Data("schema declares no alternatives".into()));
        }
        let d = self.d();
        if d == 0 || self.alternatives.iter().any(|a| a.attributes.len() != d) {
            return Err(PumError::Data("every alternative needs the same nonzero number of attributes".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoadOptions {
    /// Drop rows where any declared availability column is 0.
    pub filter_unavailable: bool,
    /// Standardize each attribute position across alternatives and rows.
    pub standardize: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self { filter_unavailable: true, standardize: false }
    }
}

/// Per-attribute affine map x ↦ (x − mean)/sd applied at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl Scaler {
    /// Coefficients on the raw attributes equivalent to `beta` on the
    /// standardized ones. The mean shift is common to all alternatives and
    /// cancels in the choice probabilities.
    pub fn unscale_beta(&self, beta: &[f64]) -> Vec<f64> {
        beta.iter().zip(&self.sd).map(|(b, s)| b / s).collect()
    }

    pub fn transform(&self, x: &[f64], out: &mut [f64]) {
        let d = self.mean.len();
        for (i, (o, v)) in out.iter_mut().zip(x).enumerate() {
            *o = (v - self.mean[i % d]) / self.sd[i % d];
        }
    }
}

#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub data: ChoiceDataset,
    pub dropped_unavailable: usize,
    pub dropped_invalid_choice: usize,
    pub scaler: Option<Scaler>,
}

impl LoadedDataset {
    pub fn dropped(&self) -> usize {
        self.dropped_unavailable + self.dropped_invalid_choice
    }
}

enum Factor {
    Const(f64),
    Col(usize),
    OneMinus(usize),
}

struct Term(Vec<Factor>);

impl Term {
    fn parse(expr: &str, header: &csv::StringRecord) -> Result<Self> {
        let col = |name: &str| {
            header.iter().position(|h| h.trim() == name).ok_or_else(|| PumError::MissingColumn(name.to_string()))
        };
        let mut factors = Vec::new();
        for raw in expr.split('*') {
            let f = raw.trim();
            if let Ok(c) = f.parse::<f64>() {
                factors.push(Factor::Const(c));
            } else if let Some(inner) = f.strip_prefix('(').and_then(|s| s.strip_suffix(')')) {
                let name = inner
                    .trim()
                    .strip_prefix('1')
                    .and_then(|s| s.trim_start().strip_prefix('-'))
                    .ok_or_else(|| PumError::Data(format!("unsupported attribute factor `{f}`")))?;
                factors.push(Factor::OneMinus(col(name.trim())?));
            } else {
                factors.push(Factor::Col(col(f)?));
            }
        }
        Ok(Term(factors))
    }

    fn eval(&self, rec: &csv::StringRecord, row: usize, header: &csv::StringRecord) -> Result<f64> {
        let mut acc = 1.0;
        for f in &self.0 {
            acc *= match *f {
                Factor::Const(c) => c,
                Factor::Col(j) => cell(rec, j, row, header)?,
                Factor::OneMinus(j) => 1.0 - cell(rec, j, row, header)?,
            };
        }
        Ok(acc)
    }
}

fn cell(rec: &csv::StringRecord, j: usize, row: usize, header: &csv::StringRecord) -> Result<f64> {
    let raw = rec.get(j).unwrap_or("").trim();
    raw.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| PumError::BadCell {
        row,
        column: header[j].to_string(),
        value: raw.to_string(),
    })
}

fn codes_match(cell: &str, code: &str) -> bool {
    match (cell.parse::<f64>(), code.parse::<f64>()) {
        (Ok(a), Ok(b)) => a == b,
        _ => cell == code,
    }
}

/// Reads a wide-format CSV. Rows with an undeclared choice value, or (when
/// filtering) an unavailable alternative, are dropped and counted. Row
/// indices in errors count data rows from 1.
pub fn load_csv(path: &Path, schema: &CsvSchema, opts: LoadOptions) -> Result<LoadedDataset> {
    schema.validate()?;
    let (k, d) = (schema.k(), schema.d());
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header.iter().position(|h| h.trim() == name).ok_or_else(|| PumError::MissingColumn(name.to_string()))
    };
    let choice_col = find(&schema.choice_column)?;
    let id_col = schema.id_column.as_deref().map(find).transpose()?;
    let mut terms = Vec::with_capacity(k * d);
    let mut avail = Vec::with_capacity(k);
    for alt in &schema.alternatives {
        for expr in &alt.attributes {
            terms.push(Term::parse(expr, &header)?);
        }
        avail.push(alt.availability.as_deref().map(find).transpose()?);
    }

    let mut features = Vec::new();
    let mut choices = Vec::new();
    let mut ids = Vec::new();
    let (mut dropped_unavailable, mut dropped_invalid_choice) = (0, 0);
    let mut rec = csv::StringRecord::new();
    let mut row = 0;
    while rdr.read_record(&mut rec)? {
        row += 1;
        let choice_raw = rec.get(choice_col).unwrap_or("").trim();
        let Some(y) = schema.alternatives.iter().position(|a| codes_match(choice_raw, a.code.trim())) else {
            dropped_invalid_choice += 1;
            continue;
        };
        if opts.filter_unavailable {
            let mut all_available = true;
            for j in avail.iter().flatten() {
                if cell(&rec, *j, row, &header)? == 0.0 {
                    all_available = false;
                }
            }
            if !all_available {
                dropped_unavailable += 1;
                continue;
            }
        }
        for t in &terms {
            features.push(t.eval(&rec, row, &header)?);
        }
        choices.push(y);
        if let Some(j) = id_col {
            let raw = rec.get(j).unwrap_or("").trim();
            ids.push(raw.parse::<u64>().map_err(|_| PumError::BadCell {
                row,
                column: header[j].to_string(),
                value: raw.to_string(),
            })?);
        }
    }
    if choices.is_empty() {
        return Err(PumError::Data("no usable rows".into()));
    }

    let scaler = opts.standardize.then(|| {
        let cnt = (features.len() / d) as f64;
        let mut mean = vec![0.0; d];
        for (i, x) in features.iter().enumerate() {
            mean[i % d] += x / cnt;
        }
        let mut var = vec![0.0; d];
        for (i, x) in features.iter().enumerate() {
            var[i % d] += (x - mean[i % d]).powi(2) / cnt;
        }
        // Constant columns (such as alternative-specific constants) keep sd 1.
        let sd = var.iter().map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 }).collect();
        let mean = mean.iter().zip(&var).map(|(m, v)| if *v > 0.0 { *m } else { 0.0 }).collect();
        Scaler { mean, sd }
    });
    if let Some(s) = &scaler {
        let raw = features.clone();
        s.transform(&raw, &mut features);
    }
    let data = ChoiceDataset::new(k, d, features, choices, id_col.map(|_| ids))?;
    Ok(LoadedDataset { data, dropped_unavailable, dropped_invalid_choice, scaler })
}

/// Writes `data` in the [`CsvSchema::generic`] layout. Floats use the
/// shortest representation that parses back to the same value.
pub fn write_csv(data: &ChoiceDataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(File::create(path)?);
    let (k, d) = (data.k(), data.d());
    let mut header: Vec<String> = Vec::with_capacity(k * d + 2);
    if data.ids().is_some() {
        header.push("id".into());
    }
    header.push("choice".into());
    for i in 0..k {
        for j in 0..d {
            header.push(format!("a{i}_x{j}"));
        }
    }
    writeln!(out, "{}", header.join(","))?;
    for (n, obs) in data.iter().enumerate() {
        let mut line = String::new();
        if let Some(ids) = data.ids() {
            line.push_str(&format!("{},", ids[n]));
        }
        line.push_str(&obs.y.to_string());
        for x in obs.x {
            line.push_str(&format!(",{x:?}"));
        }
        writeln!(out, "{line}")?;
    }
    out.flush()?;
    Ok(())
}
