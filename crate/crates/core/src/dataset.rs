//! Labeled outage dataset: CSV persistence, seeded train/test split and the
//! statistics used for feature analysis and model scoring.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::scenario::OutageSample;

pub const CSV_HEADER: &str = "h,k,p,r,y,combo_id,lost_unit";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset too small: {0}")]
    DatasetTooSmall(String),
    #[error("test fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
    #[error("`{0}` has zero variance")]
    ZeroVariance(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("unexpected csv header `{0}`, expected `{CSV_HEADER}`")]
    Header(String),
}

/// Dataset columns usable in statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Column {
    H,
    K,
    P,
    R,
    Y,
}

impl Column {
    pub const ALL: [Column; 5] = [Column::H, Column::K, Column::P, Column::R, Column::Y];
    pub const FEATURES: [Column; 4] = [Column::H, Column::K, Column::P, Column::R];

    pub fn name(self) -> &'static str {
        match self {
            Column::H => "h",
            Column::K => "k",
            Column::P => "p",
            Column::R => "r",
            Column::Y => "y",
        }
    }

    pub fn get(self, s: &OutageSample) -> f64 {
        match self {
            Column::H => s.h,
            Column::K => s.k,
            Column::P => s.p,
            Column::R => s.r,
            Column::Y => s.y,
        }
    }
}

impl fmt::Display for Column {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-feature (min, max) in the order h, k, p, r.
pub type FeatureBounds = [(f64, f64); 4];

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    rows: Vec<OutageSample>,
    feature_bounds: FeatureBounds,
}

impl Dataset {
    pub fn new(rows: Vec<OutageSample>) -> Self {
        let mut bounds = [(f64::INFINITY, f64::NEG_INFINITY); 4];
        for row in &rows {
            for (b, v) in bounds.iter_mut().zip(row.features()) {
                b.0 = b.0.min(v);
                b.1 = b.1.max(v);
            }
        }
        Self {
            rows,
            feature_bounds: bounds,
        }
    }

    pub fn rows(&self) -> &[OutageSample] {
        &self.rows
    }

    pub fn into_rows(self) -> Vec<OutageSample> {
        self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Infinite (inverted) bounds when empty.
    pub fn feature_bounds(&self) -> FeatureBounds {
        self.feature_bounds
    }

    pub fn features(&self) -> Vec<[f64; 4]> {
        self.rows.iter().map(OutageSample::features).collect()
    }

    pub fn labels(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.y).collect()
    }

    pub fn column(&self, c: Column) -> Vec<f64> {
        self.rows.iter().map(|r| c.get(r)).collect()
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DatasetError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let header = rdr.headers()?.iter().collect::<Vec<_>>().join(",");
        if header != CSV_HEADER {
            return Err(DatasetError::Header(header));
        }
        let rows = rdr.deserialize().collect::<Result<Vec<OutageSample>, _>>()?;
        Ok(Self::new(rows))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, DatasetError> {
        Self::read_csv(std::fs::File::open(path)?)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DatasetError> {
        let mut wtr = csv::Writer::from_writer(writer);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        if self.rows.is_empty() {
            wtr.write_record(CSV_HEADER.split(','))?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), DatasetError> {
        let file = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_csv(file)
    }

    /// Seeded random partition. The test side gets `floor(n·test_fraction)`
    /// rows and the training side the rest (a ceiling on the training side),
    /// so the training side is never emptied by rounding. Each side keeps the
    /// original row order.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset), DatasetError> {
        if !(test_fraction > 0.0 && test_fraction < 1.0) {
            return Err(DatasetError::InvalidFraction(test_fraction));
        }
        let n = self.rows.len();
        let n_test = (n as f64 * test_fraction + 1e-9).floor() as usize;
        let n_train = n - n_test;
        if n_test == 0 || n_train == 0 {
            return Err(DatasetError::DatasetTooSmall(format!(
                "{n} rows cannot be split with test fraction {test_fraction}"
            )));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut is_test = vec![false; n];
        for &i in &order[..n_test] {
            is_test[i] = true;
        }
        let (test, train): (Vec<_>, Vec<_>) = self
            .rows
            .iter()
            .cloned()
            .zip(is_test)
            .partition(|(_, t)| *t);
        Ok((
            Dataset::new(train.into_iter().map(|(r, _)| r).collect()),
            Dataset::new(test.into_iter().map(|(r, _)| r).collect()),
        ))
    }

    pub fn pearson(&self, a: Column, b: Column) -> Result<f64, DatasetError> {
        pearson_named((a.name(), &self.column(a)), (b.name(), &self.column(b)))
    }

    /// Pearson matrix over h, k, p, r, y.
    pub fn correlation_matrix(&self) -> Result<[[f64; 5]; 5], DatasetError> {
        let mut m = [[0.0; 5]; 5];
        for (i, &a) in Column::ALL.iter().enumerate() {
            for (j, &b) in Column::ALL.iter().enumerate() {
                m[i][j] = if i == j {
                    self.pearson(a, a)?
                } else if j < i {
                    m[j][i]
                } else {
                    self.pearson(a, b)?
                };
            }
        }
        Ok(m)
    }

    pub fn summary(&self) -> Vec<ColumnSummary> {
        Column::ALL
            .iter()
            .map(|&c| ColumnSummary::of(c, &self.column(c)))
            .collect()
    }
}

pub fn write_correlation_csv<W: Write>(m: &[[f64; 5]; 5], mut out: W) -> std::io::Result<()> {
    let names: Vec<&str> = Column::ALL.iter().map(|c| c.name()).collect();
    writeln!(out, ",{}", names.join(","))?;
    for (name, row) in names.iter().zip(m) {
        let cells: Vec<String> = row.iter().map(|v| format!("{v:.6}")).collect();
        writeln!(out, "{name},{}", cells.join(","))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSummary {
    pub column: Column,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
    /// Share of exactly-zero entries.
    pub zero_share: f64,
}

impl ColumnSummary {
    fn of(column: Column, v: &[f64]) -> Self {
        let n = v.len().max(1) as f64;
        let mean = v.iter().sum::<f64>() / n;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            column,
            min: v.iter().copied().fold(f64::INFINITY, f64::min),
            max: v.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean,
            std: var.sqrt(),
            zero_share: v.iter().filter(|&&x| x == 0.0).count() as f64 / n,
        }
    }
}

/// Sample Pearson coefficient.
pub fn pearson_columns(a: &[f64], b: &[f64]) -> Result<f64, DatasetError> {
    pearson_named(("first input", a), ("second input", b))
}

fn pearson_named((name_a, a): (&str, &[f64]), (name_b, b): (&str, &[f64])) -> Result<f64, DatasetError> {
    if a.len() != b.len() {
        return Err(DatasetError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(DatasetError::Empty);
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa == 0.0 {
        return Err(DatasetError::ZeroVariance(name_a.to_string()));
    }
    if sbb == 0.0 {
        return Err(DatasetError::ZeroVariance(name_b.to_string()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

pub fn mae(predictions: &[f64], labels: &[f64]) -> Result<f64, DatasetError> {
    if predictions.len() != labels.len() {
        return Err(DatasetError::LengthMismatch(predictions.len(), labels.len()));
    }
    if predictions.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(predictions
        .iter()
        .zip(labels)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / predictions.len() as f64)
}

/// Class-by-class tally where every cell is a percentage of all samples, so
/// the diagonal sums to the overall accuracy. Rows are true classes, columns
/// predicted classes; `classes` is the sorted union of both label sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfusionMatrix {
    pub classes: Vec<usize>,
    pub counts: Vec<Vec<usize>>,
    pub percent: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn accuracy(&self) -> f64 {
        (0..self.classes.len()).map(|i| self.percent[i][i]).sum()
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let head: Vec<String> = self.classes.iter().map(|c| format!("pred_L{c}")).collect();
        writeln!(out, "true,{}", head.join(","))?;
        for (c, row) in self.classes.iter().zip(&self.percent) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.2}")).collect();
            writeln!(out, "L{c},{}", cells.join(","))?;
        }
        Ok(())
    }
}

pub fn confusion_matrix(truth: &[usize], predicted: &[usize]) -> Result<ConfusionMatrix, DatasetError> {
    if truth.len() != predicted.len() {
        return Err(DatasetError::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(DatasetError::Empty);
    }
    let mut classes: Vec<usize> = truth.iter().chain(predicted).copied().collect();
    classes.sort_unstable();
    classes.dedup();
    let pos = |c: usize| classes.binary_search(&c).expect("class collected above");
    let k = classes.len();
    let mut counts = vec![vec![0usize; k]; k];
    for (&t, &p) in truth.iter().zip(predicted) {
        counts[pos(t)][pos(p)] += 1;
    }
    let total = truth.len() as f64;
    let percent = counts
        .iter()
        .map(|row| row.iter().map(|&c| 100.0 * c as f64 / total).collect())
        .collect();
    Ok(ConfusionMatrix {
        classes,
        counts,
        percent,
    })
}
