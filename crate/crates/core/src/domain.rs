//! Domain types shared by every protocol, the error metrics, and the
//! non-private baseline estimator.
//!
//! Indexing: inside the library every domain element, query index and
//! Hadamard row is 0-based. Text formats and the CLI speak 1-based indices;
//! the conversion happens at the boundary (see `harness`).

use std::fs;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{check_finite, check_len, Error, Result};
use crate::numeric::{dot, norm2, CompensatedSum};

/// Relative slack allowed on norm bounds to absorb text round-off.
pub const NORM_SLACK: f64 = 1e-9;
/// How far from 1 an input mass vector may sum before it is rejected.
pub const MASS_SUM_TOLERANCE: f64 = 1e-9;

/// A probability vector over `J >= 2` elements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DistributionFile", into = "DistributionFile")]
pub struct Distribution {
    masses: Vec<f64>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DistributionFile {
    #[serde(rename = "J")]
    domain_size: usize,
    masses: Vec<f64>,
}

impl TryFrom<DistributionFile> for Distribution {
    type Error = Error;

    fn try_from(file: DistributionFile) -> Result<Self> {
        check_len(file.domain_size, file.masses.len())?;
        Distribution::new(file.masses)
    }
}

impl From<Distribution> for DistributionFile {
    fn from(dist: Distribution) -> Self {
        DistributionFile {
            domain_size: dist.masses.len(),
            masses: dist.masses,
        }
    }
}

impl Distribution {
    /// Validates and, when the sum is within [`MASS_SUM_TOLERANCE`] of one,
    /// renormalizes the masses.
    pub fn new(masses: Vec<f64>) -> Result<Self> {
        if masses.len() < 2 {
            return Err(Error::domain(format!(
                "a distribution needs at least 2 elements, got {}",
                masses.len()
            )));
        }
        check_finite(&masses, "distribution")?;
        if let Some(i) = masses.iter().position(|&m| m < 0.0) {
            return Err(Error::domain(format!(
                "negative mass {} at element {i}",
                masses[i]
            )));
        }
        let total = masses.iter().copied().collect::<CompensatedSum>().total();
        if (total - 1.0).abs() > MASS_SUM_TOLERANCE {
            return Err(Error::domain(format!("masses sum to {total}, not 1")));
        }
        let masses: Vec<f64> = masses.into_iter().map(|m| m / total).collect();
        let cumulative = cumulative_masses(&masses);
        Ok(Distribution { masses, cumulative })
    }

    pub fn uniform(domain_size: usize) -> Result<Self> {
        Self::new(vec![1.0 / domain_size as f64; domain_size])
    }

    /// Zipf law with exponent `s` over `[J]`: mass of element k ∝ 1/k^s.
    pub fn zipf(domain_size: usize, s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(Error::domain(format!(
                "zipf exponent must be >= 0, got {s}"
            )));
        }
        let weights: Vec<f64> = (1..=domain_size).map(|k| (k as f64).powf(-s)).collect();
        Self::from_weights(weights)
    }

    /// All mass on `element`.
    pub fn point(domain_size: usize, element: usize) -> Result<Self> {
        if element >= domain_size {
            return Err(Error::IndexOutOfRange {
                index: element,
                size: domain_size,
            });
        }
        let mut masses = vec![0.0; domain_size];
        masses[element] = 1.0;
        Self::new(masses)
    }

    /// Mass ½+γ on `first` and ½−γ on `second`.
    pub fn two_spike(domain_size: usize, first: usize, second: usize, gamma: f64) -> Result<Self> {
        if first == second {
            return Err(Error::domain("two-spike needs two distinct elements"));
        }
        if !(0.0..=0.5).contains(&gamma) {
            return Err(Error::domain(format!(
                "two-spike gap must lie in [0, 1/2], got {gamma}"
            )));
        }
        for e in [first, second] {
            if e >= domain_size {
                return Err(Error::IndexOutOfRange {
                    index: e,
                    size: domain_size,
                });
            }
        }
        let mut masses = vec![0.0; domain_size];
        masses[first] = 0.5 + gamma;
        masses[second] = 0.5 - gamma;
        Self::new(masses)
    }

    /// Normalizes arbitrary non-negative weights.
    pub fn from_weights(weights: Vec<f64>) -> Result<Self> {
        check_finite(&weights, "weights")?;
        let total = weights.iter().copied().collect::<CompensatedSum>().total();
        if total <= 0.0 {
            return Err(Error::domain("weights must have a positive sum"));
        }
        Self::new(weights.into_iter().map(|w| w / total).collect())
    }

    pub fn domain_size(&self) -> usize {
        self.masses.len()
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    /// Inverse-CDF draw. A uniform `u` maps to the first element whose
    /// cumulative mass exceeds `u`, so zero-mass elements are never drawn.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        self.cumulative
            .partition_point(|&c| c <= u)
            .min(self.masses.len() - 1)
    }
}

fn cumulative_masses(masses: &[f64]) -> Vec<f64> {
    let mut acc = CompensatedSum::new();
    let mut cumulative: Vec<f64> = masses
        .iter()
        .map(|&m| {
            acc.add(m);
            acc.total()
        })
        .collect();
    // Pin the tail to exactly 1 from the last positive mass on so rounding
    // can never route a draw into a trailing zero-mass element.
    if let Some(last) = masses.iter().rposition(|&m| m > 0.0) {
        for c in &mut cumulative[last..] {
            *c = 1.0;
        }
    }
    cumulative
}

/// The users' private inputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    inputs: Vec<usize>,
}

impl Dataset {
    pub fn new(inputs: Vec<usize>) -> Result<Self> {
        if inputs.is_empty() {
            return Err(Error::domain("a dataset needs at least one user"));
        }
        Ok(Dataset { inputs })
    }

    /// Like [`Dataset::new`] but also checks every input is below `domain_size`.
    pub fn with_domain(inputs: Vec<usize>, domain_size: usize) -> Result<Self> {
        let data = Self::new(inputs)?;
        data.check_domain(domain_size)?;
        Ok(data)
    }

    pub fn inputs(&self) -> &[usize] {
        &self.inputs
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }

    pub fn check_domain(&self, domain_size: usize) -> Result<()> {
        match self.inputs.iter().find(|&&v| v >= domain_size) {
            None => Ok(()),
            Some(&v) => Err(Error::IndexOutOfRange {
                index: v,
                size: domain_size,
            }),
        }
    }

    /// Replaces the input of one user; used to build neighbouring datasets.
    pub fn with_input(&self, user: usize, value: usize) -> Result<Self> {
        if user >= self.inputs.len() {
            return Err(Error::IndexOutOfRange {
                index: user,
                size: self.inputs.len(),
            });
        }
        let mut inputs = self.inputs.clone();
        inputs[user] = value;
        Ok(Dataset { inputs })
    }
}

/// Draws `n` i.i.d. inputs from `dist`.
pub fn sample_dataset<R: Rng + ?Sized>(
    dist: &Distribution,
    n: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::domain("cannot sample an empty dataset"));
    }
    Dataset::new((0..n).map(|_| dist.sample(rng)).collect())
}

/// The empirical distribution of a dataset. Counts are kept as integers.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    counts: Vec<u64>,
    n: u64,
    masses: Vec<f64>,
}

impl Histogram {
    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> u64 {
        self.n
    }
}

pub fn histogram(data: &Dataset, domain_size: usize) -> Result<Histogram> {
    data.check_domain(domain_size)?;
    let mut counts = vec![0u64; domain_size];
    for &v in data.inputs() {
        counts[v] += 1;
    }
    let n = data.len() as u64;
    let masses = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(Histogram { counts, n, masses })
}

/// A `d × J` query matrix whose columns have Euclidean norm at most `r`.
/// Stored column-major because the randomizers read whole columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "QueryMatrixFile", into = "QueryMatrixFile")]
pub struct QueryMatrix {
    rows: usize,
    cols: usize,
    radius: f64,
    data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct QueryMatrixFile {
    d: usize,
    #[serde(rename = "J")]
    domain_size: usize,
    r: f64,
    rows: Vec<Vec<f64>>,
}

impl TryFrom<QueryMatrixFile> for QueryMatrix {
    type Error = Error;

    fn try_from(file: QueryMatrixFile) -> Result<Self> {
        check_len(file.d, file.rows.len())?;
        let m = QueryMatrix::from_rows(&file.rows, file.r)?;
        check_len(file.domain_size, m.domain_size())?;
        Ok(m)
    }
}

impl From<QueryMatrix> for QueryMatrixFile {
    fn from(m: QueryMatrix) -> Self {
        QueryMatrixFile {
            d: m.rows,
            domain_size: m.cols,
            r: m.radius,
            rows: m.to_rows(),
        }
    }
}

impl QueryMatrix {
    pub fn from_rows(rows: &[Vec<f64>], r: f64) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::domain("query matrix needs at least one row"));
        }
        let j = rows[0].len();
        let mut data = vec![0.0; d * j];
        for (i, row) in rows.iter().enumerate() {
            check_len(j, row.len())?;
            for (col, &x) in row.iter().enumerate() {
                data[col * d + i] = x;
            }
        }
        Self::from_column_major(d, j, data, r)
    }

    pub fn from_columns(columns: &[Vec<f64>], r: f64) -> Result<Self> {
        let j = columns.len();
        let d = columns.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(d * j);
        for col in columns {
            check_len(d, col.len())?;
            data.extend_from_slice(col);
        }
        Self::from_column_major(d, j, data, r)
    }

    fn from_column_major(d: usize, j: usize, data: Vec<f64>, r: f64) -> Result<Self> {
        if d == 0 || j == 0 {
            return Err(Error::domain("query matrix must be non-empty"));
        }
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::domain(format!(
                "column bound r must be positive, got {r}"
            )));
        }
        check_finite(&data, "query matrix")?;
        let m = QueryMatrix {
            rows: d,
            cols: j,
            radius: r,
            data,
        };
        for col in 0..j {
            let norm = norm2(m.column(col));
            if norm > r * (1.0 + NORM_SLACK) {
                return Err(Error::domain(format!(
                    "column {col} has norm {norm} which exceeds r = {r}"
                )));
            }
        }
        Ok(m)
    }

    /// The identity, i.e. distribution estimation (`r = 1`).
    pub fn identity(domain_size: usize) -> Result<Self> {
        let mut data = vec![0.0; domain_size * domain_size];
        for k in 0..domain_size {
            data[k * domain_size + k] = 1.0;
        }
        Self::from_column_major(domain_size, domain_size, data, 1.0)
    }

    /// Columns drawn uniformly from the sphere of radius `r` in ℝᵈ.
    pub fn random_sphere_columns<R: Rng + ?Sized>(
        d: usize,
        domain_size: usize,
        r: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(d * domain_size);
        for _ in 0..domain_size {
            loop {
                let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let norm = norm2(&v);
                if norm > 1e-12 {
                    data.extend(v.iter().map(|x| r * x / norm));
                    break;
                }
            }
        }
        Self::from_column_major(d, domain_size, data, r)
    }

    pub fn num_queries(&self) -> usize {
        self.rows
    }

    pub fn domain_size(&self) -> usize {
        self.cols
    }

    /// The declared column bound (not the realized maximum norm).
    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.data[j * self.rows..(j + 1) * self.rows]
    }

    pub fn columns(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.data.chunks_exact(self.rows)
    }

    /// `A·x`.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_len(self.cols, x.len())?;
        let mut out = vec![0.0; self.rows];
        for (col, &w) in self.columns().zip(x) {
            if w != 0.0 {
                for (o, a) in out.iter_mut().zip(col) {
                    *o += w * a;
                }
            }
        }
        Ok(out)
    }

    /// `Aᵀ·y`, i.e. the inner product of `y` with every column.
    pub fn apply_transpose(&self, y: &[f64]) -> Result<Vec<f64>> {
        check_len(self.rows, y.len())?;
        Ok(self.columns().map(|col| dot(col, y)).collect())
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows)
            .map(|i| {
                (0..self.cols)
                    .map(|j| self.data[j * self.rows + i])
                    .collect()
            })
            .collect()
    }
}

/// A linear query `q` with `‖q‖_∞ <= r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryVector {
    coords: Vec<f64>,
    r: f64,
}

impl QueryVector {
    pub fn new(coords: Vec<f64>, r: f64) -> Result<Self> {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::domain(format!(
                "query bound r must be positive, got {r}"
            )));
        }
        if coords.is_empty() {
            return Err(Error::domain("query vector must be non-empty"));
        }
        check_finite(&coords, "query vector")?;
        let norm = sup_norm(&coords);
        if norm > r * (1.0 + NORM_SLACK) {
            return Err(Error::domain(format!(
                "query has sup-norm {norm} which exceeds r = {r}"
            )));
        }
        Ok(QueryVector { coords, r })
    }

    pub fn coords(&self) -> &[f64] {
        &self.coords
    }

    pub fn radius(&self) -> f64 {
        self.r
    }

    pub fn domain_size(&self) -> usize {
        self.coords.len()
    }

    /// `⟨q, p⟩`.
    pub fn evaluate(&self, masses: &[f64]) -> Result<f64> {
        check_len(self.coords.len(), masses.len())?;
        Ok(dot(&self.coords, masses))
    }
}

pub(crate) fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `(ε, δ)`; `δ = 0` is pure LDP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon: f64,
    delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::domain(format!(
                "delta must lie in [0, 1), got {delta}"
            )));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// `A·p`.
pub fn true_answers(matrix: &QueryMatrix, dist: &Distribution) -> Result<Vec<f64>> {
    matrix.apply(dist.masses())
}

pub fn l2_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    Ok(estimate
        .iter()
        .zip(truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

pub fn linf_error(estimate: &[f64], truth: &[f64]) -> Result<f64> {
    check_len(truth.len(), estimate.len())?;
    Ok(estimate
        .iter()
        .zip(truth)
        .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs())))
}

/// `A·p̂(D)`: the optimal non-private estimator.
pub fn nonprivate_baseline(matrix: &QueryMatrix, data: &Dataset) -> Result<Vec<f64>> {
    let hist = histogram(data, matrix.domain_size())?;
    matrix.apply(hist.masses())
}

pub(crate) fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

impl Distribution {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        load_json(path.as_ref())
    }
}

impl QueryMatrix {
    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        load_json(path.as_ref())
    }
}
