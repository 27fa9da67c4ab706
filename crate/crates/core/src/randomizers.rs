//! Per-user local randomizers and an exact privacy-loss audit for the ones
//! with finitely many outputs.
//!
//! Each randomizer is a pure function of (input, parameters, random stream).
//! Noise scales are set by the declared bound `r`, never by the realized
//! column or query norms.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::{PrivacyBudget, QueryMatrix, QueryVector};
use crate::error::{check_len, Error, Result};
use crate::hadamard::{is_positive, padded_size};
use crate::numeric::{dot, integrate, rr_bias_constant};

/// A local randomizer `R: [J] → reports`.
pub trait LocalRandomizer {
    type Report;

    fn domain_size(&self) -> usize;

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<Self::Report>
    where
        Self: Sized;

    /// Exact probabilities of every output for `input`, when the output set
    /// is finite and known.
    fn output_distribution(&self, input: usize) -> Result<Vec<f64>> {
        let _ = input;
        Err(Error::Unsupported(
            "randomizer does not expose exact output probabilities".into(),
        ))
    }
}

fn check_input(input: usize, size: usize) -> Result<()> {
    if input < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index: input, size })
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon.is_finite() && epsilon > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )))
    }
}

// ---------------------------------------------------------------------------
// Gaussian mechanism

/// A column of the query matrix plus isotropic Gaussian noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GaussianReport(pub Vec<f64>);

/// Noise variance `2r²·ln(2/δ)/ε²`.
pub fn gaussian_sigma2(r: f64, budget: &PrivacyBudget) -> Result<f64> {
    if budget.is_pure() {
        return Err(Error::domain("the Gaussian mechanism needs delta > 0"));
    }
    let eps = budget.epsilon();
    Ok(2.0 * r * r * (2.0 / budget.delta()).ln() / (eps * eps))
}

#[derive(Debug, Clone)]
pub struct GaussianRandomizer<'a> {
    matrix: &'a QueryMatrix,
    sigma: f64,
}

impl<'a> GaussianRandomizer<'a> {
    pub fn new(matrix: &'a QueryMatrix, budget: &PrivacyBudget) -> Result<Self> {
        let sigma2 = gaussian_sigma2(matrix.radius(), budget)?;
        Self::with_noise_variance(matrix, sigma2)
    }

    /// Overrides the calibrated variance. Only meaningful for tests; a
    /// variance below the calibrated one is not private.
    pub fn with_noise_variance(matrix: &'a QueryMatrix, sigma2: f64) -> Result<Self> {
        if !(sigma2.is_finite() && sigma2 >= 0.0) {
            return Err(Error::domain(format!(
                "noise variance must be >= 0, got {sigma2}"
            )));
        }
        Ok(GaussianRandomizer {
            matrix,
            sigma: sigma2.sqrt(),
        })
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma * self.sigma
    }
}

impl LocalRandomizer for GaussianRandomizer<'_> {
    type Report = GaussianReport;

    fn domain_size(&self) -> usize {
        self.matrix.domain_size()
    }

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<GaussianReport> {
        check_input(input, self.domain_size())?;
        let values = self
            .matrix
            .column(input)
            .iter()
            .map(|&a| {
                let z: f64 = rng.sample(StandardNormal);
                a + self.sigma * z
            })
            .collect();
        Ok(GaussianReport(values))
    }
}

pub fn randomize_gaussian<R: Rng + ?Sized>(
    matrix: &QueryMatrix,
    input: usize,
    budget: &PrivacyBudget,
    rng: &mut R,
) -> Result<GaussianReport> {
    GaussianRandomizer::new(matrix, budget)?.randomize(input, rng)
}

// ---------------------------------------------------------------------------
// Rejection-sampling randomizer (pure ε-LDP)

/// Either an accepted data-independent Gaussian draw or a dropped user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RejSampReport {
    Accepted(Vec<f64>),
    Dropped,
}

impl RejSampReport {
    pub fn is_accepted(&self) -> bool {
        matches!(self, RejSampReport::Accepted(_))
    }
}

/// Noise variance `4r²·ln(n)/ε²`, i.e. the Gaussian variance at `δ = 2/n²`.
pub fn rejsamp_sigma2(r: f64, epsilon: f64, n: usize) -> f64 {
    4.0 * r * r * (n as f64).ln() / (epsilon * epsilon)
}

/// `(⟨a, y⟩ − ‖a‖²/2)/σ²`: the log of the density ratio `f_a(y)/f_0(y)`.
fn log_density_ratio(column: &[f64], y: &[f64], sigma2: f64) -> f64 {
    (dot(column, y) - 0.5 * dot(column, column)) / sigma2
}

/// `η = ½·f_{a_v}(y)/f_0(y)` for isotropic Gaussians of variance `sigma2`.
pub fn rejsamp_eta(matrix: &QueryMatrix, input: usize, y: &[f64], sigma2: f64) -> Result<f64> {
    check_input(input, matrix.domain_size())?;
    check_len(matrix.num_queries(), y.len())?;
    if sigma2.is_nan() || sigma2 <= 0.0 {
        return Err(Error::domain(format!(
            "sigma2 must be positive, got {sigma2}"
        )));
    }
    Ok(0.5 * log_density_ratio(matrix.column(input), y, sigma2).exp())
}

#[derive(Debug, Clone)]
pub struct RejSampRandomizer<'a> {
    matrix: &'a QueryMatrix,
    epsilon: f64,
    n: usize,
    sigma2: f64,
}

impl<'a> RejSampRandomizer<'a> {
    /// `n` is the total number of users; it sets the noise scale.
    pub fn new(matrix: &'a QueryMatrix, epsilon: f64, n: usize) -> Result<Self> {
        check_epsilon(epsilon)?;
        if epsilon > 1.0 {
            return Err(Error::domain("rejection-sampling protocol requires ε ≤ 1"));
        }
        if n < 2 {
            return Err(Error::domain(format!(
                "rejection-sampling protocol requires n >= 2, got {n}"
            )));
        }
        Ok(RejSampRandomizer {
            matrix,
            epsilon,
            n,
            sigma2: rejsamp_sigma2(matrix.radius(), epsilon, n),
        })
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma2
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn num_users(&self) -> usize {
        self.n
    }

    /// Whether `y` lies in the acceptance window `η ∈ [e^{−ε/4}/2, e^{ε/4}/2]`
    /// for `input`.
    pub fn in_window(&self, input: usize, y: &[f64]) -> bool {
        log_density_ratio(self.matrix.column(input), y, self.sigma2).abs() <= self.epsilon / 4.0
    }

    /// `P(B = 1 | input)` by quadrature. `⟨a, y⟩` is a scalar Gaussian, so
    /// the integral is one-dimensional for every `d`.
    pub fn acceptance_probability(&self, input: usize) -> Result<f64> {
        check_input(input, self.domain_size())?;
        let col = self.matrix.column(input);
        let s = dot(col, col);
        if s == 0.0 {
            return Ok(0.5);
        }
        let sigma2 = self.sigma2;
        let sd = (sigma2 * s).sqrt();
        // Window on t = ⟨a, y⟩ ~ N(0, σ²s): |t − s/2| ≤ εσ²/4.
        let half = self.epsilon * sigma2 / 4.0;
        let lo = (0.5 * s - half).max(-40.0 * sd);
        let hi = (0.5 * s + half).min(40.0 * sd);
        let norm = 1.0 / (sd * (2.0 * std::f64::consts::PI).sqrt());
        let integrand = |t: f64| {
            let log_eta = (t - 0.5 * s) / sigma2;
            0.5 * log_eta.exp() * norm * (-0.5 * (t / sd) * (t / sd)).exp()
        };
        Ok(integrate(integrand, lo, hi, 2000))
    }

    /// The acceptance bit viewed as a two-output channel.
    pub fn acceptance_bit(&self) -> RejectionBit<'_, 'a> {
        RejectionBit(self)
    }
}

impl LocalRandomizer for RejSampRandomizer<'_> {
    type Report = RejSampReport;

    fn domain_size(&self) -> usize {
        self.matrix.domain_size()
    }

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<RejSampReport> {
        check_input(input, self.domain_size())?;
        let sigma = self.sigma2.sqrt();
        let y: Vec<f64> = (0..self.matrix.num_queries())
            .map(|_| {
                let z: f64 = rng.sample(StandardNormal);
                sigma * z
            })
            .collect();
        // Always consume the coin so the stream layout does not depend on data.
        let u: f64 = rng.random();
        let log_ratio = log_density_ratio(self.matrix.column(input), &y, self.sigma2);
        let accept = log_ratio.abs() <= self.epsilon / 4.0 && u < 0.5 * log_ratio.exp();
        Ok(if accept {
            RejSampReport::Accepted(y)
        } else {
            RejSampReport::Dropped
        })
    }
}

pub fn randomize_rejsamp<R: Rng + ?Sized>(
    matrix: &QueryMatrix,
    input: usize,
    epsilon: f64,
    n: usize,
    rng: &mut R,
) -> Result<RejSampReport> {
    RejSampRandomizer::new(matrix, epsilon, n)?.randomize(input, rng)
}

/// Output `[P(B = 0), P(B = 1)]` of the rejection step. Every accepted draw
/// is data-independent given `B`, so the bit carries all the privacy loss.
#[derive(Debug, Clone, Copy)]
pub struct RejectionBit<'r, 'a>(&'r RejSampRandomizer<'a>);

impl LocalRandomizer for RejectionBit<'_, '_> {
    type Report = bool;

    fn domain_size(&self) -> usize {
        self.0.domain_size()
    }

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<bool> {
        Ok(self.0.randomize(input, rng)?.is_accepted())
    }

    fn output_distribution(&self, input: usize) -> Result<Vec<f64>> {
        let accept = self.0.acceptance_probability(input)?;
        Ok(vec![1.0 - accept, accept])
    }
}

// ---------------------------------------------------------------------------
// Hadamard response

/// An index into the padded Hadamard set `[J̃]` (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct HadamardReport(usize);

impl HadamardReport {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Subset randomized response over the `+1` support of a Hadamard row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HadamardRandomizer {
    domain_size: usize,
    padded_size: usize,
    /// `e^ε/(e^ε + 1)`: probability of landing inside the input's support.
    inside: f64,
}

impl HadamardRandomizer {
    pub fn new(domain_size: usize, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(HadamardRandomizer {
            domain_size,
            padded_size: padded_size(domain_size)?,
            inside: 1.0 / (1.0 + (-epsilon).exp()),
        })
    }

    pub fn padded_size(&self) -> usize {
        self.padded_size
    }
}

impl LocalRandomizer for HadamardRandomizer {
    type Report = HadamardReport;

    fn domain_size(&self) -> usize {
        self.domain_size
    }

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<HadamardReport> {
        check_input(input, self.domain_size)?;
        let row = input + 1;
        let want_inside = rng.random::<f64>() < self.inside;
        let mut w = rng.random_range(0..self.padded_size);
        // Toggling the lowest set bit of the row flips membership and is a
        // bijection between the support and its complement.
        if is_positive(row, w) != want_inside {
            w ^= row & row.wrapping_neg();
        }
        Ok(HadamardReport(w))
    }

    fn output_distribution(&self, input: usize) -> Result<Vec<f64>> {
        check_input(input, self.domain_size)?;
        let half = (self.padded_size / 2) as f64;
        let (p_in, p_out) = (self.inside / half, (1.0 - self.inside) / half);
        Ok((0..self.padded_size)
            .map(|w| {
                if is_positive(input + 1, w) {
                    p_in
                } else {
                    p_out
                }
            })
            .collect())
    }
}

pub fn randomize_hadamard<R: Rng + ?Sized>(
    input: usize,
    domain_size: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<HadamardReport> {
    HadamardRandomizer::new(domain_size, epsilon)?.randomize(input, rng)
}

// ---------------------------------------------------------------------------
// Scalar randomized response for adaptive queries

/// `±c·r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveReport {
    positive: bool,
    magnitude: f64,
}

impl AdaptiveReport {
    pub fn value(&self) -> f64 {
        if self.positive {
            self.magnitude
        } else {
            -self.magnitude
        }
    }

    pub fn is_positive(&self) -> bool {
        self.positive
    }
}

#[derive(Debug, Clone)]
pub struct AdaptiveRandomizer<'a> {
    query: &'a QueryVector,
    bias_constant: f64,
}

impl<'a> AdaptiveRandomizer<'a> {
    pub fn new(query: &'a QueryVector, epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(AdaptiveRandomizer {
            query,
            bias_constant: rr_bias_constant(epsilon),
        })
    }

    /// Uses `c` in place of `(e^ε+1)/(e^ε−1)`. A smaller `c` is not private;
    /// exists so audits can be shown to fail.
    pub fn with_bias_constant(query: &'a QueryVector, c: f64) -> Result<Self> {
        if !(c.is_finite() && c > 0.0) {
            return Err(Error::domain(format!(
                "bias constant must be positive, got {c}"
            )));
        }
        Ok(AdaptiveRandomizer {
            query,
            bias_constant: c,
        })
    }

    /// `P(+c·r) = ½(1 + q(v)/(c·r))`, clamped to `[0, 1]`.
    pub fn positive_probability(&self, input: usize) -> Result<f64> {
        check_input(input, self.query.domain_size())?;
        let r = self.query.radius();
        let qv = self.query.coords()[input].clamp(-r, r);
        Ok((0.5 * (1.0 + qv / (self.bias_constant * r))).clamp(0.0, 1.0))
    }

    pub fn report_magnitude(&self) -> f64 {
        self.bias_constant * self.query.radius()
    }
}

impl LocalRandomizer for AdaptiveRandomizer<'_> {
    type Report = AdaptiveReport;

    fn domain_size(&self) -> usize {
        self.query.domain_size()
    }

    fn randomize<R: Rng + ?Sized>(&self, input: usize, rng: &mut R) -> Result<AdaptiveReport> {
        let p = self.positive_probability(input)?;
        Ok(AdaptiveReport {
            positive: rng.random::<f64>() < p,
            magnitude: self.report_magnitude(),
        })
    }

    /// `[P(−c·r), P(+c·r)]`.
    fn output_distribution(&self, input: usize) -> Result<Vec<f64>> {
        let p = self.positive_probability(input)?;
        Ok(vec![1.0 - p, p])
    }
}

pub fn randomize_adaptive<R: Rng + ?Sized>(
    query: &QueryVector,
    input: usize,
    epsilon: f64,
    rng: &mut R,
) -> Result<AdaptiveReport> {
    AdaptiveRandomizer::new(query, epsilon)?.randomize(input, rng)
}

// ---------------------------------------------------------------------------
// Exact audit

#[derive(Debug, Clone, Serialize)]
pub struct AuditVerdict {
    pub epsilon: f64,
    /// `max log(P(o|v)/P(o|v'))` over ordered input pairs and outputs.
    pub max_loss: f64,
    /// `(v, v', o)` attaining the maximum, if any pair was compared.
    pub worst_case: Option<(usize, usize, usize)>,
    pub pass: bool,
}

/// Exhaustive privacy-loss audit of a finite-output randomizer. `0/0`
/// ratios are skipped; `x/0` with `x > 0` is an infinite loss.
pub fn audit_finite_ldp<M: LocalRandomizer + ?Sized>(
    randomizer: &M,
    epsilon: f64,
) -> Result<AuditVerdict> {
    let dists = (0..randomizer.domain_size())
        .map(|v| randomizer.output_distribution(v))
        .collect::<Result<Vec<_>>>()?;
    for (v, dist) in dists.iter().enumerate() {
        let total: f64 = dist.iter().sum();
        if dist.iter().any(|p| !(p.is_finite() && *p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::domain(format!(
                "output distribution for input {v} is not a probability vector"
            )));
        }
        check_len(dists[0].len(), dist.len())?;
    }

    let mut max_loss = 0.0_f64;
    let mut worst_case = None;
    for (v, pv) in dists.iter().enumerate() {
        for (u, pu) in dists.iter().enumerate() {
            if u == v {
                continue;
            }
            for (o, (&a, &b)) in pv.iter().zip(pu).enumerate() {
                let loss = match (a > 0.0, b > 0.0) {
                    (false, _) => continue,
                    (true, false) => f64::INFINITY,
                    (true, true) => (a / b).ln(),
                };
                if worst_case.is_none() || loss > max_loss {
                    max_loss = loss;
                    worst_case = Some((v, u, o));
                }
            }
        }
    }
    Ok(AuditVerdict {
        epsilon,
        max_loss,
        worst_case,
        pass: max_loss <= epsilon + 1e-9,
    })
}
