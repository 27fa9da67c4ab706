//! End-to-end protocols: per-user randomization, server aggregation and
//! projection.
//!
//! Every user draws from its own stream (`seed → user reports → user i`), so
//! users are randomized in parallel with results identical to a sequential
//! run. Sums are compensated and taken in user-index order.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{sup_norm, Dataset, Distribution, PrivacyBudget, QueryMatrix, QueryVector};
use crate::error::{check_len, Error, Result};
use crate::hadamard::{decode, HadamardContext, ReportCounts};
use crate::numeric::{dot, rr_bias_constant, CompensatedSum};
use crate::projection::{project_polytope, project_simplex, PolytopeSpec};
use crate::randomizers::{
    gaussian_sigma2, AdaptiveRandomizer, AdaptiveReport, GaussianRandomizer, HadamardRandomizer,
    LocalRandomizer, RejSampRandomizer, RejSampReport,
};
use crate::rng::{labels, ProtocolRng, SeedStream};

/// Smallest `n` for which the rejection-sampling accuracy guarantee applies.
pub const REJSAMP_MIN_USERS: usize = 120;

/// Conditions that leave a result valid but outside the regime where the
/// accuracy guarantees are proven.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RegimeWarning {
    FewUsers { n: usize, minimum: f64 },
    EmptyRounds { rounds: Vec<usize> },
    ProjectionNotConverged { gap: f64 },
}

/// Parameters actually used by an offline run, including evaluated thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineParams {
    pub epsilon: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    pub r: f64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "J")]
    pub domain_size: usize,
    pub noise_variance: f64,
    /// The server projects when the (active) user count is strictly below this.
    pub projection_threshold: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OfflineRunResult {
    /// Final answers; equals `raw_mean` when no projection ran.
    pub estimate: Vec<f64>,
    pub raw_mean: Vec<f64>,
    pub active_users: usize,
    pub projected: bool,
    /// Duality gap of the projection, 0 when unprojected.
    pub gap: f64,
    pub params: OfflineParams,
    pub warnings: Vec<RegimeWarning>,
}

fn user_streams(seed: SeedStream) -> SeedStream {
    seed.derive(labels::USER_REPORTS)
}

fn randomize_all<M>(randomizer: &M, data: &Dataset, seed: SeedStream) -> Result<Vec<M::Report>>
where
    M: LocalRandomizer + Sync,
    M::Report: Send,
{
    let streams = user_streams(seed);
    data.inputs()
        .par_iter()
        .enumerate()
        .map(|(i, &v)| randomizer.randomize(v, &mut streams.indexed_rng(i as u64)))
        .collect()
}

fn mean_of<'a>(vectors: impl Iterator<Item = &'a [f64]>, dim: usize) -> (Vec<f64>, usize) {
    let mut sums = vec![CompensatedSum::new(); dim];
    let mut count = 0;
    for v in vectors {
        for (s, x) in sums.iter_mut().zip(v) {
            s.add(*x);
        }
        count += 1;
    }
    let mean = sums.iter().map(|s| s.total() / count as f64).collect();
    (mean, count)
}

fn check_offline_instance(matrix: &QueryMatrix, data: &Dataset) -> Result<()> {
    if matrix.domain_size() < 2 {
        return Err(Error::domain("offline protocols need J >= 2"));
    }
    data.check_domain(matrix.domain_size())
}

fn finish_offline(
    matrix: &QueryMatrix,
    raw_mean: Vec<f64>,
    active_users: usize,
    project: bool,
    params: OfflineParams,
    mut warnings: Vec<RegimeWarning>,
) -> Result<OfflineRunResult> {
    let (estimate, gap) = if project {
        let out = project_polytope(&PolytopeSpec::new(matrix), &raw_mean)?;
        if !out.converged {
            warnings.push(RegimeWarning::ProjectionNotConverged { gap: out.gap });
        }
        (out.point, out.gap)
    } else {
        (raw_mean.clone(), 0.0)
    };
    Ok(OfflineRunResult {
        estimate,
        raw_mean,
        active_users,
        projected: project,
        gap,
        params,
        warnings,
    })
}

/// `d²·ln(2/δ)/(8ε²·ln J)`.
pub fn gauss_projection_threshold(d: usize, domain_size: usize, budget: &PrivacyBudget) -> f64 {
    let eps = budget.epsilon();
    (d * d) as f64 * (2.0 / budget.delta()).ln() / (8.0 * eps * eps * (domain_size as f64).ln())
}

/// `d²·ln(n)/(4ε²·ln J)`, compared against the number of accepted users.
pub fn rejsamp_projection_threshold(d: usize, domain_size: usize, epsilon: f64, n: usize) -> f64 {
    (d * d) as f64 * (n as f64).ln() / (4.0 * epsilon * epsilon * (domain_size as f64).ln())
}

/// `(ε, δ)`-LDP offline queries: Gaussian reports, averaged, projected
/// onto `A·B₁ᴶ` when `n` is below the threshold.
pub fn run_gauss(
    matrix: &QueryMatrix,
    data: &Dataset,
    budget: &PrivacyBudget,
    seed: SeedStream,
) -> Result<OfflineRunResult> {
    check_offline_instance(matrix, data)?;
    let randomizer = GaussianRandomizer::new(matrix, budget)?;
    let reports = randomize_all(&randomizer, data, seed)?;
    let (raw_mean, n) = mean_of(reports.iter().map(|r| r.0.as_slice()), matrix.num_queries());
    let threshold = gauss_projection_threshold(matrix.num_queries(), matrix.domain_size(), budget);
    let params = OfflineParams {
        epsilon: budget.epsilon(),
        delta: Some(budget.delta()),
        r: matrix.radius(),
        n,
        d: matrix.num_queries(),
        domain_size: matrix.domain_size(),
        noise_variance: gaussian_sigma2(matrix.radius(), budget)?,
        projection_threshold: threshold,
        seed: seed.value(),
    };
    finish_offline(
        matrix,
        raw_mean,
        n,
        (n as f64) < threshold,
        params,
        Vec::new(),
    )
}

/// Pure ε-LDP offline queries via rejection sampling. Dropped users are
/// discarded and the survivors averaged.
pub fn run_rejsamp(
    matrix: &QueryMatrix,
    data: &Dataset,
    epsilon: f64,
    seed: SeedStream,
) -> Result<OfflineRunResult> {
    check_offline_instance(matrix, data)?;
    let n = data.len();
    let randomizer = RejSampRandomizer::new(matrix, epsilon, n)?;
    let reports = randomize_all(&randomizer, data, seed)?;
    let accepted = reports.iter().filter_map(|r| match r {
        RejSampReport::Accepted(y) => Some(y.as_slice()),
        RejSampReport::Dropped => None,
    });
    let (raw_mean, active) = mean_of(accepted, matrix.num_queries());
    if active == 0 {
        return Err(Error::AllUsersDropped { n });
    }
    let mut warnings = Vec::new();
    if n < REJSAMP_MIN_USERS {
        warnings.push(RegimeWarning::FewUsers {
            n,
            minimum: REJSAMP_MIN_USERS as f64,
        });
    }
    let threshold =
        rejsamp_projection_threshold(matrix.num_queries(), matrix.domain_size(), epsilon, n);
    let params = OfflineParams {
        epsilon,
        delta: None,
        r: matrix.radius(),
        n,
        d: matrix.num_queries(),
        domain_size: matrix.domain_size(),
        noise_variance: randomizer.noise_variance(),
        projection_threshold: threshold,
        seed: seed.value(),
    };
    finish_offline(
        matrix,
        raw_mean,
        active,
        (active as f64) < threshold,
        params,
        warnings,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhrParams {
    pub epsilon: f64,
    pub n: usize,
    #[serde(rename = "J")]
    pub domain_size: usize,
    pub padded_size: usize,
    pub bias_constant: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhrRunResult {
    /// The decode projected onto the simplex.
    pub estimate: Distribution,
    /// The unbiased decode before projection.
    pub raw: Vec<f64>,
    pub params: PhrParams,
}

/// Pure ε-LDP distribution estimation by Hadamard response followed by
/// projection onto the simplex.
pub fn run_phr(
    data: &Dataset,
    domain_size: usize,
    epsilon: f64,
    seed: SeedStream,
) -> Result<PhrRunResult> {
    if domain_size < 2 {
        return Err(Error::domain("distribution estimation needs J >= 2"));
    }
    data.check_domain(domain_size)?;
    let ctx = HadamardContext::new(domain_size, epsilon)?;
    let randomizer = HadamardRandomizer::new(domain_size, epsilon)?;
    let reports = randomize_all(&randomizer, data, seed)?;
    let counts = ReportCounts::from_reports(ctx.padded_size(), &reports)?;
    let raw = decode(&counts, &ctx)?;
    let estimate = Distribution::new(project_simplex(&raw)?)?;
    Ok(PhrRunResult {
        estimate,
        raw,
        params: PhrParams {
            epsilon,
            n: data.len(),
            domain_size,
            padded_size: ctx.padded_size(),
            bias_constant: ctx.bias_constant(),
            seed: seed.value(),
        },
    })
}

/// A query and the server's answer, as seen by an adaptive analyst.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnsweredQuery {
    pub query: QueryVector,
    pub estimate: f64,
}

/// An analyst choosing each query from the answers so far.
pub trait AdaptiveStrategy {
    /// Coordinates of the query for `round` (0-based). The server rejects
    /// any query with sup-norm above `r` before it reaches users.
    fn next_query(&mut self, round: usize, history: &[AnsweredQuery]) -> Vec<f64>;
}

/// Asks the same query every round.
#[derive(Debug, Clone)]
pub struct ConstantStrategy {
    query: Vec<f64>,
}

impl ConstantStrategy {
    pub fn new(query: Vec<f64>) -> Self {
        ConstantStrategy { query }
    }
}

impl AdaptiveStrategy for ConstantStrategy {
    fn next_query(&mut self, _round: usize, _history: &[AnsweredQuery]) -> Vec<f64> {
        self.query.clone()
    }
}

/// Independent uniform queries on `[−r, r]ᴶ`.
#[derive(Debug, Clone)]
pub struct RandomStrategy {
    domain_size: usize,
    r: f64,
    rng: ProtocolRng,
}

impl RandomStrategy {
    pub fn new(domain_size: usize, r: f64, seed: SeedStream) -> Self {
        RandomStrategy {
            domain_size,
            r,
            rng: seed.derive(labels::STRATEGY).rng(),
        }
    }
}

impl AdaptiveStrategy for RandomStrategy {
    fn next_query(&mut self, _round: usize, _history: &[AnsweredQuery]) -> Vec<f64> {
        (0..self.domain_size)
            .map(|_| self.rng.random_range(-self.r..=self.r))
            .collect()
    }
}

/// An adversary that knows the true distribution and steers each query
/// towards the errors made so far: query `k` is `r·sign(Σ_m sign(e_m)·q_m)`
/// where `e_m` is the error of answer `m`. The first query has random signs.
#[derive(Debug, Clone)]
pub struct TrackingAdversary {
    reference: Vec<f64>,
    r: f64,
    rng: ProtocolRng,
}

impl TrackingAdversary {
    pub fn new(reference: &Distribution, r: f64, seed: SeedStream) -> Self {
        TrackingAdversary {
            reference: reference.masses().to_vec(),
            r,
            rng: seed.derive(labels::STRATEGY).rng(),
        }
    }
}

impl AdaptiveStrategy for TrackingAdversary {
    fn next_query(&mut self, _round: usize, history: &[AnsweredQuery]) -> Vec<f64> {
        let mut direction = vec![0.0; self.reference.len()];
        for answered in history {
            let residual = answered.estimate - dot(answered.query.coords(), &self.reference);
            let sign = if residual >= 0.0 { 1.0 } else { -1.0 };
            for (d, q) in direction.iter_mut().zip(answered.query.coords()) {
                *d += sign * q;
            }
        }
        direction
            .iter()
            .map(|&x| {
                let positive = if x == 0.0 {
                    self.rng.random::<bool>()
                } else {
                    x > 0.0
                };
                if positive {
                    self.r
                } else {
                    -self.r
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveRound {
    pub query: QueryVector,
    pub estimate: f64,
    pub active_users: usize,
    /// No user was assigned to this round; the estimate is 0.
    pub empty: bool,
    #[serde(skip)]
    reports: Vec<(usize, AdaptiveReport)>,
}

impl AdaptiveRound {
    /// `(user index, report)` pairs in user order.
    pub fn reports(&self) -> &[(usize, AdaptiveReport)] {
        &self.reports
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveParams {
    pub epsilon: f64,
    pub r: f64,
    pub n: usize,
    pub d: usize,
    #[serde(rename = "J")]
    pub domain_size: usize,
    pub bias_constant: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptiveTranscript {
    pub rounds: Vec<AdaptiveRound>,
    /// Round index of every user, fixed before any query is asked.
    pub assignment: Vec<usize>,
    pub params: AdaptiveParams,
    pub warnings: Vec<RegimeWarning>,
}

impl AdaptiveTranscript {
    pub fn estimates(&self) -> Vec<f64> {
        self.rounds.iter().map(|r| r.estimate).collect()
    }

    /// `⟨q_k, p⟩` for every round.
    pub fn true_answers(&self, dist: &Distribution) -> Result<Vec<f64>> {
        self.rounds
            .iter()
            .map(|r| r.query.evaluate(dist.masses()))
            .collect()
    }

    /// `max_k |ȳ_k − ⟨q_k, p⟩|`.
    pub fn linf_error(&self, dist: &Distribution) -> Result<f64> {
        crate::domain::linf_error(&self.estimates(), &self.true_answers(dist)?)
    }
}

/// Uniform round index in `[0, d)` for each of `n` users. Depends only on
/// `seed`, `n` and `d`.
pub fn assign_rounds(n: usize, d: usize, seed: SeedStream) -> Vec<usize> {
    let mut rng = seed.derive(labels::PARTITION).rng();
    (0..n).map(|_| rng.random_range(0..d)).collect()
}

/// `n ≥ 8·d·ln n`, the regime of the adaptive accuracy guarantee.
pub fn adsamp_in_regime(n: usize, d: usize) -> bool {
    n as f64 >= 8.0 * d as f64 * (n as f64).ln()
}

/// Pure ε-LDP answers to `d` adaptively chosen queries. Users are split
/// uniformly across rounds; each round's users answer only that round.
pub fn run_adsamp(
    data: &Dataset,
    d: usize,
    r: f64,
    epsilon: f64,
    strategy: &mut dyn AdaptiveStrategy,
    seed: SeedStream,
) -> Result<AdaptiveTranscript> {
    if d == 0 {
        return Err(Error::domain("need at least one round"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::domain(format!(
            "query bound r must be positive, got {r}"
        )));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::domain(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let n = data.len();
    let assignment = assign_rounds(n, d, seed);
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); d];
    for (i, &k) in assignment.iter().enumerate() {
        members[k].push(i);
    }
    let streams = user_streams(seed);

    let mut domain_size = None;
    let mut history: Vec<AnsweredQuery> = Vec::with_capacity(d);
    let mut rounds = Vec::with_capacity(d);
    for (k, users) in members.iter().enumerate() {
        let coords = strategy.next_query(k, &history);
        let expected = *domain_size.get_or_insert(coords.len());
        check_len(expected, coords.len())?;
        let norm = sup_norm(&coords);
        let query = QueryVector::new(coords, r).map_err(|_| Error::QueryValidation {
            round: k,
            norm,
            r,
        })?;
        if k == 0 {
            data.check_domain(expected)?;
        }
        let randomizer = AdaptiveRandomizer::new(&query, epsilon)?;
        let reports: Vec<(usize, AdaptiveReport)> = users
            .par_iter()
            .map(|&i| {
                let report =
                    randomizer.randomize(data.inputs()[i], &mut streams.indexed_rng(i as u64))?;
                Ok((i, report))
            })
            .collect::<Result<_>>()?;
        let estimate = if reports.is_empty() {
            0.0
        } else {
            reports
                .iter()
                .map(|(_, rep)| rep.value())
                .collect::<CompensatedSum>()
                .total()
                / reports.len() as f64
        };
        history.push(AnsweredQuery {
            query: query.clone(),
            estimate,
        });
        rounds.push(AdaptiveRound {
            query,
            estimate,
            active_users: reports.len(),
            empty: reports.is_empty(),
            reports,
        });
    }

    let mut warnings = Vec::new();
    if !adsamp_in_regime(n, d) {
        warnings.push(RegimeWarning::FewUsers {
            n,
            minimum: 8.0 * d as f64 * (n as f64).ln(),
        });
    }
    let empty: Vec<usize> = rounds
        .iter()
        .enumerate()
        .filter(|(_, r)| r.empty)
        .map(|(k, _)| k)
        .collect();
    if !empty.is_empty() {
        warnings.push(RegimeWarning::EmptyRounds { rounds: empty });
    }
    Ok(AdaptiveTranscript {
        rounds,
        assignment,
        params: AdaptiveParams {
            epsilon,
            r,
            n,
            d,
            domain_size: domain_size.unwrap_or(0),
            bias_constant: rr_bias_constant(epsilon),
            seed: seed.value(),
        },
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{histogram, l2_error, nonprivate_baseline, sample_dataset};
    use crate::numeric::mean_std;

    fn seed(s: u64) -> SeedStream {
        SeedStream::new(s)
    }

    #[test]
    fn gauss_large_n_tracks_empirical_answers() {
        let a = QueryMatrix::from_rows(&[vec![1.0, -1.0]], 1.0).unwrap();
        let p = Distribution::new(vec![0.7, 0.3]).unwrap();
        let data = sample_dataset(&p, 1_000_000, &mut seed(1).rng()).unwrap();
        let budget = PrivacyBudget::new(1.0, 0.01).unwrap();
        let out = run_gauss(&a, &data, &budget, seed(2)).unwrap();
        assert!(!out.projected);
        assert_eq!(out.estimate, out.raw_mean);
        let sigma = out.params.noise_variance.sqrt();
        let baseline = nonprivate_baseline(&a, &data).unwrap();
        assert!((out.estimate[0] - baseline[0]).abs() <= 4.0 * sigma / 1000.0);
    }

    #[test]
    fn gauss_small_n_projects() {
        let a = QueryMatrix::random_sphere_columns(20, 30, 1.0, &mut seed(3).rng()).unwrap();
        let data =
            sample_dataset(&Distribution::uniform(30).unwrap(), 50, &mut seed(4).rng()).unwrap();
        let out = run_gauss(&a, &data, &PrivacyBudget::new(1.0, 1e-3).unwrap(), seed(5)).unwrap();
        assert!(out.projected);
        assert!(out.params.projection_threshold > 50.0);
        let coeffs = crate::projection::project_polytope(&PolytopeSpec::new(&a), &out.raw_mean)
            .unwrap()
            .coeffs;
        assert!(coeffs.iter().map(|c| c.abs()).sum::<f64>() <= 1.0 + 1e-12);
    }

    #[test]
    fn gauss_requires_two_elements_and_delta() {
        let a = QueryMatrix::from_rows(&[vec![1.0]], 1.0).unwrap();
        let data = Dataset::new(vec![0, 0]).unwrap();
        let b = PrivacyBudget::new(1.0, 0.1).unwrap();
        assert!(run_gauss(&a, &data, &b, seed(0)).is_err());
        let a = QueryMatrix::identity(2).unwrap();
        assert!(run_gauss(&a, &data, &PrivacyBudget::pure(1.0).unwrap(), seed(0)).is_err());
        assert!(run_gauss(&a, &Dataset::new(vec![2]).unwrap(), &b, seed(0)).is_err());
    }

    #[test]
    fn raw_mean_is_exact_and_reproducible() {
        let a = QueryMatrix::identity(3).unwrap();
        let data = Dataset::new(vec![0, 1, 2, 2, 1]).unwrap();
        let b = PrivacyBudget::new(0.5, 1e-4).unwrap();
        let first = run_gauss(&a, &data, &b, seed(6)).unwrap();
        let again = run_gauss(&a, &data, &b, seed(6)).unwrap();
        assert_eq!(first, again);

        let g = GaussianRandomizer::new(&a, &b).unwrap();
        let streams = user_streams(seed(6));
        let mut sums = [0.0f64; 3];
        for (i, &v) in data.inputs().iter().enumerate() {
            let r = g.randomize(v, &mut streams.indexed_rng(i as u64)).unwrap();
            for (s, x) in sums.iter_mut().zip(&r.0) {
                *s += x;
            }
        }
        for (mean, s) in first.raw_mean.iter().zip(sums) {
            assert!((mean - s / 5.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejsamp_zero_columns_average_noise() {
        let a = QueryMatrix::from_rows(&[vec![0.0; 4], vec![0.0; 4]], 1.0).unwrap();
        let data =
            sample_dataset(&Distribution::uniform(4).unwrap(), 2000, &mut seed(7).rng()).unwrap();
        let out = run_rejsamp(&a, &data, 1.0, seed(8)).unwrap();
        let sigma = out.params.noise_variance.sqrt();
        for x in &out.raw_mean {
            assert!(x.abs() <= 4.0 * sigma / (500f64).sqrt());
        }
    }

    #[test]
    fn rejsamp_checks_and_warnings() {
        let a = QueryMatrix::identity(2).unwrap();
        let data = Dataset::new(vec![0; 50]).unwrap();
        assert!(matches!(
            run_rejsamp(&a, &data, 1.5, seed(0)),
            Err(Error::Domain(_))
        ));
        let out = run_rejsamp(&a, &data, 1.0, seed(0)).unwrap();
        assert!(matches!(
            out.warnings[0],
            RegimeWarning::FewUsers { n: 50, .. }
        ));
        assert!(run_rejsamp(&a, &Dataset::new(vec![0]).unwrap(), 1.0, seed(0)).is_err());
    }

    #[test]
    fn rejsamp_active_users_dominate_binomial() {
        // Mean of n̂/n over 500 runs against 3/8 − 2/n², with a 4σ margin
        // on the Binomial mean, and the 1st percentile against n/4.
        let a = QueryMatrix::random_sphere_columns(3, 5, 1.0, &mut seed(9).rng()).unwrap();
        let n = 1000;
        let dist = Distribution::uniform(5).unwrap();
        let counts: Vec<f64> = (0..500u64)
            .map(|t| {
                let s = seed(10).derive(t);
                let data = sample_dataset(&dist, n, &mut s.derive(labels::DATASET).rng()).unwrap();
                run_rejsamp(&a, &data, 1.0, s).unwrap().active_users as f64
            })
            .collect();
        let floor = 0.375 - 2.0 / (n * n) as f64;
        let (mean, _) = mean_std(&counts);
        let sd = (n as f64 * floor * (1.0 - floor)).sqrt();
        assert!(mean / n as f64 >= floor - 4.0 * sd / (n as f64 * 500f64.sqrt()));
        let mut sorted = counts.clone();
        sorted.sort_by(f64::total_cmp);
        assert!(sorted[4] > n as f64 / 4.0);
    }

    #[test]
    fn phr_single_user_is_a_distribution() {
        let out = run_phr(&Dataset::new(vec![3]).unwrap(), 5, 1.0, seed(11)).unwrap();
        assert!(out.estimate.masses().iter().all(|&x| x >= 0.0));
        assert!((out.estimate.masses().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(run_phr(&Dataset::new(vec![0]).unwrap(), 1, 1.0, seed(0)).is_err());
    }

    #[test]
    fn phr_projection_never_hurts() {
        let p = Distribution::zipf(50, 1.0).unwrap();
        for t in 0..20u64 {
            let data = sample_dataset(&p, 500, &mut seed(12).derive(t).rng()).unwrap();
            let out = run_phr(&data, 50, 1.0, seed(13).derive(t)).unwrap();
            let projected = l2_error(out.estimate.masses(), p.masses()).unwrap();
            let raw = l2_error(&out.raw, p.masses()).unwrap();
            assert!(projected <= raw + 1e-9);
        }
    }

    #[test]
    fn adsamp_single_round_is_unbiased() {
        let p = Distribution::new(vec![0.1, 0.6, 0.3]).unwrap();
        let q = vec![1.0, -0.5, 0.25];
        let truth = 0.1 - 0.3 + 0.075;
        let n = 50;
        let trials = 10_000u64;
        let data = sample_dataset(&p, n, &mut seed(14).rng()).unwrap();
        let empirical = histogram(&data, 3).unwrap();
        let target = dot(&q, empirical.masses());
        let mut acc = CompensatedSum::new();
        for t in 0..trials {
            let mut strategy = ConstantStrategy::new(q.clone());
            let tr = run_adsamp(&data, 1, 1.0, 1.0, &mut strategy, seed(15).derive(t)).unwrap();
            acc.add(tr.rounds[0].estimate);
        }
        let mean = acc.total() / trials as f64;
        let c = rr_bias_constant(1.0);
        assert!((mean - target).abs() <= 4.0 * c / ((n as u64 * trials) as f64).sqrt());
        assert!((target - truth).abs() < 0.5);
    }

    #[test]
    fn adsamp_round_expectation_is_exact() {
        // E[ȳ_k | partition, q_k] = ⟨q_k, p̂_k⟩ where p̂_k is round k's histogram.
        let data = Dataset::new(vec![0, 1, 2, 1, 1, 0, 2, 2, 2, 0]).unwrap();
        let q = vec![0.8, -0.2, 0.5];
        let mut strategy = ConstantStrategy::new(q.clone());
        let tr = run_adsamp(&data, 2, 1.0, 0.7, &mut strategy, seed(16)).unwrap();
        let qv = QueryVector::new(q.clone(), 1.0).unwrap();
        let rr = AdaptiveRandomizer::new(&qv, 0.7).unwrap();
        for (k, round) in tr.rounds.iter().enumerate() {
            let users: Vec<usize> = (0..10).filter(|&i| tr.assignment[i] == k).collect();
            assert_eq!(round.active_users, users.len());
            let expected: f64 = users
                .iter()
                .map(|&i| {
                    let dist = rr.output_distribution(data.inputs()[i]).unwrap();
                    rr.report_magnitude() * (dist[1] - dist[0])
                })
                .sum::<f64>()
                / users.len() as f64;
            let direct: f64 =
                users.iter().map(|&i| q[data.inputs()[i]]).sum::<f64>() / users.len() as f64;
            assert!((expected - direct).abs() < 1e-12);
        }
        assert_eq!(tr.rounds.iter().map(|r| r.active_users).sum::<usize>(), 10);
    }

    #[test]
    fn adsamp_assignment_ignores_data() {
        let d1 = Dataset::new(vec![0; 100]).unwrap();
        let d2 = Dataset::new((0..100).map(|i| i % 4).collect()).unwrap();
        let mut s1 = ConstantStrategy::new(vec![0.5; 4]);
        let mut s2 = ConstantStrategy::new(vec![0.5; 4]);
        let t1 = run_adsamp(&d1, 5, 1.0, 1.0, &mut s1, seed(17)).unwrap();
        let t2 = run_adsamp(&d2, 5, 1.0, 1.0, &mut s2, seed(17)).unwrap();
        assert_eq!(t1.assignment, t2.assignment);
        assert!(t1.assignment.iter().all(|&k| k < 5));
    }

    #[test]
    fn adsamp_rejects_out_of_bound_queries() {
        let data = Dataset::new(vec![0, 1]).unwrap();
        let mut strategy = ConstantStrategy::new(vec![1.5, 0.0]);
        let err = run_adsamp(&data, 2, 1.0, 1.0, &mut strategy, seed(18)).unwrap_err();
        assert!(matches!(err, Error::QueryValidation { round: 0, .. }));
    }

    #[test]
    fn adsamp_flags_empty_rounds() {
        let data = Dataset::new(vec![0, 1]).unwrap();
        let mut strategy = ConstantStrategy::new(vec![1.0, 0.0]);
        let tr = run_adsamp(&data, 20, 1.0, 1.0, &mut strategy, seed(19)).unwrap();
        let empty: Vec<&AdaptiveRound> = tr.rounds.iter().filter(|r| r.empty).collect();
        assert!(!empty.is_empty());
        assert!(empty.iter().all(|r| r.estimate == 0.0));
        assert!(tr
            .warnings
            .iter()
            .any(|w| matches!(w, RegimeWarning::EmptyRounds { .. })));
        assert!(tr
            .warnings
            .iter()
            .any(|w| matches!(w, RegimeWarning::FewUsers { .. })));
    }

    #[test]
    fn adsamp_reports_are_two_point() {
        let data =
            sample_dataset(&Distribution::uniform(6).unwrap(), 300, &mut seed(20).rng()).unwrap();
        let mut strategy = RandomStrategy::new(6, 2.0, seed(21));
        let tr = run_adsamp(&data, 4, 2.0, 0.5, &mut strategy, seed(22)).unwrap();
        let magnitude = rr_bias_constant(0.5) * 2.0;
        for round in &tr.rounds {
            assert!(round
                .reports()
                .iter()
                .all(|(_, r)| r.value().abs() == magnitude));
        }
    }

    #[test]
    fn tracking_adversary_follows_residual_signs() {
        let p = Distribution::new(vec![0.5, 0.5]).unwrap();
        let mut adv = TrackingAdversary::new(&p, 1.0, seed(23));
        let first = adv.next_query(0, &[]);
        assert!(first.iter().all(|x| x.abs() == 1.0));
        let q = QueryVector::new(vec![1.0, -1.0], 1.0).unwrap();
        let history = [AnsweredQuery {
            query: q,
            estimate: -0.3,
        }];
        assert_eq!(adv.next_query(1, &history), vec![-1.0, 1.0]);
    }
}
