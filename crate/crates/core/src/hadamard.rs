//! Sylvester–Hadamard machinery: padded sizes, row supports, the fast
//! Walsh–Hadamard transform and the Hadamard-response decoder.
//!
//! Rows and columns are 0-based: `H[row][col] = (-1)^popcount(row & col)`.
//! Domain element `v` is encoded by row `v + 1`, so row 0 (all ones) is never
//! used by an input.

use rayon::prelude::*;
use serde::Serialize;

use crate::domain::Distribution;
use crate::error::{check_len, Error, Result};
use crate::numeric::{rr_bias_constant, CompensatedSum};
use crate::protocols::run_phr;
use crate::randomizers::HadamardReport;
use crate::rng::{labels, SeedStream};

/// Smallest power of two `>= J + 1`.
pub fn padded_size(domain_size: usize) -> Result<usize> {
    if domain_size == 0 {
        return Err(Error::domain("domain size must be at least 1"));
    }
    domain_size
        .checked_add(1)
        .and_then(usize::checked_next_power_of_two)
        .ok_or_else(|| Error::domain(format!("domain size {domain_size} is too large to pad")))
}

fn check_power_of_two(len: usize) -> Result<()> {
    if len.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::domain(format!("length {len} is not a power of two")))
    }
}

/// `true` when `H[row][col] = +1`.
#[inline]
pub(crate) fn is_positive(row: usize, col: usize) -> bool {
    (row & col).count_ones() % 2 == 0
}

/// The entry `H[row][col]` of the `size × size` Sylvester matrix, as ±1.
pub fn hadamard_entry(row: usize, col: usize, size: usize) -> Result<i8> {
    check_power_of_two(size)?;
    for index in [row, col] {
        if index >= size {
            return Err(Error::IndexOutOfRange { index, size });
        }
    }
    Ok(if is_positive(row, col) { 1 } else { -1 })
}

/// Columns where the row encoding element `v` is `+1`. Has `size / 2` entries.
pub fn row_support(v: usize, size: usize) -> Result<Vec<usize>> {
    check_power_of_two(size)?;
    if v + 1 >= size {
        return Err(Error::IndexOutOfRange {
            index: v,
            size: size - 1,
        });
    }
    Ok((0..size).filter(|&w| is_positive(v + 1, w)).collect())
}

/// In-place unnormalized transform: `x <- H·x`.
pub fn fwht_in_place(x: &mut [f64]) -> Result<()> {
    check_power_of_two(x.len())?;
    let mut half = 1;
    while half < x.len() {
        for block in x.chunks_exact_mut(2 * half) {
            let (lo, hi) = block.split_at_mut(half);
            for (a, b) in lo.iter_mut().zip(hi) {
                let (s, t) = (*a + *b, *a - *b);
                *a = s;
                *b = t;
            }
        }
        half *= 2;
    }
    Ok(())
}

pub fn fwht(mut x: Vec<f64>) -> Result<Vec<f64>> {
    fwht_in_place(&mut x)?;
    Ok(x)
}

/// Parameters of one Hadamard-response instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HadamardContext {
    domain_size: usize,
    padded_size: usize,
    epsilon: f64,
    bias_constant: f64,
}

impl HadamardContext {
    pub fn new(domain_size: usize, epsilon: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::domain(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        Ok(HadamardContext {
            domain_size,
            padded_size: padded_size(domain_size)?,
            epsilon,
            bias_constant: rr_bias_constant(epsilon),
        })
    }

    pub fn domain_size(&self) -> usize {
        self.domain_size
    }

    pub fn padded_size(&self) -> usize {
        self.padded_size
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// `(e^ε + 1)/(e^ε − 1)`.
    pub fn bias_constant(&self) -> f64 {
        self.bias_constant
    }
}

/// Integer histogram of reports over the padded index set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ReportCounts {
    counts: Vec<u64>,
    total: u64,
}

impl ReportCounts {
    pub fn new(padded_size: usize) -> Self {
        ReportCounts {
            counts: vec![0; padded_size],
            total: 0,
        }
    }

    pub fn from_reports<'a, I>(padded_size: usize, reports: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a HadamardReport>,
    {
        let mut counts = Self::new(padded_size);
        for report in reports {
            counts.record(report.index())?;
        }
        Ok(counts)
    }

    pub fn from_counts(counts: Vec<u64>) -> Self {
        let total = counts.iter().sum();
        ReportCounts { counts, total }
    }

    pub fn record(&mut self, index: usize) -> Result<()> {
        let size = self.counts.len();
        let slot = self
            .counts
            .get_mut(index)
            .ok_or(Error::IndexOutOfRange { index, size })?;
        *slot += 1;
        self.total += 1;
        Ok(())
    }

    /// Adds another shard's counts.
    pub fn merge(&mut self, other: &ReportCounts) -> Result<()> {
        check_len(self.counts.len(), other.counts.len())?;
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// `q(w) = count(w)/n`.
    pub fn frequencies(&self) -> Result<Vec<f64>> {
        if self.total == 0 {
            return Err(Error::domain("no reports recorded"));
        }
        let n = self.total as f64;
        Ok(self.counts.iter().map(|&c| c as f64 / n).collect())
    }
}

/// Unbiased (unprojected) frequency estimate for every domain element.
pub fn decode(counts: &ReportCounts, ctx: &HadamardContext) -> Result<Vec<f64>> {
    decode_frequencies(&counts.frequencies()?, ctx)
}

/// [`decode`] on a real-valued report distribution `q` over the padded set.
pub fn decode_frequencies(q: &[f64], ctx: &HadamardContext) -> Result<Vec<f64>> {
    let mut all = decode_all_rows(q, ctx)?;
    all.truncate(ctx.domain_size + 1);
    all.remove(0);
    Ok(all)
}

/// Diagnostic decode of every transform row, including row 0 and the
/// padding rows past `J`, all scaled by the bias constant. Entry `v + 1`
/// is the estimate for element `v`.
pub fn decode_all_rows(q: &[f64], ctx: &HadamardContext) -> Result<Vec<f64>> {
    check_len(ctx.padded_size, q.len())?;
    let mut h = fwht(q.to_vec())?;
    for x in &mut h {
        *x *= ctx.bias_constant;
    }
    Ok(h)
}

/// Decode of a single element through the mass of its row support:
/// `2·c·(q(C_v) − ½)`.
pub fn decode_subset_form(q: &[f64], ctx: &HadamardContext, v: usize) -> Result<f64> {
    check_len(ctx.padded_size, q.len())?;
    if v >= ctx.domain_size {
        return Err(Error::IndexOutOfRange {
            index: v,
            size: ctx.domain_size,
        });
    }
    let mass: CompensatedSum = row_support(v, ctx.padded_size)?
        .into_iter()
        .map(|w| q[w])
        .collect();
    Ok(2.0 * ctx.bias_constant * (mass.total() - 0.5))
}

/// One tail-probability comparison at `λ = multiple·σ/√n`.
#[derive(Debug, Clone, Serialize)]
pub struct TailCheck {
    pub multiple: f64,
    pub lambda: f64,
    /// Largest empirical tail frequency over coordinates.
    pub empirical: f64,
    /// `2·exp(−λ²n/(2σ²))·(1 + 5/√trials)`.
    pub bound: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SubGaussianVerdict {
    pub variance_proxy: f64,
    pub tails: Vec<TailCheck>,
    pub max_variance: f64,
    /// `σ²/n·(1 + 5/√trials)`.
    pub variance_bound: f64,
    pub pass: bool,
}

/// Monte-Carlo check that every coordinate of the raw decode is
/// sub-Gaussian around `p` with variance proxy `σ² = 4c²` per user.
pub fn subgaussian_check(
    ctx: &HadamardContext,
    dist: &Distribution,
    n: usize,
    trials: usize,
    seed: SeedStream,
) -> Result<SubGaussianVerdict> {
    const MULTIPLES: [f64; 3] = [1.0, 2.0, 3.0];
    if trials < 1000 {
        return Err(Error::domain(format!(
            "need at least 1000 trials, got {trials}"
        )));
    }
    check_len(ctx.domain_size, dist.domain_size())?;
    let p = dist.masses();
    let deviations: Vec<Vec<f64>> = (0..trials)
        .into_par_iter()
        .map(|t| -> Result<Vec<f64>> {
            let trial = seed.derive(labels::TRIAL).derive(t as u64);
            let data =
                crate::domain::sample_dataset(dist, n, &mut trial.derive(labels::DATASET).rng())?;
            let raw = run_phr(
                &data,
                ctx.domain_size,
                ctx.epsilon,
                trial.derive(labels::PROTOCOL),
            )?
            .raw;
            Ok(raw.iter().zip(p).map(|(a, b)| a - b).collect())
        })
        .collect::<Result<_>>()?;

    let sigma2 = 4.0 * ctx.bias_constant * ctx.bias_constant;
    let nf = n as f64;
    let slack = 1.0 + 5.0 / (trials as f64).sqrt();
    let tails: Vec<TailCheck> = MULTIPLES
        .iter()
        .map(|&m| {
            let lambda = m * (sigma2 / nf).sqrt();
            let empirical = (0..ctx.domain_size)
                .map(|v| {
                    deviations
                        .iter()
                        .filter(|dev| dev[v].abs() >= lambda)
                        .count() as f64
                        / trials as f64
                })
                .fold(0.0, f64::max);
            TailCheck {
                multiple: m,
                lambda,
                empirical,
                bound: 2.0 * (-lambda * lambda * nf / (2.0 * sigma2)).exp() * slack,
            }
        })
        .collect();
    let max_variance = (0..ctx.domain_size)
        .map(|v| deviations.iter().map(|dev| dev[v] * dev[v]).sum::<f64>() / trials as f64)
        .fold(0.0, f64::max);
    let variance_bound = sigma2 / nf * slack;
    let pass = tails.iter().all(|t| t.empirical <= t.bound) && max_variance <= variance_bound;
    Ok(SubGaussianVerdict {
        variance_proxy: sigma2,
        tails,
        max_variance,
        variance_bound,
        pass,
    })
}

/// Expected raw decode under `dist`, computed from the exact report
/// distribution instead of sampled reports. Used to check unbiasedness without Monte-Carlo noise.
pub fn expected_decode(ctx: &HadamardContext, dist: &Distribution) -> Result<Vec<f64>> {
    use crate::randomizers::{HadamardRandomizer, LocalRandomizer};
    check_len(ctx.domain_size, dist.domain_size())?;
    let channel = HadamardRandomizer::new(ctx.domain_size, ctx.epsilon)?;
    let mut q = vec![0.0; ctx.padded_size];
    for (v, &pv) in dist.masses().iter().enumerate() {
        for (qw, pw) in q.iter_mut().zip(channel.output_distribution(v)?) {
            *qw += pv * pw;
        }
    }
    decode_frequencies(&q, ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    /// Recursive doubling `H_{2k} = [[H, H], [H, −H]]`.
    fn sylvester(size: usize) -> Vec<Vec<f64>> {
        let mut h = vec![vec![1.0]];
        while h.len() < size {
            let k = h.len();
            let mut next = vec![vec![0.0; 2 * k]; 2 * k];
            for i in 0..k {
                for j in 0..k {
                    next[i][j] = h[i][j];
                    next[i][j + k] = h[i][j];
                    next[i + k][j] = h[i][j];
                    next[i + k][j + k] = -h[i][j];
                }
            }
            h = next;
        }
        h
    }

    fn naive_multiply(x: &[f64]) -> Vec<f64> {
        sylvester(x.len())
            .iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    #[test]
    fn padded_size_examples() {
        assert_eq!(padded_size(1).unwrap(), 2);
        assert_eq!(padded_size(7).unwrap(), 8);
        assert_eq!(padded_size(8).unwrap(), 16);
        assert!(padded_size(0).is_err());
    }

    #[test]
    fn padded_size_range() {
        for j in (1..=1_000_000usize)
            .step_by(997)
            .chain([1, 2, 3, 1_000_000])
        {
            let p = padded_size(j).unwrap();
            assert!(p.is_power_of_two() && p > j && p <= 2 * j + 1, "J = {j}");
        }
    }

    #[test]
    fn entries_match_sylvester_doubling() {
        for size in [2, 4, 8, 16, 32] {
            let h = sylvester(size);
            for (row, entries) in h.iter().enumerate() {
                for (col, &entry) in entries.iter().enumerate() {
                    assert_eq!(hadamard_entry(row, col, size).unwrap() as f64, entry);
                }
            }
        }
        let second: Vec<i8> = (0..4).map(|c| hadamard_entry(1, c, 4).unwrap()).collect();
        assert_eq!(second, vec![1, -1, 1, -1]);
        assert!((0..8).all(|c| hadamard_entry(0, c, 8).unwrap() == 1));
        assert!(hadamard_entry(4, 0, 4).is_err());
        assert!(hadamard_entry(0, 0, 6).is_err());
    }

    #[test]
    fn rows_are_orthogonal() {
        for size in [2usize, 4, 8, 16] {
            for a in 0..size {
                for b in 0..size {
                    let ip: i32 = (0..size)
                        .map(|c| {
                            hadamard_entry(a, c, size).unwrap() as i32
                                * hadamard_entry(b, c, size).unwrap() as i32
                        })
                        .sum();
                    assert_eq!(ip, if a == b { size as i32 } else { 0 });
                }
            }
        }
    }

    #[test]
    fn row_support_examples() {
        assert_eq!(row_support(0, 4).unwrap(), vec![0, 2]);
        for size in [2usize, 4, 8, 16] {
            for v in 0..size - 1 {
                assert_eq!(row_support(v, size).unwrap().len(), size / 2);
            }
        }
        for size in [4usize, 8, 16] {
            for u in 0..size - 1 {
                for v in 0..size - 1 {
                    if u == v {
                        continue;
                    }
                    let cu = row_support(u, size).unwrap();
                    let cv = row_support(v, size).unwrap();
                    let common = cu.iter().filter(|w| cv.contains(w)).count();
                    assert_eq!(common, size / 4);
                }
            }
        }
        assert!(row_support(3, 4).is_err());
    }

    #[test]
    fn fwht_examples() {
        assert_eq!(fwht(vec![1.0, 0.0, 0.0, 0.0]).unwrap(), vec![1.0; 4]);
        assert_eq!(fwht(vec![1.0; 4]).unwrap(), vec![4.0, 0.0, 0.0, 0.0]);
        assert!(fwht(vec![1.0; 3]).is_err());

        let mut rng = SeedStream::new(9).rng();
        let x: Vec<f64> = (0..64).map(|_| rng.random_range(-1.0..1.0)).collect();
        let fast = fwht(x.clone()).unwrap();
        for (a, b) in fast.iter().zip(naive_multiply(&x)) {
            assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn uniform_reports_decode_to_zero() {
        let ctx = HadamardContext::new(5, 1.0).unwrap();
        let q = vec![1.0 / 8.0; 8];
        for x in decode_frequencies(&q, &ctx).unwrap() {
            assert!(x.abs() < 1e-15);
        }
    }

    #[test]
    fn subset_form_examples() {
        let ctx = HadamardContext::new(3, 3f64.ln()).unwrap();
        // Put q(C_0) = 1/2.
        let q = vec![0.25; 4];
        assert!(decode_subset_form(&q, &ctx, 0).unwrap().abs() < 1e-15);
        // Exact report distribution of a point mass on element 0.
        let q = [0.375, 0.125, 0.375, 0.125];
        assert!((decode_subset_form(&q, &ctx, 0).unwrap() - 1.0).abs() < 1e-14);
        assert!(decode_subset_form(&q, &ctx, 3).is_err());
    }

    #[test]
    fn exact_channel_decode_is_unbiased() {
        let ctx = HadamardContext::new(3, 1.0).unwrap();
        let p = Distribution::new(vec![0.2, 0.3, 0.5]).unwrap();
        let expected = expected_decode(&ctx, &p).unwrap();
        for (a, b) in expected.iter().zip(p.masses()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_unbiasedness_up_to_fifteen() {
        let mut rng = SeedStream::new(21).rng();
        for j in 2..=15 {
            let ctx = HadamardContext::new(j, 0.7).unwrap();
            let w: Vec<f64> = (0..j).map(|_| rng.random::<f64>()).collect();
            let p = Distribution::from_weights(w).unwrap();
            for (a, b) in expected_decode(&ctx, &p).unwrap().iter().zip(p.masses()) {
                assert!((a - b).abs() < 1e-12, "J = {j}");
            }
        }
    }

    #[test]
    fn debug_decode_exposes_padding_rows() {
        let ctx = HadamardContext::new(5, 1.0).unwrap();
        let q = vec![0.125; 8];
        let all = decode_all_rows(&q, &ctx).unwrap();
        assert_eq!(all.len(), 8);
        assert!((all[0] - ctx.bias_constant()).abs() < 1e-15);
    }

    #[test]
    fn counts_merge() {
        let mut a = ReportCounts::from_counts(vec![1, 2, 0, 0]);
        a.merge(&ReportCounts::from_counts(vec![0, 1, 1, 0]))
            .unwrap();
        assert_eq!(a.counts(), &[1, 3, 1, 0]);
        assert_eq!(a.total(), 5);
        assert!(a.record(4).is_err());
        assert!(ReportCounts::new(4).frequencies().is_err());
    }

    #[test]
    fn subgaussian_tails_point_mass() {
        let ctx = HadamardContext::new(7, 1.0).unwrap();
        let p = Distribution::point(7, 2).unwrap();
        let verdict = subgaussian_check(&ctx, &p, 500, 1000, SeedStream::new(4)).unwrap();
        assert!(verdict.pass, "{verdict:?}");
        assert!(subgaussian_check(&ctx, &p, 500, 999, SeedStream::new(4)).is_err());
    }

    proptest! {
        #[test]
        fn fwht_is_an_involution_up_to_scale(x in prop::collection::vec(-100.0f64..100.0, 32)) {
            let twice = fwht(fwht(x.clone()).unwrap()).unwrap();
            for (a, b) in twice.iter().zip(&x) {
                prop_assert!((a - 32.0 * b).abs() <= 1e-9 * (1.0 + (32.0 * b).abs()));
            }
        }

        #[test]
        fn decode_forms_agree(counts in prop::collection::vec(0u64..50, 16), eps in 0.1f64..3.0) {
            prop_assume!(counts.iter().sum::<u64>() > 0);
            let ctx = HadamardContext::new(11, eps).unwrap();
            let counts = ReportCounts::from_counts(counts);
            let q = counts.frequencies().unwrap();
            let fast = decode(&counts, &ctx).unwrap();
            for (v, value) in fast.iter().enumerate() {
                prop_assert!((value - decode_subset_form(&q, &ctx, v).unwrap()).abs() <= 1e-12);
            }
        }

        #[test]
        fn decode_is_affine(
            q1 in prop::collection::vec(0.0f64..1.0, 8),
            q2 in prop::collection::vec(0.0f64..1.0, 8),
            t in 0.0f64..1.0,
        ) {
            let ctx = HadamardContext::new(6, 1.0).unwrap();
            let mix: Vec<f64> = q1.iter().zip(&q2).map(|(a, b)| t * a + (1.0 - t) * b).collect();
            let d1 = decode_frequencies(&q1, &ctx).unwrap();
            let d2 = decode_frequencies(&q2, &ctx).unwrap();
            let dm = decode_frequencies(&mix, &ctx).unwrap();
            for v in 0..6 {
                prop_assert!((dm[v] - (t * d1[v] + (1.0 - t) * d2[v])).abs() <= 1e-12);
            }
        }
    }
}
