//! Reference implementations used as oracles. They favour obviousness over
//! speed and share no code with the library.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};

/// Sylvester–Hadamard entry: `(−1)^popcount(row & col)`.
pub fn sylvester_entry(row: usize, col: usize) -> f64 {
    if (row & col).count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

/// Dense `H·x` with `H` the Sylvester–Hadamard matrix of order `x.len()`.
pub fn naive_hadamard(x: &[f64]) -> Vec<f64> {
    (0..x.len())
        .map(|row| {
            x.iter()
                .enumerate()
                .map(|(col, v)| sylvester_entry(row, col) * v)
                .sum()
        })
        .collect()
}

/// Expected subset-response decode: element `v` owns the `+1` entries of row
/// `v + 1`; reports in the owner's set have weight `e^ε`, the rest weight 1.
pub fn hadamard_expected_decode(masses: &[f64], epsilon: f64) -> Vec<f64> {
    let size = (masses.len() + 1).next_power_of_two();
    let in_set = |v: usize, z: usize| sylvester_entry(v + 1, z) > 0.0;
    let channel = |v: usize, z: usize| {
        let w = if in_set(v, z) { epsilon.exp() } else { 1.0 };
        // Every non-zero row has exactly size/2 positive entries.
        w / ((size / 2) as f64 * (epsilon.exp() + 1.0))
    };
    let output: Vec<f64> = (0..size)
        .map(|z| {
            masses
                .iter()
                .enumerate()
                .map(|(v, p)| p * channel(v, z))
                .sum()
        })
        .collect();
    let c = (epsilon.exp() + 1.0) / (epsilon.exp() - 1.0);
    (0..masses.len())
        .map(|v| {
            let mass_in_set: f64 = (0..size).filter(|&z| in_set(v, z)).map(|z| output[z]).sum();
            2.0 * c * (mass_in_set - 0.5)
        })
        .collect()
}

/// Simplex projection by enumerating every support and keeping the one
/// satisfying the KKT conditions.
pub fn kkt_simplex(x: &[f64]) -> Vec<f64> {
    let j = x.len();
    assert!(j <= 16, "exponential oracle");
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << j) {
        let support: Vec<usize> = (0..j).filter(|&i| mask & (1 << i) != 0).collect();
        let tau = (support.iter().map(|&i| x[i]).sum::<f64>() - 1.0) / support.len() as f64;
        let primal_ok = support.iter().all(|&i| x[i] - tau >= -1e-12);
        let dual_ok = (0..j)
            .filter(|i| mask & (1 << i) == 0)
            .all(|i| x[i] - tau <= 1e-12);
        if primal_ok && dual_ok {
            let w: Vec<f64> = (0..j)
                .map(|i| {
                    if mask & (1 << i) != 0 {
                        (x[i] - tau).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect();
            let dist: f64 = w.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
            if best.as_ref().map_or(true, |(d, _)| dist < *d) {
                best = Some((dist, w));
            }
        }
    }
    best.expect("some support satisfies KKT").1
}

/// Squared distance from `y` to `conv{±a_j}`, by projecting onto the affine
/// hull of every affinely independent set of at most `d + 1` vertices and
/// keeping feasible candidates. Exact up to linear-solve rounding.
pub fn polytope_distance_sq(columns: &[Vec<f64>], y: &[f64]) -> f64 {
    let d = y.len();
    let vertices: Vec<DVector<f64>> = columns
        .iter()
        .flat_map(|c| {
            [
                DVector::from_column_slice(c),
                -DVector::from_column_slice(c),
            ]
        })
        .collect();
    let target = DVector::from_column_slice(y);
    let mut best = f64::INFINITY;
    let mut subset = Vec::new();
    visit_subsets(vertices.len(), d + 1, 0, &mut subset, &mut |chosen| {
        if let Some(point) = affine_projection(&vertices, chosen, &target) {
            best = best.min((point - &target).norm_squared());
        }
    });
    best
}

fn visit_subsets(
    n: usize,
    max_size: usize,
    start: usize,
    current: &mut Vec<usize>,
    f: &mut dyn FnMut(&[usize]),
) {
    if !current.is_empty() {
        f(current);
    }
    if current.len() == max_size {
        return;
    }
    for i in start..n {
        current.push(i);
        visit_subsets(n, max_size, i + 1, current, f);
        current.pop();
    }
}

/// Projection of `target` onto the affine hull of the chosen vertices, if
/// they are affinely independent and the projection lies in their convex hull.
fn affine_projection(
    vertices: &[DVector<f64>],
    chosen: &[usize],
    target: &DVector<f64>,
) -> Option<DVector<f64>> {
    let base = &vertices[chosen[0]];
    if chosen.len() == 1 {
        return Some(base.clone());
    }
    let d = base.len();
    let k = chosen.len() - 1;
    let mut edges = DMatrix::zeros(d, k);
    for (col, &v) in chosen[1..].iter().enumerate() {
        edges.set_column(col, &(&vertices[v] - base));
    }
    let gram = edges.transpose() * &edges;
    if gram.clone().svd(false, false).singular_values.min() < 1e-10 {
        return None;
    }
    let rhs = edges.transpose() * (target - base);
    let lambda = gram.lu().solve(&rhs)?;
    let first = 1.0 - lambda.sum();
    if first < -1e-12 || lambda.iter().any(|&l| l < -1e-12) {
        return None;
    }
    Some(base + edges * lambda)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (mut i, mut j, mut worst) = (0, 0, 0.0_f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        worst = worst.max((i as f64 / a.len() as f64 - j as f64 / b.len() as f64).abs());
    }
    worst
}
