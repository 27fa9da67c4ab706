//! Euclidean projections onto the symmetric polytope `conv{±a_j}` (the image
//! of the unit L1 ball under a query matrix), the probability simplex and
//! the L1 ball.

use serde::Serialize;

use crate::domain::QueryMatrix;
use crate::error::{check_finite, check_len, Error, Result};
use nalgebra::{DMatrix, DVector};

use crate::numeric::dot;

pub const DEFAULT_TOLERANCE: f64 = 1e-10;
/// Iteration cap per domain element.
pub const DEFAULT_ITERS_PER_COLUMN: usize = 50;

/// Conditional-gradient variant used by [`project_polytope`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub enum FrankWolfeVariant {
    /// Fully corrective (minimum-norm-point) steps; exact after finitely
    /// many iterations, robust on thin polytopes.
    #[default]
    FullyCorrective,
    /// Frank–Wolfe with away steps; linear rate that degrades on thin polytopes.
    AwayStep,
    /// Plain Frank–Wolfe; sublinear, kept for comparison.
    Vanilla,
}

/// A projection problem onto `A·B₁ᴶ`.
#[derive(Debug, Clone, Copy)]
pub struct PolytopeSpec<'a> {
    matrix: &'a QueryMatrix,
    tolerance: f64,
    max_iters: usize,
    variant: FrankWolfeVariant,
}

impl<'a> PolytopeSpec<'a> {
    pub fn new(matrix: &'a QueryMatrix) -> Self {
        PolytopeSpec {
            matrix,
            tolerance: DEFAULT_TOLERANCE,
            max_iters: DEFAULT_ITERS_PER_COLUMN * matrix.domain_size(),
            variant: FrankWolfeVariant::default(),
        }
    }

    /// Target for the Frank–Wolfe duality gap of `½‖Ax − target‖²`.
    pub fn with_tolerance(mut self, tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance > 0.0) {
            return Err(Error::domain(format!(
                "tolerance must be positive, got {tolerance}"
            )));
        }
        self.tolerance = tolerance;
        Ok(self)
    }

    pub fn with_max_iters(mut self, max_iters: usize) -> Result<Self> {
        if max_iters == 0 {
            return Err(Error::domain("max_iters must be at least 1"));
        }
        self.max_iters = max_iters;
        Ok(self)
    }

    pub fn with_variant(mut self, variant: FrankWolfeVariant) -> Self {
        self.variant = variant;
        self
    }

    pub fn matrix(&self) -> &'a QueryMatrix {
        self.matrix
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn max_iters(&self) -> usize {
        self.max_iters
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolytopeProjection {
    /// `A·coeffs`.
    pub point: Vec<f64>,
    /// Vertex coefficients with `‖coeffs‖₁ <= 1`.
    pub coeffs: Vec<f64>,
    /// Final duality gap; an upper bound on the suboptimality of `½‖point − target‖²`.
    pub gap: f64,
    pub iterations: usize,
    /// `false` when `max_iters` ran out before the gap reached the tolerance.
    pub converged: bool,
}

/// Projects `target` onto `conv{±a_j}` by conditional gradient over the
/// `2J` signed vertices. Ties in vertex selection go to the lowest index.
pub fn project_polytope(spec: &PolytopeSpec<'_>, target: &[f64]) -> Result<PolytopeProjection> {
    let a = spec.matrix;
    check_len(a.num_queries(), target.len())?;
    check_finite(target, "projection target")?;
    let Solution {
        mut coeffs,
        gap,
        iterations,
    } = match spec.variant {
        FrankWolfeVariant::FullyCorrective => min_norm_point(spec, target)?,
        FrankWolfeVariant::AwayStep | FrankWolfeVariant::Vanilla => {
            line_search_steps(spec, target)?
        }
    };

    let l1: f64 = coeffs.iter().map(|c| c.abs()).sum();
    if l1 > 1.0 {
        for c in &mut coeffs {
            *c /= l1;
        }
    }
    let point = a.apply(&coeffs)?;
    Ok(PolytopeProjection {
        point,
        coeffs,
        gap,
        iterations,
        converged: gap <= spec.tolerance,
    })
}

struct Solution {
    coeffs: Vec<f64>,
    gap: f64,
    iterations: usize,
}

/// Signed vertex: atom `2k` is `+a_k`, atom `2k + 1` is `−a_k`.
fn atom_vector(a: &QueryMatrix, atom: usize) -> Vec<f64> {
    let sign = if atom % 2 == 0 { 1.0 } else { -1.0 };
    a.column(atom / 2).iter().map(|x| sign * x).collect()
}

/// Gradient of `½‖x − target‖²` at `point`, the scores `Aᵀg`, the best
/// vertex for the linear minimization and the duality gap.
fn linear_minimization(
    a: &QueryMatrix,
    point: &[f64],
    target: &[f64],
) -> Result<(Vec<f64>, Vec<f64>, usize, f64)> {
    let grad: Vec<f64> = point.iter().zip(target).map(|(w, t)| w - t).collect();
    let scores = a.apply_transpose(&grad)?;
    let (col, abs) = scores
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (k, s)| {
            if s.abs() > best.1 {
                (k, s.abs())
            } else {
                best
            }
        });
    let atom = 2 * col + usize::from(scores[col] > 0.0);
    let gap = dot(&grad, point) + abs;
    Ok((grad, scores, atom, gap))
}

/// Wolfe's minimum-norm-point method: a Frank–Wolfe step adds a vertex, then
/// the iterate is re-optimized exactly over the affine hull of the active
/// vertices, dropping any that leave the hull. Terminates finitely.
fn min_norm_point(spec: &PolytopeSpec<'_>, target: &[f64]) -> Result<Solution> {
    let a = spec.matrix;
    let (_, _, first, _) = linear_minimization(a, &vec![0.0; target.len()], target)?;
    let mut active = vec![first];
    let mut lambda = vec![1.0];
    let mut point = atom_vector(a, first);
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < spec.max_iters {
        let (grad, _, fw_atom, fw_gap) = linear_minimization(a, &point, target)?;
        gap = fw_gap;
        if gap <= spec.tolerance || active.contains(&fw_atom) {
            break;
        }
        iterations += 1;
        active.push(fw_atom);
        lambda.push(0.0);

        for _ in 0..=active.len() {
            let vertices: Vec<Vec<f64>> = active.iter().map(|&s| atom_vector(a, s)).collect();
            let Some(alpha) = affine_minimizer(&vertices, target) else {
                // Numerically dependent vertex: fall back to a line-search step towards it.
                active.pop();
                lambda.pop();
                let vertex = atom_vector(a, fw_atom);
                let image: Vec<f64> = vertex.iter().zip(&point).map(|(v, w)| v - w).collect();
                let curvature = dot(&image, &image);
                if curvature > 0.0 {
                    let step = (-dot(&grad, &image) / curvature).clamp(0.0, 1.0);
                    for l in &mut lambda {
                        *l *= 1.0 - step;
                    }
                    active.push(fw_atom);
                    lambda.push(step);
                }
                break;
            };
            if alpha.iter().all(|&x| x > 0.0) {
                lambda = alpha;
                break;
            }
            // Move towards the affine minimizer until the first weight hits zero.
            let (blocking, theta) = lambda
                .iter()
                .zip(&alpha)
                .enumerate()
                .filter(|(_, (_, &al))| al <= 0.0)
                .map(|(i, (&l, &al))| (i, l / (l - al)))
                .fold(
                    (0, f64::INFINITY),
                    |best, c| if c.1 < best.1 { c } else { best },
                );
            for (l, al) in lambda.iter_mut().zip(&alpha) {
                *l += theta * (al - *l);
            }
            lambda[blocking] = 0.0;
            let keep: Vec<bool> = lambda.iter().map(|&l| l > 0.0).collect();
            let mut k = keep.iter();
            active.retain(|_| *k.next().unwrap());
            lambda.retain(|&l| l > 0.0);
        }

        let total: f64 = lambda.iter().sum();
        for l in &mut lambda {
            *l /= total;
        }
        point = vec![0.0; target.len()];
        for (&s, &l) in active.iter().zip(&lambda) {
            for (p, v) in point.iter_mut().zip(atom_vector(a, s)) {
                *p += l * v;
            }
        }
    }
    if iterations == spec.max_iters {
        gap = linear_minimization(a, &point, target)?.3;
    }

    let mut coeffs = vec![0.0; a.domain_size()];
    for (&s, &l) in active.iter().zip(&lambda) {
        coeffs[s / 2] += if s % 2 == 0 { l } else { -l };
    }
    Ok(Solution {
        coeffs,
        gap,
        iterations,
    })
}

/// Weights `α` with `Σα = 1` minimizing `‖Σ α_i v_i − target‖²`, from the
/// bordered Gram system. `None` when the vertices are affinely dependent.
fn affine_minimizer(vertices: &[Vec<f64>], target: &[f64]) -> Option<Vec<f64>> {
    let k = vertices.len();
    let shifted: Vec<Vec<f64>> = vertices
        .iter()
        .map(|v| v.iter().zip(target).map(|(x, t)| x - t).collect())
        .collect();
    let mut system = DMatrix::zeros(k + 1, k + 1);
    for i in 0..k {
        for j in 0..=i {
            let g = dot(&shifted[i], &shifted[j]);
            system[(i, j)] = g;
            system[(j, i)] = g;
        }
        system[(i, k)] = 1.0;
        system[(k, i)] = 1.0;
    }
    let mut rhs = DVector::zeros(k + 1);
    rhs[k] = 1.0;
    let solution = system.clone().lu().solve(&rhs)?;
    let residual = (&system * &solution - &rhs).amax();
    let alpha: Vec<f64> = solution.iter().take(k).copied().collect();
    (alpha.iter().all(|x| x.is_finite()) && residual <= 1e-9).then_some(alpha)
}

/// Frank–Wolfe with exact line search, optionally with away steps.
fn line_search_steps(spec: &PolytopeSpec<'_>, target: &[f64]) -> Result<Solution> {
    let a = spec.matrix;
    let j = a.domain_size();
    // Atom 2k is +a_k, atom 2k+1 is −a_k. Start at ½(+a_0) + ½(−a_0) = 0.
    let mut weights = vec![0.0; 2 * j];
    weights[0] = 0.5;
    weights[1] = 0.5;
    let mut coeffs = vec![0.0; j];
    let mut point = vec![0.0; a.num_queries()];
    let mut gap = f64::INFINITY;
    let mut iterations = 0;

    while iterations < spec.max_iters {
        let grad: Vec<f64> = point.iter().zip(target).map(|(w, t)| w - t).collect();
        let scores = a.apply_transpose(&grad)?;
        let grad_dot_point = dot(&grad, &point);

        // Linear minimization: the atom minimizing ⟨g, ±a_k⟩.
        let (fw_col, fw_abs) =
            scores
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (k, s)| {
                    if s.abs() > best.1 {
                        (k, s.abs())
                    } else {
                        best
                    }
                });
        let fw_atom = 2 * fw_col + usize::from(scores[fw_col] > 0.0);
        gap = grad_dot_point + fw_abs;
        if gap <= spec.tolerance {
            break;
        }
        iterations += 1;

        let atom_value = |atom: usize| {
            if atom % 2 == 0 {
                scores[atom / 2]
            } else {
                -scores[atom / 2]
            }
        };
        let away = match spec.variant {
            FrankWolfeVariant::Vanilla | FrankWolfeVariant::FullyCorrective => None,
            FrankWolfeVariant::AwayStep => weights
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .fold(None, |best: Option<(usize, f64)>, (atom, _)| {
                    let v = atom_value(atom);
                    match best {
                        Some((_, bv)) if bv >= v => best,
                        _ => Some((atom, v)),
                    }
                })
                .filter(|&(atom, v)| weights[atom] < 1.0 && v - grad_dot_point > gap),
        };

        // Image of the step direction in ℝᵈ and the largest feasible step.
        let signed_column = |atom: usize| -> Vec<f64> {
            let sign = if atom % 2 == 0 { 1.0 } else { -1.0 };
            a.column(atom / 2).iter().map(|x| sign * x).collect()
        };
        let (image, step_cap) = match away {
            None => {
                let vertex = signed_column(fw_atom);
                (
                    vertex
                        .iter()
                        .zip(&point)
                        .map(|(v, w)| v - w)
                        .collect::<Vec<f64>>(),
                    1.0,
                )
            }
            Some((atom, _)) => {
                let vertex = signed_column(atom);
                let w = weights[atom];
                (
                    point.iter().zip(&vertex).map(|(w, v)| w - v).collect(),
                    w / (1.0 - w),
                )
            }
        };
        let curvature = dot(&image, &image);
        if curvature <= 0.0 {
            break;
        }
        let step = (-dot(&grad, &image) / curvature).clamp(0.0, step_cap);

        match away {
            None => {
                for w in &mut weights {
                    *w *= 1.0 - step;
                }
                weights[fw_atom] += step;
            }
            Some((atom, _)) => {
                for w in &mut weights {
                    *w *= 1.0 + step;
                }
                weights[atom] -= step;
                if step >= step_cap {
                    weights[atom] = 0.0;
                }
            }
        }
        for w in &mut weights {
            if *w < 0.0 {
                *w = 0.0;
            }
        }
        for (k, c) in coeffs.iter_mut().enumerate() {
            *c = weights[2 * k] - weights[2 * k + 1];
        }
        for (p, d) in point.iter_mut().zip(&image) {
            *p += step * d;
        }
    }

    Ok(Solution {
        coeffs,
        gap,
        iterations,
    })
}

/// Exact Euclidean projection onto the probability simplex by sorting and
/// thresholding. Members of the simplex are returned unchanged.
pub fn project_simplex(target: &[f64]) -> Result<Vec<f64>> {
    if target.is_empty() {
        return Err(Error::domain("cannot project an empty vector"));
    }
    check_finite(target, "projection target")?;
    let total: f64 = target.iter().sum();
    let slack = 4.0 * f64::EPSILON * target.len() as f64;
    if target.iter().all(|&x| x >= 0.0) && (total - 1.0).abs() <= slack {
        return Ok(target.to_vec());
    }
    let tau = simplex_threshold(target, 1.0);
    Ok(target.iter().map(|&x| (x - tau).max(0.0)).collect())
}

/// `τ` such that `Σ max(x − τ, 0) = radius`.
fn simplex_threshold(x: &[f64], radius: f64) -> f64 {
    let mut sorted = x.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumulative = 0.0;
    let mut tau = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumulative += u;
        let candidate = (cumulative - radius) / (k + 1) as f64;
        if u - candidate > 0.0 {
            tau = candidate;
        } else {
            break;
        }
    }
    tau
}

/// Euclidean projection onto the unit L1 ball.
pub fn project_l1_ball(target: &[f64]) -> Result<Vec<f64>> {
    check_finite(target, "projection target")?;
    if target.iter().map(|x| x.abs()).sum::<f64>() <= 1.0 {
        return Ok(target.to_vec());
    }
    let magnitudes: Vec<f64> = target.iter().map(|x| x.abs()).collect();
    let tau = simplex_threshold(&magnitudes, 1.0);
    Ok(target
        .iter()
        .map(|&x| x.signum() * (x.abs() - tau).max(0.0))
        .collect())
}

/// Projects `A·coeffs + noise` and returns `(‖ŷ − y‖², 4·max_j |⟨noise, a_j⟩|)`.
pub fn projection_error_bound_check(
    spec: &PolytopeSpec<'_>,
    coeffs: &[f64],
    noise: &[f64],
) -> Result<(f64, f64)> {
    let a = spec.matrix;
    check_len(a.domain_size(), coeffs.len())?;
    check_finite(coeffs, "coefficients")?;
    let l1: f64 = coeffs.iter().map(|c| c.abs()).sum();
    if l1 > 1.0 + 1e-12 {
        return Err(Error::domain(format!(
            "coefficients have L1 norm {l1}; the point is outside the polytope"
        )));
    }
    let truth = a.apply(coeffs)?;
    check_len(truth.len(), noise.len())?;
    let noisy: Vec<f64> = truth.iter().zip(noise).map(|(y, z)| y + z).collect();
    let projected = project_polytope(spec, &noisy)?;
    let lhs = projected
        .point
        .iter()
        .zip(&truth)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let rhs = 4.0
        * a.apply_transpose(noise)?
            .iter()
            .fold(0.0_f64, |m, s| m.max(s.abs()));
    Ok((lhs, rhs))
}
