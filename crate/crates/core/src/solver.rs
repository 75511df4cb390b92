//! Input design over the correlation polytope.
//!
//! Points of the polytope are parametrized by weights over its distinct
//! vertices `𝓔·ξ_j(1:n)`. D and A are solved with pairwise Frank-Wolfe and
//! an exact line search; E with a projected subgradient method.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design_map::{self, CorrelationVector, SignPattern, SimplexWeights};
use crate::error::{Error, Result};
use crate::estimator::InputSequence;
use crate::kernels::{self, KernelSpec};
use crate::matrix::{self, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Criterion {
    D,
    A,
    E,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::D, Criterion::A, Criterion::E];
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Criterion::D => "D",
            Criterion::A => "A",
            Criterion::E => "E",
        };
        f.write_str(s)
    }
}

impl FromStr for Criterion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "D" => Ok(Criterion::D),
            "A" => Ok(Criterion::A),
            "E" => Ok(Criterion::E),
            other => Err(Error::InvalidInput(format!("unknown criterion '{other}'"))),
        }
    }
}

/// A fully specified design problem.
#[derive(Clone, Debug)]
pub struct DesignProblem {
    kernel: KernelSpec,
    p_inv: SymMatrix,
    sigma2: f64,
    n_samples: usize,
    energy: f64,
    criterion: Criterion,
}

impl DesignProblem {
    pub fn new(
        kernel: KernelSpec,
        sigma2: f64,
        n_samples: usize,
        energy: f64,
        criterion: Criterion,
    ) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")));
        }
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::InvalidInput(format!("energy must be positive, got {energy}")));
        }
        if kernel.n() > n_samples {
            return Err(Error::OrderTooLarge {
                order: kernel.n(),
                samples: n_samples,
            });
        }
        let p_inv = kernels::kernel_inverse(&kernel)?;
        matrix::cholesky(&p_inv)?;
        Ok(DesignProblem {
            kernel,
            p_inv,
            sigma2,
            n_samples,
            energy,
            criterion,
        })
    }

    pub fn with_criterion(&self, criterion: Criterion) -> Self {
        DesignProblem {
            criterion,
            ..self.clone()
        }
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn p_inv(&self) -> &SymMatrix {
        &self.p_inv
    }

    pub fn sigma2(&self) -> f64 {
        self.sigma2
    }

    pub fn n(&self) -> usize {
        self.kernel.n()
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn criterion(&self) -> Criterion {
        self.criterion
    }

    pub fn r_dagger(&self) -> CorrelationVector {
        CorrelationVector::impulse(self.energy, self.n())
    }

    fn vertices(&self) -> Vec<Vec<f64>> {
        design_map::vertices(self.n_samples, self.n(), self.energy)
            .expect("order checked at construction")
            .into_iter()
            .map(CorrelationVector::into_values)
            .collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub gap: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSolution", into = "RawSolution")]
pub struct DesignSolution {
    pub r: CorrelationVector,
    pub a: SimplexWeights,
    pub u: InputSequence,
    pub value: f64,
    pub criterion: Criterion,
    pub certificate: Certificate,
    /// Objective after each iteration (not serialized).
    pub history: Vec<f64>,
}

impl DesignSolution {
    /// Weights folded onto the `⌊N/2⌋ + 1` distinct vertices.
    pub fn vertex_weights(&self) -> Vec<f64> {
        self.a.to_vertex_weights()
    }
}

#[derive(Serialize, Deserialize)]
struct RawSolution {
    r: Vec<f64>,
    a: Vec<f64>,
    u: Vec<f64>,
    value: f64,
    criterion: Criterion,
    certificate: Certificate,
}

impl TryFrom<RawSolution> for DesignSolution {
    type Error = Error;

    fn try_from(raw: RawSolution) -> Result<Self> {
        let r = CorrelationVector::new(raw.r);
        let energy = r.energy();
        Ok(DesignSolution {
            a: SimplexWeights::new(raw.a)?,
            u: InputSequence::power_constrained(raw.u, energy)?,
            r,
            value: raw.value,
            criterion: raw.criterion,
            certificate: raw.certificate,
            history: Vec::new(),
        })
    }
}

impl From<DesignSolution> for RawSolution {
    fn from(s: DesignSolution) -> Self {
        RawSolution {
            r: s.r.into_values(),
            a: s.a.as_slice().to_vec(),
            u: s.u.values().to_vec(),
            value: s.value,
            criterion: s.criterion,
            certificate: s.certificate,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverOptions {
    /// Relative duality-gap target for D and A.
    pub tol: f64,
    /// Frank-Wolfe iteration budget.
    pub max_iter: usize,
    pub line_search_iters: usize,
    /// Subgradient iteration budget for E.
    pub e_max_iter: usize,
    pub e_step0: f64,
    /// Relative improvement over the last window below which E stops.
    pub e_tol: f64,
    pub signs: SignPattern,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 5000,
            line_search_iters: 60,
            e_max_iter: 20_000,
            e_step0: 1.0,
            e_tol: 1e-6,
            signs: SignPattern::AllPositive,
        }
    }
}

/// `Q(r) = R(r) + σ²P⁻¹` with `R(r)` the symmetric Toeplitz matrix of `r`.
pub fn q_of_r(r: &CorrelationVector, p_inv: &SymMatrix, sigma2: f64) -> Result<SymMatrix> {
    if r.len() != p_inv.dim() {
        return Err(Error::DimensionMismatch {
            expected: p_inv.dim(),
            got: r.len(),
        });
    }
    r.toeplitz().add(&p_inv.scaled(sigma2))
}

fn check_len(problem: &DesignProblem, r: &CorrelationVector) -> Result<()> {
    if r.len() != problem.n() {
        return Err(Error::DimensionMismatch {
            expected: problem.n(),
            got: r.len(),
        });
    }
    Ok(())
}

pub fn eval_criterion(problem: &DesignProblem, r: &CorrelationVector) -> Result<f64> {
    check_len(problem, r)?;
    let q = q_of_r(r, &problem.p_inv, problem.sigma2)?;
    let chol = matrix::cholesky(&q)?;
    let s2 = problem.sigma2;
    Ok(match problem.criterion {
        Criterion::D => problem.n() as f64 * s2.ln() - chol.logdet(),
        Criterion::A => s2 * chol.trace_of_inverse(),
        Criterion::E => {
            let (lmin, _) = matrix::min_eigpair(&q)?;
            if !(lmin > 0.0) {
                return Err(Error::NotPositiveDefinite { pivot: 0, value: lmin });
            }
            s2 / lmin
        }
    })
}

/// `g_i = −2·k·Σ_j M_{j,j+i}` for `i = 1..n−1`.
fn band_gradient(m: &SymMatrix, k: f64) -> Vec<f64> {
    let n = m.dim();
    (1..n)
        .map(|i| -2.0 * k * (0..n - i).map(|j| m[(j, j + i)]).sum::<f64>())
        .collect()
}

/// Gradient (subgradient for E) with respect to `r_1, …, r_{n−1}`.
pub fn gradient_in_r(problem: &DesignProblem, r: &CorrelationVector) -> Result<Vec<f64>> {
    check_len(problem, r)?;
    let q = q_of_r(r, &problem.p_inv, problem.sigma2)?;
    let chol = matrix::cholesky(&q)?;
    let s2 = problem.sigma2;
    Ok(match problem.criterion {
        Criterion::D => band_gradient(&chol.inverse(), 1.0),
        Criterion::A => {
            let qi = chol.inverse();
            let q2 = SymMatrix::from_matrix(&qi.matmul(&qi)?)?;
            band_gradient(&q2, s2)
        }
        Criterion::E => {
            let (lmin, v) = matrix::min_eigpair(&q)?;
            let outer = SymMatrix::from_fn(v.len(), |i, j| v[i] * v[j]);
            band_gradient(&outer, s2 / (lmin * lmin))
        }
    })
}

fn tail_dot(g: &[f64], v: &[f64]) -> f64 {
    matrix::dot(g, &v[1..])
}

fn combine(verts: &[Vec<f64>], w: &[f64]) -> CorrelationVector {
    let n = verts[0].len();
    let mut r = vec![0.0; n];
    for (v, wk) in verts.iter().zip(w) {
        if *wk != 0.0 {
            r.iter_mut().zip(v).for_each(|(ri, vi)| *ri += wk * vi);
        }
    }
    CorrelationVector::new(r)
}

/// Vertex weights that reproduce `r†`: every column of `S` weighted `1/N`.
pub fn r_dagger_weights(n_samples: usize) -> Vec<f64> {
    SimplexWeights::uniform(n_samples).to_vertex_weights()
}

fn lowest_argmin(values: &[f64]) -> usize {
    let mut best = 0;
    for (k, v) in values.iter().enumerate() {
        if *v < values[best] {
            best = k;
        }
    }
    best
}

fn finish(
    problem: &DesignProblem,
    vertex_weights: &[f64],
    opts: &SolverOptions,
    certificate: Certificate,
    history: Vec<f64>,
) -> Result<DesignSolution> {
    let big_n = problem.n_samples;
    let total: f64 = vertex_weights.iter().map(|w| w.max(0.0)).sum();
    let cleaned: Vec<f64> = vertex_weights.iter().map(|w| w.max(0.0) / total).collect();
    let a = SimplexWeights::from_vertex_weights(&cleaned, big_n)?;
    let s = design_map::build_s(big_n, problem.n())?;
    let r = design_map::weights_to_r(&a, &s, problem.energy)?;
    let u = design_map::recover_input(&a, problem.energy, big_n, &opts.signs)?;
    let value = eval_criterion(problem, &r)?;
    Ok(DesignSolution {
        r,
        a,
        u,
        value,
        criterion: problem.criterion,
        certificate,
        history,
    })
}

pub fn solve(problem: &DesignProblem) -> Result<DesignSolution> {
    solve_with(problem, &SolverOptions::default())
}

pub fn solve_with(problem: &DesignProblem, opts: &SolverOptions) -> Result<DesignSolution> {
    match problem.criterion {
        Criterion::D | Criterion::A => frank_wolfe(problem, opts),
        Criterion::E => projected_subgradient(problem, opts),
    }
}

fn frank_wolfe(problem: &DesignProblem, opts: &SolverOptions) -> Result<DesignSolution> {
    let verts = problem.vertices();
    let mut w = r_dagger_weights(problem.n_samples);
    let mut history = Vec::new();
    let mut gap;
    let mut iterations = 0;
    let mut converged = false;

    if problem.n() == 1 {
        let value = eval_criterion(problem, &combine(&verts, &w))?;
        let cert = Certificate {
            gap: 0.0,
            iterations: 0,
            converged: true,
        };
        return finish(problem, &w, opts, cert, vec![value]);
    }

    loop {
        let r = combine(&verts, &w);
        let value = eval_criterion(problem, &r)?;
        if history.is_empty() {
            history.push(value);
        }
        let g = gradient_in_r(problem, &r)?;
        let scores: Vec<f64> = verts.iter().map(|v| tail_dot(&g, v)).collect();
        let toward = lowest_argmin(&scores);
        let at_r = tail_dot(&g, r.values());
        gap = (at_r - scores[toward]).max(0.0);
        if gap <= opts.tol * value.abs() {
            converged = true;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }
        // away vertex: worst score among active ones, lowest index on ties
        let mut away = usize::MAX;
        for (k, wk) in w.iter().enumerate() {
            if *wk > 0.0 && (away == usize::MAX || scores[k] > scores[away]) {
                away = k;
            }
        }
        if away == toward || scores[away] <= scores[toward] {
            // every active vertex is already optimal; gap is rounding
            converged = true;
            break;
        }
        let d: Vec<f64> = verts[toward].iter().zip(&verts[away]).map(|(a, b)| a - b).collect();
        let gamma_max = w[away];
        let gamma = line_search(problem, r.values(), &d, gamma_max, opts.line_search_iters)?;
        iterations += 1;
        if gamma >= gamma_max {
            w[toward] += w[away];
            w[away] = 0.0;
        } else {
            w[toward] += gamma;
            w[away] -= gamma;
        }
        history.push(eval_criterion(problem, &combine(&verts, &w))?);
    }

    let cert = Certificate {
        gap,
        iterations,
        converged,
    };
    finish(problem, &w, opts, cert, history)
}

/// Largest `γ ∈ [0, γ_max]` with nonpositive directional derivative,
/// found by bisection. With `Q(r) = L·Lᵀ` and `L⁻¹R(d)L⁻ᵀ = U·diag(μ)·Uᵀ`
/// the derivative along `d` is a scalar rational function of `γ`.
fn line_search(
    problem: &DesignProblem,
    r: &[f64],
    d: &[f64],
    gamma_max: f64,
    iters: usize,
) -> Result<f64> {
    let q = q_of_r(&CorrelationVector::new(r.to_vec()), &problem.p_inv, problem.sigma2)?;
    let chol = matrix::cholesky(&q)?;
    let n = q.dim();
    let t = CorrelationVector::new(d.to_vec()).toeplitz();
    let x: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c = t.as_matrix().column(j);
            chol.forward(&mut c);
            c
        })
        .collect();
    let cols: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut c: Vec<f64> = (0..n).map(|k| x[k][j]).collect();
            chol.forward(&mut c);
            c
        })
        .collect();
    let m = SymMatrix::from_fn(n, |i, j| 0.5 * (cols[j][i] + cols[i][j]));
    let (mu, u) = matrix::sym_eigen(&m)?;
    let weights: Vec<f64> = match problem.criterion {
        Criterion::D => vec![1.0; n],
        _ => (0..n)
            .map(|i| {
                let mut c = u.column(i);
                chol.backward(&mut c);
                problem.sigma2 * matrix::dot(&c, &c)
            })
            .collect(),
    };
    let power = if problem.criterion == Criterion::D { 1 } else { 2 };
    let deriv = |gamma: f64| -> f64 {
        -mu.iter()
            .zip(&weights)
            .map(|(m, w)| w * m / (1.0 + gamma * m).powi(power))
            .sum::<f64>()
    };
    if deriv(gamma_max) <= 0.0 {
        return Ok(gamma_max);
    }
    let (mut lo, mut hi) = (0.0, gamma_max);
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        if deriv(mid) > 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Euclidean projection onto the probability simplex.
pub(crate) fn project_simplex(x: &[f64]) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - 1.0) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    x.iter().map(|v| (v - theta).max(0.0)).collect()
}

fn projected_subgradient(problem: &DesignProblem, opts: &SolverOptions) -> Result<DesignSolution> {
    let verts = problem.vertices();
    let mut w = r_dagger_weights(problem.n_samples);
    let mut best_w = w.clone();
    let mut best = eval_criterion(problem, &combine(&verts, &w))?;
    let mut history = vec![best];
    let window = (opts.e_max_iter / 20).max(100);
    let mut spread = f64::INFINITY;
    let mut converged = false;
    let mut iterations = 0;

    if problem.n() == 1 || verts.len() == 1 {
        let cert = Certificate {
            gap: 0.0,
            iterations: 0,
            converged: true,
        };
        return finish(problem, &w, opts, cert, history);
    }

    for k in 1..=opts.e_max_iter {
        iterations = k;
        let r = combine(&verts, &w);
        let g = gradient_in_r(problem, &r)?;
        let h: Vec<f64> = verts.iter().map(|v| tail_dot(&g, v)).collect();
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        let centered: Vec<f64> = h.iter().map(|v| v - mean).collect();
        let norm = matrix::norm2(&centered);
        if norm == 0.0 {
            spread = 0.0;
            converged = true;
            break;
        }
        let step = opts.e_step0 / (k as f64).sqrt() / norm;
        let moved: Vec<f64> = w.iter().zip(&centered).map(|(a, b)| a - step * b).collect();
        w = project_simplex(&moved);
        let value = eval_criterion(problem, &combine(&verts, &w))?;
        if value < best {
            best = value;
            best_w = w.clone();
        }
        history.push(best);
        if k % window == 0 {
            spread = history[k - window] - best;
            if spread <= opts.e_tol * best.abs() {
                converged = true;
                break;
            }
        }
    }

    let cert = Certificate {
        gap: spread,
        iterations,
        converged,
    };
    finish(problem, &best_w, opts, cert, history)
}

/// Result of testing whether `r†` satisfies the first-order optimality
/// conditions over the polytope.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RdaggerCheck {
    pub is_stationary: bool,
    /// `⟨∇φ(r†), ξ_j(2:n)⟩` for `j = 0..=⌊N/2⌋`.
    pub vertex_scores: Vec<f64>,
}

pub const STATIONARITY_TOL: f64 = 1e-10;

pub fn check_rdagger_optimality(problem: &DesignProblem) -> Result<RdaggerCheck> {
    if problem.criterion == Criterion::E {
        return Err(Error::PreconditionViolated(
            "the vertex test needs a differentiable criterion (D or A)".into(),
        ));
    }
    let g = gradient_in_r(problem, &problem.r_dagger())?;
    let basis = design_map::TrigBasis::new(problem.n_samples);
    let values: Vec<f64> = (0..design_map::vertex_count(problem.n_samples))
        .map(|j| (1..problem.n()).map(|l| g[l - 1] * basis.cos_at(j, l)).sum())
        .collect();
    Ok(RdaggerCheck {
        is_stationary: values.iter().all(|v| *v >= -STATIONARITY_TOL),
        vertex_scores: values,
    })
}

pub const BRUTE_FORCE_MAX_VERTICES: usize = 6;

/// Exhaustive search over vertex weights `m/resolution` summing to one.
pub fn brute_force_design(problem: &DesignProblem, resolution: usize) -> Result<DesignSolution> {
    let verts = problem.vertices();
    let k = verts.len();
    if k > BRUTE_FORCE_MAX_VERTICES {
        return Err(Error::TooManyVertices {
            max: BRUTE_FORCE_MAX_VERTICES,
            got: k,
        });
    }
    if resolution == 0 {
        return Err(Error::InvalidInput("grid resolution must be positive".into()));
    }
    let h = 1.0 / resolution as f64;
    let per_first: Vec<(f64, Vec<usize>, usize)> = (0..=resolution)
        .into_par_iter()
        .map(|first| {
            let mut counts = vec![0usize; k];
            counts[0] = first;
            let mut best = (f64::INFINITY, Vec::new(), 0usize);
            enumerate(&mut counts, 1, resolution - first, &mut |c| {
                let w: Vec<f64> = c.iter().map(|m| *m as f64 * h).collect();
                let v = eval_criterion(problem, &combine(&verts, &w)).unwrap_or(f64::INFINITY);
                best.2 += 1;
                if v < best.0 {
                    best.0 = v;
                    best.1 = c.to_vec();
                }
            });
            best
        })
        .collect();

    let mut best_val = f64::INFINITY;
    let mut best_counts = Vec::new();
    let mut evaluated = 0;
    for (v, c, count) in per_first {
        evaluated += count;
        if v < best_val {
            best_val = v;
            best_counts = c;
        }
    }
    if best_counts.is_empty() {
        return Err(Error::SearchFailure);
    }
    let w: Vec<f64> = best_counts.iter().map(|m| *m as f64 * h).collect();
    let cert = Certificate {
        gap: h,
        iterations: evaluated,
        converged: true,
    };
    finish(problem, &w, &SolverOptions::default(), cert, vec![best_val])
}

fn enumerate(counts: &mut [usize], idx: usize, remaining: usize, visit: &mut dyn FnMut(&[usize])) {
    if idx == counts.len() - 1 || counts.len() == 1 {
        if counts.len() == 1 {
            if remaining == 0 {
                visit(counts);
            }
            return;
        }
        counts[idx] = remaining;
        visit(counts);
        return;
    }
    for m in 0..=remaining {
        counts[idx] = m;
        enumerate(counts, idx + 1, remaining - m, visit);
    }
    counts[idx] = 0;
}

/// Bound on `|value(grid optimum) − value(sol)|` for a grid of the given
/// resolution.
///
/// `sol`'s weights are rounded to the nearest grid point `w_g`; by
/// convexity `φ(w_g) − φ(sol) ≤ ½·spread(∇φ(w_g)·V)·‖w_g − w_sol‖₁`. The
/// certified suboptimality `sol.certificate.gap` covers the other side.
pub fn grid_slack(problem: &DesignProblem, sol: &DesignSolution, resolution: usize) -> Result<f64> {
    let verts = problem.vertices();
    let w = sol.vertex_weights();
    let grid_w = round_to_grid(&w, resolution);
    let g = gradient_in_r(problem, &combine(&verts, &grid_w))?;
    let scores: Vec<f64> = verts.iter().map(|v| tail_dot(&g, v)).collect();
    let spread = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - scores.iter().cloned().fold(f64::INFINITY, f64::min);
    let dist: f64 = grid_w.iter().zip(&w).map(|(a, b)| (a - b).abs()).sum();
    Ok(0.5 * spread * dist + sol.certificate.gap)
}

/// Largest-remainder rounding of simplex weights onto multiples of `1/res`.
fn round_to_grid(w: &[f64], resolution: usize) -> Vec<f64> {
    let scaled: Vec<f64> = w.iter().map(|v| v.max(0.0) * resolution as f64).collect();
    let mut counts: Vec<usize> = scaled.iter().map(|v| v.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = scaled[a] - scaled[a].floor();
        let rb = scaled[b] - scaled[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(resolution.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts.iter().map(|c| *c as f64 / resolution as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_map::quadratic_map;
    use approx::assert_relative_eq;

    fn problem(spec: KernelSpec, big_n: usize, crit: Criterion) -> DesignProblem {
        DesignProblem::new(spec, 1.0, big_n, 1.0, crit).unwrap()
    }

    #[test]
    fn q_of_r_examples() {
        let r = CorrelationVector::new(vec![2.0, 1.0]);
        let q = q_of_r(&r, &SymMatrix::identity(2), 1.0).unwrap();
        assert_eq!(q.to_rows(), vec![vec![3.0, 1.0], vec![1.0, 3.0]]);

        let p_inv = kernels::counterexample_inverse();
        let q = q_of_r(&CorrelationVector::new(vec![0.0; 3]), &p_inv, 0.4).unwrap();
        assert!(q.max_abs_diff(&p_inv.scaled(0.4)) < 1e-15);

        let spec = KernelSpec::ridge(2.0, 3).unwrap();
        let q = q_of_r(&CorrelationVector::impulse(5.0, 3), &kernels::kernel_inverse(&spec).unwrap(), 1.0)
            .unwrap();
        assert!(q.max_abs_diff(&SymMatrix::identity(3).scaled(5.5)) < 1e-15);

        assert!(q_of_r(&CorrelationVector::new(vec![1.0]), &SymMatrix::identity(2), 1.0).is_err());
    }

    #[test]
    fn ridge_values_at_r_dagger() {
        let (e, c, s2, n) = (2.0f64, 3.0, 0.5, 4);
        let spec = KernelSpec::ridge(c, n).unwrap();
        let base = DesignProblem::new(spec, s2, 8, e, Criterion::D).unwrap();
        let r = base.r_dagger();
        let q = e + s2 / c;
        let d = eval_criterion(&base, &r).unwrap();
        assert_relative_eq!(d, n as f64 * (s2 / q).ln(), max_relative = 1e-13);
        let a = eval_criterion(&base.with_criterion(Criterion::A), &r).unwrap();
        assert_relative_eq!(a, n as f64 * s2 / q, max_relative = 1e-13);
        let ev = eval_criterion(&base.with_criterion(Criterion::E), &r).unwrap();
        assert_relative_eq!(ev, s2 / q, max_relative = 1e-12);
    }

    #[test]
    fn example_one_inverse_and_traces() {
        let spec = KernelSpec::custom_inverse(kernels::counterexample_inverse()).unwrap();
        let prob = problem(spec, 5, Criterion::D);
        let q = q_of_r(&prob.r_dagger(), prob.p_inv(), 1.0).unwrap();
        let qi = matrix::inverse(&q).unwrap();
        let want = [
            [16.0, -4.0, 0.0],
            [-4.0, 17.0, 4.0],
            [0.0, 4.0, 16.0],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert!((qi[(i, j)] - want[i][j] / 30.0).abs() < 1e-12);
            }
        }
        let g = gradient_in_r(&prob, &prob.r_dagger()).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let spec = KernelSpec::dc(1.0, 0.8, 0.4, 4).unwrap();
        let base = problem(spec, 9, Criterion::D);
        let w = [0.1, 0.3, 0.2, 0.25, 0.15];
        let r = combine(&base.vertices(), &w);
        for crit in [Criterion::D, Criterion::A, Criterion::E] {
            let p = base.with_criterion(crit);
            let g = gradient_in_r(&p, &r).unwrap();
            for i in 1..4 {
                let mut up = r.values().to_vec();
                let mut dn = r.values().to_vec();
                up[i] += 1e-6;
                dn[i] -= 1e-6;
                let fd = (eval_criterion(&p, &CorrelationVector::new(up)).unwrap()
                    - eval_criterion(&p, &CorrelationVector::new(dn)).unwrap())
                    / 2e-6;
                assert!((fd - g[i - 1]).abs() <= 1e-4 * fd.abs().max(1e-3), "{crit} {i}");
            }
        }
    }

    #[test]
    fn ridge_solution_is_r_dagger() {
        let prob = problem(KernelSpec::ridge(1.0, 3).unwrap(), 8, Criterion::D);
        let sol = solve(&prob).unwrap();
        assert!(sol.certificate.converged);
        assert!(sol.r.max_abs_diff(&prob.r_dagger()) < 1e-6);
        let f = quadratic_map(sol.u.values(), 3).unwrap();
        assert!(f.max_abs_diff(&sol.r) < 1e-8);

        let diag = problem(KernelSpec::diagonal(vec![1.0, 2.0, 3.0]).unwrap(), 8, Criterion::A);
        let sol = solve(&diag).unwrap();
        assert!(sol.r.max_abs_diff(&diag.r_dagger()) < 1e-6);
    }

    #[test]
    fn dc_positive_rho_moves_away_from_r_dagger() {
        let prob = problem(KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap(), 8, Criterion::D);
        let sol = solve(&prob).unwrap();
        assert!(sol.certificate.converged);
        assert!(sol.certificate.gap <= 1e-8 * sol.value.abs());
        let dist = matrix::norm2(
            &sol.r.values().iter().zip(prob.r_dagger().values()).map(|(a, b)| a - b).collect::<Vec<_>>(),
        );
        assert!(dist > 1e-3);
        assert!(sol.value < eval_criterion(&prob, &prob.r_dagger()).unwrap());
        assert!(sol.history.windows(2).all(|w| w[1] <= w[0] + 1e-12 * w[0].abs()));
        let f = quadratic_map(sol.u.values(), 3).unwrap();
        assert!(f.max_abs_diff(&sol.r) < 1e-8);
        assert_relative_eq!(sol.value, eval_criterion(&prob, &sol.r).unwrap(), max_relative = 1e-10);
    }

    #[test]
    fn e_solution_no_worse_than_r_dagger() {
        let prob = problem(KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap(), 8, Criterion::E);
        let sol = solve(&prob).unwrap();
        assert!(sol.value <= eval_criterion(&prob, &prob.r_dagger()).unwrap() + 1e-10);
    }

    #[test]
    fn rdagger_check_cases() {
        let ridge = problem(KernelSpec::ridge(2.0, 4).unwrap(), 10, Criterion::D);
        let chk = check_rdagger_optimality(&ridge).unwrap();
        assert!(chk.is_stationary);
        assert!(chk.vertex_scores.iter().all(|v| v.abs() < 1e-12));

        let pos = problem(KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap(), 7, Criterion::D);
        let chk = check_rdagger_optimality(&pos).unwrap();
        assert!(!chk.is_stationary);
        assert!(chk.vertex_scores[0] < 0.0);

        let neg = problem(KernelSpec::dc(1.0, 0.9, -0.5, 3).unwrap(), 8, Criterion::A);
        let chk = check_rdagger_optimality(&neg).unwrap();
        assert!(chk.vertex_scores[4] < 0.0);

        assert!(check_rdagger_optimality(&pos.with_criterion(Criterion::E)).is_err());
    }

    #[test]
    fn brute_force_small_cases() {
        let ridge = problem(KernelSpec::ridge(1.0, 2).unwrap(), 4, Criterion::D);
        let grid = brute_force_design(&ridge, 20).unwrap();
        assert!(grid.r.max_abs_diff(&ridge.r_dagger()) <= 1.0 / 20.0 + 1e-12);

        let dc = problem(KernelSpec::dc(1.0, 0.8, 0.6, 2).unwrap(), 6, Criterion::A);
        let one = brute_force_design(&dc, 1).unwrap();
        let vert_vals: Vec<f64> = dc
            .vertices()
            .into_iter()
            .map(|v| eval_criterion(&dc, &CorrelationVector::new(v)).unwrap())
            .collect();
        let best = vert_vals.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(one.value, best);

        let fw = solve(&dc).unwrap();
        let grid = brute_force_design(&dc, 100).unwrap();
        let slack = grid_slack(&dc, &fw, 100).unwrap();
        assert!((grid.value - fw.value).abs() <= slack + 1e-14);

        let big = problem(KernelSpec::ridge(1.0, 2).unwrap(), 12, Criterion::D);
        assert!(matches!(brute_force_design(&big, 4), Err(Error::TooManyVertices { .. })));
    }

    #[test]
    fn simplex_projection() {
        let p = project_simplex(&[0.5, 0.5]);
        assert_eq!(p, vec![0.5, 0.5]);
        let p = project_simplex(&[2.0, 0.0, 0.0]);
        assert_eq!(p, vec![1.0, 0.0, 0.0]);
        let p = project_simplex(&[0.6, 0.6, -1.0]);
        assert!((p[0] - 0.5).abs() < 1e-15 && (p[1] - 0.5).abs() < 1e-15 && p[2] == 0.0);
    }

    #[test]
    fn grid_rounding_sums_to_one() {
        let g = round_to_grid(&[0.333, 0.333, 0.334], 10);
        assert_relative_eq!(g.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert!(g.iter().all(|v| (v * 10.0 - (v * 10.0).round()).abs() < 1e-12));
    }

    #[test]
    fn solution_json_round_trip() {
        let prob = problem(KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap(), 6, Criterion::D);
        let sol = solve(&prob).unwrap();
        let text = serde_json::to_string(&sol).unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["r", "a", "u", "value", "criterion", "certificate"] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert_eq!(v["criterion"], "D");
        let back: DesignSolution = serde_json::from_str(&text).unwrap();
        assert_eq!(back.r, sol.r);
        assert_eq!(back.a, sol.a);
        assert_eq!(back.u.values(), sol.u.values());
    }

    #[test]
    fn order_one_is_trivial() {
        let prob = problem(KernelSpec::ridge(1.0, 1).unwrap(), 3, Criterion::A);
        let sol = solve(&prob).unwrap();
        assert_eq!(sol.r.values(), &[1.0]);
        let sol = solve(&prob.with_criterion(Criterion::E)).unwrap();
        assert!(sol.certificate.converged);
    }
}
