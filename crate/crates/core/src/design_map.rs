//! The circular correlation map `r = f(u)` and its factorization.
//!
//! Under the wraparound convention `u_{-i} = u_{N-i}` the Gram matrix of the
//! regressor is the Toeplitz matrix of the circular autocorrelations
//! `r_j = Σ_k u_k u_{(k−j) mod N}`. The map factors as
//! `f(u) = S · square(Wᵀu)` with an orthogonal real Fourier basis `W` and a
//! cosine table `S`, so the image of the power sphere `uᵀu = 𝓔` is the
//! polytope spanned by the vectors `𝓔·ξ_j(1:n)`. Inverting the map is then
//! a matter of picking simplex weights, taking square roots and applying `W`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::estimator::InputSequence;
use crate::matrix::{Matrix, SymMatrix};

/// Relative tolerance on simplex membership.
pub const SIMPLEX_TOL: f64 = 1e-10;

/// Circular autocorrelations `r_0, …, r_{n−1}` of an input.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationVector {
    values: Vec<f64>,
}

impl CorrelationVector {
    pub fn new(values: Vec<f64>) -> Self {
        CorrelationVector { values }
    }

    /// `r† = [𝓔, 0, …, 0]`, the correlations of an impulse.
    pub fn impulse(energy: f64, n: usize) -> Self {
        let mut values = vec![0.0; n];
        values[0] = energy;
        CorrelationVector { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `r_0`, which equals the input energy.
    pub fn energy(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// Symmetric Toeplitz matrix `R(r)` with first row `r`.
    pub fn toeplitz(&self) -> SymMatrix {
        SymMatrix::from_fn(self.len(), |i, j| self.values[i.abs_diff(j)])
    }

    pub fn max_abs_diff(&self, other: &CorrelationVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn check_order(n_samples: usize, n: usize) -> Result<()> {
    if n == 0 || n > n_samples {
        return Err(Error::OrderTooLarge {
            order: n,
            samples: n_samples,
        });
    }
    Ok(())
}

/// `r_j = Σ_{k} u_k·u_{(k−j) mod N}` for `j = 0..n`.
pub fn quadratic_map(u: &[f64], n: usize) -> Result<CorrelationVector> {
    let big_n = u.len();
    check_order(big_n, n)?;
    let values = (0..n)
        .map(|j| {
            (0..big_n)
                .map(|k| u[k] * u[(k + big_n - j) % big_n])
                .sum()
        })
        .collect();
    Ok(CorrelationVector { values })
}

/// The real Fourier vectors `ξ_j[l] = cos(l·j·ϖ)`, `ζ_j[l] = sin(l·j·ϖ)`
/// with `ϖ = 2π/N`.
#[derive(Clone, Copy, Debug)]
pub struct TrigBasis {
    n_samples: usize,
}

impl TrigBasis {
    pub fn new(n_samples: usize) -> Self {
        TrigBasis { n_samples }
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }

    pub fn omega(&self) -> f64 {
        2.0 * PI / self.n_samples as f64
    }

    /// `cos(l·j·ϖ)`, with the phase reduced mod N first so large products
    /// do not lose accuracy.
    pub fn cos_at(&self, j: usize, l: usize) -> f64 {
        let m = (j * l) % self.n_samples;
        (m as f64 * self.omega()).cos()
    }

    pub fn sin_at(&self, j: usize, l: usize) -> f64 {
        let m = (j * l) % self.n_samples;
        (m as f64 * self.omega()).sin()
    }

    pub fn xi(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples).map(|l| self.cos_at(j, l)).collect()
    }

    pub fn zeta(&self, j: usize) -> Vec<f64> {
        (0..self.n_samples).map(|l| self.sin_at(j, l)).collect()
    }
}

/// Orthogonal `W`, columns
/// `√(2/N)·[ξ_0/√2, ξ_1, …, ξ_{N/2−1}, ξ_{N/2}/√2, ζ_{N/2−1}, …, ζ_1]` for
/// even `N` and `√(2/N)·[ξ_0/√2, ξ_1, …, ξ_{(N−1)/2}, ζ_{(N−1)/2}, …, ζ_1]`
/// for odd `N`.
///
/// Column `l` carries frequency `l` for `l ≤ N/2` and frequency `N − l`
/// beyond, so it lines up with column `l` of [`build_s`].
pub fn build_w(n_samples: usize) -> Matrix {
    let basis = TrigBasis::new(n_samples);
    let big_n = n_samples;
    let scale = (2.0 / big_n as f64).sqrt();
    let half = big_n / 2;
    Matrix::from_fn(big_n, big_n, |row, col| {
        if col == 0 || (big_n % 2 == 0 && col == half) {
            scale * basis.cos_at(col, row) / std::f64::consts::SQRT_2
        } else if col <= half {
            scale * basis.cos_at(col, row)
        } else {
            scale * basis.sin_at(big_n - col, row)
        }
    })
}

/// `S[j][l] = cos(j·l·ϖ)`, an `n × N` table whose rows are `ξ_0, …, ξ_{n−1}`.
pub fn build_s(n_samples: usize, n: usize) -> Result<Matrix> {
    check_order(n_samples, n)?;
    let basis = TrigBasis::new(n_samples);
    Ok(Matrix::from_fn(n, n_samples, |j, l| basis.cos_at(j, l)))
}

/// `rank(S) = min(⌊N/2⌋ + 1, n)`, which covers both parities.
pub fn s_rank(n_samples: usize, n: usize) -> usize {
    (n_samples / 2 + 1).min(n)
}

/// Number of distinct polytope vertices, `⌊N/2⌋ + 1`.
pub fn vertex_count(n_samples: usize) -> usize {
    n_samples / 2 + 1
}

/// Evaluates `S·square(Wᵀu)`.
pub fn composite_map(u: &[f64], n: usize) -> Result<CorrelationVector> {
    let big_n = u.len();
    let s = build_s(big_n, n)?;
    let z = build_w(big_n).tr_matvec(u)?;
    let x: Vec<f64> = z.iter().map(|v| v * v).collect();
    Ok(CorrelationVector {
        values: s.matvec(&x)?,
    })
}

/// Checks the factorization `f(u) = S·square(Wᵀu)` to `1e-9·𝓔`.
pub fn decompose_check(u: &[f64], n: usize) -> Result<bool> {
    let direct = quadratic_map(u, n)?;
    let composite = composite_map(u, n)?;
    let energy: f64 = u.iter().map(|v| v * v).sum();
    Ok(direct.max_abs_diff(&composite) <= 1e-9 * energy)
}

/// Distinct vertices `𝓔·ξ_j(1:n)`, `j = 0..=⌊N/2⌋`.
pub fn vertices(n_samples: usize, n: usize, energy: f64) -> Result<Vec<CorrelationVector>> {
    check_order(n_samples, n)?;
    let basis = TrigBasis::new(n_samples);
    Ok((0..vertex_count(n_samples))
        .map(|j| CorrelationVector {
            values: (0..n).map(|l| energy * basis.cos_at(j, l)).collect(),
        })
        .collect())
}

/// Nonnegative weights summing to one, one per column of `S`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplexWeights(Vec<f64>);

impl SimplexWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidWeights("empty weight vector".into()));
        }
        if let Some(w) = weights.iter().find(|w| !(**w >= -SIMPLEX_TOL) || !w.is_finite()) {
            return Err(Error::InvalidWeights(format!("negative weight {w}")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::InvalidWeights(format!("weights sum to {total}")));
        }
        Ok(SimplexWeights(weights))
    }

    /// All mass on column `k` of an `N`-column table.
    pub fn unit(n_samples: usize, k: usize) -> Self {
        let mut w = vec![0.0; n_samples];
        w[k] = 1.0;
        SimplexWeights(w)
    }

    pub fn uniform(n_samples: usize) -> Self {
        SimplexWeights(vec![1.0 / n_samples as f64; n_samples])
    }

    /// Expands weights over the `⌊N/2⌋ + 1` distinct vertices to the full
    /// `N` columns of `S`, splitting each mirrored pair `(k, N−k)` evenly.
    pub fn from_vertex_weights(vertex_weights: &[f64], n_samples: usize) -> Result<Self> {
        if vertex_weights.len() != vertex_count(n_samples) {
            return Err(Error::DimensionMismatch {
                expected: vertex_count(n_samples),
                got: vertex_weights.len(),
            });
        }
        let mut full = vec![0.0; n_samples];
        for (k, &w) in vertex_weights.iter().enumerate() {
            let mirror = (n_samples - k) % n_samples;
            if mirror == k {
                full[k] = w;
            } else {
                full[k] = 0.5 * w;
                full[mirror] = 0.5 * w;
            }
        }
        SimplexWeights::new(full)
    }

    /// Folds full-column weights back onto the distinct vertices.
    pub fn to_vertex_weights(&self) -> Vec<f64> {
        let big_n = self.0.len();
        let mut out = vec![0.0; vertex_count(big_n)];
        for (l, &w) in self.0.iter().enumerate() {
            out[l.min(big_n - l)] += w;
        }
        out
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `r = 𝓔·S·a`. The first row of `S` is all ones, so `r_0 = 𝓔`.
pub fn weights_to_r(a: &SimplexWeights, s: &Matrix, energy: f64) -> Result<CorrelationVector> {
    if a.len() != s.cols() {
        return Err(Error::InvalidWeights(format!(
            "expected {} weights, got {}",
            s.cols(),
            a.len()
        )));
    }
    let values = s.matvec(a.as_slice())?.into_iter().map(|v| energy * v).collect();
    Ok(CorrelationVector { values })
}

/// Signs applied to `z = ±√x` when inverting the squaring step.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum SignPattern {
    #[default]
    AllPositive,
    /// One entry per sample; negative values flip the sign.
    Explicit(Vec<f64>),
    /// Independent fair coin flips from a seeded generator.
    Random { seed: u64 },
}

impl SignPattern {
    fn signs(&self, n_samples: usize) -> Result<Vec<f64>> {
        match self {
            SignPattern::AllPositive => Ok(vec![1.0; n_samples]),
            SignPattern::Explicit(s) => {
                if s.len() != n_samples {
                    return Err(Error::DimensionMismatch {
                        expected: n_samples,
                        got: s.len(),
                    });
                }
                Ok(s.iter().map(|v| if *v < 0.0 { -1.0 } else { 1.0 }).collect())
            }
            SignPattern::Random { seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                Ok((0..n_samples)
                    .map(|_| if rng.random::<bool>() { 1.0 } else { -1.0 })
                    .collect())
            }
        }
    }
}

/// Recovers an input with `f(u) = 𝓔·S·a` and `uᵀu = 𝓔`:
/// `x = 𝓔·a`, `z_i = s_i·√x_i`, `u = W·z`.
pub fn recover_input(
    a: &SimplexWeights,
    energy: f64,
    n_samples: usize,
    signs: &SignPattern,
) -> Result<InputSequence> {
    if a.len() != n_samples {
        return Err(Error::InvalidWeights(format!(
            "expected {n_samples} weights, got {}",
            a.len()
        )));
    }
    if !(energy > 0.0) {
        return Err(Error::InvalidInput(format!("energy must be positive, got {energy}")));
    }
    let s = signs.signs(n_samples)?;
    // tiny negative weights within tolerance are clamped
    let z: Vec<f64> = a
        .as_slice()
        .iter()
        .zip(&s)
        .map(|(w, sign)| sign * (energy * w.max(0.0)).sqrt())
        .collect();
    let mut u = build_w(n_samples).matvec(&z)?;
    // Rescale away the rounding in Σa = 1.
    let power: f64 = u.iter().map(|v| v * v).sum();
    let k = (energy / power).sqrt();
    u.iter_mut().for_each(|v| *v *= k);
    InputSequence::power_constrained(u, energy)
}

/// Orthogonal basis of `{x : S·x = 0}`: the cosines `ξ_n, …, ξ_{⌊N/2⌋}`
/// not already rows of `S`, plus every sine `ζ_1, …, ζ_{⌈N/2⌉−1}`.
pub fn nullspace_basis(n_samples: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    check_order(n_samples, n)?;
    let basis = TrigBasis::new(n_samples);
    let half = n_samples / 2;
    let mut out: Vec<Vec<f64>> = (n..=half).map(|j| basis.xi(j)).collect();
    let last_sine = (n_samples - 1) / 2;
    out.extend((1..=last_sine).map(|j| basis.zeta(j)));
    Ok(out)
}
