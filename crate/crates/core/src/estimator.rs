//! FIR regression under the circular input convention: least squares,
//! kernel-regularized least squares, the Bayesian MSE matrix and
//! empirical-Bayes hyperparameter tuning.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{self, KernelFamily, KernelSpec};
use crate::matrix::{self, Matrix, SymMatrix};

/// Relative tolerance for the power constraint `Σu² = 𝓔`.
pub const POWER_TOL: f64 = 1e-9;

/// An input record `u_0, …, u_{N−1}` together with its energy.
#[derive(Clone, Debug, PartialEq)]
pub struct InputSequence {
    values: Vec<f64>,
    energy: f64,
    power_constrained: bool,
}

impl InputSequence {
    /// Unconstrained input; the energy is whatever `Σu²` comes to.
    pub fn new(values: Vec<f64>) -> Self {
        let energy = values.iter().map(|v| v * v).sum();
        InputSequence {
            values,
            energy,
            power_constrained: false,
        }
    }

    /// Input that must carry exactly the declared energy.
    pub fn power_constrained(values: Vec<f64>, energy: f64) -> Result<Self> {
        if !(energy > 0.0 && energy.is_finite()) {
            return Err(Error::InvalidInput(format!("energy must be positive, got {energy}")));
        }
        let power: f64 = values.iter().map(|v| v * v).sum();
        if (power - energy).abs() > POWER_TOL * energy {
            return Err(Error::InvalidInput(format!(
                "input power {power} differs from declared energy {energy}"
            )));
        }
        Ok(InputSequence {
            values,
            energy,
            power_constrained: true,
        })
    }

    /// Scales `values` so that `Σu² = energy` exactly.
    pub fn rescaled(values: Vec<f64>, energy: f64) -> Result<Self> {
        let power: f64 = values.iter().map(|v| v * v).sum();
        if !(power > 0.0) {
            return Err(Error::InvalidInput("cannot rescale an all-zero input".into()));
        }
        let k = (energy / power).sqrt();
        Self::power_constrained(values.into_iter().map(|v| v * k).collect(), energy)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn energy(&self) -> f64 {
        self.energy
    }

    pub fn is_power_constrained(&self) -> bool {
        self.power_constrained
    }
}

/// Input, output and (optionally) the noise variance of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDataRecord", into = "RawDataRecord")]
pub struct DataRecord {
    pub input: InputSequence,
    pub output: Vec<f64>,
    pub noise_variance: Option<f64>,
}

impl DataRecord {
    pub fn new(input: InputSequence, output: Vec<f64>, noise_variance: Option<f64>) -> Result<Self> {
        if output.len() != input.len() {
            return Err(Error::DimensionMismatch {
                expected: input.len(),
                got: output.len(),
            });
        }
        if let Some(s2) = noise_variance {
            if !(s2 > 0.0) {
                return Err(Error::InvalidInput(format!("noise variance must be positive, got {s2}")));
            }
        }
        Ok(DataRecord {
            input,
            output,
            noise_variance,
        })
    }

    pub fn len(&self) -> usize {
        self.output.len()
    }

    pub fn is_empty(&self) -> bool {
        self.output.is_empty()
    }
}

#[derive(Serialize, Deserialize)]
struct RawDataRecord {
    u: Vec<f64>,
    y: Vec<f64>,
    #[serde(default)]
    energy: Option<f64>,
    #[serde(default)]
    sigma2: Option<f64>,
}

impl TryFrom<RawDataRecord> for DataRecord {
    type Error = Error;

    fn try_from(raw: RawDataRecord) -> Result<Self> {
        let input = match raw.energy {
            Some(e) if e > 0.0 => InputSequence {
                values: raw.u,
                energy: e,
                power_constrained: false,
            },
            Some(e) => return Err(Error::InvalidInput(format!("energy must be positive, got {e}"))),
            None => InputSequence::new(raw.u),
        };
        DataRecord::new(input, raw.y, raw.sigma2)
    }
}

impl From<DataRecord> for RawDataRecord {
    fn from(rec: DataRecord) -> Self {
        RawDataRecord {
            energy: Some(rec.input.energy),
            u: rec.input.values,
            y: rec.output,
            sigma2: rec.noise_variance,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimationMethod {
    LS,
    RLS,
}

#[derive(Clone, Debug)]
pub struct FirEstimate {
    pub theta: Vec<f64>,
    pub posterior_cov: SymMatrix,
    pub method: EstimationMethod,
}

/// Circulant regressor: row `t` is `[u_t, u_{t−1}, …, u_{t−n+1}]` with
/// indices taken mod `N`.
pub fn build_circulant_regressor(u: &[f64], n: usize) -> Result<Matrix> {
    let big_n = u.len();
    if n == 0 || n > big_n {
        return Err(Error::OrderTooLarge {
            order: n,
            samples: big_n,
        });
    }
    Ok(Matrix::from_fn(big_n, n, |t, i| u[(t + big_n - i) % big_n]))
}

/// `θ̂ = (ΦᵀΦ)⁻¹ΦᵀY`. The reported covariance is `σ²(ΦᵀΦ)⁻¹` when the
/// record carries a noise variance and `(ΦᵀΦ)⁻¹` otherwise.
pub fn ls_estimate(rec: &DataRecord, n: usize) -> Result<FirEstimate> {
    let phi = build_circulant_regressor(rec.input.values(), n)?;
    let chol = matrix::cholesky(&phi.gram()).map_err(|_| Error::SingularRegressor)?;
    let theta = chol.solve(&phi.tr_matvec(&rec.output)?)?;
    let cov = chol.inverse().scaled(rec.noise_variance.unwrap_or(1.0));
    Ok(FirEstimate {
        theta,
        posterior_cov: cov,
        method: EstimationMethod::LS,
    })
}

/// Kernel matrix together with its inverse.
#[derive(Clone, Debug)]
pub struct Prior {
    pub p: SymMatrix,
    pub p_inv: SymMatrix,
}

impl Prior {
    pub fn from_spec(spec: &KernelSpec) -> Result<Self> {
        Ok(Prior {
            p: kernels::build_kernel(spec)?,
            p_inv: kernels::kernel_inverse(spec)?,
        })
    }

    pub fn from_matrix(p: SymMatrix) -> Result<Self> {
        let p_inv = matrix::inverse(&p)?;
        Ok(Prior { p, p_inv })
    }

    pub fn dim(&self) -> usize {
        self.p.dim()
    }
}

/// `Q = ΦᵀΦ + σ²P⁻¹`.
fn information_matrix(phi: &Matrix, p_inv: &SymMatrix, sigma2: f64) -> Result<SymMatrix> {
    phi.gram().add(&p_inv.scaled(sigma2))
}

fn check_sigma2(sigma2: f64) -> Result<()> {
    if sigma2 > 0.0 && sigma2.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("noise variance must be positive, got {sigma2}")))
    }
}

/// `F = ΦPΦᵀ + σ²I_N`.
fn output_covariance(phi: &Matrix, p: &SymMatrix, sigma2: f64) -> Result<SymMatrix> {
    let phi_p = phi.matmul(p.as_matrix())?;
    let n = phi.cols();
    Ok(SymMatrix::from_fn(phi.rows(), |s, t| {
        let v: f64 = (0..n).map(|k| phi_p[(s, k)] * phi[(t, k)]).sum();
        if s == t {
            v + sigma2
        } else {
            v
        }
    }))
}

/// Regularized estimate `θ̂ = PΦᵀ(ΦPΦᵀ + σ²I_N)⁻¹Y` with posterior
/// covariance `σ²Q⁻¹`.
pub fn rls_estimate(rec: &DataRecord, prior: &Prior, sigma2: f64) -> Result<FirEstimate> {
    check_sigma2(sigma2)?;
    let phi = build_circulant_regressor(rec.input.values(), prior.dim())?;
    let f = output_covariance(&phi, &prior.p, sigma2)?;
    let alpha = matrix::solve(&f, &rec.output)?;
    let theta = prior.p.matvec(&phi.tr_matvec(&alpha)?)?;
    let q = information_matrix(&phi, &prior.p_inv, sigma2)?;
    Ok(FirEstimate {
        theta,
        posterior_cov: matrix::inverse(&q)?.scaled(sigma2),
        method: EstimationMethod::RLS,
    })
}

/// Bayesian MSE matrix `σ²Q⁻¹` of the regularized estimate.
pub fn bayesian_mse(u: &[f64], prior: &Prior, sigma2: f64) -> Result<SymMatrix> {
    check_sigma2(sigma2)?;
    let phi = build_circulant_regressor(u, prior.dim())?;
    let q = information_matrix(&phi, &prior.p_inv, sigma2)?;
    Ok(matrix::inverse(&q)?.scaled(sigma2))
}

/// Empirical-Bayes cost `YᵀF⁻¹Y + log det F`, `F = ΦPΦᵀ + σ²I_N`.
pub fn eb_objective(p: &SymMatrix, y: &[f64], u: &[f64], sigma2: f64) -> Result<f64> {
    eb_objective_inner(p, y, u, sigma2, false)
}

fn eb_objective_inner(p: &SymMatrix, y: &[f64], u: &[f64], sigma2: f64, jitter: bool) -> Result<f64> {
    check_sigma2(sigma2)?;
    if y.len() != u.len() {
        return Err(Error::DimensionMismatch {
            expected: u.len(),
            got: y.len(),
        });
    }
    let phi = build_circulant_regressor(u, p.dim())?;
    let f = output_covariance(&phi, p, sigma2)?;
    let chol = if jitter {
        matrix::cholesky_jittered(&f)?.0
    } else {
        matrix::cholesky(&f)?
    };
    let alpha = chol.solve(y)?;
    Ok(matrix::dot(y, &alpha) + chol.logdet())
}

/// Grid and local-refinement settings for [`fit_hyperparameters`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub c_range: (f64, f64),
    pub c_points: usize,
    pub lambda_range: (f64, f64),
    pub lambda_points: usize,
    pub rho_range: (f64, f64),
    pub rho_points: usize,
    /// Nelder-Mead iterations after the grid; 0 disables refinement.
    pub refine_iterations: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            c_range: (1e-4, 1e4),
            c_points: 17,
            lambda_range: (0.5, 0.99),
            lambda_points: 10,
            rho_range: (-0.95, 0.95),
            rho_points: 11,
            refine_iterations: 300,
        }
    }
}

impl SearchConfig {
    /// Collapses the grid onto a single point.
    pub fn single_point(c: f64, lambda: f64, rho: f64) -> Self {
        SearchConfig {
            c_range: (c, c),
            c_points: 1,
            lambda_range: (lambda, lambda),
            lambda_points: 1,
            rho_range: (rho, rho),
            rho_points: 1,
            refine_iterations: 300,
        }
    }
}

fn linspace(lo: f64, hi: f64, k: usize) -> Vec<f64> {
    if k <= 1 || lo == hi {
        return vec![lo];
    }
    (0..k)
        .map(|i| lo + (hi - lo) * i as f64 / (k - 1) as f64)
        .collect()
}

/// Search coordinates: `ln c`, then `λ`, then `ρ`, as the family needs.
struct Coordinates {
    family: KernelFamily,
    n: usize,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl Coordinates {
    fn new(family: KernelFamily, n: usize, cfg: &SearchConfig) -> Result<Self> {
        let bad = |what: &str| Error::InvalidInput(format!("invalid search range for {what}"));
        let (c_lo, c_hi) = cfg.c_range;
        if !(c_lo > 0.0 && c_lo <= c_hi) {
            return Err(bad("c"));
        }
        let (l_lo, l_hi) = cfg.lambda_range;
        let (r_lo, r_hi) = cfg.rho_range;
        let mut lower = vec![c_lo.ln()];
        let mut upper = vec![c_hi.ln()];
        match family {
            KernelFamily::Ridge => {}
            KernelFamily::DI | KernelFamily::TC | KernelFamily::DC => {
                if !(l_lo > 0.0 && l_lo <= l_hi && l_hi <= 1.0) {
                    return Err(bad("lambda"));
                }
                lower.push(l_lo);
                upper.push(l_hi);
                if family == KernelFamily::DC {
                    if !(r_lo <= r_hi && r_lo > -1.0 && r_hi < 1.0) {
                        return Err(bad("rho"));
                    }
                    lower.push(r_lo);
                    upper.push(r_hi);
                }
            }
            other => {
                return Err(Error::InvalidInput(format!(
                    "{other:?} kernels have no tunable hyperparameters"
                )))
            }
        }
        Ok(Coordinates {
            family,
            n,
            lower,
            upper,
        })
    }

    fn grid(&self, cfg: &SearchConfig) -> Vec<Vec<f64>> {
        let axes = [
            linspace(self.lower[0], self.upper[0], cfg.c_points),
            linspace(cfg.lambda_range.0, cfg.lambda_range.1, cfg.lambda_points),
            linspace(cfg.rho_range.0, cfg.rho_range.1, cfg.rho_points),
        ];
        let dims = self.lower.len();
        let mut points: Vec<Vec<f64>> = vec![vec![]];
        for axis in axes.iter().take(dims) {
            points = points
                .into_iter()
                .flat_map(|p| {
                    axis.iter().map(move |v| {
                        let mut q = p.clone();
                        q.push(*v);
                        q
                    })
                })
                .collect();
        }
        points
    }

    fn clip(&self, x: &mut [f64]) {
        for ((v, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *v = v.clamp(*lo, *hi);
        }
    }

    fn spec(&self, x: &[f64]) -> Result<KernelSpec> {
        let c = x[0].exp();
        match self.family {
            KernelFamily::Ridge => KernelSpec::ridge(c, self.n),
            KernelFamily::DI => KernelSpec::di(c, x[1], self.n),
            KernelFamily::TC => KernelSpec::tc(c, x[1], self.n),
            KernelFamily::DC => KernelSpec::dc(c, x[1], x[2], self.n),
            _ => unreachable!("rejected in Coordinates::new"),
        }
    }
}

/// Minimizes the empirical-Bayes cost over the family's hyperparameters:
/// a grid (log-spaced in `c`) followed by box-clipped Nelder-Mead from the
/// best grid point.
pub fn fit_hyperparameters(
    y: &[f64],
    u: &[f64],
    n: usize,
    sigma2: f64,
    family: KernelFamily,
    cfg: &SearchConfig,
) -> Result<KernelSpec> {
    check_sigma2(sigma2)?;
    let coords = Coordinates::new(family, n, cfg)?;
    let cost = |x: &[f64]| -> f64 {
        coords
            .spec(x)
            .and_then(|s| kernels::build_kernel(&s))
            .and_then(|p| eb_objective_inner(&p, y, u, sigma2, true))
            .unwrap_or(f64::INFINITY)
    };

    let grid = coords.grid(cfg);
    let values: Vec<f64> = grid.par_iter().map(|x| cost(x)).collect();
    let (best_idx, best_val) = values
        .iter()
        .enumerate()
        .fold((usize::MAX, f64::INFINITY), |acc, (i, v)| {
            if *v < acc.1 {
                (i, *v)
            } else {
                acc
            }
        });
    if best_idx == usize::MAX || !best_val.is_finite() {
        return Err(Error::SearchFailure);
    }
    let mut best = grid[best_idx].clone();
    if cfg.refine_iterations > 0 {
        best = nelder_mead(&cost, best, &coords, cfg.refine_iterations);
    }
    coords.spec(&best)
}

/// Box-clipped Nelder-Mead. Never returns a point worse than `start`.
fn nelder_mead(
    cost: &dyn Fn(&[f64]) -> f64,
    start: Vec<f64>,
    coords: &Coordinates,
    iterations: usize,
) -> Vec<f64> {
    let dims = start.len();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(dims + 1);
    simplex.push((start.clone(), cost(&start)));
    for d in 0..dims {
        let span = coords.upper[d] - coords.lower[d];
        let mut x = start.clone();
        let step = 0.1 * span;
        x[d] = if x[d] + step <= coords.upper[d] {
            x[d] + step
        } else {
            x[d] - step
        };
        coords.clip(&mut x);
        let f = cost(&x);
        simplex.push((x, f));
    }

    for _ in 0..iterations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let spread = simplex[dims].1 - simplex[0].1;
        if spread.abs() <= 1e-10 * simplex[0].1.abs().max(1.0) {
            break;
        }
        let centroid: Vec<f64> = (0..dims)
            .map(|d| simplex[..dims].iter().map(|p| p.0[d]).sum::<f64>() / dims as f64)
            .collect();
        let toward = |t: f64| -> Vec<f64> {
            let mut x: Vec<f64> = (0..dims)
                .map(|d| centroid[d] + t * (simplex[dims].0[d] - centroid[d]))
                .collect();
            coords.clip(&mut x);
            x
        };
        let xr = toward(-1.0);
        let fr = cost(&xr);
        if fr < simplex[0].1 {
            let xe = toward(-2.0);
            let fe = cost(&xe);
            simplex[dims] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[dims - 1].1 {
            simplex[dims] = (xr, fr);
        } else {
            let xc = if fr < simplex[dims].1 { toward(-0.5) } else { toward(0.5) };
            let fc = cost(&xc);
            if fc < simplex[dims].1.min(fr) {
                simplex[dims] = (xc, fc);
            } else {
                let best = simplex[0].0.clone();
                for p in simplex.iter_mut().skip(1) {
                    let mut x: Vec<f64> =
                        p.0.iter().zip(&best).map(|(a, b)| b + 0.5 * (a - b)).collect();
                    coords.clip(&mut x);
                    p.1 = cost(&x);
                    p.0 = x;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0).0
}

/// Default LS order for the noise-variance fit: `min(⌊N/2⌋, n)`.
pub fn default_noise_order(n_samples: usize, n: usize) -> usize {
    (n_samples / 2).min(n).max(1)
}

/// `σ̂² = ‖Y − Φ_m θ̂_LS‖² / (N − m)` from an order-`m` LS fit.
pub fn estimate_noise_variance(y: &[f64], u: &[f64], m: usize) -> Result<f64> {
    let big_n = u.len();
    if y.len() != big_n {
        return Err(Error::DimensionMismatch {
            expected: big_n,
            got: y.len(),
        });
    }
    if m == 0 || m >= big_n {
        return Err(Error::OrderTooLarge {
            order: m,
            samples: big_n,
        });
    }
    let dof = big_n - m;
    if dof < 2 {
        return Err(Error::InsufficientDof { dof });
    }
    let rec = DataRecord::new(InputSequence::new(u.to_vec()), y.to_vec(), None)?;
    let fit = ls_estimate(&rec, m)?;
    let phi = build_circulant_regressor(u, m)?;
    let pred = phi.matvec(&fit.theta)?;
    let rss: f64 = y.iter().zip(&pred).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(rss / dof as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design_map::quadratic_map;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
        (0..k).map(|_| StandardNormal.sample(rng)).collect()
    }

    fn record(u: Vec<f64>, y: Vec<f64>) -> DataRecord {
        DataRecord::new(InputSequence::new(u), y, None).unwrap()
    }

    #[test]
    fn circulant_regressor_rows() {
        let phi = build_circulant_regressor(&[1.0, 0.0, 0.0], 2).unwrap();
        assert_eq!(phi.to_rows(), vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]]);

        let phi = build_circulant_regressor(&[4.0, -2.0], 1).unwrap();
        assert_eq!(phi.to_rows(), vec![vec![4.0], vec![-2.0]]);

        assert!(matches!(
            build_circulant_regressor(&[1.0, 2.0], 3),
            Err(Error::OrderTooLarge { .. })
        ));
    }

    #[test]
    fn gram_is_toeplitz_of_correlations() {
        let g = build_circulant_regressor(&[1.0, 2.0, 3.0], 2).unwrap().gram();
        assert_eq!(g.to_rows(), vec![vec![14.0, 11.0], vec![11.0, 14.0]]);
        let r = quadratic_map(&[1.0, 2.0, 3.0], 2).unwrap();
        assert_eq!(g, r.toeplitz());

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = gaussian(&mut rng, 17);
        let g = build_circulant_regressor(&u, 6).unwrap().gram();
        assert!(g.max_abs_diff(&quadratic_map(&u, 6).unwrap().toeplitz()) < 1e-12);
    }

    #[test]
    fn ls_recovers_noise_free_system() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = gaussian(&mut rng, 30);
        let theta0 = vec![1.0, -0.5, 0.25, 0.1];
        let phi = build_circulant_regressor(&u, 4).unwrap();
        let y = phi.matvec(&theta0).unwrap();
        let est = ls_estimate(&record(u.clone(), y), 4).unwrap();
        for (a, b) in est.theta.iter().zip(&theta0) {
            assert!((a - b).abs() < 1e-9);
        }
        let est = ls_estimate(&record(u, vec![0.0; 30]), 4).unwrap();
        assert!(est.theta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn ls_residual_is_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let u = gaussian(&mut rng, 25);
        let y = gaussian(&mut rng, 25);
        let est = ls_estimate(&record(u.clone(), y.clone()), 5).unwrap();
        let phi = build_circulant_regressor(&u, 5).unwrap();
        let pred = phi.matvec(&est.theta).unwrap();
        let resid: Vec<f64> = y.iter().zip(&pred).map(|(a, b)| a - b).collect();
        assert!(phi.tr_matvec(&resid).unwrap().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn ls_singular_regressor() {
        let rec = record(vec![1.0; 6], vec![0.0; 6]);
        assert!(matches!(ls_estimate(&rec, 3), Err(Error::SingularRegressor)));
    }

    #[test]
    fn rls_with_flat_prior_matches_ls() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = gaussian(&mut rng, 40);
        let y = gaussian(&mut rng, 40);
        let rec = record(u, y);
        let ls = ls_estimate(&rec, 4).unwrap();
        let prior = Prior::from_matrix(SymMatrix::identity(4).scaled(1e8)).unwrap();
        let rls = rls_estimate(&rec, &prior, 1.0).unwrap();
        let scale = ls.theta.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in rls.theta.iter().zip(&ls.theta) {
            assert!((a - b).abs() <= 1e-4 * scale);
        }
        let zero = rls_estimate(&record(rec.input.values().to_vec(), vec![0.0; 40]), &prior, 1.0)
            .unwrap();
        assert!(zero.theta.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn rls_matches_information_form() {
        // (ΦᵀΦ + σ²P⁻¹)⁻¹ΦᵀY on a 2x2 instance
        let u = vec![1.0, 0.5];
        let y = vec![0.3, -1.2];
        let spec = KernelSpec::dc(1.0, 0.8, 0.4, 2).unwrap();
        let prior = Prior::from_spec(&spec).unwrap();
        let sigma2 = 0.7;
        let rls = rls_estimate(&record(u.clone(), y.clone()), &prior, sigma2).unwrap();
        let phi = build_circulant_regressor(&u, 2).unwrap();
        let q = phi.gram().add(&prior.p_inv.scaled(sigma2)).unwrap();
        let other = matrix::solve(&q, &phi.tr_matvec(&y).unwrap()).unwrap();
        for (a, b) in rls.theta.iter().zip(&other) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn bayesian_mse_examples() {
        let (e, c, s2, n) = (2.0f64, 3.0, 0.5, 4);
        let prior = Prior::from_spec(&KernelSpec::ridge(c, n).unwrap()).unwrap();
        let mut u = vec![0.0; 7];
        u[0] = e.sqrt();
        let m = bayesian_mse(&u, &prior, s2).unwrap();
        let want = SymMatrix::identity(n).scaled(s2 / (e + s2 / c));
        assert!(m.max_abs_diff(&want) < 1e-14);

        // no data: prior covariance
        let dc = Prior::from_spec(&KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap()).unwrap();
        let m = bayesian_mse(&[0.0; 5], &dc, s2).unwrap();
        assert!(m.max_abs_diff(&dc.p) < 1e-12);
    }

    #[test]
    fn bayesian_mse_is_rls_posterior() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let u = gaussian(&mut rng, 12);
        let y = gaussian(&mut rng, 12);
        let prior = Prior::from_spec(&KernelSpec::tc(2.0, 0.7, 5).unwrap()).unwrap();
        let m = bayesian_mse(&u, &prior, 0.3).unwrap();
        let est = rls_estimate(&record(u, y), &prior, 0.3).unwrap();
        assert!(m.max_abs_diff(&est.posterior_cov) < 1e-14);
    }

    #[test]
    fn eb_objective_limits_and_symmetry() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = gaussian(&mut rng, 20);
        let y = gaussian(&mut rng, 20);
        let s2 = 0.8;
        let tiny = kernels::build_kernel(&KernelSpec::tc(1e-12, 0.8, 5).unwrap()).unwrap();
        let v = eb_objective(&tiny, &y, &u, s2).unwrap();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        let want = yy / s2 + 20.0 * s2.ln();
        assert!((v - want).abs() < 1e-3);

        let p = kernels::build_kernel(&KernelSpec::dc(1.0, 0.8, 0.3, 5).unwrap()).unwrap();
        let neg: Vec<f64> = y.iter().map(|v| -v).collect();
        assert_relative_eq!(
            eb_objective(&p, &y, &u, s2).unwrap(),
            eb_objective(&p, &neg, &u, s2).unwrap(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn eb_objective_by_dense_assembly() {
        // F assembled entry by entry from the regression model
        let u = vec![0.5, -1.0, 2.0, 0.25];
        let y = vec![1.0, 0.0, -0.5, 0.3];
        let p = kernels::build_kernel(&KernelSpec::tc(1.5, 0.6, 2).unwrap()).unwrap();
        let s2 = 0.4;
        let big_n = 4;
        let reg = |t: usize, i: usize| u[(t + big_n - i) % big_n];
        let f = SymMatrix::from_fn(big_n, |s, t| {
            let mut v = if s == t { s2 } else { 0.0 };
            for i in 0..2 {
                for j in 0..2 {
                    v += reg(s, i) * p[(i, j)] * reg(t, j);
                }
            }
            v
        });
        let finv = matrix::inverse(&f).unwrap();
        let want = finv.quad_form(&y) + matrix::logdet(&f).unwrap();
        assert_relative_eq!(eb_objective(&p, &y, &u, s2).unwrap(), want, max_relative = 1e-12);
    }

    #[test]
    fn single_point_grid_returns_that_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let u = gaussian(&mut rng, 30);
        let y = gaussian(&mut rng, 30);
        let cfg = SearchConfig::single_point(0.7, 0.85, 0.0);
        let spec = fit_hyperparameters(&y, &u, 6, 1.0, KernelFamily::TC, &cfg).unwrap();
        assert_eq!(spec, KernelSpec::tc(0.7f64.ln().exp(), 0.85, 6).unwrap());
    }

    #[test]
    fn untunable_family_is_rejected() {
        let cfg = SearchConfig::default();
        assert!(fit_hyperparameters(&[0.0; 4], &[1.0; 4], 2, 1.0, KernelFamily::Diagonal, &cfg)
            .is_err());
    }

    #[test]
    fn noise_variance_edge_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = gaussian(&mut rng, 40);
        let phi = build_circulant_regressor(&u, 3).unwrap();
        let y = phi.matvec(&[1.0, 0.5, 0.25]).unwrap();
        let yy: f64 = y.iter().map(|v| v * v).sum();
        assert!(estimate_noise_variance(&y, &u, 5).unwrap() <= 1e-12 * yy);
        assert!(estimate_noise_variance(&y, &u, 39).is_err());
        assert!(estimate_noise_variance(&y, &u, 40).is_err());
        assert_eq!(default_noise_order(50, 20), 20);
        assert_eq!(default_noise_order(50, 50), 25);
    }

    #[test]
    fn noise_variance_of_pure_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let sigma = 0.7;
        let mut hits = 0;
        for _ in 0..20 {
            let u = gaussian(&mut rng, 200);
            let y: Vec<f64> = gaussian(&mut rng, 200).iter().map(|v| sigma * v).collect();
            let s2 = estimate_noise_variance(&y, &u, 20).unwrap();
            if (s2 / (sigma * sigma) - 1.0).abs() <= 0.3 {
                hits += 1;
            }
        }
        assert_eq!(hits, 20);
        let _ = rng.random::<f64>();
    }

    #[test]
    fn data_record_json() {
        let rec: DataRecord =
            serde_json::from_str(r#"{"u":[1,0,0],"y":[0.5,0.1,0],"energy":1.0,"sigma2":null}"#)
                .unwrap();
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.noise_variance, None);
        let back: DataRecord = serde_json::from_str(&serde_json::to_string(&rec).unwrap()).unwrap();
        assert_eq!(back, rec);
        assert!(serde_json::from_str::<DataRecord>(r#"{"u":[1,0],"y":[0.5],"sigma2":1}"#).is_err());
    }

    #[test]
    fn power_constraint_enforced() {
        assert!(InputSequence::power_constrained(vec![1.0, 1.0], 2.0).is_ok());
        assert!(InputSequence::power_constrained(vec![1.0, 1.0], 2.1).is_err());
        let u = InputSequence::rescaled(vec![3.0, 4.0], 10.0).unwrap();
        assert!((u.values().iter().map(|v| v * v).sum::<f64>() - 10.0).abs() < 1e-12);
    }
}
