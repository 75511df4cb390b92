//! Executable checks of how kernel structure decides whether the impulse
//! correlation `r†` is an optimal design.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::design_map::quadratic_map;
use crate::error::{Error, Result};
use crate::estimator::InputSequence;
use crate::kernels::{self, KernelSpec};
use crate::matrix::{self, SymMatrix};
use crate::solver::{self, Criterion, DesignProblem, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalyticVerdict {
    pub claim_id: String,
    pub holds: bool,
    pub witness: Vec<f64>,
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub note: String,
}

/// Absolute threshold below which a gradient trace counts as zero.
pub const TRACE_TOL: f64 = 1e-10;

fn margin(value: f64, opts: &SolverOptions) -> f64 {
    10.0 * opts.tol * value.abs()
}

/// Outcome of solving one criterion against the `r†` baseline.
struct Comparison {
    at_dagger: f64,
    value: f64,
    distance: f64,
}

impl Comparison {
    fn run(problem: &DesignProblem) -> Result<Self> {
        let sol = solver::solve(problem)?;
        let dagger = problem.r_dagger();
        Ok(Comparison {
            at_dagger: solver::eval_criterion(problem, &dagger)?,
            value: sol.value,
            distance: sol.r.max_abs_diff(&dagger),
        })
    }

    fn improvement(&self) -> f64 {
        self.at_dagger - self.value
    }

    fn improves(&self) -> bool {
        self.improvement() > margin(self.value, &SolverOptions::default())
    }
}

fn min_of(values: &[f64]) -> f64 {
    values.iter().cloned().fold(f64::INFINITY, f64::min)
}

/// Diagonal kernels: `r†` must be stationary and the solver must return it
/// for both D and A.
pub fn verify_ridge_diagonal(
    spec: &KernelSpec,
    n_samples: usize,
    sigma2: f64,
    energy: f64,
) -> Result<AnalyticVerdict> {
    if !spec.is_diagonal() {
        return Err(Error::PreconditionViolated(format!(
            "{:?} kernel is not diagonal",
            spec.family()
        )));
    }
    let mut holds = true;
    let mut witness = Vec::new();
    for crit in [Criterion::D, Criterion::A] {
        let problem = DesignProblem::new(spec.clone(), sigma2, n_samples, energy, crit)?;
        let check = solver::check_rdagger_optimality(&problem)?;
        let worst = check.vertex_scores.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cmp = Comparison::run(&problem)?;
        holds &= check.is_stationary && worst <= TRACE_TOL && cmp.distance <= 1e-6 * energy;
        witness.extend([worst, cmp.distance]);
    }
    Ok(AnalyticVerdict {
        claim_id: format!("diagonal-{:?}", spec.family()).to_lowercase(),
        holds,
        witness,
        note: String::new(),
    })
}

/// Sign of the off-diagonal band of a tridiagonal `P⁻¹`: `+1` when every
/// entry is negative (so `e_j > 0`), `−1` when every entry is positive.
fn off_diagonal_sign(p_inv: &SymMatrix) -> Result<f64> {
    let n = p_inv.dim();
    let scale = p_inv.max_abs();
    for i in 0..n {
        for j in i + 2..n {
            if p_inv[(i, j)].abs() > 1e-12 * scale {
                return Err(Error::PreconditionViolated(
                    "inverse kernel matrix is not tridiagonal".into(),
                ));
            }
        }
    }
    let e: Vec<f64> = (1..n).map(|i| -p_inv[(i - 1, i)]).collect();
    if !e.is_empty() && e.iter().all(|v| *v > 0.0) {
        Ok(1.0)
    } else if !e.is_empty() && e.iter().all(|v| *v < 0.0) {
        Ok(-1.0)
    } else {
        Err(Error::PreconditionViolated(
            "off-diagonal entries must be nonzero with a common sign".into(),
        ))
    }
}

/// Tridiagonal `P⁻¹`: checks the sign pattern of `Q(r†)⁻¹` entry by entry
/// and that `r†` is beaten for D and A. The second part is asserted when
/// `e_j > 0`, when `N` is even, or when `n = 2`; the remaining case is only
/// reported.
pub fn verify_tridiagonal_signs(
    p_inv: &SymMatrix,
    n_samples: usize,
    sigma2: f64,
    energy: f64,
) -> Result<AnalyticVerdict> {
    let sign = off_diagonal_sign(p_inv)?;
    let n = p_inv.dim();
    let spec = KernelSpec::custom_inverse(p_inv.clone())?;
    let q = p_inv.scaled(sigma2).add_diagonal(energy);
    let qi = matrix::inverse(&q)?;
    let mut pattern_ok = true;
    for i in 0..n {
        for j in 0..n {
            let expected = if sign > 0.0 || (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            pattern_ok &= qi[(i, j)] * expected > 0.0;
        }
    }

    let asserted = sign > 0.0 || n_samples % 2 == 0 || n == 2;
    let mut violated_and_improved = true;
    let mut witness = Vec::new();
    for crit in [Criterion::D, Criterion::A] {
        let problem = DesignProblem::new(spec.clone(), sigma2, n_samples, energy, crit)?;
        let check = solver::check_rdagger_optimality(&problem)?;
        let cmp = Comparison::run(&problem)?;
        violated_and_improved &= !check.is_stationary && cmp.improves();
        witness.extend([min_of(&check.vertex_scores), cmp.improvement()]);
    }

    let holds = pattern_ok && (!asserted || violated_and_improved);
    let note = if asserted {
        String::new()
    } else {
        format!(
            "odd N with e_j < 0: reported only (r† beaten for D and A: {violated_and_improved})"
        )
    };
    let case = if sign > 0.0 { "positive" } else { "negative" };
    Ok(AnalyticVerdict {
        claim_id: format!("tridiagonal-{case}"),
        holds,
        witness,
        note,
    })
}

/// `Tr(Q(r†)⁻ᵏQ_i)` for `i = 1..n−1`.
fn dagger_traces(problem: &DesignProblem, power: u32) -> Result<Vec<f64>> {
    let q = solver::q_of_r(&problem.r_dagger(), problem.p_inv(), problem.sigma2())?;
    let qi = matrix::inverse(&q)?;
    let m = if power == 1 {
        qi
    } else {
        SymMatrix::from_matrix(&qi.matmul(&qi)?)?
    };
    let n = m.dim();
    Ok((1..n)
        .map(|i| 2.0 * (0..n - i).map(|j| m[(j, j + i)]).sum::<f64>())
        .collect())
}

/// General positive definite kernel with `N ≥ 2n − 2`: a nonzero trace
/// for a criterion means `r†` is not optimal for it. With every D trace
/// zero the solver must return `r†`; with every A trace zero the A case is
/// reported only.
pub fn verify_general_nondiagonal(
    spec: &KernelSpec,
    n_samples: usize,
    sigma2: f64,
    energy: f64,
) -> Result<AnalyticVerdict> {
    let n = spec.n();
    if n_samples + 2 < 2 * n {
        return Err(Error::PreconditionViolated(format!(
            "need N ≥ 2n − 2 = {}, got N = {n_samples}",
            2 * n - 2
        )));
    }
    let mut holds = true;
    let mut witness = Vec::new();
    let mut notes = Vec::new();
    for (crit, power) in [(Criterion::D, 1), (Criterion::A, 2)] {
        let problem = DesignProblem::new(spec.clone(), sigma2, n_samples, energy, crit)?;
        let traces = dagger_traces(&problem, power)?;
        let largest = traces.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let cmp = Comparison::run(&problem)?;
        witness.extend([largest, cmp.improvement(), cmp.distance]);
        if largest > TRACE_TOL {
            let check = solver::check_rdagger_optimality(&problem)?;
            holds &= !check.is_stationary && cmp.improves();
        } else if crit == Criterion::D {
            holds &= cmp.distance <= 1e-6 * energy;
        } else {
            notes.push(format!(
                "A traces vanish: reported only (distance to r† {:.3e})",
                cmp.distance
            ));
        }
    }
    Ok(AnalyticVerdict {
        claim_id: "general-nondiagonal".into(),
        holds,
        witness,
        note: notes.join("; "),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhiteNoiseRow {
    pub n_samples: usize,
    pub median_gap: f64,
    pub gaps: Vec<f64>,
}

/// Criterion gap between power-normalized white noise and `r†` for a
/// diagonal kernel, per record length.
pub fn asymptotic_white_noise_check(
    spec: &KernelSpec,
    sigma2: f64,
    energy: f64,
    criterion: Criterion,
    n_list: &[usize],
    seeds: usize,
    master_seed: u64,
) -> Result<Vec<WhiteNoiseRow>> {
    if !spec.is_diagonal() {
        return Err(Error::PreconditionViolated(format!(
            "{:?} kernel is not diagonal",
            spec.family()
        )));
    }
    n_list
        .iter()
        .map(|&big_n| {
            let problem = DesignProblem::new(spec.clone(), sigma2, big_n, energy, criterion)?;
            let base = solver::eval_criterion(&problem, &problem.r_dagger())?;
            let mut gaps = Vec::with_capacity(seeds);
            for s in 0..seeds {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(s as u64);
                let raw: Vec<f64> = (0..big_n).map(|_| StandardNormal.sample(&mut rng)).collect();
                let u = InputSequence::rescaled(raw, energy)?;
                let r = quadratic_map(u.values(), spec.n())?;
                gaps.push(solver::eval_criterion(&problem, &r)? - base);
            }
            Ok(WhiteNoiseRow {
                n_samples: big_n,
                median_gap: median(&gaps),
                gaps,
            })
        })
        .collect()
}

pub(crate) fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// Names accepted by [`run_claim`], in suite order.
pub const CLAIMS: [&str; 9] = [
    "ridge",
    "diagonal",
    "di",
    "dc-positive",
    "dc-negative",
    "two-tap",
    "tc",
    "example1",
    "white-noise",
];

/// Runs one named claim on its default instance.
pub fn run_claim(name: &str) -> Result<AnalyticVerdict> {
    let mut verdict = match name {
        "ridge" => verify_ridge_diagonal(&KernelSpec::ridge(3.0, 4)?, 10, 1.0, 1.0)?,
        "diagonal" => verify_ridge_diagonal(&KernelSpec::diagonal(vec![1.0, 2.0, 3.0])?, 8, 1.0, 1.0)?,
        "di" => verify_ridge_diagonal(&KernelSpec::di(1.0, 0.7, 4)?, 10, 1.0, 1.0)?,
        "dc-positive" => {
            let p_inv = kernels::kernel_inverse(&KernelSpec::dc(1.0, 0.9, 0.6, 4)?)?;
            verify_tridiagonal_signs(&p_inv, 9, 1.0, 1.0)?
        }
        "dc-negative" => {
            let p_inv = kernels::kernel_inverse(&KernelSpec::dc(1.0, 0.9, -0.6, 4)?)?;
            verify_tridiagonal_signs(&p_inv, 8, 1.0, 1.0)?
        }
        "two-tap" => {
            let p_inv = SymMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 2.0]])?;
            verify_tridiagonal_signs(&p_inv, 5, 1.0, 1.0)?
        }
        "tc" => verify_general_nondiagonal(&KernelSpec::tc(1.0, 0.8, 4)?, 8, 1.0, 1.0)?,
        "example1" => {
            let spec = KernelSpec::custom_inverse(kernels::counterexample_inverse())?;
            verify_general_nondiagonal(&spec, 6, 1.0, 1.0)?
        }
        "white-noise" => {
            let rows = asymptotic_white_noise_check(
                &KernelSpec::ridge(1.0, 4)?,
                1.0,
                1.0,
                Criterion::D,
                &[32, 256],
                50,
                0,
            )?;
            let first = rows[0].median_gap;
            let last = rows[rows.len() - 1].median_gap;
            AnalyticVerdict {
                claim_id: String::new(),
                holds: last < first,
                witness: rows.iter().map(|r| r.median_gap).collect(),
                note: String::new(),
            }
        }
        other => return Err(Error::InvalidInput(format!("unknown claim '{other}'"))),
    };
    verdict.claim_id = name.to_string();
    Ok(verdict)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ridge_and_di_hold() {
        let v = verify_ridge_diagonal(&KernelSpec::ridge(3.0, 4).unwrap(), 10, 1.0, 1.0).unwrap();
        assert!(v.holds, "{v:?}");
        let v = verify_ridge_diagonal(&KernelSpec::di(1.0, 0.7, 4).unwrap(), 10, 1.0, 1.0).unwrap();
        assert!(v.holds, "{v:?}");
    }

    #[test]
    fn non_diagonal_rejected() {
        let spec = KernelSpec::dc(1.0, 0.9, 0.5, 3).unwrap();
        assert!(matches!(
            verify_ridge_diagonal(&spec, 8, 1.0, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
        assert!(asymptotic_white_noise_check(&spec, 1.0, 1.0, Criterion::D, &[8], 2, 0).is_err());
    }

    #[test]
    fn dc_sign_cases() {
        let pos = kernels::kernel_inverse(&KernelSpec::dc(1.0, 0.9, 0.6, 4).unwrap()).unwrap();
        let v = verify_tridiagonal_signs(&pos, 9, 1.0, 1.0).unwrap();
        assert!(v.holds && v.note.is_empty(), "{v:?}");
        let neg = kernels::kernel_inverse(&KernelSpec::dc(1.0, 0.9, -0.6, 4).unwrap()).unwrap();
        let v = verify_tridiagonal_signs(&neg, 8, 1.0, 1.0).unwrap();
        assert!(v.holds && v.note.is_empty(), "{v:?}");
        let v = verify_tridiagonal_signs(&neg, 9, 1.0, 1.0).unwrap();
        assert!(!v.note.is_empty());
    }

    #[test]
    fn two_tap_negative_e_odd_n() {
        let p_inv = SymMatrix::from_rows(&[vec![1.0, 0.4], vec![0.4, 2.0]]).unwrap();
        let v = verify_tridiagonal_signs(&p_inv, 5, 1.0, 1.0).unwrap();
        assert!(v.holds && v.note.is_empty(), "{v:?}");
    }

    #[test]
    fn mixed_signs_rejected() {
        let p_inv = SymMatrix::from_rows(&[
            vec![2.0, -0.3, 0.0],
            vec![-0.3, 2.0, 0.3],
            vec![0.0, 0.3, 2.0],
        ])
        .unwrap();
        assert!(matches!(
            verify_tridiagonal_signs(&p_inv, 6, 1.0, 1.0),
            Err(Error::PreconditionViolated(_))
        ));
        let full = kernels::build_kernel(&KernelSpec::tc(1.0, 0.8, 3).unwrap()).unwrap();
        assert!(verify_tridiagonal_signs(&full, 6, 1.0, 1.0).is_err());
    }

    #[test]
    fn general_cases() {
        let v = verify_general_nondiagonal(&KernelSpec::tc(1.0, 0.8, 4).unwrap(), 8, 1.0, 1.0).unwrap();
        assert!(v.holds, "{v:?}");
        assert!(v.witness[0] > TRACE_TOL && v.witness[3] > TRACE_TOL);

        let spec = KernelSpec::custom_inverse(kernels::counterexample_inverse()).unwrap();
        let v = verify_general_nondiagonal(&spec, 6, 1.0, 1.0).unwrap();
        assert!(v.holds, "{v:?}");
        assert!(v.witness[0] <= 1e-12);

        let v = verify_general_nondiagonal(&KernelSpec::ridge(1.0, 3).unwrap(), 6, 1.0, 1.0).unwrap();
        assert!(v.holds && !v.note.is_empty());

        assert!(verify_general_nondiagonal(&KernelSpec::tc(1.0, 0.8, 4).unwrap(), 5, 1.0, 1.0).is_err());
    }

    #[test]
    fn impulse_and_constant_inputs() {
        let spec = KernelSpec::ridge(1.0, 3).unwrap();
        let problem = DesignProblem::new(spec, 1.0, 16, 4.0, Criterion::D).unwrap();
        let base = solver::eval_criterion(&problem, &problem.r_dagger()).unwrap();
        let mut imp = vec![0.0; 16];
        imp[3] = 2.0;
        let r = quadratic_map(&imp, 3).unwrap();
        assert_eq!(solver::eval_criterion(&problem, &r).unwrap() - base, 0.0);
        let flat = vec![0.5; 16];
        let r = quadratic_map(&flat, 3).unwrap();
        assert!(solver::eval_criterion(&problem, &r).unwrap() - base > 0.0);
    }

    #[test]
    fn white_noise_gap_shrinks() {
        let rows = asymptotic_white_noise_check(
            &KernelSpec::ridge(1.0, 4).unwrap(),
            1.0,
            1.0,
            Criterion::A,
            &[32, 256],
            50,
            7,
        )
        .unwrap();
        assert!(rows[1].median_gap < rows[0].median_gap);
        assert!(rows.iter().all(|r| r.gaps.iter().all(|g| *g >= -1e-12)));
    }

    #[test]
    fn claim_registry() {
        for name in ["ridge", "two-tap", "example1"] {
            let v = run_claim(name).unwrap();
            assert_eq!(v.claim_id, name);
            assert!(v.holds);
        }
        assert!(run_claim("nonsense").is_err());
    }

    #[test]
    fn median_values() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median(&[]).is_nan());
    }
}
