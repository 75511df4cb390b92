//! Kernel (prior covariance) matrices for regularized FIR estimation.
//!
//! Indices in the closed forms below are one-based, matching the usual
//! convention that `g_1` is the first impulse response coefficient.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{self, SymMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum KernelFamily {
    Ridge,
    Diagonal,
    DI,
    TC,
    DC,
    CustomInverse,
}

impl std::str::FromStr for KernelFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "RIDGE" => Ok(KernelFamily::Ridge),
            "DIAGONAL" => Ok(KernelFamily::Diagonal),
            "DI" => Ok(KernelFamily::DI),
            "TC" => Ok(KernelFamily::TC),
            "DC" => Ok(KernelFamily::DC),
            "CUSTOMINVERSE" => Ok(KernelFamily::CustomInverse),
            other => Err(Error::InvalidInput(format!("unknown kernel family `{other}`"))),
        }
    }
}

/// Family together with its hyperparameters.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `P = c·I`
    Ridge { c: f64 },
    /// `P = diag(λ_1, …, λ_n)`
    Diagonal { lambdas: Vec<f64> },
    /// `P = c·diag(λ, λ², …, λⁿ)`
    DI { c: f64, lambda: f64 },
    /// `P_kj = c·λ^max(k,j)`
    TC { c: f64, lambda: f64 },
    /// `P_kj = c·λ^((k+j)/2)·ρ^|j−k|`
    DC { c: f64, lambda: f64, rho: f64 },
    /// The inverse `P⁻¹` given explicitly.
    CustomInverse { p_inv: SymMatrix },
}

/// Hyperparameterized kernel of a given FIR order.
///
/// Construction validates the hyperparameters, so every `KernelSpec` in
/// circulation is inside the admissible set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawKernelSpec", into = "RawKernelSpec")]
pub struct KernelSpec {
    kernel: Kernel,
    n: usize,
}

impl KernelSpec {
    pub fn new(kernel: Kernel, n: usize) -> Result<Self> {
        validate(&kernel, n)?;
        Ok(KernelSpec { kernel, n })
    }

    pub fn ridge(c: f64, n: usize) -> Result<Self> {
        Self::new(Kernel::Ridge { c }, n)
    }

    pub fn diagonal(lambdas: Vec<f64>) -> Result<Self> {
        let n = lambdas.len();
        Self::new(Kernel::Diagonal { lambdas }, n)
    }

    pub fn di(c: f64, lambda: f64, n: usize) -> Result<Self> {
        Self::new(Kernel::DI { c, lambda }, n)
    }

    pub fn tc(c: f64, lambda: f64, n: usize) -> Result<Self> {
        Self::new(Kernel::TC { c, lambda }, n)
    }

    pub fn dc(c: f64, lambda: f64, rho: f64, n: usize) -> Result<Self> {
        Self::new(Kernel::DC { c, lambda, rho }, n)
    }

    pub fn custom_inverse(p_inv: SymMatrix) -> Result<Self> {
        let n = p_inv.dim();
        Self::new(Kernel::CustomInverse { p_inv }, n)
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> KernelFamily {
        match self.kernel {
            Kernel::Ridge { .. } => KernelFamily::Ridge,
            Kernel::Diagonal { .. } => KernelFamily::Diagonal,
            Kernel::DI { .. } => KernelFamily::DI,
            Kernel::TC { .. } => KernelFamily::TC,
            Kernel::DC { .. } => KernelFamily::DC,
            Kernel::CustomInverse { .. } => KernelFamily::CustomInverse,
        }
    }

    /// True when `P` (equivalently `P⁻¹`) is diagonal.
    pub fn is_diagonal(&self) -> bool {
        matches!(
            self.kernel,
            Kernel::Ridge { .. } | Kernel::Diagonal { .. } | Kernel::DI { .. }
        )
    }
}

fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidHyperparameter(msg.into())
}

fn check_c(c: f64) -> Result<()> {
    if c > 0.0 && c.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("scale c must be positive, got {c}")))
    }
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("decay λ must lie in (0, 1], got {lambda}")))
    }
}

fn validate(kernel: &Kernel, n: usize) -> Result<()> {
    if n == 0 {
        return Err(invalid("order n must be at least 1"));
    }
    match kernel {
        Kernel::Ridge { c } => check_c(*c),
        Kernel::Diagonal { lambdas } => {
            if lambdas.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: lambdas.len(),
                });
            }
            match lambdas.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
                Some(l) => Err(invalid(format!("diagonal entries must be positive, got {l}"))),
                None => Ok(()),
            }
        }
        Kernel::DI { c, lambda } | Kernel::TC { c, lambda } => {
            check_c(*c)?;
            check_lambda(*lambda)
        }
        Kernel::DC { c, lambda, rho } => {
            check_c(*c)?;
            check_lambda(*lambda)?;
            if rho.abs() < 1.0 {
                Ok(())
            } else {
                Err(invalid(format!("correlation ρ must satisfy |ρ| < 1, got {rho}")))
            }
        }
        Kernel::CustomInverse { p_inv } => {
            if p_inv.dim() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: p_inv.dim(),
                });
            }
            matrix::cholesky(p_inv).map(|_| ()).map_err(|_| {
                invalid("explicit inverse kernel matrix must be positive definite")
            })
        }
    }
}

/// Assembles `P`.
pub fn build_kernel(spec: &KernelSpec) -> Result<SymMatrix> {
    let n = spec.n;
    let p = match &spec.kernel {
        Kernel::Ridge { c } => SymMatrix::diag(&vec![*c; n]),
        Kernel::Diagonal { lambdas } => SymMatrix::diag(lambdas),
        Kernel::DI { c, lambda } => {
            let d: Vec<f64> = (1..=n).map(|k| c * lambda.powi(k as i32)).collect();
            SymMatrix::diag(&d)
        }
        Kernel::TC { c, lambda } => {
            SymMatrix::from_fn(n, |i, j| c * lambda.powi((i.max(j) + 1) as i32))
        }
        Kernel::DC { c, lambda, rho } => SymMatrix::from_fn(n, |i, j| {
            let (k, l) = ((i + 1) as f64, (j + 1) as f64);
            c * lambda.powf((k + l) / 2.0) * rho.powi(i.abs_diff(j) as i32)
        }),
        Kernel::CustomInverse { p_inv } => matrix::inverse(p_inv)?,
    };
    Ok(p)
}

/// Closed-form tridiagonal inverse of a DC kernel matrix.
///
/// With `s = 1/(c(1−ρ²))`, the diagonal is `s/λ`, `s(1+ρ²)/λᵏ` for the
/// interior rows and `s/λⁿ`; the `(k, k+1)` entry is `−sρ/λ^((2k+1)/2)`.
pub fn dc_inverse(spec: &KernelSpec) -> Result<SymMatrix> {
    let Kernel::DC { c, lambda, rho } = spec.kernel else {
        return Err(invalid("closed-form inverse requires a DC kernel"));
    };
    Ok(dc_inverse_raw(c, lambda, rho, spec.n))
}

fn dc_inverse_raw(c: f64, lambda: f64, rho: f64, n: usize) -> SymMatrix {
    if n == 1 {
        return SymMatrix::diag(&[1.0 / (c * lambda)]);
    }
    let s = 1.0 / (c * (1.0 - rho * rho));
    SymMatrix::from_fn(n, |i, j| {
        let k = (i.min(j) + 1) as i32;
        if i == j {
            if i == 0 {
                s / lambda
            } else if i == n - 1 {
                s / lambda.powi(n as i32)
            } else {
                s * (1.0 + rho * rho) / lambda.powi(k)
            }
        } else if i.abs_diff(j) == 1 {
            -s * rho / lambda.powf((2 * k + 1) as f64 / 2.0)
        } else {
            0.0
        }
    })
}

/// `P⁻¹`, analytically where a closed form exists and by Cholesky otherwise.
pub fn kernel_inverse(spec: &KernelSpec) -> Result<SymMatrix> {
    let n = spec.n;
    match &spec.kernel {
        Kernel::Ridge { c } => Ok(SymMatrix::diag(&vec![1.0 / c; n])),
        Kernel::Diagonal { lambdas } => {
            Ok(SymMatrix::diag(&lambdas.iter().map(|l| 1.0 / l).collect::<Vec<_>>()))
        }
        Kernel::DI { c, lambda } => {
            let d: Vec<f64> = (1..=n).map(|k| 1.0 / (c * lambda.powi(k as i32))).collect();
            Ok(SymMatrix::diag(&d))
        }
        // TC is DC with ρ = √λ; at λ = 1 it is rank one.
        Kernel::TC { c, lambda } if *lambda < 1.0 || n == 1 => {
            Ok(dc_inverse_raw(*c, *lambda, lambda.sqrt(), n))
        }
        Kernel::TC { .. } => matrix::inverse(&build_kernel(spec)?),
        Kernel::DC { c, lambda, rho } => Ok(dc_inverse_raw(*c, *lambda, *rho, n)),
        Kernel::CustomInverse { p_inv } => Ok(p_inv.clone()),
    }
}

/// JSON shape: `{"family": "...", "n": int, "params": {...}}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct RawKernelSpec {
    family: KernelFamily,
    n: usize,
    params: RawParams,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    rho: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambdas: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p_inv: Option<Vec<Vec<f64>>>,
}

fn required<T>(v: Option<T>, name: &str, family: KernelFamily) -> Result<T> {
    v.ok_or_else(|| invalid(format!("{family:?} kernel requires parameter `{name}`")))
}

impl TryFrom<RawKernelSpec> for KernelSpec {
    type Error = Error;

    fn try_from(raw: RawKernelSpec) -> Result<Self> {
        let f = raw.family;
        let p = raw.params;
        let kernel = match f {
            KernelFamily::Ridge => Kernel::Ridge {
                c: required(p.c, "c", f)?,
            },
            KernelFamily::Diagonal => Kernel::Diagonal {
                lambdas: required(p.lambdas, "lambdas", f)?,
            },
            KernelFamily::DI => Kernel::DI {
                c: required(p.c, "c", f)?,
                lambda: required(p.lambda, "lambda", f)?,
            },
            KernelFamily::TC => Kernel::TC {
                c: required(p.c, "c", f)?,
                lambda: required(p.lambda, "lambda", f)?,
            },
            KernelFamily::DC => Kernel::DC {
                c: required(p.c, "c", f)?,
                lambda: required(p.lambda, "lambda", f)?,
                rho: required(p.rho, "rho", f)?,
            },
            KernelFamily::CustomInverse => Kernel::CustomInverse {
                p_inv: SymMatrix::from_rows(&required(p.p_inv, "p_inv", f)?)?,
            },
        };
        KernelSpec::new(kernel, raw.n)
    }
}

impl From<KernelSpec> for RawKernelSpec {
    fn from(spec: KernelSpec) -> Self {
        let family = spec.family();
        let mut params = RawParams::default();
        match spec.kernel {
            Kernel::Ridge { c } => params.c = Some(c),
            Kernel::Diagonal { lambdas } => params.lambdas = Some(lambdas),
            Kernel::DI { c, lambda } | Kernel::TC { c, lambda } => {
                params.c = Some(c);
                params.lambda = Some(lambda);
            }
            Kernel::DC { c, lambda, rho } => {
                params.c = Some(c);
                params.lambda = Some(lambda);
                params.rho = Some(rho);
            }
            Kernel::CustomInverse { p_inv } => params.p_inv = Some(p_inv.to_rows()),
        }
        RawKernelSpec {
            family,
            n: spec.n,
            params,
        }
    }
}

/// `P⁻¹` of the nondiagonal counterexample whose D-optimal design is still
/// the impulse.
pub fn counterexample_inverse() -> SymMatrix {
    SymMatrix::from_rows(&[
        vec![1.0, 0.5, -0.125],
        vec![0.5, 1.0, -0.5],
        vec![-0.125, -0.5, 1.0],
    ])
    .expect("constant matrix is symmetric")
}
