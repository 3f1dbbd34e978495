//! Conditional-expectation identities of Lancaster models.
//!
//! For every degree `n` the orthonormal polynomials are eigen-regressions,
//! `E(φₙ(X) | Y) = ρₙ ψₙ(Y)`, and the monomial regressions are polynomials
//! whose top coefficient is `ρₙ qₙ / pₙ`. At `n = 1` this means `X` and `Y`
//! have linear regression on each other, strictly so when `ρ₁ ≠ 0`, while
//! the maximal correlation is `sup |ρₙ|`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::correlation::{self, CorrelationReport, DiscretizedJoint};
use crate::error::{Error, Result};
use crate::lancaster::{LancasterModel, ModelConfig};
use crate::orthopoly::OrthonormalSystem;
use crate::quadrature;

pub const CONDITIONING_POINTS: usize = 101;
pub const STRICTNESS_THRESHOLD: f64 = 1e-10;
pub const EIGEN_TOL: f64 = 1e-8;
pub const LEADING_REL_TOL: f64 = 1e-7;
pub const FIT_TOL: f64 = 1e-8;
pub const MAX_FIT_CONDITION: f64 = 1e10;

/// Which conditional expectation is being checked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Direction {
    XGivenY,
    YGivenX,
}

/// Outcome of fitting one conditional expectation on the conditioning grid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionCheckResult {
    pub degree: usize,
    pub direction: Direction,
    pub target_leading: f64,
    /// Monomial coefficients of the fitted conditional expectation, lowest
    /// degree first.
    pub fitted_coeffs: Vec<f64>,
    /// Sup over the grid of the identity defect.
    pub max_residual: f64,
}

impl RegressionCheckResult {
    pub fn fitted_leading(&self) -> f64 {
        self.fitted_coeffs.get(self.degree).copied().unwrap_or(0.0)
    }

    /// Relative error of the fitted top coefficient (absolute when the
    /// target vanishes).
    pub fn leading_error(&self) -> f64 {
        let diff = (self.fitted_leading() - self.target_leading).abs();
        if self.target_leading.abs() > 1e-12 {
            diff / self.target_leading.abs()
        } else {
            diff
        }
    }
}

/// `101` equispaced points strictly inside `(lo, hi)`.
pub fn conditioning_grid((lo, hi): (f64, f64)) -> Vec<f64> {
    let m = CONDITIONING_POINTS;
    (1..=m)
        .map(|k| lo + (hi - lo) * k as f64 / (m + 1) as f64)
        .collect()
}

/// `E(h(X) | Y = y)` by quadrature against the conditional density.
pub fn conditional_expectation<F: Fn(f64) -> f64>(
    model: &LancasterModel,
    h: F,
    y: f64,
) -> Result<f64> {
    if !(model.marginal_y().density(y) > 0.0) {
        return Err(Error::UnsupportedConditioningPoint { point: y });
    }
    quadrature::integrate(
        |x| h(x) * model.marginal_x().density(x) * model.kernel(x, y),
        model.rule_x(),
    )
}

/// `E(h(Y) | X = x)`.
pub fn conditional_expectation_y_given_x<F: Fn(f64) -> f64>(
    model: &LancasterModel,
    h: F,
    x: f64,
) -> Result<f64> {
    if !(model.marginal_x().density(x) > 0.0) {
        return Err(Error::UnsupportedConditioningPoint { point: x });
    }
    quadrature::integrate(
        |y| h(y) * model.marginal_y().density(y) * model.kernel(x, y),
        model.rule_y(),
    )
}

fn conditional(
    model: &LancasterModel,
    dir: Direction,
    h: &dyn Fn(f64) -> f64,
    at: f64,
) -> Result<f64> {
    match dir {
        Direction::XGivenY => conditional_expectation(model, h, at),
        Direction::YGivenX => conditional_expectation_y_given_x(model, h, at),
    }
}

// (system of the integrated variable, system of the conditioning variable)
fn systems(model: &LancasterModel, dir: Direction) -> (&OrthonormalSystem, &OrthonormalSystem) {
    match dir {
        Direction::XGivenY => (model.system_x(), model.system_y()),
        Direction::YGivenX => (model.system_y(), model.system_x()),
    }
}

fn conditioning_support(model: &LancasterModel, dir: Direction) -> (f64, f64) {
    match dir {
        Direction::XGivenY => model.marginal_y().support(),
        Direction::YGivenX => model.marginal_x().support(),
    }
}

struct GridFit {
    monomial: Vec<f64>,
    max_residual: f64,
}

/// Least squares of `values` against `χ₀..χ_n` of the conditioning system,
/// reported in monomials.
fn fit_polynomial(
    system: &OrthonormalSystem,
    grid: &[f64],
    values: &[f64],
    n: usize,
) -> Result<GridFit> {
    let basis = DMatrix::from_fn(grid.len(), n + 1, |i, k| {
        system.evaluate(k, grid[i]).unwrap_or(f64::NAN)
    });
    let svd = basis.clone().svd(false, false);
    let (smax, smin) = svd
        .singular_values
        .iter()
        .fold((0.0f64, f64::INFINITY), |(a, b), &s| (a.max(s), b.min(s)));
    let condition = (smax / smin).powi(2);
    if !(condition <= MAX_FIT_CONDITION) {
        return Err(Error::IllConditionedFit { condition });
    }
    // Thin Householder QR for the solve; the SVD above is only used for the
    // conditioning check and loses digits when reused as a solver.
    let rhs = DVector::from_column_slice(values);
    let qr = basis.clone().qr();
    let coeffs = qr
        .r()
        .solve_upper_triangular(&(qr.q().transpose() * &rhs))
        .ok_or(Error::IllConditionedFit { condition })?;
    let fitted = &basis * &coeffs;
    let max_residual = fitted
        .iter()
        .zip(values)
        .fold(0.0f64, |acc, (f, v)| acc.max((f - v).abs()));
    let mut monomial = vec![0.0; n + 1];
    for k in 0..=n {
        for (i, c) in system.monomial_coefficients(k)?.iter().enumerate() {
            monomial[i] += coeffs[k] * c;
        }
    }
    Ok(GridFit {
        monomial,
        max_residual,
    })
}

fn check_degree(model: &LancasterModel, n: usize) -> Result<()> {
    let max = model
        .system_x()
        .max_degree()
        .min(model.system_y().max_degree());
    if n == 0 || n > max {
        return Err(Error::DegreeOutOfRange { degree: n, max });
    }
    Ok(())
}

/// Both directions of one identity.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionPair {
    pub x_given_y: RegressionCheckResult,
    pub y_given_x: RegressionCheckResult,
}

impl RegressionPair {
    pub fn max_residual(&self) -> f64 {
        self.x_given_y.max_residual.max(self.y_given_x.max_residual)
    }

    pub fn max_leading_error(&self) -> f64 {
        self.x_given_y
            .leading_error()
            .max(self.y_given_x.leading_error())
    }
}

fn eigen_one(model: &LancasterModel, n: usize, dir: Direction) -> Result<RegressionCheckResult> {
    let (own, other) = systems(model, dir);
    let rho = model.coeffs().get(n);
    let grid = conditioning_grid(conditioning_support(model, dir));
    let mut values = Vec::with_capacity(grid.len());
    let mut worst: f64 = 0.0;
    for &t in &grid {
        let e = conditional(model, dir, &|s| own.evaluate(n, s).unwrap_or(f64::NAN), t)?;
        worst = worst.max((e - rho * other.evaluate(n, t)?).abs());
        values.push(e);
    }
    let fit = fit_polynomial(other, &grid, &values, n)?;
    Ok(RegressionCheckResult {
        degree: n,
        direction: dir,
        target_leading: rho * other.leading()[n],
        fitted_coeffs: fit.monomial,
        max_residual: worst,
    })
}

/// Sup over the conditioning grid of `|E(φₙ(X) | Y = y) − ρₙ ψₙ(y)|`, and the
/// mirrored defect for `E(ψₙ(Y) | X)`. Degrees past the sequence have `ρₙ = 0`.
pub fn check_eigen_regression(model: &LancasterModel, n: usize) -> Result<RegressionPair> {
    check_degree(model, n)?;
    Ok(RegressionPair {
        x_given_y: eigen_one(model, n, Direction::XGivenY)?,
        y_given_x: eigen_one(model, n, Direction::YGivenX)?,
    })
}

fn polynomial_one(
    model: &LancasterModel,
    n: usize,
    dir: Direction,
) -> Result<RegressionCheckResult> {
    let (own, other) = systems(model, dir);
    let grid = conditioning_grid(conditioning_support(model, dir));
    let values = grid
        .iter()
        .map(|&t| conditional(model, dir, &|s: f64| s.powi(n as i32), t))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_polynomial(other, &grid, &values, n)?;
    let rho = model.coeffs().get(n);
    Ok(RegressionCheckResult {
        degree: n,
        direction: dir,
        target_leading: rho * other.leading()[n] / own.leading()[n],
        fitted_coeffs: fit.monomial,
        max_residual: fit.max_residual,
    })
}

/// Fits `E(Xⁿ | Y)` and `E(Yⁿ | X)` by polynomials of degree `n`; the top
/// coefficients should be `ρₙ qₙ / pₙ` and `ρₙ pₙ / qₙ`.
pub fn check_polynomial_regression(model: &LancasterModel, n: usize) -> Result<RegressionPair> {
    check_degree(model, n)?;
    Ok(RegressionPair {
        x_given_y: polynomial_one(model, n, Direction::XGivenY)?,
        y_given_x: polynomial_one(model, n, Direction::YGivenX)?,
    })
}

/// Affine coefficients of both conditional means.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LinearRegression {
    pub a1: f64,
    pub a0: f64,
    pub b1: f64,
    pub b0: f64,
    /// Sup-norm defect of affinity over both conditioning grids.
    pub residual: f64,
    /// `a₁ b₁ ≠ 0`, decided by `|ρ₁| > 1e-10`.
    pub strict: bool,
}

/// `E(X | Y) = a₁ Y + a₀` and `E(Y | X) = b₁ X + b₀`.
pub fn check_linear_regression(model: &LancasterModel) -> Result<LinearRegression> {
    let pair = check_polynomial_regression(model, 1)?;
    let (a, b) = (&pair.x_given_y, &pair.y_given_x);
    Ok(LinearRegression {
        a1: a.fitted_coeffs[1],
        a0: a.fitted_coeffs[0],
        b1: b.fitted_coeffs[1],
        b0: b.fitted_coeffs[0],
        residual: pair.max_residual(),
        strict: model.coeffs().get(1).abs() > STRICTNESS_THRESHOLD,
    })
}

/// Regression results for one degree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DegreeRegression {
    pub degree: usize,
    pub rho: f64,
    pub eigen: RegressionPair,
    pub polynomial: RegressionPair,
}

/// One named pass/fail line of the report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// Everything needed to decide whether a model is a counterexample to
/// "linear regression implies maximal correlation equals |Pearson|".
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CounterexampleReport {
    pub correlation: CorrelationReport,
    pub bound_value: f64,
    pub linear: LinearRegression,
    pub regressions: Vec<DegreeRegression>,
    pub checks: Vec<Check>,
    /// `ρ₁ = 0`: Pearson is zero and the comparison with `R` is the trivial
    /// regression case.
    pub degenerate_pearson: bool,
    pub counterexample: bool,
    pub model: ModelConfig,
}

impl CounterexampleReport {
    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ReportOptions {
    pub grid: usize,
    pub ace_max_iters: usize,
    pub ace_tol: f64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            grid: correlation::LANCASTER_GRID,
            ace_max_iters: correlation::DEFAULT_ACE_MAX_ITERS,
            ace_tol: correlation::DEFAULT_ACE_TOL,
        }
    }
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Runs every estimator and identity check on `model`.
pub fn counterexample_report(
    model: &LancasterModel,
    opts: ReportOptions,
) -> Result<CounterexampleReport> {
    let joint = DiscretizedJoint::from_model(model, opts.grid)?;
    let analytic = correlation::maxcorr_analytic(model);
    let corr =
        correlation::correlation_report(&joint, Some(analytic), opts.ace_max_iters, opts.ace_tol)?;
    let linear = check_linear_regression(model)?;

    let top = model
        .coeffs()
        .len()
        .min(model.system_x().max_degree())
        .min(model.system_y().max_degree());
    let regressions = (1..=top)
        .map(|n| {
            Ok(DegreeRegression {
                degree: n,
                rho: model.coeffs().get(n),
                eigen: check_eigen_regression(model, n)?,
                polynomial: check_polynomial_regression(model, n)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let rho1 = model.coeffs().get(1);
    let sup_rest = model
        .coeffs()
        .rho()
        .iter()
        .skip(1)
        .fold(0.0f64, |a, r| a.max(r.abs()));
    let mut checks = Vec::new();
    checks.push(check(
        "linear-regression",
        linear.residual <= FIT_TOL
            && (linear.a1 - rho1 * model.system_y().leading()[1] / model.system_x().leading()[1])
                .abs()
                <= 1e-8
            && (linear.b1 - rho1 * model.system_x().leading()[1] / model.system_y().leading()[1])
                .abs()
                <= 1e-8,
        format!(
            "a1={:.10} b1={:.10} residual={:.3e}",
            linear.a1, linear.b1, linear.residual
        ),
    ));
    checks.push(check(
        "pearson-equals-rho1",
        (corr.pearson - rho1).abs() <= 1e-6,
        format!("pearson={:.10} rho1={rho1}", corr.pearson),
    ));
    checks.push(check(
        "svd-matches-analytic",
        (corr.maxcorr_svd - analytic).abs() <= 1e-3,
        format!("svd={:.10} analytic={analytic}", corr.maxcorr_svd),
    ));
    checks.push(check(
        "ace-matches-svd",
        (corr.maxcorr_ace - corr.maxcorr_svd).abs() <= 1e-3,
        format!("ace={:.10} svd={:.10}", corr.maxcorr_ace, corr.maxcorr_svd),
    ));
    let eigen_worst = regressions
        .iter()
        .fold(0.0f64, |a, r| a.max(r.eigen.max_residual()));
    checks.push(check(
        "eigen-regressions",
        eigen_worst <= EIGEN_TOL,
        format!("max residual {eigen_worst:.3e}"),
    ));
    let leading_worst = regressions
        .iter()
        .fold(0.0f64, |a, r| a.max(r.polynomial.max_leading_error()));
    checks.push(check(
        "polynomial-leading-coefficients",
        leading_worst <= LEADING_REL_TOL,
        format!("max relative error {leading_worst:.3e}"),
    ));
    let expect_gap = sup_rest - rho1.abs() > 5e-3;
    let expect_none = rho1.abs() >= sup_rest;
    let gap_ok = if expect_gap {
        corr.gap > 5e-3
    } else if expect_none {
        corr.gap.abs() < 2e-3
    } else {
        true
    };
    checks.push(check(
        "gap-characterization",
        gap_ok,
        format!(
            "gap={:.6} sup_rest={sup_rest} |rho1|={}",
            corr.gap,
            rho1.abs()
        ),
    ));

    let degenerate_pearson = rho1.abs() <= STRICTNESS_THRESHOLD;
    let all_pass = checks.iter().all(|c| c.passed);
    let counterexample = all_pass && linear.strict && corr.gap > 5e-3;
    Ok(CounterexampleReport {
        correlation: corr,
        bound_value: model.coeffs().bound_value(),
        linear,
        regressions,
        checks,
        degenerate_pearson,
        counterexample,
        model: ModelConfig::from_model(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orthopoly::MarginalSpec;
    use approx::assert_abs_diff_eq;

    fn uniform_model(rho: &[f64]) -> LancasterModel {
        let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
        LancasterModel::build(u.clone(), u, 8, rho).unwrap()
    }

    #[test]
    fn grid_is_interior() {
        let g = conditioning_grid((0.0, 1.0));
        assert_eq!(g.len(), 101);
        assert!(g[0] > 0.0 && g[100] < 1.0);
    }

    #[test]
    fn conditional_expectation_examples() {
        let m = uniform_model(&[0.05, 0.15]);
        assert_abs_diff_eq!(
            conditional_expectation(&m, |_| 1.0, 0.42).unwrap(),
            1.0,
            epsilon = 1e-10
        );
        let phi1 = |x: f64| m.system_x().evaluate(1, x).unwrap();
        let psi1 = m.system_y().evaluate(1, 0.3).unwrap();
        assert_abs_diff_eq!(
            conditional_expectation(&m, phi1, 0.3).unwrap(),
            0.05 * psi1,
            epsilon = 1e-9
        );
        let phi3 = |x: f64| m.system_x().evaluate(3, x).unwrap();
        assert_abs_diff_eq!(
            conditional_expectation(&m, phi3, 0.7).unwrap(),
            0.0,
            epsilon = 1e-9
        );
        assert!(conditional_expectation(&m, |_| 1.0, 1.5).is_err());
    }

    #[test]
    fn eigen_regressions_hold() {
        let indep = uniform_model(&[0.0, 0.0]);
        assert!(check_eigen_regression(&indep, 2).unwrap().max_residual() <= 1e-9);
        let m = uniform_model(&[0.05, 0.15]);
        for n in 1..=4 {
            let pair = check_eigen_regression(&m, n).unwrap();
            assert!(pair.max_residual() <= 1e-8, "n={n}");
        }
        assert!(check_eigen_regression(&m, 9).is_err());
    }

    #[test]
    fn linear_regression_of_uniform_model() {
        let m = uniform_model(&[0.05, 0.15]);
        let lin = check_linear_regression(&m).unwrap();
        assert_abs_diff_eq!(lin.a1, 0.05, epsilon = 1e-8);
        assert_abs_diff_eq!(lin.b1, 0.05, epsilon = 1e-8);
        assert_abs_diff_eq!(lin.a0, (1.0 - 0.05) / 2.0, epsilon = 1e-8);
        assert!(lin.residual <= 1e-8);
        assert!(lin.strict);

        let trivial = check_linear_regression(&uniform_model(&[0.0, 0.15])).unwrap();
        assert_abs_diff_eq!(trivial.a1, 0.0, epsilon = 1e-8);
        assert_abs_diff_eq!(trivial.b1, 0.0, epsilon = 1e-8);
        assert!(!trivial.strict);
    }

    #[test]
    fn second_degree_leading_coefficient() {
        let m = uniform_model(&[0.05, 0.15]);
        let pair = check_polynomial_regression(&m, 2).unwrap();
        assert!((pair.x_given_y.fitted_leading() - 0.15).abs() <= 1e-7 * 0.15);
        assert!(pair.x_given_y.max_residual <= 1e-8);
    }

    #[test]
    fn independence_polynomial_regression() {
        let m = uniform_model(&[0.0, 0.0, 0.0]);
        let pair = check_polynomial_regression(&m, 3).unwrap();
        let c = &pair.x_given_y.fitted_coeffs;
        assert!(c[3].abs() <= 1e-9);
        // E X³ = 1/4 on [0, 1]
        assert_abs_diff_eq!(c[0], 0.25, epsilon = 1e-9);
        assert!(c[1].abs() <= 1e-8 && c[2].abs() <= 1e-8);
    }

    #[test]
    fn beta_leading_coefficients() {
        let mx = MarginalSpec::beta(0.0, 1.0, 2.0, 3.0).unwrap();
        let my = MarginalSpec::uniform(-1.0, 2.0).unwrap();
        let sx = crate::orthopoly::build_system(&mx, 5, 128).unwrap();
        let sy = crate::orthopoly::build_system(&my, 5, 128).unwrap();
        let coeffs = crate::lancaster::build_sequence_quadratic(
            sx.bound_constants(),
            sy.bound_constants(),
            5,
        )
        .unwrap();
        let m = LancasterModel::new(mx, my, sx, sy, coeffs).unwrap();
        for n in 1..=5 {
            let pair = check_polynomial_regression(&m, n).unwrap();
            assert!(
                pair.max_leading_error() <= 1e-7,
                "n={n}: {}",
                pair.max_leading_error()
            );
        }
    }
}
