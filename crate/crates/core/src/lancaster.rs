//! Lancaster joint densities
//!
//! ```text
//! f(x, y) = f₁(x) f₂(y) (1 + Σₙ ρₙ φₙ(x) ψₙ(y))
//! ```
//!
//! on the support rectangle of two bounded marginals, zero outside. The
//! coefficient sequence is admissible when `Σ |ρₙ| cₙ dₙ ≤ 1`, where `cₙ`,
//! `dₙ` are the sup norms of the two orthonormal systems; that bound keeps
//! the series above `-1` and the density nonnegative.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::orthopoly::{self, MarginalKind, MarginalSpec, OrthonormalSystem};
use crate::quadrature::{self, QuadratureRule, DEFAULT_NODES};

/// Roundoff allowance when a sequence sits exactly on the bound.
const BOUND_SLACK: f64 = 1e-12;
/// Negative densities of smaller magnitude are treated as roundoff.
const CLAMP: f64 = 1e-12;
const VERIFY_GRID: usize = 256;
const RESIDUAL_GRID: usize = 128;
const SAMPLER_CELLS: usize = 4096;

/// A finite sequence `ρ₁..ρ_N` together with `Σ |ρₙ| cₙ dₙ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSequence {
    rho: Vec<f64>,
    bound_value: f64,
}

impl CoefficientSequence {
    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn bound_value(&self) -> f64 {
        self.bound_value
    }

    pub fn len(&self) -> usize {
        self.rho.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rho.is_empty()
    }

    /// `ρₙ` for `n >= 1`, zero past the end of the sequence.
    pub fn get(&self, n: usize) -> f64 {
        if n == 0 {
            return 1.0;
        }
        self.rho.get(n - 1).copied().unwrap_or(0.0)
    }
}

fn bound_sum(rho: &[f64], c: &[f64], d: &[f64]) -> Result<f64> {
    if rho.len() > c.len() || rho.len() > d.len() {
        return Err(Error::LengthMismatch(format!(
            "{} coefficients but only {} / {} sup-norm constants",
            rho.len(),
            c.len(),
            d.len()
        )));
    }
    if let Some(bad) = rho.iter().find(|r| !r.is_finite()) {
        return Err(Error::InvalidModel(format!(
            "coefficient {bad} is not finite"
        )));
    }
    Ok(rho
        .iter()
        .zip(c.iter().zip(d))
        .map(|(r, (c, d))| r.abs() * c * d)
        .sum())
}

/// Checks `Σ |ρₙ| cₙ dₙ ≤ 1`. Here `c` and `d` hold `c₁..` and `d₁..`.
pub fn validate_coefficients(rho: &[f64], c: &[f64], d: &[f64]) -> Result<CoefficientSequence> {
    if rho.is_empty() {
        return Err(Error::LengthMismatch("empty coefficient sequence".into()));
    }
    let bound_value = bound_sum(rho, c, d)?;
    if bound_value > 1.0 + BOUND_SLACK {
        return Err(Error::BoundViolated { bound_value });
    }
    Ok(CoefficientSequence {
        rho: rho.to_vec(),
        bound_value,
    })
}

/// `ρₙ = 6 / (π² n² cₙ dₙ)` for `n = 1..=N`.
pub fn build_sequence_quadratic(c: &[f64], d: &[f64], n: usize) -> Result<CoefficientSequence> {
    if n == 0 {
        return Err(Error::LengthMismatch("sequence length must be >= 1".into()));
    }
    let pi2 = std::f64::consts::PI.powi(2);
    let rho: Vec<f64> = (1..=n)
        .map(|k| {
            let (ck, dk) = (c.get(k - 1).copied(), d.get(k - 1).copied());
            match (ck, dk) {
                (Some(ck), Some(dk)) => 6.0 / (pi2 * (k * k) as f64 * ck * dk),
                _ => f64::NAN,
            }
        })
        .collect();
    validate_coefficients(&rho, c, d)
}

/// Largest admissible slope for [`build_sequence_linear`]: `(Σ n cₙ dₙ)⁻¹`.
pub fn max_linear_lambda(c: &[f64], d: &[f64], n: usize) -> f64 {
    let total: f64 = (1..=n).map(|k| k as f64 * c[k - 1] * d[k - 1]).sum();
    1.0 / total
}

/// `ρₙ = λ n` for `n = 1..=N`, requiring `0 < λ ≤ (Σ n cₙ dₙ)⁻¹`.
pub fn build_sequence_linear(
    c: &[f64],
    d: &[f64],
    n: usize,
    lambda: f64,
) -> Result<CoefficientSequence> {
    if n == 0 {
        return Err(Error::LengthMismatch("sequence length must be >= 1".into()));
    }
    if n > c.len() || n > d.len() {
        return Err(Error::LengthMismatch(format!(
            "length {n} exceeds available constants"
        )));
    }
    let max_lambda = max_linear_lambda(c, d, n);
    if !(lambda > 0.0 && lambda <= max_lambda * (1.0 + BOUND_SLACK)) {
        return Err(Error::LambdaTooLarge { lambda, max_lambda });
    }
    let rho: Vec<f64> = (1..=n).map(|k| lambda * k as f64).collect();
    validate_coefficients(&rho, c, d)
}

/// Two marginals, their orthonormal systems and an admissible sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct LancasterModel {
    marginal_x: MarginalSpec,
    marginal_y: MarginalSpec,
    system_x: OrthonormalSystem,
    system_y: OrthonormalSystem,
    coeffs: CoefficientSequence,
    rule_x: QuadratureRule,
    rule_y: QuadratureRule,
    // pairs φₙ with ψ_{n-1}; only set by `with_mismatched_pairing`
    shifted_pairing: bool,
}

impl LancasterModel {
    /// Builds both systems to `max_degree` and validates `rho` against them.
    pub fn build(
        marginal_x: MarginalSpec,
        marginal_y: MarginalSpec,
        max_degree: usize,
        rho: &[f64],
    ) -> Result<Self> {
        let system_x = orthopoly::build_system(&marginal_x, max_degree, DEFAULT_NODES)?;
        let system_y = orthopoly::build_system(&marginal_y, max_degree, DEFAULT_NODES)?;
        let coeffs =
            validate_coefficients(rho, system_x.bound_constants(), system_y.bound_constants())?;
        Self::new(marginal_x, marginal_y, system_x, system_y, coeffs)
    }

    /// Assembles a model and runs the construction checks: the sequence is
    /// re-validated against the systems, the density must be nonnegative on a
    /// 256×256 grid and integrate to one within `1e-9`.
    pub fn new(
        marginal_x: MarginalSpec,
        marginal_y: MarginalSpec,
        system_x: OrthonormalSystem,
        system_y: OrthonormalSystem,
        coeffs: CoefficientSequence,
    ) -> Result<Self> {
        let checked = validate_coefficients(
            coeffs.rho(),
            system_x.bound_constants(),
            system_y.bound_constants(),
        )?;
        let rule_x = marginal_x.quadrature_rule(DEFAULT_NODES)?;
        let rule_y = marginal_y.quadrature_rule(DEFAULT_NODES)?;
        let model = Self {
            marginal_x,
            marginal_y,
            system_x,
            system_y,
            coeffs: checked,
            rule_x,
            rule_y,
            shifted_pairing: false,
        };
        let min = model.min_density_on_grid(VERIFY_GRID);
        if min < 0.0 {
            return Err(Error::InvalidModel(format!("density reaches {min} < 0")));
        }
        let mass = model.total_mass()?;
        if (mass - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("density integrates to {mass}")));
        }
        Ok(model)
    }

    /// Negative control: pairs `φₙ` with `ψ_{n-1}` so the marginals are no
    /// longer recovered. For tests only.
    #[doc(hidden)]
    pub fn with_mismatched_pairing(mut self) -> Self {
        self.shifted_pairing = true;
        self
    }

    pub fn marginal_x(&self) -> &MarginalSpec {
        &self.marginal_x
    }

    pub fn marginal_y(&self) -> &MarginalSpec {
        &self.marginal_y
    }

    pub fn system_x(&self) -> &OrthonormalSystem {
        &self.system_x
    }

    pub fn system_y(&self) -> &OrthonormalSystem {
        &self.system_y
    }

    pub fn coeffs(&self) -> &CoefficientSequence {
        &self.coeffs
    }

    pub fn rule_x(&self) -> &QuadratureRule {
        &self.rule_x
    }

    pub fn rule_y(&self) -> &QuadratureRule {
        &self.rule_y
    }

    pub fn support(&self) -> ((f64, f64), (f64, f64)) {
        (self.marginal_x.support(), self.marginal_y.support())
    }

    /// `1 + Σ ρₙ φₙ(x) ψₙ(y)`, both recurrences advanced in lockstep.
    pub fn kernel(&self, x: f64, y: f64) -> f64 {
        let ax = self.system_x.recurrence_alpha();
        let bx = self.system_x.recurrence_beta();
        let ay = self.system_y.recurrence_alpha();
        let by = self.system_y.recurrence_beta();
        let (mut px_prev, mut px) = (0.0, 1.0);
        let (mut py_prev, mut py) = (0.0, 1.0);
        let mut sum = 1.0;
        for (k, rho) in self.coeffs.rho.iter().enumerate() {
            let bxk = if k == 0 { 0.0 } else { bx[k - 1] };
            let byk = if k == 0 { 0.0 } else { by[k - 1] };
            let nx = ((x - ax[k]) * px - bxk * px_prev) / bx[k];
            let ny = ((y - ay[k]) * py - byk * py_prev) / by[k];
            let partner = if self.shifted_pairing { py } else { ny };
            sum += rho * nx * partner;
            px_prev = px;
            px = nx;
            py_prev = py;
            py = ny;
        }
        sum
    }

    fn inside(&self, x: f64, y: f64) -> bool {
        let ((x0, x1), (y0, y1)) = self.support();
        (x0..=x1).contains(&x) && (y0..=y1).contains(&y)
    }

    /// Joint density; zero outside the support rectangle.
    pub fn density(&self, x: f64, y: f64) -> f64 {
        if !self.inside(x, y) {
            return 0.0;
        }
        clamp_roundoff(self.marginal_x.density(x) * self.marginal_y.density(y) * self.kernel(x, y))
    }

    /// `f_{X|Y}(x | y) = f₁(x) (1 + Σ ρₙ φₙ(x) ψₙ(y))`.
    pub fn conditional_density_x_given_y(&self, x: f64, y: f64) -> Result<f64> {
        if !(self.marginal_y.density(y) > 0.0) {
            return Err(Error::UnsupportedConditioningPoint { point: y });
        }
        if !self.inside(x, y) {
            return Ok(0.0);
        }
        Ok(clamp_roundoff(
            self.marginal_x.density(x) * self.kernel(x, y),
        ))
    }

    /// `f_{Y|X}(y | x) = f₂(y) (1 + Σ ρₙ φₙ(x) ψₙ(y))`.
    pub fn conditional_density_y_given_x(&self, y: f64, x: f64) -> Result<f64> {
        if !(self.marginal_x.density(x) > 0.0) {
            return Err(Error::UnsupportedConditioningPoint { point: x });
        }
        if !self.inside(x, y) {
            return Ok(0.0);
        }
        Ok(clamp_roundoff(
            self.marginal_y.density(y) * self.kernel(x, y),
        ))
    }

    /// Double integral of the density over the support rectangle.
    pub fn total_mass(&self) -> Result<f64> {
        quadrature::integrate_2d(|x, y| self.density(x, y), &self.rule_x, &self.rule_y)
    }

    /// Minimum of the unclamped density over an `n × n` equispaced grid
    /// covering the support rectangle, endpoints included.
    pub fn min_density_on_grid(&self, n: usize) -> f64 {
        let xs = equispaced(self.marginal_x.support(), n);
        let ys = equispaced(self.marginal_y.support(), n);
        let fy: Vec<f64> = ys.iter().map(|&y| self.marginal_y.density(y)).collect();
        let mut min = f64::INFINITY;
        for &x in &xs {
            let fx = self.marginal_x.density(x);
            for (&y, &f2) in ys.iter().zip(&fy) {
                let v = fx * f2 * self.kernel(x, y);
                let v = if v < 0.0 && v > -CLAMP { 0.0 } else { v };
                min = min.min(v);
            }
        }
        min
    }

    /// Sup over 128-point grids of `|∫ f(x, y) dy − f₁(x)|` and of the
    /// symmetric quantity for `f₂`.
    pub fn marginal_residual(&self) -> Result<(f64, f64)> {
        let mut worst_x: f64 = 0.0;
        for x in equispaced(self.marginal_x.support(), RESIDUAL_GRID) {
            let m = quadrature::integrate(|y| self.density(x, y), &self.rule_y)?;
            worst_x = worst_x.max((m - self.marginal_x.density(x)).abs());
        }
        let mut worst_y: f64 = 0.0;
        for y in equispaced(self.marginal_y.support(), RESIDUAL_GRID) {
            let m = quadrature::integrate(|x| self.density(x, y), &self.rule_x)?;
            worst_y = worst_y.max((m - self.marginal_y.density(y)).abs());
        }
        Ok((worst_x, worst_y))
    }

    /// `E[φₘ(X) ψₙ(Y)]` by quadrature against the joint density.
    pub fn cross_moment(&self, m: usize, n: usize) -> Result<f64> {
        self.system_x.evaluate(m, self.marginal_x.support().0)?;
        self.system_y.evaluate(n, self.marginal_y.support().0)?;
        quadrature::integrate_2d(
            |x, y| {
                self.system_x.evaluate(m, x).unwrap_or(f64::NAN)
                    * self.system_y.evaluate(n, y).unwrap_or(f64::NAN)
                    * self.density(x, y)
            },
            &self.rule_x,
            &self.rule_y,
        )
    }
}

fn clamp_roundoff(v: f64) -> f64 {
    if v < 0.0 && v > -CLAMP {
        0.0
    } else {
        v
    }
}

/// `n` equispaced points covering `[lo, hi]`, endpoints included.
pub fn equispaced((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![0.5 * (lo + hi)];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Inverse-CDF sampler backed by a cumulative table on equal cells.
#[derive(Debug, Clone)]
pub struct MarginalSampler {
    lo: f64,
    width: f64,
    cumulative: Vec<f64>,
}

impl MarginalSampler {
    pub fn new(marginal: &MarginalSpec) -> Self {
        let (lo, hi) = marginal.support();
        let width = (hi - lo) / SAMPLER_CELLS as f64;
        let cell_rule = QuadratureRule::gauss_legendre(4, 0.0, width).expect("positive width");
        let mut cumulative = Vec::with_capacity(SAMPLER_CELLS + 1);
        cumulative.push(0.0);
        let mut acc = 0.0;
        for i in 0..SAMPLER_CELLS {
            let left = lo + i as f64 * width;
            let mass: f64 = cell_rule
                .iter()
                .map(|(t, w)| w * marginal.density(left + t))
                .sum();
            acc += mass;
            cumulative.push(acc);
        }
        cumulative.iter_mut().for_each(|c| *c /= acc);
        cumulative[SAMPLER_CELLS] = 1.0;
        Self {
            lo,
            width,
            cumulative,
        }
    }

    /// Maps `u ∈ [0, 1)` to a quantile by linear interpolation in the table.
    pub fn quantile(&self, u: f64) -> f64 {
        let j = self
            .cumulative
            .partition_point(|&c| c <= u)
            .clamp(1, SAMPLER_CELLS);
        let (c0, c1) = (self.cumulative[j - 1], self.cumulative[j]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        self.lo + self.width * ((j - 1) as f64 + t.clamp(0.0, 1.0))
    }
}

/// Draws from [`sample_joint`] plus the number of proposals it took.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub points: Vec<(f64, f64)>,
    pub proposals: u64,
}

impl SampleSet {
    pub fn acceptance_rate(&self) -> f64 {
        self.points.len() as f64 / self.proposals.max(1) as f64
    }
}

/// Rejection sampling from the product of the marginals with envelope
/// `M = 1 + bound_value`. Deterministic for a given seed.
pub fn sample_joint(model: &LancasterModel, count: usize, seed: u64) -> SampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sx = MarginalSampler::new(&model.marginal_x);
    let sy = MarginalSampler::new(&model.marginal_y);
    let envelope = 1.0 + model.coeffs.bound_value;
    let mut points = Vec::with_capacity(count);
    let mut proposals = 0u64;
    while points.len() < count {
        let x = sx.quantile(rng.random::<f64>());
        let y = sy.quantile(rng.random::<f64>());
        let u: f64 = rng.random();
        proposals += 1;
        if u * envelope < model.kernel(x, y) {
            points.push((x, y));
        }
    }
    SampleSet { points, proposals }
}

/// JSON description of a marginal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub kind: String,
    pub support: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhoBuilderConfig {
    #[serde(rename = "type")]
    pub kind: String,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
}

/// JSON model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub marginal_x: MarginalConfig,
    pub marginal_y: MarginalConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rho_builder: Option<RhoBuilderConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_degree: Option<usize>,
}

impl MarginalConfig {
    pub fn to_spec(&self) -> Result<MarginalSpec> {
        let [lo, hi] = self.support;
        let param = |name: &str| -> Result<f64> {
            self.params
                .as_ref()
                .and_then(|p| p.get(name))
                .and_then(|v| v.as_f64())
                .ok_or_else(|| Error::Config(format!("{} marginal needs params.{name}", self.kind)))
        };
        let list = |name: &str| -> Result<Vec<f64>> {
            let arr = self
                .params
                .as_ref()
                .and_then(|p| p.get(name))
                .and_then(|v| v.as_array())
                .ok_or_else(|| Error::Config(format!("table marginal needs params.{name}")))?;
            arr.iter()
                .map(|v| {
                    v.as_f64()
                        .ok_or_else(|| Error::Config(format!("non-numeric params.{name}")))
                })
                .collect()
        };
        match self.kind.as_str() {
            "uniform" => MarginalSpec::uniform(lo, hi),
            "beta" => MarginalSpec::beta(lo, hi, param("a")?, param("b")?),
            "table" => {
                let (xs, fs) = (list("x")?, list("f")?);
                if xs.first() != Some(&lo) || xs.last() != Some(&hi) {
                    return Err(Error::Config("table knots must span the support".into()));
                }
                MarginalSpec::table(xs, fs)
            }
            other => Err(Error::Config(format!("unknown marginal kind {other:?}"))),
        }
    }

    pub fn from_spec(spec: &MarginalSpec) -> Self {
        let (lo, hi) = spec.support();
        let (kind, params) = match spec.kind() {
            MarginalKind::Uniform => ("uniform", None),
            MarginalKind::Beta { a, b } => ("beta", Some(serde_json::json!({ "a": a, "b": b }))),
            MarginalKind::Table { xs, fs } => {
                ("table", Some(serde_json::json!({ "x": xs, "f": fs })))
            }
        };
        Self {
            kind: kind.into(),
            support: [lo, hi],
            params,
        }
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("model json: {e}")))
    }

    pub fn build(&self) -> Result<LancasterModel> {
        let mx = self.marginal_x.to_spec()?;
        let my = self.marginal_y.to_spec()?;
        let requested = match (&self.rho, &self.rho_builder) {
            (Some(r), None) => r.len(),
            (None, Some(b)) => b.n,
            _ => {
                return Err(Error::Config(
                    "exactly one of `rho` and `rho_builder` is required".into(),
                ))
            }
        };
        let max_degree = self
            .max_degree
            .unwrap_or(orthopoly::DEFAULT_MAX_DEGREE.max(requested));
        if max_degree < requested || max_degree == 0 {
            return Err(Error::Config(format!(
                "max_degree {max_degree} below sequence length {requested}"
            )));
        }
        let system_x = orthopoly::build_system(&mx, max_degree, DEFAULT_NODES)?;
        let system_y = orthopoly::build_system(&my, max_degree, DEFAULT_NODES)?;
        let (c, d) = (system_x.bound_constants(), system_y.bound_constants());
        let coeffs = match (&self.rho, &self.rho_builder) {
            (Some(r), _) => validate_coefficients(r, c, d)?,
            (_, Some(b)) => match b.kind.as_str() {
                "quadratic" => build_sequence_quadratic(c, d, b.n)?,
                "linear" => {
                    let lambda = b
                        .lambda
                        .ok_or_else(|| Error::Config("linear builder needs lambda".into()))?;
                    build_sequence_linear(c, d, b.n, lambda)?
                }
                other => return Err(Error::Config(format!("unknown rho_builder {other:?}"))),
            },
            _ => unreachable!(),
        };
        LancasterModel::new(mx, my, system_x, system_y, coeffs)
    }

    /// Explicit-coefficient config that rebuilds `model` exactly.
    pub fn from_model(model: &LancasterModel) -> Self {
        Self {
            marginal_x: MarginalConfig::from_spec(model.marginal_x()),
            marginal_y: MarginalConfig::from_spec(model.marginal_y()),
            rho: Some(model.coeffs().rho().to_vec()),
            rho_builder: None,
            max_degree: Some(model.system_x().max_degree()),
        }
    }
}
