//! Marginal densities with bounded support and their orthonormal polynomial
//! systems.
//!
//! A system is built with the discretized Stieltjes procedure: inner products
//! of candidate polynomials against the density are taken with a quadrature
//! rule adapted to the marginal, which yields the three-term recurrence
//!
//! ```text
//! b_{n+1} φ_{n+1}(x) = (x - a_n) φ_n(x) - b_n φ_{n-1}(x),   φ_0 = 1.
//! ```
//!
//! Leading coefficients follow from `p_{n+1} = p_n / b_{n+1}`, so they are all
//! positive.

use serde::{Deserialize, Serialize};
use statrs::function::beta::{beta_reg, ln_beta};

use crate::error::{Error, Result};
use crate::quadrature::{self, QuadratureRule};

/// Default maximum degree of an orthonormal system.
pub const DEFAULT_MAX_DEGREE: usize = 8;

const DEGENERATE_BETA: f64 = 1e-13;
const TABLE_REJECT: f64 = 1e-6;
const TABLE_RENORMALIZE: f64 = 1e-13;
const MIN_NODES_PER_CELL: usize = 24;

/// The shape of a marginal density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum MarginalKind {
    Uniform,
    /// Beta(a, b) rescaled onto the support. Both shapes must be `>= 1` so the
    /// density stays bounded.
    Beta {
        a: f64,
        b: f64,
    },
    /// Piecewise-linear density through `(x, f)` knots spanning the support.
    Table {
        xs: Vec<f64>,
        fs: Vec<f64>,
    },
}

/// A univariate density on a bounded interval `[lo, hi]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalSpec {
    kind: MarginalKind,
    lo: f64,
    hi: f64,
    // log of the beta normalizer B(a, b)·(hi - lo), unused for other kinds
    log_norm: f64,
}

fn check_support(lo: f64, hi: f64) -> Result<()> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidMarginal(format!(
            "support [{lo}, {hi}] must be bounded with lo < hi"
        )));
    }
    Ok(())
}

impl MarginalSpec {
    pub fn uniform(lo: f64, hi: f64) -> Result<Self> {
        check_support(lo, hi)?;
        Ok(Self {
            kind: MarginalKind::Uniform,
            lo,
            hi,
            log_norm: (hi - lo).ln(),
        })
    }

    pub fn beta(lo: f64, hi: f64, a: f64, b: f64) -> Result<Self> {
        check_support(lo, hi)?;
        if !(a.is_finite() && b.is_finite() && a >= 1.0 && b >= 1.0) {
            return Err(Error::InvalidMarginal(format!(
                "beta shapes ({a}, {b}) must be finite and >= 1"
            )));
        }
        Ok(Self {
            kind: MarginalKind::Beta { a, b },
            lo,
            hi,
            log_norm: ln_beta(a, b) + (hi - lo).ln(),
        })
    }

    /// Piecewise-linear density through the given knots.
    ///
    /// The table is renormalized when its integral is within `1e-6` of one and
    /// rejected otherwise.
    pub fn table(xs: Vec<f64>, fs: Vec<f64>) -> Result<Self> {
        if xs.len() != fs.len() || xs.len() < 2 {
            return Err(Error::InvalidMarginal(
                "table needs at least two knots with matching lengths".into(),
            ));
        }
        if xs.iter().chain(fs.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidMarginal("table values must be finite".into()));
        }
        if xs.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidMarginal(
                "table knots must be strictly increasing".into(),
            ));
        }
        if fs.iter().any(|&f| f < 0.0) {
            return Err(Error::InvalidMarginal("table density must be >= 0".into()));
        }
        let total = trapezoid(&xs, &fs);
        let deviation = (total - 1.0).abs();
        if deviation > TABLE_REJECT {
            return Err(Error::InvalidMarginal(format!(
                "table integrates to {total}, not 1"
            )));
        }
        let fs = if deviation > TABLE_RENORMALIZE {
            fs.iter().map(|f| f / total).collect()
        } else {
            fs
        };
        let (lo, hi) = (xs[0], xs[xs.len() - 1]);
        Ok(Self {
            kind: MarginalKind::Table { xs, fs },
            lo,
            hi,
            log_norm: 0.0,
        })
    }

    pub fn kind(&self) -> &MarginalKind {
        &self.kind
    }

    pub fn support(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }

    /// Density value; zero outside the support.
    pub fn density(&self, x: f64) -> f64 {
        if !(self.lo..=self.hi).contains(&x) {
            return 0.0;
        }
        match &self.kind {
            MarginalKind::Uniform => 1.0 / (self.hi - self.lo),
            MarginalKind::Beta { a, b } => {
                let t = (x - self.lo) / (self.hi - self.lo);
                let log_kernel = xlogy(a - 1.0, t) + xlogy(b - 1.0, 1.0 - t);
                (log_kernel - self.log_norm).exp()
            }
            MarginalKind::Table { xs, fs } => {
                let i = segment(xs, x);
                let t = (x - xs[i]) / (xs[i + 1] - xs[i]);
                fs[i] + t * (fs[i + 1] - fs[i])
            }
        }
    }

    /// Cumulative distribution function, in closed form for every kind.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo {
            return 0.0;
        }
        if x >= self.hi {
            return 1.0;
        }
        let t = (x - self.lo) / (self.hi - self.lo);
        match &self.kind {
            MarginalKind::Uniform => t,
            MarginalKind::Beta { a, b } => beta_reg(*a, *b, t),
            MarginalKind::Table { xs, fs } => {
                let i = segment(xs, x);
                let below = trapezoid(&xs[..=i], &fs[..=i]);
                let h = x - xs[i];
                let slope = (fs[i + 1] - fs[i]) / (xs[i + 1] - xs[i]);
                (below + fs[i] * h + 0.5 * slope * h * h).min(1.0)
            }
        }
    }

    /// Quadrature rule on the support adapted to the density's smoothness.
    ///
    /// Smooth kinds get a single Gauss-Legendre rule with `n` nodes; tables
    /// get a composite rule split at their knots.
    pub fn quadrature_rule(&self, n: usize) -> Result<QuadratureRule> {
        match &self.kind {
            MarginalKind::Table { xs, .. } => {
                let cells = xs.len() - 1;
                let per_cell = n.div_ceil(cells).max(MIN_NODES_PER_CELL);
                QuadratureRule::composite(xs, per_cell)
            }
            _ => QuadratureRule::gauss_legendre(n, self.lo, self.hi),
        }
    }
}

fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

fn trapezoid(xs: &[f64], fs: &[f64]) -> f64 {
    xs.windows(2)
        .zip(fs.windows(2))
        .map(|(x, f)| 0.5 * (x[1] - x[0]) * (f[0] + f[1]))
        .sum()
}

// index i with xs[i] <= x <= xs[i+1]
fn segment(xs: &[f64], x: f64) -> usize {
    let idx = xs.partition_point(|&k| k <= x);
    idx.saturating_sub(1).min(xs.len() - 2)
}

/// An orthonormal polynomial family `φ_0..φ_N` for one marginal.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthonormalSystem {
    support: (f64, f64),
    alpha: Vec<f64>,
    beta: Vec<f64>,
    leading: Vec<f64>,
    sup_norms: Vec<f64>,
}

/// Runs the Stieltjes procedure for `marginal` up to `max_degree`.
pub fn build_system(
    marginal: &MarginalSpec,
    max_degree: usize,
    quad_nodes: usize,
) -> Result<OrthonormalSystem> {
    if max_degree < 1 {
        return Err(Error::DegreeOutOfRange {
            degree: max_degree,
            max: usize::MAX,
        });
    }
    let rule = marginal.quadrature_rule(quad_nodes)?;
    let xs = rule.nodes();
    let ws: Vec<f64> = rule.iter().map(|(x, w)| w * marginal.density(x)).collect();

    let mut alpha = Vec::with_capacity(max_degree);
    let mut beta = Vec::with_capacity(max_degree);
    let mut prev = vec![0.0; xs.len()];
    let mut cur = vec![1.0; xs.len()];
    for n in 0..max_degree {
        let a_n: f64 = (0..xs.len()).map(|k| ws[k] * xs[k] * cur[k] * cur[k]).sum();
        let b_n = if n == 0 { 0.0 } else { beta[n - 1] };
        let mut next: Vec<f64> = (0..xs.len())
            .map(|k| (xs[k] - a_n) * cur[k] - b_n * prev[k])
            .collect();
        let b_next = (0..xs.len())
            .map(|k| ws[k] * next[k] * next[k])
            .sum::<f64>()
            .sqrt();
        if !(b_next > DEGENERATE_BETA) {
            return Err(Error::DegenerateMarginal {
                degree: n + 1,
                beta: b_next,
            });
        }
        next.iter_mut().for_each(|v| *v /= b_next);
        alpha.push(a_n);
        beta.push(b_next);
        prev = std::mem::replace(&mut cur, next);
    }

    let mut leading = Vec::with_capacity(max_degree + 1);
    leading.push(1.0);
    for b in &beta {
        let last = *leading.last().unwrap();
        leading.push(last / b);
    }

    let mut system = OrthonormalSystem {
        support: marginal.support(),
        alpha,
        beta,
        leading,
        sup_norms: Vec::new(),
    };
    let mut sup_norms = vec![1.0];
    for n in 1..=max_degree {
        sup_norms.push(system.compute_sup_norm(n));
    }
    system.sup_norms = sup_norms;
    Ok(system)
}

impl OrthonormalSystem {
    pub fn max_degree(&self) -> usize {
        self.alpha.len()
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    /// Recurrence centres `a_0..a_{N-1}`.
    pub fn recurrence_alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Recurrence scales `b_1..b_N`, all positive.
    pub fn recurrence_beta(&self) -> &[f64] {
        &self.beta
    }

    /// Leading coefficients `p_0..p_N`.
    pub fn leading(&self) -> &[f64] {
        &self.leading
    }

    /// Sup-norm constants `c_0..c_N` over the support, with `c_0 = 1`.
    pub fn sup_norms(&self) -> &[f64] {
        &self.sup_norms
    }

    /// `c_1..c_N`, the constants that enter the coefficient bound.
    pub fn bound_constants(&self) -> &[f64] {
        &self.sup_norms[1..]
    }

    fn check_degree(&self, n: usize) -> Result<()> {
        if n > self.max_degree() {
            return Err(Error::DegreeOutOfRange {
                degree: n,
                max: self.max_degree(),
            });
        }
        Ok(())
    }

    /// `φ_n(x)` via the three-term recurrence.
    pub fn evaluate(&self, n: usize, x: f64) -> Result<f64> {
        self.check_degree(n)?;
        Ok(self.eval_unchecked(n, x))
    }

    fn eval_unchecked(&self, n: usize, x: f64) -> f64 {
        let mut prev = 0.0;
        let mut cur = 1.0;
        for k in 0..n {
            let b_k = if k == 0 { 0.0 } else { self.beta[k - 1] };
            let next = ((x - self.alpha[k]) * cur - b_k * prev) / self.beta[k];
            prev = cur;
            cur = next;
        }
        cur
    }

    /// `φ_0(x)..φ_N(x)` written into `out`, which must hold `N + 1` values.
    pub fn evaluate_all_into(&self, x: f64, out: &mut [f64]) {
        let n = self.max_degree();
        debug_assert!(out.len() > n);
        out[0] = 1.0;
        if n == 0 {
            return;
        }
        out[1] = (x - self.alpha[0]) / self.beta[0];
        for k in 1..n {
            out[k + 1] =
                ((x - self.alpha[k]) * out[k] - self.beta[k - 1] * out[k - 1]) / self.beta[k];
        }
    }

    pub fn evaluate_all(&self, x: f64) -> Vec<f64> {
        let mut out = vec![0.0; self.max_degree() + 1];
        self.evaluate_all_into(x, &mut out);
        out
    }

    /// `c_n = sup |φ_n|` over the support.
    pub fn sup_norm(&self, n: usize) -> Result<f64> {
        if n == 0 {
            return Err(Error::DegreeOutOfRange {
                degree: 0,
                max: self.max_degree(),
            });
        }
        self.check_degree(n)?;
        Ok(self.sup_norms[n])
    }

    /// Sup of `|φ_n|` over an arbitrary interval `[lo, hi]`.
    pub fn sup_norm_over(&self, n: usize, lo: f64, hi: f64) -> Result<f64> {
        if n == 0 {
            return Err(Error::DegreeOutOfRange {
                degree: 0,
                max: self.max_degree(),
            });
        }
        self.check_degree(n)?;
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return Err(Error::InvalidInterval { a: lo, b: hi });
        }
        Ok(self.sup_abs(n, lo, hi))
    }

    fn compute_sup_norm(&self, n: usize) -> f64 {
        let (lo, hi) = self.support;
        self.sup_abs(n, lo, hi)
    }

    // Chebyshev-Lobatto grid scan followed by golden-section refinement.
    fn sup_abs(&self, n: usize, lo: f64, hi: f64) -> f64 {
        let m = (64 * n).max(3);
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        let grid: Vec<f64> = (0..m)
            .map(|j| {
                let theta = std::f64::consts::PI * j as f64 / (m - 1) as f64;
                (mid - half * theta.cos()).clamp(lo, hi)
            })
            .collect();
        let abs_phi = |x: f64| self.eval_unchecked(n, x).abs();
        let (best_idx, best_val) = grid.iter().enumerate().map(|(j, &x)| (j, abs_phi(x))).fold(
            (0, f64::NEG_INFINITY),
            |acc, cur| if cur.1 > acc.1 { cur } else { acc },
        );
        let left = grid[best_idx.saturating_sub(1)];
        let right = grid[(best_idx + 1).min(m - 1)];
        best_val.max(golden_max(abs_phi, left, right))
    }

    /// Monomial coefficients of `φ_n`, lowest degree first.
    pub fn monomial_coefficients(&self, n: usize) -> Result<Vec<f64>> {
        self.check_degree(n)?;
        let mut prev: Vec<f64> = Vec::new();
        let mut cur = vec![1.0];
        for k in 0..n {
            let b_k = if k == 0 { 0.0 } else { self.beta[k - 1] };
            let mut next = vec![0.0; k + 2];
            for (i, c) in cur.iter().enumerate() {
                next[i + 1] += c;
                next[i] -= self.alpha[k] * c;
            }
            for (i, c) in prev.iter().enumerate() {
                next[i] -= b_k * c;
            }
            next.iter_mut().for_each(|v| *v /= self.beta[k]);
            prev = cur;
            cur = next;
        }
        Ok(cur)
    }
}

fn golden_max<F: Fn(f64) -> f64>(f: F, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if (b - a).abs() <= 1e-14 * (1.0 + a.abs().max(b.abs())) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    fc.max(fd).max(f(a)).max(f(b))
}

/// Largest deviation of the Gram matrix `⟨φ_m, φ_n⟩_f` from the identity,
/// measured with an `n`-node rule for the marginal.
pub fn orthonormality_residual(
    system: &OrthonormalSystem,
    marginal: &MarginalSpec,
    quad_nodes: usize,
) -> Result<f64> {
    let rule = marginal.quadrature_rule(quad_nodes)?;
    let size = system.max_degree() + 1;
    let mut gram = vec![0.0; size * size];
    let mut vals = vec![0.0; size];
    for (x, w) in rule.iter() {
        system.evaluate_all_into(x, &mut vals);
        let wf = w * marginal.density(x);
        for m in 0..size {
            for n in 0..size {
                gram[m * size + n] += wf * vals[m] * vals[n];
            }
        }
    }
    let mut worst: f64 = 0.0;
    for m in 0..size {
        for n in 0..size {
            let target = if m == n { 1.0 } else { 0.0 };
            worst = worst.max((gram[m * size + n] - target).abs());
        }
    }
    Ok(worst)
}

/// Integrates `h` against the marginal density with the marginal's rule.
pub fn expectation<F: Fn(f64) -> f64>(
    marginal: &MarginalSpec,
    h: F,
    quad_nodes: usize,
) -> Result<f64> {
    let rule = marginal.quadrature_rule(quad_nodes)?;
    quadrature::integrate(|x| h(x) * marginal.density(x), &rule)
}
