//! Pearson correlation and maximal correlation.
//!
//! The maximal correlation of a pair is the second singular value of the
//! normalized kernel `f(x, y) / √(f₁(x) f₂(y))` (the first belongs to the
//! constants). [`maxcorr_svd`] discretizes that kernel on a tensor grid,
//! [`maxcorr_ace`] runs alternating conditional expectations on the same
//! grid, and [`maxcorr_analytic`] reads `sup |ρₙ|` off a Lancaster model.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lancaster::LancasterModel;
use crate::quadrature::QuadratureRule;

/// Default grid for Lancaster fixtures.
pub const LANCASTER_GRID: usize = 200;
/// Default grid for curved geometric domains.
pub const CURVED_GRID: usize = 400;
pub const DEFAULT_ACE_TOL: f64 = 1e-10;
pub const DEFAULT_ACE_MAX_ITERS: usize = 10_000;

const MARGINAL_FLOOR: f64 = 1e-12;
const VARIANCE_FLOOR: f64 = 1e-12;
const SPECTRAL_TOL: f64 = 1e-6;
// conditional expectations with smaller variance are treated as zero
const COLLAPSE: f64 = 1e-20;
const ACE_JITTER_SEED: u64 = 0x00ac_e5ee_d000;

/// A bivariate density sampled on a tensor grid.
///
/// Nodes with vanishing marginal mass are dropped at construction and the
/// total mass is renormalized to one.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizedJoint {
    x_nodes: Vec<f64>,
    x_weights: Vec<f64>,
    y_nodes: Vec<f64>,
    y_weights: Vec<f64>,
    // row-major, x index outer
    joint: Vec<f64>,
    marginal_x: Vec<f64>,
    marginal_y: Vec<f64>,
}

fn eval_rows<F>(density: &F, xs: &[f64], ys: &[f64]) -> Vec<f64>
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let row = |x: f64| ys.iter().map(|&y| density(x, y)).collect::<Vec<_>>();
    #[cfg(feature = "parallel")]
    let rows: Vec<Vec<f64>> = {
        use rayon::prelude::*;
        xs.par_iter().map(|&x| row(x)).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let rows: Vec<Vec<f64>> = xs.iter().map(|&x| row(x)).collect();
    rows.concat()
}

impl DiscretizedJoint {
    /// Gauss-Legendre grid with `nodes_per_axis` nodes on each side of the
    /// rectangle. Regions such as a disc are passed as a density that is
    /// zero outside the region.
    pub fn from_density<F>(
        density: F,
        ((x0, x1), (y0, y1)): ((f64, f64), (f64, f64)),
        nodes_per_axis: usize,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        if nodes_per_axis < 16 {
            return Err(Error::Config(format!(
                "grid of {nodes_per_axis} nodes per axis, need >= 16"
            )));
        }
        let rx = QuadratureRule::gauss_legendre(nodes_per_axis, x0, x1)?;
        let ry = QuadratureRule::gauss_legendre(nodes_per_axis, y0, y1)?;
        Self::from_rules(density, &rx, &ry)
    }

    /// Grid built from arbitrary quadrature rules on the two axes.
    pub fn from_rules<F>(
        density: F,
        rule_x: &QuadratureRule,
        rule_y: &QuadratureRule,
    ) -> Result<Self>
    where
        F: Fn(f64, f64) -> f64 + Sync,
    {
        let joint = eval_rows(&density, rule_x.nodes(), rule_y.nodes());
        Self::assemble(
            rule_x.nodes().to_vec(),
            rule_x.weights().to_vec(),
            rule_y.nodes().to_vec(),
            rule_y.weights().to_vec(),
            joint,
        )
    }

    /// Discrete joint law: `pmf[i][j] = P(X = xs[i], Y = ys[j])`, unit weights.
    pub fn from_pmf(xs: &[f64], ys: &[f64], pmf: &[Vec<f64>]) -> Result<Self> {
        if pmf.len() != xs.len() || pmf.iter().any(|r| r.len() != ys.len()) {
            return Err(Error::LengthMismatch(
                "pmf shape does not match support".into(),
            ));
        }
        Self::assemble(
            xs.to_vec(),
            vec![1.0; xs.len()],
            ys.to_vec(),
            vec![1.0; ys.len()],
            pmf.concat(),
        )
    }

    /// The model density on the model's own marginal-adapted rules.
    pub fn from_model(model: &LancasterModel, nodes_per_axis: usize) -> Result<Self> {
        if nodes_per_axis < 16 {
            return Err(Error::Config(format!(
                "grid of {nodes_per_axis} nodes per axis, need >= 16"
            )));
        }
        let rx = model.marginal_x().quadrature_rule(nodes_per_axis)?;
        let ry = model.marginal_y().quadrature_rule(nodes_per_axis)?;
        Self::from_rules(|x, y| model.density(x, y), &rx, &ry)
    }

    fn assemble(
        x_nodes: Vec<f64>,
        x_weights: Vec<f64>,
        y_nodes: Vec<f64>,
        y_weights: Vec<f64>,
        mut joint: Vec<f64>,
    ) -> Result<Self> {
        let (nx, ny) = (x_nodes.len(), y_nodes.len());
        for v in joint.iter_mut() {
            if !v.is_finite() {
                return Err(Error::NonFiniteEvaluation { node: *v });
            }
            if *v < 0.0 {
                if *v < -1e-12 {
                    return Err(Error::InvalidModel(format!("negative density {v}")));
                }
                *v = 0.0;
            }
        }
        let marginal_x: Vec<f64> = (0..nx)
            .map(|i| (0..ny).map(|j| y_weights[j] * joint[i * ny + j]).sum())
            .collect();
        let marginal_y: Vec<f64> = (0..ny)
            .map(|j| (0..nx).map(|i| x_weights[i] * joint[i * ny + j]).sum())
            .collect();
        let mass: f64 = (0..nx).map(|i| x_weights[i] * marginal_x[i]).sum();
        if !(mass >= 1e-9) {
            return Err(Error::ZeroMass { mass });
        }
        let keep_x: Vec<usize> = (0..nx)
            .filter(|&i| marginal_x[i] / mass >= MARGINAL_FLOOR)
            .collect();
        let keep_y: Vec<usize> = (0..ny)
            .filter(|&j| marginal_y[j] / mass >= MARGINAL_FLOOR)
            .collect();
        let mut kept = Vec::with_capacity(keep_x.len() * keep_y.len());
        for &i in &keep_x {
            for &j in &keep_y {
                kept.push(joint[i * ny + j] / mass);
            }
        }
        let pick = |v: &[f64], idx: &[usize], scale: f64| {
            idx.iter().map(|&k| v[k] * scale).collect::<Vec<_>>()
        };
        Ok(Self {
            x_nodes: pick(&x_nodes, &keep_x, 1.0),
            x_weights: pick(&x_weights, &keep_x, 1.0),
            y_nodes: pick(&y_nodes, &keep_y, 1.0),
            y_weights: pick(&y_weights, &keep_y, 1.0),
            joint: kept,
            marginal_x: pick(&marginal_x, &keep_x, 1.0 / mass),
            marginal_y: pick(&marginal_y, &keep_y, 1.0 / mass),
        })
    }

    pub fn x_nodes(&self) -> &[f64] {
        &self.x_nodes
    }

    pub fn y_nodes(&self) -> &[f64] {
        &self.y_nodes
    }

    pub fn x_weights(&self) -> &[f64] {
        &self.x_weights
    }

    pub fn y_weights(&self) -> &[f64] {
        &self.y_weights
    }

    pub fn marginal_x_values(&self) -> &[f64] {
        &self.marginal_x
    }

    pub fn marginal_y_values(&self) -> &[f64] {
        &self.marginal_y
    }

    pub fn joint_value(&self, i: usize, j: usize) -> f64 {
        self.joint[i * self.y_nodes.len() + j]
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.x_nodes.len(), self.y_nodes.len())
    }

    /// Probability weights `uᵢ f₁(xᵢ)` of the x-marginal.
    pub fn x_masses(&self) -> Vec<f64> {
        self.x_weights
            .iter()
            .zip(&self.marginal_x)
            .map(|(w, f)| w * f)
            .collect()
    }

    pub fn y_masses(&self) -> Vec<f64> {
        self.y_weights
            .iter()
            .zip(&self.marginal_y)
            .map(|(w, f)| w * f)
            .collect()
    }

    pub fn total_mass(&self) -> f64 {
        self.x_masses().iter().sum()
    }

    /// `E[g(Y) | X = xᵢ]` for every retained x node.
    pub fn conditional_mean_given_x(&self, g: &[f64]) -> Vec<f64> {
        let ny = self.y_nodes.len();
        (0..self.x_nodes.len())
            .map(|i| {
                let row = &self.joint[i * ny..(i + 1) * ny];
                let s: f64 = row
                    .iter()
                    .zip(&self.y_weights)
                    .zip(g)
                    .map(|((f, v), g)| f * v * g)
                    .sum();
                s / self.marginal_x[i]
            })
            .collect()
    }

    /// `E[g(X) | Y = yⱼ]` for every retained y node.
    pub fn conditional_mean_given_y(&self, g: &[f64]) -> Vec<f64> {
        let ny = self.y_nodes.len();
        let mut acc = vec![0.0; ny];
        for (i, (u, gi)) in self.x_weights.iter().zip(g).enumerate() {
            let row = &self.joint[i * ny..(i + 1) * ny];
            for (a, f) in acc.iter_mut().zip(row) {
                *a += u * gi * f;
            }
        }
        acc.iter_mut()
            .zip(&self.marginal_y)
            .for_each(|(a, f)| *a /= f);
        acc
    }

    /// `E[g₁(X) g₂(Y)]`.
    pub fn cross_expectation(&self, g1: &[f64], g2: &[f64]) -> f64 {
        let ny = self.y_nodes.len();
        let mut total = 0.0;
        for (i, (u, a)) in self.x_weights.iter().zip(g1).enumerate() {
            let row = &self.joint[i * ny..(i + 1) * ny];
            let s: f64 = row
                .iter()
                .zip(&self.y_weights)
                .zip(g2)
                .map(|((f, v), b)| f * v * b)
                .sum();
            total += u * a * s;
        }
        total
    }

    /// Normalized kernel `A_ij = f_ij √(uᵢ vⱼ) / √(f₁ᵢ f₂ⱼ)`.
    pub fn kernel_matrix(&self) -> DMatrix<f64> {
        let (nx, ny) = self.shape();
        let sx: Vec<f64> = (0..nx)
            .map(|i| (self.x_weights[i] / self.marginal_x[i]).sqrt())
            .collect();
        let sy: Vec<f64> = (0..ny)
            .map(|j| (self.y_weights[j] / self.marginal_y[j]).sqrt())
            .collect();
        DMatrix::from_fn(nx, ny, |i, j| self.joint[i * ny + j] * sx[i] * sy[j])
    }
}

fn mean_var(values: &[f64], masses: &[f64]) -> (f64, f64) {
    let mean: f64 = values.iter().zip(masses).map(|(v, p)| v * p).sum();
    let var: f64 = values
        .iter()
        .zip(masses)
        .map(|(v, p)| p * (v - mean) * (v - mean))
        .sum();
    (mean, var)
}

/// Centres and scales `values` to zero mean, unit variance under `masses`.
/// `None` when the variance is at or below `floor`.
fn standardize(values: &[f64], masses: &[f64], floor: f64) -> Option<Vec<f64>> {
    let (mean, var) = mean_var(values, masses);
    if !(var > floor) {
        return None;
    }
    let sd = var.sqrt();
    Some(values.iter().map(|v| (v - mean) / sd).collect())
}

/// Pearson correlation of the grid law.
pub fn pearson(joint: &DiscretizedJoint) -> Result<f64> {
    let (px, py) = (joint.x_masses(), joint.y_masses());
    let (mx, vx) = mean_var(&joint.x_nodes, &px);
    let (my, vy) = mean_var(&joint.y_nodes, &py);
    if vx <= VARIANCE_FLOOR || vy <= VARIANCE_FLOOR {
        return Err(Error::DegenerateVariance(format!(
            "Var X = {vx:e}, Var Y = {vy:e}"
        )));
    }
    let cx: Vec<f64> = joint.x_nodes.iter().map(|x| x - mx).collect();
    let cy: Vec<f64> = joint.y_nodes.iter().map(|y| y - my).collect();
    let cov = joint.cross_expectation(&cx, &cy);
    Ok(cov / (vx * vy).sqrt())
}

/// `sup |ρₙ|` over the model's finite sequence.
pub fn maxcorr_analytic(model: &LancasterModel) -> f64 {
    model
        .coeffs()
        .rho()
        .iter()
        .fold(0.0, |acc: f64, r| acc.max(r.abs()))
}

/// Second singular value of the normalized kernel and its singular pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectralEstimate {
    pub r: f64,
    /// All singular values, descending; `spectrum[0]` is the constant mode.
    pub spectrum: Vec<f64>,
    pub g1_values: Vec<f64>,
    pub g2_values: Vec<f64>,
}

/// Maximal correlation from the singular values of the normalized kernel.
///
/// Fails with [`Error::SpectralFailure`] when the leading singular value is
/// not `1 ± 1e-6`, which indicates a broken discretization.
pub fn maxcorr_svd(joint: &DiscretizedJoint) -> Result<SpectralEstimate> {
    let (nx, ny) = joint.shape();
    if nx < 2 || ny < 2 {
        return Err(Error::DegenerateVariance(
            "a grid axis retains fewer than two nodes".into(),
        ));
    }
    let a = joint.kernel_matrix();
    let svd = a.svd(true, true);
    let u = svd.u.as_ref().expect("left vectors requested");
    let vt = svd.v_t.as_ref().expect("right vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    let spectrum: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    if (spectrum[0] - 1.0).abs() > SPECTRAL_TOL {
        return Err(Error::SpectralFailure {
            sigma1: spectrum[0],
        });
    }
    let k = order[1];
    let (px, py) = (joint.x_masses(), joint.y_masses());
    let raw1: Vec<f64> = (0..nx).map(|i| u[(i, k)] / px[i].sqrt()).collect();
    let raw2: Vec<f64> = (0..ny).map(|j| vt[(k, j)] / py[j].sqrt()).collect();
    let mut g1 = standardize(&raw1, &px, 0.0).unwrap_or(raw1);
    let mut g2 = standardize(&raw2, &py, 0.0).unwrap_or(raw2);
    orient(joint, &px, &mut g1, &mut g2);
    Ok(SpectralEstimate {
        r: spectrum[1],
        spectrum,
        g1_values: g1,
        g2_values: g2,
    })
}

// Flip the pair so that g1 has nonnegative covariance with the identity.
fn orient(joint: &DiscretizedJoint, px: &[f64], g1: &mut [f64], g2: &mut [f64]) {
    let dot: f64 = g1
        .iter()
        .zip(&joint.x_nodes)
        .zip(px)
        .map(|((g, x), p)| g * x * p)
        .sum();
    if dot < 0.0 {
        g1.iter_mut().for_each(|v| *v = -*v);
        g2.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Result of alternating conditional expectations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AceEstimate {
    pub r: f64,
    pub g1_values: Vec<f64>,
    pub g2_values: Vec<f64>,
    pub iterations: usize,
}

/// Alternating conditional expectations: power iteration on
/// `g₂ ↦ E[E[g₂(Y) | X] | Y]` with standardization after every half-step.
///
/// The start is the standardized identity on the y nodes plus a fixed
/// pseudo-random perturbation, so it is never orthogonal to the optimizing
/// pair. Iteration stops once the change in correlation, together with a
/// geometric extrapolation of the remaining change, drops below `tol`.
pub fn maxcorr_ace(joint: &DiscretizedJoint, max_iters: usize, tol: f64) -> Result<AceEstimate> {
    if !(tol > 0.0) {
        return Err(Error::Config(format!("ACE tolerance {tol} must be > 0")));
    }
    let (px, py) = (joint.x_masses(), joint.y_masses());
    let identity =
        standardize(&joint.y_nodes, &py, VARIANCE_FLOOR).ok_or(Error::DegenerateStart)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ACE_JITTER_SEED);
    let noise: Vec<f64> = (0..py.len()).map(|_| rng.random::<f64>()).collect();
    let noise = standardize(&noise, &py, 0.0).unwrap_or_else(|| vec![0.0; py.len()]);
    let start: Vec<f64> = identity.iter().zip(&noise).map(|(a, b)| a + b).collect();
    let mut g2 = standardize(&start, &py, VARIANCE_FLOOR).ok_or(Error::DegenerateStart)?;
    let mut g1 = vec![0.0; px.len()];

    let mut r_prev = f64::NAN;
    let mut step_prev = f64::NAN;
    for it in 1..=max_iters {
        let h1 = joint.conditional_mean_given_x(&g2);
        match standardize(&h1, &px, COLLAPSE) {
            Some(v) => g1 = v,
            None => return Ok(collapsed(it, px.len(), py.len())),
        }
        let h2 = joint.conditional_mean_given_y(&g1);
        match standardize(&h2, &py, COLLAPSE) {
            Some(v) => g2 = v,
            None => return Ok(collapsed(it, px.len(), py.len())),
        }
        let r = joint.cross_expectation(&g1, &g2);
        let step = (r - r_prev).abs();
        if step.is_finite() {
            let ratio = if step_prev > 0.0 {
                (step / step_prev).min(0.999)
            } else {
                0.0
            };
            let tail = step * ratio / (1.0 - ratio);
            if step.max(tail) < tol {
                orient(joint, &px, &mut g1, &mut g2);
                return Ok(AceEstimate {
                    r,
                    g1_values: g1,
                    g2_values: g2,
                    iterations: it,
                });
            }
        }
        step_prev = step;
        r_prev = r;
    }
    Err(Error::NoConvergence {
        iterations: max_iters,
        last: r_prev,
        gap: step_prev,
    })
}

fn collapsed(iterations: usize, nx: usize, ny: usize) -> AceEstimate {
    AceEstimate {
        r: 0.0,
        g1_values: vec![0.0; nx],
        g2_values: vec![0.0; ny],
        iterations,
    }
}

/// Maximal correlation of a discrete law: second singular value of
/// `Qᵢⱼ = pᵢⱼ / √(pᵢ₊ p₊ⱼ)`.
pub fn maxcorr_discrete_pmf(pmf: &[Vec<f64>]) -> Result<f64> {
    let ncols = pmf.first().map_or(0, |r| r.len());
    if pmf.is_empty() || pmf.iter().any(|r| r.len() != ncols) {
        return Err(Error::DegeneratePmf(
            "pmf must be a non-empty rectangle".into(),
        ));
    }
    if pmf.iter().flatten().any(|&p| !(p >= 0.0) || !p.is_finite()) {
        return Err(Error::DegeneratePmf(
            "entries must be finite and >= 0".into(),
        ));
    }
    let total: f64 = pmf.iter().flatten().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::DegeneratePmf(format!("entries sum to {total}")));
    }
    let rows: Vec<f64> = pmf.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..ncols).map(|j| pmf.iter().map(|r| r[j]).sum()).collect();
    let keep_r: Vec<usize> = (0..rows.len()).filter(|&i| rows[i] > 0.0).collect();
    let keep_c: Vec<usize> = (0..ncols).filter(|&j| cols[j] > 0.0).collect();
    if keep_r.len() < 2 || keep_c.len() < 2 {
        return Err(Error::DegeneratePmf(
            "each margin needs at least two support points".into(),
        ));
    }
    let q = DMatrix::from_fn(keep_r.len(), keep_c.len(), |a, b| {
        let (i, j) = (keep_r[a], keep_c[b]);
        pmf[i][j] / (rows[i] * cols[j]).sqrt()
    });
    let mut sv: Vec<f64> = q.singular_values().iter().copied().collect();
    sv.sort_by(|a, b| b.total_cmp(a));
    Ok(sv[1])
}

/// Pearson and maximal-correlation estimates for one joint law.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorrelationReport {
    pub pearson: f64,
    pub maxcorr_analytic: Option<f64>,
    pub maxcorr_svd: f64,
    pub maxcorr_ace: f64,
    /// `maxcorr_svd − |pearson|`.
    pub gap: f64,
    pub spectrum: Vec<f64>,
    pub g1_values: Vec<f64>,
    pub g2_values: Vec<f64>,
    pub ace_iterations: usize,
}

/// Runs Pearson, the spectral oracle and ACE on `joint`.
pub fn correlation_report(
    joint: &DiscretizedJoint,
    analytic: Option<f64>,
    max_iters: usize,
    tol: f64,
) -> Result<CorrelationReport> {
    let pearson = pearson(joint)?;
    let svd = maxcorr_svd(joint)?;
    let ace = maxcorr_ace(joint, max_iters, tol)?;
    Ok(CorrelationReport {
        pearson,
        maxcorr_analytic: analytic,
        maxcorr_svd: svd.r,
        maxcorr_ace: ace.r,
        gap: svd.r - pearson.abs(),
        spectrum: svd.spectrum,
        g1_values: svd.g1_values,
        g2_values: svd.g2_values,
        ace_iterations: ace.iterations,
    })
}
