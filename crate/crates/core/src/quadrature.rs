//! Gauss-Legendre quadrature on bounded intervals and rectangles.
//!
//! Every moment, inner product and conditional expectation in the crate goes
//! through a [`QuadratureRule`]. Rules are immutable once built.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Default node count per axis for model-level integrals.
pub const DEFAULT_NODES: usize = 128;

/// Elevated node count for densities with square-root edge behaviour.
pub const CURVED_DOMAIN_NODES: usize = 512;

const NEWTON_TOL: f64 = 1e-15;
const NEWTON_MAX_ITERS: usize = 100;

/// Nodes and positive weights on `[a, b]`, nodes in ascending order.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    interval: (f64, f64),
}

fn check_interval(a: f64, b: f64) -> Result<()> {
    if !a.is_finite() || !b.is_finite() || a >= b {
        return Err(Error::InvalidInterval { a, b });
    }
    Ok(())
}

/// Legendre polynomial P_n(x) and its derivative, by the three-term recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = next;
    }
    let nf = n as f64;
    let dp = nf * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

/// Nodes and weights of the n-point rule on [-1, 1], ascending.
fn reference_rule(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for k in 0..half {
        // Chebyshev-like initial guess, descending from the right end.
        let mut x = (PI * (k as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..NEWTON_MAX_ITERS {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() <= NEWTON_TOL {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        if d.is_finite() {
            dp = d;
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[n - 1 - k] = x;
        nodes[k] = -x;
        weights[n - 1 - k] = w;
        weights[k] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

impl QuadratureRule {
    /// The n-point Gauss-Legendre rule mapped affinely onto `[a, b]`.
    ///
    /// Exact for polynomials of degree up to `2n - 1`.
    pub fn gauss_legendre(n: usize, a: f64, b: f64) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidOrder(n));
        }
        check_interval(a, b)?;
        let (ref_nodes, ref_weights) = reference_rule(n);
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let nodes = ref_nodes
            .iter()
            .map(|t| (mid + half * t).clamp(a, b))
            .collect();
        let weights = ref_weights.iter().map(|w| w * half).collect();
        Ok(Self {
            nodes,
            weights,
            interval: (a, b),
        })
    }

    /// Composite rule: an n-point Gauss-Legendre rule on every cell between
    /// consecutive breakpoints. Breakpoints must be strictly increasing.
    pub fn composite(breakpoints: &[f64], n: usize) -> Result<Self> {
        if breakpoints.len() < 2 {
            return Err(Error::InvalidInterval {
                a: breakpoints.first().copied().unwrap_or(f64::NAN),
                b: f64::NAN,
            });
        }
        let mut nodes = Vec::with_capacity(n * (breakpoints.len() - 1));
        let mut weights = Vec::with_capacity(nodes.capacity());
        for cell in breakpoints.windows(2) {
            let rule = Self::gauss_legendre(n, cell[0], cell[1])?;
            nodes.extend_from_slice(&rule.nodes);
            weights.extend_from_slice(&rule.weights);
        }
        Ok(Self {
            nodes,
            weights,
            interval: (breakpoints[0], breakpoints[breakpoints.len() - 1]),
        })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn interval(&self) -> (f64, f64) {
        self.interval
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `(node, weight)` pairs.
    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.nodes.iter().copied().zip(self.weights.iter().copied())
    }
}

/// Σᵢ wᵢ f(xᵢ). Fails if `f` is NaN or infinite at any node.
pub fn integrate<F: Fn(f64) -> f64>(f: F, rule: &QuadratureRule) -> Result<f64> {
    let mut sum = 0.0;
    for (x, w) in rule.iter() {
        let v = f(x);
        if !v.is_finite() {
            return Err(Error::NonFiniteEvaluation { node: x });
        }
        sum += w * v;
    }
    Ok(sum)
}

/// Tensor-product sum Σᵢⱼ uᵢ vⱼ f(xᵢ, yⱼ).
pub fn integrate_2d<F: Fn(f64, f64) -> f64>(
    f: F,
    rule_x: &QuadratureRule,
    rule_y: &QuadratureRule,
) -> Result<f64> {
    let mut total = 0.0;
    for (x, u) in rule_x.iter() {
        let mut row = 0.0;
        for (y, v) in rule_y.iter() {
            let val = f(x, y);
            if !val.is_finite() {
                return Err(Error::NonFiniteEvaluation { node: x });
            }
            row += v * val;
        }
        total += u * row;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn one_point_constant() {
        let rule = QuadratureRule::gauss_legendre(1, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(integrate(|_| 1.0, &rule).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rule.nodes()[0], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn two_point_square() {
        let rule = QuadratureRule::gauss_legendre(2, -1.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            integrate(|x| x * x, &rule).unwrap(),
            2.0 / 3.0,
            epsilon = 1e-15
        );
    }

    #[test]
    fn degree_exactness_sixteen_points() {
        let rule = QuadratureRule::gauss_legendre(16, 0.0, 1.0).unwrap();
        let got = integrate(|x| x.powi(15), &rule).unwrap();
        assert!((got - 1.0 / 16.0).abs() <= 1e-12 / 16.0);
    }

    #[test]
    fn zero_integrand() {
        let rule = QuadratureRule::gauss_legendre(7, -3.0, 2.0).unwrap();
        assert_eq!(integrate(|_| 0.0, &rule).unwrap(), 0.0);
    }

    #[test]
    fn uniform_density_and_orthogonality() {
        let rule = QuadratureRule::gauss_legendre(64, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(integrate(|_| 1.0, &rule).unwrap(), 1.0, epsilon = 1e-12);
        let phi1 = |x: f64| 3f64.sqrt() * (2.0 * x - 1.0);
        assert_abs_diff_eq!(integrate(phi1, &rule).unwrap(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rectangle_integrals() {
        let rx = QuadratureRule::gauss_legendre(8, 0.0, 1.0).unwrap();
        let ry = QuadratureRule::gauss_legendre(8, 0.0, 1.0).unwrap();
        assert_abs_diff_eq!(
            integrate_2d(|_, _| 1.0, &rx, &ry).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            integrate_2d(|x, y| x * y, &rx, &ry).unwrap(),
            0.25,
            epsilon = 1e-12
        );
    }

    #[test]
    fn rule_invariants_large_n() {
        for &n in &[3usize, 64, 128, 400, 512] {
            let rule = QuadratureRule::gauss_legendre(n, -2.0, 5.0).unwrap();
            let sum: f64 = rule.weights().iter().sum();
            assert!((sum - 7.0).abs() <= 1e-12, "n={n} sum={sum}");
            assert!(rule.weights().iter().all(|&w| w > 0.0));
            assert!(rule.nodes().iter().all(|&x| (-2.0..=5.0).contains(&x)));
            assert!(rule.nodes().windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn composite_covers_cells() {
        let rule = QuadratureRule::composite(&[0.0, 0.3, 1.0], 4).unwrap();
        assert_eq!(rule.len(), 8);
        let sum: f64 = rule.weights().iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-14);
        // |x - 0.3| is piecewise linear, exact on each cell.
        let got = integrate(|x| (x - 0.3f64).abs(), &rule).unwrap();
        assert_abs_diff_eq!(got, 0.5 * 0.09 + 0.5 * 0.49, epsilon = 1e-14);
    }

    #[test]
    fn error_paths() {
        assert_eq!(
            QuadratureRule::gauss_legendre(0, 0.0, 1.0),
            Err(Error::InvalidOrder(0))
        );
        assert!(matches!(
            QuadratureRule::gauss_legendre(4, 1.0, 1.0),
            Err(Error::InvalidInterval { .. })
        ));
        assert!(matches!(
            QuadratureRule::gauss_legendre(4, 0.0, f64::INFINITY),
            Err(Error::InvalidInterval { .. })
        ));
        let rule = QuadratureRule::gauss_legendre(4, 0.0, 1.0).unwrap();
        assert!(matches!(
            integrate(|x| 1.0 / (x - rule.nodes()[2]), &rule),
            Err(Error::NonFiniteEvaluation { .. })
        ));
        assert!(matches!(
            integrate_2d(|_, _| f64::NAN, &rule, &rule),
            Err(Error::NonFiniteEvaluation { .. })
        ));
    }

    #[test]
    fn deterministic() {
        let a = QuadratureRule::gauss_legendre(97, -1.0, 3.0).unwrap();
        let b = QuadratureRule::gauss_legendre(97, -1.0, 3.0).unwrap();
        assert_eq!(a, b);
        let f = |x: f64| (x * 1.7).sin() + x.powi(3);
        assert_eq!(
            integrate(f, &a).unwrap().to_bits(),
            integrate(f, &b).unwrap().to_bits()
        );
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn poly_integral(coeffs: &[f64], a: f64, b: f64) -> f64 {
            coeffs
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let p = (k + 1) as i32;
                    c * (b.powi(p) - a.powi(p)) / p as f64
                })
                .sum()
        }

        proptest! {
            #[test]
            fn exact_for_low_degree(
                n in 1usize..40,
                raw in proptest::collection::vec(-1.0f64..1.0, 80),
                a in -2.0f64..0.0,
                len in 0.1f64..3.0,
            ) {
                let b = a + len;
                let degree = 2 * n - 1;
                let coeffs = &raw[..=degree.min(raw.len() - 1)];
                let rule = QuadratureRule::gauss_legendre(n, a, b).unwrap();
                let p = |x: f64| coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c);
                let got = integrate(p, &rule).unwrap();
                let want = poly_integral(coeffs, a, b);
                prop_assert!((got - want).abs() <= 1e-10 * (1.0 + want.abs()),
                    "n={} got={} want={}", n, got, want);
            }

            #[test]
            fn affine_covariance(a in -3.0f64..3.0, len in 0.1f64..4.0, freq in 0.1f64..3.0) {
                let b = a + len;
                let f = |x: f64| (freq * x).cos() + x * x;
                let on_ab = integrate(f, &QuadratureRule::gauss_legendre(32, a, b).unwrap()).unwrap();
                let unit = QuadratureRule::gauss_legendre(32, 0.0, 1.0).unwrap();
                let on_unit = integrate(|t| f(a + (b - a) * t) * (b - a), &unit).unwrap();
                prop_assert!((on_ab - on_unit).abs() <= 1e-12 * (1.0 + on_ab.abs()));
            }
        }
    }
}
