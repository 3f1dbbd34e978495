//! End-to-end acceptance run. Prints one line per criterion and exits
//! nonzero if any fails. Run alone with `cargo test --test acceptance`.

use std::process::Command;
use std::time::{Duration, Instant};

use lancaster_core::correlation::{self, DiscretizedJoint};
use lancaster_core::fixtures::{self, Fixture};
use lancaster_core::ks;
use lancaster_core::lancaster::{self, LancasterModel};
use lancaster_core::orthopoly::{self, MarginalSpec};
use lancaster_core::regression::{self, ReportOptions};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn uniform_model(rho: &[f64]) -> LancasterModel {
    let u = MarginalSpec::uniform(0.0, 1.0).unwrap();
    LancasterModel::build(u.clone(), u, 8, rho).unwrap()
}

fn within(label: &str, value: f64, target: f64, tol: f64) -> Result<String, String> {
    let line = format!("{label}={value:.10} (target {target} ± {tol:e})");
    if (value - target).abs() <= tol {
        Ok(line)
    } else {
        Err(line)
    }
}

fn at_most(label: &str, value: f64, limit: f64) -> Result<String, String> {
    let line = format!("{label}={value:.3e} (≤ {limit:e})");
    if value <= limit {
        Ok(line)
    } else {
        Err(line)
    }
}

fn gather(parts: Vec<Result<String, String>>) -> Outcome {
    let failed: Vec<_> = parts
        .iter()
        .filter_map(|p| p.as_ref().err().cloned())
        .collect();
    if failed.is_empty() {
        Ok(parts
            .into_iter()
            .map(|p| p.unwrap())
            .collect::<Vec<_>>()
            .join("; "))
    } else {
        Err(failed.join("; "))
    }
}

fn timed(limit: Duration, f: impl FnOnce() -> Vec<Result<String, String>>) -> Outcome {
    let start = Instant::now();
    let mut parts = f();
    let elapsed = start.elapsed();
    let line = format!(
        "runtime={:.2}s (< {}s)",
        elapsed.as_secs_f64(),
        limit.as_secs()
    );
    parts.push(if elapsed < limit { Ok(line) } else { Err(line) });
    gather(parts)
}

fn counterexample() -> Outcome {
    timed(Duration::from_secs(30), || {
        let m = uniform_model(&[0.05, 0.15]);
        let r = regression::counterexample_report(&m, ReportOptions::default()).unwrap();
        let c = &r.correlation;
        vec![
            within("pearson", c.pearson, 0.05, 1e-6),
            within("R_analytic", c.maxcorr_analytic.unwrap(), 0.15, 0.0),
            within("R_svd", c.maxcorr_svd, 0.15, 1e-3),
            within("R_ace-R_svd", c.maxcorr_ace - c.maxcorr_svd, 0.0, 1e-3),
            at_most("regression residual", r.linear.residual, 1e-8),
            within("a1", r.linear.a1, 0.05, 1e-8),
            within("b1", r.linear.b1, 0.05, 1e-8),
            within("gap", c.gap, 0.10, 2e-3),
        ]
    })
}

fn disc() -> Outcome {
    timed(Duration::from_secs(60), || {
        let j = Fixture::Disc.discretize(correlation::CURVED_GRID).unwrap();
        vec![
            within(
                "R_svd",
                correlation::maxcorr_svd(&j).unwrap().r,
                1.0 / 3.0,
                0.01,
            ),
            within("pearson", correlation::pearson(&j).unwrap(), 0.0, 1e-4),
        ]
    })
}

fn pball() -> Outcome {
    let grid = correlation::CURVED_GRID;
    let r1 = correlation::maxcorr_svd(&fixtures::pball_joint(1.0, grid).unwrap())
        .unwrap()
        .r;
    let r2 = correlation::maxcorr_svd(&fixtures::pball_joint(2.0, grid).unwrap())
        .unwrap()
        .r;
    let rd = correlation::maxcorr_svd(&Fixture::Disc.discretize(grid).unwrap())
        .unwrap()
        .r;
    gather(vec![
        within("R_svd(p=1)", r1, 0.5, 0.01),
        within("R_svd(p=2)-R_svd(disc)", r2 - rd, 0.0, 1e-12),
        within("R_svd(p=2)", r2, 1.0 / 3.0, 0.01),
    ])
}

fn four_point() -> Outcome {
    let r = correlation::maxcorr_discrete_pmf(&fixtures::four_point_pmf()).unwrap();
    gather(vec![within("R", r, 1.0, 1e-9)])
}

fn sup_at_first() -> Outcome {
    let j =
        DiscretizedJoint::from_model(&uniform_model(&[0.15, 0.05]), correlation::LANCASTER_GRID)
            .unwrap();
    let r = correlation::maxcorr_svd(&j).unwrap().r;
    let p = correlation::pearson(&j).unwrap();
    gather(vec![at_most(
        "|R_svd-|pearson||",
        (r - p.abs()).abs(),
        2e-3,
    )])
}

fn trivial_regression() -> Outcome {
    let m = uniform_model(&[0.0, 0.15]);
    let lin = regression::check_linear_regression(&m).unwrap();
    let j = DiscretizedJoint::from_model(&m, correlation::LANCASTER_GRID).unwrap();
    gather(vec![
        within("a1", lin.a1, 0.0, 1e-8),
        within("b1", lin.b1, 0.0, 1e-8),
        within("pearson", correlation::pearson(&j).unwrap(), 0.0, 1e-6),
        within("R_svd", correlation::maxcorr_svd(&j).unwrap().r, 0.15, 1e-3),
    ])
}

fn random_marginal(rng: &mut ChaCha8Rng) -> MarginalSpec {
    match rng.random_range(0..3) {
        0 => MarginalSpec::uniform(0.0, 1.0).unwrap(),
        1 => MarginalSpec::beta(0.0, 1.0, 2.0, 3.0).unwrap(),
        _ => MarginalSpec::beta(-1.0, 1.0, 2.0, 2.0).unwrap(),
    }
}

/// Random coefficients rescaled so the bound lands in `[0.1, 0.95]`.
fn random_model(rng: &mut ChaCha8Rng) -> LancasterModel {
    let mx = random_marginal(rng);
    let my = random_marginal(rng);
    let sx = orthopoly::build_system(&mx, 8, 128).unwrap();
    let sy = orthopoly::build_system(&my, 8, 128).unwrap();
    let n = rng.random_range(1..=6);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (c, d) = (sx.bound_constants(), sy.bound_constants());
    let bound: f64 = raw
        .iter()
        .enumerate()
        .map(|(k, r)| r.abs() * c[k] * d[k])
        .sum();
    let target = rng.random_range(0.1..0.95);
    let rho: Vec<f64> = raw.iter().map(|r| r * target / bound).collect();
    LancasterModel::build(mx, my, 8, &rho).unwrap()
}

fn properties() -> Outcome {
    let mut parts = Vec::new();
    let mut worst_orth: f64 = 0.0;
    for m in [
        MarginalSpec::uniform(0.0, 1.0).unwrap(),
        MarginalSpec::beta(0.0, 1.0, 2.0, 3.0).unwrap(),
    ] {
        let s = orthopoly::build_system(&m, 8, 128).unwrap();
        worst_orth = worst_orth.max(orthopoly::orthonormality_residual(&s, &m, 256).unwrap());
    }
    parts.push(at_most("orthonormality", worst_orth, 1e-10));

    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let (mut eigen, mut leading, mut recovery, mut spectrum): (f64, f64, f64, f64) =
        (0.0, 0.0, 0.0, 0.0);
    let mut min_density = f64::INFINITY;
    for _ in 0..20 {
        let m = random_model(&mut rng);
        let n = m.coeffs().len();
        for k in 1..=n {
            eigen = eigen.max(
                regression::check_eigen_regression(&m, k)
                    .unwrap()
                    .max_residual(),
            );
            if k <= 5 {
                let p = regression::check_polynomial_regression(&m, k).unwrap();
                leading = leading.max(p.max_leading_error());
            }
        }
        let (rx, ry) = m.marginal_residual().unwrap();
        recovery = recovery.max(rx).max(ry);
        min_density = min_density.min(m.min_density_on_grid(256));
        let j = DiscretizedJoint::from_model(&m, 96).unwrap();
        let sv = correlation::maxcorr_svd(&j).unwrap().spectrum;
        let mut expected: Vec<f64> = std::iter::once(1.0)
            .chain(m.coeffs().rho().iter().map(|r| r.abs()))
            .collect();
        expected.sort_by(|a, b| b.total_cmp(a));
        for (k, e) in expected.iter().enumerate() {
            spectrum = spectrum.max((sv[k] - e).abs());
        }
        spectrum = spectrum.max(sv.get(expected.len()).copied().unwrap_or(0.0));
    }
    parts.push(at_most("eigen-regression residual", eigen, 1e-8));
    parts.push(at_most("leading coefficient rel. error", leading, 1e-7));
    parts.push(at_most("marginal recovery", recovery, 1e-9));
    let line = format!("min density={min_density:.3e} (≥ 0)");
    parts.push(if min_density >= 0.0 {
        Ok(line)
    } else {
        Err(line)
    });
    parts.push(at_most("spectrum mismatch", spectrum, 1e-3));
    gather(parts)
}

fn sampling() -> Outcome {
    let m = uniform_model(&[0.05, 0.15]);
    let draws = lancaster::sample_joint(&m, 100_000, 42);
    let n = draws.points.len();
    let xs: Vec<f64> = draws.points.iter().map(|p| p.0).collect();
    let ys: Vec<f64> = draws.points.iter().map(|p| p.1).collect();
    let crit = ks::ks_critical_value(n, 0.01);
    let kx = ks::ks_statistic(&xs, |x| m.marginal_x().cdf(x));
    let ky = ks::ks_statistic(&ys, |y| m.marginal_y().cdf(y));

    let prods: Vec<f64> = draws
        .points
        .iter()
        .map(|&(x, y)| m.system_x().evaluate(1, x).unwrap() * m.system_y().evaluate(1, y).unwrap())
        .collect();
    let mean = prods.iter().sum::<f64>() / n as f64;
    let var = prods.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let floor = 1.0 / (1.0 + m.coeffs().bound_value()) - 0.02;
    gather(vec![
        at_most("KS_x", kx, crit),
        at_most("KS_y", ky, crit),
        within("E[phi1 psi1]", mean, m.coeffs().get(1), 3.0 * se),
        {
            let rate = draws.acceptance_rate();
            let line = format!("acceptance={rate:.4} (≥ {floor:.4})");
            if rate >= floor {
                Ok(line)
            } else {
                Err(line)
            }
        },
    ])
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("bench{k}.csv"));
        let status = Command::new(env!("CARGO_BIN_EXE_lancaster-lab"))
            .args(["bench", "--out"])
            .arg(&out)
            .output()
            .unwrap();
        if !status.status.success() {
            return Err(format!("bench exited with {}", status.status));
        }
        outputs.push(std::fs::read(&out).unwrap());
    }
    if outputs[0] == outputs[1] {
        Ok(format!(
            "two bench runs identical ({} bytes)",
            outputs[0].len()
        ))
    } else {
        Err("bench outputs differ".into())
    }
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("counterexample", counterexample),
        ("disc", disc),
        ("p-ball", pball),
        ("four-point", four_point),
        ("sup-at-first", sup_at_first),
        ("trivial-regression", trivial_regression),
        ("properties", properties),
        ("sampling", sampling),
        ("determinism", determinism),
    ];
    let mut failures = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        match f() {
            Ok(detail) => println!("criterion {} {name}: PASS  {detail}", k + 1),
            Err(detail) => {
                failures += 1;
                println!("criterion {} {name}: FAIL  {detail}", k + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
