//! Built-in benchmark laws.
//!
//! These are defined in code so their reference values cannot drift:
//!
//! | name | law | maximal correlation |
//! |------|-----|---------------------|
//! | `disc` | uniform on the unit disc | 1/3 |
//! | `pball:p` | uniform on `|x|^p + |y|^p < 1` | 1/(p+1) |
//! | `fourpoint` | uniform on `{(0,±1), (±1,0)}` | 1 |
//! | `fgm:r` | uniform marginals, `ρ = (r)` | `|r|` |
//! | `lancaster:r1,r2,..` | uniform marginals, `ρ = (r1, r2, ..)` | `max |rₙ|` |

use statrs::function::gamma::gamma;

use crate::correlation::{DiscretizedJoint, CURVED_GRID, LANCASTER_GRID};
use crate::error::{Error, Result};
use crate::lancaster::LancasterModel;
use crate::orthopoly::{MarginalSpec, DEFAULT_MAX_DEGREE};

#[derive(Debug, Clone, PartialEq)]
pub enum Fixture {
    Disc,
    PBall(f64),
    FourPoint,
    Fgm(f64),
    Lancaster(Vec<f64>),
}

/// Fixtures run by `bench`, in output order.
pub fn bench_fixtures() -> Vec<Fixture> {
    vec![
        Fixture::Disc,
        Fixture::PBall(1.0),
        Fixture::PBall(2.0),
        Fixture::FourPoint,
        Fixture::Fgm(0.2),
        Fixture::Lancaster(vec![0.05, 0.15]),
        Fixture::Lancaster(vec![0.15, 0.05]),
        Fixture::Lancaster(vec![0.0, 0.15]),
    ]
}

fn parse_real(s: &str, name: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| Error::Config(format!("bad number {s:?} in fixture {name:?}")))
}

impl Fixture {
    pub fn parse(name: &str) -> Result<Self> {
        let (head, arg) = match name.split_once(':') {
            Some((h, a)) => (h, Some(a)),
            None => (name, None),
        };
        match (head, arg) {
            ("disc", None) => Ok(Fixture::Disc),
            ("fourpoint", None) => Ok(Fixture::FourPoint),
            ("pball", Some(p)) => {
                let p = parse_real(p, name)?;
                if p <= 0.0 {
                    return Err(Error::Config(format!("pball exponent {p} must be > 0")));
                }
                Ok(Fixture::PBall(p))
            }
            ("fgm", Some(r)) => Ok(Fixture::Fgm(parse_real(r, name)?)),
            ("lancaster", Some(list)) => {
                let rho = list
                    .split(',')
                    .map(|s| parse_real(s, name))
                    .collect::<Result<Vec<_>>>()?;
                Ok(Fixture::Lancaster(rho))
            }
            _ => Err(Error::Config(format!("unknown fixture {name:?}"))),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Fixture::Disc => "disc".into(),
            Fixture::PBall(p) => format!("pball:{p}"),
            Fixture::FourPoint => "fourpoint".into(),
            Fixture::Fgm(r) => format!("fgm:{r}"),
            Fixture::Lancaster(rho) => {
                let parts: Vec<String> = rho.iter().map(|r| r.to_string()).collect();
                format!("lancaster:{}", parts.join(","))
            }
        }
    }

    pub fn default_grid(&self) -> usize {
        match self {
            Fixture::Disc | Fixture::PBall(_) => CURVED_GRID,
            _ => LANCASTER_GRID,
        }
    }

    /// The Lancaster model behind the fixture, if it has one.
    pub fn model(&self) -> Result<Option<LancasterModel>> {
        let rho = match self {
            Fixture::Fgm(r) => vec![*r],
            Fixture::Lancaster(rho) => rho.clone(),
            _ => return Ok(None),
        };
        let u = MarginalSpec::uniform(0.0, 1.0)?;
        let degree = DEFAULT_MAX_DEGREE.max(rho.len());
        LancasterModel::build(u.clone(), u, degree, &rho).map(Some)
    }

    /// Reference maximal correlation.
    pub fn reference_maxcorr(&self) -> f64 {
        match self {
            Fixture::Disc => 1.0 / 3.0,
            Fixture::PBall(p) => 1.0 / (p + 1.0),
            Fixture::FourPoint => 1.0,
            Fixture::Fgm(r) => r.abs(),
            Fixture::Lancaster(rho) => rho.iter().fold(0.0, |a: f64, r| a.max(r.abs())),
        }
    }

    pub fn discretize(&self, grid: usize) -> Result<DiscretizedJoint> {
        match self {
            Fixture::Disc => pball_joint(2.0, grid),
            Fixture::PBall(p) => pball_joint(*p, grid),
            Fixture::FourPoint => four_point_joint(),
            _ => {
                let model = self.model()?.expect("lancaster fixture");
                DiscretizedJoint::from_model(&model, grid)
            }
        }
    }
}

/// Area of `{|x|^p + |y|^p < 1}`.
pub fn pball_area(p: f64) -> f64 {
    4.0 * gamma(1.0 + 1.0 / p).powi(2) / gamma(1.0 + 2.0 / p)
}

/// Uniform density on the p-ball, zero outside.
pub fn pball_density(p: f64) -> impl Fn(f64, f64) -> f64 + Sync {
    let height = 1.0 / pball_area(p);
    move |x: f64, y: f64| {
        if x.abs().powf(p) + y.abs().powf(p) < 1.0 {
            height
        } else {
            0.0
        }
    }
}

pub fn pball_joint(p: f64, grid: usize) -> Result<DiscretizedJoint> {
    DiscretizedJoint::from_density(pball_density(p), ((-1.0, 1.0), (-1.0, 1.0)), grid)
}

pub const FOUR_POINT_SUPPORT: [f64; 3] = [-1.0, 0.0, 1.0];

pub fn four_point_pmf() -> Vec<Vec<f64>> {
    vec![
        vec![0.0, 0.25, 0.0],
        vec![0.25, 0.0, 0.25],
        vec![0.0, 0.25, 0.0],
    ]
}

pub fn four_point_joint() -> Result<DiscretizedJoint> {
    DiscretizedJoint::from_pmf(&FOUR_POINT_SUPPORT, &FOUR_POINT_SUPPORT, &four_point_pmf())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_names() {
        assert_eq!(Fixture::parse("disc").unwrap(), Fixture::Disc);
        assert_eq!(Fixture::parse("pball:1.5").unwrap(), Fixture::PBall(1.5));
        assert_eq!(Fixture::parse("fgm:0.2").unwrap(), Fixture::Fgm(0.2));
        assert_eq!(
            Fixture::parse("lancaster:0.05,0.15").unwrap(),
            Fixture::Lancaster(vec![0.05, 0.15])
        );
        for bad in ["disk", "pball", "pball:-1", "fgm:x", "disc:2"] {
            assert!(Fixture::parse(bad).is_err(), "{bad}");
        }
        for f in bench_fixtures() {
            assert_eq!(Fixture::parse(&f.name()).unwrap(), f);
        }
    }

    #[test]
    fn areas() {
        assert!((pball_area(2.0) - std::f64::consts::PI).abs() < 1e-12);
        assert!((pball_area(1.0) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn disc_marginal_matches_semicircle() {
        let j = pball_joint(2.0, 400).unwrap();
        for (x, f) in j.x_nodes().iter().zip(j.marginal_x_values()) {
            if x.abs() < 0.9 {
                let want = 2.0 * (1.0 - x * x).sqrt() / std::f64::consts::PI;
                assert!((f - want).abs() < 5e-3, "x={x} f={f} want={want}");
            }
        }
    }
}
