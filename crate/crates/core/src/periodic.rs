//! One-periodic test functions.
//!
//! A [`PeriodicFunction`] is described by its restriction to `[0, 1)` and is
//! evaluated everywhere by reduction mod 1. Each shape knows its own
//! breakpoints (points where it or its derivative jumps) so that quadrature
//! panels can be aligned with them.
//!
//! Functions have a compact text form used by the CLI and the JSON configs:
//! `cos:1`, `sin:2`, `hat:0.2`, `hatwave:0.1`, `haar:2:1`, `const`, `zero`,
//! `table:0/0;0.5/1;1/0`, each optionally prefixed by a scale as in `3*cos:1`.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::quadrature::GaussRule;

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Zero,
    Constant,
    /// `cos(2 pi k u)`
    Cos(u32),
    /// `sin(2 pi k u)`
    Sin(u32),
    /// `2 sin^2(pi s)` with `s = (u - eps) / (1 - 2 eps)` on `[eps, 1 - eps]`,
    /// zero elsewhere. C^1, nonnegative, integral `1 - 2 eps`.
    Hat { margin: f64 },
    /// `sin^2(pi s) sin(2 pi s)` on the same support as [`Shape::Hat`].
    /// C^1 with zero mean.
    HatWave { margin: f64 },
    /// L2-normalized Haar wavelet `psi_{level, index}`.
    Haar { level: u32, index: u32 },
    /// Piecewise-linear interpolation of `(x, y)` nodes spanning `[0, 1]`.
    Table(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicFunction {
    shape: Shape,
    scale: f64,
}

impl PeriodicFunction {
    fn build(shape: Shape) -> Self {
        Self { shape, scale: 1.0 }
    }

    pub fn zero() -> Self {
        Self::build(Shape::Zero)
    }

    pub fn constant(value: f64) -> Self {
        Self::build(Shape::Constant).scaled(value)
    }

    pub fn cos(k: u32) -> Self {
        Self::build(Shape::Cos(k))
    }

    pub fn sin(k: u32) -> Self {
        Self::build(Shape::Sin(k))
    }

    pub fn hat(margin: f64) -> Result<Self> {
        check_margin(margin)?;
        Ok(Self::build(Shape::Hat { margin }))
    }

    pub fn hat_wave(margin: f64) -> Result<Self> {
        check_margin(margin)?;
        Ok(Self::build(Shape::HatWave { margin }))
    }

    pub fn haar(level: u32, index: u32) -> Result<Self> {
        if level > 30 || index >= (1u32 << level) {
            return Err(Error::Domain(format!(
                "haar index {index} out of range at level {level}"
            )));
        }
        Ok(Self::build(Shape::Haar { level, index }))
    }

    /// Piecewise-linear function through `points`; the abscissae must be
    /// strictly increasing from 0 to 1.
    pub fn table(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::Domain("table needs at least two nodes".into()));
        }
        if points[0].0 != 0.0 || points[points.len() - 1].0 != 1.0 {
            return Err(Error::Domain("table abscissae must span [0, 1]".into()));
        }
        if points.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err(Error::Domain(
                "table abscissae must be strictly increasing".into(),
            ));
        }
        if points.iter().any(|p| !p.1.is_finite()) {
            return Err(Error::Domain("table values must be finite".into()));
        }
        Ok(Self::build(Shape::Table(points)))
    }

    pub fn scaled(mut self, c: f64) -> Self {
        self.scale *= c;
        self
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        let y = x - x.floor();
        self.scale * self.eval_unit(y)
    }

    fn eval_unit(&self, y: f64) -> f64 {
        match &self.shape {
            Shape::Zero => 0.0,
            Shape::Constant => 1.0,
            Shape::Cos(k) => (TAU * *k as f64 * y).cos(),
            Shape::Sin(k) => (TAU * *k as f64 * y).sin(),
            Shape::Hat { margin } => match support_coord(y, *margin) {
                Some(s) => 2.0 * (PI * s).sin().powi(2),
                None => 0.0,
            },
            Shape::HatWave { margin } => match support_coord(y, *margin) {
                Some(s) => (PI * s).sin().powi(2) * (TAU * s).sin(),
                None => 0.0,
            },
            Shape::Haar { level, index } => {
                let cells = (1u64 << level) as f64;
                let pos = y * cells - *index as f64;
                if (0.0..0.5).contains(&pos) {
                    cells.sqrt()
                } else if (0.5..1.0).contains(&pos) {
                    -cells.sqrt()
                } else {
                    0.0
                }
            }
            Shape::Table(pts) => {
                let i = pts.partition_point(|p| p.0 <= y).clamp(1, pts.len() - 1);
                let (x0, y0) = pts[i - 1];
                let (x1, y1) = pts[i];
                y0 + (y1 - y0) * (y - x0) / (x1 - x0)
            }
        }
    }

    /// Points in `[0, 1)` where the function or its derivative may jump.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.shape {
            Shape::Hat { margin } | Shape::HatWave { margin } => {
                if *margin > 0.0 {
                    vec![*margin, 1.0 - *margin]
                } else {
                    vec![0.0]
                }
            }
            Shape::Haar { level, index } => {
                let cells = (1u64 << level) as f64;
                let m = *index as f64;
                vec![m / cells, (m + 0.5) / cells, ((m + 1.0) / cells) % 1.0]
            }
            Shape::Table(pts) => {
                let mut b: Vec<f64> = pts.iter().map(|p| p.0 % 1.0).collect();
                b.sort_by(|x, y| x.partial_cmp(y).unwrap());
                b.dedup();
                b
            }
            _ => Vec::new(),
        }
    }

    /// Characteristic number of oscillations per unit length, used to size
    /// quadrature panels.
    pub fn oscillation(&self) -> f64 {
        match &self.shape {
            Shape::Cos(k) | Shape::Sin(k) => *k as f64,
            Shape::Hat { margin } | Shape::HatWave { margin } => 2.0 / (1.0 - 2.0 * margin),
            _ => 1.0,
        }
    }

    pub fn zero_mean(&self) -> bool {
        match &self.shape {
            Shape::Zero | Shape::HatWave { .. } | Shape::Haar { .. } | Shape::Sin(_) => true,
            Shape::Cos(k) => *k > 0,
            Shape::Constant | Shape::Hat { .. } => self.scale == 0.0,
            Shape::Table(_) => self.integral().abs() <= 1e-12,
        }
    }

    /// The margin `eps` such that the function vanishes outside
    /// `[eps, 1 - eps]` in each period (0 when no such margin is declared).
    pub fn support_margin(&self) -> f64 {
        match &self.shape {
            Shape::Hat { margin } | Shape::HatWave { margin } => *margin,
            _ => 0.0,
        }
    }

    pub fn is_c1(&self) -> bool {
        !matches!(self.shape, Shape::Haar { .. } | Shape::Table(_))
    }

    pub fn is_zero(&self) -> bool {
        self.scale == 0.0 || matches!(self.shape, Shape::Zero | Shape::Sin(0))
    }

    /// `int_0^1 f`.
    pub fn integral(&self) -> f64 {
        let rule = GaussRule::new(16);
        let width = panel_width(self.oscillation());
        rule.integrate_composite(0.0, 1.0, &self.breakpoints(), width, |x| self.eval(x))
    }

    /// `int_0^1 f g`.
    pub fn inner(&self, other: &PeriodicFunction) -> f64 {
        let rule = GaussRule::new(16);
        let mut bp = self.breakpoints();
        bp.extend(other.breakpoints());
        let width = panel_width(self.oscillation() + other.oscillation());
        rule.integrate_composite(0.0, 1.0, &bp, width, |x| self.eval(x) * other.eval(x))
    }

    /// Checks the declared flags against the function values.
    pub fn check_invariants(&self, abs_tol: f64) -> Result<()> {
        if self.zero_mean() && self.integral().abs() > abs_tol.max(1e-12) {
            return Err(Error::NumericalConsistency(format!(
                "{self} is flagged zero-mean but integrates to {:e}",
                self.integral()
            )));
        }
        let eps = self.support_margin();
        if eps > 0.0 {
            for i in 0..=200 {
                let y = eps * i as f64 / 200.0;
                if self.eval(y).abs() > abs_tol || self.eval(1.0 - y).abs() > abs_tol {
                    return Err(Error::NumericalConsistency(format!(
                        "{self} does not vanish outside its support"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn panel_width(oscillation: f64) -> f64 {
    (1.0 / 16.0f64).min(0.5 / oscillation.max(1.0))
}

fn check_margin(margin: f64) -> Result<()> {
    if !(0.0..0.5).contains(&margin) {
        return Err(Error::Domain(format!(
            "support margin {margin} must lie in [0, 1/2)"
        )));
    }
    Ok(())
}

fn support_coord(y: f64, margin: f64) -> Option<f64> {
    if y < margin || y > 1.0 - margin {
        None
    } else {
        Some((y - margin) / (1.0 - 2.0 * margin))
    }
}

impl fmt::Display for PeriodicFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.scale != 1.0 {
            write!(f, "{}*", self.scale)?;
        }
        match &self.shape {
            Shape::Zero => write!(f, "zero"),
            Shape::Constant => write!(f, "const"),
            Shape::Cos(k) => write!(f, "cos:{k}"),
            Shape::Sin(k) => write!(f, "sin:{k}"),
            Shape::Hat { margin } => write!(f, "hat:{margin}"),
            Shape::HatWave { margin } => write!(f, "hatwave:{margin}"),
            Shape::Haar { level, index } => write!(f, "haar:{level}:{index}"),
            Shape::Table(pts) => {
                write!(f, "table:")?;
                for (i, (x, y)) in pts.iter().enumerate() {
                    if i > 0 {
                        write!(f, ";")?;
                    }
                    write!(f, "{x}/{y}")?;
                }
                Ok(())
            }
        }
    }
}

impl FromStr for PeriodicFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (scale, body) = match s.split_once('*') {
            Some((c, rest)) => (parse_num(c)?, rest.trim()),
            None => (1.0, s),
        };
        // `cos(1)` and `haar(2, 1)` are accepted as `cos:1` and `haar:2:1`
        let call;
        let body = match body.strip_suffix(')').and_then(|b| b.split_once('(')) {
            Some((name, args)) => {
                call = format!("{name}:{}", args.replace(',', ":"));
                call.as_str()
            }
            None => body,
        };
        let mut parts = body.splitn(2, ':');
        let head = parts.next().unwrap_or("").trim().to_ascii_lowercase();
        let arg = parts.next().map(str::trim);
        let need = |what: &str| arg.ok_or_else(|| Error::Parse(format!("`{head}` needs {what}")));
        let f = match head.as_str() {
            "zero" => Self::zero(),
            "const" | "one" => Self::build(Shape::Constant),
            "cos" => Self::cos(parse_int(need("a frequency")?)?),
            "sin" => Self::sin(parse_int(need("a frequency")?)?),
            "hat" => Self::hat(parse_num(need("a margin")?)?)?,
            "hatwave" => Self::hat_wave(parse_num(need("a margin")?)?)?,
            "haar" => {
                let a = need("level:index")?;
                let (l, i) = a
                    .split_once(':')
                    .ok_or_else(|| Error::Parse("haar needs level:index".into()))?;
                Self::haar(parse_int(l)?, parse_int(i)?)?
            }
            "table" => {
                let pts = need("nodes")?
                    .split(';')
                    .map(|p| {
                        let (x, y) = p
                            .split_once('/')
                            .ok_or_else(|| Error::Parse(format!("bad table node `{p}`")))?;
                        Ok((parse_num(x)?, parse_num(y)?))
                    })
                    .collect::<Result<Vec<_>>>()?;
                Self::table(pts)?
            }
            other => return Err(Error::Parse(format!("unknown function `{other}`"))),
        };
        Ok(f.scaled(scale))
    }
}

fn parse_num(s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Parse(format!("`{s}` is not a number")))
}

fn parse_int(s: &str) -> Result<u32> {
    s.trim()
        .parse::<u32>()
        .map_err(|_| Error::Parse(format!("`{s}` is not a nonnegative integer")))
}

impl Serialize for PeriodicFunction {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for PeriodicFunction {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
