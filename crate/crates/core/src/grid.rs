//! Rectangular evaluation grids over Ω.

use crate::error::{JsqError, Result};
use serde::{Deserialize, Serialize};
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Fluid,
    Diffusion,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub x1_range: (f64, f64),
    pub x2_range: (f64, f64),
    pub points_x1: usize,
    pub points_x2: usize,
    pub scale: Scale,
}

fn linspace(lo: f64, hi: f64, k: usize) -> impl Iterator<Item = f64> {
    (0..k).map(move |i| {
        if i + 1 == k {
            hi
        } else {
            lo + (hi - lo) * i as f64 / (k - 1) as f64
        }
    })
}

impl GridSpec {
    pub fn new(
        x1_range: (f64, f64),
        x2_range: (f64, f64),
        points_x1: usize,
        points_x2: usize,
        scale: Scale,
    ) -> Result<Self> {
        let g = Self {
            x1_range,
            x2_range,
            points_x1,
            points_x2,
            scale,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn square(x1_lo: f64, x2_hi: f64, points: usize, scale: Scale) -> Result<Self> {
        Self::new((x1_lo, 0.0), (0.0, x2_hi), points, points, scale)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.x1_range;
        let (c, d) = self.x2_range;
        if self.points_x1 < 2 || self.points_x2 < 2 {
            return Err(JsqError::InvalidParameter(
                "grid needs at least 2 points per axis".into(),
            ));
        }
        if !(a < b && b <= 0.0) || !(0.0 <= c && c < d) || !a.is_finite() || !d.is_finite() {
            return Err(JsqError::InvalidParameter(format!(
                "grid [{a},{b}]x[{c},{d}] must be a nondegenerate box inside the domain"
            )));
        }
        Ok(())
    }

    pub fn x1_values(&self) -> impl Iterator<Item = f64> {
        linspace(self.x1_range.0, self.x1_range.1, self.points_x1)
    }

    pub fn x2_values(&self) -> impl Iterator<Item = f64> {
        linspace(self.x2_range.0, self.x2_range.1, self.points_x2)
    }

    /// Row-major iteration over all grid nodes.
    pub fn points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x1_values()
            .flat_map(move |a| self.x2_values().map(move |b| (a, b)))
    }

    pub fn len(&self) -> usize {
        self.points_x1 * self.points_x2
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_scale(mut self, scale: Scale) -> Self {
        self.scale = scale;
        self
    }
}

/// Parses `"x1lo:x1hi:N,x2lo:x2hi:M"`.
impl FromStr for GridSpec {
    type Err = JsqError;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || JsqError::InvalidParameter(format!("cannot parse grid '{s}'"));
        let axes: Vec<&str> = s.split(',').collect();
        if axes.len() != 2 {
            return Err(bad());
        }
        let parse_axis = |a: &str| -> Result<(f64, f64, usize)> {
            let parts: Vec<&str> = a.trim().split(':').collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            let lo = parts[0].parse::<f64>().map_err(|_| bad())?;
            let hi = parts[1].parse::<f64>().map_err(|_| bad())?;
            let k = parts[2].parse::<usize>().map_err(|_| bad())?;
            Ok((lo, hi, k))
        };
        let (a, b, k1) = parse_axis(axes[0])?;
        let (c, d, k2) = parse_axis(axes[1])?;
        GridSpec::new((a, b), (c, d), k1, k2, Scale::Fluid)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_spans_endpoints() {
        let g: GridSpec = "-3:0:4,0:3:3".parse().unwrap();
        let xs: Vec<f64> = g.x1_values().collect();
        assert_eq!(xs, vec![-3.0, -2.0, -1.0, 0.0]);
        assert_eq!(g.points().count(), 12);
        assert!("-3:0:1,0:3:3".parse::<GridSpec>().is_err());
        assert!("0:1:3,0:3:3".parse::<GridSpec>().is_err());
        assert!("garbage".parse::<GridSpec>().is_err());
    }
}
