//! Runtime registry of two-dimensional fields with closed-form jets.
//!
//! Entries are constructed from a [`FieldConfig`] and selected by name, so
//! scans, bound reports and the generator-expansion check can run against
//! any registered field.

use crate::error::{JsqError, Result};
use crate::fluid_model::{classify_vs_gamma, CurveSide, FluidPoint, ModelParams};
use crate::special_fn::SmoothingSpec;
use crate::stein_solutions::{f1_jet, f2_jet, f_h_jet, fluid_smoothing, require_pair, FieldJet};
use serde::Serialize;
use std::collections::BTreeMap;

/// A function on Ω with value, gradient and Hessian available at every point.
pub trait JetField: Send + Sync {
    fn name(&self) -> &str;

    fn jet(&self, x: FluidPoint) -> Result<FieldJet>;

    /// Right-hand side h when the field solves L f = −h; `None` otherwise.
    fn source(&self, _x: FluidPoint) -> Option<f64> {
        None
    }

    /// Label of the closed-form branch in use at `x`. Second derivatives may
    /// jump only where the label changes.
    fn branch_key(&self, _x: FluidPoint) -> u32 {
        0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FieldConfig {
    pub params: ModelParams,
    pub kappa: f64,
    pub kappa1: f64,
    pub kappa2: f64,
}

pub type FieldBuilder = fn(&FieldConfig) -> Result<Box<dyn JetField>>;

pub struct ExcessSolution {
    params: ModelParams,
    kappa: f64,
}

impl ExcessSolution {
    pub fn new(params: ModelParams, kappa: f64) -> Result<Self> {
        f_h_jet(&params, kappa, FluidPoint::raw(0.0, 0.0))?;
        Ok(Self { params, kappa })
    }
}

impl JetField for ExcessSolution {
    fn name(&self) -> &str {
        "excess"
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        f_h_jet(&self.params, self.kappa, x)
    }

    fn source(&self, x: FluidPoint) -> Option<f64> {
        Some((x.x2 - self.params.level(self.kappa)).max(0.0))
    }

    fn branch_key(&self, x: FluidPoint) -> u32 {
        if x.x2 <= self.params.level(self.kappa) {
            0
        } else if classify_vs_gamma(&self.params, self.kappa, x).ok() == Some(CurveSide::Above) {
            2
        } else {
            1
        }
    }
}

pub struct IdleSmoothSolution {
    params: ModelParams,
    kappa1: f64,
    kappa2: f64,
    phi: SmoothingSpec,
}

impl IdleSmoothSolution {
    pub fn new(params: ModelParams, kappa1: f64, kappa2: f64) -> Result<Self> {
        require_pair(&params, kappa1, kappa2)?;
        Ok(Self {
            params,
            kappa1,
            kappa2,
            phi: fluid_smoothing(&params, kappa1, kappa2)?,
        })
    }
}

impl JetField for IdleSmoothSolution {
    fn name(&self) -> &str {
        "smooth-idle"
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        f1_jet(&self.params, self.kappa1, self.kappa2, x)
    }

    fn source(&self, x: FluidPoint) -> Option<f64> {
        Some(self.phi.value(-x.x1))
    }
}

pub struct QueueSmoothSolution {
    params: ModelParams,
    kappa1: f64,
    kappa2: f64,
    phi: SmoothingSpec,
}

impl QueueSmoothSolution {
    pub fn new(params: ModelParams, kappa1: f64, kappa2: f64) -> Result<Self> {
        require_pair(&params, kappa1, kappa2)?;
        Ok(Self {
            params,
            kappa1,
            kappa2,
            phi: fluid_smoothing(&params, kappa1, kappa2)?,
        })
    }
}

impl JetField for QueueSmoothSolution {
    fn name(&self) -> &str {
        "smooth-queue"
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        Ok(f2_jet(&self.params, self.kappa1, self.kappa2, x)?.0)
    }

    fn source(&self, x: FluidPoint) -> Option<f64> {
        Some(self.phi.value(x.x2))
    }
}

/// x₁² − x₁x₂ + 2x₂².
pub struct QuadraticField;

impl JetField for QuadraticField {
    fn name(&self) -> &str {
        "quadratic"
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        let (a, b) = (x.x1, x.x2);
        Ok(FieldJet {
            f: a * a - a * b + 2.0 * b * b,
            f1: 2.0 * a - b,
            f2: -a + 4.0 * b,
            f11: 2.0,
            f12: -1.0,
            f22: 4.0,
        })
    }
}

/// x₁³/3 + x₁x₂² + x₂³.
pub struct CubicField;

impl JetField for CubicField {
    fn name(&self) -> &str {
        "cubic"
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        let (a, b) = (x.x1, x.x2);
        Ok(FieldJet {
            f: a * a * a / 3.0 + a * b * b + b * b * b,
            f1: a * a + b * b,
            f2: 2.0 * a * b + 3.0 * b * b,
            f11: 2.0 * a,
            f12: 2.0 * b,
            f22: 2.0 * a + 6.0 * b,
        })
    }
}

/// Sum of two fields; its source is the sum of sources when both have one.
pub struct SumField {
    name: String,
    parts: Vec<Box<dyn JetField>>,
}

impl SumField {
    pub fn new(name: impl Into<String>, parts: Vec<Box<dyn JetField>>) -> Self {
        Self {
            name: name.into(),
            parts,
        }
    }
}

impl JetField for SumField {
    fn name(&self) -> &str {
        &self.name
    }

    fn jet(&self, x: FluidPoint) -> Result<FieldJet> {
        self.parts
            .iter()
            .try_fold(FieldJet::ZERO, |acc, p| Ok(acc.add(&p.jet(x)?)))
    }

    fn source(&self, x: FluidPoint) -> Option<f64> {
        self.parts.iter().map(|p| p.source(x)).sum()
    }

    fn branch_key(&self, x: FluidPoint) -> u32 {
        self.parts.iter().fold(0, |acc, p| {
            acc.wrapping_mul(8).wrapping_add(p.branch_key(x))
        })
    }
}

pub struct FieldRegistry {
    builders: BTreeMap<String, FieldBuilder>,
}

impl Default for FieldRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl FieldRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("excess", |c| {
            Ok(Box::new(ExcessSolution::new(c.params, c.kappa)?))
        });
        r.register("smooth-idle", |c| {
            Ok(Box::new(IdleSmoothSolution::new(
                c.params, c.kappa1, c.kappa2,
            )?))
        });
        r.register("smooth-queue", |c| {
            Ok(Box::new(QueueSmoothSolution::new(
                c.params, c.kappa1, c.kappa2,
            )?))
        });
        r.register("smooth-sum", |c| {
            Ok(Box::new(SumField::new(
                "smooth-sum",
                vec![
                    Box::new(IdleSmoothSolution::new(c.params, c.kappa1, c.kappa2)?),
                    Box::new(QueueSmoothSolution::new(c.params, c.kappa1, c.kappa2)?),
                ],
            )))
        });
        r.register("quadratic", |_| Ok(Box::new(QuadraticField)));
        r.register("cubic", |_| Ok(Box::new(CubicField)));
        r
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, name: &str, builder: FieldBuilder) {
        self.builders.insert(name.to_string(), builder);
    }

    pub fn names(&self) -> Vec<&str> {
        self.builders.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, cfg: &FieldConfig) -> Result<Box<dyn JetField>> {
        let b = self.builders.get(name).ok_or_else(|| JsqError::Unknown {
            kind: "field",
            name: name.to_string(),
        })?;
        b(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> FieldConfig {
        FieldConfig {
            params: ModelParams::new(100, 1.0).unwrap(),
            kappa: 2.0,
            kappa1: 1.5,
            kappa2: 2.5,
        }
    }

    #[test]
    fn defaults_build_by_name() {
        let r = FieldRegistry::with_defaults();
        for name in r.names() {
            let f = r.build(name, &cfg()).unwrap();
            assert_eq!(f.name(), name);
            assert!(f.jet(FluidPoint::raw(-0.3, 0.4)).unwrap().is_finite());
        }
        assert!(matches!(
            r.build("nope", &cfg()),
            Err(JsqError::Unknown { .. })
        ));
    }

    #[test]
    fn bad_parameters_surface_at_build() {
        let r = FieldRegistry::with_defaults();
        let mut c = cfg();
        c.kappa = 0.5;
        c.kappa1 = 3.0;
        assert!(r.build("excess", &c).is_err());
        assert!(r.build("smooth-idle", &c).is_err());
    }

    #[test]
    fn test_polynomials_have_no_source() {
        assert!(QuadraticField.source(FluidPoint::raw(0.0, 0.0)).is_none());
        let sum = FieldRegistry::with_defaults()
            .build("smooth-sum", &cfg())
            .unwrap();
        assert!(sum.source(FluidPoint::raw(0.0, 0.0)).is_some());
    }

    #[test]
    fn custom_entries_can_be_registered() {
        let mut r = FieldRegistry::empty();
        r.register("cubic", |_| Ok(Box::new(CubicField)));
        assert_eq!(r.names(), vec!["cubic"]);
    }
}
