//! Named test functions on the state space for adjoint-relation checks.

use super::{lift, QueueState};
use crate::error::{JsqError, Result};
use crate::fluid_model::ModelParams;
use crate::registry::{CubicField, ExcessSolution, JetField, QuadraticField};
use std::collections::BTreeMap;

pub trait TestFunction: Send + Sync {
    fn name(&self) -> &str;
    fn eval(&self, q: &QueueState) -> f64;
}

struct Named<F> {
    name: &'static str,
    f: F,
}

impl<F: Fn(&QueueState) -> f64 + Send + Sync> TestFunction for Named<F> {
    fn name(&self) -> &str {
        self.name
    }
    fn eval(&self, q: &QueueState) -> f64 {
        (self.f)(q)
    }
}

fn boxed<F: Fn(&QueueState) -> f64 + Send + Sync + 'static>(
    name: &'static str,
    f: F,
) -> Box<dyn TestFunction> {
    Box::new(Named { name, f })
}

/// Lifts a planar field's value to the state space.
struct Lifted {
    name: &'static str,
    n: u64,
    field: Box<dyn JetField>,
}

impl TestFunction for Lifted {
    fn name(&self) -> &str {
        self.name
    }
    fn eval(&self, q: &QueueState) -> f64 {
        let field = &self.field;
        lift(self.n, |x| field.jet(x).map(|j| j.f).unwrap_or(f64::NAN))(q)
    }
}

/// Builds a test function for the given model and total-count cap.
pub type TestFunctionBuilder = fn(&ModelParams, u64) -> Result<Box<dyn TestFunction>>;

pub struct TestFunctionRegistry {
    builders: BTreeMap<&'static str, TestFunctionBuilder>,
}

impl Default for TestFunctionRegistry {
    fn default() -> Self {
        Self::with_defaults()
    }
}

impl TestFunctionRegistry {
    pub fn empty() -> Self {
        Self {
            builders: BTreeMap::new(),
        }
    }

    /// Ten functions: constant, truncated linear, level counts, indicators of
    /// full levels and three lifted planar fields.
    pub fn with_defaults() -> Self {
        let mut r = Self::empty();
        r.register("constant", |_, _| Ok(boxed("constant", |_| 1.0)));
        r.register("total-capped", |_, cap| {
            let m = (cap / 2).max(1);
            Ok(boxed("total-capped", move |q| q.total().min(m) as f64))
        });
        r.register("first-level", |_, _| {
            Ok(boxed("first-level", |q| q.level(1) as f64))
        });
        r.register("second-level", |_, _| {
            Ok(boxed("second-level", |q| q.level(2) as f64))
        });
        r.register("deep-levels", |_, _| {
            Ok(boxed("deep-levels", |q| {
                q.levels().iter().skip(2).map(|&v| v as f64).sum()
            }))
        });
        r.register("first-full", |p, _| {
            let n = p.n as u32;
            Ok(boxed("first-full", move |q| (q.level(1) == n) as u8 as f64))
        });
        r.register("two-full", |p, _| {
            let n = p.n as u32;
            Ok(boxed("two-full", move |q| {
                (q.level(1) == n && q.level(2) == n) as u8 as f64
            }))
        });
        r.register("lifted-excess", |p, _| {
            let field = ExcessSolution::new(*p, p.beta + 1.0)?;
            Ok(Box::new(Lifted {
                name: "lifted-excess",
                n: p.n,
                field: Box::new(field),
            }))
        });
        r.register("lifted-quadratic", |p, _| {
            Ok(Box::new(Lifted {
                name: "lifted-quadratic",
                n: p.n,
                field: Box::new(QuadraticField),
            }))
        });
        r.register("lifted-cubic", |p, _| {
            Ok(Box::new(Lifted {
                name: "lifted-cubic",
                n: p.n,
                field: Box::new(CubicField),
            }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, builder: TestFunctionBuilder) {
        self.builders.insert(name, builder);
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.builders.keys().copied().collect()
    }

    pub fn build(
        &self,
        name: &str,
        params: &ModelParams,
        cap: u64,
    ) -> Result<Box<dyn TestFunction>> {
        let b = self.builders.get(name).ok_or_else(|| JsqError::Unknown {
            kind: "test function",
            name: name.to_string(),
        })?;
        b(params, cap)
    }

    pub fn build_all(&self, params: &ModelParams, cap: u64) -> Result<Vec<Box<dyn TestFunction>>> {
        self.builders.values().map(|b| b(params, cap)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_defaults() {
        let r = TestFunctionRegistry::with_defaults();
        assert_eq!(r.names().len(), 10);
        let p = ModelParams::new(4, 0.5).unwrap();
        let all = r.build_all(&p, 40).unwrap();
        let q = QueueState::new(vec![4, 4, 1, 0], 4).unwrap();
        for f in &all {
            assert!(f.eval(&q).is_finite(), "{}", f.name());
        }
        assert_eq!(r.build("two-full", &p, 40).unwrap().eval(&q), 1.0);
        assert!(r.build("nope", &p, 40).is_err());
    }
}
