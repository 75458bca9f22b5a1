use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use super::{matern_kernel, matern_ssm, se_kernel, se_taylor_ssm, MaternSpec, PriorSsm};
use crate::error::{Error, Result};

/// A family of stationary force priors with a state-space realisation.
///
/// Implementations are immutable; the `with_*` methods return new priors so
/// that model banks and optimizers can vary one hyperparameter at a time.
pub trait ForcePrior: fmt::Debug + Send + Sync {
    /// Registry name of the family.
    fn family(&self) -> &str;

    fn lengthscale(&self) -> f64;

    fn variance(&self) -> f64;

    fn with_lengthscale(&self, lengthscale: f64) -> Result<Arc<dyn ForcePrior>>;

    fn with_variance(&self, variance: f64) -> Result<Arc<dyn ForcePrior>>;

    fn state_space(&self) -> Result<PriorSsm>;

    /// The covariance function the state-space model represents (exactly or
    /// approximately).
    fn kernel(&self, tau: f64) -> f64;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaternPrior(pub MaternSpec);

impl ForcePrior for MaternPrior {
    fn family(&self) -> &str {
        "matern"
    }

    fn lengthscale(&self) -> f64 {
        self.0.lengthscale()
    }

    fn variance(&self) -> f64 {
        self.0.variance()
    }

    fn with_lengthscale(&self, lengthscale: f64) -> Result<Arc<dyn ForcePrior>> {
        Ok(Arc::new(MaternPrior(MaternSpec::new(self.0.nu(), lengthscale, self.0.variance())?)))
    }

    fn with_variance(&self, variance: f64) -> Result<Arc<dyn ForcePrior>> {
        Ok(Arc::new(MaternPrior(MaternSpec::new(self.0.nu(), self.0.lengthscale(), variance)?)))
    }

    fn state_space(&self) -> Result<PriorSsm> {
        matern_ssm(&self.0)
    }

    fn kernel(&self, tau: f64) -> f64 {
        matern_kernel(tau, &self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SquaredExponentialPrior {
    pub lengthscale: f64,
    pub variance: f64,
    pub order: usize,
}

impl SquaredExponentialPrior {
    pub const DEFAULT_ORDER: usize = 6;

    pub fn new(lengthscale: f64, variance: f64, order: usize) -> Result<Self> {
        if !(lengthscale > 0.0) || !(variance > 0.0) {
            return Err(Error::invalid("length-scale and variance must be positive"));
        }
        if order < 2 {
            return Err(Error::invalid(format!("squared-exponential order must be at least 2, got {order}")));
        }
        Ok(SquaredExponentialPrior { lengthscale, variance, order })
    }
}

impl ForcePrior for SquaredExponentialPrior {
    fn family(&self) -> &str {
        "se_taylor"
    }

    fn lengthscale(&self) -> f64 {
        self.lengthscale
    }

    fn variance(&self) -> f64 {
        self.variance
    }

    fn with_lengthscale(&self, lengthscale: f64) -> Result<Arc<dyn ForcePrior>> {
        Ok(Arc::new(SquaredExponentialPrior::new(lengthscale, self.variance, self.order)?))
    }

    fn with_variance(&self, variance: f64) -> Result<Arc<dyn ForcePrior>> {
        Ok(Arc::new(SquaredExponentialPrior::new(self.lengthscale, variance, self.order)?))
    }

    fn state_space(&self) -> Result<PriorSsm> {
        se_taylor_ssm(self.lengthscale, self.variance, self.order)
    }

    fn kernel(&self, tau: f64) -> f64 {
        se_kernel(tau, self.lengthscale, self.variance)
    }
}

/// Hyperparameters handed to a registry factory. Family-specific fields are
/// optional and checked by the factory that needs them.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriorParams {
    pub lengthscale: f64,
    pub variance: f64,
    pub nu: Option<f64>,
    pub order: Option<usize>,
}

impl PriorParams {
    pub fn new(lengthscale: f64, variance: f64) -> Self {
        PriorParams { lengthscale, variance, nu: None, order: None }
    }
}

type Factory = Box<dyn Fn(&PriorParams) -> Result<Arc<dyn ForcePrior>> + Send + Sync>;

/// Name → constructor table for force prior families.
pub struct PriorRegistry {
    factories: BTreeMap<String, Factory>,
}

impl fmt::Debug for PriorRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PriorRegistry").field("families", &self.names()).finish()
    }
}

impl Default for PriorRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl PriorRegistry {
    pub fn empty() -> Self {
        PriorRegistry { factories: BTreeMap::new() }
    }

    /// Matérn (`matern` with explicit `nu`, plus the fixed `matern12`,
    /// `matern32`, `matern52`) and the Taylor-approximated `se_taylor`.
    pub fn builtin() -> Self {
        let mut reg = Self::empty();
        reg.register("matern", |p| {
            let nu = p.nu.ok_or_else(|| Error::invalid("matern prior requires `nu`"))?;
            Ok(Arc::new(MaternPrior(MaternSpec::new(nu, p.lengthscale, p.variance)?)))
        });
        for (name, nu) in [("matern12", 0.5), ("matern32", 1.5), ("matern52", 2.5)] {
            reg.register(name, move |p| {
                if p.nu.is_some_and(|given| given != nu) {
                    return Err(Error::invalid(format!("{name} fixes nu = {nu}")));
                }
                Ok(Arc::new(MaternPrior(MaternSpec::new(nu, p.lengthscale, p.variance)?)))
            });
        }
        reg.register("se_taylor", |p| {
            let order = p.order.unwrap_or(SquaredExponentialPrior::DEFAULT_ORDER);
            Ok(Arc::new(SquaredExponentialPrior::new(p.lengthscale, p.variance, order)?))
        });
        reg
    }

    pub fn register<F>(&mut self, name: &str, factory: F)
    where
        F: Fn(&PriorParams) -> Result<Arc<dyn ForcePrior>> + Send + Sync + 'static,
    {
        self.factories.insert(name.to_string(), Box::new(factory));
    }

    pub fn names(&self) -> Vec<&str> {
        self.factories.keys().map(String::as_str).collect()
    }

    pub fn build(&self, name: &str, params: &PriorParams) -> Result<Arc<dyn ForcePrior>> {
        let factory = self.factories.get(name).ok_or_else(|| {
            Error::invalid(format!("unknown prior family `{name}` (known: {})", self.names().join(", ")))
        })?;
        factory(params)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_families() {
        let reg = PriorRegistry::builtin();
        assert_eq!(reg.names(), vec!["matern", "matern12", "matern32", "matern52", "se_taylor"]);
        let p = reg.build("matern32", &PriorParams::new(2.0, 1.0)).unwrap();
        assert_eq!(p.state_space().unwrap().dim(), 2);
        let p = reg.build("se_taylor", &PriorParams::new(1.0, 1.0)).unwrap();
        assert_eq!(p.state_space().unwrap().dim(), 6);
        let mut params = PriorParams::new(1.0, 1.0);
        params.nu = Some(2.5);
        assert_eq!(reg.build("matern", &params).unwrap().state_space().unwrap().dim(), 3);
    }

    #[test]
    fn unknown_or_incomplete() {
        let reg = PriorRegistry::builtin();
        let err = reg.build("periodic", &PriorParams::new(1.0, 1.0)).unwrap_err();
        assert!(err.to_string().contains("matern32"));
        assert!(reg.build("matern", &PriorParams::new(1.0, 1.0)).is_err());
        let mut params = PriorParams::new(1.0, 1.0);
        params.nu = Some(0.5);
        assert!(reg.build("matern32", &params).is_err());
    }

    #[test]
    fn custom_registration() {
        let mut reg = PriorRegistry::empty();
        reg.register("ou", |p| Ok(Arc::new(MaternPrior(MaternSpec::new(0.5, p.lengthscale, p.variance)?))));
        let p = reg.build("ou", &PriorParams::new(3.0, 2.0)).unwrap();
        let moved = p.with_lengthscale(1.0).unwrap();
        assert_eq!(moved.lengthscale(), 1.0);
        assert_eq!(moved.variance(), 2.0);
        assert_eq!(moved.family(), "matern");
    }
}
