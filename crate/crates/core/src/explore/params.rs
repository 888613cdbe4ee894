use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_C_CONF: f64 = 1.0;

/// Confidence widths, stopping threshold and tolerance shared by
/// exploration and recovery.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceParams {
    pub iota1: f64,
    pub iota2: f64,
    pub iota_t: f64,
    pub iota_nu: f64,
    pub eps_pe: f64,
    pub eps0: f64,
    pub c_conf: f64,
    pub k_max: u64,
    pub eta: f64,
}

/// Episode cap `10 * ceil(S^2 A (A + H) eps_pe^-2 ln(S A H / (eps_pe eta)))`.
pub fn default_k_max(states: usize, actions: usize, horizon: usize, eps_pe: f64, eta: f64) -> u64 {
    let (s, a, h) = (states as f64, actions as f64, horizon as f64);
    let log = (s * a * h / (eps_pe * eta)).ln().max(1.0);
    let bound = s * s * a * (a + h) * log / (eps_pe * eps_pe);
    (10.0 * bound.ceil()).clamp(1.0, u64::MAX as f64) as u64
}

/// Inputs from which [`ConfidenceParams`] are resolved for a given model size.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamSpec {
    pub eps_pe: f64,
    pub eps0: f64,
    pub eta: f64,
    pub c_conf: f64,
    /// Overrides the default episode cap.
    pub k_max: Option<u64>,
}

impl ParamSpec {
    pub fn new(eps_pe: f64, eps0: f64, eta: f64) -> Self {
        ParamSpec { eps_pe, eps0, eta, c_conf: DEFAULT_C_CONF, k_max: None }
    }

    /// Widths from the logarithmic schedule:
    /// `iota1 = iota2 = c ln(12 S A K / eta)`, `iota_T = c S ln(12 S A K / eta)`,
    /// `iota_nu = c S ln(12 K / eta)`, where `K` is the episode cap.
    pub fn resolve(&self, states: usize, actions: usize, horizon: usize) -> Result<ConfidenceParams> {
        let ParamSpec { eps_pe, eps0, eta, c_conf, k_max } = *self;
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::InvalidParameter(format!("eta = {eta} must lie in (0,1)")));
        }
        if !(eps_pe > 0.0) {
            return Err(Error::InvalidParameter(format!("eps_pe = {eps_pe} must be positive")));
        }
        let k_max = k_max.unwrap_or_else(|| default_k_max(states, actions, horizon, eps_pe, eta));
        let (s, sa, k) = (states as f64, (states * actions) as f64, k_max as f64);
        let pair_log = (12.0 * sa * k / eta).ln();
        let params = ConfidenceParams {
            iota1: c_conf * pair_log,
            iota2: c_conf * pair_log,
            iota_t: c_conf * s * pair_log,
            iota_nu: c_conf * s * (12.0 * k / eta).ln(),
            eps_pe,
            eps0,
            c_conf,
            k_max,
            eta,
        };
        params.validate()?;
        Ok(params)
    }
}

impl ConfidenceParams {
    pub fn validate(&self) -> Result<()> {
        let widths = [
            ("iota1", self.iota1),
            ("iota2", self.iota2),
            ("iota_t", self.iota_t),
            ("iota_nu", self.iota_nu),
            ("eps0", self.eps0),
            ("c_conf", self.c_conf),
        ];
        for (name, v) in widths {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} = {v} must be positive")));
            }
        }
        if !(self.eps_pe > 0.0 && self.eps_pe <= 1.0) {
            return Err(Error::InvalidParameter(format!("eps_pe = {} must lie in (0,1]", self.eps_pe)));
        }
        if self.k_max < 1 {
            return Err(Error::InvalidParameter("k_max must be at least 1".into()));
        }
        Ok(())
    }
}
