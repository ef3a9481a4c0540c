use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Every absolute constant that the bound formulas leave unnamed.
///
/// Defaults are 1 except `c_expsum` (must lie in (0, 1)) and the class
/// limits `beta0`, `gamma0`. Calibrated values are produced by the
/// `calibrate_*` routines in [`crate::bounds`], [`crate::determinant`] and
/// [`crate::dynkin`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConstantsConfig {
    pub c_main1: f64,
    pub c_main: f64,
    pub c_t1: f64,
    pub c_delta01: f64,
    pub c_t2: f64,
    pub c_mainso: f64,
    /// `c_gamma` of the strong-coupling corollary.
    pub c_cor: f64,
    #[serde(rename = "C1_prop14")]
    pub c1_prop14: f64,
    #[serde(rename = "C2_prop14")]
    pub c2_prop14: f64,
    #[serde(rename = "C_expsum")]
    pub c_expsum_prefactor: f64,
    /// Exponent fraction `c` of the simplified exponential-sum bound.
    pub c_expsum: f64,
    #[serde(rename = "C_dynkin")]
    pub c_dynkin: f64,
    #[serde(rename = "C1_dynkin")]
    pub c1_dynkin: f64,
    /// Prefactor of the coefficient bound recovered from a dbar-small extension.
    #[serde(rename = "C_recover")]
    pub c_recover: f64,
    pub beta0: f64,
    pub gamma0: f64,
}

impl Default for ConstantsConfig {
    fn default() -> Self {
        Self {
            c_main1: 1.0,
            c_main: 1.0,
            c_t1: 1.0,
            c_delta01: 1.0,
            c_t2: 1.0,
            c_mainso: 1.0,
            c_cor: 1.0,
            c1_prop14: 1.0,
            c2_prop14: 1.0,
            c_expsum_prefactor: 1.0,
            c_expsum: 0.5,
            c_dynkin: 1.0,
            c1_dynkin: 1.0,
            c_recover: 1.0,
            beta0: 10.0,
            gamma0: 0.95,
        }
    }
}

impl ConstantsConfig {
    pub fn validate(&self) -> Result<()> {
        let entries = [
            ("c_main1", self.c_main1),
            ("c_main", self.c_main),
            ("c_t1", self.c_t1),
            ("c_delta01", self.c_delta01),
            ("c_t2", self.c_t2),
            ("c_mainso", self.c_mainso),
            ("c_cor", self.c_cor),
            ("C1_prop14", self.c1_prop14),
            ("C2_prop14", self.c2_prop14),
            ("C_expsum", self.c_expsum_prefactor),
            ("c_expsum", self.c_expsum),
            ("C_dynkin", self.c_dynkin),
            ("C1_dynkin", self.c1_dynkin),
            ("C_recover", self.c_recover),
            ("beta0", self.beta0),
            ("gamma0", self.gamma0),
        ];
        for (name, v) in entries {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!("constant {name} must be positive and finite, got {v}")));
            }
        }
        if self.c_expsum >= 1.0 {
            return Err(invalid("c_expsum must lie in (0, 1)"));
        }
        if !(0.5..1.0).contains(&self.gamma0) {
            return Err(invalid("gamma0 must lie in [1/2, 1)"));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: Self = serde_json::from_str(text)?;
        c.validate()?;
        Ok(c)
    }
}
