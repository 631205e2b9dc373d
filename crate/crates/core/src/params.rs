//! The parameter vector of the four-tank model and its shipped presets.
//!
//! Units are fixed throughout the crate: grams, centimetres and seconds.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Parameters of the stochastic four-tank model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    /// Outlet cross-sections, cm².
    #[serde(rename = "a")]
    pub outlet_area: [f64; 4],
    /// Tank cross-sections, cm².
    #[serde(rename = "A")]
    pub tank_area: [f64; 4],
    /// Valve split fractions.
    pub gamma: [f64; 2],
    /// Water density, g/cm³.
    pub rho: f64,
    /// Gravity, cm/s².
    pub g_a: f64,
    /// Diffusion of the tank masses, g/√s.
    pub sigma: [f64; 4],
    /// Diffusion of the integrating disturbances, cm³/(s·√s).
    pub sigma_d: [f64; 4],
    /// Measurement noise variances, cm².
    pub r2: [f64; 4],
}

pub const RHO: f64 = 1.0;
pub const G_A: f64 = 981.0;

const R2_TUNED: [f64; 4] = [1.44e-2, 1.34e-2, 1.00e-5, 1.00e-5];
const SIGMA_IDENTIFIED: [f64; 4] = [10.07e-3, 13.09e-3, 12.50e-3, 16.62e-3];

/// Names accepted by [`ModelParams::preset`].
pub const PRESET_NAMES: [&str; 3] = ["nominal", "estimated", "filter-tuning"];

impl ModelParams {
    /// Nominal rig geometry with valves at 0.35. The diffusion is borrowed from
    /// the identified model since no nominal value exists.
    pub fn nominal() -> Self {
        Self {
            outlet_area: [1.131; 4],
            tank_area: [380.133; 4],
            gamma: [0.35, 0.35],
            rho: RHO,
            g_a: G_A,
            sigma: SIGMA_IDENTIFIED,
            sigma_d: [0.0; 4],
            r2: R2_TUNED,
        }
    }

    /// Maximum-likelihood estimates of the rig. Used as plant truth.
    pub fn estimated() -> Self {
        Self {
            outlet_area: [1.006, 1.249, 1.315, 1.548],
            tank_area: [379.837, 378.034, 466.300, 523.122],
            gamma: [0.260, 0.353],
            rho: RHO,
            g_a: G_A,
            sigma: SIGMA_IDENTIFIED,
            sigma_d: [0.0; 4],
            r2: R2_TUNED,
        }
    }

    /// Estimated geometry with the diffusion and noise levels used to tune the
    /// disturbance-augmented filters.
    pub fn filter_tuning() -> Self {
        Self {
            sigma: [7.25, 14.92, 8.98, 14.50],
            sigma_d: [0.47, 3.08, 3.92, 3.42],
            r2: R2_TUNED,
            ..Self::estimated()
        }
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "nominal" => Ok(Self::nominal()),
            "estimated" => Ok(Self::estimated()),
            "filter-tuning" => Ok(Self::filter_tuning()),
            other => Err(Error::Config(format!(
                "unknown preset `{other}` (expected one of {PRESET_NAMES:?} or a path)"
            ))),
        }
    }

    /// Copies `sigma`, `sigma_d` and `r2` from `tuning`, keeping the geometry.
    pub fn with_noise_of(&self, tuning: &ModelParams) -> Self {
        Self {
            sigma: tuning.sigma,
            sigma_d: tuning.sigma_d,
            r2: tuning.r2,
            ..*self
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::InvalidParams(what));
        for i in 0..4 {
            if !(self.outlet_area[i] > 0.0 && self.outlet_area[i].is_finite()) {
                return bad(format!(
                    "a[{}] = {} must be positive",
                    i + 1,
                    self.outlet_area[i]
                ));
            }
            if !(self.tank_area[i] > 0.0 && self.tank_area[i].is_finite()) {
                return bad(format!(
                    "A[{}] = {} must be positive",
                    i + 1,
                    self.tank_area[i]
                ));
            }
            if !(self.sigma[i] >= 0.0 && self.sigma[i].is_finite()) {
                return bad(format!(
                    "sigma[{}] = {} must be non-negative",
                    i + 1,
                    self.sigma[i]
                ));
            }
            if !(self.sigma_d[i] >= 0.0 && self.sigma_d[i].is_finite()) {
                return bad(format!(
                    "sigma_d[{}] = {} must be non-negative",
                    i + 1,
                    self.sigma_d[i]
                ));
            }
            if !(self.r2[i] > 0.0 && self.r2[i].is_finite()) {
                return bad(format!("r2[{}] = {} must be positive", i + 1, self.r2[i]));
            }
        }
        for j in 0..2 {
            if !(self.gamma[j] > 0.0 && self.gamma[j] < 1.0) {
                return bad(format!(
                    "gamma[{}] = {} must lie in (0, 1)",
                    j + 1,
                    self.gamma[j]
                ));
            }
        }
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad(format!("rho = {} must be positive", self.rho));
        }
        if !(self.g_a > 0.0 && self.g_a.is_finite()) {
            return bad(format!("g_a = {} must be positive", self.g_a));
        }
        Ok(())
    }

    /// Parses a parameter file: a TOML document with a `[params]` table.
    pub fn from_toml(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            params: ModelParams,
        }
        let file: File = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        file.params.validate()?;
        Ok(file.params)
    }

    pub fn to_toml(&self) -> String {
        #[derive(Serialize)]
        struct File<'a> {
            params: &'a ModelParams,
        }
        toml::to_string(&File { params: self }).expect("parameters always serialize")
    }

    /// Resolves a preset name or, failing that, a path to a parameter file.
    pub fn resolve(name_or_path: &str) -> Result<Self> {
        if PRESET_NAMES.contains(&name_or_path) {
            return Self::preset(name_or_path);
        }
        let path = std::path::Path::new(name_or_path);
        if path.exists() {
            let text = std::fs::read_to_string(path)?;
            return Self::from_toml(&text);
        }
        Self::preset(name_or_path)
    }
}

impl Default for ModelParams {
    fn default() -> Self {
        Self::estimated()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESET_NAMES {
            ModelParams::preset(name).unwrap().validate().unwrap();
        }
        assert!(ModelParams::preset("bogus").is_err());
    }

    #[test]
    fn rejects_out_of_range_valve() {
        let mut p = ModelParams::nominal();
        p.gamma[1] = 1.0;
        assert!(p.validate().is_err());
        p.gamma[1] = 0.5;
        p.tank_area[2] = -1.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn toml_round_trip_is_exact() {
        let p = ModelParams::filter_tuning();
        let back = ModelParams::from_toml(&p.to_toml()).unwrap();
        assert_eq!(p, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = ModelParams::nominal().to_toml() + "\nbogus = 1\n";
        // the extra key lands in the [params] table
        assert!(ModelParams::from_toml(&text).is_err());
    }
}
