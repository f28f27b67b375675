//! Glucose units.
//!
//! Everything inside the toolkit is stored in mg/dL. The configured unit only
//! changes how values are displayed in tables and plots.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// mg/dL per mmol/L.
pub const MGDL_PER_MMOLL: f64 = 18.0182;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub enum GlucoseUnit {
    #[default]
    #[serde(rename = "mg/dL")]
    MgDl,
    #[serde(rename = "mmol/L")]
    MmolL,
}

impl GlucoseUnit {
    pub fn label(self) -> &'static str {
        match self {
            GlucoseUnit::MgDl => "mg/dL",
            GlucoseUnit::MmolL => "mmol/L",
        }
    }

    /// Converts a canonical mg/dL value into this unit.
    pub fn from_mgdl(self, mgdl: f64) -> f64 {
        match self {
            GlucoseUnit::MgDl => mgdl,
            GlucoseUnit::MmolL => mgdl / MGDL_PER_MMOLL,
        }
    }
}

impl fmt::Display for GlucoseUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for GlucoseUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "mg/dl" | "mgdl" => Ok(GlucoseUnit::MgDl),
            "mmol/l" | "mmoll" => Ok(GlucoseUnit::MmolL),
            other => Err(Error::InvalidValue(format!(
                "unknown glucose unit `{other}` (expected mg/dL or mmol/L)"
            ))),
        }
    }
}

/// Converts `value` between glucose units.
///
/// ```
/// use bgforecast::{convert_glucose, GlucoseUnit};
///
/// let mgdl = convert_glucose(1.0, GlucoseUnit::MmolL, GlucoseUnit::MgDl).unwrap();
/// assert_eq!(mgdl, 18.0182);
/// ```
pub fn convert_glucose(value: f64, from: GlucoseUnit, to: GlucoseUnit) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::InvalidValue(format!("glucose value {value} is not finite")));
    }
    Ok(match (from, to) {
        (a, b) if a == b => value,
        (GlucoseUnit::MmolL, GlucoseUnit::MgDl) => value * MGDL_PER_MMOLL,
        (GlucoseUnit::MgDl, GlucoseUnit::MmolL) => value / MGDL_PER_MMOLL,
        _ => unreachable!(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_and_factor() {
        assert_eq!(convert_glucose(100.0, GlucoseUnit::MgDl, GlucoseUnit::MgDl).unwrap(), 100.0);
        assert_eq!(convert_glucose(1.0, GlucoseUnit::MmolL, GlucoseUnit::MgDl).unwrap(), 18.0182);
        let back = convert_glucose(
            convert_glucose(250.0, GlucoseUnit::MgDl, GlucoseUnit::MmolL).unwrap(),
            GlucoseUnit::MmolL,
            GlucoseUnit::MgDl,
        )
        .unwrap();
        assert!((back - 250.0).abs() <= 250.0 * 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        assert!(convert_glucose(f64::NAN, GlucoseUnit::MgDl, GlucoseUnit::MmolL).is_err());
        assert!(convert_glucose(f64::INFINITY, GlucoseUnit::MmolL, GlucoseUnit::MgDl).is_err());
    }

    #[test]
    fn parses_labels() {
        assert_eq!("mmol/L".parse::<GlucoseUnit>().unwrap(), GlucoseUnit::MmolL);
        assert_eq!("MG/DL".parse::<GlucoseUnit>().unwrap(), GlucoseUnit::MgDl);
        assert!("moles".parse::<GlucoseUnit>().is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bijective(v in -1.0e6f64..1.0e6, a in any::<bool>()) {
            let (x, y) = if a {
                (GlucoseUnit::MgDl, GlucoseUnit::MmolL)
            } else {
                (GlucoseUnit::MmolL, GlucoseUnit::MgDl)
            };
            let back = convert_glucose(convert_glucose(v, x, y).unwrap(), y, x).unwrap();
            prop_assert!((back - v).abs() <= v.abs() * 1e-9 + f64::MIN_POSITIVE);
        }
    }
}
