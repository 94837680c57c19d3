//! Synthetic technology profiles.
//!
//! Three profiles stand in for 45/130/180nm-class processes. The
//! constants are not calibrated to any foundry; they are spread far
//! enough apart that a surrogate trained on one profile is measurably
//! wrong on another, which is what the transfer experiments need.

use super::CircuitError;
use serde::{Deserialize, Serialize};

/// Square-law constants for one device class.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DeviceClass {
    /// Transconductance coefficient k' in A/V².
    pub kprime: f64,
    /// Threshold voltage in V.
    pub vth: f64,
    /// Channel-length modulation λ in 1/V.
    pub lambda: f64,
}

/// One synthetic process: NMOS and PMOS square-law constants plus the
/// shared supply and per-W/L parasitic capacitance.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TechnologyProfile {
    pub name: String,
    pub nmos: DeviceClass,
    pub pmos: DeviceClass,
    /// Supply voltage in V.
    pub vdd: f64,
    /// Parasitic capacitance per unit W/L in F.
    pub c_unit: f64,
}

impl TechnologyProfile {
    pub fn validate(&self) -> Result<(), CircuitError> {
        let positive = [
            self.nmos.kprime,
            self.nmos.vth,
            self.nmos.lambda,
            self.pmos.kprime,
            self.pmos.vth,
            self.pmos.lambda,
            self.vdd,
            self.c_unit,
        ];
        let ok = positive.iter().all(|v| v.is_finite() && *v > 0.0)
            && self.vdd > self.nmos.vth
            && self.vdd > self.pmos.vth;
        if ok {
            Ok(())
        } else {
            Err(CircuitError::UnknownTechnology(format!(
                "invalid constants in profile '{}'",
                self.name
            )))
        }
    }
}

fn profile(name: &str) -> Option<TechnologyProfile> {
    let (nmos, pmos, vdd, c_unit) = match name {
        "synth45" => (
            DeviceClass { kprime: 180e-6, vth: 0.42, lambda: 0.30 },
            DeviceClass { kprime: 90e-6, vth: 0.45, lambda: 0.35 },
            1.0,
            0.05e-15,
        ),
        "synth130" => (
            DeviceClass { kprime: 120e-6, vth: 0.38, lambda: 0.15 },
            DeviceClass { kprime: 55e-6, vth: 0.42, lambda: 0.18 },
            1.2,
            0.12e-15,
        ),
        "synth180" => (
            DeviceClass { kprime: 90e-6, vth: 0.45, lambda: 0.08 },
            DeviceClass { kprime: 40e-6, vth: 0.50, lambda: 0.10 },
            1.8,
            0.25e-15,
        ),
        _ => return None,
    };
    Some(TechnologyProfile {
        name: name.to_string(),
        nmos,
        pmos,
        vdd,
        c_unit,
    })
}

/// Looks up a technology profile by name.
pub fn technology(name: &str) -> Result<TechnologyProfile, CircuitError> {
    profile(name).ok_or_else(|| CircuitError::UnknownTechnology(name.to_string()))
}

/// All registered profile names.
pub fn technology_names() -> &'static [&'static str] {
    &["synth45", "synth130", "synth180"]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_profiles_validate() {
        for name in technology_names() {
            technology(name).unwrap().validate().unwrap();
        }
    }

    #[test]
    fn unknown_profile_is_an_error() {
        assert!(technology("tsmc7").is_err());
    }

    #[test]
    fn profiles_are_distinct() {
        let a = technology("synth45").unwrap();
        let b = technology("synth130").unwrap();
        let c = technology("synth180").unwrap();
        assert_ne!(a.nmos.kprime, b.nmos.kprime);
        assert_ne!(b.vdd, c.vdd);
    }
}
