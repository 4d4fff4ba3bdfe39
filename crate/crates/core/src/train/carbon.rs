use crate::error::{Error, Result};

/// Inputs to the training-footprint estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarbonQuery {
    pub gpu_count: f64,
    pub wall_hours: f64,
    /// Average draw per device, kW.
    pub device_power_kw: f64,
    /// Datacenter power usage effectiveness, at least 1.
    pub pue: f64,
    /// kgCO2e per kWh.
    pub grid_intensity: f64,
}

impl CarbonQuery {
    pub fn validate(&self) -> Result<()> {
        for (name, x) in [
            ("gpu_count", self.gpu_count),
            ("wall_hours", self.wall_hours),
            ("device_power_kw", self.device_power_kw),
        ] {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::ConfigInvalid(format!("{name} must be positive, got {x}")));
            }
        }
        if !(self.pue >= 1.0 && self.pue.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "pue must be at least 1, got {}",
                self.pue
            )));
        }
        if !(self.grid_intensity >= 0.0 && self.grid_intensity.is_finite()) {
            return Err(Error::ConfigInvalid(format!(
                "grid_intensity must be non-negative, got {}",
                self.grid_intensity
            )));
        }
        Ok(())
    }

    /// Facility energy in kWh, PUE included.
    pub fn energy_kwh(&self) -> f64 {
        self.gpu_count * self.wall_hours * self.device_power_kw * self.pue
    }

    /// Grid intensity (kg/kWh) at which this run would emit `target_kg`.
    pub fn implied_intensity(&self, target_kg: f64) -> f64 {
        target_kg / self.energy_kwh()
    }
}

/// kgCO2e = GPUs × hours × kW × PUE × intensity.
pub fn estimate_carbon(q: &CarbonQuery) -> f64 {
    q.energy_kwh() * q.grid_intensity
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_and_zero_cases() {
        let unit = CarbonQuery {
            gpu_count: 1.0,
            wall_hours: 1.0,
            device_power_kw: 1.0,
            pue: 1.0,
            grid_intensity: 1.0,
        };
        assert_eq!(estimate_carbon(&unit), 1.0);
        let clean = CarbonQuery {
            grid_intensity: 0.0,
            ..unit
        };
        assert_eq!(estimate_carbon(&clean), 0.0);
        assert!(clean.validate().is_ok());
        assert!(CarbonQuery { pue: 0.9, ..unit }.validate().is_err());
        assert!(CarbonQuery { gpu_count: 0.0, ..unit }.validate().is_err());
    }
}
