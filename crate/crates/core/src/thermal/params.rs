use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Physical constants of the coolant loop. Temperatures in °C, masses in kg,
/// heat capacities in J/(kg·K), conductances in W/K, flows in kg/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "")]
pub struct ThermalParams<T: Real> {
    pub cphx_wall_mass: T,
    pub llhx_wall_mass: T,
    pub tank_fluid_mass: T,
    pub cphx_fluid_mass: T,
    pub llhx_hot_fluid_mass: T,
    pub llhx_cold_fluid_mass: T,
    pub c_fluid: T,
    pub c_wall: T,
    pub ha_cphx: T,
    pub ha_llhx_hot: T,
    pub ha_llhx_cold: T,
    pub sink_temp: T,
    pub pump_flow: T,
    pub sink_flow: T,
    /// Valve slew limit on independent branch flows, kg/s².
    pub slew_limit: T,
    pub wall_temp0: T,
    pub fluid_temp0: T,
    pub sink_side_temp0: T,
    pub wall_temp_max: T,
    pub fluid_temp_max: T,
    pub sink_side_temp_max: T,
}

impl<T: Real> Default for ThermalParams<T> {
    fn default() -> Self {
        let l = T::lit;
        Self {
            cphx_wall_mass: l(1.15),
            llhx_wall_mass: l(1.2),
            tank_fluid_mass: l(2.01),
            cphx_fluid_mass: l(0.2),
            llhx_hot_fluid_mass: l(0.5),
            llhx_cold_fluid_mass: l(0.5),
            // 50/50 water–ethylene glycol; aluminium walls.
            c_fluid: l(3680.0),
            c_wall: l(900.0),
            ha_cphx: l(500.0),
            ha_llhx_hot: l(1000.0),
            ha_llhx_cold: l(1000.0),
            sink_temp: l(15.0),
            pump_flow: l(0.4),
            sink_flow: l(0.2),
            slew_limit: l(0.05),
            wall_temp0: l(20.0),
            fluid_temp0: l(20.0),
            sink_side_temp0: l(15.0),
            wall_temp_max: l(45.0),
            fluid_temp_max: l(45.0),
            sink_side_temp_max: l(45.0),
        }
    }
}

impl<T: Real> ThermalParams<T> {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("cphx_wall_mass", self.cphx_wall_mass),
            ("llhx_wall_mass", self.llhx_wall_mass),
            ("tank_fluid_mass", self.tank_fluid_mass),
            ("cphx_fluid_mass", self.cphx_fluid_mass),
            ("llhx_hot_fluid_mass", self.llhx_hot_fluid_mass),
            ("llhx_cold_fluid_mass", self.llhx_cold_fluid_mass),
            ("c_fluid", self.c_fluid),
            ("c_wall", self.c_wall),
            ("ha_cphx", self.ha_cphx),
            ("ha_llhx_hot", self.ha_llhx_hot),
            ("ha_llhx_cold", self.ha_llhx_cold),
            ("pump_flow", self.pump_flow),
            ("sink_flow", self.sink_flow),
            ("slew_limit", self.slew_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > T::zero()) {
                return Err(Error::Validation(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        let bounds = [
            ("wall", self.wall_temp0, self.wall_temp_max),
            ("fluid", self.fluid_temp0, self.fluid_temp_max),
            ("sink-side", self.sink_side_temp0, self.sink_side_temp_max),
        ];
        for (name, t0, tmax) in bounds {
            if !(t0.is_finite() && tmax.is_finite() && tmax > t0) {
                return Err(Error::Validation(format!(
                    "{name} bound {tmax} must exceed its initial value {t0}"
                )));
            }
        }
        if !self.sink_temp.is_finite() {
            return Err(Error::Validation("sink temperature must be finite".into()));
        }
        Ok(())
    }

    /// Lossy conversion to another precision.
    pub fn cast<U: Real>(&self) -> ThermalParams<U> {
        let c = |x: T| U::lit(x.to_f64_lossy());
        ThermalParams {
            cphx_wall_mass: c(self.cphx_wall_mass),
            llhx_wall_mass: c(self.llhx_wall_mass),
            tank_fluid_mass: c(self.tank_fluid_mass),
            cphx_fluid_mass: c(self.cphx_fluid_mass),
            llhx_hot_fluid_mass: c(self.llhx_hot_fluid_mass),
            llhx_cold_fluid_mass: c(self.llhx_cold_fluid_mass),
            c_fluid: c(self.c_fluid),
            c_wall: c(self.c_wall),
            ha_cphx: c(self.ha_cphx),
            ha_llhx_hot: c(self.ha_llhx_hot),
            ha_llhx_cold: c(self.ha_llhx_cold),
            sink_temp: c(self.sink_temp),
            pump_flow: c(self.pump_flow),
            sink_flow: c(self.sink_flow),
            slew_limit: c(self.slew_limit),
            wall_temp0: c(self.wall_temp0),
            fluid_temp0: c(self.fluid_temp0),
            sink_side_temp0: c(self.sink_side_temp0),
            wall_temp_max: c(self.wall_temp_max),
            fluid_temp_max: c(self.fluid_temp_max),
            sink_side_temp_max: c(self.sink_side_temp_max),
        }
    }
}

/// Per-CPHX heat loads in kW.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent, bound = "")]
pub struct LoadVector<T: Real>(pub Vec<T>);

impl<T: Real> LoadVector<T> {
    pub fn new(kw: Vec<T>) -> Result<Self> {
        if let Some(bad) = kw.iter().find(|x| !(x.is_finite() && **x >= T::zero())) {
            return Err(Error::Validation(format!(
                "heat load {bad} must be finite and >= 0"
            )));
        }
        Ok(Self(kw))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn kw(&self) -> &[T] {
        &self.0
    }

    pub fn watts(&self) -> Vec<T> {
        self.0.iter().map(|&x| x * T::lit(1000.0)).collect()
    }

    pub fn total_kw(&self) -> T {
        self.0.iter().copied().sum()
    }

    pub fn scaled(&self, factor: T) -> Self {
        Self(self.0.iter().map(|&x| x * factor).collect())
    }
}
