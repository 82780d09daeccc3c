//! Mechanistic choke model: homogeneous no-slip multiphase flow through a
//! restriction with a choked-flow clamp on the pressure ratio.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::data::{feature, water_fraction, N_FEATURES};
use crate::diff::dual::Scalar;

/// Universal gas constant, J/(mol K).
pub const GAS_CONSTANT: f64 = 8.31446;
/// Standard-condition pressure, Pa.
pub const P_STANDARD: f64 = 1.01325e5;
/// Standard-condition temperature, K.
pub const T_STANDARD: f64 = 288.15;
/// Conversion from Sm³/s to Sm³/h.
pub const SECONDS_PER_HOUR: f64 = 3600.0;

/// Names of the six physical parameters, in parameter-vector order.
pub const PHYSICAL_NAMES: [&str; 6] = ["rho_oil", "rho_wat", "kappa", "M_gas", "p_cr", "C_D"];

/// Hard bounds enforced after every optimizer step.
pub const PHYSICAL_BOUNDS: [(f64, f64); 6] = [
    (500.0, 1100.0), // rho_oil [kg/m3]
    (950.0, 1150.0), // rho_wat [kg/m3]
    (1.05, 1.7),     // kappa
    (0.012, 0.05),   // M_gas [kg/mol]
    (0.3, 0.95),     // p_cr
    (0.1, 1.5),      // C_D
];

static NEGATIVE_RADICAND: AtomicU64 = AtomicU64::new(0);

/// Number of evaluations, process-wide, whose radicand was negative and got
/// clamped to zero flow.
pub fn negative_radicand_count() -> u64 {
    NEGATIVE_RADICAND.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanisticParams {
    pub rho_oil: f64,
    pub rho_wat: f64,
    pub kappa: f64,
    pub m_gas: f64,
    pub p_cr: f64,
    pub c_d: f64,
}

impl MechanisticParams {
    pub fn to_array(&self) -> [f64; 6] {
        [self.rho_oil, self.rho_wat, self.kappa, self.m_gas, self.p_cr, self.c_d]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            rho_oil: a[0],
            rho_wat: a[1],
            kappa: a[2],
            m_gas: a[3],
            p_cr: a[4],
            c_d: a[5],
        }
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        PHYSICAL_NAMES
            .iter()
            .position(|n| *n == name)
            .map(|i| self.to_array()[i])
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<(), ModelError> {
        let i = PHYSICAL_NAMES
            .iter()
            .position(|n| *n == name)
            .ok_or_else(|| ModelError::UnknownParameter(name.to_string()))?;
        let mut a = self.to_array();
        a[i] = value;
        *self = Self::from_array(a);
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let a = self.to_array();
        if a.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(ModelError::InvalidParameters(
                "mechanistic parameters must be strictly positive".into(),
            ));
        }
        if self.p_cr >= 1.0 {
            return Err(ModelError::InvalidParameters("p_cr must lie in (0, 1)".into()));
        }
        if self.c_d > 1.5 {
            return Err(ModelError::InvalidParameters("C_D must lie in (0, 1.5]".into()));
        }
        Ok(())
    }
}

/// Gaussian priors of the physical parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalPriors {
    pub mean: MechanisticParams,
    pub std: MechanisticParams,
}

impl Default for PhysicalPriors {
    fn default() -> Self {
        Self {
            mean: MechanisticParams {
                rho_oil: 800.0,
                rho_wat: 1000.0,
                kappa: 1.3,
                m_gas: 0.020,
                p_cr: 0.55,
                c_d: 0.84,
            },
            std: MechanisticParams {
                rho_oil: 100.0,
                rho_wat: 25.0,
                kappa: 0.1,
                m_gas: 0.004,
                p_cr: 0.1,
                c_d: 0.2,
            },
        }
    }
}

impl PhysicalPriors {
    /// Default priors with the water density moved to seawater (1025 kg/m³).
    pub fn seawater() -> Self {
        let mut p = Self::default();
        p.mean.rho_wat = 1025.0;
        p
    }
}

/// Effective flow area `A2(u) = A_max (c1 u + c2 u² + c3 u³)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChokeGeometry {
    /// Fully open effective area in m².
    pub a_max: f64,
    pub c1: f64,
    pub c2: f64,
    pub c3: f64,
}

impl Default for ChokeGeometry {
    fn default() -> Self {
        Self {
            a_max: 3.0e-3,
            c1: 0.1,
            c2: 0.0,
            c3: 0.9,
        }
    }
}

impl ChokeGeometry {
    pub fn validate(&self) -> Result<(), ModelError> {
        let sum = self.c1 + self.c2 + self.c3;
        if !(self.a_max > 0.0) || self.c1 < 0.0 || self.c2 < 0.0 || self.c3 < 0.0 || (sum - 1.0).abs() > 1e-9 {
            return Err(ModelError::InvalidParameters(
                "choke geometry needs a_max > 0 and nonnegative c1 + c2 + c3 = 1".into(),
            ));
        }
        Ok(())
    }
}

/// Effective flow area at choke opening `u` in m².
pub fn effective_area(u: f64, geometry: &ChokeGeometry) -> Result<f64, ModelError> {
    if !(0.0..=1.0).contains(&u) {
        return Err(ModelError::ChokeOutOfRange(u));
    }
    let poly = u * (geometry.c1 + u * (geometry.c2 + u * geometry.c3));
    Ok(geometry.a_max * poly)
}

/// Fluid-property parameters of the choke equation (all but the discharge
/// factor).
#[derive(Debug, Clone, Copy)]
pub(crate) struct Fluid<T> {
    pub rho_oil: T,
    pub rho_wat: T,
    pub kappa: T,
    pub m_gas: T,
    pub p_cr: T,
}

/// Volumetric flow at standard conditions in Sm³/h.
///
/// `discharge` multiplies the geometric area: the discharge coefficient for
/// the mechanistic and error models, the network multiplier for the area
/// model.
pub(crate) fn choke_flow<T: Scalar>(
    fluid: &Fluid<T>,
    discharge: T,
    area: f64,
    x: &[f64; N_FEATURES],
) -> Result<T, ModelError> {
    let p1 = x[feature::P_UPSTREAM];
    let p2 = x[feature::P_DOWNSTREAM];
    let t1 = x[feature::T_UPSTREAM];
    if !(p1 > 0.0) || !(p2 > 0.0) {
        return Err(ModelError::NonPositivePressure { p1, p2 });
    }
    if !(t1 > 0.0) {
        return Err(ModelError::InvalidInput(format!("temperature {t1} not positive")));
    }
    let eta_oil = x[feature::ETA_OIL];
    let eta_gas = x[feature::ETA_GAS];
    let eta_wat = water_fraction(x);

    let ratio = p2 / p1;
    let p_r = if fluid.p_cr.value() >= ratio { fluid.p_cr } else { T::cst(ratio) };

    let rho_gas_1 = fluid.m_gas.scale(p1 / (GAS_CONSTANT * t1));
    let rho_gas_2 = rho_gas_1 * (p_r.ln() / fluid.kappa).exp();
    let liquid_specific_volume = fluid.rho_oil.recip().scale(eta_oil) + fluid.rho_wat.recip().scale(eta_wat);
    let rho_2 = (rho_gas_2.recip().scale(eta_gas) + liquid_specific_volume).recip();
    let rho_gas_sc = fluid.m_gas.scale(P_STANDARD / (GAS_CONSTANT * T_STANDARD));
    let rho_sc = (rho_gas_sc.recip().scale(eta_gas) + liquid_specific_volume).recip();

    let one = T::cst(1.0);
    let gas_term = (fluid.kappa / (fluid.kappa - one)).scale(eta_gas)
        * (rho_gas_1.recip() - p_r / rho_gas_2);
    let liquid_term = liquid_specific_volume * (one - p_r);
    let radicand = (rho_2 * rho_2).scale(2.0 * p1) * (gas_term + liquid_term);

    let r = radicand.value();
    if !r.is_finite() {
        return Err(ModelError::NonFinite("choke radicand".into()));
    }
    if r < 0.0 {
        NEGATIVE_RADICAND.fetch_add(1, Ordering::Relaxed);
        return Ok(T::cst(0.0));
    }
    if r == 0.0 || area == 0.0 {
        return Ok(T::cst(0.0));
    }
    let mass_flow = discharge.scale(area) * radicand.sqrt();
    Ok((mass_flow / rho_sc).scale(SECONDS_PER_HOUR))
}

/// Flow rate of the mechanistic model with the given physical parameters.
pub fn mechanistic_flow(
    params: &MechanisticParams,
    geometry: &ChokeGeometry,
    x: &[f64; N_FEATURES],
) -> Result<f64, ModelError> {
    let area = effective_area(x[feature::CHOKE], geometry)?;
    let fluid = Fluid {
        rho_oil: params.rho_oil,
        rho_wat: params.rho_wat,
        kappa: params.kappa,
        m_gas: params.m_gas,
        p_cr: params.p_cr,
    };
    choke_flow(&fluid, params.c_d, area, x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_endpoints_and_midpoint() {
        let g = ChokeGeometry::default();
        assert_eq!(effective_area(0.0, &g).unwrap(), 0.0);
        assert!((effective_area(1.0, &g).unwrap() - g.a_max).abs() < 1e-18);
        // 3e-3 * (0.1 * 0.5 + 0.9 * 0.125) = 3e-3 * 0.1625
        assert!((effective_area(0.5, &g).unwrap() - 4.875e-4).abs() < 1e-15);
        assert!(effective_area(1.2, &g).is_err());
        assert!(effective_area(-0.1, &g).is_err());
    }

    #[test]
    fn closed_choke_and_zero_drop_give_zero_flow() {
        let p = PhysicalPriors::default().mean;
        let g = ChokeGeometry::default();
        let mut x = [0.0, 150e5, 100e5, 350.0, 0.3, 0.6];
        assert_eq!(mechanistic_flow(&p, &g, &x).unwrap(), 0.0);
        x[0] = 0.5;
        x[2] = 150e5;
        assert_eq!(mechanistic_flow(&p, &g, &x).unwrap(), 0.0);
        x[2] = 100e5;
        assert!(mechanistic_flow(&p, &g, &x).unwrap() > 0.0);
        x[1] = -1.0;
        assert!(matches!(
            mechanistic_flow(&p, &g, &x),
            Err(ModelError::NonPositivePressure { .. })
        ));
    }

    #[test]
    fn water_density_anchors() {
        assert_eq!(PhysicalPriors::default().mean.rho_wat, 1000.0);
        assert_eq!(PhysicalPriors::seawater().mean.rho_wat, 1025.0);
    }

    #[test]
    fn flow_increases_with_choke_opening() {
        let p = PhysicalPriors::default().mean;
        let g = ChokeGeometry::default();
        let mut last = -1.0;
        for i in 0..=100 {
            let x = [i as f64 / 100.0, 150e5, 100e5, 350.0, 0.3, 0.6];
            let q = mechanistic_flow(&p, &g, &x).unwrap();
            assert!(q >= last);
            last = q;
        }
    }
}
