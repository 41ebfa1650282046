//! Battery arbitrage environment: deterministic state of charge driven by the
//! agent, stochastic hourly prices, linear trading reward with degradation.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Slack allowed on state-of-charge and power bounds.
pub const FEASIBILITY_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Bound {
    SocMin,
    SocMax,
    PowerMin,
    PowerMax,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Bound::SocMin => "soc_min",
            Bound::SocMax => "soc_max",
            Bound::PowerMin => "power lower bound 0",
            Bound::PowerMax => "p_max",
        })
    }
}

#[derive(Clone, Debug, Error, PartialEq)]
pub enum EnvError {
    #[error("invalid battery parameters: {0}")]
    InvalidParams(String),
    #[error("action violates {bound}: value {value} (limit {limit})")]
    Infeasible { bound: Bound, value: f64, limit: f64 },
    #[error("trading dimension {dim} out of range for {len} prices")]
    TradingDim { dim: usize, len: usize },
}

fn one() -> f64 {
    1.0
}

/// Battery constants. Energies in MWh, powers in MW, `c_deg` in $/MWh.
///
/// Defaults are illustrative (1 MWh, 0.5 MW, 90 % one-way efficiency), not
/// calibrated to any particular asset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatteryParams {
    pub capacity: f64,
    pub soc_min: f64,
    pub soc_max: f64,
    pub p_max: f64,
    pub eta_c: f64,
    pub eta_d: f64,
    #[serde(default)]
    pub c_deg: f64,
    #[serde(default = "one")]
    pub dt: f64,
    /// Initial state of charge for episodes.
    #[serde(default)]
    pub soc_init: f64,
}

impl Default for BatteryParams {
    fn default() -> Self {
        Self {
            capacity: 1.0,
            soc_min: 0.0,
            soc_max: 1.0,
            p_max: 0.5,
            eta_c: 0.9,
            eta_d: 0.9,
            c_deg: 1.0,
            dt: 1.0,
            soc_init: 0.0,
        }
    }
}

impl BatteryParams {
    /// Lossless 1 MWh / 1 MW battery with no degradation cost.
    pub fn ideal() -> Self {
        Self {
            p_max: 1.0,
            eta_c: 1.0,
            eta_d: 1.0,
            c_deg: 0.0,
            ..Self::default()
        }
    }

    /// Checks the parameter ranges. A battery with `soc_min == soc_max` is
    /// accepted; it can never move energy.
    pub fn validate(&self) -> Result<(), EnvError> {
        let bad = |m: &str| Err(EnvError::InvalidParams(m.to_string()));
        let all = [
            self.capacity,
            self.soc_min,
            self.soc_max,
            self.p_max,
            self.eta_c,
            self.eta_d,
            self.c_deg,
            self.dt,
            self.soc_init,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("all parameters must be finite");
        }
        if !(0.0 <= self.soc_min && self.soc_min <= self.soc_max && self.soc_max <= self.capacity) {
            return bad("need 0 <= soc_min <= soc_max <= capacity");
        }
        if !(self.p_max > 0.0) {
            return bad("p_max must be positive");
        }
        if !(self.eta_c > 0.0 && self.eta_c <= 1.0 && self.eta_d > 0.0 && self.eta_d <= 1.0) {
            return bad("efficiencies must lie in (0, 1]");
        }
        if self.c_deg < 0.0 {
            return bad("c_deg must be non-negative");
        }
        if !(self.dt > 0.0) {
            return bad("dt must be positive");
        }
        if self.soc_init < self.soc_min || self.soc_init > self.soc_max {
            return bad("soc_init must lie within [soc_min, soc_max]");
        }
        Ok(())
    }

    /// Change in stored energy over one step.
    pub fn soc_delta(&self, act: HourlyAction) -> f64 {
        self.eta_c * act.p_c * self.dt - act.p_d * self.dt / self.eta_d
    }
}

/// Reward per MW of charge and of discharge at price `price`:
/// `reward = coef_c·p_c + coef_d·p_d`.
pub fn reward_coefficients(price: f64, battery: &BatteryParams) -> (f64, f64) {
    (
        -(price + battery.c_deg) * battery.dt,
        (price - battery.c_deg) * battery.dt,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub soc: f64,
    pub prices: Vec<f64>,
    pub time: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct HourlyAction {
    pub p_c: f64,
    pub p_d: f64,
}

impl HourlyAction {
    pub const IDLE: Self = Self { p_c: 0.0, p_d: 0.0 };

    pub fn new(p_c: f64, p_d: f64) -> Self {
        Self { p_c, p_d }
    }

    pub fn is_idle(&self) -> bool {
        self.p_c == 0.0 && self.p_d == 0.0
    }
}

fn check_power(act: HourlyAction, battery: &BatteryParams) -> Result<(), EnvError> {
    for value in [act.p_c, act.p_d] {
        if !(value >= -FEASIBILITY_TOL) {
            return Err(EnvError::Infeasible {
                bound: Bound::PowerMin,
                value,
                limit: 0.0,
            });
        }
        if value > battery.p_max + FEASIBILITY_TOL {
            return Err(EnvError::Infeasible {
                bound: Bound::PowerMax,
                value,
                limit: battery.p_max,
            });
        }
    }
    Ok(())
}

/// Next state of charge, or the violated bound. Values within tolerance of a
/// bound are snapped onto it.
fn next_soc(soc: f64, act: HourlyAction, battery: &BatteryParams) -> Result<f64, EnvError> {
    check_power(act, battery)?;
    let next = soc + battery.soc_delta(act);
    if next < battery.soc_min - FEASIBILITY_TOL {
        return Err(EnvError::Infeasible {
            bound: Bound::SocMin,
            value: next,
            limit: battery.soc_min,
        });
    }
    if next > battery.soc_max + FEASIBILITY_TOL {
        return Err(EnvError::Infeasible {
            bound: Bound::SocMax,
            value: next,
            limit: battery.soc_max,
        });
    }
    Ok(next.clamp(battery.soc_min, battery.soc_max))
}

/// Applies one hourly action, settling against `obs.prices[trading_dim]`.
/// Returns `(next_soc, reward)`.
pub fn step(
    obs: &Observation,
    act: HourlyAction,
    battery: &BatteryParams,
    trading_dim: usize,
) -> Result<(f64, f64), EnvError> {
    let price = *obs.prices.get(trading_dim).ok_or(EnvError::TradingDim {
        dim: trading_dim,
        len: obs.prices.len(),
    })?;
    let soc = next_soc(obs.soc, act, battery)?;
    let (cc, cd) = reward_coefficients(price, battery);
    Ok((soc, cc * act.p_c + cd * act.p_d))
}

/// First infeasible hour of a plan.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub hour: usize,
    pub error: EnvError,
}

/// Runs the state-of-charge recursion over `plan` and returns the final SoC,
/// or the first hour whose action is infeasible.
pub fn validate_plan(soc0: f64, plan: &[HourlyAction], battery: &BatteryParams) -> Result<f64, Violation> {
    let mut soc = soc0;
    for (hour, &act) in plan.iter().enumerate() {
        soc = next_soc(soc, act, battery).map_err(|error| Violation { hour, error })?;
    }
    Ok(soc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn obs(soc: f64, price: f64) -> Observation {
        Observation {
            soc,
            prices: vec![price],
            time: 0,
        }
    }

    #[test]
    fn idle_is_neutral() {
        let b = BatteryParams::default();
        assert_eq!(step(&obs(0.3, 55.0), HourlyAction::IDLE, &b, 0).unwrap(), (0.3, 0.0));
    }

    #[test]
    fn charge_formula() {
        let b = BatteryParams {
            eta_c: 0.9,
            p_max: 1.0,
            c_deg: 0.0,
            ..BatteryParams::default()
        };
        let (soc, r) = step(&obs(0.0, 10.0), HourlyAction::new(1.0, 0.0), &b, 0).unwrap();
        assert!((soc - 0.9).abs() < 1e-15);
        assert_eq!(r, -10.0);
    }

    #[test]
    fn discharge_below_min_is_rejected() {
        let b = BatteryParams::default();
        let err = step(&obs(0.0, 10.0), HourlyAction::new(0.0, 0.5), &b, 0).unwrap_err();
        assert!(matches!(
            err,
            EnvError::Infeasible {
                bound: Bound::SocMin,
                ..
            }
        ));
    }

    #[test]
    fn trading_dim_selects_price() {
        let b = BatteryParams::ideal();
        let o = Observation {
            soc: 1.0,
            prices: vec![5.0, 30.0],
            time: 3,
        };
        assert_eq!(step(&o, HourlyAction::new(0.0, 1.0), &b, 1).unwrap().1, 30.0);
        assert!(matches!(
            step(&o, HourlyAction::IDLE, &b, 2),
            Err(EnvError::TradingDim { .. })
        ));
    }

    #[test]
    fn plan_violation_at_crossing_hour() {
        let b = BatteryParams {
            capacity: 10.0,
            soc_max: 10.0,
            p_max: 1.5,
            eta_c: 0.8,
            ..BatteryParams::default()
        };
        let soc0 = 1.0;
        // Hours charged before crossing: ceil((soc_max - soc0) / (eta_c p_max dt)).
        let crossing = ((b.soc_max - soc0) / (b.eta_c * b.p_max * b.dt)).ceil() as usize;
        let plan = vec![HourlyAction::new(b.p_max, 0.0); crossing + 3];
        let v = validate_plan(soc0, &plan, &b).unwrap_err();
        assert_eq!(v.hour + 1, crossing);
        assert!(matches!(
            v.error,
            EnvError::Infeasible {
                bound: Bound::SocMax,
                ..
            }
        ));
        assert_eq!(validate_plan(soc0, &[], &b), Ok(soc0));
    }

    #[test]
    fn small_optimal_plan_is_feasible() {
        let b = BatteryParams::ideal();
        let plan = [HourlyAction::new(1.0, 0.0), HourlyAction::new(0.0, 1.0)];
        assert_eq!(validate_plan(0.0, &plan, &b), Ok(0.0));
    }

    #[test]
    fn zero_capacity_battery_is_valid_but_inert() {
        let b = BatteryParams {
            capacity: 0.0,
            soc_min: 0.0,
            soc_max: 0.0,
            ..BatteryParams::ideal()
        };
        b.validate().unwrap();
        assert!(step(&obs(0.0, 10.0), HourlyAction::new(0.1, 0.0), &b, 0).is_err());
    }

    fn battery() -> impl Strategy<Value = BatteryParams> {
        (0.5f64..1.0, 0.5f64..1.0, 0.0f64..5.0, 0.1f64..2.0).prop_map(|(eta_c, eta_d, c_deg, p_max)| BatteryParams {
            capacity: 4.0,
            soc_min: 0.0,
            soc_max: 4.0,
            p_max,
            eta_c,
            eta_d,
            c_deg,
            dt: 1.0,
            soc_init: 2.0,
        })
    }

    proptest! {
        #[test]
        fn energy_accounting(b in battery(), raw in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 0..30)) {
            // Scale actions down so every plan stays strictly inside the bounds.
            let n = raw.len().max(1) as f64;
            let plan: Vec<HourlyAction> = raw
                .iter()
                .map(|&(c, d)| HourlyAction::new(c * b.p_max.min(1.9 / n), d * b.p_max.min(1.0 / n)))
                .collect();
            let end = validate_plan(b.soc_init, &plan, &b).unwrap();
            let expected: f64 = plan.iter().map(|a| (b.eta_c * a.p_c - a.p_d / b.eta_d) * b.dt).sum();
            prop_assert!((end - b.soc_init - expected).abs() < 1e-12);
        }

        #[test]
        fn constant_prices_admit_no_arbitrage(b in battery(), price in 0.0f64..100.0, e in 0.01f64..1.0) {
            prop_assume!(b.c_deg > 0.0 || b.eta_c * b.eta_d < 1.0);
            // Charge e MWh worth of power, then discharge what was stored.
            let charge = HourlyAction::new(e.min(b.p_max), 0.0);
            let stored = b.soc_delta(charge);
            let discharge = HourlyAction::new(0.0, stored * b.eta_d / b.dt);
            prop_assume!(discharge.p_d <= b.p_max);
            let (s1, r1) = step(&obs(b.soc_init, price), charge, &b, 0).unwrap();
            let (s2, r2) = step(&obs(s1, price), discharge, &b, 0).unwrap();
            prop_assert!((s2 - b.soc_init).abs() < 1e-12);
            prop_assert!(r1 + r2 < 0.0);
        }

        #[test]
        fn reward_matches_coefficients(b in battery(), price in -50.0f64..200.0, c in 0.0f64..0.1, d in 0.0f64..0.1) {
            let (cc, cd) = reward_coefficients(price, &b);
            let (_, r) = step(&obs(b.soc_init, price), HourlyAction::new(c, d), &b, 0).unwrap();
            prop_assert_eq!(r, cc * c + cd * d);
        }
    }
}
