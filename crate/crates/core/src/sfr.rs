//! Aggregated single-bus system frequency response (SFR) model with a staged
//! under-frequency load shedding relay scheme.
//!
//! The swing equation is written in MW on the post-outage system:
//!
//! ```text
//! 2·H_sys·dΔω/dt = Σ ΔPm_i − P_lost + P_shed − L·D·Δω
//! T_i·dΔPm_i/dt  = −K_i·S_i·Δω − ΔPm_i,      ΔPm_i ∈ [p_min_i − p0_i, p_max_i − p0_i]
//! ```
//!
//! where `H_sys = Σ h_i·S_i` (MW·s) over the units that remain online, `L` is
//! the connected load at nominal frequency and `Δω` the per-unit frequency
//! deviation. Upward response is capped by the unit headroom. Downward
//! response (after over-shedding) may back the unit off to `p_min`; without
//! it, a clamp at zero leaves nothing but load damping to absorb a surplus.
//! The limiter is non-windup: the state is held at its bound while the drive
//! pushes it further out.
//!
//! Integration is classic fixed-step RK4. Relay pickup, trip and breaker
//! timing are counted in whole integration ticks, so a run is a pure function
//! of its inputs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Frequency excursion (Hz) past which a run is declared divergent.
pub const DIVERGENCE_LIMIT_HZ: f64 = 10.0;

const BALANCE_TOL: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SfrError {
    #[error("unit `{0}` is not defined in the island system")]
    UnknownUnit(String),
    #[error("lost unit `{0}` is not dispatched in the operating point")]
    LostUnitNotDispatched(String),
    #[error("no units remain online after losing `{0}`")]
    NoUnitsRemaining(String),
    #[error("frequency diverged to {f:.3} Hz at t = {t:.3} s")]
    NumericalDivergence { t: f64, f: f64 },
    #[error("invalid unit `{id}`: {reason}")]
    InvalidUnit { id: String, reason: String },
    #[error("invalid UFLS scheme: {0}")]
    InvalidScheme(String),
    #[error("invalid simulation settings: {0}")]
    InvalidConfig(String),
    #[error("invalid operating point: {0}")]
    InvalidOperatingPoint(String),
}

/// Static parameters of one thermal unit. Gains and inertia are on the
/// machine base `rated`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratingUnit {
    pub id: String,
    pub p_min: f64,
    pub p_max: f64,
    pub rated: f64,
    /// Inertia constant, s.
    pub h: f64,
    /// Turbine-governor static gain, pu power / pu frequency.
    pub k_gov: f64,
    /// Turbine-governor time constant, s.
    pub t_gov: f64,
    pub cost_a: f64,
    pub cost_b: f64,
    pub cost_c: f64,
}

impl GeneratingUnit {
    pub fn validate(&self) -> Result<(), SfrError> {
        let bad = |reason: &str| SfrError::InvalidUnit {
            id: self.id.clone(),
            reason: reason.to_string(),
        };
        let finite = [
            self.p_min, self.p_max, self.rated, self.h, self.k_gov, self.t_gov, self.cost_a,
            self.cost_b, self.cost_c,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(bad("all parameters must be finite"));
        }
        if !(0.0 < self.p_min && self.p_min <= self.p_max && self.p_max <= self.rated) {
            return Err(bad("requires 0 < p_min <= p_max <= rated"));
        }
        if self.h <= 0.0 {
            return Err(bad("inertia constant h must be positive"));
        }
        if self.k_gov < 0.0 {
            return Err(bad("governor gain k_gov must be non-negative"));
        }
        if self.t_gov <= 0.0 {
            return Err(bad("governor time constant t_gov must be positive"));
        }
        Ok(())
    }

    /// Quadratic generation cost at output `p` (€/h).
    pub fn cost(&self, p: f64) -> f64 {
        self.cost_a * p * p + self.cost_b * p + self.cost_c
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UflsStage {
    pub f_threshold: f64,
    /// Fraction of the load connected when the breaker opens.
    pub shed_fraction: f64,
    pub relay_delay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UflsScheme {
    pub f_nominal: f64,
    pub stages: Vec<UflsStage>,
    pub breaker_delay: f64,
}

impl UflsScheme {
    /// Five 10 % stages from 49.0 Hz down to 48.2 Hz on a 50 Hz system.
    pub fn default_island() -> Self {
        let stages = [49.0, 48.8, 48.6, 48.4, 48.2]
            .into_iter()
            .map(|f_threshold| UflsStage {
                f_threshold,
                shed_fraction: 0.1,
                relay_delay: 0.1,
            })
            .collect();
        Self {
            f_nominal: 50.0,
            stages,
            breaker_delay: 0.1,
        }
    }

    pub fn validate(&self) -> Result<(), SfrError> {
        if !(self.f_nominal.is_finite() && self.f_nominal > 0.0) {
            return Err(SfrError::InvalidScheme("f_nominal must be positive".into()));
        }
        if !(self.breaker_delay.is_finite() && self.breaker_delay >= 0.0) {
            return Err(SfrError::InvalidScheme(
                "breaker_delay must be non-negative".into(),
            ));
        }
        let mut previous = self.f_nominal;
        for (i, stage) in self.stages.iter().enumerate() {
            if !(stage.f_threshold < previous) {
                return Err(SfrError::InvalidScheme(format!(
                    "stage {i}: thresholds must be strictly decreasing and below f_nominal"
                )));
            }
            if !(stage.shed_fraction > 0.0 && stage.shed_fraction <= 1.0) {
                return Err(SfrError::InvalidScheme(format!(
                    "stage {i}: shed_fraction must lie in (0, 1]"
                )));
            }
            if !(stage.relay_delay.is_finite() && stage.relay_delay >= 0.0) {
                return Err(SfrError::InvalidScheme(format!(
                    "stage {i}: relay_delay must be non-negative"
                )));
            }
            previous = stage.f_threshold;
        }
        Ok(())
    }
}

/// Pre-outage operating point. Only online units appear in `dispatch`.
#[derive(Debug, Clone, PartialEq)]
pub struct OperatingPoint {
    pub dispatch: BTreeMap<String, f64>,
    pub demand: f64,
    /// Load damping, pu load power per pu frequency on the demand base.
    pub load_damping: f64,
}

impl OperatingPoint {
    /// Builds a balanced operating point (`demand = Σ dispatch`).
    pub fn balanced(dispatch: BTreeMap<String, f64>, load_damping: f64) -> Self {
        let demand = dispatch.values().sum();
        Self {
            dispatch,
            demand,
            load_damping,
        }
    }

    /// Checks power balance and that every entry respects its unit limits.
    pub fn validate(&self, units: &[GeneratingUnit]) -> Result<(), SfrError> {
        self.check_balance()?;
        for (id, &p) in &self.dispatch {
            let unit = find_unit(units, id)?;
            if p < unit.p_min - BALANCE_TOL || p > unit.p_max + BALANCE_TOL {
                return Err(SfrError::InvalidOperatingPoint(format!(
                    "unit `{id}` dispatched at {p} MW outside [{}, {}]",
                    unit.p_min, unit.p_max
                )));
            }
        }
        Ok(())
    }

    fn check_balance(&self) -> Result<(), SfrError> {
        let total: f64 = self.dispatch.values().sum();
        if (total - self.demand).abs() > BALANCE_TOL * self.demand.abs().max(1.0) {
            return Err(SfrError::InvalidOperatingPoint(format!(
                "dispatch total {total} MW does not match demand {} MW",
                self.demand
            )));
        }
        if !(self.load_damping.is_finite() && self.load_damping >= 0.0) {
            return Err(SfrError::InvalidOperatingPoint(
                "load damping must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    /// Keep every n-th sample of (t, f); `None` records nothing.
    #[serde(default)]
    pub trajectory_stride: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt: 0.01,
            horizon: 60.0,
            trajectory_stride: None,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SfrError> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(SfrError::InvalidConfig("dt must be positive".into()));
        }
        if !(self.horizon.is_finite() && self.horizon >= 30.0) {
            return Err(SfrError::InvalidConfig(
                "horizon must be at least 30 s".into(),
            ));
        }
        if self.trajectory_stride == Some(0) {
            return Err(SfrError::InvalidConfig(
                "trajectory_stride must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn steps(&self) -> usize {
        (self.horizon / self.dt - 1e-9).ceil() as usize
    }

    fn ticks(&self, delay: f64) -> usize {
        (delay / self.dt - 1e-9).ceil().max(0.0) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiredStage {
    pub stage: usize,
    /// Instant the breaker opens, s.
    pub time: f64,
    pub shed_mw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimResult {
    pub ufls_total: f64,
    pub f_nadir: f64,
    pub f_qss: f64,
    pub fired_stages: Vec<FiredStage>,
    pub trajectory: Option<Vec<(f64, f64)>>,
}

impl SimResult {
    /// Writes the recorded trajectory as `t,f` lines with a header.
    pub fn write_trajectory_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "t,f")?;
        for (t, f) in self.trajectory.iter().flatten() {
            writeln!(out, "{t},{f}")?;
        }
        Ok(())
    }
}

pub(crate) fn find_unit<'a>(
    units: &'a [GeneratingUnit],
    id: &str,
) -> Result<&'a GeneratingUnit, SfrError> {
    units
        .iter()
        .find(|u| u.id == id)
        .ok_or_else(|| SfrError::UnknownUnit(id.to_string()))
}

/// Units (with their pre-outage dispatch) still online after losing `lost`.
fn remaining_units<'a>(
    op: &OperatingPoint,
    units: &'a [GeneratingUnit],
    lost: &str,
) -> Result<Vec<(&'a GeneratingUnit, f64)>, SfrError> {
    if !op.dispatch.contains_key(lost) {
        find_unit(units, lost)?;
        return Err(SfrError::LostUnitNotDispatched(lost.to_string()));
    }
    let remaining = op
        .dispatch
        .iter()
        .filter(|(id, _)| id.as_str() != lost)
        .map(|(id, &p)| find_unit(units, id).map(|u| (u, p)))
        .collect::<Result<Vec<_>, _>>()?;
    if remaining.is_empty() {
        return Err(SfrError::NoUnitsRemaining(lost.to_string()));
    }
    Ok(remaining)
}

/// Σ (p_max − dispatch) over the units that stay online, MW.
pub fn available_reserve(
    op: &OperatingPoint,
    units: &[GeneratingUnit],
    lost: &str,
) -> Result<f64, SfrError> {
    Ok(remaining_units(op, units, lost)?
        .iter()
        .map(|(u, p)| u.p_max - p)
        .sum())
}

/// Σ h·rated over the units that stay online, MW·s.
pub fn post_outage_inertia(
    op: &OperatingPoint,
    units: &[GeneratingUnit],
    lost: &str,
) -> Result<f64, SfrError> {
    Ok(remaining_units(op, units, lost)?
        .iter()
        .map(|(u, _)| u.h * u.rated)
        .sum())
}

/// Σ k_gov·rated over the units that stay online, MW per pu frequency.
pub fn weighted_gain(
    op: &OperatingPoint,
    units: &[GeneratingUnit],
    lost: &str,
) -> Result<f64, SfrError> {
    Ok(remaining_units(op, units, lost)?
        .iter()
        .map(|(u, _)| u.k_gov * u.rated)
        .sum())
}

struct Governor {
    gain_mw: f64,
    t_gov: f64,
    floor: f64,
    headroom: f64,
}

struct Dynamics {
    two_h: f64,
    p_lost: f64,
    damping: f64,
    governors: Vec<Governor>,
}

impl Dynamics {
    /// State layout: `[Δω, ΔPm_1, …, ΔPm_n]`.
    fn derivative(&self, y: &[f64], load: f64, shed: f64, dy: &mut [f64]) {
        let dw = y[0];
        let mut p_mech = 0.0;
        for (i, gov) in self.governors.iter().enumerate() {
            let pm = y[i + 1].clamp(gov.floor, gov.headroom);
            p_mech += pm;
            let mut rate = (-gov.gain_mw * dw - pm) / gov.t_gov;
            if (pm >= gov.headroom && rate > 0.0) || (pm <= gov.floor && rate < 0.0) {
                rate = 0.0;
            }
            dy[i + 1] = rate;
        }
        let accel = p_mech - self.p_lost + shed - load * self.damping * dw;
        dy[0] = accel / self.two_h;
    }
}

#[derive(Clone, Copy)]
enum Relay {
    Idle,
    PickedUp(usize),
    Tripped,
}

/// Simulates the loss of unit `lost` from operating point `op`.
pub fn simulate_outage(
    op: &OperatingPoint,
    units: &[GeneratingUnit],
    lost: &str,
    scheme: &UflsScheme,
    cfg: &SimConfig,
) -> Result<SimResult, SfrError> {
    cfg.validate()?;
    scheme.validate()?;
    op.check_balance()?;
    let remaining = remaining_units(op, units, lost)?;
    let p_lost = op.dispatch[lost];

    let h_sys: f64 = remaining.iter().map(|(u, _)| u.h * u.rated).sum();
    let dynamics = Dynamics {
        two_h: 2.0 * h_sys,
        p_lost,
        damping: op.load_damping,
        governors: remaining
            .iter()
            .map(|(u, p)| Governor {
                gain_mw: u.k_gov * u.rated,
                t_gov: u.t_gov,
                floor: (u.p_min - p).min(0.0),
                headroom: (u.p_max - p).max(0.0),
            })
            .collect(),
    };

    let f0 = scheme.f_nominal;
    let n = dynamics.governors.len() + 1;
    let mut y = vec![0.0; n];
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    let mut k3 = vec![0.0; n];
    let mut k4 = vec![0.0; n];
    let mut tmp = vec![0.0; n];

    let relay_ticks: Vec<usize> = scheme.stages.iter().map(|s| cfg.ticks(s.relay_delay)).collect();
    let breaker_ticks = cfg.ticks(scheme.breaker_delay);
    let mut relays = vec![Relay::Idle; scheme.stages.len()];
    // (tick at which the breaker opens, stage index)
    let mut pending: Vec<(usize, usize)> = Vec::new();

    let mut load = op.demand;
    let mut shed = 0.0;
    let mut fired = Vec::new();
    let mut f_nadir = f0;
    let mut trajectory = cfg.trajectory_stride.map(|_| vec![(0.0, f0)]);

    let dt = cfg.dt;
    let steps = cfg.steps();
    for step in 1..=steps {
        // RK4 with load and shed held over the step.
        dynamics.derivative(&y, load, shed, &mut k1);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k1[i];
        }
        dynamics.derivative(&tmp, load, shed, &mut k2);
        for i in 0..n {
            tmp[i] = y[i] + 0.5 * dt * k2[i];
        }
        dynamics.derivative(&tmp, load, shed, &mut k3);
        for i in 0..n {
            tmp[i] = y[i] + dt * k3[i];
        }
        dynamics.derivative(&tmp, load, shed, &mut k4);
        for i in 0..n {
            y[i] += dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
        for (i, gov) in dynamics.governors.iter().enumerate() {
            y[i + 1] = y[i + 1].clamp(gov.floor, gov.headroom);
        }

        let t = step as f64 * dt;
        let f = f0 * (1.0 + y[0]);
        if !f.is_finite() || (f - f0).abs() > DIVERGENCE_LIMIT_HZ {
            return Err(SfrError::NumericalDivergence { t, f });
        }
        f_nadir = f_nadir.min(f);

        for (i, stage) in scheme.stages.iter().enumerate() {
            relays[i] = match relays[i] {
                Relay::Tripped => Relay::Tripped,
                _ if f > stage.f_threshold => Relay::Idle,
                Relay::Idle if relay_ticks[i] == 0 => {
                    pending.push((step + breaker_ticks, i));
                    Relay::Tripped
                }
                Relay::Idle => Relay::PickedUp(step),
                Relay::PickedUp(since) if step - since >= relay_ticks[i] => {
                    pending.push((step + breaker_ticks, i));
                    Relay::Tripped
                }
                state => state,
            };
        }

        // Breakers open at the end of the tick; stages ordered by index
        // within a tick so cascades shed from the already-reduced load.
        pending.sort_unstable();
        while let Some(&(at, stage)) = pending.first() {
            if at > step {
                break;
            }
            pending.remove(0);
            let amount = scheme.stages[stage].shed_fraction * load;
            load -= amount;
            shed += amount;
            fired.push(FiredStage {
                stage,
                time: t,
                shed_mw: amount,
            });
        }

        if let (Some(traj), Some(stride)) = (trajectory.as_mut(), cfg.trajectory_stride) {
            if step % stride == 0 || step == steps {
                traj.push((t, f));
            }
        }
    }

    Ok(SimResult {
        ufls_total: shed,
        f_nadir,
        f_qss: f0 * (1.0 + y[0]),
        fired_stages: fired,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit(id: &str, p_min: f64, p_max: f64, rated: f64, h: f64, k: f64, t: f64) -> GeneratingUnit {
        GeneratingUnit {
            id: id.into(),
            p_min,
            p_max,
            rated,
            h,
            k_gov: k,
            t_gov: t,
            cost_a: 0.01,
            cost_b: 50.0,
            cost_c: 100.0,
        }
    }

    fn three_units() -> Vec<GeneratingUnit> {
        vec![
            unit("A", 2.0, 6.0, 7.0, 3.0, 20.0, 4.0),
            unit("B", 2.0, 6.0, 7.0, 2.5, 18.0, 5.0),
            unit("C", 1.0, 4.0, 5.0, 2.0, 15.0, 3.0),
        ]
    }

    fn op(entries: &[(&str, f64)]) -> OperatingPoint {
        OperatingPoint::balanced(
            entries.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
            1.0,
        )
    }

    #[test]
    fn zero_disturbance_keeps_nominal_frequency() {
        let units = three_units();
        let point = op(&[("A", 4.0), ("B", 4.0), ("C", 0.0)]);
        let cfg = SimConfig {
            trajectory_stride: Some(1),
            ..SimConfig::default()
        };
        let res = simulate_outage(&point, &units, "C", &UflsScheme::default_island(), &cfg).unwrap();
        assert_eq!(res.ufls_total, 0.0);
        assert!(res.fired_stages.is_empty());
        let worst = res
            .trajectory
            .unwrap()
            .iter()
            .map(|(_, f)| (f - 50.0).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-12);
    }

    #[test]
    fn quasi_steady_state_matches_linear_response() {
        let units = three_units();
        let point = op(&[("A", 3.0), ("B", 3.0), ("C", 1.0)]);
        let scheme = UflsScheme {
            stages: vec![],
            ..UflsScheme::default_island()
        };
        let res = simulate_outage(&point, &units, "C", &scheme, &SimConfig::default()).unwrap();
        // K in MW/Hz for the two survivors plus load damping.
        let k_mw_hz = (20.0 * 7.0 + 18.0 * 7.0 + 1.0 * 7.0) / 50.0;
        let expected = -1.0 / k_mw_hz;
        let got = res.f_qss - 50.0;
        assert!(((got - expected) / expected).abs() < 1e-3, "{got} vs {expected}");
    }

    #[test]
    fn feature_sums() {
        let units = three_units();
        let point = op(&[("A", 4.0), ("B", 3.0), ("C", 2.0)]);
        assert_eq!(available_reserve(&point, &units, "C").unwrap(), 5.0);
        assert_eq!(post_outage_inertia(&point, &units, "C").unwrap(), 3.0 * 7.0 + 2.5 * 7.0);
        assert_eq!(weighted_gain(&point, &units, "A").unwrap(), 18.0 * 7.0 + 15.0 * 5.0);

        let full = op(&[("A", 6.0), ("B", 6.0), ("C", 2.0)]);
        assert_eq!(available_reserve(&full, &units, "C").unwrap(), 0.0);
    }

    #[test]
    fn single_unit_outage_is_rejected() {
        let units = three_units();
        let point = op(&[("A", 4.0)]);
        let scheme = UflsScheme::default_island();
        let cfg = SimConfig::default();
        assert_eq!(
            simulate_outage(&point, &units, "A", &scheme, &cfg),
            Err(SfrError::NoUnitsRemaining("A".into()))
        );
        assert!(matches!(
            post_outage_inertia(&point, &units, "A"),
            Err(SfrError::NoUnitsRemaining(_))
        ));
        assert!(matches!(
            simulate_outage(&point, &units, "Z", &scheme, &cfg),
            Err(SfrError::UnknownUnit(_))
        ));
        assert!(matches!(
            simulate_outage(&point, &units, "B", &scheme, &cfg),
            Err(SfrError::LostUnitNotDispatched(_))
        ));
    }

    #[test]
    fn large_outage_sheds_in_order() {
        let units = vec![
            unit("A", 2.0, 6.0, 7.0, 2.0, 20.0, 6.0),
            unit("B", 2.0, 6.0, 7.0, 2.0, 20.0, 6.0),
            unit("C", 1.0, 6.0, 7.0, 2.0, 20.0, 6.0),
        ];
        let point = op(&[("A", 5.5), ("B", 5.5), ("C", 6.0)]);
        let scheme = UflsScheme::default_island();
        let res = simulate_outage(&point, &units, "C", &scheme, &SimConfig::default()).unwrap();
        assert!(!res.fired_stages.is_empty());
        assert!(res.ufls_total > 0.0);
        let mut load = point.demand;
        let mut total = 0.0;
        for pair in res.fired_stages.windows(2) {
            assert!(pair[0].stage < pair[1].stage);
            assert!(pair[0].time < pair[1].time);
        }
        for fired in &res.fired_stages {
            let amount = scheme.stages[fired.stage].shed_fraction * load;
            assert_eq!(fired.shed_mw, amount);
            load -= amount;
            total += amount;
        }
        assert_eq!(res.ufls_total, total);
        assert!(res.f_nadir <= res.f_qss);
        assert!(res.f_nadir <= 49.0);
    }

    #[test]
    fn deterministic() {
        let units = three_units();
        let point = op(&[("A", 6.0), ("B", 6.0), ("C", 4.0)]);
        let scheme = UflsScheme::default_island();
        let cfg = SimConfig::default();
        let a = simulate_outage(&point, &units, "A", &scheme, &cfg).unwrap();
        let b = simulate_outage(&point, &units, "A", &scheme, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.f_nadir.to_bits(), b.f_nadir.to_bits());
    }

    #[test]
    fn validation_errors() {
        let mut u = three_units().remove(0);
        u.p_min = 0.0;
        assert!(u.validate().is_err());
        let mut scheme = UflsScheme::default_island();
        scheme.stages[2].f_threshold = 49.5;
        assert!(scheme.validate().is_err());
        let cfg = SimConfig {
            horizon: 10.0,
            ..SimConfig::default()
        };
        assert!(cfg.validate().is_err());
        let point = OperatingPoint {
            dispatch: [("A".to_string(), 3.0)].into_iter().collect(),
            demand: 4.0,
            load_damping: 1.0,
        };
        assert!(point.validate(&three_units()).is_err());
    }
}
