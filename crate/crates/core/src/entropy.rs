//! Power-up resolution of a single bistable cell and the noise calibration
//! that maps an operating environment to a readout noise magnitude.
//!
//! The power-up bit is `1` iff `mismatch + offset + noise > 0`. With static
//! mismatch `m ~ N(0, s_m^2)` and independent noise `n ~ N(0, s_n^2)` the
//! probability that a noisy read disagrees with the noiseless bit is
//! `atan(s_n / s_m) / pi`, which inverts in closed form. Calibrations store
//! target bit-error rates at anchor environments and convert them to noise
//! sigmas through that inverse.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const MIN_TEMPERATURE_CELSIUS: f64 = -55.0;
pub const MAX_TEMPERATURE_CELSIUS: f64 = 125.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawEnvironment", into = "RawEnvironment")]
pub struct EnvironmentCondition {
    temperature_celsius: f64,
    supply_voltage_volts: f64,
}

#[derive(Serialize, Deserialize)]
struct RawEnvironment {
    temperature_celsius: f64,
    supply_voltage_volts: f64,
}

impl TryFrom<RawEnvironment> for EnvironmentCondition {
    type Error = Error;
    fn try_from(raw: RawEnvironment) -> Result<Self> {
        Self::new(raw.temperature_celsius, raw.supply_voltage_volts)
    }
}

impl From<EnvironmentCondition> for RawEnvironment {
    fn from(env: EnvironmentCondition) -> Self {
        Self {
            temperature_celsius: env.temperature_celsius,
            supply_voltage_volts: env.supply_voltage_volts,
        }
    }
}

impl EnvironmentCondition {
    pub fn new(temperature_celsius: f64, supply_voltage_volts: f64) -> Result<Self> {
        if !temperature_celsius.is_finite() || !(MIN_TEMPERATURE_CELSIUS..=MAX_TEMPERATURE_CELSIUS).contains(&temperature_celsius) {
            return Err(invalid(format!(
                "temperature {temperature_celsius} C outside model range [{MIN_TEMPERATURE_CELSIUS}, {MAX_TEMPERATURE_CELSIUS}]"
            )));
        }
        if !supply_voltage_volts.is_finite() || supply_voltage_volts <= 0.0 {
            return Err(invalid(format!("supply voltage must be positive, got {supply_voltage_volts}")));
        }
        Ok(Self {
            temperature_celsius,
            supply_voltage_volts,
        })
    }

    /// 25 C, 1.0 V: the nominal point of the transistor-level setup.
    pub fn simulation_nominal() -> Self {
        Self::new(25.0, 1.0).unwrap()
    }

    /// 25 C, 3.3 V: the nominal board supply.
    pub fn board_nominal() -> Self {
        Self::new(25.0, 3.3).unwrap()
    }

    pub fn temperature_celsius(&self) -> f64 {
        self.temperature_celsius
    }

    pub fn supply_voltage_volts(&self) -> f64 {
        self.supply_voltage_volts
    }
}

impl fmt::Display for EnvironmentCondition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} C / {} V", self.temperature_celsius, self.supply_voltage_volts)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerUpOutcome {
    pub bit: bool,
    pub resolved_margin: f64,
}

/// Decide the power-up bit from the signed margin; a margin of exactly zero
/// resolves to `0`.
pub fn resolve_power_up(static_mismatch: f64, systematic_offset: f64, noise_draw: f64) -> Result<PowerUpOutcome> {
    if !(static_mismatch.is_finite() && systematic_offset.is_finite() && noise_draw.is_finite()) {
        return Err(invalid("power-up inputs must be finite"));
    }
    let resolved_margin = static_mismatch + systematic_offset + noise_draw;
    Ok(PowerUpOutcome {
        bit: resolved_margin > 0.0,
        resolved_margin,
    })
}

/// `P(sign(m + n) != sign(m))` for `m ~ N(0, sigma_m^2)`, `n ~ N(0, sigma_n^2)`.
pub fn expected_flip_probability(sigma_m: f64, sigma_n: f64) -> Result<f64> {
    if !sigma_m.is_finite() || sigma_m <= 0.0 {
        return Err(invalid(format!("sigma_m must be positive, got {sigma_m}")));
    }
    if !sigma_n.is_finite() || sigma_n < 0.0 {
        return Err(invalid(format!("sigma_n must be non-negative, got {sigma_n}")));
    }
    Ok((sigma_n / sigma_m).atan() / PI)
}

/// Inverse of [`expected_flip_probability`] in `sigma_n`.
pub fn calibrate_noise_for_ber(target_ber: f64, sigma_m: f64) -> Result<f64> {
    if !sigma_m.is_finite() || sigma_m <= 0.0 {
        return Err(invalid(format!("sigma_m must be positive, got {sigma_m}")));
    }
    if !target_ber.is_finite() || !(0.0..0.5).contains(&target_ber) {
        return Err(invalid(format!("target BER must lie in [0, 0.5), got {target_ber}")));
    }
    Ok(sigma_m * (PI * target_ber).tan())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationAnchor {
    pub temperature_celsius: f64,
    pub supply_voltage_volts: f64,
    pub target_ber: f64,
}

/// Target bit-error rates along a temperature axis (at the reference supply)
/// and a voltage axis (at the reference temperature), interpolated piecewise
/// linearly. Away from both axes the two excursions add:
/// `ber(T, V) = ber_T(T) + ber_V(V) - ber(reference)`.
///
/// An axis that only holds the reference anchor admits only the reference
/// value on that axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawCalibration", into = "RawCalibration")]
pub struct NoiseCalibration {
    sigma_mismatch: f64,
    reference: EnvironmentCondition,
    temperature_axis: Vec<(f64, f64)>,
    voltage_axis: Vec<(f64, f64)>,
}

#[derive(Serialize, Deserialize)]
struct RawCalibration {
    sigma_mismatch: f64,
    reference: EnvironmentCondition,
    anchors: Vec<CalibrationAnchor>,
}

impl TryFrom<RawCalibration> for NoiseCalibration {
    type Error = Error;
    fn try_from(raw: RawCalibration) -> Result<Self> {
        Self::new(raw.sigma_mismatch, raw.reference, raw.anchors)
    }
}

impl From<NoiseCalibration> for RawCalibration {
    fn from(cal: NoiseCalibration) -> Self {
        let anchors = cal.anchors();
        Self {
            sigma_mismatch: cal.sigma_mismatch,
            reference: cal.reference,
            anchors,
        }
    }
}

fn calibration_error(msg: impl Into<String>) -> Error {
    Error::InvalidCalibration(msg.into())
}

impl NoiseCalibration {
    pub fn new(sigma_mismatch: f64, reference: EnvironmentCondition, anchors: impl IntoIterator<Item = CalibrationAnchor>) -> Result<Self> {
        if !sigma_mismatch.is_finite() || sigma_mismatch <= 0.0 {
            return Err(calibration_error(format!("sigma_mismatch must be positive, got {sigma_mismatch}")));
        }
        let t_ref = reference.temperature_celsius;
        let v_ref = reference.supply_voltage_volts;
        let mut temperature_axis = Vec::new();
        let mut voltage_axis = Vec::new();
        let mut reference_ber = None;
        for a in anchors {
            let env = EnvironmentCondition::new(a.temperature_celsius, a.supply_voltage_volts)
                .map_err(|e| calibration_error(format!("anchor environment: {e}")))?;
            if !a.target_ber.is_finite() || !(0.0..0.5).contains(&a.target_ber) {
                return Err(calibration_error(format!(
                    "anchor at {env} has target BER {} outside [0, 0.5)",
                    a.target_ber
                )));
            }
            let on_t_axis = env.supply_voltage_volts == v_ref;
            let on_v_axis = env.temperature_celsius == t_ref;
            match (on_t_axis, on_v_axis) {
                (true, true) => {
                    if reference_ber.replace(a.target_ber).is_some() {
                        return Err(calibration_error("duplicate reference anchor"));
                    }
                }
                (true, false) => temperature_axis.push((env.temperature_celsius, a.target_ber)),
                (false, true) => voltage_axis.push((env.supply_voltage_volts, a.target_ber)),
                (false, false) => {
                    return Err(calibration_error(format!(
                        "anchor at {env} lies on neither the temperature axis ({v_ref} V) nor the voltage axis ({t_ref} C)"
                    )))
                }
            }
        }
        let reference_ber = reference_ber.ok_or_else(|| calibration_error(format!("no anchor at the reference {reference}")))?;
        temperature_axis.push((t_ref, reference_ber));
        voltage_axis.push((v_ref, reference_ber));
        for (name, axis) in [("temperature", &mut temperature_axis), ("voltage", &mut voltage_axis)] {
            axis.sort_by(|a, b| a.0.total_cmp(&b.0));
            if axis.windows(2).any(|w| w[0].0 == w[1].0) {
                return Err(calibration_error(format!("duplicate anchor on the {name} axis")));
            }
        }
        Ok(Self {
            sigma_mismatch,
            reference,
            temperature_axis,
            voltage_axis,
        })
    }

    /// A calibration with a single anchor: only `env` is admissible.
    pub fn single_point(sigma_mismatch: f64, env: EnvironmentCondition, target_ber: f64) -> Result<Self> {
        Self::new(
            sigma_mismatch,
            env,
            [CalibrationAnchor {
                temperature_celsius: env.temperature_celsius,
                supply_voltage_volts: env.supply_voltage_volts,
                target_ber,
            }],
        )
    }

    /// Temperature bit-error anchors of the transistor-level robustness
    /// study at 1.0 V (0, 20, 45, 65, 85 C), referenced to an error-free
    /// golden read at the 25 C nominal point.
    pub fn temperature_study(sigma_mismatch: f64) -> Self {
        let anchors = [
            (0.0, 0.0837),
            (20.0, 0.0123),
            (25.0, 0.0),
            (45.0, 0.0603),
            (65.0, 0.1149),
            (85.0, 0.1589),
        ]
        .into_iter()
        .map(|(t, ber)| CalibrationAnchor {
            temperature_celsius: t,
            supply_voltage_volts: 1.0,
            target_ber: ber,
        });
        Self::new(sigma_mismatch, EnvironmentCondition::simulation_nominal(), anchors).expect("built-in temperature anchors are valid")
    }

    /// Cross-voltage bit-error anchors of the board study (3.0 V down to
    /// 1.96 V against the 3.3 V signature), with `nominal_ber` as the
    /// readout error at 3.3 V itself.
    pub fn voltage_study(sigma_mismatch: f64, nominal_ber: f64) -> Result<Self> {
        let anchors = [
            (3.3, nominal_ber),
            (3.0, 0.026),
            (2.65, 0.025),
            (2.5, 0.023),
            (2.2, 0.04),
            (2.0, 0.12),
            (1.96, 0.13),
        ]
        .into_iter()
        .map(|(v, ber)| CalibrationAnchor {
            temperature_celsius: 25.0,
            supply_voltage_volts: v,
            target_ber: ber,
        });
        Self::new(sigma_mismatch, EnvironmentCondition::board_nominal(), anchors)
    }

    pub fn sigma_mismatch(&self) -> f64 {
        self.sigma_mismatch
    }

    pub fn reference(&self) -> EnvironmentCondition {
        self.reference
    }

    /// Same anchors, different mismatch scale.
    pub fn with_sigma_mismatch(&self, sigma_mismatch: f64) -> Result<Self> {
        Self::new(sigma_mismatch, self.reference, self.anchors())
    }

    /// All anchors, reference first.
    pub fn anchors(&self) -> Vec<CalibrationAnchor> {
        let t_ref = self.reference.temperature_celsius;
        let v_ref = self.reference.supply_voltage_volts;
        let mut out = vec![CalibrationAnchor {
            temperature_celsius: t_ref,
            supply_voltage_volts: v_ref,
            target_ber: self.reference_ber(),
        }];
        out.extend(
            self.temperature_axis
                .iter()
                .filter(|(t, _)| *t != t_ref)
                .map(|&(t, ber)| CalibrationAnchor {
                    temperature_celsius: t,
                    supply_voltage_volts: v_ref,
                    target_ber: ber,
                }),
        );
        out.extend(
            self.voltage_axis
                .iter()
                .filter(|(v, _)| *v != v_ref)
                .map(|&(v, ber)| CalibrationAnchor {
                    temperature_celsius: t_ref,
                    supply_voltage_volts: v,
                    target_ber: ber,
                }),
        );
        out
    }

    fn reference_ber(&self) -> f64 {
        let t_ref = self.reference.temperature_celsius;
        self.temperature_axis
            .iter()
            .find(|(t, _)| *t == t_ref)
            .map(|&(_, b)| b)
            .expect("reference anchor is on the temperature axis")
    }

    pub fn contains(&self, env: &EnvironmentCondition) -> bool {
        self.target_ber_at(env).is_ok()
    }

    /// Interpolated target bit-error rate at `env`.
    pub fn target_ber_at(&self, env: &EnvironmentCondition) -> Result<f64> {
        let refuse = |reason: String| Error::ExtrapolationRefused {
            env: env.to_string(),
            reason,
        };
        let t = env.temperature_celsius;
        let v = env.supply_voltage_volts;
        let on_t_axis = v == self.reference.supply_voltage_volts;
        let on_v_axis = t == self.reference.temperature_celsius;
        let ber_t = || interpolate(&self.temperature_axis, t).ok_or_else(|| refuse(axis_span("temperature", &self.temperature_axis, "C")));
        let ber_v = || interpolate(&self.voltage_axis, v).ok_or_else(|| refuse(axis_span("voltage", &self.voltage_axis, "V")));
        let ber = match (on_t_axis, on_v_axis) {
            (true, true) => self.reference_ber(),
            (true, false) => ber_t()?,
            (false, true) => ber_v()?,
            (false, false) => {
                let combined = ber_t()? + ber_v()? - self.reference_ber();
                if combined >= 0.5 {
                    return Err(refuse(format!("combined excursion BER {combined} is not reachable")));
                }
                combined.max(0.0)
            }
        };
        Ok(ber)
    }

    /// Noise sigma whose expected flip probability equals the target BER at `env`.
    pub fn noise_sigma_at(&self, env: &EnvironmentCondition) -> Result<f64> {
        let ber = self.target_ber_at(env)?;
        calibrate_noise_for_ber(ber, self.sigma_mismatch)
    }
}

fn axis_span(name: &str, axis: &[(f64, f64)], unit: &str) -> String {
    let lo = axis.first().map(|a| a.0).unwrap_or(f64::NAN);
    let hi = axis.last().map(|a| a.0).unwrap_or(f64::NAN);
    format!("{name} anchors cover [{lo}, {hi}] {unit}")
}

fn interpolate(axis: &[(f64, f64)], x: f64) -> Option<f64> {
    let (first, last) = (axis.first()?, axis.last()?);
    if x < first.0 || x > last.0 {
        return None;
    }
    let hi = axis.partition_point(|a| a.0 < x);
    let (x1, b1) = axis[hi];
    if x1 == x {
        return Some(b1);
    }
    let (x0, b0) = axis[hi - 1];
    let w = (x - x0) / (x1 - x0);
    Some(b0 + w * (b1 - b0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    /// Independent estimate of P(sign(m) != sign(m + n)).
    fn monte_carlo_flip(sigma_m: f64, sigma_n: f64, draws: usize, seed: u64) -> f64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let m = Normal::new(0.0, sigma_m).unwrap();
        let n = Normal::new(0.0, sigma_n).unwrap();
        let flips = (0..draws)
            .filter(|_| {
                let mm: f64 = m.sample(&mut rng);
                let nn: f64 = n.sample(&mut rng);
                (mm > 0.0) != (mm + nn > 0.0)
            })
            .count();
        flips as f64 / draws as f64
    }

    #[test]
    fn resolve_power_up_sign_rule() {
        assert!(resolve_power_up(0.5, 0.0, 0.0).unwrap().bit);
        assert!(!resolve_power_up(-0.5, 0.0, 0.0).unwrap().bit);
        assert!(!resolve_power_up(0.0, 0.0, 0.0).unwrap().bit);
        let out = resolve_power_up(0.25, -0.5, 0.125).unwrap();
        assert_eq!(out.resolved_margin, -0.125);
        assert!(!out.bit);
        assert!(resolve_power_up(f64::NAN, 0.0, 0.0).is_err());
        assert!(resolve_power_up(0.0, f64::INFINITY, 0.0).is_err());
    }

    #[test]
    fn power_up_balance_over_gaussian_mismatch() {
        let mut rng = StdRng::seed_from_u64(5);
        let m = Normal::new(0.0, 0.25).unwrap();
        let draws = 1_000_000;
        let ones = (0..draws)
            .filter(|_| resolve_power_up(m.sample(&mut rng), 0.0, 0.0).unwrap().bit)
            .count();
        let frac = ones as f64 / draws as f64;
        assert!((frac - 0.5).abs() <= 0.002, "fraction of ones {frac}");
    }

    #[test]
    fn flip_probability_examples() {
        assert_eq!(expected_flip_probability(1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(expected_flip_probability(1.0, 1.0).unwrap(), 0.25, max_relative = 1e-15);
        assert!((expected_flip_probability(1.0, 0.0968).unwrap() - 0.0307).abs() < 5e-5);
        assert!(expected_flip_probability(0.0, 1.0).is_err());
        assert!(expected_flip_probability(-1.0, 1.0).is_err());
        assert!(expected_flip_probability(1.0, -0.1).is_err());
    }

    #[test]
    fn flip_probability_agrees_with_monte_carlo() {
        let draws = 1_000_000;
        for (i, &(sm, sn)) in [(1.0, 0.1), (1.0, 0.5), (1.0, 1.0), (1.0, 2.0), (1.0, 0.0968)].iter().enumerate() {
            let p = expected_flip_probability(sm, sn).unwrap();
            let est = monte_carlo_flip(sm, sn, draws, 100 + i as u64);
            let se = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((est - p).abs() < 3.0 * se, "({sm},{sn}): closed {p} vs MC {est}");
        }
        // (1, 1) within the stated absolute tolerance as well
        assert!((monte_carlo_flip(1.0, 1.0, draws, 7) - 0.25).abs() < 0.002);
    }

    #[test]
    fn calibration_examples() {
        assert_eq!(calibrate_noise_for_ber(0.0, 1.0).unwrap(), 0.0);
        assert_relative_eq!(calibrate_noise_for_ber(0.25, 2.0).unwrap(), 2.0, max_relative = 1e-15);
        let s = calibrate_noise_for_ber(0.1589, 1.0).unwrap();
        assert_relative_eq!(s, (PI * 0.1589).tan(), max_relative = 1e-15);
        assert!((s - 0.545263).abs() < 1e-6);
        let est = monte_carlo_flip(1.0, s, 1_000_000, 9);
        assert!((est - 0.1589).abs() < 3.0 * (0.1589 * 0.8411 / 1e6f64).sqrt(), "MC {est}");
        assert!(calibrate_noise_for_ber(0.5, 1.0).is_err());
        assert!(calibrate_noise_for_ber(-0.01, 1.0).is_err());
        assert!(calibrate_noise_for_ber(0.1, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(b in 0.0f64..=0.49, sigma in 1e-3f64..1e3) {
            let s = calibrate_noise_for_ber(b, sigma).unwrap();
            let back = expected_flip_probability(sigma, s).unwrap();
            if b == 0.0 {
                prop_assert_eq!(back, 0.0);
            } else {
                prop_assert!(((back - b) / b).abs() <= 1e-12, "{} -> {}", b, back);
            }
        }

        #[test]
        fn scale_invariance(sm in 1e-3f64..10.0, sn in 0.0f64..10.0, k in 1e-3f64..1e3) {
            let a = expected_flip_probability(sm, sn).unwrap();
            let b = expected_flip_probability(k * sm, k * sn).unwrap();
            prop_assert!((a - b).abs() <= 1e-14);
        }

        #[test]
        fn monotonic(sm in 1e-2f64..10.0, sn in 1e-2f64..10.0, d in 1e-3f64..1.0) {
            prop_assert!(expected_flip_probability(sm, sn + d).unwrap() > expected_flip_probability(sm, sn).unwrap());
            prop_assert!(expected_flip_probability(sm + d, sn).unwrap() < expected_flip_probability(sm, sn).unwrap());
        }
    }

    fn env(t: f64, v: f64) -> EnvironmentCondition {
        EnvironmentCondition::new(t, v).unwrap()
    }

    #[test]
    fn environment_validation() {
        assert!(EnvironmentCondition::new(-55.0, 1.0).is_ok());
        assert!(EnvironmentCondition::new(125.0, 1.0).is_ok());
        assert!(EnvironmentCondition::new(125.5, 1.0).is_err());
        assert!(EnvironmentCondition::new(25.0, 0.0).is_err());
        assert!(EnvironmentCondition::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn noise_sigma_at_anchor_points() {
        let cal = NoiseCalibration::temperature_study(1.0);
        assert_eq!(cal.noise_sigma_at(&env(25.0, 1.0)).unwrap(), 0.0);
        let s20 = cal.noise_sigma_at(&env(20.0, 1.0)).unwrap();
        assert_eq!(s20, (PI * 0.0123).tan());
        let s85 = NoiseCalibration::temperature_study(0.25).noise_sigma_at(&env(85.0, 1.0)).unwrap();
        assert_relative_eq!(s85, 0.25 * (PI * 0.1589).tan(), max_relative = 1e-15);
    }

    #[test]
    fn noise_sigma_midway_interpolates_ber() {
        let cal = NoiseCalibration::temperature_study(1.0);
        let mid = cal.noise_sigma_at(&env(55.0, 1.0)).unwrap();
        let expected = calibrate_noise_for_ber((0.0603 + 0.1149) / 2.0, 1.0).unwrap();
        assert_relative_eq!(mid, expected, max_relative = 1e-12);
        // non-monotone segment: 0 C is worse than 20 C
        assert!(cal.target_ber_at(&env(10.0, 1.0)).unwrap() > cal.target_ber_at(&env(20.0, 1.0)).unwrap());
    }

    #[test]
    fn refuses_to_extrapolate() {
        let cal = NoiseCalibration::temperature_study(1.0);
        let err = cal.noise_sigma_at(&env(90.0, 1.0)).unwrap_err();
        assert!(matches!(err, Error::ExtrapolationRefused { .. }));
        // voltage axis only holds the reference
        assert!(matches!(
            cal.noise_sigma_at(&env(25.0, 1.1)),
            Err(Error::ExtrapolationRefused { .. })
        ));
        assert!(matches!(
            cal.noise_sigma_at(&env(-10.0, 1.0)),
            Err(Error::ExtrapolationRefused { .. })
        ));
    }

    #[test]
    fn voltage_axis_and_combined_excursions() {
        let cal = NoiseCalibration::voltage_study(1.0, 0.0).unwrap();
        assert_eq!(cal.target_ber_at(&env(25.0, 2.0)).unwrap(), 0.12);
        assert!((cal.target_ber_at(&env(25.0, 2.1)).unwrap() - 0.08).abs() < 1e-15);
        assert!(cal.contains(&env(25.0, 1.96)));
        assert!(!cal.contains(&env(25.0, 1.9)));
        assert!(!cal.contains(&env(30.0, 3.3)));

        let both = NoiseCalibration::new(
            1.0,
            env(25.0, 3.3),
            [
                CalibrationAnchor {
                    temperature_celsius: 25.0,
                    supply_voltage_volts: 3.3,
                    target_ber: 0.01,
                },
                CalibrationAnchor {
                    temperature_celsius: 85.0,
                    supply_voltage_volts: 3.3,
                    target_ber: 0.05,
                },
                CalibrationAnchor {
                    temperature_celsius: 25.0,
                    supply_voltage_volts: 2.0,
                    target_ber: 0.03,
                },
            ],
        )
        .unwrap();
        let ber = both.target_ber_at(&env(85.0, 2.0)).unwrap();
        assert!((ber - 0.07).abs() < 1e-15);
    }

    #[test]
    fn calibration_validation() {
        let r = env(25.0, 1.0);
        let a = |t, v, b| CalibrationAnchor {
            temperature_celsius: t,
            supply_voltage_volts: v,
            target_ber: b,
        };
        assert!(NoiseCalibration::new(1.0, r, [a(0.0, 1.0, 0.1)]).is_err(), "missing reference");
        assert!(NoiseCalibration::new(0.0, r, [a(25.0, 1.0, 0.0)]).is_err());
        assert!(NoiseCalibration::new(1.0, r, [a(25.0, 1.0, 0.5)]).is_err());
        assert!(NoiseCalibration::new(1.0, r, [a(25.0, 1.0, 0.0), a(0.0, 2.0, 0.1)]).is_err());
        assert!(NoiseCalibration::new(1.0, r, [a(25.0, 1.0, 0.0), a(0.0, 1.0, 0.1), a(0.0, 1.0, 0.2)]).is_err());
        // unsorted input is accepted and sorted
        let cal = NoiseCalibration::new(1.0, r, [a(85.0, 1.0, 0.2), a(25.0, 1.0, 0.0), a(0.0, 1.0, 0.1)]).unwrap();
        assert_eq!(cal.target_ber_at(&env(0.0, 1.0)).unwrap(), 0.1);
    }
}
