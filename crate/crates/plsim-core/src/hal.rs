//! Simulated electrical layer: H-bridge channels, brushed DC motors with
//! a first-order speed plant, a quadrature encoder, an ultrasonic ranger,
//! and the servo pulse command for the gear-rack drive.
//!
//! All device structs are plain values owned by the simulation loop.

use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Logic rail feeding the controller, ranger, and servo signal.
pub const LOGIC_SUPPLY_VOLTS: f64 = 5.0;
/// Drive rail shared by the four brushed motors.
pub const DRIVE_SUPPLY_VOLTS: f64 = 12.0;

/// Control-board wiring. Fixed by the board layout, recorded for
/// reference; the simulation addresses devices by name, not pin.
pub mod pins {
    pub const ULTRASONIC_ECHO: u8 = 2;
    pub const ULTRASONIC_TRIG: u8 = 3;
    pub const SERVO_PWM: u8 = 4;
}

/// The four drive motors, one H-bridge channel each.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actuator {
    Pulley,
    Drill,
    Vacuum,
    Bin,
}

impl Actuator {
    pub const ALL: [Actuator; 4] = [
        Actuator::Pulley,
        Actuator::Drill,
        Actuator::Vacuum,
        Actuator::Bin,
    ];

    /// Which dual H-bridge and channel the motor is wired to.
    pub fn bridge_channel(self) -> &'static str {
        match self {
            Actuator::Pulley => "A/A",
            Actuator::Drill => "A/B",
            Actuator::Vacuum => "B/A",
            Actuator::Bin => "B/B",
        }
    }

    /// Position in `ALL`, for indexing parallel per-motor arrays.
    pub fn index(self) -> usize {
        match self {
            Actuator::Pulley => 0,
            Actuator::Drill => 1,
            Actuator::Vacuum => 2,
            Actuator::Bin => 3,
        }
    }
}

pub fn rpm_to_radps(rpm: f64) -> f64 {
    rpm * TAU / 60.0
}

/// One H-bridge channel: two polarity inputs plus an enable PWM duty.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct HBridgeChannel {
    pub in1: bool,
    pub in2: bool,
    pub enable_duty: f64,
}

impl HBridgeChannel {
    /// Set polarity inputs and duty. Duty outside [0, 1] is rejected.
    pub fn set(&mut self, in1: bool, in2: bool, duty: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&duty) {
            return Err(Error::Argument(format!("duty out of [0, 1]: {duty}")));
        }
        self.in1 = in1;
        self.in2 = in2;
        self.enable_duty = duty;
        Ok(())
    }

    /// +1 forward, -1 reverse, 0 for both brake states.
    pub fn direction(&self) -> i8 {
        match (self.in1, self.in2) {
            (true, false) => 1,
            (false, true) => -1,
            _ => 0,
        }
    }
}

/// Per-motor calibration entry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MotorParams {
    pub max_rpm: f64,
    pub time_constant_s: f64,
}

impl MotorParams {
    pub fn validate(&self, name: &str) -> Result<()> {
        if !(self.max_rpm > 0.0) || !(self.time_constant_s > 0.0) {
            return Err(Error::Config(format!(
                "{name} motor params must be positive: max_rpm {}, time_constant_s {}",
                self.max_rpm, self.time_constant_s
            )));
        }
        Ok(())
    }
}

/// Brushed DC motor with first-order speed dynamics. Speed relaxes
/// exponentially toward direction * duty * max_speed with one time
/// constant; the update is the exact solution, so splitting a step into
/// substeps lands on the same trajectory.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotorState {
    pub supply_volts: f64,
    pub max_speed_radps: f64,
    pub speed_radps: f64,
    pub time_constant_s: f64,
    pub cumulative_angle_rad: f64,
    pub stalled: bool,
}

impl MotorState {
    pub fn new(supply_volts: f64, max_rpm: f64, time_constant_s: f64) -> Self {
        MotorState {
            supply_volts,
            max_speed_radps: rpm_to_radps(max_rpm),
            speed_radps: 0.0,
            time_constant_s,
            cumulative_angle_rad: 0.0,
            stalled: false,
        }
    }

    pub fn from_params(supply_volts: f64, params: &MotorParams) -> Self {
        MotorState::new(supply_volts, params.max_rpm, params.time_constant_s)
    }

    /// A stalled rotor holds zero speed until released.
    pub fn set_stalled(&mut self, stalled: bool) {
        self.stalled = stalled;
        if stalled {
            self.speed_radps = 0.0;
        }
    }

    /// Advance the plant by `dt`. Angle accumulates by trapezoidal
    /// integration of the speed trace.
    pub fn step(&mut self, ch: &HBridgeChannel, dt: f64) {
        debug_assert!(dt > 0.0);
        if self.stalled {
            self.speed_radps = 0.0;
        }
        let old = self.speed_radps;
        let target = if self.stalled {
            0.0
        } else {
            f64::from(ch.direction()) * ch.enable_duty * self.max_speed_radps
        };
        let new = target + (old - target) * (-dt / self.time_constant_s).exp();
        self.speed_radps = new;
        self.cumulative_angle_rad += 0.5 * (old + new) * dt;
    }

    /// Signed tick count: angle / rev * counts-per-rev, truncated toward zero.
    pub fn encoder_ticks(&self, cpr: u32) -> i64 {
        debug_assert!(cpr > 0);
        (self.cumulative_angle_rad / TAU * f64::from(cpr)).trunc() as i64
    }
}

/// Reply from one ranging ping.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RangeReading {
    Distance(f64),
    /// No echo: target outside the sensor envelope or a dropout fault.
    Timeout,
}

/// Ultrasonic range sensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UltrasonicRanger {
    pub min_range_m: f64,
    pub max_range_m: f64,
    pub noise_sigma_m: f64,
    /// Fault flag: while set, every ping times out.
    #[serde(default, skip_serializing)]
    pub dropout: bool,
}

impl UltrasonicRanger {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.min_range_m && self.min_range_m < self.max_range_m) {
            return Err(Error::Config(format!(
                "ranger needs 0 < min_range < max_range, got [{}, {}]",
                self.min_range_m, self.max_range_m
            )));
        }
        if self.noise_sigma_m < 0.0 {
            return Err(Error::Config(format!(
                "ranger noise sigma cannot be negative, got {}",
                self.noise_sigma_m
            )));
        }
        Ok(())
    }

    /// One ping. Gaussian noise on the echo, clamped so the reading never
    /// falls below the sensor's minimum range.
    pub fn read(&self, true_distance_m: f64, rng: &mut impl Rng) -> RangeReading {
        debug_assert!(true_distance_m >= 0.0);
        if self.dropout
            || true_distance_m < self.min_range_m
            || true_distance_m > self.max_range_m
        {
            return RangeReading::Timeout;
        }
        let z: f64 = rng.sample(StandardNormal);
        let noisy = true_distance_m + z * self.noise_sigma_m;
        RangeReading::Distance(noisy.max(self.min_range_m))
    }
}

/// Map a travel fraction to the servo pulse width in milliseconds
/// (0 -> 1.0 ms, 1 -> 2.0 ms).
pub fn servo_command(target_fraction: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&target_fraction) {
        return Err(Error::Argument(format!(
            "servo fraction out of [0, 1]: {target_fraction}"
        )));
    }
    Ok(1.0 + target_fraction)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, RngStream};
    use proptest::prelude::*;

    fn vacuum_motor() -> MotorState {
        MotorState::new(DRIVE_SUPPLY_VOLTS, 10_000.0, 0.15)
    }

    fn channel(in1: bool, in2: bool, duty: f64) -> HBridgeChannel {
        let mut ch = HBridgeChannel::default();
        ch.set(in1, in2, duty).unwrap();
        ch
    }

    #[test]
    fn hbridge_direction_convention() {
        assert_eq!(channel(true, false, 1.0).direction(), 1);
        assert_eq!(channel(false, true, 0.5).direction(), -1);
        assert_eq!(channel(true, true, 1.0).direction(), 0);
        assert_eq!(channel(false, false, 1.0).direction(), 0);
    }

    #[test]
    fn hbridge_rejects_duty_out_of_range() {
        let mut ch = HBridgeChannel::default();
        assert!(matches!(ch.set(true, false, 1.5), Err(Error::Argument(_))));
        assert!(matches!(ch.set(true, false, -0.1), Err(Error::Argument(_))));
    }

    #[test]
    fn zero_drive_speed_decays_monotonically_to_zero() {
        let mut m = vacuum_motor();
        m.speed_radps = 500.0;
        let ch = channel(false, false, 0.0);
        let mut prev = m.speed_radps;
        // 4 s is almost 27 time constants: 500 * e^-26.7 is comfortably
        // below the bound, while 3 s would still sit just above it.
        for _ in 0..400 {
            m.step(&ch, 0.01);
            assert!(m.speed_radps.abs() < prev.abs());
            prev = m.speed_radps;
        }
        assert!(m.speed_radps.abs() < 1e-6);
    }

    #[test]
    fn full_duty_reaches_ten_thousand_rpm() {
        let mut m = vacuum_motor();
        let ch = channel(true, false, 1.0);
        for _ in 0..300 {
            m.step(&ch, 0.01);
        }
        // 10,000 RPM in rad/s.
        let expected = 1047.1975511965977;
        assert!((m.speed_radps - expected).abs() / expected < 1e-6);
        assert!((m.max_speed_radps - expected).abs() < 1e-9);
    }

    #[test]
    fn half_duty_settles_at_half_max_speed() {
        let mut m = vacuum_motor();
        let ch = channel(true, false, 0.5);
        for _ in 0..300 {
            m.step(&ch, 0.01);
        }
        let expected = 0.5 * m.max_speed_radps;
        assert!((m.speed_radps - expected).abs() / expected < 1e-6);
    }

    #[test]
    fn speed_trace_matches_fine_step_euler() {
        // Independent check of the exact-exponential update: forward Euler
        // at dt=10 us over one second of half-duty spin-up.
        let mut m = vacuum_motor();
        let ch = channel(true, false, 0.5);
        let target = 0.5 * m.max_speed_radps;
        let fine_dt = 1e-5;
        let mut euler_speed = 0.0f64;
        let mut euler_angle = 0.0f64;
        let steps = (1.0 / fine_dt) as usize;
        for _ in 0..steps {
            euler_angle += euler_speed * fine_dt;
            euler_speed += (target - euler_speed) / 0.15 * fine_dt;
        }
        for _ in 0..100 {
            m.step(&ch, 0.01);
        }
        assert!((m.speed_radps - euler_speed).abs() / target < 1e-3);
        assert!((m.cumulative_angle_rad - euler_angle).abs() / euler_angle < 1e-3);
    }

    #[test]
    fn step_splitting_lands_on_the_same_speed() {
        let ch = channel(true, false, 0.7);
        let mut one = vacuum_motor();
        one.step(&ch, 1.0);
        let mut many = vacuum_motor();
        for _ in 0..100 {
            many.step(&ch, 0.01);
        }
        assert!((one.speed_radps - many.speed_radps).abs() / one.speed_radps < 1e-9);
    }

    #[test]
    fn stall_holds_speed_at_zero_and_releases_cleanly() {
        let mut m = vacuum_motor();
        let ch = channel(true, false, 1.0);
        for _ in 0..100 {
            m.step(&ch, 0.01);
        }
        m.set_stalled(true);
        assert_eq!(m.speed_radps, 0.0);
        for _ in 0..10 {
            m.step(&ch, 0.01);
            assert_eq!(m.speed_radps, 0.0);
        }
        m.set_stalled(false);
        for _ in 0..300 {
            m.step(&ch, 0.01);
        }
        assert!((m.speed_radps - m.max_speed_radps).abs() / m.max_speed_radps < 1e-6);
    }

    #[test]
    fn encoder_tick_examples() {
        let mut m = vacuum_motor();
        m.cumulative_angle_rad = TAU;
        assert_eq!(m.encoder_ticks(600), 600);
        m.cumulative_angle_rad = 0.0;
        assert_eq!(m.encoder_ticks(600), 0);
        m.cumulative_angle_rad = -std::f64::consts::PI;
        assert_eq!(m.encoder_ticks(600), -300);
    }

    #[test]
    fn encoder_is_monotone_while_driving_forward() {
        let mut m = MotorState::new(DRIVE_SUPPLY_VOLTS, 100.0, 0.25);
        let ch = channel(true, false, 0.8);
        let mut prev = m.encoder_ticks(600);
        for _ in 0..500 {
            m.step(&ch, 0.01);
            let ticks = m.encoder_ticks(600);
            assert!(ticks >= prev);
            prev = ticks;
        }
    }

    fn test_ranger(sigma: f64) -> UltrasonicRanger {
        UltrasonicRanger {
            min_range_m: 0.02,
            max_range_m: 4.0,
            noise_sigma_m: sigma,
            dropout: false,
        }
    }

    #[test]
    fn noise_free_ranging_returns_the_true_distance() {
        let mut rng = stream_rng(1, RngStream::Ultrasonic);
        match test_ranger(0.0).read(0.10, &mut rng) {
            RangeReading::Distance(d) => assert_eq!(d, 0.10),
            RangeReading::Timeout => panic!("expected a distance"),
        }
    }

    #[test]
    fn out_of_envelope_and_dropout_time_out() {
        let mut rng = stream_rng(1, RngStream::Ultrasonic);
        assert_eq!(test_ranger(0.0).read(5.0, &mut rng), RangeReading::Timeout);
        assert_eq!(test_ranger(0.0).read(0.01, &mut rng), RangeReading::Timeout);
        let mut dead = test_ranger(0.0);
        dead.dropout = true;
        assert_eq!(dead.read(0.10, &mut rng), RangeReading::Timeout);
    }

    #[test]
    fn ranging_noise_statistics_match_the_model() {
        let ranger = test_ranger(0.003);
        let mut rng = stream_rng(42, RngStream::Ultrasonic);
        let n = 10_000;
        let mut readings = Vec::with_capacity(n);
        for _ in 0..n {
            match ranger.read(0.10, &mut rng) {
                RangeReading::Distance(d) => readings.push(d),
                RangeReading::Timeout => panic!("unexpected timeout"),
            }
        }
        let mean = readings.iter().sum::<f64>() / n as f64;
        let var = readings.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma = var.sqrt();
        assert!((mean - 0.10).abs() < 1e-4, "mean {mean}");
        assert!((sigma - 0.003).abs() / 0.003 < 0.10, "sigma {sigma}");
    }

    #[test]
    fn readings_never_fall_below_min_range() {
        let ranger = UltrasonicRanger {
            min_range_m: 0.02,
            max_range_m: 4.0,
            noise_sigma_m: 0.05,
            dropout: false,
        };
        let mut rng = stream_rng(7, RngStream::Ultrasonic);
        for _ in 0..2000 {
            if let RangeReading::Distance(d) = ranger.read(0.025, &mut rng) {
                assert!(d >= 0.02);
            }
        }
    }

    #[test]
    fn servo_pulse_endpoints_and_midpoint() {
        assert_eq!(servo_command(0.0).unwrap(), 1.0);
        assert_eq!(servo_command(1.0).unwrap(), 2.0);
        assert_eq!(servo_command(0.5).unwrap(), 1.5);
        assert!(matches!(servo_command(1.2), Err(Error::Argument(_))));
        assert!(matches!(servo_command(-0.2), Err(Error::Argument(_))));
    }

    #[test]
    fn bridge_channel_assignment_is_total_and_distinct() {
        let mut seen: Vec<&str> = Actuator::ALL.iter().map(|a| a.bridge_channel()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 4);
    }

    proptest! {
        #[test]
        fn speed_magnitude_never_exceeds_max(
            schedule in proptest::collection::vec(
                (any::<bool>(), any::<bool>(), 0.0f64..=1.0, 1usize..20),
                1..40,
            )
        ) {
            let mut m = vacuum_motor();
            for (in1, in2, duty, steps) in schedule {
                let ch = channel(in1, in2, duty);
                for _ in 0..steps {
                    m.step(&ch, 0.01);
                    prop_assert!(m.speed_radps.abs() <= m.max_speed_radps + 1e-9);
                }
            }
        }
    }
}
