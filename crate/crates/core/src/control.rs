//! Two-axis servo loop simulation: a discrete PID controller with velocity
//! feedback and feedforward on each motor, a 12-bit style output stage,
//! resolver quantisation and the coupled linkage dynamics as the plant.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::dynamics::{Coords, InertialParams, Linkage};
use crate::error::{invalid, Error, Result};
use crate::mechanism::{Assembly, MechanismDims, SAMPLE_ASSEMBLY};
use crate::motion::MotionProfile;
use crate::table;

/// Full-scale output voltage.
pub const V_MAX: f64 = 10.0;
/// Controller counts that map onto full scale.
pub const FULL_SCALE_COUNTS: f64 = 2048.0;
/// Position error magnitude treated as divergence.
pub const DIVERGENCE_COUNTS: i64 = 1_000_000;

pub const SIMLOG_CSV_HEADER: [&str; 7] = [
    "t",
    "demand_counts",
    "measured_counts",
    "error_counts",
    "demand_cps",
    "measured_cps",
    "volts",
];

/// Per-term scaling divisors of the controller.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GainDivisors {
    pub p: f64,
    pub i: f64,
    pub d: f64,
    pub v: f64,
    pub f: f64,
}

impl Default for GainDivisors {
    fn default() -> Self {
        Self {
            p: 256.0,
            i: 256.0,
            d: 256.0,
            v: 256.0,
            f: 256.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    pub kv: f64,
    pub kf: f64,
    pub divisors: GainDivisors,
}

/// Defaults are the shipped tuning for the reference machine at 60 rpm.
impl Default for ControllerGains {
    fn default() -> Self {
        Self {
            kp: 2560.0,
            ki: 8.0,
            kd: 0.0,
            kv: 100_000.0,
            kf: 100_000.0,
            divisors: GainDivisors::default(),
        }
    }
}

impl ControllerGains {
    /// Every gain zero: the controller outputs nothing.
    pub fn zero() -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            kd: 0.0,
            kv: 0.0,
            kf: 0.0,
            divisors: GainDivisors::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.divisors;
        let all = [self.kp, self.ki, self.kd, self.kv, self.kf];
        if all.iter().any(|g| !g.is_finite()) {
            return Err(invalid("controller gains must be finite"));
        }
        if self.kp < 0.0 {
            return Err(invalid(format!("kp must be non-negative, got {}", self.kp)));
        }
        if [d.p, d.i, d.d, d.v, d.f]
            .iter()
            .any(|v| !(*v > 0.0 && v.is_finite()))
        {
            return Err(invalid("gain divisors must be positive"));
        }
        Ok(())
    }

    /// Largest |sum of errors| the integrator may hold: the value that on its
    /// own drives the output to full scale. Unbounded when `ki` is zero.
    pub fn integral_limit(&self) -> i64 {
        if self.ki == 0.0 {
            return i64::MAX;
        }
        let limit = FULL_SCALE_COUNTS * self.divisors.i / self.ki.abs();
        if limit >= i64::MAX as f64 {
            i64::MAX
        } else {
            limit.floor() as i64
        }
    }
}

/// Gains for both axes, as stored in a gains file.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisGains {
    pub cv: ControllerGains,
    pub servo: ControllerGains,
}

/// One controller update. All arguments are resolver counts; returns the
/// saturated output voltage.
#[allow(clippy::too_many_arguments)]
pub fn controller_step(
    gains: &ControllerGains,
    e: i64,
    error_sum: i64,
    e_prev: i64,
    p: i64,
    p_prev: i64,
    d: i64,
    d_prev: i64,
) -> f64 {
    let div = &gains.divisors;
    let raw = gains.kp / div.p * e as f64
        + gains.ki / div.i * error_sum as f64
        + gains.kd / div.d * (e - e_prev) as f64
        - gains.kv / div.v * (p - p_prev) as f64
        + gains.kf / div.f * (d - d_prev) as f64;
    (raw * (V_MAX / FULL_SCALE_COUNTS)).clamp(-V_MAX, V_MAX)
}

/// Resolver reading of `angle` radians, accumulated over whole turns.
pub fn quantize(angle: f64, resolution: u32) -> i64 {
    (angle / TAU * resolution as f64).floor() as i64
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AxisParams {
    /// Motor torque per volt of demand, Nm/V.
    pub amplifier_gain: f64,
    /// Rotor inertia, kg m^2.
    pub rotor_inertia: f64,
    /// Viscous friction, Nm s/rad.
    pub friction: f64,
}

impl Default for AxisParams {
    fn default() -> Self {
        Self {
            amplifier_gain: 0.5,
            rotor_inertia: 1e-4,
            friction: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantConfig {
    pub cv: AxisParams,
    pub servo: AxisParams,
    pub inertial: InertialParams,
    /// Controller period, s.
    pub sample_period: f64,
    /// Resolver counts per revolution.
    pub resolution: u32,
    /// CV demand speed, rad/s.
    pub cv_speed: f64,
    pub assembly: Assembly,
    /// When false each motor drives only its own crank and rotor; the
    /// coupler links and all cross-coupling are dropped.
    pub coupled: bool,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            cv: AxisParams::default(),
            servo: AxisParams::default(),
            inertial: InertialParams::default(),
            sample_period: 1e-3,
            resolution: 4096,
            cv_speed: TAU,
            assembly: SAMPLE_ASSEMBLY,
            coupled: true,
        }
    }
}

impl PlantConfig {
    pub fn validate(&self) -> Result<()> {
        self.inertial.validate()?;
        for (name, axis) in [("cv", &self.cv), ("servo", &self.servo)] {
            if !(axis.rotor_inertia > 0.0 && axis.rotor_inertia.is_finite()) {
                return Err(invalid(format!("{name} rotor_inertia must be positive")));
            }
            if !(axis.friction >= 0.0 && axis.friction.is_finite()) {
                return Err(invalid(format!("{name} friction must be non-negative")));
            }
            if !axis.amplifier_gain.is_finite() {
                return Err(invalid(format!("{name} amplifier_gain must be finite")));
            }
        }
        if !(self.sample_period > 0.0 && self.sample_period.is_finite()) {
            return Err(invalid("sample_period must be positive"));
        }
        if self.resolution == 0 {
            return Err(invalid("resolution must be at least 1"));
        }
        if !self.cv_speed.is_finite() {
            return Err(invalid("cv_speed must be finite"));
        }
        Ok(())
    }

    /// Controller samples per CV revolution. With the CV axis at rest a
    /// nominal one-second cycle is used.
    pub fn samples_per_cycle(&self) -> usize {
        let period = if self.cv_speed == 0.0 {
            1.0
        } else {
            TAU / self.cv_speed.abs()
        };
        ((period / self.sample_period).round() as usize).max(1)
    }
}

/// The mechanical plant: linkage plus motor rotors and friction.
#[derive(Clone, Debug)]
pub struct Machine {
    linkage: Linkage,
    plant: PlantConfig,
}

impl Machine {
    pub fn new(dims: MechanismDims, plant: PlantConfig) -> Self {
        Self {
            linkage: Linkage::new(dims, plant.inertial, plant.assembly),
            plant,
        }
    }

    fn crank_inertias(&self) -> Coords {
        let mu = self.plant.inertial.mass_per_length;
        let rod = |len_mm: f64| {
            let len = len_mm * 1e-3;
            mu * len * len * len / 3.0
        };
        [rod(self.linkage.dims.p), rod(self.linkage.dims.s)]
    }

    /// Joint accelerations under motor torques `tau`; `None` when the
    /// linkage cannot be assembled at `q`.
    pub fn accelerations(&self, q: Coords, qdot: Coords, tau: Coords) -> Option<Coords> {
        let rotor = [self.plant.cv.rotor_inertia, self.plant.servo.rotor_inertia];
        let friction = [self.plant.cv.friction, self.plant.servo.friction];
        let net = |i: usize, bias: f64| tau[i] - friction[i] * qdot[i] - bias;
        if !self.plant.coupled {
            let crank = self.crank_inertias();
            return Some([
                net(0, 0.0) / (crank[0] + rotor[0]),
                net(1, 0.0) / (crank[1] + rotor[1]),
            ]);
        }
        let mut m = self.linkage.mass_matrix(q)?;
        m[0][0] += rotor[0];
        m[1][1] += rotor[1];
        let bias = self.linkage.bias_forces(q, qdot)?;
        let rhs = [net(0, bias[0]), net(1, bias[1])];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        if !(det > 0.0 && det.is_finite()) {
            return None;
        }
        Some([
            (m[1][1] * rhs[0] - m[0][1] * rhs[1]) / det,
            (m[0][0] * rhs[1] - m[1][0] * rhs[0]) / det,
        ])
    }

    /// Kinetic plus potential energy of links and rotors, J.
    pub fn energy(&self, q: Coords, qdot: Coords) -> Option<f64> {
        let rotor = [self.plant.cv.rotor_inertia, self.plant.servo.rotor_inertia];
        let rotors = 0.5 * (rotor[0] * qdot[0] * qdot[0] + rotor[1] * qdot[1] * qdot[1]);
        if !self.plant.coupled {
            let crank = self.crank_inertias();
            return Some(
                rotors + 0.5 * (crank[0] * qdot[0] * qdot[0] + crank[1] * qdot[1] * qdot[1]),
            );
        }
        Some(rotors + self.linkage.kinetic_energy(q, qdot)? + self.linkage.potential_energy(q)?)
    }
}

/// Servo demand as a smooth periodic function of the CV angle: a
/// Catmull-Rom spline through the profile samples, unrolled across cycles
/// for a rotating axis. Returns the angle and its slope per radian of CV.
pub fn profile_demand(profile: &MotionProfile, theta2: f64) -> (f64, f64) {
    let k = profile.len();
    let h = TAU / k as f64;
    let x = theta2 / h;
    let i = x.floor();
    let u = x - i;
    let i = i as isize;
    let (p0, p1, p2, p3) = (
        profile.at(i - 1),
        profile.at(i),
        profile.at(i + 1),
        profile.at(i + 2),
    );
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = 0.5 * (p2 - p0);
    let value = ((a * u + b) * u + c) * u + p1;
    let slope = ((3.0 * a * u + 2.0 * b) * u + c) / h;
    (value, slope)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisLogSample {
    pub t: f64,
    pub demand: i64,
    pub measured: i64,
    pub error: i64,
    pub demand_cps: f64,
    pub measured_cps: f64,
    pub volts: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimLog {
    pub samples_per_cycle: usize,
    pub cv: Vec<AxisLogSample>,
    pub servo: Vec<AxisLogSample>,
}

impl SimLog {
    pub fn axis_csv(samples: &[AxisLogSample]) -> String {
        let col = |f: &dyn Fn(&AxisLogSample) -> f64| samples.iter().map(f).collect::<Vec<f64>>();
        let columns = [
            col(&|s| s.t),
            col(&|s| s.demand as f64),
            col(&|s| s.measured as f64),
            col(&|s| s.error as f64),
            col(&|s| s.demand_cps),
            col(&|s| s.measured_cps),
            col(&|s| s.volts),
        ];
        let refs: Vec<&[f64]> = columns.iter().map(Vec::as_slice).collect();
        table::write_table(&SIMLOG_CSV_HEADER, &refs)
    }

    /// Parses one axis log back.
    pub fn axis_from_csv(text: &str) -> Result<Vec<AxisLogSample>> {
        let c = table::read_table(text, &SIMLOG_CSV_HEADER)?;
        Ok((0..c[0].len())
            .map(|i| AxisLogSample {
                t: c[0][i],
                demand: c[1][i] as i64,
                measured: c[2][i] as i64,
                error: c[3][i] as i64,
                demand_cps: c[4][i],
                measured_cps: c[5][i],
                volts: c[6][i],
            })
            .collect())
    }
}

struct AxisLoop {
    gains: ControllerGains,
    limit: i64,
    error_sum: i64,
    e_prev: i64,
    p_prev: i64,
    d_prev: i64,
}

impl AxisLoop {
    fn new(gains: ControllerGains, p_prev: i64, d_prev: i64) -> Self {
        Self {
            limit: gains.integral_limit(),
            gains,
            error_sum: 0,
            e_prev: d_prev - p_prev,
            p_prev,
            d_prev,
        }
    }

    fn update(&mut self, d: i64, p: i64) -> (i64, f64) {
        let e = d - p;
        self.error_sum = self
            .error_sum
            .saturating_add(e)
            .clamp(-self.limit, self.limit);
        let v = controller_step(
            &self.gains,
            e,
            self.error_sum,
            self.e_prev,
            p,
            self.p_prev,
            d,
            self.d_prev,
        );
        self.e_prev = e;
        self.p_prev = p;
        self.d_prev = d;
        (e, v)
    }
}

/// Runs both axes for `cycles` CV revolutions and logs every controller
/// sample.
///
/// The CV demand is a ramp at `plant.cv_speed`; the servo demand follows
/// `servo_profile` against the CV angle. The plant starts on its demand
/// with the demanded velocity and is integrated with semi-implicit Euler at
/// the controller period.
pub fn simulate(
    dims: &MechanismDims,
    plant: &PlantConfig,
    gains_cv: &ControllerGains,
    gains_servo: &ControllerGains,
    servo_profile: &MotionProfile,
    cycles: usize,
) -> Result<SimLog> {
    dims.validate()?;
    plant.validate()?;
    gains_cv.validate()?;
    gains_servo.validate()?;
    if servo_profile.is_empty() || servo_profile.values.iter().any(|v| !v.is_finite()) {
        return Err(invalid("servo profile must be non-empty and finite"));
    }
    if cycles == 0 {
        return Err(invalid("cycles must be at least 1"));
    }

    let machine = Machine::new(*dims, plant.clone());
    let res = plant.resolution;
    let to_cps = res as f64 / TAU;
    let dt = plant.sample_period;
    let demand = |t: f64| -> (Coords, Coords) {
        let theta2 = plant.cv_speed * t;
        let (theta5, slope) = profile_demand(servo_profile, theta2);
        ([theta2, theta5], [plant.cv_speed, slope * plant.cv_speed])
    };

    let (mut q, mut qdot) = demand(0.0);
    let (before, _) = demand(-dt);
    let previous = [
        quantize(q[0] - qdot[0] * dt, res),
        quantize(q[1] - qdot[1] * dt, res),
    ];
    let mut loops = [
        AxisLoop::new(*gains_cv, previous[0], quantize(before[0], res)),
        AxisLoop::new(*gains_servo, previous[1], quantize(before[1], res)),
    ];

    let total = cycles * plant.samples_per_cycle();
    let mut log = SimLog {
        samples_per_cycle: plant.samples_per_cycle(),
        cv: Vec::with_capacity(total),
        servo: Vec::with_capacity(total),
    };
    for n in 0..total {
        let t = n as f64 * dt;
        let (target, target_rate) = demand(t);
        let mut volts = [0.0; 2];
        for axis in 0..2 {
            let d = quantize(target[axis], res);
            let p = quantize(q[axis], res);
            let (e, v) = loops[axis].update(d, p);
            if e.abs() > DIVERGENCE_COUNTS {
                let name = if axis == 0 { "cv" } else { "servo" };
                return Err(Error::UnstableSimulation {
                    sample: n,
                    axis: name,
                    error: e,
                });
            }
            volts[axis] = v;
            let entry = AxisLogSample {
                t,
                demand: d,
                measured: p,
                error: e,
                demand_cps: target_rate[axis] * to_cps,
                measured_cps: qdot[axis] * to_cps,
                volts: v,
            };
            if axis == 0 {
                log.cv.push(entry)
            } else {
                log.servo.push(entry)
            }
        }
        let tau = [
            plant.cv.amplifier_gain * volts[0],
            plant.servo.amplifier_gain * volts[1],
        ];
        let acc = machine
            .accelerations(q, qdot, tau)
            .filter(|a| a.iter().all(|v| v.is_finite()))
            .ok_or(Error::LinkageJammed { sample: n })?;
        for i in 0..2 {
            qdot[i] += acc[i] * dt;
            q[i] += qdot[i] * dt;
        }
    }
    Ok(log)
}

/// Zero-lag Pearson correlation between consecutive cycles of `errors`,
/// ignoring the first `skip` cycles. A pair of constant cycles correlates
/// as 1 when equal and 0 otherwise.
pub fn cycle_correlations(errors: &[i64], samples_per_cycle: usize, skip: usize) -> Vec<f64> {
    let cycles: Vec<&[i64]> = errors
        .chunks_exact(samples_per_cycle.max(1))
        .skip(skip)
        .collect();
    cycles.windows(2).map(|w| pearson(w[0], w[1])).collect()
}

fn pearson(a: &[i64], b: &[i64]) -> f64 {
    let n = a.len() as f64;
    let mean = |x: &[i64]| x.iter().map(|&v| v as f64).sum::<f64>() / n;
    let (ma, mb) = (mean(a), mean(b));
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64 - ma, y as f64 - mb);
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    if saa == 0.0 || sbb == 0.0 {
        return if a == b { 1.0 } else { 0.0 };
    }
    sab / (saa * sbb).sqrt()
}
