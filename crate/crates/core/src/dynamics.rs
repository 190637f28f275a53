//! Inverse dynamics of the two-input five-bar.
//!
//! Generalised coordinates are the two motor angles `(theta2, theta5)`. The
//! four moving links are uniform slender rods; an optional point mass rides
//! on the effector joint. Kinetic energy is evaluated directly from link
//! velocities, the mass matrix is read off it by polarisation, and its
//! configuration derivatives come from central differences.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{wrap_angle, Point};
use crate::mechanism::{forward_kinematics, Assembly, ClosureTrace, MechanismDims};
use crate::motion::{differentiate, MotionProfile};
use crate::table;

const MM: f64 = 1e-3;

/// Step (rad) for configuration derivatives of the mass matrix and
/// potential.
pub const CONFIG_STEP: f64 = 1e-6;

pub const TORQUE_CSV_HEADER: [&str; 3] = ["theta2_deg", "tau_cv", "tau_servo"];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InertialParams {
    /// Linear density of every link, kg/m.
    pub mass_per_length: f64,
    /// Point mass carried at the effector joint, kg.
    pub effector_mass: f64,
    /// Gravitational acceleration in the mechanism plane, m/s^2.
    pub gravity: Point,
}

impl Default for InertialParams {
    fn default() -> Self {
        Self {
            mass_per_length: 1.0,
            effector_mass: 0.0,
            gravity: Point::ORIGIN,
        }
    }
}

impl InertialParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.mass_per_length > 0.0 && self.mass_per_length.is_finite()) {
            return Err(invalid("mass_per_length must be positive"));
        }
        if !(self.effector_mass >= 0.0 && self.effector_mass.is_finite()) {
            return Err(invalid("effector_mass must be non-negative"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mass_per_length: self.mass_per_length * factor,
            effector_mass: self.effector_mass * factor,
            gravity: self.gravity,
        }
    }
}

/// Generalised coordinates or their rates: `[theta2, theta5]`.
pub type Coords = [f64; 2];
pub type MassMatrix = [[f64; 2]; 2];

/// The linkage with its inertia, in one assembly.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Linkage {
    pub dims: MechanismDims,
    pub inertial: InertialParams,
    pub assembly: Assembly,
}

/// Positions and angular rates of every link at one instant.
struct LinkState {
    cv_tip: Point,
    servo_tip: Point,
    effector: Point,
    theta2: f64,
    theta3: f64,
    theta4: f64,
    theta5: f64,
    rates: [f64; 4],
}

impl Linkage {
    pub fn new(dims: MechanismDims, inertial: InertialParams, assembly: Assembly) -> Self {
        Self {
            dims,
            inertial,
            assembly,
        }
    }

    fn state(&self, q: Coords, qdot: Coords) -> Option<LinkState> {
        let pose = forward_kinematics(&self.dims, q[0], q[1], self.assembly)?;
        let (p, qq, r, s) = (self.dims.p, self.dims.q, self.dims.r, self.dims.s);
        let u = Point::from_angle;
        let v_cv = u(q[0]).perp() * (p * qdot[0]);
        let v_servo = u(q[1]).perp() * (s * qdot[1]);
        // q w3 perp(u3) - r w4 perp(u4) = v_servo - v_cv
        let col3 = u(pose.theta3).perp() * qq;
        let col4 = u(pose.theta4).perp() * (-r);
        let det = col3.cross(col4);
        if det.abs() < 1e-12 * qq * r {
            return None;
        }
        let rhs = v_servo - v_cv;
        let w3 = rhs.cross(col4) / det;
        let w4 = col3.cross(rhs) / det;
        Some(LinkState {
            cv_tip: pose.cv_tip,
            servo_tip: pose.servo_tip,
            effector: pose.effector,
            theta2: q[0],
            theta3: pose.theta3,
            theta4: pose.theta4,
            theta5: q[1],
            rates: [qdot[0], w3, w4, qdot[1]],
        })
    }

    /// The two mass channels, each scaled to unit mass: the rods per unit
    /// linear density and the effector point per unit mass. Every public
    /// quantity is a mass-weighted sum over them, so it is linear in the
    /// masses up to rounding of the final sum.
    fn channels(&self) -> impl Iterator<Item = (f64, Linkage)> + '_ {
        let g = self.inertial.gravity;
        [
            (
                self.inertial.mass_per_length,
                InertialParams {
                    mass_per_length: 1.0,
                    effector_mass: 0.0,
                    gravity: g,
                },
            ),
            (
                self.inertial.effector_mass,
                InertialParams {
                    mass_per_length: 0.0,
                    effector_mass: 1.0,
                    gravity: g,
                },
            ),
        ]
        .into_iter()
        .filter(|(weight, _)| *weight != 0.0)
        .map(|(weight, inertial)| (weight, Linkage { inertial, ..*self }))
    }

    fn weighted<const N: usize>(
        &self,
        f: impl Fn(&Linkage) -> Option<[f64; N]>,
    ) -> Option<[f64; N]> {
        let mut total = [0.0; N];
        for (weight, unit) in self.channels() {
            for (t, v) in total.iter_mut().zip(f(&unit)?) {
                *t += weight * v;
            }
        }
        Some(total)
    }

    /// Total kinetic energy (J); `None` where the linkage cannot assemble or
    /// sits at a dead centre.
    pub fn kinetic_energy(&self, q: Coords, qdot: Coords) -> Option<f64> {
        self.weighted(|l| l.raw_kinetic_energy(q, qdot).map(|e| [e]))
            .map(|[e]| e)
    }

    /// Gravitational potential energy (J) relative to the plane origin.
    pub fn potential_energy(&self, q: Coords) -> Option<f64> {
        self.weighted(|l| l.raw_potential_energy(q).map(|e| [e]))
            .map(|[e]| e)
    }

    /// Mass matrix at `q`, exact for the quadratic kinetic energy.
    pub fn mass_matrix(&self, q: Coords) -> Option<MassMatrix> {
        let flat = self.weighted(|l| l.raw_mass_matrix(q).map(|m| [m[0][0], m[0][1], m[1][1]]))?;
        Some([[flat[0], flat[1]], [flat[1], flat[2]]])
    }

    /// Velocity-product and gravity terms: `tau = M qddot + bias`.
    pub fn bias_forces(&self, q: Coords, qdot: Coords) -> Option<Coords> {
        self.weighted(|l| l.raw_bias_forces(q, qdot))
    }

    /// Motor torques (Nm) needed for the motion `(q, qdot, qddot)`.
    pub fn torques(&self, q: Coords, qdot: Coords, qddot: Coords) -> Option<Coords> {
        self.weighted(|l| l.raw_torques(q, qdot, qddot))
    }

    // Single-channel evaluations at whatever masses `self` carries.

    fn raw_kinetic_energy(&self, q: Coords, qdot: Coords) -> Option<f64> {
        let st = self.state(q, qdot)?;
        let mu = self.inertial.mass_per_length;
        let [w2, w3, w4, w5] = st.rates;
        let (p, qq, r, s) = (
            self.dims.p * MM,
            self.dims.q * MM,
            self.dims.r * MM,
            self.dims.s * MM,
        );
        let u = Point::from_angle;

        let crank = |len: f64, w: f64| 0.5 * (mu * len * len * len / 3.0) * w * w;
        let coupler = |base_velocity: Point, len: f64, angle: f64, w: f64| {
            let mass = mu * len;
            let centre = base_velocity + u(angle).perp() * (0.5 * len * w);
            0.5 * mass * centre.dot(centre) + 0.5 * (mass * len * len / 12.0) * w * w
        };

        let v_cv_tip = u(st.theta2).perp() * (p * w2);
        let v_servo_tip = u(st.theta5).perp() * (s * w5);
        let v_effector = v_cv_tip + u(st.theta3).perp() * (qq * w3);

        Some(
            crank(p, w2)
                + crank(s, w5)
                + coupler(v_cv_tip, qq, st.theta3, w3)
                + coupler(v_servo_tip, r, st.theta4, w4)
                + 0.5 * self.inertial.effector_mass * v_effector.dot(v_effector),
        )
    }

    fn raw_potential_energy(&self, q: Coords) -> Option<f64> {
        let g = self.inertial.gravity;
        if g == Point::ORIGIN {
            return Some(0.0);
        }
        let st = self.state(q, [0.0, 0.0])?;
        let mu = self.inertial.mass_per_length;
        let d = &self.dims;
        let mid = |a: Point, b: Point| (a + b) * (0.5 * MM);
        let bodies = [
            (mu * d.p * MM, mid(d.cv_ground, st.cv_tip)),
            (mu * d.s * MM, mid(d.servo_ground, st.servo_tip)),
            (mu * d.q * MM, mid(st.cv_tip, st.effector)),
            (mu * d.r * MM, mid(st.servo_tip, st.effector)),
            (self.inertial.effector_mass, st.effector * MM),
        ];
        Some(bodies.iter().map(|(m, c)| -m * g.dot(*c)).sum())
    }

    fn raw_mass_matrix(&self, q: Coords) -> Option<MassMatrix> {
        let m11 = 2.0 * self.raw_kinetic_energy(q, [1.0, 0.0])?;
        let m22 = 2.0 * self.raw_kinetic_energy(q, [0.0, 1.0])?;
        let m12 = self.raw_kinetic_energy(q, [1.0, 1.0])? - 0.5 * (m11 + m22);
        Some([[m11, m12], [m12, m22]])
    }

    fn raw_mass_matrix_gradient(&self, q: Coords) -> Option<[MassMatrix; 2]> {
        let mut out = [[[0.0; 2]; 2]; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut plus = q;
            let mut minus = q;
            plus[k] += CONFIG_STEP;
            minus[k] -= CONFIG_STEP;
            let (mp, mm) = (self.raw_mass_matrix(plus)?, self.raw_mass_matrix(minus)?);
            for i in 0..2 {
                for j in 0..2 {
                    slot[i][j] = (mp[i][j] - mm[i][j]) / (2.0 * CONFIG_STEP);
                }
            }
        }
        Some(out)
    }

    fn raw_potential_gradient(&self, q: Coords) -> Option<Coords> {
        if self.inertial.gravity == Point::ORIGIN {
            return Some([0.0, 0.0]);
        }
        let mut out = [0.0; 2];
        for (k, slot) in out.iter_mut().enumerate() {
            let mut plus = q;
            let mut minus = q;
            plus[k] += CONFIG_STEP;
            minus[k] -= CONFIG_STEP;
            *slot = (self.raw_potential_energy(plus)? - self.raw_potential_energy(minus)?)
                / (2.0 * CONFIG_STEP);
        }
        Some(out)
    }

    fn raw_bias_forces(&self, q: Coords, qdot: Coords) -> Option<Coords> {
        let dm = self.raw_mass_matrix_gradient(q)?;
        let gravity = self.raw_potential_gradient(q)?;
        let mut bias = [0.0; 2];
        for (i, b) in bias.iter_mut().enumerate() {
            // (dM/dt qdot)_i - 1/2 qdot^T dM/dq_i qdot
            let mut value = 0.0;
            for j in 0..2 {
                for k in 0..2 {
                    value +=
                        dm[k][i][j] * qdot[k] * qdot[j] - 0.5 * dm[i][j][k] * qdot[j] * qdot[k];
                }
            }
            *b = value + gravity[i];
        }
        Some(bias)
    }

    fn raw_torques(&self, q: Coords, qdot: Coords, qddot: Coords) -> Option<Coords> {
        let m = self.raw_mass_matrix(q)?;
        let bias = self.raw_bias_forces(q, qdot)?;
        Some([
            m[0][0] * qddot[0] + m[0][1] * qddot[1] + bias[0],
            m[1][0] * qddot[0] + m[1][1] * qddot[1] + bias[1],
        ])
    }
}

/// Min, max and RMS of one motor's torque.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueSummary {
    pub min: f64,
    pub max: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TorqueProfile {
    pub theta2: Vec<f64>,
    pub tau_cv: Vec<f64>,
    pub tau_servo: Vec<f64>,
    pub cv: TorqueSummary,
    pub servo: TorqueSummary,
}

impl TorqueProfile {
    pub fn to_csv(&self) -> String {
        let degrees: Vec<f64> = self.theta2.iter().map(|t| t.to_degrees()).collect();
        table::write_table(
            &TORQUE_CSV_HEADER,
            &[&degrees, &self.tau_cv, &self.tau_servo],
        )
    }
}

pub fn torque_summary(values: &[f64]) -> TorqueSummary {
    assert!(!values.is_empty(), "torque summary of an empty profile");
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let rms = (values.iter().map(|v| v * v).sum::<f64>() / values.len() as f64).sqrt();
    TorqueSummary { min, max, rms }
}

/// Motor torques along a tracked cycle with the CV axis at `cv_speed`.
///
/// The trace must be fully mobile and sampled uniformly in theta2.
pub fn inverse_dynamics(
    dims: &MechanismDims,
    inertial: &InertialParams,
    trace: &ClosureTrace,
    cv_speed: f64,
) -> Result<TorqueProfile> {
    inertial.validate()?;
    if trace.m > 0 {
        return Err(Error::ImmobileTrace { immobile: trace.m });
    }
    let k = trace.poses.len();
    let uniform = trace.poses.iter().enumerate().all(|(i, p)| {
        (wrap_angle(p.theta2 - std::f64::consts::TAU * i as f64 / k as f64)).abs() < 1e-9
    });
    if !uniform {
        return Err(invalid(
            "inverse dynamics needs theta2 sampled uniformly from 0",
        ));
    }
    let servo = MotionProfile::new(trace.theta5(), cv_speed);
    let (velocity, acceleration) = differentiate(&servo)?;

    let mut tau_cv = Vec::with_capacity(k);
    let mut tau_servo = Vec::with_capacity(k);
    for (i, pose) in trace.poses.iter().enumerate() {
        let cv_tip = crate::geometry::crank_tip(dims.cv_ground, dims.p, pose.theta2);
        let servo_tip = crate::geometry::crank_tip(dims.servo_ground, dims.s, pose.theta5);
        let linkage = Linkage::new(
            *dims,
            *inertial,
            Assembly::of(cv_tip, servo_tip, pose.actual),
        );
        let tau = linkage
            .torques(
                [pose.theta2, pose.theta5],
                [cv_speed, velocity[i]],
                [0.0, acceleration[i]],
            )
            .ok_or_else(|| invalid(format!("linkage at a dead centre at sample {i}")))?;
        tau_cv.push(tau[0]);
        tau_servo.push(tau[1]);
    }
    Ok(TorqueProfile {
        theta2: trace.poses.iter().map(|p| p.theta2).collect(),
        cv: torque_summary(&tau_cv),
        servo: torque_summary(&tau_servo),
        tau_cv,
        tau_servo,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linkage() -> Linkage {
        Linkage::new(
            MechanismDims::REFERENCE,
            InertialParams::default(),
            Assembly::Positive,
        )
    }

    #[test]
    fn at_rest_without_gravity_needs_no_torque() {
        let tau = linkage()
            .torques([0.4, 0.9], [0.0, 0.0], [0.0, 0.0])
            .unwrap();
        assert_eq!(tau, [0.0, 0.0]);
    }

    #[test]
    fn mass_matrix_is_positive_definite() {
        let m = linkage().mass_matrix([1.0, 0.5]).unwrap();
        assert!(m[0][0] > 0.0 && m[1][1] > 0.0);
        assert!(m[0][0] * m[1][1] - m[0][1] * m[1][0] > 0.0);
    }

    #[test]
    fn static_gravity_load_balances_potential_slope() {
        let mut l = linkage();
        l.inertial.gravity = Point::new(0.0, -9.81);
        let q = [0.7, 0.4];
        let tau = l.torques(q, [0.0, 0.0], [0.0, 0.0]).unwrap();
        let h = 1e-5;
        let dv = (l.potential_energy([q[0] + h, q[1]]).unwrap()
            - l.potential_energy([q[0] - h, q[1]]).unwrap())
            / (2.0 * h);
        assert!((tau[0] - dv).abs() < 1e-6 * dv.abs().max(1e-3));
    }

    #[test]
    fn summary_goldens() {
        let s = torque_summary(&[2.5; 4]);
        assert_eq!((s.min, s.max, s.rms), (2.5, 2.5, 2.5));
        let s = torque_summary(&[-1.0, 1.0]);
        assert_eq!((s.min, s.max, s.rms), (-1.0, 1.0, 1.0));
        let s = torque_summary(&[-3.0]);
        assert_eq!(s.rms, 3.0);
    }

    #[test]
    fn immobile_trace_rejected() {
        let trace = ClosureTrace {
            poses: vec![],
            m: 2,
            branch_id: 0,
        };
        let err = inverse_dynamics(
            &MechanismDims::REFERENCE,
            &InertialParams::default(),
            &trace,
            1.0,
        );
        assert_eq!(err, Err(Error::ImmobileTrace { immobile: 2 }));
    }
}
