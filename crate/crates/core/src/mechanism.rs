//! Five-bar geometry: the CV input dyad (p, q), the closing dyad (r, s)
//! driven by the servo, and closure tracking around a task cycle.
//!
//! The end effector is the revolute joint shared by links q and r. Its
//! achievable position at each sample comes from the input dyad alone; the
//! closing dyad then has zero, one, or two assemblies reaching it.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{crank_tip, unwrap_near, wrap_angle, Point};
use crate::motion::{harmonic_spectrum, max_harmonics};
use crate::objective::{harmonic_content, swept_area, SweptBaseline, DEFAULT_HARMONICS};

/// Relative tolerance for geometric residuals.
pub const GEOMETRIC_TOLERANCE: f64 = 1e-9;

/// Below this distance (mm) the input-dyad direction is undefined.
const TARGET_EPSILON: f64 = 1e-9;

/// Link lengths and ground pivots of a candidate mechanism (mm).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MechanismDims {
    /// CV crank.
    pub p: f64,
    /// Coupler from the CV crank tip to the end effector.
    pub q: f64,
    /// Coupler from the servo crank tip to the end effector.
    pub r: f64,
    /// Servo crank.
    pub s: f64,
    pub cv_ground: Point,
    pub servo_ground: Point,
}

impl MechanismDims {
    /// The best mechanism reported for the hybrid five-bar rig.
    pub const REFERENCE: MechanismDims = MechanismDims {
        p: 150.0,
        q: 250.0,
        r: 300.0,
        s: 150.0,
        cv_ground: Point::ORIGIN,
        servo_ground: Point::new(250.0, 0.0),
    };

    /// Virtual ground link: distance between the two motor pivots.
    pub fn ground_length(&self) -> f64 {
        self.cv_ground.distance(self.servo_ground)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("p", self.p), ("q", self.q), ("r", self.r), ("s", self.s)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(format!(
                    "link {name} must be a positive length, got {v}"
                )));
            }
        }
        let grounds = [self.cv_ground, self.servo_ground];
        if grounds
            .iter()
            .any(|g| !(g.x.is_finite() && g.y.is_finite()))
        {
            return Err(invalid("ground pivots must be finite"));
        }
        Ok(())
    }

    /// Same mechanism shifted by `offset`.
    pub fn translated(&self, offset: Point) -> Self {
        Self {
            cv_ground: self.cv_ground + offset,
            servo_ground: self.servo_ground + offset,
            ..*self
        }
    }
}

/// One precision point: CV input angle and desired effector position.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSample {
    pub theta2: f64,
    pub desired: Point,
}

/// The desired closed curve, indexed by CV input angle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSpec {
    pub samples: Vec<TaskSample>,
    /// CV input speed, rad/s.
    pub cv_speed: f64,
}

impl TaskSpec {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples.len() < 3 {
            return Err(invalid(format!(
                "a task needs at least 3 precision points, got {}",
                self.samples.len()
            )));
        }
        if !(self.cv_speed > 0.0 && self.cv_speed.is_finite()) {
            return Err(invalid(format!(
                "cv_speed must be positive, got {}",
                self.cv_speed
            )));
        }
        let mut previous = f64::NEG_INFINITY;
        for (i, sample) in self.samples.iter().enumerate() {
            let t = sample.theta2;
            if !(0.0..TAU).contains(&t) {
                return Err(invalid(format!(
                    "sample {i}: theta2 = {t} is outside [0, 2pi)"
                )));
            }
            if t <= previous {
                return Err(invalid(format!(
                    "sample {i}: theta2 values must strictly increase"
                )));
            }
            if !(sample.desired.x.is_finite() && sample.desired.y.is_finite()) {
                return Err(invalid(format!("sample {i}: desired point is not finite")));
            }
            previous = t;
        }
        Ok(())
    }

    /// True when sample `i` sits at `2 pi i / k`.
    pub fn is_uniform(&self) -> bool {
        let k = self.samples.len() as f64;
        self.samples
            .iter()
            .enumerate()
            .all(|(i, s)| (s.theta2 - TAU * i as f64 / k).abs() <= 1e-9)
    }

    pub fn translated(&self, offset: Point) -> Self {
        let samples = self
            .samples
            .iter()
            .map(|s| TaskSample {
                theta2: s.theta2,
                desired: s.desired + offset,
            })
            .collect();
        Self {
            samples,
            cv_speed: self.cv_speed,
        }
    }
}

/// The mechanism's state at one precision point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseSample {
    pub theta2: f64,
    pub theta3: f64,
    pub theta4: f64,
    pub theta5: f64,
    pub actual: Point,
    pub structural_error: f64,
    pub mobile: bool,
}

/// A whole cycle of poses along one closure branch.
///
/// `theta5` is unrolled: consecutive samples differ by the wrapped step, so
/// a servo that turns fully gains 2 pi over the cycle.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosureTrace {
    pub poses: Vec<PoseSample>,
    /// Number of immobile samples.
    pub m: usize,
    /// Which starting closure was adopted (0 or 1).
    pub branch_id: usize,
}

impl ClosureTrace {
    pub fn theta5(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.theta5).collect()
    }

    pub fn structural_errors(&self) -> Vec<f64> {
        self.poses.iter().map(|p| p.structural_error).collect()
    }

    pub fn is_mobile(&self) -> bool {
        self.m == 0
    }
}

/// Result of solving the CV input dyad towards a desired point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputDyad {
    pub theta3: f64,
    pub actual: Point,
    pub structural_error: f64,
}

/// Points link q from the CV crank tip toward `desired` and reports where
/// the effector actually lands.
pub fn solve_input_dyad(dims: &MechanismDims, theta2: f64, desired: Point) -> Result<InputDyad> {
    let tip = crank_tip(dims.cv_ground, dims.p, theta2);
    let reach = desired - tip;
    let distance = reach.norm();
    if distance < TARGET_EPSILON {
        return Err(Error::DegenerateTarget { theta2 });
    }
    let theta3 = reach.angle();
    Ok(InputDyad {
        theta3,
        actual: tip + reach * (dims.q / distance),
        structural_error: (distance - dims.q).abs(),
    })
}

/// All servo crank angles for which link r (length `dims.r`) can reach
/// `effector` from the servo crank tip.
///
/// Returns the candidates in a fixed order, `[base + phi, base - phi]`,
/// with a single entry at a fully stretched or folded dyad and none when
/// the effector is out of reach.
pub fn solve_closing_dyad(dims: &MechanismDims, effector: Point) -> Result<Vec<f64>> {
    let (r, s) = (dims.r, dims.s);
    let offset = effector - dims.servo_ground;
    let distance = offset.norm();
    if distance == 0.0 {
        if r == s {
            return Err(Error::DegenerateDyad);
        }
        return Ok(Vec::new());
    }
    let tolerance = reach_tolerance(r, s);
    if distance > r + s + tolerance || distance < (r - s).abs() - tolerance {
        return Ok(Vec::new());
    }
    let cos_phi = ((s * s + distance * distance - r * r) / (2.0 * s * distance)).clamp(-1.0, 1.0);
    let base = offset.angle();
    if cos_phi.abs() == 1.0 {
        return Ok(vec![wrap_angle(base + cos_phi.acos())]);
    }
    let phi = cos_phi.acos();
    Ok(vec![wrap_angle(base + phi), wrap_angle(base - phi)])
}

/// Slack allowed on the reach test before a closure counts as missing.
fn reach_tolerance(r: f64, s: f64) -> f64 {
    1e-12 * r.max(s).max(1.0)
}

/// Residual of both circle constraints for servo angle `theta5`.
pub fn closure_residual(dims: &MechanismDims, effector: Point, theta5: f64) -> f64 {
    let tip = crank_tip(dims.servo_ground, dims.s, theta5);
    (tip.distance(effector) - dims.r).abs()
}

/// Per-sample solutions of both dyads, before any branch is chosen.
struct SampleGeometry {
    theta2: f64,
    input: InputDyad,
    candidates: Vec<f64>,
}

fn solve_samples(dims: &MechanismDims, task: &TaskSpec) -> Result<Vec<SampleGeometry>> {
    task.samples
        .iter()
        .map(|sample| {
            let input = solve_input_dyad(dims, sample.theta2, sample.desired)?;
            let candidates = solve_closing_dyad(dims, input.actual)?;
            Ok(SampleGeometry {
                theta2: sample.theta2,
                input,
                candidates,
            })
        })
        .collect()
}

/// Follows one starting closure around the cycle by angular continuity.
fn follow_branch(
    dims: &MechanismDims,
    samples: &[SampleGeometry],
    branch_id: usize,
) -> ClosureTrace {
    let mut poses = Vec::with_capacity(samples.len());
    let mut previous: Option<f64> = None;
    let mut anchored = false;
    let mut m = 0;
    for sample in samples {
        let effector = sample.input.actual;
        let (raw, mobile) = if sample.candidates.is_empty() {
            m += 1;
            // Closest approach: the servo crank points at the effector.
            ((effector - dims.servo_ground).angle(), false)
        } else if !anchored {
            anchored = true;
            let i = branch_id.min(sample.candidates.len() - 1);
            (sample.candidates[i], true)
        } else {
            let reference = previous.expect("anchored implies a previous sample");
            let nearest = sample
                .candidates
                .iter()
                .copied()
                .min_by(|a, b| {
                    wrap_angle(a - reference)
                        .abs()
                        .total_cmp(&wrap_angle(b - reference).abs())
                })
                .expect("non-empty candidates");
            (nearest, true)
        };
        let theta5 = match previous {
            Some(reference) => unwrap_near(raw, reference),
            None => raw,
        };
        previous = Some(theta5);

        let servo_tip = crank_tip(dims.servo_ground, dims.s, theta5);
        poses.push(PoseSample {
            theta2: sample.theta2,
            theta3: sample.input.theta3,
            theta4: (effector - servo_tip).angle(),
            theta5,
            actual: effector,
            structural_error: sample.input.structural_error,
            mobile,
        });
    }
    ClosureTrace {
        poses,
        m,
        branch_id,
    }
}

/// Score used to pick between the two tracked branches.
fn branch_score(theta5: &[f64], s: f64) -> (f64, f64) {
    let swept = swept_area(theta5, s, SweptBaseline::Centered);
    let n = DEFAULT_HARMONICS.min(max_harmonics(theta5.len())).max(1);
    let harmonic = harmonic_spectrum(theta5, n)
        .map(|spectrum| harmonic_content(&spectrum))
        .unwrap_or(0.0);
    (0.75 * swept + 0.5 * harmonic, swept)
}

/// Tracks both starting closures around the task cycle and keeps the one
/// with the lower `0.75 swept + 0.5 harmonic` score (ties: lower swept
/// area, then branch 0).
pub fn track_closure(dims: &MechanismDims, task: &TaskSpec) -> Result<ClosureTrace> {
    dims.validate()?;
    task.validate()?;
    let samples = solve_samples(dims, task)?;

    let first = follow_branch(dims, &samples, 0);
    let second = follow_branch(dims, &samples, 1);
    if first.theta5() == second.theta5() {
        return Ok(first);
    }
    let (score_a, swept_a) = branch_score(&first.theta5(), dims.s);
    let (score_b, swept_b) = branch_score(&second.theta5(), dims.s);
    let pick_second = score_b < score_a || (score_b == score_a && swept_b < swept_a);
    Ok(if pick_second { second } else { first })
}

/// Which of the two input-side assemblies places the effector: the sign of
/// `(servo_tip - cv_tip) x (effector - cv_tip)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Assembly {
    #[default]
    Positive,
    Negative,
}

impl Assembly {
    pub fn sign(self) -> f64 {
        match self {
            Assembly::Positive => 1.0,
            Assembly::Negative => -1.0,
        }
    }

    /// Assembly in which `effector` sits for the given crank tips.
    pub fn of(cv_tip: Point, servo_tip: Point, effector: Point) -> Self {
        if (servo_tip - cv_tip).cross(effector - cv_tip) >= 0.0 {
            Assembly::Positive
        } else {
            Assembly::Negative
        }
    }
}

/// Joint angles from forward kinematics with both inputs given.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForwardPose {
    pub cv_tip: Point,
    pub servo_tip: Point,
    pub effector: Point,
    pub theta3: f64,
    pub theta4: f64,
}

/// Places the effector for input angles `theta2`, `theta5`; `None` when
/// links q and r cannot meet.
pub fn forward_kinematics(
    dims: &MechanismDims,
    theta2: f64,
    theta5: f64,
    assembly: Assembly,
) -> Option<ForwardPose> {
    let cv_tip = crank_tip(dims.cv_ground, dims.p, theta2);
    let servo_tip = crank_tip(dims.servo_ground, dims.s, theta5);
    let span = servo_tip - cv_tip;
    let d = span.norm();
    let (q, r) = (dims.q, dims.r);
    if d == 0.0 || d > q + r || d < (q - r).abs() {
        return None;
    }
    let cos_alpha = ((q * q + d * d - r * r) / (2.0 * q * d)).clamp(-1.0, 1.0);
    let theta3 = span.angle() + assembly.sign() * cos_alpha.acos();
    let effector = crank_tip(cv_tip, q, theta3);
    Some(ForwardPose {
        cv_tip,
        servo_tip,
        effector,
        theta3,
        theta4: (effector - servo_tip).angle(),
    })
}

/// Builds a task by running the mechanism through `k` uniform CV angles
/// with the servo following `servo(theta2)`.
pub fn task_from_motion(
    dims: &MechanismDims,
    k: usize,
    cv_speed: f64,
    assembly: Assembly,
    servo: impl Fn(f64) -> f64,
) -> Result<TaskSpec> {
    let samples = (0..k)
        .map(|i| {
            let theta2 = TAU * i as f64 / k as f64;
            let pose =
                forward_kinematics(dims, theta2, servo(theta2), assembly).ok_or_else(|| {
                    invalid(format!(
                        "mechanism cannot assemble at theta2 = {theta2} rad"
                    ))
                })?;
            Ok(TaskSample {
                theta2,
                desired: pose.effector,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskSpec { samples, cv_speed })
}

/// Servo motion used for the shipped demonstration task. Together with
/// [`SAMPLE_ASSEMBLY`] it keeps the coupler links well away from their
/// collinear dead centre, and it is the branch `track_closure` picks.
pub fn sample_servo_motion(theta2: f64) -> f64 {
    1.0 - 0.3 * theta2.sin()
}

/// Assembly mode the demonstration task is generated in.
pub const SAMPLE_ASSEMBLY: Assembly = Assembly::Negative;

/// Demonstration task: the reference mechanism at 60 rpm, `k` samples.
pub fn sample_task(k: usize) -> Result<TaskSpec> {
    task_from_motion(
        &MechanismDims::REFERENCE,
        k,
        TAU,
        SAMPLE_ASSEMBLY,
        sample_servo_motion,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn collinear_dims() -> MechanismDims {
        MechanismDims {
            p: 150.0,
            q: 250.0,
            ..MechanismDims::REFERENCE
        }
    }

    #[test]
    fn input_dyad_exact_reach() {
        let sol = solve_input_dyad(&collinear_dims(), 0.0, Point::new(400.0, 0.0)).unwrap();
        assert_eq!(sol.theta3, 0.0);
        assert_eq!(sol.actual, Point::new(400.0, 0.0));
        assert_eq!(sol.structural_error, 0.0);
    }

    #[test]
    fn input_dyad_overshoot() {
        let sol = solve_input_dyad(&collinear_dims(), 0.0, Point::new(450.0, 0.0)).unwrap();
        assert_eq!(sol.actual, Point::new(400.0, 0.0));
        assert_eq!(sol.structural_error, 50.0);
    }

    #[test]
    fn input_dyad_degenerate_target() {
        let err = solve_input_dyad(&collinear_dims(), 0.0, Point::new(150.0, 0.0)).unwrap_err();
        assert_eq!(err, Error::DegenerateTarget { theta2: 0.0 });
    }

    #[test]
    fn input_dyad_at_published_217_degree_point() {
        // Oracle worked by hand: A = 150 (cos 217, sin 217), v = D - A.
        let theta2 = 217f64.to_radians();
        let ax = 150.0 * theta2.cos();
        let ay = 150.0 * theta2.sin();
        let (vx, vy) = (-46.0 - ax, 148.0 - ay);
        let len = (vx * vx + vy * vy).sqrt();
        let sol =
            solve_input_dyad(&MechanismDims::REFERENCE, theta2, Point::new(-46.0, 148.0)).unwrap();
        assert_abs_diff_eq!(sol.theta3, vy.atan2(vx), epsilon = 1e-12);
        assert_abs_diff_eq!(sol.actual.x, ax + 250.0 * vx / len, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.actual.y, ay + 250.0 * vy / len, epsilon = 1e-9);
        assert_abs_diff_eq!(sol.structural_error, (len - 250.0).abs(), epsilon = 1e-9);
        // The published desired point is about half a millimetre inside q.
        assert!(sol.structural_error > 0.3 && sol.structural_error < 0.7);
    }

    #[test]
    fn closing_dyad_fully_stretched() {
        let dims = MechanismDims::REFERENCE;
        let c = solve_closing_dyad(&dims, Point::new(250.0, 450.0)).unwrap();
        assert_eq!(c.len(), 1);
        assert_abs_diff_eq!(c[0], FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn closing_dyad_out_of_reach() {
        let dims = MechanismDims::REFERENCE;
        assert!(solve_closing_dyad(&dims, Point::new(750.0, 0.0))
            .unwrap()
            .is_empty());
        // Too close: |r - s| = 150.
        assert!(solve_closing_dyad(&dims, Point::new(300.0, 0.0))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn closing_dyad_generic_point_satisfies_both_circles() {
        let dims = MechanismDims::REFERENCE;
        let effector = Point::new(300.0, 200.0);
        let c = solve_closing_dyad(&dims, effector).unwrap();
        assert_eq!(c.len(), 2);
        for theta5 in c {
            let tip = Point::new(250.0 + 150.0 * theta5.cos(), 150.0 * theta5.sin());
            let on_servo = ((tip.x - 250.0).powi(2) + tip.y.powi(2)).sqrt();
            let on_coupler = ((tip.x - 300.0).powi(2) + (tip.y - 200.0).powi(2)).sqrt();
            assert!((on_servo - 150.0).abs() < 1e-9 * 150.0);
            assert!((on_coupler - 300.0).abs() < 1e-9 * 300.0);
        }
    }

    #[test]
    fn closing_dyad_degenerate() {
        let dims = MechanismDims {
            r: 150.0,
            ..MechanismDims::REFERENCE
        };
        assert_eq!(
            solve_closing_dyad(&dims, dims.servo_ground),
            Err(Error::DegenerateDyad)
        );
        let dims = MechanismDims::REFERENCE;
        assert!(solve_closing_dyad(&dims, dims.servo_ground)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn globally_unreachable_task_is_fully_immobile() {
        // Actual points stay within p + q of the CV pivot, so the servo pivot
        // has to sit out of reach as well.
        let dims = MechanismDims {
            servo_ground: Point::new(2000.0, 0.0),
            ..MechanismDims::REFERENCE
        };
        let far = 10.0 * (dims.p + dims.q + dims.r + dims.s) + 2000.0;
        let k = 12;
        let samples = (0..k)
            .map(|i| {
                let theta2 = TAU * i as f64 / k as f64;
                TaskSample {
                    theta2,
                    desired: Point::new(far * theta2.cos(), far * theta2.sin()),
                }
            })
            .collect();
        let trace = track_closure(
            &dims,
            &TaskSpec {
                samples,
                cv_speed: 1.0,
            },
        )
        .unwrap();
        assert_eq!(trace.m, k);
        assert!(trace.poses.iter().all(|p| !p.mobile));
        // Immobile poses point the servo crank at the effector.
        for pose in &trace.poses {
            let toward = (pose.actual - dims.servo_ground).angle();
            assert_abs_diff_eq!(wrap_angle(pose.theta5 - toward), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn task_validation() {
        let mut task = sample_task(8).unwrap();
        assert!(task.validate().is_ok());
        assert!(task.is_uniform());
        task.samples.swap(1, 2);
        assert!(task.validate().is_err());
        let short = TaskSpec {
            samples: sample_task(8).unwrap().samples[..2].to_vec(),
            cv_speed: 1.0,
        };
        assert!(short.validate().is_err());
        let mut wrapped = sample_task(8).unwrap();
        wrapped.samples[7].theta2 = TAU;
        assert!(wrapped.validate().is_err());
    }

    #[test]
    fn dims_validation_and_ground_length() {
        assert_eq!(MechanismDims::REFERENCE.ground_length(), 250.0);
        assert!(MechanismDims {
            s: 0.0,
            ..MechanismDims::REFERENCE
        }
        .validate()
        .is_err());
        assert!(MechanismDims {
            q: -1.0,
            ..MechanismDims::REFERENCE
        }
        .validate()
        .is_err());
    }

    #[test]
    fn sample_task_is_tracked_on_its_generating_branch() {
        let dims = MechanismDims::REFERENCE;
        let trace = track_closure(&dims, &sample_task(72).unwrap()).unwrap();
        assert_eq!(trace.m, 0);
        for pose in &trace.poses {
            assert!(wrap_angle(pose.theta5 - sample_servo_motion(pose.theta2)).abs() < 1e-9);
            assert!(pose.structural_error < 1e-9);
            // Transmission: coupler links stay clear of collinearity.
            assert!((pose.theta4 - pose.theta3).sin().abs() > 0.5);
        }
    }

    #[test]
    fn forward_kinematics_closes_the_loop() {
        let dims = MechanismDims::REFERENCE;
        for assembly in [Assembly::Positive, Assembly::Negative] {
            let pose = forward_kinematics(&dims, 0.3, 1.1, assembly).unwrap();
            assert_abs_diff_eq!(pose.effector.distance(pose.cv_tip), dims.q, epsilon = 1e-9);
            assert_abs_diff_eq!(
                pose.effector.distance(pose.servo_tip),
                dims.r,
                epsilon = 1e-9
            );
            assert_eq!(
                Assembly::of(pose.cv_tip, pose.servo_tip, pose.effector),
                assembly
            );
        }
        let dims = MechanismDims {
            q: 10.0,
            r: 10.0,
            ..dims
        };
        assert!(forward_kinematics(&dims, PI, 0.0, Assembly::Positive).is_none());
    }

    #[test]
    fn json_round_trip() {
        let text = serde_json::to_string(&MechanismDims::REFERENCE).unwrap();
        assert_eq!(
            serde_json::from_str::<MechanismDims>(&text).unwrap(),
            MechanismDims::REFERENCE
        );
        assert!(text.contains("\"cv_ground\":{\"x\":0.0,\"y\":0.0}"));
    }
}
