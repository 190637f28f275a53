use std::f64::consts::{PI, TAU};

use hybrid_fivebar::geometry::{crank_tip, wrap_angle};
use hybrid_fivebar::mechanism::{
    closure_residual, forward_kinematics, solve_closing_dyad, task_from_motion, track_closure,
    Assembly,
};
use hybrid_fivebar::{MechanismDims, Point, TaskSample, TaskSpec};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent mobility count: project each desired point onto the input
/// dyad's reach and ask whether the servo dyad's two circles meet there.
fn brute_force_immobile(dims: &MechanismDims, task: &TaskSpec) -> usize {
    task.samples
        .iter()
        .filter(|sample| {
            let (sin, cos) = sample.theta2.sin_cos();
            let ax = dims.cv_ground.x + dims.p * cos;
            let ay = dims.cv_ground.y + dims.p * sin;
            let (dx, dy) = (sample.desired.x - ax, sample.desired.y - ay);
            let len = dx.hypot(dy);
            let ex = ax + dims.q * dx / len;
            let ey = ay + dims.q * dy / len;
            let dist = (ex - dims.servo_ground.x).hypot(ey - dims.servo_ground.y);
            !(dist <= dims.r + dims.s && dist >= (dims.r - dims.s).abs())
        })
        .count()
}

fn random_case(rng: &mut ChaCha8Rng) -> (MechanismDims, TaskSpec) {
    let dims = MechanismDims {
        p: rng.gen_range(20.0..300.0),
        q: rng.gen_range(20.0..300.0),
        r: rng.gen_range(20.0..300.0),
        s: rng.gen_range(20.0..300.0),
        cv_ground: Point::new(rng.gen_range(-50.0..50.0), rng.gen_range(-50.0..50.0)),
        servo_ground: Point::new(rng.gen_range(-300.0..300.0), rng.gen_range(-300.0..300.0)),
    };
    let k = rng.gen_range(24..=96);
    let reach = dims.p + dims.q + 100.0;
    let samples = (0..k)
        .map(|i| {
            let radius = rng.gen_range(0.0..reach);
            let angle = rng.gen_range(0.0..TAU);
            TaskSample {
                theta2: TAU * i as f64 / k as f64,
                desired: dims.cv_ground + Point::from_angle(angle) * radius,
            }
        })
        .collect();
    (
        dims,
        TaskSpec {
            samples,
            cv_speed: TAU,
        },
    )
}

#[test]
fn mobility_count_matches_brute_force_on_random_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut distinct = std::collections::BTreeSet::new();
    for _ in 0..100 {
        let (dims, task) = random_case(&mut rng);
        let trace = track_closure(&dims, &task).unwrap();
        assert_eq!(trace.m, brute_force_immobile(&dims, &task), "{dims:?}");
        assert_eq!(trace.poses.iter().filter(|p| !p.mobile).count(), trace.m);
        distinct.insert(trace.m * 100 / task.len());
    }
    assert!(
        distinct.len() > 10,
        "random cases should span many mobility levels"
    );
}

#[test]
fn chosen_closure_is_a_candidate_and_closes_the_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let (dims, task) = random_case(&mut rng);
        let trace = track_closure(&dims, &task).unwrap();
        let tolerance = 1e-9 * dims.r.max(dims.s).max(1.0);
        for pose in trace.poses.iter().filter(|p| p.mobile) {
            let candidates = solve_closing_dyad(&dims, pose.actual).unwrap();
            assert!(candidates
                .iter()
                .any(|c| wrap_angle(c - pose.theta5).abs() < 1e-12));
            assert!(closure_residual(&dims, pose.actual, pose.theta5) < tolerance);
            let servo_tip = crank_tip(dims.servo_ground, dims.s, pose.theta5);
            assert!((servo_tip.distance(pose.actual) - dims.r).abs() < tolerance);
        }
    }
}

#[test]
fn smooth_tasks_give_continuous_servo_motion() {
    // Enumerate both closures at every sample: the tracked one must be the
    // candidate nearest its predecessor, and every step stays small.
    let dims = MechanismDims::REFERENCE;
    for (c0, a, assembly) in [
        (1.0, 0.3, Assembly::Negative),
        (1.0, 0.4, Assembly::Positive),
        (0.8, 0.2, Assembly::Negative),
    ] {
        let task = task_from_motion(&dims, 360, TAU, assembly, |t| c0 + a * t.sin()).unwrap();
        let trace = track_closure(&dims, &task).unwrap();
        assert_eq!(trace.m, 0);
        for pair in trace.poses.windows(2) {
            let step = wrap_angle(pair[1].theta5 - pair[0].theta5).abs();
            assert!(step < PI / 4.0, "step {step}");
            let candidates = solve_closing_dyad(&dims, pair[1].actual).unwrap();
            let nearest = candidates
                .iter()
                .map(|c| wrap_angle(c - pair[0].theta5).abs())
                .fold(f64::INFINITY, f64::min);
            assert!((nearest - step).abs() < 1e-12);
        }
    }
}

#[test]
fn forward_generated_task_round_trips() {
    let dims = MechanismDims::REFERENCE;
    let servo = |t: f64| 1.0 + 0.4 * t.sin();
    let task = task_from_motion(&dims, 72, TAU, Assembly::Positive, servo).unwrap();
    let trace = track_closure(&dims, &task).unwrap();
    assert_eq!(trace.m, 0);
    for pose in &trace.poses {
        assert!(wrap_angle(pose.theta5 - servo(pose.theta2)).abs() < 1e-6);
        assert!(pose.structural_error < 1e-9);
    }
}

#[test]
fn forward_kinematics_agrees_with_the_dyad_solvers() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let dims = MechanismDims::REFERENCE;
    let mut checked = 0;
    while checked < 200 {
        let (theta2, theta5) = (rng.gen_range(0.0..TAU), rng.gen_range(0.0..TAU));
        let assembly = if rng.gen::<bool>() {
            Assembly::Positive
        } else {
            Assembly::Negative
        };
        let Some(pose) = forward_kinematics(&dims, theta2, theta5, assembly) else {
            continue;
        };
        let candidates = solve_closing_dyad(&dims, pose.effector).unwrap();
        assert!(candidates
            .iter()
            .any(|c| wrap_angle(c - theta5).abs() < 1e-8));
        checked += 1;
    }
}

proptest! {
    #[test]
    fn translation_leaves_the_trace_unchanged(seed in any::<u64>(), ox in -1e3f64..1e3, oy in -1e3f64..1e3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (dims, task) = random_case(&mut rng);
        let offset = Point::new(ox, oy);
        let a = track_closure(&dims, &task).unwrap();
        let b = track_closure(&dims.translated(offset), &task.translated(offset)).unwrap();
        prop_assert_eq!(a.m, b.m);
        for (pa, pb) in a.poses.iter().zip(&b.poses) {
            prop_assert_eq!(pa.mobile, pb.mobile);
            prop_assert!(wrap_angle(pa.theta3 - pb.theta3).abs() < 1e-9);
            prop_assert!(wrap_angle(pa.theta5 - pb.theta5).abs() < 1e-9);
            prop_assert!((pa.structural_error - pb.structural_error).abs() < 1e-9);
        }
    }

    #[test]
    fn circle_residuals_vanish_for_reachable_points(
        x in -600.0f64..600.0, y in -600.0f64..600.0,
    ) {
        let dims = MechanismDims::REFERENCE;
        let effector = Point::new(x, y);
        let d = effector.distance(dims.servo_ground);
        let candidates = solve_closing_dyad(&dims, effector).unwrap();
        if d > dims.r + dims.s || d < (dims.r - dims.s).abs() {
            prop_assert!(candidates.is_empty());
        } else {
            prop_assert!(!candidates.is_empty());
            for c in candidates {
                prop_assert!(closure_residual(&dims, effector, c) < 1e-9 * dims.r.max(dims.s));
            }
        }
    }
}
