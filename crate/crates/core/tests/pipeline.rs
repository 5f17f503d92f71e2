mod common;

use common::rng;
use gog_core::cloth::{build_cloth, ClothSpec, ClothState, Placement};
use gog_core::geom::{Line2, Vec2};
use gog_core::gripper::{Finger, FrictionMode, GripperParams, GripperState};
use gog_core::harness::{apply_ridge, random_ridges, Ridge};
use gog_core::metrics::{canny, render_shaded, sobel, wrinkle_penalty, CannyParams};
use gog_core::percept::{observe, rasterize_mask, select_grasp_corners, CornerParams};
use gog_core::planner::{
    auto_fold, execute, plan_drag, plan_flatten, plan_fold, plan_lift, ActionTag, EventKind,
    ExecParams, FoldOptions, FoldSpec, PlannerParams, TaskKind, Trajectory, Waypoint,
};
use proptest::prelude::*;

fn settled(x: f64, y: f64, yaw_deg: f64) -> ClothState {
    let c = build_cloth(
        &ClothSpec::default(),
        Placement::new(x, y, yaw_deg.to_radians()),
    )
    .unwrap();
    c.settle(2.0, 1e-7).unwrap().0
}

fn gripper() -> GripperState {
    GripperState::new(GripperParams::default()).unwrap()
}

fn fold_plan(cloth: &ClothState) -> Trajectory {
    let obs = observe(cloth, 0.002, &CornerParams::default()).unwrap();
    let d = Vec2::new(0.0, 1.0);
    let g = select_grasp_corners(&obs.corners, d, &GripperParams::default()).unwrap();
    let line = Line2::new(obs.mask.centroid().unwrap(), d).unwrap();
    plan_fold(
        g.p1,
        g.p2,
        &line,
        &GripperParams::default(),
        &PlannerParams::default(),
    )
    .unwrap()
}

#[test]
fn one_fold_halves_the_silhouette() {
    let cloth = settled(0.0, 0.0, 0.0);
    let spec = FoldSpec {
        direction: Vec2::new(1.0, 0.0),
        n_folds: 1,
    };
    let run = auto_fold(&cloth, &gripper(), &spec, &FoldOptions::default()).unwrap();
    assert_eq!(run.completed(), 1);
    let ratio = run.reports[0].metrics.area_ratio.unwrap();
    assert!((0.48..=0.60).contains(&ratio), "{ratio}");
}

#[test]
fn second_fold_is_perpendicular() {
    for yaw in [0.0, 30.0] {
        let cloth = settled(0.01, -0.02, yaw);
        let spec = FoldSpec {
            direction: Vec2::new(0.0, 1.0),
            n_folds: 2,
        };
        let run = auto_fold(&cloth, &gripper(), &spec, &FoldOptions::default()).unwrap();
        assert_eq!(
            run.completed(),
            2,
            "yaw {yaw}: {:?}",
            run.reports.last().unwrap().failure
        );
        let n1 = run.reports[0].metrics.fold_line.unwrap().normal;
        let n2 = run.reports[1].metrics.fold_line.unwrap().normal;
        let off_deg = n1.dot(&n2).abs().asin().to_degrees();
        assert!(off_deg <= 1.0, "yaw {yaw}: {off_deg}");
        assert!(run
            .reports
            .iter()
            .all(|r| r.metrics.fold.unwrap().iou > 0.8));
    }
}

#[test]
fn rotated_cloth_still_yields_two_corners() {
    let cloth = settled(0.0, 0.0, 30.0);
    let obs = observe(&cloth, 0.002, &CornerParams::default()).unwrap();
    assert_eq!(obs.corners.len(), 4);
    let g =
        select_grasp_corners(&obs.corners, Vec2::new(0.0, 1.0), &GripperParams::default()).unwrap();
    assert!(g.p1 != g.p2);
}

#[test]
fn fold_switches_to_firm_once_before_the_arc() {
    let cloth = settled(0.0, 0.0, 0.0);
    let report = execute(
        TaskKind::Fold,
        &fold_plan(&cloth),
        &cloth,
        &gripper(),
        &ExecParams::default(),
    )
    .unwrap()
    .report;
    let arc = report.stage_start(ActionTag::FoldArc).unwrap();
    for f in Finger::BOTH {
        let rises = report
            .mode_transitions()
            .filter(|&(t, fi, from, to)| {
                fi == f
                    && t < arc
                    && from == FrictionMode::LowFriction
                    && to == FrictionMode::HighFriction
            })
            .count();
        assert_eq!(rises, 1, "{f:?}");
    }
}

#[test]
fn every_frame_has_mode_matching_force() {
    let cloth = settled(0.0, 0.0, 0.0);
    let f_switch = GripperParams::default().f_switch;
    let report = execute(
        TaskKind::Fold,
        &fold_plan(&cloth),
        &cloth,
        &gripper(),
        &ExecParams::default(),
    )
    .unwrap()
    .report;
    assert!(!report.frames.is_empty());
    for fr in &report.frames {
        for ff in &fr.fingers {
            assert_eq!(
                ff.mode == FrictionMode::HighFriction,
                ff.grip_force >= f_switch
            );
        }
    }
}

#[test]
fn grasp_over_empty_table_is_reported_and_the_plan_runs_on() {
    let cloth = settled(0.0, 0.0, 0.0);
    let traj = plan_drag(
        Vec2::new(0.6, 0.0),
        Vec2::new(1.0, 0.0),
        0.1,
        &GripperParams::default(),
        &PlannerParams::default(),
    )
    .unwrap();
    let report = execute(
        TaskKind::Drag,
        &traj,
        &cloth,
        &gripper(),
        &ExecParams::default(),
    )
    .unwrap()
    .report;
    assert!(report
        .events
        .iter()
        .any(|e| matches!(e.kind, EventKind::GraspAttempt { ok: false, .. })));
    assert!(report.grasp_failed());
    assert!((report.end_time - traj.end_time()).abs() < 1e-9);
}

#[test]
fn replayed_plan_gives_identical_report() {
    let cloth = settled(0.0, 0.0, 0.0);
    let traj = fold_plan(&cloth);
    let back: Trajectory = traj.to_text().parse().unwrap();
    let run = |t: &Trajectory| {
        execute(
            TaskKind::Fold,
            t,
            &cloth,
            &gripper(),
            &ExecParams::default(),
        )
        .unwrap()
        .report
        .to_json()
        .unwrap()
    };
    assert_eq!(run(&traj), run(&back));
}

#[test]
fn release_mid_fold_leaves_no_forces() {
    let cloth = settled(0.0, 0.0, 0.0);
    let full = fold_plan(&cloth);
    let arc_start = full.with_tag(ActionTag::FoldArc).next().unwrap().t;
    let mut wps: Vec<Waypoint> = full
        .waypoints
        .iter()
        .filter(|w| w.t <= arc_start + 0.3)
        .cloned()
        .collect();
    let last = *wps.last().unwrap();
    wps.push(Waypoint {
        t: last.t + 0.2,
        torque: [0.0, 0.0],
        tag: ActionTag::Release,
        ..last
    });
    let traj = Trajectory::new(wps);
    let run = execute(
        TaskKind::Fold,
        &traj,
        &cloth,
        &gripper(),
        &ExecParams::default(),
    )
    .unwrap();
    let released = run.report.stage_start(ActionTag::Release).unwrap();
    let after: Vec<_> = run
        .report
        .frames
        .iter()
        .filter(|f| f.t > released)
        .collect();
    assert!(!after.is_empty());
    for fr in after {
        for ff in &fr.fingers {
            assert_eq!(ff.grasped, 0);
            assert_eq!(ff.force.norm(), 0.0);
        }
    }
    let (rest, out) = run.cloth.settle(3.0, 1e-7).unwrap();
    assert!(out.converged);
    assert!(rest.max_z() < 0.01);
}

#[test]
fn flatten_slide_removes_most_of_a_ridge() {
    let spec = ClothSpec::default();
    let cloth = build_cloth(&spec, Placement::new(0.0, 0.0, 0.0)).unwrap();
    let d = Vec2::new(1.0, 0.0);
    let ridge = Ridge::new(Vec2::new(0.05, 0.0), d, 0.02, 0.03).unwrap();
    let wrinkled = apply_ridge(&cloth, &ridge)
        .unwrap()
        .settle(1.0, 1e-7)
        .unwrap()
        .0;
    let before = wrinkled.max_z();
    let edge = wrinkled
        .positions
        .iter()
        .map(|p| p.x)
        .fold(f64::NEG_INFINITY, f64::max);
    let grasp = Vec2::new(edge - PlannerParams::default().jaw_inset, 0.0);
    let traj = plan_flatten(
        grasp,
        d,
        0.1,
        &GripperParams::default(),
        &PlannerParams::default(),
    )
    .unwrap();
    let run = execute(
        TaskKind::Flatten,
        &traj,
        &wrinkled,
        &gripper(),
        &ExecParams::default(),
    )
    .unwrap();
    let after = run.cloth.settle(2.0, 1e-7).unwrap().0.max_z();
    assert!(after <= 0.5 * before, "{before} -> {after}");
}

fn wr_of(cloth: &ClothState) -> f64 {
    let img = render_shaded(cloth, 0.002).unwrap();
    let mask = rasterize_mask(cloth, 0.002).unwrap();
    assert_eq!(img.frame, mask.frame);
    wrinkle_penalty(&img, &mask, &CannyParams::default()).unwrap()
}

#[test]
fn ridges_raise_the_wrinkle_penalty() {
    let spec = ClothSpec::default();
    let flat = build_cloth(&spec, Placement::new(0.0, 0.0, 0.0)).unwrap();
    let flat_wr = wr_of(&flat);
    assert!(flat_wr < 0.001, "{flat_wr}");
    let mut r = rng(5);
    let mut wrinkled = flat.clone();
    for ridge in random_ridges(&mut r, &flat, 3, 0.01, 0.02).unwrap() {
        wrinkled = apply_ridge(&wrinkled, &ridge).unwrap();
    }
    assert!(wr_of(&wrinkled) > flat_wr);
}

#[test]
fn shading_changes_most_on_the_ridge_flanks() {
    let spec = ClothSpec::square(0.3, 61);
    let flat = build_cloth(&spec, Placement::new(0.0, 0.0, 0.0)).unwrap();
    let hw = 0.04;
    let ridge = Ridge::new(Vec2::zeros(), Vec2::new(1.0, 0.0), 0.015, hw).unwrap();
    let bumped = apply_ridge(&flat, &ridge).unwrap();
    let a = render_shaded(&bumped, 0.002).unwrap();
    let a2 = render_shaded(&bumped, 0.002).unwrap();
    assert_eq!(a.data, a2.data);
    let plain = render_shaded(&flat, 0.002).unwrap();
    let base = plain.get(plain.width() / 2, plain.height() / 2);

    // the centre row, away from the silhouette
    let j = a.height() / 2;
    let xs: Vec<(f64, f64)> = (10..a.width() - 10)
        .map(|i| (a.frame.pixel_center(i, j).x, (a.get(i, j) - base).abs()))
        .collect();
    let (x_peak, dev) = xs
        .iter()
        .copied()
        .fold((0.0, 0.0), |b, c| if c.1 > b.1 { c } else { b });
    assert!(dev > 0.05, "{dev}");
    assert!(
        x_peak.abs() > 0.2 * hw && x_peak.abs() < 0.8 * hw,
        "peak at {x_peak}"
    );
    let crest = xs
        .iter()
        .min_by(|p, q| p.0.abs().total_cmp(&q.0.abs()))
        .unwrap();
    assert!(crest.1 < 0.5 * dev);

    let (gx, gy) = sobel(&a.data, a.width(), a.height());
    let g = |i: usize| gx[j * a.width() + i].hypot(gy[j * a.width() + i]);
    let inside = (10..a.width() - 10)
        .filter(|&i| a.frame.pixel_center(i, j).x.abs() <= hw)
        .map(g)
        .fold(0.0, f64::max);
    let outside = (10..a.width() - 10)
        .filter(|&i| a.frame.pixel_center(i, j).x.abs() > hw + 0.006)
        .map(g)
        .fold(0.0, f64::max);
    assert!(inside > 10.0 * outside.max(1e-9), "{inside} vs {outside}");
    assert!(!canny(&a, 0.1, 0.2).unwrap().is_blank());
}

fn stage_order_and_ends(t: &Trajectory, g: &GripperParams) -> Result<(), TestCaseError> {
    let first = t.waypoints.first().unwrap();
    let last = t.waypoints.last().unwrap();
    prop_assert_eq!(first.width, g.width_min);
    prop_assert_eq!(last.torque, [0.0, 0.0]);
    for w in t.waypoints.windows(2) {
        prop_assert!(w[1].t > w[0].t);
        prop_assert!(w[1].tag.stage_rank() >= w[0].tag.stage_rank());
    }
    prop_assert!(t.max_speed() <= g.tool_speed + 1e-9);
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn plans_keep_their_shape(
        x in -0.3f64..0.3,
        y in -0.3f64..0.3,
        angle in 0.0f64..std::f64::consts::TAU,
        span in 0.05f64..0.7,
        depth in 0.05f64..0.3,
        height in 0.01f64..0.5,
        hold in 0.0f64..5.0,
    ) {
        let g = GripperParams::default();
        let p = PlannerParams::default();
        let d = Vec2::new(angle.cos(), angle.sin());
        let across = Vec2::new(-d.y, d.x);
        let mid = Vec2::new(x, y);
        let (p1, p2) = (mid + across * (0.5 * span), mid - across * (0.5 * span));
        let line = Line2::new(mid - d * (0.5 * depth), d).unwrap();

        let fold = plan_fold(p1, p2, &line, &g, &p).unwrap();
        stage_order_and_ends(&fold, &g)?;
        let end = fold.with_tag(ActionTag::FoldArc).last().unwrap().pose.position;
        let jaw_mid = mid - d * p.jaw_inset;
        let target = line.reflect(&jaw_mid);
        prop_assert!((Vec2::new(end.x, end.y) - target).norm() < 1e-3);
        prop_assert_eq!(fold.warnings.is_empty(), span - 2.0 * p.jaw_inset <= g.width_max);

        stage_order_and_ends(&plan_drag(mid, d * 3.0, depth, &g, &p).unwrap(), &g)?;
        stage_order_and_ends(&plan_lift(p1, p2, -d, height, hold, &g, &p).unwrap(), &g)?;
        let flat = plan_flatten(mid, d, depth, &g, &p).unwrap();
        stage_order_and_ends(&flat, &g)?;
        let firm = g.torque_for_force(g.f_switch);
        prop_assert!(flat.with_tag(ActionTag::Grasp).any(|w| w.torque.iter().all(|t| *t >= firm)));
        prop_assert!(flat.with_tag(ActionTag::Slide).all(|w| w.torque.iter().all(|t| *t < firm)));
    }
}
