mod common;

use common::*;
use gog_core::cloth::{build_cloth, ClothSpec, Placement};
use gog_core::geom::{Vec2, Vec3};
use gog_core::gripper::GripperParams;
use gog_core::percept::{
    detect_corners, extract_contour, rasterize_mask, rasterize_polygon, select_grasp_corners,
    BinaryMask, CornerParams, CornerSet, MaskFrame, Polygon,
};
use proptest::prelude::*;
use rand::Rng;

const SCALE: f64 = 0.002;

fn frame_around(poly: &[Vec2]) -> MaskFrame {
    let lo = poly
        .iter()
        .fold(Vec2::repeat(f64::INFINITY), |a, p| a.inf(p));
    let hi = poly
        .iter()
        .fold(Vec2::repeat(f64::NEG_INFINITY), |a, p| a.sup(p));
    MaskFrame::covering(lo, hi, 0.1, SCALE).unwrap()
}

fn corners_of(poly: &[Vec2]) -> CornerSet {
    let mask = rasterize_polygon(poly, &frame_around(poly));
    let contour = extract_contour(&mask).unwrap();
    detect_corners(&contour, &CornerParams::default()).unwrap()
}

fn worst_corner_error_px(found: &[Vec2], truth: &[Vec2]) -> f64 {
    truth
        .iter()
        .map(|t| {
            found
                .iter()
                .map(|f| (f - t).norm())
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
        / SCALE
}

#[test]
fn rotated_square_has_four_accurate_corners() {
    let truth = rect_corners(Vec2::new(0.1, -0.05), 0.3, 0.3, 30f64.to_radians());
    let c = corners_of(&truth);
    assert_eq!(c.len(), 4, "{:?}", c.corners);
    assert!(worst_corner_error_px(&c.corners, &truth) <= 2.0);
}

#[test]
fn circle_has_no_corners() {
    let r = 100.0 * SCALE;
    let frame = MaskFrame::covering(Vec2::repeat(-r), Vec2::repeat(r), 0.1, SCALE).unwrap();
    let mask = BinaryMask::from_fn(frame, |i, j| frame.pixel_center(i, j).norm() <= r);
    let contour = extract_contour(&mask).unwrap();
    let c = detect_corners(&contour, &CornerParams::default()).unwrap();
    assert_eq!(c.len(), 0, "{:?}", c.corners);
}

#[test]
fn contour_of_blobs_is_closed_and_counter_clockwise() {
    let mut r = rng(7);
    for _ in 0..50 {
        let mask = random_blob_mask(&mut r, unit_frame(32, 32));
        if mask.is_blank() {
            continue;
        }
        let p = extract_contour(&mask).unwrap();
        assert!(p.is_closed());
        assert_eq!(p.points.first(), p.points.last());
        if p.vertices().len() >= 3 {
            assert!(p.signed_area() > 0.0);
        }
    }
}

#[test]
fn folded_cloth_covers_half_the_area() {
    // an odd node count puts a row of nodes on the fold line
    let spec = ClothSpec::square(0.3, 17);
    let flat = build_cloth(&spec, Placement::new(0.0, 0.0, 0.0)).unwrap();
    let mid = flat.centroid().y;
    let folded: Vec<Vec3> = flat
        .positions
        .iter()
        .map(|p| {
            if p.y > mid {
                Vec3::new(p.x, 2.0 * mid - p.y, p.z + spec.rest_thickness)
            } else {
                *p
            }
        })
        .collect();
    let folded = flat.with_positions(folded).unwrap();
    let a_flat = rasterize_mask(&flat, SCALE).unwrap().count() as f64;
    let a_fold = rasterize_mask(&folded, SCALE).unwrap().count() as f64;
    assert!(
        ((a_fold / a_flat) - 0.5).abs() <= 0.5 * 0.05,
        "{a_fold} / {a_flat}"
    );
}

#[test]
fn raster_area_converges_with_finer_scale() {
    let mut r = rng(3);
    let shapes: Vec<Vec<Vec2>> = (0..40)
        .map(|_| {
            let c = Vec2::new(r.random_range(-0.02..0.02), r.random_range(-0.02..0.02));
            rect_corners(
                c,
                r.random_range(0.1..0.25),
                r.random_range(0.05..0.15),
                r.random_range(0.0..3.2),
            )
        })
        .collect();
    let errors: Vec<f64> = [0.008, 0.004, 0.002]
        .iter()
        .map(|&s| {
            let frame =
                MaskFrame::covering(Vec2::new(-0.2, -0.2), Vec2::new(0.2, 0.2), 0.0, s).unwrap();
            shapes
                .iter()
                .map(|p| {
                    (rasterize_polygon(p, &frame).area() - polygon_area(p)).abs() / polygon_area(p)
                })
                .sum::<f64>()
                / shapes.len() as f64
        })
        .collect();
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rectangles_have_four_corners(
        w in 0.1f64..0.4,
        aspect in 1.0f64..3.0,
        yaw in 0.0f64..std::f64::consts::TAU,
        cx in -0.1f64..0.1,
        cy in -0.1f64..0.1,
    ) {
        let truth = rect_corners(Vec2::new(cx, cy), w, w / aspect, yaw);
        let c = corners_of(&truth);
        prop_assert_eq!(c.len(), 4);
        prop_assert!(worst_corner_error_px(&c.corners, &truth) <= 2.0);
    }

    #[test]
    fn grasp_choice_ignores_corner_order(
        pts in prop::collection::vec((-0.3f64..0.3, -0.3f64..0.3), 2..8),
        angle in 0.0f64..std::f64::consts::TAU,
        rot in 0usize..8,
    ) {
        let corners: Vec<Vec2> = pts.iter().map(|&(x, y)| Vec2::new(x, y)).collect();
        let mut shuffled = corners.clone();
        shuffled.rotate_left(rot % corners.len());
        shuffled.reverse();
        let d = Vec2::new(angle.cos(), angle.sin());
        let g = GripperParams::default();
        let set = |c: Vec<Vec2>| CornerSet { corners: c, source: Polygon::closed(vec![]) };
        let a = select_grasp_corners(&set(corners), d, &g);
        let b = select_grasp_corners(&set(shuffled), d, &g);
        prop_assert_eq!(a.ok(), b.ok());
    }
}
