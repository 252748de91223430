mod common;

use common::oracles::{self, rel_err};
use proptest::prelude::*;
use ptclab::disruption::lift_radar;
use ptclab::eval::{mae_rmse, support_split_mae};
use ptclab::geometry::{rasterize, CameraIntrinsics, Point3};
use ptclab::raster::Grid;

const TOL: f64 = 1e-6;

fn grid_f32(h: usize, w: usize, lo: f32, hi: f32, p_valid: f64) -> impl Strategy<Value = Grid<f32>> {
    prop::collection::vec((lo..hi, prop::bool::weighted(p_valid)), h * w)
        .prop_map(move |v| Grid::from_vec(h, w, v.into_iter().map(|(x, keep)| if keep { x } else { 0.0 }).collect()).unwrap())
}

fn camera() -> impl Strategy<Value = CameraIntrinsics> {
    (4usize..24, 4usize..24, 5.0f64..40.0).prop_map(|(w, h, f)| CameraIntrinsics::new(f, f, (w as f64 - 1.0) / 2.0, (h as f64 - 1.0) / 2.0, w, h).unwrap())
}

fn points() -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec((-8.0f64..8.0, -4.0f64..4.0, -2.0f64..40.0).prop_map(|(x, y, z)| Point3::new(x, y, z)), 0..60)
}

fn pair(h: usize, w: usize) -> impl Strategy<Value = (Grid<f32>, Grid<f32>, Grid<u8>, f64)> {
    (
        grid_f32(h, w, 0.1, 90.0, 1.0),
        grid_f32(h, w, 0.1, 90.0, 0.8),
        prop::collection::vec(prop::bool::weighted(0.3), h * w),
        prop::sample::select(vec![50.0, 70.0, 80.0]),
    )
        .prop_map(move |(p, g, s, cap)| (p, g, Grid::from_vec(h, w, s.into_iter().map(u8::from).collect()).unwrap(), cap))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn mae_rmse_matches_brute_force((pred, gt, _, cap) in (1usize..12, 1usize..12).prop_flat_map(|(h, w)| pair(h, w))) {
        let fast = mae_rmse(&pred, &gt, cap).unwrap();
        let slow = oracles::mae_rmse(&pred, &gt, cap);
        prop_assert_eq!(fast.is_some(), slow.is_some());
        if let (Some(a), Some(b)) = (fast, slow) {
            prop_assert!(rel_err(a.0, b.0) < TOL && rel_err(a.1, b.1) < TOL, "{:?} vs {:?}", a, b);
            prop_assert!(a.0 <= a.1 + 1e-9);
        }
    }

    #[test]
    fn support_split_matches_brute_force((pred, gt, support, cap) in (1usize..12, 1usize..12).prop_flat_map(|(h, w)| pair(h, w))) {
        let fast = support_split_mae(&pred, &gt, &support, cap).ok();
        let slow = oracles::support_split(&pred, &gt, &support, cap);
        prop_assert_eq!(fast.is_some(), slow.is_some());
        if let (Some(a), Some((on, off, ratio))) = (fast, slow) {
            prop_assert!(rel_err(a.mae_on_mm, on) < TOL);
            prop_assert_eq!(a.mae_off_mm.is_some(), off.is_some());
            if let (Some(x), Some(y)) = (a.mae_off_mm, off) {
                prop_assert!(rel_err(x, y) < TOL);
            }
            prop_assert!(rel_err(a.artifact_ratio(), ratio) < TOL);
        }
    }

    #[test]
    fn rasterize_matches_brute_force(k in camera(), pts in points()) {
        prop_assert_eq!(rasterize(&pts, &k), oracles::rasterize(&pts, &k));
    }

    #[test]
    fn lift_matches_brute_force(k in camera(), pts in points()) {
        prop_assert_eq!(lift_radar(&pts, &k), oracles::lift(&pts, &k));
    }
}

#[test]
fn support_split_agrees_with_mae_on_full_support() {
    let pred = Grid::from_fn(5, 7, |r, c| (r * 7 + c) as f32 * 0.9 + 1.0);
    let gt = Grid::from_fn(5, 7, |r, c| (r + c) as f32 * 2.0 + 0.5);
    let full = Grid::filled(5, 7, 1u8);
    let split = support_split_mae(&pred, &gt, &full, 80.0).unwrap();
    let (mae, _) = mae_rmse(&pred, &gt, 80.0).unwrap().unwrap();
    assert!(rel_err(split.mae_on_mm, mae) < 1e-12);
    assert_eq!(split.mae_off_mm, None);
}
