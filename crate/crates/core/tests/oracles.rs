mod common;

use common::suite;
use corrnet::geometry::{farthest_point_sample, Vec3};
use corrnet::losses::shape_loss;
use corrnet::synth::kernel_transfer_oracle;
use proptest::prelude::*;

const INSTANCES: usize = 60;

fn check(name: &'static str) {
    let (_, f) = suite::CHECKS.iter().find(|c| c.0 == name).unwrap();
    let o = suite::run(name, *f, INSTANCES);
    assert!(o.passed(), "{name}: max deviation {:e} over {} instances", o.max_err, o.instances);
}

#[test]
fn fps_matches_reference() {
    check("fps");
}

#[test]
fn ball_query_matches_reference() {
    check("ball_query");
}

#[test]
fn closest_point_matrix_matches_reference() {
    check("closest_point_matrix");
}

#[test]
fn knn_matches_reference() {
    check("knn_spacing");
}

#[test]
fn chamfer_matches_reference() {
    check("chamfer");
}

#[test]
fn density_matches_reference() {
    check("density");
}

#[test]
fn lpt_matches_reference() {
    check("lpt");
}

#[test]
fn hybrid_matches_reference() {
    check("hybrid");
}

#[test]
fn correlation_matches_reference() {
    check("cpsa_correlation");
}

#[test]
fn transform_matches_reference() {
    check("transform_movement");
}

#[test]
fn kernel_transfer_matches_reference() {
    check("kernel_transfer_oracle");
}

#[test]
fn surface_deviation_matches_reference() {
    check("point_to_triangle");
}

#[test]
fn idw_matches_reference() {
    check("idw_interpolate");
}

fn points(max: usize) -> impl Strategy<Value = Vec<Vec3>> {
    prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), 2..max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fps_prefixes_agree(pts in points(64), k in 1usize..64) {
        let k = k.min(pts.len());
        let long = farthest_point_sample(&pts, k, 0).unwrap();
        let short = farthest_point_sample(&pts, k.div_ceil(2), 0).unwrap();
        prop_assert_eq!(&long[..short.len()], &short[..]);
        let mut sorted = long.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k);
    }

    #[test]
    fn chamfer_is_symmetric_and_zero_on_self(a in points(40), b in points(40)) {
        prop_assert!((shape_loss(&a, &b).unwrap() - shape_loss(&b, &a).unwrap()).abs() < 1e-9);
        prop_assert_eq!(shape_loss(&a, &a).unwrap(), 0.0);
    }

    #[test]
    fn kernel_transfer_stays_in_the_hull(bone in points(30), skin in points(30), h in 0.5f64..40.0) {
        let disp: Vec<Vec3> = bone.iter().map(|p| [p[0].sin(), p[1].cos(), 0.5]).collect();
        let out = kernel_transfer_oracle(&bone, &disp, &skin, h).unwrap();
        for d in out {
            prop_assert!(d.iter().all(|x| x.is_finite()));
            prop_assert!(d[0].abs() <= 1.0 + 1e-12 && d[1].abs() <= 1.0 + 1e-12);
            prop_assert!((d[2] - 0.5).abs() < 1e-12);
        }
    }
}
