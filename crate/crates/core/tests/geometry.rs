use approx::assert_relative_eq;
use contdef::geometry::{
    barycentric_lambda, lambda_nd, plane_normal, project_to_plane, rank_simplex, simplex_measure, virtual_fourth_point,
};
use contdef::{Error, Position3};
use proptest::prelude::*;

fn p(x: f64, y: f64, z: f64) -> Position3 {
    Position3::new(x, y, z)
}

fn coord() -> impl Strategy<Value = f64> {
    -50.0..50.0f64
}

fn point() -> impl Strategy<Value = Position3> {
    (coord(), coord(), coord()).prop_map(|(x, y, z)| p(x, y, z))
}

fn triangle() -> impl Strategy<Value = [Position3; 3]> {
    [point(), point(), point()].prop_filter("non-degenerate", |t| (t[1] - t[0]).cross(&(t[2] - t[0])).norm() > 1.0)
}

fn tetrahedron() -> impl Strategy<Value = [Position3; 4]> {
    [point(), point(), point(), point()]
        .prop_filter("non-degenerate", |t| (t[1] - t[0]).cross(&(t[2] - t[0])).dot(&(t[3] - t[0])).abs() > 10.0)
}

#[test]
fn unit_tetrahedron_centroid_weights() {
    let l = barycentric_lambda(&p(0., 0., 0.), &p(1., 0., 0.), &p(0., 1., 0.), &p(0., 0., 1.), &p(0.25, 0.25, 0.25)).unwrap();
    for w in l.0 {
        assert_relative_eq!(w, 0.25, epsilon = 1e-12);
    }
}

#[test]
fn flat_tetrahedron_is_singular() {
    let r = barycentric_lambda(&p(0., 0., 0.), &p(1., 0., 0.), &p(0., 1., 0.), &p(1., 1., 0.), &p(0.2, 0.2, 0.));
    assert!(matches!(r, Err(Error::Singular(_))));
}

#[test]
fn triangle_in_offset_plane_has_vanishing_fourth_weight() {
    let tri = [p(0., 0., 7.), p(4., 0., 7.), p(0., 4., 7.)];
    let l = lambda_nd(&tri, &p(1., 1., 9.), 2, 1.0).unwrap();
    assert!(l.0[3].abs() <= 1e-12);
    assert_relative_eq!(l.0[0], 0.5, epsilon = 1e-12);
    assert_relative_eq!(l.0[1], 0.25, epsilon = 1e-12);
    assert_relative_eq!(l.0[2], 0.25, epsilon = 1e-12);
}

#[test]
fn wrong_vertex_count_is_an_argument_error() {
    assert!(matches!(rank_simplex(&[p(0., 0., 0.), p(1., 0., 0.)], 2), Err(Error::Argument(_))));
    assert!(matches!(lambda_nd(&[p(0., 0., 0.)], &p(0., 0., 0.), 3, 1.0), Err(Error::Argument(_))));
}

proptest! {
    #[test]
    fn tetrahedron_weights_reproduce_the_point(t in tetrahedron(), c in point()) {
        let l = barycentric_lambda(&t[0], &t[1], &t[2], &t[3], &c).unwrap();
        prop_assert!((l.sum() - 1.0).abs() <= 1e-9);
        let back = t.iter().zip(l.0).fold(Position3::zeros(), |acc, (v, w)| acc + v * w);
        prop_assert!((back - c).norm() <= 1e-8 * (1.0 + c.norm()));
    }

    #[test]
    fn planar_weights_reproduce_the_projection(t in triangle(), c in point(), xi in 0.2..5.0f64) {
        let l = lambda_nd(&t, &c, 2, xi).unwrap();
        prop_assert!(l.0[3].abs() <= 1e-9);
        let back = t.iter().zip(l.0).fold(Position3::zeros(), |acc, (v, w)| acc + v * w);
        let proj = project_to_plane(&c, &t[0], &t[1], &t[2]).unwrap();
        prop_assert!((back - proj).norm() <= 1e-8 * (1.0 + c.norm()));
    }

    #[test]
    fn weights_are_affine_invariant(t in tetrahedron(), c in point(), s in 0.2..5.0f64, d in point(), angle in 0.0..std::f64::consts::TAU) {
        let rot = nalgebra::Rotation3::from_axis_angle(&nalgebra::Vector3::z_axis(), angle);
        let map = |v: &Position3| rot * v * s + d;
        let l0 = lambda_nd(&t, &c, 3, 1.0).unwrap();
        let mapped: Vec<Position3> = t.iter().map(map).collect();
        let l1 = lambda_nd(&mapped, &map(&c), 3, 1.0).unwrap();
        for k in 0..4 {
            prop_assert!((l0.0[k] - l1.0[k]).abs() <= 1e-8 * (1.0 + l0.0[k].abs()));
        }
    }

    #[test]
    fn projection_is_idempotent_and_in_plane(t in triangle(), c in point()) {
        let n = plane_normal(&t[0], &t[1], &t[2]).unwrap();
        prop_assert!((n.norm() - 1.0).abs() <= 1e-12);
        prop_assert!(n.dot(&(t[1] - t[0])).abs() <= 1e-9 * (t[1] - t[0]).norm());
        let q = project_to_plane(&c, &t[0], &t[1], &t[2]).unwrap();
        prop_assert!((q - t[0]).dot(&n).abs() <= 1e-9 * (1.0 + c.norm()));
        let qq = project_to_plane(&q, &t[0], &t[1], &t[2]).unwrap();
        prop_assert!((q - qq).norm() <= 1e-9 * (1.0 + q.norm()));
    }

    #[test]
    fn virtual_point_lifts_to_full_rank(t in triangle(), xi in 0.1..10.0f64) {
        let p4 = virtual_fourth_point(&t[0], &t[1], &t[2], xi).unwrap();
        prop_assert_eq!(rank_simplex(&[t[0], t[1], t[2], p4], 3).unwrap(), 3);
    }

    #[test]
    fn measure_is_translation_invariant(t in tetrahedron(), d in point()) {
        let moved: Vec<Position3> = t.iter().map(|v| v + d).collect();
        let a = simplex_measure(&t, 3).unwrap();
        let b = simplex_measure(&moved, 3).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.max(1.0));
    }

    #[test]
    fn collinear_points_have_rank_one(a in point(), dir in point(), s in -3.0..3.0f64, u in -3.0..3.0f64) {
        prop_assume!(dir.norm() > 1.0);
        let pts = [a, a + dir * s.max(0.5), a + dir * (u.min(-0.5))];
        prop_assert_eq!(rank_simplex(&pts, 2).unwrap(), 1);
    }
}
