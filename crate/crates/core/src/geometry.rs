//! Simplex geometry: numerical rank, plane normals, the virtual fourth vertex
//! of a planar simplex, and barycentric weights with respect to a tetrahedron.
//!
//! Every other module expresses positions relative to an enclosing simplex
//! through [`lambda_nd`]. In the planar case (`n = 2`) the triangle is lifted
//! to a tetrahedron by a virtual vertex off the triangle plane and the query
//! point is projected onto that plane first, which makes the fourth weight
//! vanish identically.

use nalgebra::{Matrix3xX, Matrix4, Vector3, Vector4};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Position or velocity in the 3-D motion space (meters or meters/second).
pub type Position3<T> = Vector3<T>;

/// Default scale of the virtual fourth vertex.
pub const DEFAULT_XI: f64 = 1.0;

/// Output of the barycentric operator: four weights summing to one.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LambdaWeights<T>(pub [T; 4]);

impl<T: Real> LambdaWeights<T> {
    pub fn sum(&self) -> T {
        self.0.iter().fold(T::zero(), |acc, &v| acc + v)
    }

    /// The weights attached to the `n + 1` real vertices.
    pub fn leading(&self, n: usize) -> &[T] {
        &self.0[..n + 1]
    }

    /// `true` when the query point is strictly inside the simplex, i.e. all
    /// weights of the real vertices exceed the inside tolerance (and, for a
    /// planar simplex, the fourth weight vanishes).
    pub fn is_strictly_inside(&self, n: usize) -> bool {
        self.all_above(T::inside_tol(), n)
    }

    /// Element-wise `λ_k > threshold` over the real vertices; for `n = 2` the
    /// fourth weight must vanish instead of exceeding the threshold.
    pub fn all_above(&self, threshold: T, n: usize) -> bool {
        let leading_ok = self.leading(n).iter().all(|&l| l > threshold);
        if n == 2 {
            leading_ok && self.0[3].abs() <= T::weight_tol()
        } else {
            leading_ok
        }
    }
}

fn check_dimension(n: usize) -> Result<()> {
    if n == 2 || n == 3 {
        Ok(())
    } else {
        Err(Error::Argument(format!("simplex dimension must be 2 or 3, got {n}")))
    }
}

/// Numerical rank of `[p_2 - p_1, ..., p_{n+1} - p_1]`.
///
/// Singular values below `rank_rtol * σ_max` are treated as zero.
pub fn rank_simplex<T: Real>(points: &[Position3<T>], n: usize) -> Result<usize> {
    check_dimension(n)?;
    if points.len() != n + 1 {
        return Err(Error::Argument(format!(
            "rank of an {n}-simplex needs {} points, got {}",
            n + 1,
            points.len()
        )));
    }
    let origin = points[0];
    let diffs = Matrix3xX::from_columns(&points[1..].iter().map(|p| p - origin).collect::<Vec<_>>());
    let sv = diffs.singular_values();
    let max = sv.iter().fold(T::zero(), |m, &s| m.max(s));
    if max <= T::zero() {
        return Ok(0);
    }
    let floor = T::rank_rtol() * max;
    Ok(sv.iter().filter(|&&s| s > floor).count())
}

fn require_triangle<T: Real>(p1: &Position3<T>, p2: &Position3<T>, p3: &Position3<T>) -> Result<()> {
    if rank_simplex(&[*p1, *p2, *p3], 2)? < 2 {
        return Err(Error::Degenerate("triangle vertices are collinear".into()));
    }
    Ok(())
}

/// Unit normal `(p3 - p1) × (p2 - p1) / ‖·‖` of the triangle plane.
pub fn plane_normal<T: Real>(p1: &Position3<T>, p2: &Position3<T>, p3: &Position3<T>) -> Result<Position3<T>> {
    require_triangle(p1, p2, p3)?;
    let raw = (p3 - p1).cross(&(p2 - p1));
    Ok(raw / raw.norm())
}

/// Virtual vertex `p1 + Ξ (p3 - p1) × (p2 - p1)` lifting a triangle to a
/// tetrahedron.
pub fn virtual_fourth_point<T: Real>(
    p1: &Position3<T>,
    p2: &Position3<T>,
    p3: &Position3<T>,
    xi: T,
) -> Result<Position3<T>> {
    if xi == T::zero() {
        return Err(Error::Degenerate("virtual point scale must be nonzero".into()));
    }
    require_triangle(p1, p2, p3)?;
    Ok(p1 + (p3 - p1).cross(&(p2 - p1)) * xi)
}

/// Orthogonal projection of `c` onto the plane of the triangle `p1 p2 p3`.
///
/// The normal component is measured from `p1`, so the result lies on the
/// triangle's own plane even when that plane misses the origin.
pub fn project_to_plane<T: Real>(
    c: &Position3<T>,
    p1: &Position3<T>,
    p2: &Position3<T>,
    p3: &Position3<T>,
) -> Result<Position3<T>> {
    let normal = plane_normal(p1, p2, p3)?;
    Ok(c - normal * (c - p1).dot(&normal))
}

/// Barycentric weights of `c` with respect to the tetrahedron `p1..p4`:
/// solves `[p1 p2 p3 p4; 1 1 1 1] λ = [c; 1]`.
pub fn barycentric_lambda<T: Real>(
    p1: &Position3<T>,
    p2: &Position3<T>,
    p3: &Position3<T>,
    p4: &Position3<T>,
    c: &Position3<T>,
) -> Result<LambdaWeights<T>> {
    if rank_simplex(&[*p1, *p2, *p3, *p4], 3)? < 3 {
        return Err(Error::Singular("tetrahedron is degenerate".into()));
    }
    let col = |p: &Position3<T>| Vector4::new(p.x, p.y, p.z, T::one());
    let m = Matrix4::from_columns(&[col(p1), col(p2), col(p3), col(p4)]);
    let rhs = col(c);
    let sol = m
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Singular("barycentric system has no unique solution".into()))?;
    Ok(LambdaWeights([sol[0], sol[1], sol[2], sol[3]]))
}

/// Barycentric weights of `c` relative to an `n`-simplex (`n` = 2 or 3).
///
/// For `n = 3` the simplex has four vertices and this is
/// [`barycentric_lambda`]. For `n = 2` the triangle is lifted with
/// [`virtual_fourth_point`] and `c` is first projected onto the triangle
/// plane, so the fourth weight is zero up to round-off.
pub fn lambda_nd<T: Real>(simplex: &[Position3<T>], c: &Position3<T>, n: usize, xi: T) -> Result<LambdaWeights<T>> {
    check_dimension(n)?;
    if simplex.len() != n + 1 {
        return Err(Error::Argument(format!(
            "an {n}-simplex has {} vertices, got {}",
            n + 1,
            simplex.len()
        )));
    }
    match n {
        3 => barycentric_lambda(&simplex[0], &simplex[1], &simplex[2], &simplex[3], c),
        _ => {
            let (p1, p2, p3) = (&simplex[0], &simplex[1], &simplex[2]);
            let p4 = virtual_fourth_point(p1, p2, p3, xi)?;
            let projected = project_to_plane(c, p1, p2, p3)?;
            barycentric_lambda(p1, p2, p3, &p4, &projected)
        }
    }
}

/// Area (`n = 2`) or volume (`n = 3`) of the simplex.
pub fn simplex_measure<T: Real>(simplex: &[Position3<T>], n: usize) -> Result<T> {
    check_dimension(n)?;
    if simplex.len() != n + 1 {
        return Err(Error::Argument(format!("expected {} vertices, got {}", n + 1, simplex.len())));
    }
    let e1 = simplex[1] - simplex[0];
    let e2 = simplex[2] - simplex[0];
    Ok(match n {
        2 => e1.cross(&e2).norm() * T::lit(0.5),
        _ => (e1.cross(&e2).dot(&(simplex[3] - simplex[0]))).abs() / T::lit(6.0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn p(x: f64, y: f64, z: f64) -> Position3<f64> {
        Position3::new(x, y, z)
    }

    #[test]
    fn rank_examples() {
        assert_eq!(rank_simplex(&[p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.)], 2).unwrap(), 2);
        assert_eq!(rank_simplex(&[p(0., 0., 0.), p(1., 0., 0.), p(2., 0., 0.)], 2).unwrap(), 1);
        assert_eq!(
            rank_simplex(&[p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.)], 3).unwrap(),
            3
        );
        assert_eq!(rank_simplex(&[p(1., 1., 1.); 3], 2).unwrap(), 0);
    }

    #[test]
    fn rank_rejects_wrong_count() {
        assert!(matches!(
            rank_simplex(&[p(0., 0., 0.), p(1., 0., 0.)], 2),
            Err(Error::Argument(_))
        ));
        assert!(matches!(rank_simplex(&[p(0., 0., 0.); 5], 4), Err(Error::Argument(_))));
    }

    #[test]
    fn normal_examples() {
        let n = plane_normal(&p(0., 0., 0.), &p(1., 0., 0.), &p(0., 1., 0.)).unwrap();
        assert_eq!(n, p(0., 0., -1.));
        let n = plane_normal(&p(0., 0., 0.), &p(0., 1., 0.), &p(1., 0., 0.)).unwrap();
        assert_eq!(n, p(0., 0., 1.));
        let n = plane_normal(&p(0., 0., 1.), &p(1., 0., 1.), &p(0., 1., 1.)).unwrap();
        assert_eq!(n, p(0., 0., -1.));
        assert!(matches!(
            plane_normal(&p(0., 0., 0.), &p(1., 1., 1.), &p(2., 2., 2.)),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn virtual_point_examples() {
        let (a, b, c) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.));
        assert_eq!(virtual_fourth_point(&a, &b, &c, 1.0).unwrap(), p(0., 0., -1.));
        assert_eq!(virtual_fourth_point(&a, &b, &c, -2.0).unwrap(), p(0., 0., 2.));
        assert!(virtual_fourth_point(&a, &b, &c, 0.0).is_err());
        assert!(virtual_fourth_point(&a, &b, &p(3., 0., 0.), 1.0).is_err());
    }

    #[test]
    fn projection_examples() {
        let (a, b, c) = (p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.));
        assert_eq!(project_to_plane(&p(3., 4., 5.), &a, &b, &c).unwrap(), p(3., 4., 0.));
        assert_eq!(project_to_plane(&p(3., 4., 0.), &a, &b, &c).unwrap(), p(3., 4., 0.));
        // plane z = 2 (off the origin)
        let (a, b, c) = (p(0., 0., 2.), p(1., 0., 2.), p(0., 1., 2.));
        assert_relative_eq!(project_to_plane(&p(3., 4., 5.), &a, &b, &c).unwrap(), p(3., 4., 2.));
    }

    #[test]
    fn lambda_examples() {
        let t = [p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.)];
        let l = barycentric_lambda(&t[0], &t[1], &t[2], &t[3], &p(0.25, 0.25, 0.25)).unwrap();
        for v in l.0 {
            assert_relative_eq!(v, 0.25, epsilon = 1e-15);
        }
        let l = barycentric_lambda(&t[0], &t[1], &t[2], &t[3], &t[0]).unwrap();
        assert_relative_eq!(l.0[0], 1.0, epsilon = 1e-15);
        assert!(l.0[1..].iter().all(|v| v.abs() < 1e-15));
        assert!(matches!(
            barycentric_lambda(&t[0], &t[1], &t[2], &p(1., 1., 0.), &t[0]),
            Err(Error::Singular(_))
        ));
    }

    #[test]
    fn lambda_nd_planar_examples() {
        let tri = [p(0., 0., 0.), p(4., 0., 0.), p(0., 4., 0.)];
        let l = lambda_nd(&tri, &p(1., 1., 0.), 2, 1.0).unwrap();
        assert_relative_eq!(l.0[0], 0.5, epsilon = 1e-14);
        assert_relative_eq!(l.0[1], 0.25, epsilon = 1e-14);
        assert_relative_eq!(l.0[2], 0.25, epsilon = 1e-14);
        assert!(l.0[3].abs() < 1e-15);

        let centroid = (tri[0] + tri[1] + tri[2]) / 3.0;
        let l = lambda_nd(&tri, &centroid, 2, 1.0).unwrap();
        for k in 0..3 {
            assert_relative_eq!(l.0[k], 1.0 / 3.0, epsilon = 1e-14);
        }

        // lifting the query off the plane does not change the weights
        let above = lambda_nd(&tri, &p(1., 1., 7.), 2, 1.0).unwrap();
        assert_relative_eq!(above.0[0], 0.5, epsilon = 1e-14);
        assert!(above.0[3].abs() < 1e-15);
    }

    #[test]
    fn lambda_nd_works_in_f32() {
        let tri = [
            Position3::<f32>::new(0., 0., 3.),
            Position3::new(4., 0., 3.),
            Position3::new(0., 4., 3.),
        ];
        let l = lambda_nd(&tri, &Position3::new(1., 1., 3.), 2, 1.0f32).unwrap();
        assert!((l.0[0] - 0.5).abs() < 1e-5);
        assert!((l.sum() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn measures() {
        let tri = [p(0., 0., 0.), p(4., 0., 0.), p(0., 4., 0.)];
        assert_relative_eq!(simplex_measure(&tri, 2).unwrap(), 8.0);
        let tet = [p(0., 0., 0.), p(1., 0., 0.), p(0., 1., 0.), p(0., 0., 1.)];
        assert_relative_eq!(simplex_measure(&tet, 3).unwrap(), 1.0 / 6.0);
    }
}
