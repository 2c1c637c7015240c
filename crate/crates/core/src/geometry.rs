//! Planar helpers: convex hull and minimum-area enclosing rectangle.

use crate::Vec2;

fn cross(o: Vec2, a: Vec2, b: Vec2) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Convex hull (Andrew's monotone chain), counter-clockwise, no collinear points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts: Vec<Vec2> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    // upper hull must not eat into the lower one
    let lower = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Minimum-area rectangle enclosing `points`, as 4 corners in
/// counter-clockwise order. Uses the fact that one side of the optimal
/// rectangle is collinear with a hull edge.
pub fn min_area_rect(points: &[Vec2]) -> Option<[Vec2; 4]> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return None;
    }
    let mut best: Option<(f64, [Vec2; 4])> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let u = edge / len;
        let n = Vec2::new(-u.y, u.x);
        let (mut umin, mut umax, mut nmin, mut nmax) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for p in &hull {
            let (a, b) = (p.dot(&u), p.dot(&n));
            umin = umin.min(a);
            umax = umax.max(a);
            nmin = nmin.min(b);
            nmax = nmax.max(b);
        }
        let area = (umax - umin) * (nmax - nmin);
        if best.as_ref().is_none_or(|(a, _)| area < *a) {
            let c = |a: f64, b: f64| u * a + n * b;
            best = Some((area, [c(umin, nmin), c(umax, nmin), c(umax, nmax), c(umin, nmax)]));
        }
    }
    best.map(|(_, r)| r)
}

/// Shoelace area, positive for counter-clockwise polygons.
pub fn signed_area(poly: &[Vec2]) -> f64 {
    let n = poly.len();
    (0..n).map(|i| poly[i].x * poly[(i + 1) % n].y - poly[(i + 1) % n].x * poly[i].y).sum::<f64>() / 2.0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::angle::rotate;
    use proptest::prelude::*;

    #[test]
    fn hull_of_square_with_interior() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(1.0, 1.0),
            Vec2::new(0.0, 1.0),
            Vec2::new(0.5, 0.5),
            Vec2::new(0.5, 0.0),
        ];
        let h = convex_hull(&pts);
        assert_eq!(h.len(), 4);
        assert!((signed_area(&h) - 1.0).abs() < 1e-12);
    }

    proptest! {
        #[test]
        fn rect_recovers_rotated_rectangle(w in 1f64..50.0, l in 1f64..100.0, th in -3.1f64..3.1, cx in -100f64..100.0, cy in -100f64..100.0) {
            let c = Vec2::new(cx, cy);
            let corners: Vec<Vec2> = [(-l, -w), (l, -w), (l, w), (-l, w)]
                .iter()
                .map(|&(a, b)| c + rotate(Vec2::new(a / 2.0, b / 2.0), th))
                .collect();
            let r = min_area_rect(&corners).unwrap();
            prop_assert!((signed_area(&r) - w * l).abs() < 1e-6 * w * l);
            for p in &corners {
                prop_assert!(r.iter().any(|q| (q - p).norm() < 1e-6));
            }
        }

        #[test]
        fn rect_encloses_points(pts in proptest::collection::vec((-50f64..50.0, -50f64..50.0), 3..30)) {
            let pts: Vec<Vec2> = pts.into_iter().map(|(x, y)| Vec2::new(x, y)).collect();
            let hull = convex_hull(&pts);
            prop_assume!(hull.len() >= 3 && signed_area(&hull) > 1e-6);
            let r = min_area_rect(&pts).unwrap();
            prop_assert!(signed_area(&r) + 1e-9 >= signed_area(&hull));
            for p in &pts {
                for i in 0..4 {
                    prop_assert!(cross(r[i], r[(i + 1) % 4], *p) >= -1e-7);
                }
            }
        }
    }
}
