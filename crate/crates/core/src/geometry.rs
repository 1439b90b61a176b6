//! Planar convex hull and polygon measures.

use std::cmp::Ordering;

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

fn cross(o: Point2, a: Point2, b: Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn lex(a: &Point2, b: &Point2) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

/// `-0.0 + 0.0 == +0.0`; without this `total_cmp` splits signed zeros and a
/// collinear set stops being monotone along its line.
fn unsign_zero(p: Point2) -> Point2 {
    [p[0] + 0.0, p[1] + 0.0]
}

/// Convex hull by Andrew's monotone chain, counter-clockwise, collinear points
/// dropped. Fewer than three distinct points are returned as-is (sorted).
pub fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts: Vec<Point2> = points.iter().copied().map(unsign_zero).collect();
    pts.sort_by(lex);
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    hull
}

/// Shoelace area of a simple polygon (positive when counter-clockwise).
pub fn polygon_area(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    0.5 * twice
}

pub fn polygon_perimeter(poly: &[Point2]) -> f64 {
    let n = poly.len();
    if n < 2 {
        return 0.0;
    }
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            (b[0] - a[0]).hypot(b[1] - a[1])
        })
        .sum()
}

/// Cox roundness `4 pi A / P^2` of the convex hull of `points`, clipped to [0, 1].
pub fn circularity(points: &[Point2]) -> Result<f64> {
    let hull = convex_hull(points);
    if hull.len() < 3 {
        return Err(Error::Degenerate("circularity needs at least three non-collinear points".into()));
    }
    let area = polygon_area(&hull);
    let perimeter = polygon_perimeter(&hull);
    if !(area > 1e-12 * perimeter * perimeter) {
        return Err(Error::Degenerate("point set has zero area".into()));
    }
    Ok((4.0 * std::f64::consts::PI * area / (perimeter * perimeter)).clamp(0.0, 1.0))
}

/// Whether `p` lies inside (or on) the convex polygon `hull` (counter-clockwise).
pub fn hull_contains(hull: &[Point2], p: Point2, tol: f64) -> bool {
    let n = hull.len();
    if n < 3 {
        return false;
    }
    (0..n).all(|i| {
        let (a, b) = (hull[i], hull[(i + 1) % n]);
        let edge = (b[0] - a[0]).hypot(b[1] - a[1]);
        cross(a, b, p) >= -tol * edge
    })
}

/// Vertices of the convex hull of the Minkowski sum of two point sets.
pub fn minkowski_hull(a: &[Point2], b: &[Point2]) -> Vec<Point2> {
    let ha = convex_hull(a);
    let hb = convex_hull(b);
    let mut sums = Vec::with_capacity(ha.len() * hb.len());
    for p in &ha {
        for q in &hb {
            sums.push([p[0] + q[0], p[1] + q[1]]);
        }
    }
    convex_hull(&sums)
}
