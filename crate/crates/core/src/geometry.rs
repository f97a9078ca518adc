//! Planar convex hulls and polygon areas.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Point2 = [f64; 2];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("degenerate input: {distinct} distinct point(s), need at least 3")]
    DegenerateInput { distinct: usize },
    #[error("non-finite point at index {0}")]
    NonFinite(usize),
}

/// Convex polygon with counter-clockwise vertices starting at the
/// lexicographically smallest one.
///
/// `degenerate` marks collinear inputs: the vertex list then holds the two
/// extreme points and the area is zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullPolygon {
    pub vertices: Vec<Point2>,
    pub area: f64,
    pub degenerate: bool,
}

/// Twice the signed area of triangle `(o, a, b)`; positive for a left turn.
#[inline]
pub fn orient(o: &Point2, a: &Point2, b: &Point2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

fn lex_cmp(a: &Point2, b: &Point2) -> Ordering {
    a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1]))
}

/// Normalises `-0.0` to `0.0` so equal coordinates compare equal under `total_cmp`.
#[inline]
fn canon(v: f64) -> f64 {
    if v == 0.0 {
        0.0
    } else {
        v
    }
}

/// Andrew's monotone chain. Collinear boundary points are dropped.
pub fn convex_hull(points: &[Point2]) -> Result<HullPolygon, GeometryError> {
    if let Some(i) = points
        .iter()
        .position(|p| !(p[0].is_finite() && p[1].is_finite()))
    {
        return Err(GeometryError::NonFinite(i));
    }
    let mut pts: Vec<Point2> = points.iter().map(|p| [canon(p[0]), canon(p[1])]).collect();
    pts.sort_by(lex_cmp);
    pts.dedup();
    if pts.len() < 3 {
        return Err(GeometryError::DegenerateInput {
            distinct: pts.len(),
        });
    }

    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for p in &pts {
        while hull.len() >= 2 && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(*p);
    }
    let lower_len = hull.len() + 1;
    for p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len
            && orient(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(*p);
    }
    hull.pop();

    strip_non_left_turns(&mut hull);

    if hull.len() < 3 {
        return Ok(HullPolygon {
            vertices: hull,
            area: 0.0,
            degenerate: true,
        });
    }
    let area = polygon_area(&hull);
    Ok(HullPolygon {
        vertices: hull,
        area,
        degenerate: false,
    })
}

/// Removes vertices that do not make a strict left turn with their cyclic
/// neighbours. Near-collinear triples can survive the chain construction
/// because the chain never tests the wrap-around triples.
fn strip_non_left_turns(hull: &mut Vec<Point2>) {
    let mut changed = true;
    while changed && hull.len() >= 3 {
        changed = false;
        let n = hull.len();
        // Vertex 0 is the lexicographic minimum and always extreme; start at 1
        // so the starting vertex is preserved.
        for i in (1..n).chain(std::iter::once(0)) {
            let n = hull.len();
            if n < 3 || i >= n {
                break;
            }
            let prev = hull[(i + n - 1) % n];
            let next = hull[(i + 1) % n];
            if orient(&prev, &hull[i], &next) <= 0.0 {
                hull.remove(i);
                changed = true;
                break;
            }
        }
    }
}

/// Shoelace area; zero for fewer than three vertices.
pub fn polygon_area(vertices: &[Point2]) -> f64 {
    if vertices.len() < 3 {
        return 0.0;
    }
    let n = vertices.len();
    let twice: f64 = (0..n)
        .map(|i| {
            let a = &vertices[i];
            let b = &vertices[(i + 1) % n];
            a[0] * b[1] - b[0] * a[1]
        })
        .sum();
    twice.abs() / 2.0
}

/// Rounds half to even at `decimals` places, the way array libraries do it:
/// scale, round, unscale.
pub fn round_to(v: f64, decimals: u32) -> f64 {
    let factor = 10f64.powi(decimals as i32);
    canon((v * factor).round_ties_even() / factor)
}

/// Number of distinct points after rounding each coordinate to `decimals` places.
pub fn unique_rounded_count(points: &[Point2], decimals: u32) -> usize {
    let mut rounded: Vec<Point2> = points
        .iter()
        .map(|p| [round_to(p[0], decimals), round_to(p[1], decimals)])
        .collect();
    rounded.sort_by(lex_cmp);
    rounded.dedup();
    rounded.len()
}
