use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("path has zero length")]
    DegeneratePath,
    #[error("a path needs at least two points")]
    TooFewPoints,
    #[error("node spacing must be positive")]
    BadSpacing,
}

pub fn polyline_length(points: &[Vec2]) -> f64 {
    points.windows(2).map(|w| w[0].distance(w[1])).sum()
}

/// Arc-length resampling of a drawn polyline into trajectory nodes spaced
/// `node_spacing` apart. The first and last points are always kept.
pub fn resample_path(points: &[Vec2], node_spacing: f64) -> Result<Vec<Vec2>, PathError> {
    if points.len() < 2 {
        return Err(PathError::TooFewPoints);
    }
    if !(node_spacing > 0.0 && node_spacing.is_finite()) {
        return Err(PathError::BadSpacing);
    }
    let total = polyline_length(points);
    if !(total > 0.0) {
        return Err(PathError::DegeneratePath);
    }

    let first = points[0];
    let last = points[points.len() - 1];
    let mut nodes = vec![first];
    // skip a regular sample that lands on the end point
    let end_guard = total - 1e-9 * total;
    let mut next_s = node_spacing;
    let mut walked = 0.0;
    for w in points.windows(2) {
        let seg = w[0].distance(w[1]);
        if seg == 0.0 {
            continue;
        }
        while next_s < end_guard && next_s <= walked + seg {
            let f = (next_s - walked) / seg;
            nodes.push(w[0] + (w[1] - w[0]) * f);
            next_s += node_spacing;
        }
        walked += seg;
    }
    nodes.push(last);
    Ok(nodes)
}

/// Shortest distance from `p` to the polyline through `nodes`.
pub fn distance_to_polyline(p: Vec2, nodes: &[Vec2]) -> f64 {
    match nodes {
        [] => f64::INFINITY,
        [only] => p.distance(*only),
        _ => nodes.windows(2).map(|w| distance_to_segment(p, w[0], w[1])).fold(f64::INFINITY, f64::min),
    }
}

pub fn distance_to_segment(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}
