//! Pareto filtering and 2D hypervolume indicators (maximization convention).
//!
//! Two hypervolume variants are computed side by side:
//!
//! * [`hv2d_polygon`] — a triangle-fan polygon area spanned by the reference
//!   point and the sorted front. This is the report's headline number. Note
//!   that it is *not* the standard dominated-region indicator: a single-point
//!   front has zero fan area.
//! * [`hv2d_staircase`] — the standard dominated-region area (union of the
//!   rectangles between the reference point and each front point), kept as an
//!   independent sanity oracle.

use crate::error::{Error, Result};

/// A 2D front. `sorted` marks descending-`y1` order after Pareto filtering
/// (equivalently ascending `y2`).
#[derive(Debug, Clone, PartialEq)]
pub struct Front2D {
    pub points: Vec<(f64, f64)>,
    pub sorted: bool,
}

/// Both hypervolume readings of one front against one reference point.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct HvReport {
    pub hv_polygon: f64,
    pub hv_staircase: f64,
    pub reference: (f64, f64),
}

/// Maximal non-dominated subset, duplicates collapsed, sorted by descending
/// `y1`. Empty input yields an empty front.
pub fn pareto_filter(points: &[(f64, f64)]) -> Front2D {
    let mut sorted: Vec<(f64, f64)> = points.to_vec();
    // Descending y1; ties broken by descending y2 so the best duplicate leads.
    sorted.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    let mut front: Vec<(f64, f64)> = Vec::new();
    let mut best_y2 = f64::NEG_INFINITY;
    for p in sorted {
        // Strict improvement in y2 excludes dominated points and duplicates.
        if p.1 > best_y2 {
            front.push(p);
            best_y2 = p.1;
        }
    }
    Front2D {
        points: front,
        sorted: true,
    }
}

/// Triangle-fan hypervolume of a sorted front against `reference`:
/// `0.5 * | sum_k [ y1R (y2k - y2k1) + y1k (y2k1 - y2R) + y1k1 (y2R - y2k) ] |`
/// over consecutive front pairs. A one-point front has an empty sum.
pub fn hv2d_polygon(front: &Front2D, reference: (f64, f64)) -> Result<f64> {
    if !front.sorted {
        return Err(Error::Metric("polygon hypervolume needs a sorted front".into()));
    }
    if front.points.is_empty() {
        return Ok(0.0);
    }
    let (y1r, y2r) = reference;
    let mut acc = 0.0;
    for pair in front.points.windows(2) {
        let (y1k, y2k) = pair[0];
        let (y1k1, y2k1) = pair[1];
        acc += y1r * (y2k - y2k1) + y1k * (y2k1 - y2r) + y1k1 * (y2r - y2k);
    }
    Ok(0.5 * acc.abs())
}

/// Dominated-region area: the union of rectangles `[reference, point]`,
/// swept over the front in descending `y1`. Every point must sit on or above
/// the reference in both coordinates.
pub fn hv2d_staircase(front: &Front2D, reference: (f64, f64)) -> Result<f64> {
    let (y1r, y2r) = reference;
    for &(y1, y2) in &front.points {
        if y1 < y1r || y2 < y2r {
            return Err(Error::Metric(format!(
                "front point ({y1}, {y2}) does not dominate reference ({y1r}, {y2r})"
            )));
        }
    }
    let filtered = pareto_filter(&front.points);
    let mut area = 0.0;
    let mut prev_y2 = y2r;
    for &(y1, y2) in &filtered.points {
        area += (y1 - y1r) * (y2 - prev_y2);
        prev_y2 = y2;
    }
    Ok(area)
}

/// Per-objective affine bounds mapping the observed range onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NormalizationBounds {
    pub min: (f64, f64),
    pub max: (f64, f64),
}

impl NormalizationBounds {
    pub fn apply(&self, p: (f64, f64)) -> (f64, f64) {
        (
            (p.0 - self.min.0) / (self.max.0 - self.min.0),
            (p.1 - self.min.1) / (self.max.1 - self.min.1),
        )
    }
}

/// Min-max normalization over the pooled verification results of every
/// uncertainty level: maxima map to 1, minima (the nadir) to 0.
pub fn normalize_verification(
    points: &[(f64, f64)],
) -> Result<(Vec<(f64, f64)>, NormalizationBounds)> {
    if points.len() < 2 {
        return Err(Error::Metric(
            "normalization needs at least two points".into(),
        ));
    }
    let mut min = (f64::INFINITY, f64::INFINITY);
    let mut max = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for &(a, b) in points {
        min.0 = min.0.min(a);
        min.1 = min.1.min(b);
        max.0 = max.0.max(a);
        max.1 = max.1.max(b);
    }
    if max.0 == min.0 || max.1 == min.1 {
        return Err(Error::Metric(
            "degenerate objective: max equals min over the verification set".into(),
        ));
    }
    let bounds = NormalizationBounds { min, max };
    Ok((points.iter().map(|&p| bounds.apply(p)).collect(), bounds))
}

/// Relative hypervolume loss in percent: `100 (hv_ref - hv) / hv_ref`.
pub fn relative_hv_loss(hv: f64, hv_ref: f64) -> Result<f64> {
    if hv_ref <= 0.0 {
        return Err(Error::Metric(format!(
            "reference hypervolume {hv_ref} must be positive"
        )));
    }
    Ok(100.0 * (hv_ref - hv) / hv_ref)
}
