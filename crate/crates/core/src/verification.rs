//! Verification of optimized candidates against the exact ground truth.
//!
//! Optimized inputs are rounded to three decimals (half-to-even), re-evaluated
//! with the noise-free truth functions (which play the role of the
//! high-fidelity reference), normalized jointly across every uncertainty
//! level, and scored by normalized hypervolume against the nadir at (0,0).
//! Losses are reported relative to the lowest-uncertainty level.

use crate::error::Result;
use crate::nsga3::{GeneBound, GeneSpec};
use crate::pareto::{
    hv2d_polygon, hv2d_staircase, normalize_verification, pareto_filter, relative_hv_loss,
    NormalizationBounds,
};
use crate::problems::{
    converter_truth, moderator_truth, ConverterPoint, Material, ModeratorPoint, ObjectivePair,
    ProblemId, Shape,
};

pub use crate::pipeline::repeat_study;

/// Rounds continuous genes half-to-even to 3 decimals, then clips to bounds;
/// categorical genes pass through. Idempotent.
pub fn round_inputs(genes: &[f64], spec: &GeneSpec) -> Vec<f64> {
    genes
        .iter()
        .zip(&spec.genes)
        .map(|(&g, bound)| match *bound {
            GeneBound::Continuous { lo, hi } => ((g * 1000.0).round_ties_even() / 1000.0).clamp(lo, hi),
            GeneBound::Categorical { .. } => g,
        })
        .collect()
}

/// Decodes a gene vector into the problem's typed design point and evaluates
/// the exact truth.
pub fn truth_from_genes(problem: ProblemId, genes: &[f64]) -> Result<ObjectivePair> {
    match problem {
        ProblemId::Moderator => {
            let p = ModeratorPoint::new(genes[0], genes[1])?;
            Ok(moderator_truth(&p))
        }
        ProblemId::Converter => {
            let shape = if genes[0] == 0.0 { Shape::Cylinder } else { Shape::Cone };
            let material = if genes[1] == 0.0 { Material::Be } else { Material::LiF };
            let p = ConverterPoint::new(shape, material, genes[2], genes[3])?;
            Ok(converter_truth(&p))
        }
    }
}

/// Evaluates every (already rounded) candidate with the noise-free oracle.
pub fn verify_level(candidates: &[Vec<f64>], problem: ProblemId) -> Result<Vec<ObjectivePair>> {
    candidates
        .iter()
        .map(|genes| truth_from_genes(problem, genes))
        .collect()
}

/// One row of the loss table.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct LossRow {
    pub u: f64,
    pub hv_polygon: f64,
    pub hv_staircase: f64,
    pub loss_polygon_pct: f64,
    pub loss_staircase_pct: f64,
    pub front_size: usize,
}

/// Loss table plus the normalized scatter data behind it.
#[derive(Debug, Clone, PartialEq)]
pub struct LossTable {
    pub bounds: NormalizationBounds,
    pub rows: Vec<LossRow>,
    /// Per level: every verified point after normalization.
    pub normalized: Vec<Vec<(f64, f64)>>,
    /// Per level: the Pareto-filtered normalized front.
    pub fronts: Vec<Vec<(f64, f64)>>,
}

/// Builds the per-level normalized hypervolume and loss rows. Normalization
/// bounds come from the union of all levels' oracle results; the reference
/// level is the lowest uncertainty present.
pub fn build_loss_table(levels: &[(f64, Vec<ObjectivePair>)]) -> Result<LossTable> {
    assert!(!levels.is_empty());
    let pooled: Vec<(f64, f64)> = levels
        .iter()
        .flat_map(|(_, pairs)| pairs.iter().map(|p| (p.f1, p.f2)))
        .collect();
    let (_, bounds) = normalize_verification(&pooled)?;

    let mut normalized = Vec::with_capacity(levels.len());
    let mut fronts = Vec::with_capacity(levels.len());
    let mut raw_rows = Vec::with_capacity(levels.len());
    for (u, pairs) in levels {
        let points: Vec<(f64, f64)> = pairs.iter().map(|p| bounds.apply((p.f1, p.f2))).collect();
        let front = pareto_filter(&points);
        let hv_polygon = hv2d_polygon(&front, (0.0, 0.0))?;
        let hv_staircase = hv2d_staircase(&front, (0.0, 0.0))?;
        raw_rows.push((*u, hv_polygon, hv_staircase, front.points.len()));
        normalized.push(points);
        fronts.push(front.points);
    }

    let reference = raw_rows
        .iter()
        .cloned()
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap();
    let rows = raw_rows
        .iter()
        .map(|&(u, hv_p, hv_s, front_size)| {
            Ok(LossRow {
                u,
                hv_polygon: hv_p,
                hv_staircase: hv_s,
                loss_polygon_pct: relative_hv_loss(hv_p, reference.1)?,
                loss_staircase_pct: relative_hv_loss(hv_s, reference.2)?,
                front_size,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LossTable {
        bounds,
        rows,
        normalized,
        fronts,
    })
}
