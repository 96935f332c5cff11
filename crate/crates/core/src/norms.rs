//! Norms used by stopping criteria and solution comparisons.

/// Plain nodal l2 norm.
pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Relative l2 difference ||a - b|| / max(||b||, floor).
pub fn rel_l2_diff(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let denom = l2(b).max(1e-300);
    diff / denom
}

/// Mesh-weighted (trapezoid) L2 norm over an interval, for cross-mesh
/// comparisons where node spacing varies.
pub fn weighted_l2(values: &[f64], weights: &[f64]) -> f64 {
    debug_assert_eq!(values.len(), weights.len());
    values
        .iter()
        .zip(weights)
        .map(|(v, w)| v * v * w)
        .sum::<f64>()
        .sqrt()
}

pub fn weighted_rel_l2_diff(a: &[f64], b: &[f64], weights: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    weighted_l2(&diff, weights) / weighted_l2(b, weights).max(1e-300)
}
