//! Deterministic adaptive quadrature for integrands of the form
//! x^k exp(-poly(x)), built on a 20-point Gauss-Legendre base rule.

use std::sync::OnceLock;

/// Exponents above this overflow exp() in f64; evaluation refuses.
pub(crate) const EXP_OVERFLOW: f64 = 700.0;
const BASE_PANELS: usize = 16;
const MAX_DEPTH: usize = 40;
/// Refinement stops after this many panel evaluations per call.
const PANEL_BUDGET: usize = 60_000;

/// Why a quadrature call refused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum QuadError {
    /// exp() would overflow; carries the offending exponent.
    Overflow(f64),
    /// The integrand needed more refinement than the panel budget
    /// allows; the caller should treat the point as unusable.
    Budget,
}

/// Nodes and weights of the 20-point Gauss-Legendre rule on [-1, 1],
/// computed once by Newton iteration on the Legendre recurrence.
pub(crate) fn gauss_legendre_20() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = 20usize;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut pp = 0.0;
            for _ in 0..100 {
                let mut p0 = 1.0;
                let mut p1 = 0.0;
                for j in 0..n {
                    let p2 = p1;
                    p1 = p0;
                    p0 = ((2.0 * j as f64 + 1.0) * x * p1 - j as f64 * p2) / (j as f64 + 1.0);
                }
                pp = n as f64 * (x * p0 - p1) / (x * x - 1.0);
                let dx = p0 / pp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            let w = 2.0 / ((1.0 - x * x) * pp * pp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        (nodes, weights)
    })
}

fn poly_eval(coeffs: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for c in coeffs.iter().rev() {
        acc = acc * x + c;
    }
    acc
}

/// One GL20 sweep of [lo, hi]: accumulates moments 0..=kmax of
/// t^k exp(-poly(t)) dx where t = (x - center)/scale. Fails with the
/// offending exponent on overflow.
pub(crate) fn panel_moments_framed(
    coeffs: &[f64],
    center: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    kmax: usize,
) -> std::result::Result<Vec<f64>, QuadError> {
    let (nodes, weights) = gauss_legendre_20();
    let mid = 0.5 * (lo + hi);
    let half = 0.5 * (hi - lo);
    let mut acc = vec![0.0; kmax + 1];
    for (node, w) in nodes.iter().zip(weights.iter()) {
        let x = mid + half * node;
        let t = (x - center) / scale;
        let e = -poly_eval(coeffs, t);
        if e > EXP_OVERFLOW {
            return Err(QuadError::Overflow(e));
        }
        let g = e.exp() * w * half;
        let mut pow = 1.0;
        for a in acc.iter_mut() {
            *a += pow * g;
            pow *= t;
        }
    }
    Ok(acc)
}

/// One GL20 sweep in plain coordinates.
pub(crate) fn panel_moments(
    coeffs: &[f64],
    lo: f64,
    hi: f64,
    kmax: usize,
) -> std::result::Result<Vec<f64>, QuadError> {
    panel_moments_framed(coeffs, 0.0, 1.0, lo, hi, kmax)
}

#[allow(clippy::too_many_arguments)]
fn refine(
    coeffs: &[f64],
    center: f64,
    scale: f64,
    lo: f64,
    hi: f64,
    whole: &[f64],
    tols: &[f64],
    depth: usize,
    budget: &mut usize,
    out: &mut [f64],
) -> std::result::Result<(), QuadError> {
    if *budget < 2 {
        return Err(QuadError::Budget);
    }
    *budget -= 2;
    let mid = 0.5 * (lo + hi);
    let left = panel_moments_framed(coeffs, center, scale, lo, mid, whole.len() - 1)?;
    let right = panel_moments_framed(coeffs, center, scale, mid, hi, whole.len() - 1)?;
    let converged = whole
        .iter()
        .enumerate()
        .all(|(k, w)| ((left[k] + right[k]) - w).abs() <= tols[k]);
    if converged || depth >= MAX_DEPTH || (hi - lo) < 1e-14 {
        for (k, a) in out.iter_mut().enumerate() {
            *a += left[k] + right[k];
        }
        return Ok(());
    }
    let half_tols: Vec<f64> = tols.iter().map(|t| 0.5 * t).collect();
    refine(coeffs, center, scale, lo, mid, &left, &half_tols, depth + 1, budget, out)?;
    refine(coeffs, center, scale, mid, hi, &right, &half_tols, depth + 1, budget, out)
}

/// Moments integral(x^k exp(-poly(x)) dx, x in [a, b]) for k = 0..=kmax,
/// adaptively refined until each component is resolved to `rel_tol`
/// relative accuracy. All components share one panel set: the same grid
/// serves the measure and every moment.
pub(crate) fn poly_exp_moments(
    coeffs: &[f64],
    a: f64,
    b: f64,
    kmax: usize,
    rel_tol: f64,
) -> std::result::Result<Vec<f64>, QuadError> {
    poly_exp_moments_framed(coeffs, 0.0, 1.0, a, b, kmax, rel_tol)
}

/// Frame-coordinate variant: the exponent polynomial and the moment
/// powers both use t = (x - center)/scale, so concentrated measures can
/// be integrated in coordinates where their moments are O(1).
pub(crate) fn poly_exp_moments_framed(
    coeffs: &[f64],
    center: f64,
    scale: f64,
    a: f64,
    b: f64,
    kmax: usize,
    rel_tol: f64,
) -> std::result::Result<Vec<f64>, QuadError> {
    assert!(b > a, "support must satisfy a < b");
    assert!(scale > 0.0, "frame scale must be positive");
    let width = (b - a) / BASE_PANELS as f64;
    let mut rough = vec![0.0; kmax + 1];
    let mut panels = Vec::with_capacity(BASE_PANELS);
    for i in 0..BASE_PANELS {
        let lo = a + i as f64 * width;
        let hi = if i == BASE_PANELS - 1 { b } else { lo + width };
        let p = panel_moments_framed(coeffs, center, scale, lo, hi, kmax)?;
        for (k, v) in p.iter().enumerate() {
            rough[k] += v;
        }
        panels.push((lo, hi, p));
    }
    // Components that vanish by symmetry (a standardized measure's odd
    // moments) cannot be resolved to a relative tolerance; floor their
    // budget at a small fraction of the dominant component.
    let scale_floor = rough.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let tols: Vec<f64> = rough
        .iter()
        .map(|v| rel_tol * v.abs().max(1e-3 * scale_floor.max(f64::MIN_POSITIVE)))
        .collect();
    let per_panel: Vec<f64> = tols.iter().map(|t| t / BASE_PANELS as f64).collect();
    let mut out = vec![0.0; kmax + 1];
    let mut budget = PANEL_BUDGET;
    for (lo, hi, est) in &panels {
        refine(coeffs, center, scale, *lo, *hi, est, &per_panel, 0, &mut budget, &mut out)?;
    }
    Ok(out)
}
