//! Discrete pmf recovery from finite moment sequences: monomial
//! Vandermonde inversion, the Chebyshev-basis reformulation, and a
//! nonnegativity-constrained least-squares fallback.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{map_moments, MomentSequence};

/// Negative probabilities at or below this magnitude are clamped to zero
/// by cleanup.
pub const TOL_NEG: f64 = 1e-10;
/// Reciprocal-condition refusal threshold for the monomial path.
pub const MONOMIAL_CONDITION_LIMIT: f64 = 1e12;

/// Discrete pmf on strictly increasing support values. Probabilities may
/// be raw (slightly negative) until cleaned.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePmf {
    values: Vec<f64>,
    probs: Vec<f64>,
}

impl DiscretePmf {
    pub fn new(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.len() != probs.len() {
            return Err(Error::InvalidArgument(
                "values and probs must be non-empty and equal length".into(),
            ));
        }
        if values.iter().any(|v| !v.is_finite()) || probs.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("entries must be finite".into()));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "support values must be strictly increasing".into(),
            ));
        }
        Ok(Self { values, probs })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Raw k-th moment of the pmf (0^0 = 1).
    pub fn moment(&self, k: usize) -> f64 {
        self.values
            .iter()
            .zip(self.probs.iter())
            .map(|(v, p)| if k == 0 { *p } else { v.powi(k as i32) * p })
            .sum()
    }

    /// Whether the probabilities form a distribution to within the
    /// stated tolerances.
    pub fn is_valid_distribution(&self) -> bool {
        self.probs.iter().all(|p| *p >= -TOL_NEG)
            && (self.probs.iter().sum::<f64>() - 1.0).abs() <= 1e-8
    }

    /// Clamp negative probabilities of magnitude <= TOL_NEG to zero and
    /// renormalize to unit mass. Idempotent.
    pub fn cleanup(mut self) -> Result<Self> {
        for p in &mut self.probs {
            if *p < 0.0 && *p >= -TOL_NEG {
                *p = 0.0;
            }
        }
        let sum: f64 = self.probs.iter().sum();
        if sum <= 0.0 {
            return Err(Error::InvalidArgument(
                "probabilities sum to a nonpositive value".into(),
            ));
        }
        if (sum - 1.0).abs() > 1e-12 {
            for p in &mut self.probs {
                *p /= sum;
            }
        }
        Ok(self)
    }

    /// Categorical draw; assumes a cleaned distribution.
    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (v, p) in self.values.iter().zip(self.probs.iter()) {
            acc += p.max(0.0);
            if u < acc {
                return *v;
            }
        }
        *self.values.last().unwrap()
    }
}

/// Solution of a moment-inversion system.
#[derive(Debug, Clone)]
pub struct PmfSolution {
    pub pmf: DiscretePmf,
    /// Raw solution forms a distribution (no projection applied).
    pub valid: bool,
    /// Solver condition estimate (sigma_max / sigma_min).
    pub condition: f64,
    /// Final residual |V p - m| of the solved system.
    pub residual: f64,
}

fn condition_estimate(a: &DMatrix<f64>) -> f64 {
    let svd = a.clone().svd(false, false);
    let max = svd.singular_values.iter().copied().fold(0.0_f64, f64::max);
    let min = svd
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Monomial Vandermonde matrix: row k holds v_r^k.
pub fn monomial_vandermonde(values: &[f64], kmax: usize) -> DMatrix<f64> {
    DMatrix::from_fn(kmax + 1, values.len(), |k, r| {
        if k == 0 {
            1.0
        } else {
            values[r].powi(k as i32)
        }
    })
}

/// Direct solve of the square monomial system V p = m. Refuses when the
/// condition estimate exceeds `MONOMIAL_CONDITION_LIMIT`; the Chebyshev
/// variant handles those supports.
pub fn vandermonde_solve(values: &[f64], m: &MomentSequence) -> Result<PmfSolution> {
    let r = values.len();
    if r == 0 {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    if m.max_order() + 1 != r {
        return Err(Error::InvalidArgument(format!(
            "square system needs K = R: got K = {}, R = {}",
            m.max_order(),
            r - 1
        )));
    }
    let v = monomial_vandermonde(values, m.max_order());
    let cond = condition_estimate(&v);
    if !cond.is_finite() || cond > MONOMIAL_CONDITION_LIMIT {
        return Err(Error::IllConditioned {
            cond,
            limit: MONOMIAL_CONDITION_LIMIT,
        });
    }
    let rhs = DVector::from_column_slice(m.values());
    let p = v
        .clone()
        .lu()
        .solve(&rhs)
        .ok_or(Error::IllConditioned {
            cond,
            limit: MONOMIAL_CONDITION_LIMIT,
        })?;
    let residual = (&v * &p - &rhs).norm();
    let pmf = DiscretePmf::new(values.to_vec(), p.iter().copied().collect())?;
    let valid = pmf.is_valid_distribution();
    Ok(PmfSolution {
        pmf,
        valid,
        condition: cond,
        residual,
    })
}

/// Coefficients of the monomial-to-Chebyshev change of basis: row k
/// holds c_{k,j} with x^k = sum_j c_{k,j} T_j(x). The recurrence only
/// ever halves dyadic rationals, so the entries are exact.
pub fn monomial_to_chebyshev_coeffs(kmax: usize) -> DMatrix<f64> {
    let mut c = DMatrix::<f64>::zeros(kmax + 1, kmax + 1);
    c[(0, 0)] = 1.0;
    for k in 0..kmax {
        // next row = x * current row under x T_0 = T_1,
        // x T_j = (T_{j+1} + T_{j-1}) / 2 for j >= 1.
        for j in 0..=k {
            let coeff = c[(k, j)];
            if coeff == 0.0 {
                continue;
            }
            if j == 0 {
                c[(k + 1, 1)] += coeff;
            } else {
                c[(k + 1, j + 1)] += coeff * 0.5;
                c[(k + 1, j - 1)] += coeff * 0.5;
            }
        }
    }
    c
}

fn chebyshev_eval_column(x: f64, kmax: usize) -> Vec<f64> {
    let mut t = Vec::with_capacity(kmax + 1);
    t.push(1.0);
    if kmax >= 1 {
        t.push(x);
    }
    for j in 2..=kmax {
        t.push(2.0 * x * t[j - 1] - t[j - 2]);
    }
    t
}

/// Chebyshev-Vandermonde matrix on supports mapped into [-1, 1].
pub fn chebyshev_vandermonde(mapped_values: &[f64], kmax: usize) -> DMatrix<f64> {
    let mut v = DMatrix::<f64>::zeros(kmax + 1, mapped_values.len());
    for (r, &x) in mapped_values.iter().enumerate() {
        let col = chebyshev_eval_column(x, kmax);
        for k in 0..=kmax {
            v[(k, r)] = col[k];
        }
    }
    v
}

/// Options for the Chebyshev solve.
#[derive(Debug, Clone, Copy)]
pub struct ChebOptions {
    pub nonneg: bool,
    /// Relative residual bound for declaring the constrained problem
    /// infeasible.
    pub feas_tol: f64,
}

impl Default for ChebOptions {
    fn default() -> Self {
        // Noisy high-order moments leave sizable least-squares residuals
        // in the Chebyshev rows even when the recovered pmf is usable,
        // so the gate only rejects targets far outside the moment cone.
        Self {
            nonneg: false,
            feas_tol: 2.0,
        }
    }
}

/// Solve the moment system in the Chebyshev basis. Supports K = R
/// (square) and K > R (least squares); with `nonneg` the solution is the
/// nonnegativity-constrained least-squares minimizer.
pub fn chebyshev_vandermonde_solve(
    values: &[f64],
    m: &MomentSequence,
    nonneg: bool,
) -> Result<PmfSolution> {
    chebyshev_vandermonde_solve_opts(
        values,
        m,
        &ChebOptions {
            nonneg,
            ..ChebOptions::default()
        },
    )
}

pub fn chebyshev_vandermonde_solve_opts(
    values: &[f64],
    m: &MomentSequence,
    opts: &ChebOptions,
) -> Result<PmfSolution> {
    let r = values.len();
    if r == 0 {
        return Err(Error::InvalidArgument("empty support".into()));
    }
    let kmax = m.max_order();
    if kmax + 1 < r {
        return Err(Error::InvalidArgument(format!(
            "need K >= R: got K = {kmax}, R = {}",
            r - 1
        )));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "support values must be strictly increasing".into(),
        ));
    }
    // Degenerate single-point support.
    if r == 1 {
        let pmf = DiscretePmf::new(values.to_vec(), vec![m.values()[0]])?;
        let valid = pmf.is_valid_distribution();
        return Ok(PmfSolution {
            pmf,
            valid,
            condition: 1.0,
            residual: 0.0,
        });
    }
    let (lo, hi) = (values[0], values[r - 1]);
    let alpha = 2.0 / (hi - lo);
    let beta = -(hi + lo) / (hi - lo);
    let mapped: Vec<f64> = values.iter().map(|v| alpha * v + beta).collect();
    let m_mapped = map_moments(m.values(), alpha, beta);
    // x^k = sum_j c_{k,j} T_j pointwise, so the monomial moments are
    // C times the Chebyshev moments; invert the triangular system.
    let c = monomial_to_chebyshev_coeffs(kmax);
    let m_cheb = c
        .clone()
        .lu()
        .solve(&DVector::from_column_slice(&m_mapped))
        .ok_or_else(|| Error::InvalidArgument("basis change is singular".into()))?;
    let v_c = chebyshev_vandermonde(&mapped, kmax);
    let cond = condition_estimate(&v_c);

    let (p, residual) = if opts.nonneg {
        let p = nnls(&v_c, &m_cheb)?;
        let residual = (&v_c * &p - &m_cheb).norm();
        // Feasible targets live where |T_k| <= 1 bounds every row by the
        // unit mass, so the natural residual scale is m[0], not |m_C|.
        let scale = m.values()[0].abs().max(1.0);
        if residual > opts.feas_tol * scale {
            return Err(Error::InfeasibleNnls {
                residual,
                tol: opts.feas_tol * scale,
            });
        }
        (p, residual)
    } else if kmax + 1 == r {
        let p = v_c
            .clone()
            .lu()
            .solve(&m_cheb)
            .ok_or(Error::IllConditioned {
                cond,
                limit: f64::INFINITY,
            })?;
        let residual = (&v_c * &p - &m_cheb).norm();
        (p, residual)
    } else {
        let svd = v_c.clone().svd(true, true);
        let p = svd
            .solve(&m_cheb, 1e-14)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let residual = (&v_c * &p - &m_cheb).norm();
        (p, residual)
    };

    let pmf = DiscretePmf::new(values.to_vec(), p.iter().copied().collect())?;
    let valid = pmf.is_valid_distribution();
    Ok(PmfSolution {
        pmf,
        valid,
        condition: cond,
        residual,
    })
}

/// Lawson-Hanson active-set nonnegative least squares with a fixed
/// (first-wins) pivoting order.
fn nnls(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let n = a.ncols();
    let mut passive = vec![false; n];
    let mut x = DVector::<f64>::zeros(n);
    let tol = 1e-12 * a.norm().max(1.0) * b.norm().max(1.0);
    let max_outer = 3 * n + 10;

    for _ in 0..max_outer {
        let w = a.transpose() * (b - a * &x);
        let mut best: Option<(usize, f64)> = None;
        for i in 0..n {
            if !passive[i] && w[i] > tol {
                if best.map(|(_, bw)| w[i] > bw).unwrap_or(true) {
                    best = Some((i, w[i]));
                }
            }
        }
        let Some((enter, _)) = best else { break };
        passive[enter] = true;

        loop {
            let idx: Vec<usize> = (0..n).filter(|&i| passive[i]).collect();
            let sub = a.select_columns(idx.iter());
            let svd = sub.svd(true, true);
            let z_sub = svd
                .solve(b, 1e-14)
                .map_err(|e| Error::InvalidArgument(e.to_string()))?;
            if z_sub.iter().all(|&v| v > 0.0) {
                x.fill(0.0);
                for (pos, &i) in idx.iter().enumerate() {
                    x[i] = z_sub[pos];
                }
                break;
            }
            // Step toward z until the first passive coordinate hits zero.
            let mut alpha = f64::INFINITY;
            for (pos, &i) in idx.iter().enumerate() {
                if z_sub[pos] <= 0.0 {
                    let denom = x[i] - z_sub[pos];
                    if denom > 0.0 {
                        alpha = alpha.min(x[i] / denom);
                    }
                }
            }
            if !alpha.is_finite() {
                alpha = 0.0;
            }
            for (pos, &i) in idx.iter().enumerate() {
                x[i] += alpha * (z_sub[pos] - x[i]);
                if x[i] <= 1e-14 {
                    x[i] = 0.0;
                    passive[i] = false;
                }
            }
        }
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seq(values: &[f64]) -> MomentSequence {
        MomentSequence::new(values.to_vec()).unwrap()
    }

    #[test]
    fn bernoulli_square_solve() {
        let sol = vandermonde_solve(&[0.0, 1.0], &seq(&[1.0, 0.3])).unwrap();
        assert!(sol.valid);
        assert!((sol.pmf.probs()[0] - 0.7).abs() < 1e-14);
        assert!((sol.pmf.probs()[1] - 0.3).abs() < 1e-14);
    }

    #[test]
    fn three_point_forward_inverse() {
        // forward oracle: p = (0.25, 0.5, 0.25) on (0, 1, 2)
        // m1 = 0.5 + 0.5 = 1.0, m2 = 0.5 + 1.0 = 1.5
        let sol = vandermonde_solve(&[0.0, 1.0, 2.0], &seq(&[1.0, 1.0, 1.5])).unwrap();
        let expect = [0.25, 0.5, 0.25];
        for (p, e) in sol.pmf.probs().iter().zip(expect.iter()) {
            assert!((p - e).abs() < 1e-12);
        }
    }

    /// The paper's example pmf on 1..=10: one dominant atom.
    fn paper_pmf() -> DiscretePmf {
        let values: Vec<f64> = (1..=10).map(|v| v as f64).collect();
        let probs: Vec<f64> = (1..=10)
            .map(|v| if v == 5 { 0.5 } else { 1.0 / 18.0 })
            .collect();
        DiscretePmf::new(values, probs).unwrap()
    }

    fn forward_moments(pmf: &DiscretePmf, kmax: usize) -> MomentSequence {
        MomentSequence::new((0..=kmax).map(|k| pmf.moment(k)).collect()).unwrap()
    }

    #[test]
    fn chebyshev_recovers_paper_pmf_to_1e8() {
        let pmf = paper_pmf();
        let m = forward_moments(&pmf, 9);
        let sol = chebyshev_vandermonde_solve(pmf.values(), &m, false).unwrap();
        for (got, want) in sol.pmf.probs().iter().zip(pmf.probs().iter()) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
    }

    #[test]
    fn chebyshev_condition_at_least_10x_better() {
        let pmf = paper_pmf();
        let v_mono = monomial_vandermonde(pmf.values(), 9);
        let cond_mono = condition_estimate(&v_mono);
        let m = forward_moments(&pmf, 9);
        let sol = chebyshev_vandermonde_solve(pmf.values(), &m, false).unwrap();
        assert!(
            sol.condition * 10.0 <= cond_mono,
            "cheb {:.3e} vs mono {:.3e}",
            sol.condition,
            cond_mono
        );
    }

    #[test]
    fn chebyshev_matches_monomial_on_well_conditioned_input() {
        let m = seq(&[1.0, 0.3]);
        let a = vandermonde_solve(&[0.0, 1.0], &m).unwrap();
        let b = chebyshev_vandermonde_solve(&[0.0, 1.0], &m, false).unwrap();
        for (x, y) in a.pmf.probs().iter().zip(b.pmf.probs().iter()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn chebyshev_coeff_rows_match_identities() {
        let c = monomial_to_chebyshev_coeffs(3);
        // x^0 = T0, x^1 = T1
        assert_eq!(c[(0, 0)], 1.0);
        assert_eq!(c[(1, 1)], 1.0);
        assert_eq!(c[(1, 0)], 0.0);
        // x^2 = (T0 + T2) / 2
        assert_eq!(c[(2, 0)], 0.5);
        assert_eq!(c[(2, 1)], 0.0);
        assert_eq!(c[(2, 2)], 0.5);
        // x^3 = (3 T1 + T3) / 4
        assert_eq!(c[(3, 1)], 0.75);
        assert_eq!(c[(3, 3)], 0.25);
    }

    #[test]
    fn noisy_moments_nonneg_beats_plain_monomial() {
        use rand::SeedableRng;
        let pmf = paper_pmf();
        let m_exact = forward_moments(&pmf, 9);
        let v_mono = monomial_vandermonde(pmf.values(), 9);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut cheb_wins = 0usize;
        let trials = 100;
        for _ in 0..trials {
            let noisy: Vec<f64> = m_exact
                .values()
                .iter()
                .enumerate()
                .map(|(k, v)| {
                    if k == 0 {
                        *v
                    } else {
                        v * (1.0 + 1e-6 * (rng.random::<f64>() * 2.0 - 1.0))
                    }
                })
                .collect();
            let noisy = MomentSequence::new(noisy).unwrap();
            let sol = chebyshev_vandermonde_solve(pmf.values(), &noisy, true).unwrap();
            assert!(sol.pmf.probs().iter().all(|&p| p >= 0.0));
            let cheb_err = sol
                .pmf
                .probs()
                .iter()
                .zip(pmf.probs().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            // oracle: raw monomial LU solve, bypassing the refusal gate
            let rhs = DVector::from_column_slice(noisy.values());
            let mono = v_mono.clone().lu().solve(&rhs).unwrap();
            let mono_err = mono
                .iter()
                .zip(pmf.probs().iter())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0_f64, f64::max);
            if cheb_err <= mono_err {
                cheb_wins += 1;
            }
        }
        assert!(
            cheb_wins >= trials * 9 / 10,
            "chebyshev won only {cheb_wins}/{trials}"
        );
    }

    #[test]
    fn nnls_rejects_far_infeasible_target() {
        // mean 5 is far outside what support {0, 1} can produce
        let values = [0.0, 1.0];
        let m = seq(&[1.0, 5.0]);
        let err = chebyshev_vandermonde_solve(&values, &m, true).unwrap_err();
        assert!(matches!(err, Error::InfeasibleNnls { .. }));
    }

    #[test]
    fn cleanup_is_idempotent() {
        let pmf = DiscretePmf::new(vec![0.0, 1.0, 2.0], vec![0.5, -5e-11, 0.5]).unwrap();
        let once = pmf.clone().cleanup().unwrap();
        let twice = once.clone().cleanup().unwrap();
        assert_eq!(once, twice);
        assert!(once.probs().iter().all(|&p| p >= 0.0));
        assert!((once.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_point_support_short_circuits() {
        let sol = chebyshev_vandermonde_solve(&[3.0], &seq(&[1.0, 3.0]), false).unwrap();
        assert_eq!(sol.pmf.probs(), &[1.0]);
    }

    #[test]
    fn ill_conditioned_monomial_refuses() {
        // tightly clustered support blows up the monomial condition number
        let values: Vec<f64> = (0..12).map(|i| 1.0 + 1e-4 * i as f64).collect();
        let probs = vec![1.0 / 12.0; 12];
        let pmf = DiscretePmf::new(values.clone(), probs).unwrap();
        let m = forward_moments(&pmf, 11);
        let err = vandermonde_solve(&values, &m).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
    }

    #[test]
    fn square_system_requires_matching_order() {
        let err = vandermonde_solve(&[0.0, 1.0, 2.0], &seq(&[1.0, 0.5])).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }
}
