//! Maximum-entropy density recovery from a finite moment sequence via
//! the convex dual, for continuous and discrete supports, plus sampling
//! from the fitted density.
//!
//! The dual is minimized in rescaled coordinates: the support is mapped
//! onto [0, 1] so the integrand exponent stays representable, and the
//! multipliers are mapped back analytically through the binomial
//! expansion of the affine change of variables.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::model::{hankel_psd_check, map_moments, MomentSequence, TOL_HANKEL_LOOSE};
use crate::quad::{panel_moments, poly_exp_moments, poly_exp_moments_framed, QuadError};

fn quad_err(e: QuadError) -> Error {
    match e {
        QuadError::Overflow(exponent) => Error::IntegrandOverflow { exponent },
        QuadError::Budget => Error::InvalidArgument(
            "quadrature refinement budget exceeded; the integrand is too sharp for \
             this support"
                .into(),
        ),
    }
}

/// Continuous max-entropy density exp(-sum_k lambda_k x^k) on [a, b].
#[derive(Debug, Clone, PartialEq)]
pub struct MaxEntDensity {
    lambdas: Vec<f64>,
    support: (f64, f64),
}

/// Fit diagnostics alongside the density.
#[derive(Debug, Clone)]
pub struct MaxEntFit {
    pub density: MaxEntDensity,
    pub iterations: usize,
    /// Final dual gradient norm, measured per `GradMode`.
    pub grad_norm: f64,
}

/// Convergence metric for the dual gradient (always evaluated on the
/// original-coordinate dual).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GradMode {
    /// max_k |grad_k| < tol.
    Absolute,
    /// max_k |grad_k| / max(1, |m_k|) < tol; the right scale for noisy
    /// estimated sequences whose high-order moments are large.
    Relative,
}

#[derive(Debug, Clone)]
pub struct MaxEntOptions {
    /// Starting multipliers in original coordinates; zeros when absent.
    pub init: Option<Vec<f64>>,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub grad_mode: GradMode,
    /// Relative tolerance for the Hankel admissibility gate.
    pub hankel_tol: f64,
    /// Relative quadrature tolerance.
    pub quad_tol: f64,
}

impl Default for MaxEntOptions {
    fn default() -> Self {
        Self {
            init: None,
            max_iter: 500,
            grad_tol: 1e-8,
            grad_mode: GradMode::Absolute,
            hankel_tol: TOL_HANKEL_LOOSE,
            quad_tol: 1e-10,
        }
    }
}

impl MaxEntDensity {
    pub fn new(lambdas: Vec<f64>, support: (f64, f64)) -> Result<Self> {
        if lambdas.is_empty() {
            return Err(Error::InvalidArgument("no multipliers".into()));
        }
        if !(support.0.is_finite() && support.1.is_finite()) || support.0 >= support.1 {
            return Err(Error::InvalidArgument(format!(
                "support [{}, {}] must be bounded with a < b",
                support.0, support.1
            )));
        }
        Ok(Self { lambdas, support })
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn support(&self) -> (f64, f64) {
        self.support
    }

    pub fn max_order(&self) -> usize {
        self.lambdas.len() - 1
    }

    /// Pointwise density g(x) = exp(-sum lambda_k x^k); zero outside the
    /// support.
    pub fn density(&self, x: f64) -> f64 {
        if x < self.support.0 || x > self.support.1 {
            return 0.0;
        }
        let mut acc = 0.0;
        for c in self.lambdas.iter().rev() {
            acc = acc * x + c;
        }
        (-acc).exp()
    }

    /// Moments of the density by quadrature, orders 0..=kmax.
    pub fn moments(&self, kmax: usize) -> Result<Vec<f64>> {
        poly_exp_moments(&self.lambdas, self.support.0, self.support.1, kmax, 1e-10)
            .map_err(quad_err)
    }

    /// Mass of the density between lo and hi.
    pub fn mass_between(&self, lo: f64, hi: f64) -> Result<f64> {
        let lo = lo.max(self.support.0);
        let hi = hi.min(self.support.1);
        if lo >= hi {
            return Ok(0.0);
        }
        poly_exp_moments(&self.lambdas, lo, hi, 0, 1e-10)
            .map(|v| v[0])
            .map_err(quad_err)
    }

    /// Differential entropy: since ln g = -sum lambda_k x^k,
    /// S(g) = sum_k lambda_k integral(x^k g).
    pub fn entropy(&self) -> Result<f64> {
        let moments = self.moments(self.max_order())?;
        Ok(self
            .lambdas
            .iter()
            .zip(moments.iter())
            .map(|(l, m)| l * m)
            .sum())
    }

    /// Structured text record: `K`, `support a b`, `lambdas ...`.
    pub fn write_record(&self, mut w: impl Write) -> std::io::Result<()> {
        writeln!(w, "K {}", self.max_order())?;
        writeln!(w, "support {:.16e} {:.16e}", self.support.0, self.support.1)?;
        let ls: Vec<String> = self.lambdas.iter().map(|l| format!("{l:.16e}")).collect();
        writeln!(w, "lambdas {}", ls.join(" "))
    }

    pub fn parse_record(text: &str) -> Result<Self> {
        let mut k: Option<usize> = None;
        let mut support: Option<(f64, f64)> = None;
        let mut lambdas: Option<Vec<f64>> = None;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("K") => {
                    k = Some(parts.next().and_then(|s| s.parse().ok()).ok_or_else(|| {
                        Error::Config("bad K line in density record".into())
                    })?)
                }
                Some("support") => {
                    let a: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Config("bad support line".into()))?;
                    let b: f64 = parts
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::Config("bad support line".into()))?;
                    support = Some((a, b));
                }
                Some("lambdas") => {
                    let ls: std::result::Result<Vec<f64>, _> =
                        parts.map(|s| s.parse::<f64>()).collect();
                    lambdas = Some(ls.map_err(|e| Error::Config(e.to_string()))?);
                }
                _ => return Err(Error::Config(format!("unknown record line `{line}`"))),
            }
        }
        let lambdas = lambdas.ok_or_else(|| Error::Config("missing lambdas".into()))?;
        let support = support.ok_or_else(|| Error::Config("missing support".into()))?;
        if let Some(k) = k {
            if k + 1 != lambdas.len() {
                return Err(Error::Config("K does not match lambdas length".into()));
            }
        }
        Self::new(lambdas, support)
    }
}

/// Substitute x = p + q y into the polynomial sum c_k x^k and return the
/// coefficients in y.
fn poly_affine_substitute(coeffs: &[f64], p: f64, q: f64) -> Vec<f64> {
    let n = coeffs.len();
    let mut out = vec![0.0; n];
    for (k, &c) in coeffs.iter().enumerate() {
        if c == 0.0 {
            continue;
        }
        // expand (p + q y)^k
        let mut binom = 1.0_f64;
        for j in 0..=k {
            out[j] += c * binom * p.powi((k - j) as i32) * q.powi(j as i32);
            binom = binom * (k - j) as f64 / (j + 1) as f64;
        }
    }
    out
}

fn to_unit_multipliers(lambdas: &[f64], a: f64, b: f64) -> Vec<f64> {
    let mut nu = poly_affine_substitute(lambdas, a, b - a);
    nu[0] -= (b - a).ln();
    nu
}

fn from_unit_multipliers(nu: &[f64], a: f64, b: f64) -> Vec<f64> {
    let w = b - a;
    let mut lambdas = poly_affine_substitute(nu, -a / w, 1.0 / w);
    lambdas[0] += w.ln();
    lambdas
}

/// Joint evaluation of the dual objective and gradient in the original
/// coordinates, on one shared quadrature grid.
fn dual_eval(lambdas: &[f64], m: &MomentSequence, support: (f64, f64)) -> Result<(f64, Vec<f64>)> {
    let (a, b) = support;
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::InvalidArgument(
            "support must be bounded with a < b".into(),
        ));
    }
    if lambdas.len() != m.values().len() {
        return Err(Error::InvalidArgument(format!(
            "{} multipliers for {} moments",
            lambdas.len(),
            m.values().len()
        )));
    }
    let kmax = m.max_order();
    let integrals = poly_exp_moments(lambdas, a, b, kmax, 1e-10).map_err(quad_err)?;
    let value = lambdas
        .iter()
        .zip(m.values().iter())
        .map(|(l, mk)| l * mk)
        .sum::<f64>()
        + integrals[0]
        - m.values()[0];
    let grad: Vec<f64> = m
        .values()
        .iter()
        .zip(integrals.iter())
        .map(|(mk, ik)| mk - ik)
        .collect();
    Ok((value, grad))
}

/// Dual objective d(lambda) = sum lambda_k m_k + integral exp(-sum
/// lambda_k x^k) - m_0 over the bounded support.
pub fn dual_objective(lambdas: &[f64], m: &MomentSequence, support: (f64, f64)) -> Result<f64> {
    dual_eval(lambdas, m, support).map(|(v, _)| v)
}

/// Dual gradient, componentwise m_k - integral(x^k g_lambda), on the
/// same quadrature grid as `dual_objective`.
pub fn dual_gradient(
    lambdas: &[f64],
    m: &MomentSequence,
    support: (f64, f64),
) -> Result<Vec<f64>> {
    dual_eval(lambdas, m, support).map(|(_, g)| g)
}

// --- shared Newton machinery on the unit-interval dual ---
//
// The iterate is kept in "frame" coordinates t = (u - center)/scale,
// re-standardized to the current measure as it concentrates. Newton is
// affine covariant, so the math is unchanged, while the frame keeps the
// dual Hessian I'_{k+j} well-conditioned and every quantity free of the
// catastrophic cancellation that raw coordinates suffer for measures
// concentrated on a sliver of [0, 1].

#[derive(Debug, Clone, Copy)]
struct Frame {
    center: f64,
    scale: f64,
}

impl Frame {
    const IDENTITY: Frame = Frame { center: 0.0, scale: 1.0 };
}

struct Eval {
    value: f64,
    /// Gradient in frame coordinates: target'[k] - I'_k.
    grad: DVector<f64>,
    /// Frame moments I'_k of the measure for k = 0..=2K.
    integrals: Vec<f64>,
}

trait UnitDual {
    fn dim(&self) -> usize;
    /// Target moments in plain unit-interval coordinates.
    fn target_raw(&self) -> &[f64];
    /// Frame moments I'_k for k = 0..=2K of exp(-poly(mu, t)), or None
    /// when the exponent overflows or the quadrature refuses.
    fn measure_moments(&self, mu: &[f64], frame: Frame) -> Option<Vec<f64>>;
    /// Relative noise level of one dual evaluation; the line search
    /// must not chase decreases below it.
    fn value_noise(&self) -> f64;
}

struct ContinuousDual {
    target: Vec<f64>,
    quad_tol: f64,
}

impl UnitDual for ContinuousDual {
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn target_raw(&self) -> &[f64] {
        &self.target
    }
    fn measure_moments(&self, mu: &[f64], frame: Frame) -> Option<Vec<f64>> {
        poly_exp_moments_framed(
            mu,
            frame.center,
            frame.scale,
            0.0,
            1.0,
            2 * (self.dim() - 1),
            self.quad_tol,
        )
        .ok()
    }
    fn value_noise(&self) -> f64 {
        10.0 * self.quad_tol
    }
}

struct DiscreteDual {
    target: Vec<f64>,
    atoms: Vec<f64>,
}

impl UnitDual for DiscreteDual {
    fn dim(&self) -> usize {
        self.target.len()
    }
    fn target_raw(&self) -> &[f64] {
        &self.target
    }
    fn measure_moments(&self, mu: &[f64], frame: Frame) -> Option<Vec<f64>> {
        let kmax = 2 * (self.dim() - 1);
        let mut acc = vec![0.0; kmax + 1];
        for &u in &self.atoms {
            let t = (u - frame.center) / frame.scale;
            let mut e = 0.0;
            for c in mu.iter().rev() {
                e = e * t + c;
            }
            if -e > crate::quad::EXP_OVERFLOW {
                return None;
            }
            let p = (-e).exp();
            let mut pow = 1.0;
            for a in acc.iter_mut() {
                *a += pow * p;
                pow *= t;
            }
        }
        Some(acc)
    }
    fn value_noise(&self) -> f64 {
        1e-14
    }
}

/// Target moments transported into the frame. The binomial sums here
/// act on exact inputs, so the only error is f64 rounding.
fn target_in_frame(target: &[f64], frame: Frame) -> Vec<f64> {
    map_moments(target, 1.0 / frame.scale, -frame.center / frame.scale)
}

fn evaluate(problem: &dyn UnitDual, mu: &DVector<f64>, frame: Frame) -> Option<Eval> {
    let integrals = problem.measure_moments(mu.as_slice(), frame)?;
    if integrals.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let target = target_in_frame(problem.target_raw(), frame);
    let value = mu
        .iter()
        .zip(target.iter())
        .map(|(n, t)| n * t)
        .sum::<f64>()
        + integrals[0]
        - problem.target_raw()[0];
    if !value.is_finite() {
        return None;
    }
    let grad = DVector::from_iterator(
        target.len(),
        target.iter().zip(integrals.iter()).map(|(t, i)| t - i),
    );
    Some(Eval {
        value,
        grad,
        integrals,
    })
}

/// Condition estimate of the dual Hessian at an evaluation point.
fn hessian_condition(eval: &Eval, dim: usize) -> f64 {
    let h = DMatrix::from_fn(dim, dim, |k, j| eval.integrals[k + j]);
    let eigs = h.symmetric_eigenvalues();
    let max = eigs.iter().copied().fold(f64::MIN_POSITIVE, f64::max);
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Inverse of the frame Hessian H[k][j] = I'_{k+j}, with a diagonal
/// jitter fallback for near-singular curvature.
fn hessian_inverse(eval: &Eval, dim: usize) -> DMatrix<f64> {
    let h = DMatrix::from_fn(dim, dim, |k, j| eval.integrals[k + j]);
    let trace = h.trace().max(f64::MIN_POSITIVE);
    let mut jitter = 1e-14 * trace / dim as f64;
    for _ in 0..24 {
        let jittered = &h + DMatrix::<f64>::identity(dim, dim) * jitter;
        if let Some(chol) = jittered.cholesky() {
            return chol.inverse();
        }
        jitter *= 10.0;
    }
    DMatrix::identity(dim, dim) / trace
}

struct Minimized {
    mu: DVector<f64>,
    frame: Frame,
    iterations: usize,
    grad_norm: f64,
}

/// How far the current measure may drift from the frame before the
/// iterate is re-standardized.
fn frame_drifted(eval: &Eval) -> Option<(f64, f64)> {
    let mass = eval.integrals[0];
    if !(mass > 0.0) || !mass.is_finite() {
        return None;
    }
    let mean = eval.integrals[1] / mass;
    let var = eval.integrals[2] / mass - mean * mean;
    if !var.is_finite() || var <= 0.0 {
        return None;
    }
    if mean.abs() > 0.25 || !(0.25..=4.0).contains(&var) {
        Some((mean, var.sqrt()))
    } else {
        None
    }
}

/// Newton minimization of the dual with a backtracking line search
/// enforcing sufficient decrease. The dual Hessian entries I'_{k+j}
/// fall out of every evaluation, so the curvature model is rebuilt from
/// quadrature at each accepted step. Convergence is judged by the
/// caller through `converged`, which returns the reported gradient norm.
fn minimize_unit_dual(
    problem: &dyn UnitDual,
    mu0: DVector<f64>,
    safe: DVector<f64>,
    max_iter: usize,
    converged: &dyn Fn(&Eval, Frame) -> (bool, f64),
) -> Result<Minimized> {
    let dim = problem.dim();
    let mut frame = Frame::IDENTITY;
    let safe_eval =
        evaluate(problem, &safe, frame).ok_or(Error::NonFiniteObjective { iter: 0 })?;
    let level_cap = safe_eval.value.abs() + 1e3;
    // A usable starting point must be representable, near the uniform
    // level set, and carry a curvature model the first Newton step can
    // trust; otherwise walk toward the uniform point until it does.
    let usable = |e: &Eval| e.value <= level_cap && hessian_condition(e, dim) <= 1e10;
    let mut mu = mu0;
    let mut eval = match evaluate(problem, &mu, frame).filter(&usable) {
        Some(e) => e,
        None => {
            let mut t = 1.0;
            let mut found = None;
            for _ in 0..200 {
                t *= 0.5;
                let cand = &safe + (&mu - &safe) * t;
                if let Some(e) = evaluate(problem, &cand, frame) {
                    if usable(&e) {
                        found = Some((cand, e));
                        break;
                    }
                }
            }
            let (cand, e) = match found {
                Some(pair) => pair,
                None => (safe.clone(), safe_eval),
            };
            mu = cand;
            e
        }
    };

    for iter in 0..=max_iter {
        let (done, norm) = converged(&eval, frame);
        if done {
            return Ok(Minimized {
                mu,
                frame,
                iterations: iter,
                grad_norm: norm,
            });
        }
        if iter == max_iter {
            return Err(Error::IterationCap {
                iters: max_iter,
                grad_norm: norm,
            });
        }
        // Backtracking line search; non-finite trials backtrack. A step
        // is taken on sufficient decrease that clears the quadrature
        // noise floor, or, in the terminal phase where true decreases
        // drown in that noise, on a strict drop of the reported
        // gradient norm.
        let noise_floor = problem.value_noise() * (1.0 + eval.value.abs());
        let search = |dir: &DVector<f64>, slope: f64| -> Option<(DVector<f64>, Eval)> {
            let mut alpha = 1.0_f64;
            for _ in 0..60 {
                let cand = &mu + dir * alpha;
                if let Some(e) = evaluate(problem, &cand, frame) {
                    let armijo = e.value <= eval.value + 1e-4 * alpha * slope
                        && eval.value - e.value > noise_floor;
                    let (cand_done, cand_norm) = converged(&e, frame);
                    if armijo || cand_done || cand_norm < norm * (1.0 - 1e-6) {
                        return Some((cand, e));
                    }
                }
                alpha *= 0.5;
            }
            None
        };
        let h_inv = hessian_inverse(&eval, dim);
        let newton = -(&h_inv * &eval.grad);
        let newton_slope = newton.dot(&eval.grad);
        let mut accepted = if newton_slope < 0.0 {
            search(&newton, newton_slope)
        } else {
            None
        };
        if accepted.is_none() {
            // A tail remnant of the measure can poison the high-order
            // curvature; the raw gradient still points at it.
            let steepest = -eval.grad.clone();
            let slope = steepest.dot(&eval.grad);
            accepted = search(&steepest, slope);
        }
        let Some((new_mu, new_eval)) = accepted else {
            // Flat to machine precision along every tried direction.
            return Err(Error::IterationCap {
                iters: iter,
                grad_norm: norm,
            });
        };
        mu = new_mu;
        eval = new_eval;
        // Re-standardize the frame when the measure has drifted from it.
        if let Some((mean_t, sd_t)) = frame_drifted(&eval) {
            let new_frame = Frame {
                center: frame.center + frame.scale * mean_t,
                scale: (frame.scale * sd_t).clamp(1e-13, 1e13),
            };
            // t_old = (c_new - c_old)/s_old + (s_new/s_old) t_new
            let coeffs: Vec<f64> = mu.iter().copied().collect();
            let remapped = poly_affine_substitute(
                &coeffs,
                (new_frame.center - frame.center) / frame.scale,
                new_frame.scale / frame.scale,
            );
            let cand = DVector::from_vec(remapped);
            if let Some(e) = evaluate(problem, &cand, new_frame) {
                mu = cand;
                frame = new_frame;
                eval = e;
            }
        }
    }
    unreachable!("loop always returns")
}

fn grad_converged(
    integrals: &[f64],
    frame: Frame,
    m: &[f64],
    width: f64,
    offset: f64,
    mode: GradMode,
    tol: f64,
) -> (bool, f64) {
    // Original-coordinate moments of the current measure: with
    // x = offset + width u and u = center + scale t, the frame moments
    // transport through x = (offset + width center) + width scale t.
    let kmax = m.len() - 1;
    let mx = map_moments(
        &integrals[..=kmax],
        width * frame.scale,
        offset + width * frame.center,
    );
    let mut worst = 0.0_f64;
    for k in 0..=kmax {
        let g = m[k] - mx[k];
        let scaled = match mode {
            GradMode::Absolute => g.abs(),
            GradMode::Relative => g.abs() / m[k].abs().max(1.0),
        };
        worst = worst.max(scaled);
    }
    (worst < tol, worst)
}

/// Fit the maximum-entropy density for `m` on the bounded support by
/// minimizing the convex dual.
pub fn fit_maxent(
    m: &MomentSequence,
    support: (f64, f64),
    opts: &MaxEntOptions,
) -> Result<MaxEntFit> {
    let (a, b) = support;
    if !(a.is_finite() && b.is_finite()) || a >= b {
        return Err(Error::InvalidArgument(
            "support must be bounded with a < b".into(),
        ));
    }
    let gate_tol = opts.hankel_tol * m.hankel_scale();
    if !hankel_psd_check(m, gate_tol) {
        return Err(Error::InadmissibleMoments {
            min_eig: m.hankel_min_eig(),
        });
    }
    let kmax = m.max_order();
    let width = b - a;
    let target = map_moments(m.values(), 1.0 / width, -a / width);
    let problem = ContinuousDual {
        target,
        quad_tol: opts.quad_tol,
    };
    let zeros = vec![0.0; kmax + 1];
    let init = opts.init.as_deref().unwrap_or(&zeros);
    if init.len() != kmax + 1 {
        return Err(Error::InvalidArgument(format!(
            "init has {} entries for K = {kmax}",
            init.len()
        )));
    }
    let mu0 = DVector::from_vec(to_unit_multipliers(init, a, b));
    let safe = DVector::from_vec(to_unit_multipliers(&zeros, a, b));
    let m_vals = m.values().to_vec();
    let mode = opts.grad_mode;
    let tol = opts.grad_tol;
    let check = move |e: &Eval, frame: Frame| {
        grad_converged(&e.integrals, frame, &m_vals, width, a, mode, tol)
    };
    let out = minimize_unit_dual(&problem, mu0, safe, opts.max_iter, &check)?;
    // Convert frame coefficients back to plain unit-interval
    // multipliers, then to the original support.
    let coeffs: Vec<f64> = out.mu.iter().copied().collect();
    let nu = poly_affine_substitute(
        &coeffs,
        -out.frame.center / out.frame.scale,
        1.0 / out.frame.scale,
    );
    let lambdas = from_unit_multipliers(&nu, a, b);
    Ok(MaxEntFit {
        density: MaxEntDensity::new(lambdas, support)?,
        iterations: out.iterations,
        grad_norm: out.grad_norm,
    })
}

/// Discrete max-entropy pmf on the given support values with K <= R
/// moment constraints, minimized by the same routine.
pub fn maxent_discrete(
    m: &MomentSequence,
    values: &[f64],
    opts: &MaxEntOptions,
) -> Result<crate::discrete::DiscretePmf> {
    let r = values.len();
    if r < 2 {
        return Err(Error::InvalidArgument(
            "need at least two support values".into(),
        ));
    }
    if values.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument(
            "support values must be strictly increasing".into(),
        ));
    }
    let kmax = m.max_order();
    if kmax + 1 > r {
        return Err(Error::InvalidArgument(format!(
            "maxent_discrete needs K <= R; got K = {kmax}, R = {}; solve the square \
             system directly instead",
            r - 1
        )));
    }
    let (lo, hi) = (values[0], values[r - 1]);
    let width = hi - lo;
    let atoms: Vec<f64> = values.iter().map(|v| (v - lo) / width).collect();
    let target = map_moments(m.values(), 1.0 / width, -lo / width);
    let problem = DiscreteDual {
        target,
        atoms: atoms.clone(),
    };
    let mu0 = DVector::from_vec(vec![0.0; kmax + 1]);
    let safe = mu0.clone();
    let m_vals = m.values().to_vec();
    let mode = opts.grad_mode;
    let tol = opts.grad_tol;
    let check = move |e: &Eval, frame: Frame| {
        grad_converged(&e.integrals, frame, &m_vals, width, lo, mode, tol)
    };
    let out = minimize_unit_dual(&problem, mu0, safe, opts.max_iter, &check)?;
    // p_r = exp(-poly(mu, t_r)); probabilities are invariant under the
    // affine support map, and the frame evaluation is pointwise stable.
    let probs: Vec<f64> = atoms
        .iter()
        .map(|&u| {
            let t = (u - out.frame.center) / out.frame.scale;
            let mut e = 0.0;
            for c in out.mu.iter().rev() {
                e = e * t + c;
            }
            (-e).exp()
        })
        .collect();
    crate::discrete::DiscretePmf::new(values.to_vec(), probs)
}

/// Auto-truncation for an unbounded nonnegative support: [0, b] with
/// b = max(40 m[1], 1.5 * observed max weight), the exponential-rate
/// guess taken from the first moment.
pub fn truncate_support(m: &MomentSequence, observed_max: Option<f64>) -> Result<(f64, f64)> {
    if m.max_order() < 1 {
        return Err(Error::InvalidArgument(
            "need at least the first moment to pick a support".into(),
        ));
    }
    let m1 = m.values()[1];
    if m1 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "first moment {m1} must be positive for support truncation"
        )));
    }
    let b = (40.0 * m1).max(observed_max.unwrap_or(0.0) * 1.5);
    Ok((0.0, b))
}

/// Tabulated inverse-CDF sampler on a fixed grid with monotone cubic
/// interpolation.
#[derive(Debug, Clone)]
pub struct DensitySampler {
    grid: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

pub const SAMPLER_PANELS: usize = 4096;

impl DensitySampler {
    pub fn build(density: &MaxEntDensity, panels: usize) -> Result<Self> {
        let (a, b) = density.support();
        let n = panels.max(8);
        let step = (b - a) / n as f64;
        let mut grid = Vec::with_capacity(n + 1);
        let mut cdf = Vec::with_capacity(n + 1);
        let mut pdf = Vec::with_capacity(n + 1);
        grid.push(a);
        cdf.push(0.0);
        pdf.push(density.density(a));
        let mut acc = 0.0;
        for i in 0..n {
            let lo = a + i as f64 * step;
            let hi = if i == n - 1 { b } else { lo + step };
            let mass = panel_moments(density.lambdas(), lo, hi, 0).map_err(quad_err)?[0];
            acc += mass.max(0.0);
            grid.push(hi);
            cdf.push(acc);
            pdf.push(density.density(hi));
        }
        let total = acc;
        if total <= 0.0 || !total.is_finite() {
            return Err(Error::InvalidArgument(
                "density has no mass on its support".into(),
            ));
        }
        for v in &mut cdf {
            *v /= total;
        }
        for v in &mut pdf {
            *v /= total;
        }
        *cdf.last_mut().unwrap() = 1.0;
        Ok(Self { grid, cdf, pdf })
    }

    /// Invert the CDF at the uniform draw u by monotone cubic Hermite
    /// interpolation inside the bracketing panel.
    pub fn inverse_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let idx = match self
            .cdf
            .binary_search_by(|probe| probe.partial_cmp(&u).unwrap())
        {
            Ok(i) => return self.grid[i],
            Err(i) => i.clamp(1, self.cdf.len() - 1) - 1,
        };
        let (f0, f1) = (self.cdf[idx], self.cdf[idx + 1]);
        let (x0, x1) = (self.grid[idx], self.grid[idx + 1]);
        let h = x1 - x0;
        let df = f1 - f0;
        if df <= 0.0 {
            return x0;
        }
        let delta = df / h;
        // Clamped Hermite derivatives keep the cubic monotone.
        let d0 = self.pdf[idx].min(3.0 * delta);
        let d1 = self.pdf[idx + 1].min(3.0 * delta);
        let target = u - f0;
        let mut t = (target / df).clamp(0.0, 1.0);
        let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
        for _ in 0..32 {
            let t2 = t * t;
            let t3 = t2 * t;
            let val = h
                * (d0 * (t3 - 2.0 * t2 + t) + d1 * (t3 - t2))
                + df * (3.0 * t2 - 2.0 * t3)
                - target;
            if val > 0.0 {
                hi = t;
            } else {
                lo = t;
            }
            let deriv = h * (d0 * (3.0 * t2 - 4.0 * t + 1.0) + d1 * (3.0 * t2 - 2.0 * t))
                + df * (6.0 * t - 6.0 * t2);
            let mut next = if deriv > 0.0 { t - val / deriv } else { 0.5 * (lo + hi) };
            if !(lo..=hi).contains(&next) {
                next = 0.5 * (lo + hi);
            }
            if (next - t).abs() < 1e-14 {
                t = next;
                break;
            }
            t = next;
        }
        x0 + t * h
    }

    pub fn sample(&self, rng: &mut impl Rng) -> f64 {
        self.inverse_cdf(rng.random::<f64>())
    }
}

/// Draw n values from the fitted density with the default grid.
pub fn sample_density(g: &MaxEntDensity, rng: &mut impl Rng, n: usize) -> Result<Vec<f64>> {
    let sampler = DensitySampler::build(g, SAMPLER_PANELS)?;
    Ok((0..n).map(|_| sampler.sample(rng)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seq(values: &[f64]) -> MomentSequence {
        MomentSequence::new(values.to_vec()).unwrap()
    }

    fn exp2_moments(kmax: usize) -> MomentSequence {
        let mut v = vec![1.0];
        for k in 1..=kmax {
            v.push(v[k - 1] * k as f64 / 2.0);
        }
        MomentSequence::new(v).unwrap()
    }

    #[test]
    fn dual_objective_trivial_cases() {
        assert!(dual_objective(&[0.0], &seq(&[1.0]), (0.0, 1.0)).unwrap().abs() < 1e-12);
        assert!(
            dual_objective(&[0.0, 0.0], &seq(&[1.0, 0.5]), (0.0, 1.0))
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn dual_value_and_gradient_at_exponential_optimum() {
        let lambdas = [-(2.0_f64.ln()), 2.0, 0.0, 0.0, 0.0];
        let m = exp2_moments(4);
        let d = dual_objective(&lambdas, &m, (0.0, 40.0)).unwrap();
        assert!((d - (1.0 - 2.0_f64.ln())).abs() < 1e-9, "d = {d}");
        let g = dual_gradient(&lambdas, &m, (0.0, 40.0)).unwrap();
        for (k, v) in g.iter().enumerate() {
            assert!(v.abs() < 1e-8, "grad[{k}] = {v}");
        }
    }

    #[test]
    fn uniform_gradient_is_zero() {
        let g = dual_gradient(&[0.0], &seq(&[1.0]), (0.0, 1.0)).unwrap();
        assert!(g[0].abs() < 1e-12);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = seq(&[1.0, 0.4, 0.3]);
        let support = (0.0, 1.0);
        for _ in 0..5 {
            let lambdas: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let grad = dual_gradient(&lambdas, &m, support).unwrap();
            for k in 0..3 {
                let h = 1e-6;
                let mut up = lambdas.clone();
                up[k] += h;
                let mut dn = lambdas.clone();
                dn[k] -= h;
                let fd = (dual_objective(&up, &m, support).unwrap()
                    - dual_objective(&dn, &m, support).unwrap())
                    / (2.0 * h);
                let denom = grad[k].abs().max(1e-3);
                assert!(
                    (grad[k] - fd).abs() / denom < 1e-5,
                    "k={k}: analytic {} vs fd {fd}",
                    grad[k]
                );
            }
        }
    }

    #[test]
    fn overflow_is_an_error() {
        let err = dual_objective(&[0.0, 0.0, 0.0, 0.0, -1.0], &exp2_moments(4), (0.0, 40.0));
        assert!(matches!(err, Err(Error::IntegrandOverflow { .. })));
    }

    #[test]
    fn fit_single_mass_constraint_gives_uniform() {
        let fit = fit_maxent(&seq(&[1.0]), (0.0, 1.0), &MaxEntOptions::default()).unwrap();
        assert!(fit.density.lambdas()[0].abs() < 1e-8);
    }

    #[test]
    fn fit_gaussian_from_two_moments() {
        // mean 0, variance 1 on a wide support: the max-entropy density
        // is the standard normal, lambda = (ln sqrt(2 pi), 0, 1/2).
        let fit = fit_maxent(&seq(&[1.0, 0.0, 1.0]), (-8.0, 8.0), &MaxEntOptions::default())
            .unwrap();
        let l = fit.density.lambdas();
        let expect0 = (2.0 * std::f64::consts::PI).sqrt().ln();
        assert!((l[0] - expect0).abs() < 1e-3, "l0 = {}", l[0]);
        assert!(l[1].abs() < 1e-3, "l1 = {}", l[1]);
        assert!((l[2] - 0.5).abs() < 1e-3, "l2 = {}", l[2]);
    }

    #[test]
    fn fit_exponential_from_default_and_random_inits() {
        let m = exp2_moments(4);
        let expect = [-(2.0_f64.ln()), 2.0, 0.0, 0.0, 0.0];
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for trial in 0..4 {
            let opts = MaxEntOptions {
                init: if trial == 0 {
                    None
                } else {
                    Some((0..5).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect())
                },
                ..MaxEntOptions::default()
            };
            let fit = fit_maxent(&m, (0.0, 40.0), &opts).unwrap();
            for (k, (got, want)) in fit.density.lambdas().iter().zip(expect.iter()).enumerate()
            {
                assert!(
                    (got - want).abs() < 1e-3,
                    "trial {trial} lambda[{k}]: {got} vs {want}"
                );
            }
            let g = dual_gradient(fit.density.lambdas(), &m, (0.0, 40.0)).unwrap();
            let norm = g.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
            assert!(norm < 1e-8, "trial {trial} grad norm {norm}");
        }
    }

    #[test]
    fn strong_duality_reproduces_moments() {
        let m = exp2_moments(4);
        let fit = fit_maxent(&m, (0.0, 40.0), &MaxEntOptions::default()).unwrap();
        let got = fit.density.moments(4).unwrap();
        for k in 0..=4 {
            assert!(
                (got[k] - m.values()[k]).abs() < 1e-6,
                "k={k}: {} vs {}",
                got[k],
                m.values()[k]
            );
        }
    }

    #[test]
    fn inadmissible_moments_are_rejected() {
        let m = MomentSequence::from_raw(vec![1.0, 2.0, 3.0]).unwrap();
        let err = fit_maxent(&m, (0.0, 10.0), &MaxEntOptions::default());
        assert!(matches!(err, Err(Error::InadmissibleMoments { .. })));
    }

    #[test]
    fn convexity_probe() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let m = seq(&[1.0, 0.4, 0.3]);
        let support = (0.0, 1.0);
        for _ in 0..20 {
            let l1: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let l2: Vec<f64> = (0..3).map(|_| rng.random::<f64>() * 4.0 - 2.0).collect();
            let t: f64 = rng.random();
            let mix: Vec<f64> = l1
                .iter()
                .zip(l2.iter())
                .map(|(a, b)| t * a + (1.0 - t) * b)
                .collect();
            let d_mix = dual_objective(&mix, &m, support).unwrap();
            let d1 = dual_objective(&l1, &m, support).unwrap();
            let d2 = dual_objective(&l2, &m, support).unwrap();
            assert!(d_mix <= t * d1 + (1.0 - t) * d2 + 1e-9);
        }
    }

    #[test]
    fn entropy_dominance_under_fewer_constraints() {
        // h matches four moments of exp(2), g only the first two; h is
        // feasible for g's problem, so S(g) >= S(h).
        let m4 = exp2_moments(4);
        let m2 = seq(&m4.values()[..3]);
        let h = fit_maxent(&m4, (0.0, 40.0), &MaxEntOptions::default()).unwrap();
        let g = fit_maxent(&m2, (0.0, 40.0), &MaxEntOptions::default()).unwrap();
        let s_h = h.density.entropy().unwrap();
        let s_g = g.density.entropy().unwrap();
        assert!(s_g >= s_h - 1e-8, "S(g) = {s_g}, S(h) = {s_h}");
    }

    #[test]
    fn discrete_two_atoms_match_vandermonde() {
        let pmf = maxent_discrete(
            &seq(&[1.0, 0.3]),
            &[0.0, 1.0],
            &MaxEntOptions::default(),
        )
        .unwrap();
        assert!((pmf.probs()[0] - 0.7).abs() < 1e-6);
        assert!((pmf.probs()[1] - 0.3).abs() < 1e-6);
    }

    #[test]
    fn discrete_symmetric_mean_gives_uniform() {
        let pmf = maxent_discrete(
            &seq(&[1.0, 2.0]),
            &[1.0, 2.0, 3.0],
            &MaxEntOptions::default(),
        )
        .unwrap();
        for p in pmf.probs() {
            assert!((p - 1.0 / 3.0).abs() < 1e-6, "p = {p}");
        }
    }

    #[test]
    fn discrete_underdetermined_matches_entropy_grid_oracle() {
        // Support (0, 1, 2) with mass and mean-1 constraints. The
        // feasible set is p = (t, 1 - 2t, t); grid-search the entropy.
        let mut best_t = 0.0;
        let mut best_s = f64::NEG_INFINITY;
        let mut t = 1e-4;
        while t < 0.5 {
            let p: [f64; 3] = [t, 1.0 - 2.0 * t, t];
            let s: f64 = p
                .iter()
                .filter(|&&x| x > 0.0)
                .map(|&x| -x * x.ln())
                .sum();
            if s > best_s {
                best_s = s;
                best_t = t;
            }
            t += 1e-4;
        }
        assert!((best_t - 1.0 / 3.0).abs() < 1e-3, "oracle argmax {best_t}");
        let pmf = maxent_discrete(
            &seq(&[1.0, 1.0]),
            &[0.0, 1.0, 2.0],
            &MaxEntOptions::default(),
        )
        .unwrap();
        assert!((pmf.probs()[0] - best_t).abs() < 1e-3);
        assert!((pmf.probs()[1] - (1.0 - 2.0 * best_t)).abs() < 1e-3);
        assert!((pmf.probs()[2] - best_t).abs() < 1e-3);
    }

    #[test]
    fn discrete_requires_k_at_most_r() {
        let err = maxent_discrete(
            &seq(&[1.0, 0.5, 0.5]),
            &[0.0, 1.0],
            &MaxEntOptions::default(),
        );
        assert!(err.is_err());
    }

    #[test]
    fn sampler_uniform_mean() {
        let g = MaxEntDensity::new(vec![0.0], (0.0, 1.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let xs = sample_density(&g, &mut rng, 100_000).unwrap();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.005, "mean {mean}");
    }

    #[test]
    fn sampler_exponential_mean() {
        let g = MaxEntDensity::new(vec![-(2.0_f64.ln()), 2.0, 0.0, 0.0, 0.0], (0.0, 40.0))
            .unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let xs = sample_density(&g, &mut rng, 100_000).unwrap();
        let mean: f64 = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn sampler_is_seed_deterministic() {
        let g = MaxEntDensity::new(vec![0.0], (0.0, 1.0)).unwrap();
        let a = sample_density(&g, &mut ChaCha8Rng::seed_from_u64(9), 50).unwrap();
        let b = sample_density(&g, &mut ChaCha8Rng::seed_from_u64(9), 50).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn record_round_trip() {
        let g = MaxEntDensity::new(vec![-0.5, 2.0, 0.25], (0.0, 12.5)).unwrap();
        let mut buf = Vec::new();
        g.write_record(&mut buf).unwrap();
        let back = MaxEntDensity::parse_record(&String::from_utf8(buf).unwrap()).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn truncation_rule() {
        let (a, b) = truncate_support(&seq(&[1.0, 0.5]), None).unwrap();
        assert_eq!(a, 0.0);
        assert!((b - 20.0).abs() < 1e-12);
        let (_, b) = truncate_support(&seq(&[1.0, 0.5]), Some(30.0)).unwrap();
        assert!((b - 45.0).abs() < 1e-12);
    }
}
