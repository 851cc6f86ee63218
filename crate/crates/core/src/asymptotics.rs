//! Closed-form asymptotic covariance matrices for weighted SBM
//! embeddings and confidence-ellipse computation.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::SbmSpec;

/// Asymptotic covariance of the scaled embedding error for one
/// community and moment order.
#[derive(Debug, Clone)]
pub struct CovarianceSpec {
    pub k: usize,
    pub community: usize,
    /// Sigma_kl = Delta_k^{-1} SigmaTilde_kl Delta_k^{-1}.
    pub sigma: DMatrix<f64>,
    pub sigma_tilde: DMatrix<f64>,
    pub delta: DMatrix<f64>,
}

/// Covariance of the limiting normal for community `l` at moment order
/// `k`, from the block spec and the analytic community positions
/// (`positions[k-1]` holds the rows y_m[k]).
pub fn sbm_covariance(
    spec: &SbmSpec,
    positions: &[DMatrix<f64>],
    k: usize,
    l: usize,
) -> Result<CovarianceSpec> {
    spec.validate()?;
    let c = spec.communities;
    if k == 0 || k > positions.len() {
        return Err(Error::InvalidArgument(format!(
            "moment order k = {k} outside 1..={}",
            positions.len()
        )));
    }
    if l >= c {
        return Err(Error::InvalidArgument(format!(
            "community {l} out of range (C = {c})"
        )));
    }
    let y = &positions[k - 1];
    let d = y.ncols();
    let mut delta = DMatrix::<f64>::zeros(d, d);
    let mut sigma_tilde = DMatrix::<f64>::zeros(d, d);
    for m in 0..c {
        let ym = y.row(m).transpose();
        let outer = &ym * ym.transpose();
        delta += spec.pi[m] * &outer;
        let b = spec.b[l][m];
        let m2k = spec.dists[l][m].moment(2 * k)?;
        let mk = spec.dists[l][m].moment(k)?;
        let var = b * m2k - b * b * mk * mk;
        sigma_tilde += spec.pi[m] * var * &outer;
    }
    let delta_inv = delta.clone().try_inverse().ok_or(Error::SingularDelta { k })?;
    // Guard against numerically near-singular Delta slipping through.
    let min_eig = delta
        .clone()
        .symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let scale = delta.iter().fold(1.0_f64, |a, v| a.max(v.abs()));
    if min_eig <= 1e-12 * scale {
        return Err(Error::SingularDelta { k });
    }
    let sigma = &delta_inv * &sigma_tilde * &delta_inv;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    Ok(CovarianceSpec {
        k,
        community: l,
        sigma,
        sigma_tilde,
        delta,
    })
}

/// Confidence level set {z : (z-center)^T (Sigma/N)^{-1} (z-center) <=
/// chi2_d(level)} described by its principal axes.
#[derive(Debug, Clone)]
pub struct EllipseParams {
    pub center: DVector<f64>,
    /// Columns are the principal directions.
    pub axes: DMatrix<f64>,
    /// Semi-axis lengths sqrt(chi2 * eig / N), descending.
    pub radii: Vec<f64>,
    /// Quadratic-form threshold chi2_d(level).
    pub chi2: f64,
    /// Set when Sigma is singular to working precision.
    pub degenerate: bool,
    scaled_inverse: Option<DMatrix<f64>>,
}

impl EllipseParams {
    /// Whether a point lies inside the level set. Degenerate ellipses
    /// contain only points in the affine span, which this reports as
    /// outside unless the quadratic form is defined.
    pub fn contains(&self, point: &DVector<f64>) -> bool {
        match &self.scaled_inverse {
            Some(inv) => {
                let d = point - &self.center;
                (d.transpose() * inv * &d)[(0, 0)] <= self.chi2
            }
            None => false,
        }
    }
}

/// Build the `level` confidence ellipse for the mean-centered limiting
/// normal with covariance `Sigma/N`.
pub fn confidence_ellipse(
    cov: &CovarianceSpec,
    center: &DVector<f64>,
    level: f64,
    n: usize,
) -> Result<EllipseParams> {
    if !(0.0..1.0).contains(&level) || level == 0.0 {
        return Err(Error::InvalidArgument(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("N must be >= 1".into()));
    }
    let d = cov.sigma.nrows();
    if center.len() != d {
        return Err(Error::InvalidArgument("center dimension mismatch".into()));
    }
    let chi2 = chi_squared_quantile(d as f64, level);
    let eig = nalgebra::SymmetricEigen::try_new(cov.sigma.clone(), f64::EPSILON, 0)
        .ok_or(Error::EigenNonConvergence)?;
    let mut pairs: Vec<(f64, usize)> = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .map(|(i, v)| (v, i))
        .collect();
    pairs.sort_by(|a, b| b.0.partial_cmp(&a.0).unwrap().then(a.1.cmp(&b.1)));
    let scale = pairs.first().map(|p| p.0.abs()).unwrap_or(0.0);
    let degenerate = pairs.iter().any(|(v, _)| *v <= 1e-12 * scale.max(1e-300));
    let mut axes = DMatrix::<f64>::zeros(d, d);
    let mut radii = Vec::with_capacity(d);
    for (dst, (val, src)) in pairs.iter().enumerate() {
        axes.set_column(dst, &eig.eigenvectors.column(*src));
        radii.push((chi2 * val.max(0.0) / n as f64).sqrt());
    }
    let scaled_inverse = if degenerate {
        None
    } else {
        (cov.sigma.clone() / n as f64).try_inverse()
    };
    Ok(EllipseParams {
        center: center.clone(),
        axes,
        radii,
        chi2,
        degenerate,
        scaled_inverse,
    })
}

// --- chi-squared quantile via the regularized incomplete gamma ---

/// ln Gamma(x) by the Lanczos approximation.
pub fn ln_gamma(x: f64) -> f64 {
    const COF: [f64; 14] = [
        57.156_235_665_862_92,
        -59.597_960_355_475_49,
        14.136_097_974_741_746,
        -0.491_913_816_097_620_2,
        3.399_464_998_481_189e-5,
        4.652_362_892_704_858e-5,
        -9.837_447_530_487_956e-5,
        1.580_887_032_249_125e-4,
        -2.102_644_417_241_049e-4,
        2.174_396_181_152_126e-4,
        -1.643_181_065_367_639e-4,
        8.441_822_398_385_275e-5,
        -2.619_083_840_158_141e-5,
        3.689_918_265_953_162e-6,
    ];
    let mut y = x;
    let tmp = x + 5.242_187_5;
    let tmp = (x + 0.5) * tmp.ln() - tmp;
    let mut ser = 0.999_999_999_999_997_1;
    for c in COF {
        y += 1.0;
        ser += c / y;
    }
    tmp + (2.506_628_274_631_000_5 * ser / x).ln()
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    assert!(a > 0.0 && x >= 0.0);
    if x == 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series representation
        let mut ap = a;
        let mut sum = 1.0 / a;
        let mut del = sum;
        for _ in 0..500 {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if del.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (-x + a * x.ln() - ln_gamma(a)).exp()
    } else {
        // continued fraction for Q(a, x), modified Lentz
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / 1e-300;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < 1e-300 {
                d = 1e-300;
            }
            c = b + an / c;
            if c.abs() < 1e-300 {
                c = 1e-300;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        1.0 - (-x + a * x.ln() - ln_gamma(a)).exp() * h
    }
}

/// Inverse of P(a, .) at probability p, by a Wilson-Hilferty start and
/// Halley-corrected Newton steps. Accuracy well below 1e-10.
pub fn inv_gamma_p(a: f64, p: f64) -> f64 {
    assert!(a > 0.0 && (0.0..1.0).contains(&p));
    if p == 0.0 {
        return 0.0;
    }
    let gln = ln_gamma(a);
    let a1 = a - 1.0;
    let lna1 = if a > 1.0 { a1.ln() } else { 0.0 };
    let afac = if a > 1.0 { (a1 * (lna1 - 1.0) - gln).exp() } else { 0.0 };
    let mut x;
    if a > 1.0 {
        let pp = if p < 0.5 { p } else { 1.0 - p };
        let t = (-2.0 * pp.ln()).sqrt();
        let mut z = (2.30753 + t * 0.27061) / (1.0 + t * (0.99229 + t * 0.04481)) - t;
        if p < 0.5 {
            z = -z;
        }
        x = (a * (1.0 - 1.0 / (9.0 * a) + z / (3.0 * a.sqrt())).powi(3)).max(1e-3);
    } else {
        let t = 1.0 - a * (0.253 + a * 0.12);
        if p < t {
            x = (p / t).powf(1.0 / a);
        } else {
            x = 1.0 - ((p - t) / (1.0 - t)).ln_1p_safe();
        }
    }
    for _ in 0..24 {
        if x <= 0.0 {
            return 0.0;
        }
        let err = gamma_p(a, x) - p;
        let t = if a > 1.0 {
            afac * (-(x - a1) + a1 * (x.ln() - lna1)).exp()
        } else {
            (-x + a1 * x.ln() - gln).exp()
        };
        let u = err / t;
        let dx = u / (1.0 - 0.5 * (u * (a1 / x - 1.0)).min(1.0));
        x -= dx;
        if x <= 0.0 {
            x = 0.5 * (x + dx);
        }
        if dx.abs() < 1e-14 * x.max(1.0) {
            break;
        }
    }
    x
}

trait Ln1pSafe {
    fn ln_1p_safe(self) -> f64;
}
impl Ln1pSafe for f64 {
    fn ln_1p_safe(self) -> f64 {
        (-self).ln_1p()
    }
}

/// Quantile of the chi-squared distribution with `df` degrees of
/// freedom at probability `level`.
pub fn chi_squared_quantile(df: f64, level: f64) -> f64 {
    2.0 * inv_gamma_p(0.5 * df, level)
}
