//! Logistic regression by IRLS and weighted least squares with the
//! linearization (HC0-with-weights) sandwich variance.

use crate::error::{Error, Result};
use crate::linalg::{cholesky_inverse, dot, solve_spd, Matrix};

const MAX_IRLS_ITER: usize = 100;
const IRLS_TOL: f64 = 1e-8;
const SEPARATION_COEF: f64 = 30.0;
const PIVOT_REL_TOL: f64 = 1e-10;

/// Regressor matrix whose first column is the intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    values: Matrix,
}

impl DesignMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if values.cols() == 0 || values.rows() == 0 {
            return Err(Error::Dimension("design matrix is empty".into()));
        }
        if let Some(i) = (0..values.rows()).find(|&i| values[(i, 0)] != 1.0) {
            return Err(Error::InvalidInput(format!(
                "design column 0 must be the intercept (row {i} has {})",
                values[(i, 0)]
            )));
        }
        if values.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("design matrix has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    /// Intercept followed by the given columns, in order.
    pub fn with_intercept(columns: &[&[f64]]) -> Result<Self> {
        let n = columns.first().map_or(0, |c| c.len());
        if n == 0 {
            return Err(Error::Dimension("need at least one non-empty column".into()));
        }
        if columns.iter().any(|c| c.len() != n) {
            return Err(Error::Dimension("design columns differ in length".into()));
        }
        let p = columns.len() + 1;
        let mut m = Matrix::zeros(n, p);
        for i in 0..n {
            m[(i, 0)] = 1.0;
            for (j, col) in columns.iter().enumerate() {
                m[(i, j + 1)] = col[i];
            }
        }
        Self::new(m)
    }

    pub fn intercept_only(n: usize) -> Result<Self> {
        let mut m = Matrix::zeros(n, 1);
        for i in 0..n {
            m[(i, 0)] = 1.0;
        }
        Self::new(m)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn p(&self) -> usize {
        self.values.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.values.row(i)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.column(j)
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn predict(&self, coefficients: &[f64]) -> Vec<f64> {
        self.values.mul_vec(coefficients)
    }

    /// New design with `column` inserted at position `at` (1 = right after
    /// the intercept).
    pub fn insert_column(&self, at: usize, column: &[f64]) -> Result<Self> {
        if column.len() != self.n() || at == 0 || at > self.p() {
            return Err(Error::Dimension("bad column insertion".into()));
        }
        let (n, p) = (self.n(), self.p() + 1);
        let mut m = Matrix::zeros(n, p);
        for i in 0..n {
            let src = self.row(i);
            for j in 0..p {
                m[(i, j)] = match j.cmp(&at) {
                    std::cmp::Ordering::Less => src[j],
                    std::cmp::Ordering::Equal => column[i],
                    std::cmp::Ordering::Greater => src[j - 1],
                };
            }
        }
        Self::new(m)
    }
}

/// A fitted regression.
#[derive(Debug, Clone, PartialEq)]
pub struct GlmFit {
    pub coefficients: Vec<f64>,
    pub vcov: Matrix,
    pub fitted: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
}

impl GlmFit {
    pub fn se(&self, j: usize) -> f64 {
        self.vcov[(j, j)].max(0.0).sqrt()
    }
}

#[inline]
pub fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `ln(1 + e^x)` without overflow.
#[inline]
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Bernoulli log-likelihood of `a` under `P(A=1) = expit(X·coef)`.
pub fn logistic_loglik(x: &DesignMatrix, a: &[bool], coef: &[f64]) -> f64 {
    (0..x.n())
        .map(|i| {
            let eta = dot(x.row(i), coef);
            if a[i] {
                -softplus(-eta)
            } else {
                -softplus(eta)
            }
        })
        .sum()
}

/// Score vector `Xᵀ(a − expit(X·coef))`.
pub fn logistic_gradient(x: &DesignMatrix, a: &[bool], coef: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; x.p()];
    for i in 0..x.n() {
        let row = x.row(i);
        let r = f64::from(u8::from(a[i])) - expit(dot(row, coef));
        for (gj, xj) in g.iter_mut().zip(row) {
            *gj += r * xj;
        }
    }
    g
}

/// Maximum-likelihood logistic regression by IRLS (Newton–Raphson),
/// starting from zero with step halving whenever the likelihood drops.
pub fn fit_logistic(x: &DesignMatrix, a: &[bool]) -> Result<GlmFit> {
    let (n, p) = (x.n(), x.p());
    if a.len() != n {
        return Err(Error::Dimension(format!(
            "treatment has length {} but design has {n} rows",
            a.len()
        )));
    }
    if n <= p {
        return Err(Error::Dimension(format!("need n > p, got n = {n}, p = {p}")));
    }
    let treated = a.iter().filter(|&&v| v).count();
    if treated == 0 || treated == n {
        return Err(Error::InvalidInput(
            "logistic outcome has a single class".into(),
        ));
    }

    let mut coef = vec![0.0; p];
    let mut loglik = logistic_loglik(x, a, &coef);
    let mut last_step = f64::INFINITY;
    for iter in 1..=MAX_IRLS_ITER {
        let mut info = Matrix::zeros(p, p);
        let mut score = vec![0.0; p];
        for i in 0..n {
            let row = x.row(i);
            let mu = expit(dot(row, &coef));
            let w = mu * (1.0 - mu);
            let r = f64::from(u8::from(a[i])) - mu;
            for j in 0..p {
                score[j] += r * row[j];
                let wj = w * row[j];
                for k in 0..=j {
                    info[(j, k)] += wj * row[k];
                }
            }
        }
        for j in 0..p {
            for k in 0..j {
                info[(k, j)] = info[(j, k)];
            }
        }
        if (0..p).any(|j| info[(j, j)] < f64::MIN_POSITIVE) {
            return Err(Error::Separation("IRLS weights underflowed".into()));
        }
        let step = match solve_spd(&info, &score, PIVOT_REL_TOL) {
            Ok((s, _)) => s,
            Err(e) if iter == 1 => return Err(e),
            Err(_) => {
                return Err(Error::Separation(
                    "information matrix became singular".into(),
                ))
            }
        };

        let mut scale = 1.0;
        let mut candidate: Vec<f64>;
        let mut cand_ll;
        loop {
            candidate = coef.iter().zip(&step).map(|(c, s)| c + scale * s).collect();
            cand_ll = logistic_loglik(x, a, &candidate);
            if cand_ll >= loglik || scale < 1e-10 {
                break;
            }
            scale *= 0.5;
        }
        last_step = step
            .iter()
            .map(|s| (scale * s).abs())
            .fold(0.0, f64::max);
        coef = candidate;
        loglik = cand_ll;

        if let Some(big) = coef.iter().find(|c| c.abs() > SEPARATION_COEF) {
            return Err(Error::Separation(format!("coefficient reached {big}")));
        }
        if last_step < IRLS_TOL {
            let fitted: Vec<f64> = (0..n).map(|i| expit(dot(x.row(i), &coef))).collect();
            let vcov = logistic_information_inverse(x, &fitted)?;
            return Ok(GlmFit {
                coefficients: coef,
                vcov,
                fitted,
                converged: true,
                iterations: iter,
            });
        }
    }
    Err(Error::NotConverged {
        iterations: MAX_IRLS_ITER,
        last_step,
    })
}

fn logistic_information_inverse(x: &DesignMatrix, fitted: &[f64]) -> Result<Matrix> {
    let p = x.p();
    let mut info = Matrix::zeros(p, p);
    for (i, &mu) in fitted.iter().enumerate() {
        let row = x.row(i);
        let w = mu * (1.0 - mu);
        for j in 0..p {
            for k in 0..p {
                info[(j, k)] += w * row[j] * row[k];
            }
        }
    }
    let (_, l) = solve_spd(&info, &vec![0.0; p], PIVOT_REL_TOL)?;
    Ok(cholesky_inverse(&l))
}

/// Weighted least squares `(XᵀWX)⁻¹XᵀWy` with sandwich variance
/// `B·[Σ wᵢ² rᵢ² xᵢxᵢᵀ]·B`, `B = (XᵀWX)⁻¹`.
pub fn fit_wls(x: &DesignMatrix, y: &[f64], w: &[f64]) -> Result<GlmFit> {
    let (n, p) = (x.n(), x.p());
    if y.len() != n || w.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows but y has {} and w has {}",
            y.len(),
            w.len()
        )));
    }
    if n <= p {
        return Err(Error::Dimension(format!("need n > p, got n = {n}, p = {p}")));
    }
    if let Some(i) = w.iter().position(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::InvalidInput(format!(
            "weight {i} must be finite and positive, got {}",
            w[i]
        )));
    }
    if let Some(i) = y.iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("outcome {i} is not finite")));
    }

    let mut xtwx = Matrix::zeros(p, p);
    let mut xtwy = vec![0.0; p];
    for i in 0..n {
        let row = x.row(i);
        for j in 0..p {
            let wj = w[i] * row[j];
            xtwy[j] += wj * y[i];
            for k in 0..=j {
                xtwx[(j, k)] += wj * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            xtwx[(k, j)] = xtwx[(j, k)];
        }
    }
    let (coef, l) = solve_spd(&xtwx, &xtwy, PIVOT_REL_TOL)?;
    let bread = cholesky_inverse(&l);

    let fitted = x.predict(&coef);
    let mut meat = Matrix::zeros(p, p);
    for i in 0..n {
        let row = x.row(i);
        let u = w[i] * (y[i] - fitted[i]);
        let u2 = u * u;
        for j in 0..p {
            for k in 0..=j {
                meat[(j, k)] += u2 * row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            meat[(k, j)] = meat[(j, k)];
        }
    }
    let mut vcov = bread.matmul(&meat)?.matmul(&bread)?;
    for j in 0..p {
        for k in 0..j {
            let avg = 0.5 * (vcov[(j, k)] + vcov[(k, j)]);
            vcov[(j, k)] = avg;
            vcov[(k, j)] = avg;
        }
    }
    Ok(GlmFit {
        coefficients: coef,
        vcov,
        fitted,
        converged: true,
        iterations: 1,
    })
}
