//! Optimizers used by the estimators: BFGS with a monotone Armijo line
//! search, and a box-constrained Levenberg–Marquardt for least squares.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BfgsOptions {
    pub max_iter: usize,
    /// Converged once `max |∇f| <= grad_tol`.
    pub grad_tol: f64,
}

impl Default for BfgsOptions {
    fn default() -> Self {
        Self { max_iter: 1000, grad_tol: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// `f` at the start and after every accepted step; non-increasing.
    pub trace: Vec<f64>,
    pub message: String,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f`, which writes its gradient into the second argument.
pub fn bfgs<F>(mut f: F, x0: &[f64], opts: &BfgsOptions) -> Result<BfgsOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<f64>,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut g = vec![0.0; n];
    let mut fx = f(&x, &mut g)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    let mut scaled = false;
    let mut trace = vec![fx];
    let mut x_new = vec![0.0; n];
    let mut g_new = vec![0.0; n];

    for iter in 0..opts.max_iter {
        if inf_norm(&g) <= opts.grad_tol {
            return Ok(BfgsOutcome { x, f: fx, grad: g, iterations: iter, converged: true, trace, message: "gradient tolerance reached".into() });
        }
        let gv = DVector::from_column_slice(&g);
        let mut p: Vec<f64> = (-(&h * &gv)).iter().copied().collect();
        let mut slope = dot(&p, &g);
        if !(slope < 0.0) {
            h = DMatrix::identity(n, n);
            scaled = false;
            p = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..n {
                x_new[i] = x[i] + step * p[i];
            }
            let f_new = f(&x_new, &mut g_new)?;
            if f_new.is_finite() && f_new <= fx + 1e-4 * step * slope {
                accepted = Some(f_new);
                break;
            }
            step *= 0.5;
        }
        let Some(f_new) = accepted else {
            return Ok(BfgsOutcome {
                x,
                f: fx,
                grad: g.clone(),
                iterations: iter,
                converged: inf_norm(&g) <= opts.grad_tol,
                trace,
                message: "line search failed to decrease the objective".into(),
            });
        };

        let s: Vec<f64> = (0..n).map(|i| x_new[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if !scaled {
                h *= sy / dot(&y, &y);
                scaled = true;
            }
            let sv = DVector::from_column_slice(&s);
            let yv = DVector::from_column_slice(&y);
            let rho = 1.0 / sy;
            let hy = &h * &yv;
            let yhy = yv.dot(&hy);
            // H ← H − ρ(H y sᵀ + s yᵀ H) + (ρ² yᵀHy + ρ) s sᵀ
            h -= (&hy * sv.transpose() + &sv * hy.transpose()) * rho;
            h += (&sv * sv.transpose()) * (rho * rho * yhy + rho);
        }
        std::mem::swap(&mut x, &mut x_new);
        std::mem::swap(&mut g, &mut g_new);
        fx = f_new;
        trace.push(fx);
    }
    let converged = inf_norm(&g) <= opts.grad_tol;
    Ok(BfgsOutcome {
        x,
        f: fx,
        grad: g,
        iterations: opts.max_iter,
        converged,
        trace,
        message: if converged { "gradient tolerance reached".into() } else { "iteration limit reached".into() },
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Converged once the projected gradient of ½·SSR is below
    /// `grad_tol·(1 + SSR)`.
    pub grad_tol: f64,
    /// Converged once SSR falls below this value.
    pub ssr_floor: f64,
    /// Finite-difference step in the unit box.
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 400, grad_tol: 1e-10, ssr_floor: 1e-26, fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmOutcome {
    /// Solution in unit-box coordinates.
    pub z: Vec<f64>,
    pub ssr: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<f64>,
    pub message: String,
}

/// Levenberg–Marquardt on `z ∈ [0, 1]^n`. `residuals(z, out)` fills the
/// `m` residuals. Variables held at a bound by the gradient are frozen for
/// the step; the rest take a damped Gauss–Newton step that is then clipped
/// to the box. The Jacobian uses central differences, one-sided at bounds.
pub fn levenberg_marquardt_box<F>(mut residuals: F, m: usize, z0: &[f64], opts: &LmOptions) -> Result<LmOutcome>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = z0.len();
    let mut z: Vec<f64> = z0.iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let mut r = vec![0.0; m];
    residuals(&z, &mut r)?;
    let mut ssr = dot(&r, &r);
    let mut trace = vec![ssr];
    let mut mu = 1e-3;
    let mut stalls = 0;
    let mut r_trial = vec![0.0; m];

    let mut jac = jacobian(&mut residuals, &z, m, opts.fd_step)?;
    for iter in 0..opts.max_iter {
        let jt_r = jac.transpose() * DVector::from_column_slice(&r);
        let free: Vec<usize> = (0..n)
            .filter(|&i| !((z[i] <= 0.0 && jt_r[i] > 0.0) || (z[i] >= 1.0 && jt_r[i] < 0.0)))
            .collect();
        let pg = free.iter().fold(0.0f64, |acc, &i| acc.max(jt_r[i].abs()));
        if ssr <= opts.ssr_floor || pg <= opts.grad_tol * (1.0 + ssr) || free.is_empty() {
            let message = if ssr <= opts.ssr_floor { "residual floor reached" } else { "projected gradient tolerance reached" };
            return Ok(LmOutcome { z, ssr, residuals: r, jacobian: jac, iterations: iter, converged: true, trace, message: message.into() });
        }

        let k = free.len();
        let jtj = jac.transpose() * &jac;
        let mut a = DMatrix::<f64>::zeros(k, k);
        let mut rhs = DVector::<f64>::zeros(k);
        let diag_max = free.iter().fold(0.0f64, |acc, &i| acc.max(jtj[(i, i)]));
        for (p, &i) in free.iter().enumerate() {
            rhs[p] = -jt_r[i];
            for (q, &j) in free.iter().enumerate() {
                a[(p, q)] = jtj[(i, j)];
            }
        }

        let mut improved = false;
        while mu < 1e20 {
            let mut damped = a.clone();
            for p in 0..k {
                damped[(p, p)] += mu * jtj[(free[p], free[p])].max(1e-12 * diag_max.max(1e-300));
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&rhs)) else {
                mu *= 10.0;
                continue;
            };
            let mut z_trial = z.clone();
            for (p, &i) in free.iter().enumerate() {
                z_trial[i] = (z[i] + step[p]).clamp(0.0, 1.0);
            }
            if z_trial == z {
                break;
            }
            residuals(&z_trial, &mut r_trial)?;
            let ssr_trial = dot(&r_trial, &r_trial);
            if ssr_trial.is_finite() && ssr_trial < ssr {
                let rel = (ssr - ssr_trial) / ssr.max(f64::MIN_POSITIVE);
                stalls = if rel < 1e-14 { stalls + 1 } else { 0 };
                z = z_trial;
                std::mem::swap(&mut r, &mut r_trial);
                ssr = ssr_trial;
                trace.push(ssr);
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved || stalls >= 5 {
            return Ok(LmOutcome {
                z,
                ssr,
                residuals: r,
                jacobian: jac,
                iterations: iter,
                converged: true,
                trace,
                message: "no further decrease at numerical precision".into(),
            });
        }
        jac = jacobian(&mut residuals, &z, m, opts.fd_step)?;
    }
    Ok(LmOutcome {
        z,
        ssr,
        residuals: r,
        jacobian: jac,
        iterations: opts.max_iter,
        converged: false,
        trace,
        message: "iteration limit reached".into(),
    })
}

fn jacobian<F>(residuals: &mut F, z: &[f64], m: usize, h: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let n = z.len();
    let mut jac = DMatrix::<f64>::zeros(m, n);
    let mut plus = vec![0.0; m];
    let mut minus = vec![0.0; m];
    let mut zp = z.to_vec();
    for j in 0..n {
        let hi = (z[j] + h).min(1.0);
        let lo = (z[j] - h).max(0.0);
        zp[j] = hi;
        residuals(&zp, &mut plus)?;
        zp[j] = lo;
        residuals(&zp, &mut minus)?;
        zp[j] = z[j];
        let width = hi - lo;
        for i in 0..m {
            jac[(i, j)] = (plus[i] - minus[i]) / width;
        }
    }
    Ok(jac)
}
