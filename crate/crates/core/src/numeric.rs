//! Small numerical kernels shared by the solvers: tridiagonal solves,
//! incomplete-gamma moments for exponential weights, a preconditioned L-BFGS
//! driver, golden-section search and the standard normal quantile.

/// Solves a tridiagonal system in place (Thomas algorithm).
///
/// `sub[i]` couples row `i + 1` to column `i`, `sup[i]` couples row `i` to
/// column `i + 1`. The matrix is assumed to be nonsingular without pivoting,
/// which holds for the diagonally dominant and SPD systems assembled here.
pub fn solve_tridiagonal(sub: &[f64], diag: &[f64], sup: &[f64], rhs: &mut [f64]) {
    let n = diag.len();
    if n == 0 {
        return;
    }
    debug_assert_eq!(sub.len() + 1, n);
    debug_assert_eq!(sup.len() + 1, n);
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    rhs[0] /= beta;
    for i in 1..n {
        c[i - 1] = sup[i - 1] / beta;
        beta = diag[i] - sub[i - 1] * c[i - 1];
        rhs[i] = (rhs[i] - sub[i - 1] * rhs[i - 1]) / beta;
    }
    for i in (0..n - 1).rev() {
        rhs[i] -= c[i] * rhs[i + 1];
    }
}

/// `∫_0^x y^k e^{-y} dy` for `k ∈ {0, 1, 2}`, accurate for small and large `x`.
pub fn lower_gamma_moment(k: u32, x: f64) -> f64 {
    debug_assert!(k <= 2);
    if x <= 0.0 {
        return 0.0;
    }
    if x < 1.0 {
        // alternating series, terms decay like x^j / j!
        let mut sum = 0.0;
        let mut pow = x.powi(k as i32 + 1);
        let mut fact = 1.0;
        for j in 0..40u32 {
            let term = pow / (fact * f64::from(j + k + 1));
            if j % 2 == 0 {
                sum += term;
            } else {
                sum -= term;
            }
            if term < 1e-18 * sum.abs() {
                break;
            }
            pow *= x;
            fact *= f64::from(j + 1);
        }
        return sum;
    }
    let e = (-x).exp();
    let g0 = -(-x).exp_m1();
    match k {
        0 => g0,
        1 => g0 - x * e,
        _ => 2.0 * (g0 - x * e) - x * x * e,
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iter: usize,
    pub tol: f64,
    /// Armijo sufficient-decrease parameter.
    pub c1: f64,
    pub backtrack: f64,
    pub max_backtracks: usize,
    /// Stop once the objective has not decreased by more than a few ulps over
    /// this many iterations (0 disables). Used for nonsmooth objectives whose
    /// gradient measure cannot reach `tol`.
    pub stall_window: usize,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iter: 2000,
            tol: 1e-10,
            c1: 1e-4,
            backtrack: 0.5,
            max_backtracks: 60,
            stall_window: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOutcome {
    pub x: Vec<f64>,
    pub f: f64,
    pub grad: Vec<f64>,
    pub iterations: usize,
    pub measure: f64,
    pub converged: bool,
    /// Stopped by the stall criterion.
    pub stalled: bool,
    /// No acceptable step along the preconditioned steepest descent direction.
    pub line_search_failed: bool,
    /// Stopping measure after each iteration.
    pub trace: Vec<f64>,
}

/// Limited-memory quasi-Newton minimization with backtracking line search.
///
/// `eval` returns the objective (possibly `+inf` outside the domain) and its
/// gradient. `precond` applies the initial inverse-Hessian approximation and
/// `measure` maps `(x, grad)` to the quantity compared against `opts.tol`.
/// Steps whose effect on the objective is below its rounding level are taken
/// when they reduce the directional derivative, so that progress can
/// continue on the gradient once the objective no longer resolves it.
pub fn lbfgs<F, P, M>(x0: Vec<f64>, mut eval: F, precond: P, measure: M, opts: &LbfgsOptions) -> LbfgsOutcome
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
    P: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64], &[f64]) -> f64,
{
    let n = x0.len();
    let mut x = x0;
    let (mut f, mut g) = eval(&x);
    let mut s_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut y_hist: Vec<Vec<f64>> = Vec::with_capacity(opts.memory);
    let mut rho_hist: Vec<f64> = Vec::with_capacity(opts.memory);
    let mut trace = Vec::new();
    let mut m = measure(&x, &g);
    let mut iterations = 0;
    let mut f_hist: Vec<f64> = Vec::new();
    let mut stalled = false;
    let mut line_search_failed = false;

    while iterations < opts.max_iter {
        if m <= opts.tol {
            return LbfgsOutcome { x, f, grad: g, iterations, measure: m, converged: true, stalled: false, line_search_failed: false, trace };
        }
        iterations += 1;

        let mut dir = two_loop(&g, &s_hist, &y_hist, &rho_hist, &precond);
        let mut slope = dot(&g, &dir);
        if !(slope < 0.0) {
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            dir = precond(&g).into_iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let slack = 1e-6 * f.abs();
        let mut alpha = 1.0;
        let mut accepted = None;
        let mut shrunk = false;
        let mut short = None;
        for _ in 0..2 * opts.max_backtracks {
            let trial: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + alpha * di).collect();
            let (ft, gt) = eval(&trial);
            if !ft.is_finite() {
                if short.is_some() {
                    break;
                }
                alpha *= opts.backtrack;
                shrunk = true;
                continue;
            }
            if ft - f <= opts.c1 * alpha * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            // approximate Wolfe: under a quadratic model these derivative bounds
            // imply sufficient decrease, so f differences lost to rounding are not needed
            let dt = dot(&gt, &dir);
            let level = ft - f <= slack && dt <= -0.8 * slope;
            if level && dt >= 0.9 * slope {
                accepted = Some((trial, ft, gt));
                break;
            }
            if level && !shrunk && alpha < 1e12 {
                short = Some((trial, ft, gt));
                alpha *= 4.0;
                continue;
            }
            if short.is_some() {
                break;
            }
            alpha *= opts.backtrack;
            shrunk = true;
        }
        let accepted = accepted.or(short);
        let Some((xn, fnew, gn)) = accepted else {
            if s_hist.is_empty() {
                line_search_failed = true;
                break;
            }
            s_hist.clear();
            y_hist.clear();
            rho_hist.clear();
            continue;
        };

        let s: Vec<f64> = (0..n).map(|i| xn[i] - x[i]).collect();
        let y: Vec<f64> = (0..n).map(|i| gn[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-300 && sy.is_finite() {
            if s_hist.len() == opts.memory {
                s_hist.remove(0);
                y_hist.remove(0);
                rho_hist.remove(0);
            }
            s_hist.push(s);
            y_hist.push(y);
            rho_hist.push(1.0 / sy);
        }
        x = xn;
        f = fnew;
        g = gn;
        m = measure(&x, &g);
        trace.push(m);
        if opts.stall_window > 0 {
            f_hist.push(f);
            let k = f_hist.len();
            if k > opts.stall_window {
                let old = f_hist[k - 1 - opts.stall_window];
                if old - f <= 64.0 * f64::EPSILON * f.abs().max(f64::MIN_POSITIVE) {
                    stalled = true;
                    break;
                }
            }
        }
    }
    let converged = m <= opts.tol;
    LbfgsOutcome { x, f, grad: g, iterations, measure: m, converged, stalled, line_search_failed, trace }
}

fn two_loop<P>(g: &[f64], s: &[Vec<f64>], y: &[Vec<f64>], rho: &[f64], precond: &P) -> Vec<f64>
where
    P: Fn(&[f64]) -> Vec<f64>,
{
    let k = s.len();
    let mut q = g.to_vec();
    let mut alpha = vec![0.0; k];
    for i in (0..k).rev() {
        alpha[i] = rho[i] * dot(&s[i], &q);
        for (qj, yj) in q.iter_mut().zip(&y[i]) {
            *qj -= alpha[i] * yj;
        }
    }
    let mut r = precond(&q);
    for i in 0..k {
        let beta = rho[i] * dot(&y[i], &r);
        for (rj, sj) in r.iter_mut().zip(&s[i]) {
            *rj += (alpha[i] - beta) * sj;
        }
    }
    r.iter_mut().for_each(|v| *v = -*v);
    r
}

/// Golden-section minimization of a unimodal function on `[a, b]`.
pub fn golden_section<F: FnMut(f64) -> f64>(mut f: F, mut a: f64, mut b: f64, rel_tol: f64, max_iter: usize) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for _ in 0..max_iter {
        if (b - a).abs() <= rel_tol * (a.abs() + b.abs()).max(1e-300) {
            break;
        }
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc <= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}

/// Standard normal quantile via Acklam's rational approximation
/// (relative error below 1.2e-9 on (0, 1)).
pub fn normal_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.38357751867269e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let tail = |q: f64| {
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };
    if p < P_LOW {
        tail((-2.0 * p.ln()).sqrt())
    } else if p > 1.0 - P_LOW {
        -tail((-2.0 * (1.0 - p).ln()).sqrt())
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Linear interpolation of the inverse of a nondecreasing sampled function.
///
/// Returns `(i, theta)` locating the left-most preimage of `target` inside
/// cell `i`, where the sampled function is interpolated linearly per cell.
pub fn invert_monotone(values: &[f64], target: f64) -> (usize, f64) {
    let n = values.len();
    if target <= values[0] {
        return (0, 0.0);
    }
    // first index with values[idx] >= target
    let idx = values.partition_point(|v| *v < target).min(n - 1);
    let i = idx.saturating_sub(1);
    let span = values[i + 1] - values[i];
    let theta = if span > 0.0 { ((target - values[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
    (i, theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tridiagonal_matches_dense() {
        let sub = [1.0, -2.0, 0.5];
        let diag = [4.0, 5.0, 6.0, 3.0];
        let sup = [1.0, 1.0, -1.0];
        let x = [1.0, -2.0, 3.0, 0.5];
        let mut rhs = vec![
            diag[0] * x[0] + sup[0] * x[1],
            sub[0] * x[0] + diag[1] * x[1] + sup[1] * x[2],
            sub[1] * x[1] + diag[2] * x[2] + sup[2] * x[3],
            sub[2] * x[2] + diag[3] * x[3],
        ];
        solve_tridiagonal(&sub, &diag, &sup, &mut rhs);
        for (a, b) in rhs.iter().zip(x) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn gamma_moments_agree_across_branches() {
        for k in 0..3 {
            // series at 0.999 vs recurrence at 1.0 should be continuous
            let a = lower_gamma_moment(k, 0.999_999_999);
            let b = lower_gamma_moment(k, 1.0);
            assert!((a - b).abs() < 1e-9, "k={k}: {a} vs {b}");
        }
        // closed forms at x = 2
        let e = (-2.0f64).exp();
        assert!((lower_gamma_moment(0, 2.0) - (1.0 - e)).abs() < 1e-15);
        assert!((lower_gamma_moment(1, 2.0) - (1.0 - 3.0 * e)).abs() < 1e-15);
        assert!((lower_gamma_moment(2, 2.0) - (2.0 - 10.0 * e)).abs() < 1e-14);
        // small-x asymptotics
        let x = 1e-6;
        assert!((lower_gamma_moment(2, x) / (x * x * x / 3.0) - 1.0).abs() < 1e-5);
    }

    #[test]
    fn normal_quantile_reference_values() {
        assert!(normal_quantile(0.5).abs() < 1e-12);
        assert!((normal_quantile(0.975) - 1.959963984540054).abs() < 1e-8);
        assert!((normal_quantile(0.01) + 2.326347874040841).abs() < 1e-8);
        assert!((normal_quantile(0.1) + normal_quantile(0.9)).abs() < 1e-12);
    }

    #[test]
    fn lbfgs_minimizes_rosenbrock() {
        let eval = |x: &[f64]| {
            let (a, b) = (x[0], x[1]);
            let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
            let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
            (f, g)
        };
        let out = lbfgs(vec![-1.2, 1.0], eval, |g| g.to_vec(), |_, g| norm2(g), &LbfgsOptions::default());
        assert!(out.converged);
        assert!((out.x[0] - 1.0).abs() < 1e-6 && (out.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn golden_section_finds_parabola_vertex() {
        let (x, _) = golden_section(|x| (x - 0.3).powi(2), -1.0, 2.0, 1e-10, 200);
        assert!((x - 0.3).abs() < 1e-8);
    }
}
