//! Smooth box-constrained minimization: projected BFGS with forward-difference
//! gradients, wrapped in a PHR augmented Lagrangian for inequality constraints.

const FD_STEP: f64 = 1e-7;
const ARMIJO: f64 = 1e-4;

/// Forward-difference gradient of `f` at `x`, stepping inward at upper bounds.
pub fn forward_gradient<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &[f64],
    fx: f64,
    lo: &[f64],
    hi: &[f64],
) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut g = vec![0.0; x.len()];
    for i in 0..x.len() {
        let mut h = FD_STEP * x[i].abs().max(1.0);
        if x[i] + h > hi[i] && x[i] - h >= lo[i] {
            h = -h;
        }
        probe[i] = x[i] + h;
        g[i] = (f(&probe) - fx) / h;
        probe[i] = x[i];
    }
    g
}

fn project(x: &mut [f64], lo: &[f64], hi: &[f64]) {
    for ((xi, &l), &u) in x.iter_mut().zip(lo).zip(hi) {
        *xi = xi.clamp(l, u);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoxMinimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Projected BFGS on `lo <= x <= hi`. Converged when the projected gradient
/// step falls below `tol` in the max norm.
pub fn minimize_box<F: Fn(&[f64]) -> f64>(
    f: &F,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_iter: usize,
) -> BoxMinimum {
    let n = x0.len();
    let mut x = x0.to_vec();
    project(&mut x, lo, hi);
    let mut fx = f(&x);
    if n == 0 {
        return BoxMinimum {
            x,
            value: fx,
            iterations: 0,
            converged: true,
        };
    }
    let mut g = forward_gradient(f, &x, fx, lo, hi);
    let mut hinv = identity(n);
    let mut converged = false;
    let mut iterations = 0;
    let mut trial = vec![0.0; n];

    while iterations < max_iter {
        let pg = (0..n)
            .map(|i| ((x[i] - g[i]).clamp(lo[i], hi[i]) - x[i]).abs())
            .fold(0.0, f64::max);
        if pg < tol {
            converged = true;
            break;
        }
        iterations += 1;
        let free: Vec<bool> = (0..n)
            .map(|i| !((x[i] <= lo[i] && g[i] > 0.0) || (x[i] >= hi[i] && g[i] < 0.0)))
            .collect();
        let mut dir = vec![0.0; n];
        for i in 0..n {
            if free[i] {
                dir[i] = -(0..n)
                    .filter(|&j| free[j])
                    .map(|j| hinv[i][j] * g[j])
                    .sum::<f64>();
            }
        }
        if dot(&dir, &g) >= 0.0 {
            hinv = identity(n);
            for i in 0..n {
                dir[i] = if free[i] { -g[i] } else { 0.0 };
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            for i in 0..n {
                trial[i] = x[i] + alpha * dir[i];
            }
            project(&mut trial, lo, hi);
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
            let ft = f(&trial);
            if ft <= fx + ARMIJO * decrease && ft.is_finite() {
                accepted = Some(ft);
                break;
            }
            alpha *= 0.5;
        }
        let Some(f_new) = accepted else {
            if is_identity(&hinv) {
                break;
            }
            hinv = identity(n);
            continue;
        };

        let s: Vec<f64> = (0..n).map(|i| trial[i] - x[i]).collect();
        let g_new = forward_gradient(f, &trial, f_new, lo, hi);
        let y: Vec<f64> = (0..n).map(|i| g_new[i] - g[i]).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            bfgs_update(&mut hinv, &s, &y, sy);
        }
        let step = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let stalled = (fx - f_new).abs() <= 1e-15 * (1.0 + fx.abs()) && step < 1e-12;
        x.copy_from_slice(&trial);
        fx = f_new;
        g = g_new;
        if stalled {
            break;
        }
    }
    BoxMinimum {
        x,
        value: fx,
        iterations,
        converged,
    }
}

fn identity(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| f64::from(u8::from(i == j))).collect())
        .collect()
}

fn is_identity(m: &[Vec<f64>]) -> bool {
    m.iter().enumerate().all(|(i, row)| {
        row.iter()
            .enumerate()
            .all(|(j, &v)| v == f64::from(u8::from(i == j)))
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Inverse-Hessian update `H <- (I - r s y') H (I - r y s') + r s s'`.
fn bfgs_update(h: &mut [Vec<f64>], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let r = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i], y)).collect();
    let yhy = dot(y, &hy);
    for i in 0..n {
        for j in 0..n {
            h[i][j] += -r * (hy[i] * s[j] + s[i] * hy[j]) + (r * r * yhy + r) * s[i] * s[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AlResult {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub hit_cap: bool,
}

/// PHR augmented Lagrangian for `min f(x)` subject to `c(x) <= 0` and box bounds.
/// `eval` returns the objective and fills the constraint vector.
pub(crate) fn augmented_lagrangian<E: Fn(&[f64], &mut Vec<f64>) -> f64>(
    eval: &E,
    x0: &[f64],
    lo: &[f64],
    hi: &[f64],
    tol: f64,
    max_iter: usize,
) -> AlResult {
    let mut c = Vec::new();
    eval(x0, &mut c);
    let mut lambda = vec![0.0; c.len()];
    let mut rho = 10.0;
    let mut x = x0.to_vec();
    let mut iterations = 0;
    let mut hit_cap = false;
    let mut prev_violation = f64::INFINITY;

    for _ in 0..30 {
        let merit = |z: &[f64]| {
            let mut cz = Vec::with_capacity(lambda.len());
            let f = eval(z, &mut cz);
            let pen: f64 = cz
                .iter()
                .zip(&lambda)
                .map(|(&ci, &li)| {
                    let t = (li + rho * ci).max(0.0);
                    t * t - li * li
                })
                .sum();
            f + pen / (2.0 * rho)
        };
        let m = minimize_box(&merit, &x, lo, hi, tol, max_iter);
        iterations += m.iterations;
        hit_cap |= !m.converged && m.iterations >= max_iter;
        x = m.x;
        eval(&x, &mut c);
        let violation = c.iter().fold(0.0f64, |v, &ci| v.max(ci));
        let complementarity = c
            .iter()
            .zip(&lambda)
            .fold(0.0f64, |v, (&ci, &li)| v.max((li * ci).abs()));
        for (li, &ci) in lambda.iter_mut().zip(&c) {
            *li = (*li + rho * ci).max(0.0);
        }
        if violation <= 1e-10 && complementarity <= tol {
            break;
        }
        if violation > 0.25 * prev_violation {
            rho = (rho * 10.0).min(1e9);
        }
        prev_violation = violation;
    }
    AlResult {
        x,
        iterations,
        hit_cap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_with_active_bound() {
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + 10.0 * (x[1] + 0.5).powi(2) + x[0] * x[1];
        let m = minimize_box(&f, &[0.0, 0.0], &[-1.0, 0.0], &[1.0, 1.0], 1e-8, 200);
        assert!(m.converged);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-6 && m.x[1].abs() < 1e-6,
            "{:?}",
            m.x
        );
    }

    #[test]
    fn rosenbrock_interior() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = minimize_box(&f, &[-1.2, 1.0], &[-5.0, -5.0], &[5.0, 5.0], 1e-7, 500);
        assert!(
            (m.x[0] - 1.0).abs() < 1e-3 && (m.x[1] - 1.0).abs() < 2e-3,
            "{:?}",
            m
        );
    }

    #[test]
    fn constrained_minimum_on_circle() {
        // min x + y  s.t.  x^2 + y^2 <= 1
        let eval = |x: &[f64], c: &mut Vec<f64>| {
            c.clear();
            c.push(x[0] * x[0] + x[1] * x[1] - 1.0);
            x[0] + x[1]
        };
        let r = augmented_lagrangian(&eval, &[0.0, 0.0], &[-3.0, -3.0], &[3.0, 3.0], 1e-9, 300);
        let h = -std::f64::consts::FRAC_1_SQRT_2;
        assert!(
            (r.x[0] - h).abs() < 1e-4 && (r.x[1] - h).abs() < 1e-4,
            "{:?}",
            r
        );
        assert!(r.x[0] * r.x[0] + r.x[1] * r.x[1] <= 1.0 + 1e-8);
    }

    #[test]
    fn forward_gradient_respects_upper_bound() {
        let f = |x: &[f64]| x[0] * x[0];
        let g = forward_gradient(&f, &[1.0], 1.0, &[0.0], &[1.0]);
        assert!((g[0] - 2.0).abs() < 1e-5);
    }
}
