//! Two small optimizers used by the tail fits: Nelder-Mead for a robust
//! start and a damped Newton polish with analytic derivatives.

/// Nelder-Mead on `f: R^2 -> R`. Returns the best vertex and its value.
pub fn nelder_mead<F: Fn([f64; 2]) -> f64>(
    f: &F,
    x0: [f64; 2],
    step: [f64; 2],
    max_iter: usize,
    ftol: f64,
) -> ([f64; 2], f64) {
    let eval = |x: [f64; 2]| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mut s = [
        x0,
        [x0[0] + step[0], x0[1]],
        [x0[0], x0[1] + step[1]],
    ];
    let mut fv = [eval(s[0]), eval(s[1]), eval(s[2])];
    for _ in 0..max_iter {
        let mut ord = [0usize, 1, 2];
        ord.sort_by(|&a, &b| fv[a].total_cmp(&fv[b]));
        s = [s[ord[0]], s[ord[1]], s[ord[2]]];
        fv = [fv[ord[0]], fv[ord[1]], fv[ord[2]]];
        let spread = (fv[2] - fv[0]).abs();
        if fv[0].is_finite() && spread <= ftol * (1.0 + fv[0].abs()) {
            let size = (s[2][0] - s[0][0]).abs().max((s[2][1] - s[0][1]).abs());
            if size < 1e-9 || spread == 0.0 || spread <= 1e-14 * (1.0 + fv[0].abs()) {
                break;
            }
        }
        let c = [(s[0][0] + s[1][0]) / 2.0, (s[0][1] + s[1][1]) / 2.0];
        let lerp = |t: f64| [c[0] + t * (s[2][0] - c[0]), c[1] + t * (s[2][1] - c[1])];
        let xr = lerp(-1.0);
        let fr = eval(xr);
        if fr < fv[0] {
            let xe = lerp(-2.0);
            let fe = eval(xe);
            if fe < fr {
                s[2] = xe;
                fv[2] = fe;
            } else {
                s[2] = xr;
                fv[2] = fr;
            }
        } else if fr < fv[1] {
            s[2] = xr;
            fv[2] = fr;
        } else {
            let (xc, fc) = if fr < fv[2] {
                let x = lerp(-0.5);
                (x, eval(x))
            } else {
                let x = lerp(0.5);
                (x, eval(x))
            };
            if fc < fv[2].min(fr) {
                s[2] = xc;
                fv[2] = fc;
            } else {
                for k in 1..3 {
                    s[k] = [
                        s[0][0] + 0.5 * (s[k][0] - s[0][0]),
                        s[0][1] + 0.5 * (s[k][1] - s[0][1]),
                    ];
                    fv[k] = eval(s[k]);
                }
            }
        }
    }
    let b = (0..3).min_by(|&a, &b| fv[a].total_cmp(&fv[b])).unwrap();
    (s[b], fv[b])
}

/// Value, gradient and Hessian of a two-parameter objective.
pub struct Local {
    pub f: f64,
    pub g: [f64; 2],
    pub h: [[f64; 2]; 2],
}

pub struct NewtonOutcome {
    pub x: [f64; 2],
    pub f: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Damped Newton iteration. Stops when the gradient norm drops to `gtol` or
/// an accepted step is shorter than `xtol`.
pub fn newton<F: Fn([f64; 2]) -> Local>(
    f: &F,
    x0: [f64; 2],
    max_iter: usize,
    gtol: f64,
    xtol: f64,
) -> NewtonOutcome {
    let mut x = x0;
    let mut cur = f(x);
    let norm = |g: [f64; 2]| (g[0] * g[0] + g[1] * g[1]).sqrt();
    let mut last_step = f64::INFINITY;
    for it in 0..max_iter {
        let gn = norm(cur.g);
        if gn <= gtol || last_step <= xtol {
            return NewtonOutcome {
                x,
                f: cur.f,
                grad_norm: gn,
                iterations: it,
                converged: true,
            };
        }
        let [[a, b], [_, d]] = cur.h;
        let det = a * d - b * b;
        let mut dir = if a > 0.0 && det > 0.0 {
            [
                -(d * cur.g[0] - b * cur.g[1]) / det,
                -(-b * cur.g[0] + a * cur.g[1]) / det,
            ]
        } else {
            [-cur.g[0], -cur.g[1]]
        };
        if dir[0] * cur.g[0] + dir[1] * cur.g[1] >= 0.0 {
            dir = [-cur.g[0], -cur.g[1]];
        }
        let dn = norm(dir);
        if dn > 2.0 {
            dir = [dir[0] * 2.0 / dn, dir[1] * 2.0 / dn];
        }
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let xn = [x[0] + t * dir[0], x[1] + t * dir[1]];
            let next = f(xn);
            if next.f.is_finite() && next.f <= cur.f {
                last_step = t * norm(dir);
                x = xn;
                cur = next;
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if !accepted {
            // No decrease even for tiny steps: we are at the floating point floor.
            last_step = 0.0;
        }
    }
    let gn = norm(cur.g);
    NewtonOutcome {
        x,
        f: cur.f,
        grad_norm: gn,
        iterations: max_iter,
        converged: gn <= gtol || last_step <= xtol,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosen(x: [f64; 2]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn nm_finds_rosenbrock_minimum() {
        let (x, fx) = nelder_mead(&rosen, [-1.2, 1.0], [0.5, 0.5], 2000, 1e-14);
        assert!(fx < 1e-8, "{x:?} {fx}");
    }

    #[test]
    fn newton_on_quadratic() {
        let q = |x: [f64; 2]| Local {
            f: 2.0 * (x[0] - 1.0).powi(2) + (x[1] + 3.0).powi(2) + x[0] * x[1],
            g: [4.0 * (x[0] - 1.0) + x[1], 2.0 * (x[1] + 3.0) + x[0]],
            h: [[4.0, 1.0], [1.0, 2.0]],
        };
        let out = newton(&q, [0.0, 0.0], 50, 1e-12, 0.0);
        assert!(out.converged);
        assert!((4.0 * (out.x[0] - 1.0) + out.x[1]).abs() < 1e-10);
    }
}
