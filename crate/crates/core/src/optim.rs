//! Derivative-free local minimizers: a principal-axis (direction-set)
//! method with Brent line searches as the primary routine and a
//! Nelder-Mead simplex as the fallback. Objectives may return large
//! finite penalties for rejected probes; non-finite values are treated
//! as a rejection.

#[derive(Debug, Clone)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub fmin: f64,
    pub evals: usize,
    pub converged: bool,
}

const GOLD: f64 = 1.618_033_988_749_895;
const CGOLD: f64 = 0.381_966_011_250_105;

struct Counted<'a> {
    f: &'a mut dyn FnMut(&[f64]) -> f64,
    evals: usize,
    budget: usize,
}

impl<'a> Counted<'a> {
    fn call(&mut self, x: &[f64]) -> f64 {
        self.evals += 1;
        let v = (self.f)(x);
        if v.is_finite() {
            v
        } else {
            1e12
        }
    }

    fn exhausted(&self) -> bool {
        self.evals >= self.budget
    }
}

/// Minimize along `base + t * dir` starting from t = 0. Returns (t, f(t)).
fn line_min(
    f: &mut Counted,
    base: &[f64],
    dir: &[f64],
    f0: f64,
    initial_step: f64,
    tol: f64,
) -> (f64, f64) {
    let n = base.len();
    let mut probe = vec![0.0; n];
    let mut eval = |f: &mut Counted, t: f64| -> f64 {
        for i in 0..n {
            probe[i] = base[i] + t * dir[i];
        }
        f.call(&probe)
    };

    // bracket the minimum by golden expansion
    let (mut ax, mut fa) = (0.0, f0);
    let (mut bx, mut fb) = (initial_step, eval(f, initial_step));
    if fb > fa {
        std::mem::swap(&mut ax, &mut bx);
        std::mem::swap(&mut fa, &mut fb);
    }
    let mut cx = bx + GOLD * (bx - ax);
    let mut fc = eval(f, cx);
    let mut iter = 0;
    while fc < fb && iter < 60 && !f.exhausted() {
        let nx = cx + GOLD * (cx - bx);
        ax = bx;
        fa = fb;
        bx = cx;
        fb = fc;
        cx = nx;
        fc = eval(f, cx);
        iter += 1;
    }
    let _ = fa;

    // Brent's method on the bracket [ax, cx] with interior point bx
    let (mut a, mut b) = if ax < cx { (ax, cx) } else { (cx, ax) };
    let mut x = bx;
    let mut w = bx;
    let mut v = bx;
    let mut fx = fb;
    let mut fw = fb;
    let mut fv = fb;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..100 {
        if f.exhausted() {
            break;
        }
        let xm = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - xm).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if p.abs() < (0.5 * q * etemp).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm - x >= 0.0 { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = CGOLD * e;
        }
        let u = if d.abs() >= tol1 { x + d } else { x + if d >= 0.0 { tol1 } else { -tol1 } };
        let fu = eval(f, u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    (x, fx)
}

/// Powell-style principal-axis minimization: cycles through a direction
/// set with Brent line minimizations and replaces the direction of
/// largest decrease with the net cycle displacement.
pub fn principal_axis(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    tol: f64,
    max_evals: usize,
) -> OptimResult {
    let n = x0.len();
    let mut c = Counted { f, evals: 0, budget: max_evals };
    let mut x = x0.to_vec();
    let mut fx = c.call(&x);

    // direction set starts as the scaled coordinate axes
    let mut dirs: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut d = vec![0.0; n];
            d[i] = steps[i];
            d
        })
        .collect();

    let mut converged = false;
    for _cycle in 0..400 {
        let f_start = fx;
        let x_start = x.clone();
        let mut biggest_drop = 0.0;
        let mut biggest_idx = 0;
        for (i, dir) in dirs.iter().enumerate() {
            let before = fx;
            let (t, ft) = line_min(&mut c, &x, dir, fx, 1.0, 1e-10);
            if ft < fx {
                for j in 0..n {
                    x[j] += t * dir[j];
                }
                fx = ft;
            }
            if before - fx > biggest_drop {
                biggest_drop = before - fx;
                biggest_idx = i;
            }
            if c.exhausted() {
                break;
            }
        }
        if 2.0 * (f_start - fx).abs() <= tol * (f_start.abs() + fx.abs()) + 1e-300 {
            converged = true;
            break;
        }
        if c.exhausted() {
            break;
        }
        // extrapolated point along the cycle displacement
        let disp: Vec<f64> = x.iter().zip(&x_start).map(|(a, b)| a - b).collect();
        let extrap: Vec<f64> = x.iter().zip(&disp).map(|(a, d)| a + d).collect();
        let f_extrap = c.call(&extrap);
        if f_extrap < f_start {
            let t1 = 2.0 * (f_start - 2.0 * fx + f_extrap) * (f_start - fx - biggest_drop).powi(2);
            let t2 = biggest_drop * (f_start - f_extrap).powi(2);
            if t1 < t2 {
                let (t, ft) = line_min(&mut c, &x, &disp, fx, 1.0, 1e-10);
                if ft < fx {
                    for j in 0..n {
                        x[j] += t * disp[j];
                    }
                    fx = ft;
                }
                dirs[biggest_idx] = disp;
            }
        }
    }
    OptimResult { x, fmin: fx, evals: c.evals, converged }
}

/// Nelder-Mead simplex with the standard reflection, expansion,
/// contraction and shrink moves.
pub fn nelder_mead(
    f: &mut dyn FnMut(&[f64]) -> f64,
    x0: &[f64],
    steps: &[f64],
    tol: f64,
    max_evals: usize,
) -> OptimResult {
    let n = x0.len();
    let mut c = Counted { f, evals: 0, budget: max_evals };
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let f0 = c.call(x0);
    simplex.push((x0.to_vec(), f0));
    for i in 0..n {
        let mut xi = x0.to_vec();
        xi[i] += steps[i];
        let fi = c.call(&xi);
        simplex.push((xi, fi));
    }

    let mut converged = false;
    loop {
        simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if 2.0 * (worst - best).abs() <= tol * (worst.abs() + best.abs()) + 1e-300 {
            converged = true;
            break;
        }
        if c.exhausted() {
            break;
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| simplex[..n].iter().map(|(x, _)| x[j]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + alpha * (centroid[j] - simplex[n].0[j]))
            .collect();
        let fr = c.call(&reflect);
        if fr < simplex[0].1 {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + gamma * (reflect[j] - centroid[j]))
                .collect();
            let fe = c.call(&expand);
            simplex[n] = if fe < fr { (expand, fe) } else { (reflect, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (reflect, fr);
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + rho * (simplex[n].0[j] - centroid[j]))
                .collect();
            let fc = c.call(&contract);
            if fc < simplex[n].1 {
                simplex[n] = (contract, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for i in 1..=n {
                    let xi: Vec<f64> = (0..n)
                        .map(|j| x_best[j] + sigma * (simplex[i].0[j] - x_best[j]))
                        .collect();
                    let fi = c.call(&xi);
                    simplex[i] = (xi, fi);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap());
    OptimResult {
        x: simplex[0].0.clone(),
        fmin: simplex[0].1,
        evals: c.evals,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn principal_axis_minimizes_quadratic() {
        let mut f = |x: &[f64]| (x[0] - 3.0).powi(2) + 2.0 * (x[1] + 1.0).powi(2) + x[0] * x[1] * 0.1;
        let r = principal_axis(&mut f, &[0.0, 0.0], &[1.0, 1.0], 1e-10, 5000);
        assert!(r.converged);
        assert!(r.fmin < f(&[3.0, -1.0]) + 1e-6);
    }

    #[test]
    fn principal_axis_minimizes_rosenbrock() {
        let mut f = |x: &[f64]| rosenbrock(x);
        let r = principal_axis(&mut f, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 20000);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn nelder_mead_minimizes_rosenbrock() {
        let mut f = |x: &[f64]| rosenbrock(x);
        let r = nelder_mead(&mut f, &[-1.2, 1.0], &[0.5, 0.5], 1e-12, 20000);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn penalties_do_not_poison_the_search() {
        // objective rejects half the plane with a large penalty
        let mut f = |x: &[f64]| {
            if x[0] < -0.5 {
                1e10
            } else {
                (x[0] - 1.0).powi(2) + (x[1] - 2.0).powi(2)
            }
        };
        let r = principal_axis(&mut f, &[0.0, 0.0], &[0.5, 0.5], 1e-10, 5000);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 2.0).abs() < 1e-4);
    }
}
