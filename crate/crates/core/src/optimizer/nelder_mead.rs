use crate::scalar::Scalar;

/// Standard Nelder-Mead coefficients and stopping rule.
#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions<T> {
    pub reflection: T,
    pub expansion: T,
    pub contraction: T,
    pub shrink: T,
    /// Stop when `max f - min f` over the simplex falls below this.
    pub f_spread: T,
    /// Stop when every vertex lies within this distance of the best one.
    pub x_spread: T,
    pub max_iterations: usize,
}

impl<T: Scalar> Default for NelderMeadOptions<T> {
    fn default() -> Self {
        Self {
            reflection: T::one(),
            expansion: T::lit(2.0),
            contraction: T::lit(0.5),
            shrink: T::lit(0.5),
            f_spread: T::lit(1e-6),
            x_spread: T::lit(1e-12),
            max_iterations: 500,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<T> {
    pub x: Vec<T>,
    pub f: T,
    pub iterations: usize,
    pub evaluations: usize,
    pub converged: bool,
}

/// Minimises `f` from the simplex `x0, x0 + step_i e_i`.
pub fn nelder_mead<T, F>(f: F, x0: &[T], step: &[T], opts: &NelderMeadOptions<T>) -> NelderMeadResult<T>
where
    T: Scalar,
    F: Fn(&[T]) -> T,
{
    let n = x0.len();
    assert_eq!(step.len(), n);
    let mut evaluations = 0usize;
    let mut eval = |x: &[T]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            T::infinity()
        } else {
            v
        }
    };

    let mut simplex: Vec<(Vec<T>, T)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), eval(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] = x[i] + step[i];
        let fx = eval(&x);
        simplex.push((x, fx));
    }

    let order = |s: &mut Vec<(Vec<T>, T)>| s.sort_by(|a, b| a.1.partial_cmp(&b.1).unwrap_or(std::cmp::Ordering::Equal));
    let along = |base: &[T], dir_from: &[T], coef: T| -> Vec<T> {
        base.iter()
            .zip(dir_from)
            .map(|(&c, &w)| c + coef * (c - w))
            .collect()
    };

    let mut iterations = 0;
    let mut converged = false;
    while iterations < opts.max_iterations {
        order(&mut simplex);
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread_x = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (*a - *b).abs()))
            .fold(T::zero(), T::max);
        if (worst - best).abs() < opts.f_spread || spread_x < opts.x_spread {
            converged = true;
            break;
        }
        iterations += 1;

        let mut centroid = vec![T::zero(); n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c = *c + *xi;
            }
        }
        let nf = T::from_usize(n).unwrap();
        centroid.iter_mut().for_each(|c| *c = *c / nf);

        let reflected = along(&centroid, &simplex[n].0, opts.reflection);
        let f_r = eval(&reflected);
        if f_r < simplex[0].1 {
            let expanded = along(&centroid, &simplex[n].0, opts.reflection * opts.expansion);
            let f_e = eval(&expanded);
            simplex[n] = if f_e < f_r { (expanded, f_e) } else { (reflected, f_r) };
            continue;
        }
        if f_r < simplex[n - 1].1 {
            simplex[n] = (reflected, f_r);
            continue;
        }
        // contraction: outside if the reflection improved on the worst point
        let (point, f_c) = if f_r < simplex[n].1 {
            let p = along(&centroid, &simplex[n].0, opts.reflection * opts.contraction);
            let v = eval(&p);
            (p, v)
        } else {
            let p = along(&centroid, &simplex[n].0, -opts.contraction);
            let v = eval(&p);
            (p, v)
        };
        if f_c < simplex[n].1.min(f_r) {
            simplex[n] = (point, f_c);
            continue;
        }
        let anchor = simplex[0].0.clone();
        for vertex in simplex.iter_mut().skip(1) {
            let x: Vec<T> = anchor
                .iter()
                .zip(&vertex.0)
                .map(|(&a, &v)| a + opts.shrink * (v - a))
                .collect();
            let fx = eval(&x);
            *vertex = (x, fx);
        }
    }
    order(&mut simplex);
    let (x, f) = simplex.swap_remove(0);
    NelderMeadResult {
        x,
        f,
        iterations,
        evaluations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimises_rosenbrock() {
        let rosen = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let opts = NelderMeadOptions {
            f_spread: 1e-14,
            max_iterations: 5000,
            ..Default::default()
        };
        let r = nelder_mead(rosen, &[-1.2, 1.0], &[0.1, 0.1], &opts);
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn respects_iteration_cap() {
        let r = nelder_mead(|x: &[f64]| x[0].sin() * 1e9, &[0.0], &[1e-3], &NelderMeadOptions {
            max_iterations: 3,
            f_spread: 0.0,
            x_spread: 0.0,
            ..Default::default()
        });
        assert!(r.iterations <= 3 && !r.converged);
    }

    #[test]
    fn walks_to_a_constraint_corner() {
        // maximise x + y on x <= 1, y <= 2 with an exterior penalty
        let f = |x: &[f64]| {
            let v = (x[0] - 1.0).max(0.0) + (x[1] - 2.0).max(0.0);
            if v > 0.0 { 10.0 + v } else { -(x[0] + x[1]) }
        };
        let r = nelder_mead(f, &[0.0, 0.0], &[0.2, 0.2], &NelderMeadOptions {
            f_spread: 1e-10,
            max_iterations: 2000,
            ..Default::default()
        });
        assert!((r.f + 3.0).abs() < 1e-6, "{:?}", r);
    }
}
