//! Derivative-free minimisers used by the parameter optimiser.

use rand::Rng;
use rand_chacha::ChaCha20Rng;

/// Adaptive Nelder–Mead minimisation from `x0`.
pub fn nelder_mead<F: Fn(&[f64]) -> f64>(f: &F, x0: &[f64], step: f64, max_evals: usize, ftol: f64) -> (Vec<f64>, f64) {
    let n = x0.len();
    let nf = n as f64;
    let (alpha, gamma, rho, sigma) = (1.0, 1.0 + 2.0 / nf, 0.75 - 1.0 / (2.0 * nf), 1.0 - 1.0 / nf);
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    simplex.push((x0.to_vec(), f(x0)));
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step;
        let fx = f(&x);
        simplex.push((x, fx));
    }
    let mut evals = n + 1;
    let point = |c: &[f64], w: &[f64], t: f64| -> Vec<f64> { c.iter().zip(w).map(|(a, b)| a + t * (b - a)).collect() };
    while evals < max_evals {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let (best, worst) = (simplex[0].1, simplex[n].1);
        if (worst - best).abs() <= ftol * (1.0 + best.abs()) {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / nf;
            }
        }
        let xr = point(&centroid, &simplex[n].0, -alpha);
        let fr = f(&xr);
        evals += 1;
        if fr < simplex[0].1 {
            let xe = point(&centroid, &simplex[n].0, -gamma);
            let fe = f(&xe);
            evals += 1;
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let outside = fr < simplex[n].1;
            let xc = if outside {
                point(&centroid, &simplex[n].0, -rho)
            } else {
                point(&centroid, &simplex[n].0, rho)
            };
            let fc = f(&xc);
            evals += 1;
            if (outside && fc <= fr) || (!outside && fc < simplex[n].1) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for s in simplex.iter_mut().skip(1) {
                    s.0 = point(&x0, &s.0, sigma);
                    s.1 = f(&s.0);
                }
                evals += n;
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    simplex.swap_remove(0)
}

/// `best/1/bin` differential evolution with dithered mutation, seeded.
pub fn differential_evolution<F: Fn(&[f64]) -> f64>(
    f: &F,
    bounds: &[(f64, f64)],
    population: usize,
    generations: usize,
    rng: &mut ChaCha20Rng,
) -> (Vec<f64>, f64) {
    let dim = bounds.len();
    let mut pop: Vec<Vec<f64>> = (0..population)
        .map(|_| bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..hi)).collect())
        .collect();
    let mut fit: Vec<f64> = pop.iter().map(|x| f(x)).collect();
    let mut best = (0..population).min_by(|&a, &b| fit[a].total_cmp(&fit[b])).unwrap_or(0);
    for _ in 0..generations {
        let scale = rng.gen_range(0.5..1.0);
        for i in 0..population {
            let (r1, r2) = loop {
                let a = rng.gen_range(0..population);
                let b = rng.gen_range(0..population);
                if a != b && a != i && b != i {
                    break (a, b);
                }
            };
            let forced = rng.gen_range(0..dim);
            let trial: Vec<f64> = (0..dim)
                .map(|d| {
                    if d == forced || rng.gen_bool(0.7) {
                        let v = pop[best][d] + scale * (pop[r1][d] - pop[r2][d]);
                        v.clamp(bounds[d].0, bounds[d].1)
                    } else {
                        pop[i][d]
                    }
                })
                .collect();
            let ft = f(&trial);
            if ft <= fit[i] {
                pop[i] = trial;
                fit[i] = ft;
                if ft < fit[best] {
                    best = i;
                }
            }
        }
        let mean = fit.iter().sum::<f64>() / population as f64;
        let var = fit.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / population as f64;
        if var.sqrt() <= 1e-10 * mean.abs().max(1.0) {
            break;
        }
    }
    (pop.swap_remove(best), fit[best])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rosenbrock(x: &[f64]) -> f64 {
        x.windows(2)
            .map(|w| 100.0 * (w[1] - w[0] * w[0]).powi(2) + (1.0 - w[0]).powi(2))
            .sum()
    }

    #[test]
    fn nelder_mead_finds_rosenbrock_minimum() {
        let (x, fx) = nelder_mead(&rosenbrock, &[-1.2, 1.0, 0.5], 0.5, 20_000, 1e-15);
        assert!(fx < 1e-8, "{fx}");
        for v in x {
            assert!((v - 1.0).abs() < 1e-3);
        }
    }

    #[test]
    fn de_escapes_local_minima_deterministically() {
        let rastrigin = |x: &[f64]| -> f64 {
            10.0 * x.len() as f64
                + x.iter()
                    .map(|v| v * v - 10.0 * (2.0 * std::f64::consts::PI * v).cos())
                    .sum::<f64>()
        };
        let bounds = [(-5.0, 5.0); 3];
        let run = || differential_evolution(&rastrigin, &bounds, 45, 400, &mut ChaCha20Rng::seed_from_u64(3));
        let (x, fx) = run();
        assert!(fx < 1e-6, "{fx} at {x:?}");
        assert_eq!(run(), (x, fx));
    }
}
