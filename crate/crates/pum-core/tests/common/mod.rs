//! Independent oracles. Nothing here calls the solvers under test except
//! `lambda_value`, which is a closed-form evaluation.
#![allow(dead_code)]

use pum_core::Perturbation;

/// Brute-force maximizer of pᵀv − Λ(p) over the lattice {p : p_i ∈ hℤ}.
///
/// A 1e-2 lattice locates the basin and a 1e-3 lattice within ±0.03 of the
/// coarse winner refines it; the objective is strictly concave so the
/// coarse winner lies within one coarse cell of the true maximizer.
pub fn grid_argmax(pert: &Perturbation, v: &[f64]) -> (Vec<f64>, f64) {
    let k = v.len();
    let score = |p: &[f64]| -> f64 {
        let val = pert.lambda_value(p).unwrap();
        p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>() - val
    };
    let coarse = 100i64;
    let (best, _) = search(k, coarse, None, &score);
    let fine = 1000i64;
    let center: Vec<i64> = best.iter().map(|&c| c * (fine / coarse)).collect();
    let (best, val) = search(k, fine, Some((&center, 30)), &score);
    (best.iter().map(|&c| c as f64 / fine as f64).collect(), val)
}

fn search(k: usize, m: i64, window: Option<(&[i64], i64)>, score: &dyn Fn(&[f64]) -> f64) -> (Vec<i64>, f64) {
    let mut best = (vec![0; k], f64::NEG_INFINITY);
    let mut cur = vec![0i64; k];
    let mut p = vec![0.0; k];
    #[allow(clippy::too_many_arguments)]
    fn rec(
        i: usize,
        left: i64,
        m: i64,
        window: Option<(&[i64], i64)>,
        cur: &mut Vec<i64>,
        p: &mut Vec<f64>,
        score: &dyn Fn(&[f64]) -> f64,
        best: &mut (Vec<i64>, f64),
    ) {
        let k = cur.len();
        if i == k - 1 {
            if let Some((c, w)) = window {
                if (left - c[i]).abs() > w {
                    return;
                }
            }
            cur[i] = left;
            for j in 0..k {
                p[j] = cur[j] as f64 / m as f64;
            }
            let s = score(p);
            if s > best.1 {
                *best = (cur.clone(), s);
            }
            return;
        }
        let (lo, hi) = match window {
            Some((c, w)) => ((c[i] - w).max(0), (c[i] + w).min(left)),
            None => (0, left),
        };
        for a in lo..=hi {
            cur[i] = a;
            rec(i + 1, left - a, m, window, cur, p, score, best);
        }
    }
    rec(0, m, m, window, &mut cur, &mut p, score, &mut best);
    best
}

/// Multinomial logit MLE by damped Newton on the log-likelihood, written
/// directly against softmax probabilities.
pub fn logit_mle(k: usize, d: usize, x: &[f64], y: &[usize], mu: f64) -> Vec<f64> {
    let n = y.len();
    let nll = |b: &[f64]| -> f64 {
        let mut total = 0.0;
        for obs in 0..n {
            let xs = &x[obs * k * d..(obs + 1) * k * d];
            let v: Vec<f64> = (0..k).map(|i| (0..d).map(|j| xs[i * d + j] * b[j]).sum::<f64>() / mu).collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + v.iter().map(|a| (a - m).exp()).sum::<f64>().ln();
            total += lse - v[y[obs]];
        }
        total / n as f64
    };
    let mut b = vec![0.0; d];
    for _ in 0..100 {
        let mut g = nalgebra::DVector::zeros(d);
        let mut h = nalgebra::DMatrix::zeros(d, d);
        for obs in 0..n {
            let xs = &x[obs * k * d..(obs + 1) * k * d];
            let v: Vec<f64> = (0..k).map(|i| (0..d).map(|j| xs[i * d + j] * b[j]).sum::<f64>() / mu).collect();
            let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = v.iter().map(|a| (a - m).exp()).collect();
            let z: f64 = e.iter().sum();
            let p: Vec<f64> = e.iter().map(|a| a / z).collect();
            let xbar: Vec<f64> = (0..d).map(|j| (0..k).map(|i| p[i] * xs[i * d + j]).sum()).collect();
            for j in 0..d {
                g[j] += (xbar[j] - xs[y[obs] * d + j]) / mu;
            }
            for i in 0..k {
                for a in 0..d {
                    for c in 0..d {
                        h[(a, c)] += p[i] * (xs[i * d + a] - xbar[a]) * (xs[i * d + c] - xbar[c]) / (mu * mu);
                    }
                }
            }
        }
        g /= n as f64;
        h /= n as f64;
        if g.norm() < 1e-13 {
            break;
        }
        let step = h.lu().solve(&g).expect("Hessian invertible");
        let f0 = nll(&b);
        let mut t = 1.0;
        loop {
            let cand: Vec<f64> = b.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
            if nll(&cand) <= f0 + 1e-15 || t < 1e-10 {
                b = cand;
                break;
            }
            t *= 0.5;
        }
    }
    b
}

/// Central differences of `f` at `x`.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64], h: f64) -> Vec<f64> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|i| {
            xp[i] = x[i] + h;
            let up = f(&xp);
            xp[i] = x[i] - h;
            let down = f(&xp);
            xp[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

pub fn linf(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn l2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}
