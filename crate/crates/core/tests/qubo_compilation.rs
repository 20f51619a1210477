mod common;

use common::*;
use esqubo::encoding::{decode, BitVector, Encoding};
use esqubo::qubo::{build, default_penalties};
use rand::Rng;

/// ½wᵀCw + λ_r(μᵀw − ρ)² + λ_b(Σw − 1)², evaluated directly on weights.
fn direct_objective(w: &[f64], cov: &[Vec<f64>], mu: &[f64], rho: f64, lb: f64, lr: f64) -> f64 {
    let n = w.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += w[i] * cov[i][j] * w[j];
        }
    }
    let ret: f64 = w.iter().zip(mu).map(|(a, b)| a * b).sum::<f64>() - rho;
    let budget: f64 = w.iter().sum::<f64>() - 1.0;
    0.5 * quad + lr * ret * ret + lb * budget * budget
}

fn random_instance(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> (Vec<Vec<f64>>, Vec<f64>, f64) {
    let a: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| r.random_range(-0.3..0.3)).collect()).collect();
    let cov = (0..n)
        .map(|i| (0..n).map(|j| (0..n).map(|k| a[i][k] * a[j][k]).sum()).collect())
        .collect();
    let mu = (0..n).map(|_| r.random_range(-0.05..0.1)).collect();
    (cov, mu, r.random_range(-0.02..0.08))
}

#[test]
fn exhaustive_identity_n2_b3() {
    let mut r = rng(2024);
    let enc = Encoding::new(2, 3).unwrap();
    let (cov, mu, rho) = random_instance(&mut r, 2);
    let p = build(&enc, &cov, &mu, rho, 4.0, 7.0).unwrap();
    let mut max_err = 0.0f64;
    for i in 0..64 {
        let x = BitVector::from_index(i, 6);
        let w = decode(&enc, &x).unwrap();
        let e = p.energy(&x).unwrap();
        max_err = max_err.max((e - direct_objective(&w, &cov, &mu, rho, 4.0, 7.0)).abs());
    }
    assert!(max_err <= 1e-12, "max abs diff {max_err}");
    assert_eq!(p.energy(&BitVector::zeros(6)).unwrap(), p.offset());
}

#[test]
fn rescaling_cov_and_penalties_keeps_argmin() {
    let mut r = rng(5);
    let enc = Encoding::new(2, 3).unwrap();
    for _ in 0..20 {
        let (cov, mu, rho) = random_instance(&mut r, 2);
        let s = r.random_range(0.5..20.0);
        let scaled: Vec<Vec<f64>> = cov.iter().map(|row| row.iter().map(|c| c * s).collect()).collect();
        let a = build(&enc, &cov, &mu, rho, 3.0, 2.0).unwrap();
        let b = build(&enc, &scaled, &mu, rho, 3.0 * s, 2.0 * s).unwrap();
        let same_pen = build(&enc, &scaled, &mu, rho, 3.0, 2.0).unwrap();
        let zero_cov = build(&enc, &vec![vec![0.0; 2]; 2], &mu, rho, 3.0, 2.0).unwrap();
        for i in 0..64 {
            let x = BitVector::from_index(i, 6);
            let ea = a.energy(&x).unwrap();
            assert!((b.energy(&x).unwrap() - s * ea).abs() <= 1e-12 * (1.0 + ea.abs() * s));
            // Fixed penalties: only the quadratic-risk part scales.
            let risk_a = ea - zero_cov.energy(&x).unwrap();
            let risk_b = same_pen.energy(&x).unwrap() - zero_cov.energy(&x).unwrap();
            assert!((risk_b - s * risk_a).abs() <= 1e-12);
        }
        let argmin = |p: &esqubo::QuboProblem| {
            (0..64)
                .map(|i| BitVector::from_index(i, 6))
                .min_by(|x, y| p.energy(x).unwrap().total_cmp(&p.energy(y).unwrap()))
                .unwrap()
        };
        assert_eq!(argmin(&a), argmin(&b));
    }
}

#[test]
fn default_budget_penalty_keeps_minimizers_near_full_investment() {
    let mut r = rng(77);
    for n in 1..=3usize {
        for bits in 1..=4usize {
            let enc = Encoding::new(n, bits).unwrap();
            if n as f64 * (1.0 - enc.resolution()) < 1.0 {
                continue; // the grid cannot reach Σw = 1
            }
            let (cov, mu, rho) = random_instance(&mut r, n);
            let (lb, lr) = default_penalties(&cov, &mu, rho);
            let p = build(&enc, &cov, &mu, rho, lb, lr).unwrap();
            let best = esqubo::solve_exhaustive(&p).unwrap();
            let w = decode(&enc, &best.x).unwrap();
            let gap = (w.iter().sum::<f64>() - 1.0).abs();
            assert!(gap <= enc.resolution() * n as f64 / 2.0, "n={n} bits={bits} gap={gap}");
        }
    }
}

#[test]
fn coefficients_are_finite() {
    let mut r = rng(9);
    for _ in 0..50 {
        let (cov, mu, rho) = random_instance(&mut r, 3);
        let enc = Encoding::new(3, 4).unwrap();
        let (lb, lr) = default_penalties(&cov, &mu, rho);
        let p = build(&enc, &cov, &mu, rho, lb, lr).unwrap();
        for u in 0..p.n() {
            assert!(p.row(u).iter().all(|c| c.is_finite()));
        }
        assert!(p.offset().is_finite());
    }
}
