mod common;

use common::*;
use esqubo::encoding::BitVector;
use esqubo::qubo::QuboProblem;
use esqubo::solver::{solve_annealing, solve_exhaustive, SolveRequest};
use rand::Rng;

pub fn random_qubo(r: &mut rand_chacha::ChaCha8Rng, n: usize) -> QuboProblem {
    let mut q = vec![0.0; n * n];
    for u in 0..n {
        for v in u..n {
            let c = r.random_range(-1.0..1.0);
            q[u * n + v] = c;
            q[v * n + u] = c;
        }
    }
    QuboProblem::from_dense(n, q, r.random_range(-1.0..1.0)).unwrap()
}

/// Full enumeration sorted by (energy, bitstring).
fn enumerate_and_sort(p: &QuboProblem) -> Vec<(f64, String)> {
    let n = p.n();
    let mut all: Vec<(f64, String)> = (0..1u64 << n)
        .map(|i| {
            let x = BitVector::from_index(i, n);
            let mut e = p.offset();
            for u in 0..n {
                for v in 0..n {
                    if x.get(u) && x.get(v) {
                        e += if u == v { p.coeff(u, u) } else { p.coeff(u, v) };
                    }
                }
            }
            (e, x.to_string())
        })
        .collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
    all
}

#[test]
fn exhaustive_matches_enumerate_and_sort() {
    let mut r = rng(10);
    for _ in 0..10 {
        let p = random_qubo(&mut r, 10);
        let s = solve_exhaustive(&p).unwrap();
        let sorted = enumerate_and_sort(&p);
        assert_eq!(s.x.to_string(), sorted[0].1);
        assert!((s.energy - sorted[0].0).abs() < 1e-9);
    }
}

#[test]
fn exhaustive_breaks_ties_lexicographically() {
    // x0 and x1 are interchangeable; both singletons reach the minimum.
    let p = QuboProblem::from_dense(3, vec![-1.0, 1.0, 0.0, 1.0, -1.0, 0.0, 0.0, 0.0, 0.5], 0.0).unwrap();
    let s = solve_exhaustive(&p).unwrap();
    assert_eq!(s.x.to_string(), "010");
    assert_eq!(s.energy, -1.0);
}

#[test]
fn annealing_output_is_consistent_and_locally_optimal() {
    let mut r = rng(12);
    for seed in 0..10u64 {
        let p = random_qubo(&mut r, 14);
        let s = solve_annealing(&SolveRequest {
            problem: &p,
            seed,
            num_reads: 4,
            sweeps: 50,
        })
        .unwrap();
        let recomputed = p.energy(&s.x).unwrap();
        assert!((s.energy - recomputed).abs() <= 1e-9 * recomputed.abs().max(1.0));
        for u in 0..p.n() {
            let mut y = s.x.clone();
            y.flip(u);
            assert!(p.energy(&y).unwrap() >= s.energy - 1e-12, "flip {u} improves");
        }
        let best = solve_exhaustive(&p).unwrap();
        assert!(s.energy >= best.energy - 1e-12);
        assert_eq!(s.reads_used, 4);
    }
}

#[test]
fn annealing_is_seed_deterministic() {
    let mut r = rng(13);
    let p = random_qubo(&mut r, 30);
    let req = SolveRequest {
        problem: &p,
        seed: 1234,
        num_reads: 6,
        sweeps: 40,
    };
    let a = solve_annealing(&req).unwrap();
    let b = solve_annealing(&req).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.energy.to_bits(), b.energy.to_bits());
}
