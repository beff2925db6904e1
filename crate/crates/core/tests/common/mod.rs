#![allow(dead_code)]

use ndarray::{Array1, Array2};
use ndda::graph::Topology;
use ndda::problem::{LocalObjective, ProblemInstance};
use ndda::prox::{DualProjector, FeasibleSet};

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, ascending.
pub fn jacobi_eigenvalues(mut a: Array2<f64>) -> Vec<f64> {
    let n = a.nrows();
    for _sweep in 0..100 {
        let off: f64 = (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|(i, j)| i != j).map(|(i, j)| a[[i, j]].powi(2)).sum();
        let scale: f64 = a.iter().map(|v| v * v).sum::<f64>().max(f64::MIN_POSITIVE);
        if off <= 1e-30 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut ev: Vec<f64> = (0..n).map(|i| a[[i, i]]).collect();
    ev.sort_by(f64::total_cmp);
    ev
}

/// Second-largest absolute eigenvalue of a symmetric stochastic matrix.
pub fn jacobi_beta(p: &Array2<f64>) -> f64 {
    let mut abs: Vec<f64> = jacobi_eigenvalues(p.clone()).into_iter().map(f64::abs).collect();
    abs.sort_by(f64::total_cmp);
    abs[abs.len() - 2]
}

/// Euclidean projection onto `‖x‖₁ ≤ r` by enumerating every support and
/// keeping the candidate that satisfies the KKT conditions.
pub fn l1_projection_brute(v: &[f64], r: f64) -> Vec<f64> {
    if v.iter().map(|x| x.abs()).sum::<f64>() <= r {
        return v.to_vec();
    }
    let m = v.len();
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 1u32..(1 << m) {
        let support: Vec<usize> = (0..m).filter(|i| mask & (1 << i) != 0).collect();
        let theta = (support.iter().map(|&i| v[i].abs()).sum::<f64>() - r) / support.len() as f64;
        if theta < 0.0 {
            continue;
        }
        let inside_ok = support.iter().all(|&i| v[i].abs() >= theta - 1e-12);
        let outside_ok = (0..m).filter(|i| mask & (1 << i) == 0).all(|i| v[i].abs() <= theta + 1e-12);
        if !(inside_ok && outside_ok) {
            continue;
        }
        let x: Vec<f64> = (0..m)
            .map(|i| if mask & (1 << i) != 0 { v[i].signum() * (v[i].abs() - theta).max(0.0) } else { 0.0 })
            .collect();
        let d: f64 = x.iter().zip(v).map(|(a, b)| (a - b).powi(2)).sum();
        if best.as_ref().is_none_or(|(bd, _)| d < *bd) {
            best = Some((d, x));
        }
    }
    best.expect("some support satisfies KKT").1
}

/// Every connected graph on `n ≤ 5` nodes, by enumerating edge subsets.
pub fn all_connected_graphs(n: usize) -> Vec<Topology> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    (0u32..(1 << pairs.len()))
        .filter_map(|mask| {
            let edges = pairs.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &e)| e);
            let t = Topology::new(n, edges).unwrap();
            t.is_connected().then_some(t)
        })
        .collect()
}

pub fn cycle(n: usize) -> Topology {
    Topology::new(n, (0..n).map(|i| (i, (i + 1) % n))).unwrap()
}

pub fn star(n: usize) -> Topology {
    Topology::new(n, (1..n).map(|i| (0, i))).unwrap()
}

/// Small deterministic least-squares instance over an l1 ball.
pub fn small_lasso(n: usize, m: usize, p: usize, radius: f64, seed: u64) -> ProblemInstance {
    let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
    let mut next = move || {
        state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
        ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
    };
    let locals = (0..n)
        .map(|_| {
            let a = Array2::from_shape_fn((p, m), |_| next());
            let y = Array1::from_shape_fn(p, |_| next());
            LocalObjective::least_squares(a, y).unwrap()
        })
        .collect();
    let set = FeasibleSet::L1Ball { dim: m, radius };
    ProblemInstance::new(locals, DualProjector::quadratic(set).unwrap()).unwrap()
}
