#![allow(dead_code)]

use optproxy::linalg::{DenseMatrix, Lu};
use optproxy::lp::StandardLp;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Best basic feasible solution by enumerating every basis and every
/// nonbasic bound assignment. `None` when no vertex is feasible.
pub fn vertex_enumeration(lp: &StandardLp<f64>) -> Option<(f64, Vec<f64>)> {
    let (m, n) = (lp.n_rows(), lp.n_cols());
    let mut best: Option<(f64, Vec<f64>)> = None;
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != m {
            continue;
        }
        let basis: Vec<usize> = (0..n).filter(|j| mask & (1 << j) != 0).collect();
        let nonbasic: Vec<usize> = (0..n).filter(|j| mask & (1 << j) == 0).collect();
        let bmat = lp.a.select(&(0..m).collect::<Vec<_>>(), &basis);
        let Ok(lu) = Lu::factor(&bmat) else { continue };
        for bounds in 0u32..(1 << nonbasic.len()) {
            let mut y = vec![0.0; n];
            for (i, &j) in nonbasic.iter().enumerate() {
                y[j] = if bounds & (1 << i) != 0 { lp.u[j] } else { lp.l[j] };
            }
            let mut rhs = lp.b.clone();
            for &j in &nonbasic {
                for r in 0..m {
                    rhs[r] -= lp.a[(r, j)] * y[j];
                }
            }
            let xb = lu.solve(&rhs);
            let ok = basis
                .iter()
                .zip(&xb)
                .all(|(&j, &v)| v >= lp.l[j] - 1e-9 && v <= lp.u[j] + 1e-9);
            if !ok {
                continue;
            }
            for (&j, &v) in basis.iter().zip(&xb) {
                y[j] = v;
            }
            let obj = lp.objective(&y);
            if best.as_ref().is_none_or(|(b, _)| obj < *b) {
                best = Some((obj, y));
            }
        }
    }
    best
}

/// Random box LP with `n ≤ 6`, `m ≤ 4`; right-hand side usually taken from an
/// interior point so most draws are feasible.
pub fn random_lp(rng: &mut ChaCha8Rng) -> StandardLp<f64> {
    let n = rng.gen_range(2..=6);
    let m = rng.gen_range(1..=n.min(4));
    let a = loop {
        let mut a = DenseMatrix::zeros(m, n);
        for i in 0..m {
            for j in 0..n {
                a[(i, j)] = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(-5.0..5.0) };
            }
        }
        // full row rank keeps the vertex oracle's basis enumeration complete
        let gram = a.matmul(&a.transpose()).unwrap();
        if Lu::factor(&gram).is_ok() {
            break a;
        }
    };
    let l: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..0.0)).collect();
    let u: Vec<f64> = l.iter().map(|&lo| lo + rng.gen_range(0.1..10.0)).collect();
    let c: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
    let b = if rng.gen_bool(0.85) {
        let x0: Vec<f64> = l.iter().zip(&u).map(|(&lo, &hi)| rng.gen_range(lo..=hi)).collect();
        a.matvec(&x0)
    } else {
        (0..m).map(|_| rng.gen_range(-30.0..30.0)).collect()
    };
    StandardLp::new(a, b, c, l, u).unwrap()
}
