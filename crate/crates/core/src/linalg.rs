//! Small dense linear-algebra helpers on top of `nalgebra`.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

pub type Mat = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// `uᵀ g v`.
#[inline]
pub fn inner(g: &Mat, u: &Vector, v: &Vector) -> f64 {
    let d = u.len();
    let mut s = 0.0;
    for i in 0..d {
        let mut r = 0.0;
        for j in 0..d {
            r += g[(i, j)] * v[j];
        }
        s += u[i] * r;
    }
    s
}

#[inline]
pub fn norm_sq(g: &Mat, u: &Vector) -> f64 {
    inner(g, u, u)
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn sym_eigen(m: &Mat) -> (Vec<f64>, Mat) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), Mat::zeros(0, 0));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = Mat::zeros(n, n);
    for (c, &i) in order.iter().enumerate() {
        vecs.set_column(c, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    sym_eigen(m).0
}

/// Inverse of a symmetric positive definite matrix, or `None`.
pub fn spd_inverse(m: &Mat) -> Option<Mat> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Ratio of extreme eigenvalues of a symmetric positive semidefinite matrix.
pub fn condition_number(m: &Mat) -> f64 {
    let ev = sym_eigenvalues(m);
    match (ev.first(), ev.last()) {
        (Some(&lo), Some(&hi)) if lo > 0.0 => hi / lo,
        (Some(_), Some(_)) => f64::INFINITY,
        _ => 1.0,
    }
}

/// Modified Gram–Schmidt in the inner product `g`, with column pivoting:
/// at each step the remaining candidate of largest residual norm is taken.
///
/// Returns the orthonormal vectors together with the order in which the
/// candidates were used. Candidates with residual norm below `tol` are
/// dropped; at most `want` vectors are produced.
pub fn gram_schmidt_pivoted(
    g: &Mat,
    candidates: &[Vector],
    want: usize,
    tol: f64,
) -> (Vec<Vector>, Vec<usize>) {
    let mut work: Vec<Vector> = candidates.to_vec();
    let mut used = alloc::vec![false; work.len()];
    let mut out: Vec<Vector> = Vec::with_capacity(want);
    let mut order = Vec::with_capacity(want);
    while out.len() < want {
        let mut best = None;
        let mut best_norm = tol;
        for (i, w) in work.iter().enumerate() {
            if used[i] {
                continue;
            }
            let nn = libm::sqrt(norm_sq(g, w).max(0.0));
            if nn > best_norm {
                best_norm = nn;
                best = Some(i);
            }
        }
        let Some(k) = best else { break };
        used[k] = true;
        let e = &work[k] / best_norm;
        for (i, w) in work.iter_mut().enumerate() {
            if !used[i] {
                let c = inner(g, &e, w);
                *w -= &e * c;
            }
        }
        out.push(e);
        order.push(k);
    }
    (out, order)
}

/// Gram–Schmidt in a fixed order (no pivoting). Used to re-run a pivoted
/// construction at nearby points with the same pivot pattern.
pub fn gram_schmidt_ordered(g: &Mat, candidates: &[Vector], order: &[usize]) -> Vec<Vector> {
    let mut out: Vec<Vector> = Vec::with_capacity(order.len());
    for &k in order {
        let mut w = candidates[k].clone();
        for e in &out {
            let c = inner(g, e, &w);
            w -= e * c;
        }
        let nn = libm::sqrt(norm_sq(g, &w).max(0.0));
        out.push(w / nn);
    }
    out
}

/// Deterministic near-uniform points on the unit sphere `S^{n-1}`.
///
/// `n = 1` gives `±1`, `n = 2` equally spaced angles, `n = 3` a Fibonacci
/// lattice; higher dimensions use seeded Gaussian directions.
pub fn sphere_directions(n: usize, count: usize, seed: u64) -> Vec<Vector> {
    use core::f64::consts::PI;
    match n {
        0 => Vec::new(),
        1 => alloc::vec![Vector::from_element(1, 1.0), Vector::from_element(1, -1.0)],
        2 => (0..count)
            .map(|k| {
                let a = 2.0 * PI * k as f64 / count as f64;
                Vector::from_vec(alloc::vec![libm::cos(a), libm::sin(a)])
            })
            .collect(),
        3 => {
            let golden = PI * (3.0 - libm::sqrt(5.0));
            (0..count)
                .map(|k| {
                    let z = 1.0 - (2.0 * k as f64 + 1.0) / count as f64;
                    let r = libm::sqrt((1.0 - z * z).max(0.0));
                    let a = golden * k as f64;
                    Vector::from_vec(alloc::vec![r * libm::cos(a), r * libm::sin(a), z])
                })
                .collect()
        }
        _ => {
            use rand::SeedableRng;
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            (0..count).map(|_| random_unit(n, &mut rng)).collect()
        }
    }
}

/// Standard normal sample by Box–Muller.
pub fn gaussian<R: rand::Rng>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    libm::sqrt(-2.0 * libm::log(u1)) * libm::cos(2.0 * core::f64::consts::PI * u2)
}

pub fn random_unit<R: rand::Rng>(n: usize, rng: &mut R) -> Vector {
    loop {
        let v = Vector::from_fn(n, |_, _| gaussian(rng));
        let nn = v.norm();
        if nn > 1e-8 {
            return v / nn;
        }
    }
}

/// Random orthogonal matrix (QR of a Gaussian matrix with sign fix).
pub fn random_orthogonal<R: rand::Rng>(n: usize, rng: &mut R) -> Mat {
    let a = Mat::from_fn(n, n, |_, _| gaussian(rng));
    let qr = a.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            let col = -q.column(j);
            q.set_column(j, &col);
        }
    }
    q
}

/// Pairwise (tree) summation, independent of thread scheduling.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0f64, |a, &x| a.max(x.abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn pivoted_gram_schmidt_is_orthonormal() {
        let g = Mat::from_row_slice(3, 3, &[2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 3.0]);
        let c = [
            Vector::from_vec(alloc::vec![1.0, 0.0, 0.0]),
            Vector::from_vec(alloc::vec![1.0, 1e-3, 0.0]),
            Vector::from_vec(alloc::vec![0.0, 0.0, 1.0]),
        ];
        let (e, order) = gram_schmidt_pivoted(&g, &c, 3, 1e-10);
        assert_eq!(e.len(), 3);
        assert_eq!(order.len(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((inner(&g, &e[i], &e[j]) - want).abs() < 1e-12);
            }
        }
        let again = gram_schmidt_ordered(&g, &c, &order);
        for (a, b) in e.iter().zip(&again) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn eigen_sorted() {
        let m = Mat::from_row_slice(2, 2, &[3.0, 1.0, 1.0, 3.0]);
        let (v, _) = sym_eigen(&m);
        assert!((v[0] - 2.0).abs() < 1e-12 && (v[1] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn orthogonal_sample() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let q = random_orthogonal(4, &mut rng);
        assert!((q.transpose() * &q - Mat::identity(4, 4)).norm() < 1e-12);
    }

    #[test]
    fn sphere_points_are_unit() {
        for n in 1..6 {
            for v in sphere_directions(n, 64, 1) {
                assert!((v.norm() - 1.0).abs() < 1e-12);
            }
        }
    }
}
