#![allow(dead_code)]

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rckl::kernels::{linear_kernel, unit_trace_normalize};
use rckl::{AuxKernelBank, KernelMatrix, Triplet, TripletSet};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Cyclic Jacobi rotations; returns eigenvalues and eigenvectors (columns).
pub fn jacobi_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = DMatrix::identity(n, n);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[(p, q)].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * a[(p, q)]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let mut rot = DMatrix::identity(n, n);
                rot[(p, p)] = c;
                rot[(q, q)] = c;
                rot[(p, q)] = s;
                rot[(q, p)] = -s;
                a = rot.transpose() * &a * &rot;
                v = &v * &rot;
            }
        }
    }
    ((0..n).map(|i| a[(i, i)]).collect(), v)
}

/// Nearest PSD matrix by clipping Jacobi eigenvalues at zero.
pub fn clip_oracle(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (vals, vecs) = jacobi_eigen(m);
    let clipped = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        vals.len(),
        vals.iter().map(|v| v.max(0.0)),
    ));
    &vecs * clipped * vecs.transpose()
}

pub fn random_symmetric(n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    (&m + m.transpose()) * 0.5
}

pub fn random_psd(n: usize, rank: usize, scale: f64, rng: &mut ChaCha8Rng) -> KernelMatrix {
    let b = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-scale..scale));
    KernelMatrix::new(&b * b.transpose()).unwrap()
}

pub fn random_bank(n: usize, a: usize, rng: &mut ChaCha8Rng) -> AuxKernelBank {
    let kernels = (0..a)
        .map(|_| {
            let f = DMatrix::from_fn(n, 2, |_, _| rng.random_range(0.0..1.0));
            unit_trace_normalize(&linear_kernel(&f)).unwrap()
        })
        .collect();
    let weights = (0..a).map(|_| rng.random_range(0.0..3.0)).collect();
    AuxKernelBank::new(n, kernels, weights).unwrap()
}

pub fn random_triplets(n: usize, count: usize, rng: &mut ChaCha8Rng) -> TripletSet {
    let mut set = TripletSet::new(n);
    let mut attempts = 0;
    while set.len() < count && attempts < 100 * count {
        attempts += 1;
        let (a, b, c) = (
            rng.random_range(0..n),
            rng.random_range(0..n),
            rng.random_range(0..n),
        );
        if let Ok(t) = Triplet::new(a, b, c) {
            set.insert(t).unwrap();
        }
    }
    set
}

/// All `n (n-1) (n-2)` ordered triplets (both answers to every question).
pub fn all_triplets(n: usize) -> Vec<Triplet> {
    let mut out = Vec::new();
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                if let Ok(t) = Triplet::new(a, b, c) {
                    out.push(t);
                }
            }
        }
    }
    out
}
