//! Planted conic programs with known optimal values.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use reach_sos::sdp::{mat_to_svec, svec_len, Cone, ConicProgram, SparseMatrix};

pub fn random_orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    m.qr().q()
}

/// Complementary pair `(X, S)` with `XS = 0` and random ranks.
pub fn complementary_psd(k: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let q = random_orthogonal(k, rng);
    let split = rng.random_range(0..=k);
    let dx = DMatrix::from_fn(k, k, |i, j| {
        if i == j && i < split {
            rng.random_range(0.5..2.0)
        } else {
            0.0
        }
    });
    let ds = DMatrix::from_fn(k, k, |i, j| {
        if i == j && i >= split {
            rng.random_range(0.5..2.0)
        } else {
            0.0
        }
    });
    (&q * dx * q.transpose(), &q * ds * q.transpose())
}

pub struct Planted {
    pub program: ConicProgram<f64>,
    pub optimum: f64,
}

/// Standard-form program with known optimal pair.
pub fn planted_standard(seed: u64) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cones = vec![
        Cone::Free(rng.random_range(0..3)),
        Cone::Nonneg(rng.random_range(1..5)),
        Cone::Psd(rng.random_range(1..5)),
        Cone::Psd(rng.random_range(2..4)),
    ];
    let mut x = Vec::new();
    let mut s = Vec::new();
    for cone in &cones {
        match *cone {
            Cone::Free(n) => {
                x.extend((0..n).map(|_| rng.random_range(-1.0..1.0)));
                s.extend(std::iter::repeat_n(0.0, n));
            }
            Cone::Nonneg(n) => {
                for _ in 0..n {
                    if rng.random_bool(0.5) {
                        x.push(rng.random_range(0.5..2.0));
                        s.push(0.0);
                    } else {
                        x.push(0.0);
                        s.push(rng.random_range(0.5..2.0));
                    }
                }
            }
            Cone::Psd(k) => {
                let (xm, sm) = complementary_psd(k, &mut rng);
                x.extend(mat_to_svec(&xm));
                s.extend(mat_to_svec(&sm));
            }
        }
    }
    let n = x.len();
    let m = rng.random_range(n / 3 + 1..n.max(n / 3 + 2));
    let mut trip = Vec::new();
    for i in 0..m {
        for j in 0..n {
            if rng.random_bool(0.6) {
                trip.push((i, j, rng.random_range(-1.0..1.0)));
            }
        }
    }
    // free columns need a row to keep the program bounded
    for cone_off in 0..cones[0].dim() {
        trip.push((cone_off % m, cone_off, 1.0));
    }
    let a = SparseMatrix::from_triplets(m, n, trip);
    let y: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let b = a.mul_vec(&x);
    let aty = a.tr_mul_vec(&y);
    let c: Vec<f64> = aty.iter().zip(&s).map(|(a, s)| a + s).collect();
    let optimum = c.iter().zip(&x).map(|(a, b)| a * b).sum();
    Planted {
        program: ConicProgram::new(c, a, b, cones).unwrap(),
        optimum,
    }
}

/// `min cᵀt  s.t.  F₀ + Σ tᵢ Fᵢ ⪰ 0` written with a linked slack block.
pub fn planted_lmi(seed: u64, k: usize, nt: usize) -> Planted {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (xs, zs) = complementary_psd(k, &mut rng);
    let t: Vec<f64> = (0..nt).map(|_| rng.random_range(-1.0..1.0)).collect();
    let fs: Vec<DMatrix<f64>> = (0..nt)
        .map(|_| {
            let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
            &m + m.transpose()
        })
        .collect();
    let mut f0 = xs.clone();
    for (ti, fi) in t.iter().zip(&fs) {
        f0 -= fi * *ti;
    }
    let d = svec_len(k);
    let mut trip = Vec::new();
    for (i, fi) in fs.iter().enumerate() {
        for (r, v) in mat_to_svec(fi).into_iter().enumerate() {
            trip.push((r, i, -v));
        }
    }
    for r in 0..d {
        trip.push((r, nt + r, 1.0));
    }
    let a = SparseMatrix::from_triplets(d, nt + d, trip);
    let mut c: Vec<f64> = fs.iter().map(|fi| fi.component_mul(&zs).sum()).collect();
    c.extend(std::iter::repeat_n(0.0, d));
    let optimum = c.iter().zip(&t).map(|(a, b)| a * b).sum();
    Planted {
        program: ConicProgram::new(c, a, mat_to_svec(&f0), vec![Cone::Free(nt), Cone::Psd(k)])
            .unwrap(),
        optimum,
    }
}
