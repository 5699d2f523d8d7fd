//! Deterministic generators shared by the verification suites, property
//! tests, and benches.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::channel::{sample_rayleigh, ChannelRealization, RisPhases, SystemDims};
use crate::numerics::CMat;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Matrix with i.i.d. CN(0, 1) entries.
pub fn random_cmat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> CMat {
    CMat::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    })
}

/// Random PSD matrix `B B^H` with `B` of shape `n x rank`.
pub fn random_psd(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
    let b = random_cmat(rng, n, rank);
    &b * b.adjoint()
}

/// Random PSD matrix rescaled to the given trace, usable as an input
/// covariance with a full power budget.
pub fn random_covariance(rng: &mut ChaCha8Rng, m: usize, trace: f64) -> CMat {
    let a = random_psd(rng, m, m);
    let t: f64 = (0..m).map(|i| a[(i, i)].re).sum();
    a.scale(trace / t)
}

/// Gaussian-elimination determinant with partial pivoting. Independent of
/// the eigensolver; verification oracle for the log-det kernel.
pub fn det_oracle(a: &CMat) -> Complex64 {
    let mut m = a.clone();
    let n = m.nrows();
    assert_eq!(n, m.ncols(), "determinant needs a square matrix");
    let mut det = Complex64::new(1.0, 0.0);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| {
                m[(i, col)]
                    .norm()
                    .partial_cmp(&m[(j, col)].norm())
                    .expect("finite entries")
            })
            .expect("non-empty range");
        if m[(pivot, col)].norm() == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        if pivot != col {
            m.swap_rows(pivot, col);
            det = -det;
        }
        det *= m[(col, col)];
        for row in col + 1..n {
            let f = m[(row, col)] / m[(col, col)];
            for k in col..n {
                let sub = f * m[(col, k)];
                m[(row, k)] -= sub;
            }
        }
    }
    det
}

/// `k x m` matrix with exactly orthogonal rows of equal norm, built from
/// the Q factor of a random complex matrix.
pub fn orthogonal_rows(rng: &mut ChaCha8Rng, k: usize, m: usize, row_norm: f64) -> CMat {
    assert!(k <= m, "cannot have more than {m} orthogonal rows");
    let a = random_cmat(rng, m, m);
    let q = nalgebra::linalg::QR::new(a).q();
    let mut rows = CMat::zeros(k, m);
    for i in 0..k {
        for j in 0..m {
            rows[(i, j)] = q[(j, i)].conj() * row_norm;
        }
    }
    rows
}

/// Seeded (channel, phases, covariance) triple for gradient and optimizer
/// tests.
pub fn random_instance(
    seed: u64,
    m: usize,
    k: usize,
    n: usize,
    direct_link: bool,
    pt: f64,
) -> (ChannelRealization, RisPhases, CMat) {
    let dims = SystemDims::new(m, k, n).expect("valid dims");
    let mut generator = rng(seed);
    let ch = sample_rayleigh(dims, direct_link, &mut generator);
    let phases = RisPhases::random(n, &mut generator);
    let rx = random_covariance(&mut generator, m, pt);
    (ch, phases, rx)
}
