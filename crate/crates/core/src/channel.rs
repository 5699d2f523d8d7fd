//! Channel realizations and the composite RIS-assisted channel.
//!
//! A realization holds the three matrices of the downlink geometry: `H1`
//! (BS to RIS), `H2` (RIS to users, one row per user) and the direct link
//! `G` (BS to users, all-zero when the direct link is disabled). The
//! composite channel is `H = G + H2 * diag(exp(j theta)) * H1`, and its
//! derivative with respect to each phase is available in closed form.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{check_finite, CMat};

/// Antenna/user/element counts of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemDims {
    /// BS antenna count.
    pub m: usize,
    /// User count.
    pub k: usize,
    /// RIS element count.
    pub n: usize,
}

impl SystemDims {
    pub fn new(m: usize, k: usize, n: usize) -> Result<Self> {
        if m == 0 || k == 0 || n == 0 {
            return Err(Error::InvalidParameter {
                name: "dims",
                reason: format!("all counts must be >= 1, got M={m}, K={k}, N={n}"),
            });
        }
        Ok(Self { m, k, n })
    }
}

/// One draw of the channel matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub dims: SystemDims,
    /// `N x M`, BS to RIS.
    pub h1: CMat,
    /// `K x N`, RIS to users; row `k` is user `k`'s channel.
    pub h2: CMat,
    /// `K x M` direct link; all-zero when the direct link is off.
    pub g: CMat,
}

impl ChannelRealization {
    pub fn new(dims: SystemDims, h1: CMat, h2: CMat, g: CMat) -> Result<Self> {
        let expect = |context, want: (usize, usize), m: &CMat| -> Result<()> {
            if m.shape() != want {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: format!("{}x{}", want.0, want.1),
                    got: format!("{}x{}", m.nrows(), m.ncols()),
                });
            }
            check_finite(m)
        };
        expect("H1", (dims.n, dims.m), &h1)?;
        expect("H2", (dims.k, dims.n), &h2)?;
        expect("G", (dims.k, dims.m), &g)?;
        Ok(Self { dims, h1, h2, g })
    }
}

/// RIS phase vector in radians.
///
/// Values are stored unwrapped so that gradient updates never see a
/// discontinuity at the wrap point; [`RisPhases::wrapped`] canonicalizes
/// into `[0, 2*pi)` at I/O boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RisPhases {
    pub theta: Vec<f64>,
}

impl RisPhases {
    pub fn from_radians(theta: Vec<f64>) -> Self {
        Self { theta }
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            theta: vec![0.0; n],
        }
    }

    /// Uniform random phases in `[0, 2*pi)`.
    pub fn random(n: usize, rng: &mut impl Rng) -> Self {
        Self {
            theta: (0..n).map(|_| rng.random::<f64>() * 2.0 * PI).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    /// Canonical representative with every entry wrapped into `[0, 2*pi)`.
    pub fn wrapped(&self) -> Self {
        Self {
            theta: self
                .theta
                .iter()
                .map(|t| t.rem_euclid(2.0 * PI))
                .collect(),
        }
    }
}

/// Seeded generator for one realization: ChaCha8 keyed by
/// `child_seed(master_seed, realization)`. Every consumer of realization
/// `r` draws from this stream, in a documented order, so results do not
/// depend on execution schedule.
pub fn realization_rng(master_seed: u64, realization: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(child_seed(master_seed, realization))
}

/// Child seed for realization `r`, mixed from the master seed with a
/// splitmix64 finalizer so parallel and serial sweeps consume identical
/// per-realization streams.
pub fn child_seed(master_seed: u64, realization: u64) -> u64 {
    let mut z = master_seed ^ realization.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// Entries are drawn row-major per matrix, H1 then H2 then G; the direct-link
// flag must not shift the stream consumed by H1/H2, so G is zeroed without
// touching the generator.
fn sample_cn01(rng: &mut impl Rng, rows: usize, cols: usize) -> CMat {
    let mut m = CMat::zeros(rows, cols);
    for r in 0..rows {
        for c in 0..cols {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            m[(r, c)] = Complex64::new(re / SQRT_2, im / SQRT_2);
        }
    }
    m
}

/// Draws an i.i.d. CN(0, 1) Rayleigh realization (real and imaginary parts
/// each of variance 1/2). `G` is all-zero when `direct_link` is false.
pub fn sample_rayleigh(
    dims: SystemDims,
    direct_link: bool,
    rng: &mut impl Rng,
) -> ChannelRealization {
    let h1 = sample_cn01(rng, dims.n, dims.m);
    let h2 = sample_cn01(rng, dims.k, dims.n);
    let g = if direct_link {
        sample_cn01(rng, dims.k, dims.m)
    } else {
        CMat::zeros(dims.k, dims.m)
    };
    ChannelRealization { dims, h1, h2, g }
}

fn check_phase_len(ch: &ChannelRealization, phases: &RisPhases) -> Result<()> {
    if phases.len() != ch.dims.n {
        return Err(Error::DimensionMismatch {
            context: "ris phases",
            expected: format!("{} phases", ch.dims.n),
            got: format!("{} phases", phases.len()),
        });
    }
    Ok(())
}

/// Composite channel `H = G + H2 * diag(exp(j theta)) * H1`, a `K x M` matrix.
pub fn composite_channel(ch: &ChannelRealization, phases: &RisPhases) -> Result<CMat> {
    check_phase_len(ch, phases)?;
    let mut h2_phi = ch.h2.clone();
    for (idx, &t) in phases.theta.iter().enumerate() {
        let p = Complex64::from_polar(1.0, t);
        for r in 0..ch.dims.k {
            h2_phi[(r, idx)] *= p;
        }
    }
    Ok(&ch.g + h2_phi * &ch.h1)
}

/// Analytic derivative `dH / d theta_n`: the rank-1 matrix
/// `exp(j (theta_n + pi/2)) * H2[:, n] * H1[n, :]`.
pub fn channel_phase_derivative(
    ch: &ChannelRealization,
    phases: &RisPhases,
    n: usize,
) -> Result<CMat> {
    check_phase_len(ch, phases)?;
    if n >= ch.dims.n {
        return Err(Error::IndexOutOfRange {
            index: n,
            len: ch.dims.n,
        });
    }
    let s = Complex64::from_polar(1.0, phases.theta[n] + FRAC_PI_2);
    let col = ch.h2.column(n);
    let row = ch.h1.row(n);
    Ok((col * row) * s)
}

// ---------------------------------------------------------------------------
// JSON dump/load
// ---------------------------------------------------------------------------

/// Seed bookkeeping carried alongside a dumped channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedProvenance {
    pub master_seed: u64,
    pub realization: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelJson {
    dims: SystemDims,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    seed: Option<SeedProvenance>,
    h1: Vec<Vec<[f64; 2]>>,
    h2: Vec<Vec<[f64; 2]>>,
    g: Vec<Vec<[f64; 2]>>,
}

fn mat_to_rows(m: &CMat) -> Vec<Vec<[f64; 2]>> {
    (0..m.nrows())
        .map(|r| (0..m.ncols()).map(|c| [m[(r, c)].re, m[(r, c)].im]).collect())
        .collect()
}

fn rows_to_mat(rows: &[Vec<[f64; 2]>], shape: (usize, usize)) -> Result<CMat> {
    if rows.len() != shape.0 || rows.iter().any(|r| r.len() != shape.1) {
        return Err(Error::InvalidJson(format!(
            "matrix shape mismatch: expected {}x{}",
            shape.0, shape.1
        )));
    }
    Ok(CMat::from_fn(shape.0, shape.1, |r, c| {
        Complex64::new(rows[r][c][0], rows[r][c][1])
    }))
}

impl ChannelRealization {
    /// Serializes to JSON with each matrix as row-major `[re, im]` pairs.
    /// Round-trips bit-exactly for finite doubles.
    pub fn to_json(&self, seed: Option<SeedProvenance>) -> String {
        let dump = ChannelJson {
            dims: self.dims,
            seed,
            h1: mat_to_rows(&self.h1),
            h2: mat_to_rows(&self.h2),
            g: mat_to_rows(&self.g),
        };
        serde_json::to_string_pretty(&dump).expect("channel dump is serializable")
    }

    pub fn from_json(text: &str) -> Result<(Self, Option<SeedProvenance>)> {
        let dump: ChannelJson =
            serde_json::from_str(text).map_err(|e| Error::InvalidJson(e.to_string()))?;
        let dims = SystemDims::new(dump.dims.m, dump.dims.k, dump.dims.n)?;
        let ch = ChannelRealization::new(
            dims,
            rows_to_mat(&dump.h1, (dims.n, dims.m))?,
            rows_to_mat(&dump.h2, (dims.k, dims.n))?,
            rows_to_mat(&dump.g, (dims.k, dims.m))?,
        )?;
        Ok((ch, dump.seed))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn dims(m: usize, k: usize, n: usize) -> SystemDims {
        SystemDims::new(m, k, n).unwrap()
    }

    fn sample(seed: u64, d: SystemDims, direct: bool) -> ChannelRealization {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        sample_rayleigh(d, direct, &mut rng)
    }

    #[test]
    fn dims_and_direct_link_off() {
        let ch = sample(1, dims(4, 3, 8), false);
        assert_eq!(ch.h1.shape(), (8, 4));
        assert_eq!(ch.h2.shape(), (3, 8));
        assert_eq!(ch.g.shape(), (3, 4));
        assert!(ch.g.iter().all(|z| z.re == 0.0 && z.im == 0.0));
    }

    #[test]
    fn same_seed_is_bit_identical() {
        let a = sample(42, dims(4, 3, 8), true);
        let b = sample(42, dims(4, 3, 8), true);
        assert_eq!(a, b);
    }

    #[test]
    fn unit_variance_moment() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = sample_cn01(&mut rng, 250, 400); // 1e5 entries
        let mean_sq: f64 = m.iter().map(|z| z.norm_sqr()).sum::<f64>() / 1e5;
        assert!((mean_sq - 1.0).abs() < 0.02, "mean |entry|^2 = {mean_sq}");
    }

    #[test]
    fn zero_phases_reduce_to_plain_product() {
        let ch = sample(5, dims(3, 2, 4), true);
        let h = composite_channel(&ch, &RisPhases::zeros(4)).unwrap();
        let expected = &ch.g + &ch.h2 * &ch.h1;
        assert!((h - expected).norm() < 1e-14);
    }

    #[test]
    fn scalar_case() {
        let d = dims(1, 1, 1);
        let h1 = CMat::from_element(1, 1, c(0.8, -0.4));
        let h2 = CMat::from_element(1, 1, c(-0.3, 1.1));
        let g = CMat::zeros(1, 1);
        let ch = ChannelRealization::new(d, h1.clone(), h2.clone(), g).unwrap();
        let theta = 1.234;
        let h = composite_channel(&ch, &RisPhases::from_radians(vec![theta])).unwrap();
        let expected = h2[(0, 0)] * Complex64::from_polar(1.0, theta) * h1[(0, 0)];
        assert!((h[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn composite_matches_triple_loop() {
        let d = dims(4, 3, 5);
        let ch = sample(7, d, true);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let phases = RisPhases::random(5, &mut rng);
        let h = composite_channel(&ch, &phases).unwrap();
        for row in 0..d.k {
            for col in 0..d.m {
                let mut acc = ch.g[(row, col)];
                for e in 0..d.n {
                    acc += ch.h2[(row, e)]
                        * Complex64::from_polar(1.0, phases.theta[e])
                        * ch.h1[(e, col)];
                }
                assert!((h[(row, col)] - acc).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn derivative_scalar_case() {
        let d = dims(1, 1, 1);
        let h1 = CMat::from_element(1, 1, c(0.5, 0.2));
        let h2 = CMat::from_element(1, 1, c(-1.0, 0.3));
        let ch = ChannelRealization::new(d, h1.clone(), h2.clone(), CMat::zeros(1, 1)).unwrap();
        let theta = 0.7;
        let deriv =
            channel_phase_derivative(&ch, &RisPhases::from_radians(vec![theta]), 0).unwrap();
        let expected = Complex64::i() * Complex64::from_polar(1.0, theta) * h2[(0, 0)] * h1[(0, 0)];
        assert!((deriv[(0, 0)] - expected).norm() < 1e-15);
    }

    #[test]
    fn derivative_is_rank_one() {
        let ch = sample(9, dims(4, 3, 6), true);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let phases = RisPhases::random(6, &mut rng);
        for n in 0..6 {
            let deriv = channel_phase_derivative(&ch, &phases, n).unwrap();
            // all 2x2 minors vanish for a rank-1 matrix
            for r0 in 0..2 {
                for r1 in (r0 + 1)..3 {
                    for c0 in 0..3 {
                        for c1 in (c0 + 1)..4 {
                            let minor = deriv[(r0, c0)] * deriv[(r1, c1)]
                                - deriv[(r0, c1)] * deriv[(r1, c0)];
                            assert!(minor.norm() < 1e-12);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let d = dims(4, 3, 8);
        let eps = 1e-6;
        for seed in 0..20u64 {
            let ch = sample(100 + seed, d, seed % 2 == 0);
            let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
            let phases = RisPhases::random(8, &mut rng);
            for n in 0..8 {
                let analytic = channel_phase_derivative(&ch, &phases, n).unwrap();
                let mut plus = phases.clone();
                plus.theta[n] += eps;
                let mut minus = phases.clone();
                minus.theta[n] -= eps;
                let fd = (composite_channel(&ch, &plus).unwrap()
                    - composite_channel(&ch, &minus).unwrap())
                    / Complex64::new(2.0 * eps, 0.0);
                let err = (analytic - fd).iter().map(|z| z.norm()).fold(0.0, f64::max);
                assert!(err < 1e-8, "seed {seed} n {n}: entrywise error {err}");
            }
        }
    }

    #[test]
    fn wrap_by_two_pi_is_invisible() {
        let ch = sample(11, dims(3, 2, 5), true);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let phases = RisPhases::random(5, &mut rng);
        let h = composite_channel(&ch, &phases).unwrap();
        for n in 0..5 {
            let mut shifted = phases.clone();
            shifted.theta[n] += 2.0 * PI;
            let h_shift = composite_channel(&ch, &shifted).unwrap();
            assert!((&h - h_shift).norm() < 1e-12 * h.norm());
        }
    }

    #[test]
    fn global_phase_offset_preserves_det_when_k_equals_n() {
        // with G = 0, theta -> theta + c scales H by a unit phase
        let d = dims(2, 2, 2);
        let ch = sample(13, d, false);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let phases = RisPhases::random(2, &mut rng);
        let det_mag = |p: &RisPhases| {
            let h = composite_channel(&ch, p).unwrap();
            let hh = &h * h.adjoint();
            (hh[(0, 0)] * hh[(1, 1)] - hh[(0, 1)] * hh[(1, 0)]).norm()
        };
        let base = det_mag(&phases);
        let shifted = RisPhases::from_radians(phases.theta.iter().map(|t| t + 0.83).collect());
        assert!((det_mag(&shifted) - base).abs() < 1e-9 * base.max(1.0));
    }

    #[test]
    fn wrapped_is_canonical() {
        let p = RisPhases::from_radians(vec![-0.5, 7.0, 2.0 * PI]);
        let w = p.wrapped();
        assert!(w.theta.iter().all(|&t| (0.0..2.0 * PI).contains(&t)));
        assert!((w.theta[0] - (2.0 * PI - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let ch = sample(15, dims(3, 2, 4), true);
        let seed = Some(SeedProvenance {
            master_seed: 15,
            realization: 0,
        });
        let text = ch.to_json(seed);
        let (back, seed_back) = ChannelRealization::from_json(&text).unwrap();
        assert_eq!(ch, back);
        assert_eq!(seed, seed_back);
    }

    #[test]
    fn json_rejects_unknown_fields() {
        let err = ChannelRealization::from_json(r#"{"dims":{"m":1,"k":1,"n":1},"bogus":1}"#);
        assert!(matches!(err, Err(Error::InvalidJson(_))));
    }

    #[test]
    fn derivative_index_out_of_range() {
        let ch = sample(16, dims(2, 2, 3), false);
        let phases = RisPhases::zeros(3);
        assert!(matches!(
            channel_phase_derivative(&ch, &phases, 3),
            Err(Error::IndexOutOfRange { index: 3, len: 3 })
        ));
    }

    #[test]
    fn child_seed_is_stable_and_spread() {
        assert_eq!(child_seed(1, 0), child_seed(1, 0));
        assert_ne!(child_seed(1, 0), child_seed(1, 1));
        assert_ne!(child_seed(1, 0), child_seed(2, 0));
    }
}
