//! Precoding vectors, water-filling power allocation, and input covariance
//! construction.
//!
//! User channels are the rows of the composite matrix `H`. MRT points each
//! precoder at the conjugate of the user's row; MMSE regularizes with the
//! per-user SNR. Power goes through exact breakpoint water-filling, and the
//! covariance is assembled as `Rx = sum_k p_k v_k v_k^H`. The two
//! non-user-targeted baselines (uniform power allocation and eigenmode
//! water-filling of `H`) live here as well.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};
use crate::numerics::{hermitian_eig, CMat, CVec, solve_hermitian};

/// Covariance construction scheme for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    /// Uniform power allocation: `Rx = (Pt / M) I`.
    Upa,
    /// Eigenmode water-filling of `H` (capacity-achieving for fixed `H`).
    Wf,
    /// Maximum ratio transmission with water-filling powers.
    MrtWf,
    /// MMSE precoding with water-filling powers.
    MmseWf,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Upa, Scheme::Wf, Scheme::MrtWf, Scheme::MmseWf];

    /// Whether the scheme produces per-user precoding vectors.
    pub fn is_user_precoded(self) -> bool {
        matches!(self, Scheme::MrtWf | Scheme::MmseWf)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Scheme::Upa => "upa",
            Scheme::Wf => "wf",
            Scheme::MrtWf => "mrt-wf",
            Scheme::MmseWf => "mmse-wf",
        };
        f.write_str(name)
    }
}

/// Per-user unit-norm precoding vectors with their allocated powers.
#[derive(Debug, Clone)]
pub struct PrecoderSet {
    /// K unit-norm vectors of length M.
    pub vectors: Vec<CVec>,
    /// K nonnegative powers, watts.
    pub powers: Vec<f64>,
    /// `gamma_k = p_k / sigma2`.
    pub gammas: Vec<f64>,
    /// Noise variance, watts.
    pub sigma2: f64,
}

impl PrecoderSet {
    pub fn new(vectors: Vec<CVec>, powers: Vec<f64>, sigma2: f64) -> Result<Self> {
        if vectors.len() != powers.len() {
            return Err(Error::DimensionMismatch {
                context: "precoder set",
                expected: format!("{} powers", vectors.len()),
                got: format!("{} powers", powers.len()),
            });
        }
        if sigma2 <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "sigma2",
                reason: format!("must be positive, got {sigma2}"),
            });
        }
        for (k, v) in vectors.iter().enumerate() {
            if (v.norm() - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidParameter {
                    name: "precoder norm",
                    reason: format!("vector {k} has norm {}", v.norm()),
                });
            }
        }
        if powers.iter().any(|&p| p < 0.0) {
            return Err(Error::InvalidParameter {
                name: "powers",
                reason: "negative power".into(),
            });
        }
        let gammas = powers.iter().map(|&p| p / sigma2).collect();
        Ok(Self {
            vectors,
            powers,
            gammas,
            sigma2,
        })
    }

    pub fn total_power(&self) -> f64 {
        self.powers.iter().sum()
    }
}

/// Transmit input covariance with its power budget.
#[derive(Debug, Clone)]
pub struct InputCovariance {
    /// `M x M`, Hermitian PSD, trace at most the budget.
    pub rx: CMat,
    /// Total power constraint `Pt`.
    pub trace_budget: f64,
}

impl InputCovariance {
    pub fn new(rx: CMat, trace_budget: f64) -> Result<Self> {
        let deviation = (&rx - rx.adjoint()).norm();
        if deviation > 1e-12 * rx.norm() {
            return Err(Error::NotHermitian {
                deviation,
                tolerance: 1e-12 * rx.norm(),
            });
        }
        let trace: f64 = (0..rx.nrows()).map(|i| rx[(i, i)].re).sum();
        if trace > trace_budget * (1.0 + 1e-9) {
            return Err(Error::InvalidParameter {
                name: "covariance trace",
                reason: format!("trace {trace} exceeds budget {trace_budget}"),
            });
        }
        let rx = (&rx + rx.adjoint()).scale(0.5);
        Ok(Self { rx, trace_budget })
    }

    pub fn trace(&self) -> f64 {
        (0..self.rx.nrows()).map(|i| self.rx[(i, i)].re).sum()
    }
}

/// MRT precoder for user `k`: `h_k^H / ||h_k||` with `h_k` the k-th row
/// of `H`.
pub fn mrt_precoder(h: &CMat, k: usize) -> Result<CVec> {
    if k >= h.nrows() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: h.nrows(),
        });
    }
    let row = h.row(k);
    let norm = row.norm();
    if norm <= 1e-300 {
        return Err(Error::Degenerate(format!("user {k} has a zero channel row")));
    }
    Ok(row.adjoint() / Complex64::new(norm, 0.0))
}

/// MMSE precoder for user `k`: the normalized solution of
/// `(H^H H + (1 / gamma_k) I) w = h_k^H`.
pub fn mmse_precoder(h: &CMat, k: usize, gamma_k: f64) -> Result<CVec> {
    if k >= h.nrows() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: h.nrows(),
        });
    }
    if gamma_k <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "gamma_k",
            reason: format!("must be positive, got {gamma_k}"),
        });
    }
    let m = h.ncols();
    let a = h.adjoint() * h + CMat::identity(m, m).scale(1.0 / gamma_k);
    let rhs: CVec = h.row(k).adjoint();
    let w = solve_hermitian(&a, &rhs)?;
    let norm = w.norm();
    if norm <= 1e-300 {
        return Err(Error::Degenerate(format!("user {k} has a zero channel row")));
    }
    Ok(w / Complex64::new(norm, 0.0))
}

/// Water-filling over per-user gains: `p_k = max(0, mu - sigma2 / g_k)`
/// with the water level `mu` fixed so the powers sum to `pt`.
///
/// Uses the exact active-set method: starting from all users with positive
/// gain, the largest inverse-gain floor is dropped until the level covers
/// every remaining floor. Zero-gain users receive zero power.
pub fn waterfill(gains: &[f64], pt: f64, sigma2: f64) -> Result<Vec<f64>> {
    if pt <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "pt",
            reason: format!("must be positive, got {pt}"),
        });
    }
    if sigma2 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive, got {sigma2}"),
        });
    }
    let mut active: Vec<usize> = (0..gains.len()).filter(|&i| gains[i] > 0.0).collect();
    if active.is_empty() {
        return Err(Error::Degenerate("all water-filling gains are zero".into()));
    }
    let floor = |i: usize| sigma2 / gains[i];
    loop {
        let sum_floors: f64 = active.iter().map(|&i| floor(i)).sum();
        let mu = (pt + sum_floors) / active.len() as f64;
        let (pos, &idx) = active
            .iter()
            .enumerate()
            .max_by(|a, b| floor(*a.1).partial_cmp(&floor(*b.1)).expect("finite floors"))
            .expect("active set is non-empty");
        if mu >= floor(idx) {
            break;
        }
        active.remove(pos);
    }
    // p_i = pt/m + mean_j (f_j - f_i): cancellation-resistant when the
    // floors cluster far above pt
    let m = active.len() as f64;
    let mut powers = vec![0.0; gains.len()];
    for &i in &active {
        let f_i = floor(i);
        let diff_sum: f64 = active.iter().map(|&j| floor(j) - f_i).sum();
        powers[i] = pt / m + diff_sum / m;
    }
    Ok(powers)
}

/// `Rx = sum_k p_k v_k v_k^H`.
pub fn assemble_covariance(pre: &PrecoderSet, trace_budget: f64) -> Result<InputCovariance> {
    let m = pre
        .vectors
        .first()
        .map(|v| v.len())
        .ok_or_else(|| Error::Degenerate("empty precoder set".into()))?;
    let mut rx = CMat::zeros(m, m);
    for (v, &p) in pre.vectors.iter().zip(&pre.powers) {
        rx += (v * v.adjoint()).scale(p);
    }
    InputCovariance::new(rx, trace_budget)
}

/// Uniform power allocation baseline: `Rx = (pt / m) I`.
pub fn upa_covariance(m: usize, pt: f64) -> InputCovariance {
    InputCovariance {
        rx: CMat::identity(m, m).scale(pt / m as f64),
        trace_budget: pt,
    }
}

/// Eigenmode water-filling baseline: water-fill the squared singular values
/// of `H` over the right singular vectors, the capacity-achieving
/// covariance for a fixed channel.
pub fn eigen_waterfill_covariance(h: &CMat, pt: f64, sigma2: f64) -> Result<InputCovariance> {
    if h.norm() <= 1e-300 {
        return Err(Error::Degenerate("zero channel matrix".into()));
    }
    let gram = h.adjoint() * h; // M x M, eigenvalues are squared singular values
    let eig = hermitian_eig(&gram)?;
    let powers = waterfill(&eig.eigenvalues, pt, sigma2)?;
    let m = gram.nrows();
    let mut rx = CMat::zeros(m, m);
    for (i, &p) in powers.iter().enumerate() {
        if p > 0.0 {
            let v = eig.eigenvectors.column(i);
            rx += (v * v.adjoint()).scale(p);
        }
    }
    InputCovariance::new(rx, pt)
}

/// One pass of the per-iteration covariance construction: powers first
/// (water-filling, or `pt / K` on the first pass when no previous precoders
/// exist), then precoding vectors with `gamma_k` from those powers, then
/// the assembled covariance.
///
/// `prev` carries the precoders of the previous outer iteration; only MMSE
/// gains depend on them. UPA and eigenmode WF ignore `prev` entirely.
pub fn scheme_covariance(
    scheme: Scheme,
    h: &CMat,
    prev: Option<&PrecoderSet>,
    pt: f64,
    sigma2: f64,
) -> Result<(Option<PrecoderSet>, InputCovariance)> {
    let k_count = h.nrows();
    match scheme {
        Scheme::Upa => Ok((None, upa_covariance(h.ncols(), pt))),
        Scheme::Wf => Ok((None, eigen_waterfill_covariance(h, pt, sigma2)?)),
        Scheme::MrtWf | Scheme::MmseWf => {
            let powers = match prev {
                None => vec![pt / k_count as f64; k_count],
                Some(ps) => {
                    let gains: Vec<f64> = (0..k_count)
                        .map(|k| match scheme {
                            Scheme::MrtWf => h.row(k).norm().powi(2),
                            Scheme::MmseWf => {
                                let hv = h.row(k) * &ps.vectors[k];
                                hv[(0, 0)].norm_sqr()
                            }
                            _ => unreachable!(),
                        })
                        .collect();
                    waterfill(&gains, pt, sigma2)?
                }
            };
            let vectors: Vec<CVec> = (0..k_count)
                .map(|k| {
                    let gamma_k = powers[k] / sigma2;
                    match scheme {
                        Scheme::MrtWf => mrt_precoder(h, k),
                        // gamma -> 0 limit of MMSE is the MRT direction;
                        // users water-filled to zero power land here
                        Scheme::MmseWf if gamma_k <= 0.0 => mrt_precoder(h, k),
                        Scheme::MmseWf => mmse_precoder(h, k, gamma_k),
                        _ => unreachable!(),
                    }
                })
                .collect::<Result<_>>()?;
            let pre = PrecoderSet::new(vectors, powers, sigma2)?;
            let cov = assemble_covariance(&pre, pt)?;
            Ok((Some(pre), cov))
        }
    }
}

/// Covariance for a fixed channel (no phase optimization): iterates the
/// power/precoder pass to a fixpoint of the power vector.
pub fn fixed_phase_covariance(
    scheme: Scheme,
    h: &CMat,
    pt: f64,
    sigma2: f64,
) -> Result<(Option<PrecoderSet>, InputCovariance)> {
    let (mut pre, mut cov) = scheme_covariance(scheme, h, None, pt, sigma2)?;
    if !scheme.is_user_precoded() {
        return Ok((pre, cov));
    }
    for _ in 0..20 {
        let (next_pre, next_cov) = scheme_covariance(scheme, h, pre.as_ref(), pt, sigma2)?;
        let drift: f64 = next_pre
            .as_ref()
            .expect("user-precoded scheme")
            .powers
            .iter()
            .zip(&pre.as_ref().expect("user-precoded scheme").powers)
            .map(|(a, b)| (a - b).abs())
            .sum();
        pre = next_pre;
        cov = next_cov;
        if drift <= 1e-9 * pt {
            break;
        }
    }
    Ok((pre, cov))
}
