//! Capacity and SINR metrics plus the seeded Monte-Carlo sweep harness.
//!
//! A sweep runs every (sweep value, scheme) pair over `realizations`
//! independent channels. Realization `r` always draws from the child seed
//! of `(master_seed, r)`, so runs are paired across sweep values and
//! schemes, and parallel execution cannot change any result: per-realization
//! outputs are collected in realization order and reduced sequentially.
//!
//! In `optimized` mode the RIS phases of a realization are selected once by
//! maximizing the effective rank of the composite channel (the uniform
//! covariance makes the objective scale-invariant in the power budget), and
//! every scheme then builds its covariance on the shaped channel. Sharing
//! the phases across schemes isolates the precoder comparison: as the
//! element count grows the shaped channel approaches orthogonal
//! equal-norm rows, where the MRT and MMSE covariances coincide and their
//! capacity gap collapses.

use serde::{Deserialize, Serialize};
use std::fmt;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::channel::{composite_channel, realization_rng, sample_rayleigh, RisPhases, SystemDims};
use crate::effective_rank::effective_rank_at;
use crate::error::{Error, Result};
use crate::numerics::{logdet2_plus_identity, CMat};
use crate::optimizer::{alternate, OptimizerConfig};
use crate::precoding::{fixed_phase_covariance, InputCovariance, PrecoderSet, Scheme};

/// Capacity `log2 |I + (1 / sigma2) H Rx H^H|` in bits/s/Hz.
pub fn capacity(h: &CMat, rx: &InputCovariance, sigma2: f64) -> Result<f64> {
    if sigma2 <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "sigma2",
            reason: format!("must be positive, got {sigma2}"),
        });
    }
    if rx.rx.nrows() != h.ncols() {
        return Err(Error::DimensionMismatch {
            context: "capacity",
            expected: format!("{0}x{0} covariance", h.ncols()),
            got: format!("{}x{}", rx.rx.nrows(), rx.rx.ncols()),
        });
    }
    let a = (h * &rx.rx * h.adjoint()).scale(1.0 / sigma2);
    logdet2_plus_identity(&a)
}

/// SINR of user `k`:
/// `p_k |h_k v_k|^2 / (sum_{j != k} p_j |h_k v_j|^2 + sigma2)`.
pub fn user_sinr(h: &CMat, pre: &PrecoderSet, k: usize) -> Result<f64> {
    if k >= h.nrows() || k >= pre.vectors.len() {
        return Err(Error::IndexOutOfRange {
            index: k,
            len: h.nrows().min(pre.vectors.len()),
        });
    }
    let row = h.row(k);
    let mut interference = 0.0;
    let mut signal = 0.0;
    for (j, (v, &p)) in pre.vectors.iter().zip(&pre.powers).enumerate() {
        let coupling = (row * v)[(0, 0)].norm_sqr();
        if j == k {
            signal = p * coupling;
        } else {
            interference += p * coupling;
        }
    }
    Ok(signal / (interference + pre.sigma2))
}

/// `sum_k log2(1 + sinr_k)`.
pub fn sum_rate(sinrs: &[f64]) -> f64 {
    sinrs.iter().map(|&s| (1.0 + s).log2()).sum()
}

/// How the RIS phases are chosen for each realization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RisMode {
    /// Alternating effective-rank optimization.
    Optimized,
    /// Uniform random phases, no optimization.
    Random,
    /// All-zero phases (`Phi = I`).
    Identity,
}

/// Variable swept by a Monte-Carlo run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SweepVariable {
    #[serde(rename = "snr_db")]
    SnrDb,
    #[serde(rename = "n")]
    RisElements,
    #[serde(rename = "m")]
    TxAntennas,
}

impl fmt::Display for SweepVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVariable::SnrDb => "snr_db",
            SweepVariable::RisElements => "n",
            SweepVariable::TxAntennas => "m",
        })
    }
}

/// Swept variable and its value list (strictly ascending).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
}

/// Complete description of one Monte-Carlo run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    pub dims: SystemDims,
    pub pt_watts: f64,
    pub sigma2_watts: f64,
    pub schemes: Vec<Scheme>,
    pub realizations: usize,
    pub master_seed: u64,
    pub sweep: SweepSpec,
    pub optimizer: OptimizerConfig,
    pub ris_mode: RisMode,
    pub direct_link: bool,
}

impl SimulationConfig {
    /// Defaults of the numerical study: M=4, K=3, N=8, sigma2=1, Pt=10 W,
    /// 1000 realizations, all four schemes, optimized phases, no direct
    /// link.
    pub fn defaults() -> Self {
        Self {
            dims: SystemDims { m: 4, k: 3, n: 8 },
            pt_watts: 10.0,
            sigma2_watts: 1.0,
            schemes: Scheme::ALL.to_vec(),
            realizations: 1000,
            master_seed: 1,
            sweep: SweepSpec {
                variable: SweepVariable::SnrDb,
                values: vec![0.0, 5.0, 10.0, 15.0, 20.0],
            },
            optimizer: OptimizerConfig::default(),
            ris_mode: RisMode::Optimized,
            direct_link: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        SystemDims::new(self.dims.m, self.dims.k, self.dims.n)?;
        if self.pt_watts <= 0.0 || self.sigma2_watts <= 0.0 {
            return Err(Error::InvalidConfig(
                "pt_watts and sigma2_watts must be positive".into(),
            ));
        }
        if self.schemes.is_empty() {
            return Err(Error::InvalidConfig("scheme set is empty".into()));
        }
        let mut seen = Vec::new();
        for s in &self.schemes {
            if seen.contains(s) {
                return Err(Error::InvalidConfig(format!("duplicate scheme {s}")));
            }
            seen.push(*s);
        }
        if self.realizations < 1 {
            return Err(Error::InvalidConfig("realizations must be >= 1".into()));
        }
        if self.sweep.values.is_empty() {
            return Err(Error::InvalidConfig("sweep value list is empty".into()));
        }
        if self.sweep.values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidConfig(
                "sweep values must be strictly ascending".into(),
            ));
        }
        match self.sweep.variable {
            SweepVariable::SnrDb => {
                if self.sweep.values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::InvalidConfig("SNR values must be finite".into()));
                }
            }
            SweepVariable::RisElements | SweepVariable::TxAntennas => {
                if self
                    .sweep
                    .values
                    .iter()
                    .any(|&v| v < 1.0 || v.fract() != 0.0)
                {
                    return Err(Error::InvalidConfig(
                        "element/antenna sweep values must be positive integers".into(),
                    ));
                }
            }
        }
        self.optimizer.validate()
    }

    /// Dimensions and transmit power at one sweep point. SNR (dB) scales
    /// `Pt = sigma2 * 10^(snr/10)`; N and M replace the respective count.
    fn operating_point(&self, value: f64) -> (SystemDims, f64) {
        match self.sweep.variable {
            SweepVariable::SnrDb => (
                self.dims,
                self.sigma2_watts * 10f64.powf(value / 10.0),
            ),
            SweepVariable::RisElements => (
                SystemDims {
                    n: value as usize,
                    ..self.dims
                },
                self.pt_watts,
            ),
            SweepVariable::TxAntennas => (
                SystemDims {
                    m: value as usize,
                    ..self.dims
                },
                self.pt_watts,
            ),
        }
    }
}

/// Aggregated metrics for one (sweep value, scheme) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRecord {
    pub sweep_var: SweepVariable,
    pub sweep_value: f64,
    pub scheme: Scheme,
    /// Mean spectral efficiency (log-det capacity), bits/s/Hz.
    pub mean_se: f64,
    /// Normal-approximation 95% confidence half-width of the mean SE.
    pub ci95: f64,
    pub mean_effrank: f64,
    /// Mean `|C_MRT - C_MMSE|`; present when both schemes ran.
    pub mean_gap: Option<f64>,
    /// Mean SINR-based sum rate; present for user-precoded schemes.
    pub mean_sum_rate: Option<f64>,
    /// Realizations contributing to the means.
    pub realizations: usize,
    /// Runs that hit the outer iteration cap (still included).
    pub capped_count: usize,
    /// Degenerate realizations excluded from the means.
    pub excluded_failures: usize,
}

struct SchemeOutcome {
    se: f64,
    effrank: f64,
    sum_rate: Option<f64>,
    capped: bool,
}

struct RealizationOutcome {
    per_scheme: Vec<SchemeOutcome>,
}

fn run_realization(
    cfg: &SimulationConfig,
    dims: SystemDims,
    pt: f64,
    realization: u64,
) -> Result<RealizationOutcome> {
    let mut rng = realization_rng(cfg.master_seed, realization);
    let ch = sample_rayleigh(dims, cfg.direct_link, &mut rng);
    let theta0 = RisPhases::random(dims.n, &mut rng);
    let sigma2 = cfg.sigma2_watts;

    // phases are chosen once per realization and shared by every scheme
    let (phases, shaping_capped) = match cfg.ris_mode {
        RisMode::Optimized => {
            let trace = alternate(&ch, Scheme::Upa, pt, sigma2, &theta0, &cfg.optimizer)?;
            (trace.final_phases, trace.capped)
        }
        RisMode::Random => (theta0, false),
        RisMode::Identity => (RisPhases::zeros(dims.n), false),
    };
    let h = composite_channel(&ch, &phases)?;

    let mut per_scheme = Vec::with_capacity(cfg.schemes.len());
    for &scheme in &cfg.schemes {
        let (pre, cov) = fixed_phase_covariance(scheme, &h, pt, sigma2)?;
        let se = capacity(&h, &cov, sigma2)?;
        let effrank = effective_rank_at(&ch, &phases, &cov.rx)?;
        let sum_rate = scheme_sum_rate(&h, pre.as_ref())?;
        per_scheme.push(SchemeOutcome {
            se,
            effrank,
            sum_rate,
            capped: shaping_capped,
        });
    }
    Ok(RealizationOutcome { per_scheme })
}

fn scheme_sum_rate(h: &CMat, pre: Option<&PrecoderSet>) -> Result<Option<f64>> {
    match pre {
        None => Ok(None),
        Some(pre) => {
            let sinrs: Vec<f64> = (0..h.nrows())
                .map(|k| user_sinr(h, pre, k))
                .collect::<Result<_>>()?;
            Ok(Some(sum_rate(&sinrs)))
        }
    }
}

fn aggregate(
    cfg: &SimulationConfig,
    value: f64,
    outcomes: Vec<Result<RealizationOutcome>>,
) -> Result<Vec<MetricsRecord>> {
    let total = outcomes.len();
    let failures: Vec<&Error> = outcomes.iter().filter_map(|r| r.as_ref().err()).collect();
    let failed = failures.len();
    // tolerate strictly less than 1% degenerate realizations
    if failed > 0 && failed * 100 >= total {
        return Err(Error::TooManyFailures {
            failed,
            total,
            limit: total / 100,
            first: failures[0].to_string(),
        });
    }
    let used = total - failed;

    let s = cfg.schemes.len();
    let mut sum_se = vec![0.0; s];
    let mut sumsq_se = vec![0.0; s];
    let mut sum_effrank = vec![0.0; s];
    let mut sum_rate_acc = vec![0.0; s];
    let mut has_sum_rate = vec![false; s];
    let mut capped = vec![0usize; s];
    let mrt_idx = cfg.schemes.iter().position(|&x| x == Scheme::MrtWf);
    let mmse_idx = cfg.schemes.iter().position(|&x| x == Scheme::MmseWf);
    let mut gap_sum = 0.0;

    // fixed realization order keeps the reduction identical under any
    // execution schedule
    for outcome in outcomes.iter().filter_map(|r| r.as_ref().ok()) {
        for (i, m) in outcome.per_scheme.iter().enumerate() {
            sum_se[i] += m.se;
            sumsq_se[i] += m.se * m.se;
            sum_effrank[i] += m.effrank;
            if let Some(sr) = m.sum_rate {
                sum_rate_acc[i] += sr;
                has_sum_rate[i] = true;
            }
            capped[i] += m.capped as usize;
        }
        if let (Some(a), Some(b)) = (mrt_idx, mmse_idx) {
            gap_sum += (outcome.per_scheme[a].se - outcome.per_scheme[b].se).abs();
        }
    }

    let mean_gap = match (mrt_idx, mmse_idx) {
        (Some(_), Some(_)) if used > 0 => Some(gap_sum / used as f64),
        _ => None,
    };

    let records = cfg
        .schemes
        .iter()
        .enumerate()
        .map(|(i, &scheme)| {
            let n = used as f64;
            let mean = sum_se[i] / n;
            let ci95 = if used > 1 {
                let var = (sumsq_se[i] - n * mean * mean).max(0.0) / (n - 1.0);
                1.96 * (var / n).sqrt()
            } else {
                0.0
            };
            MetricsRecord {
                sweep_var: cfg.sweep.variable,
                sweep_value: value,
                scheme,
                mean_se: mean,
                ci95,
                mean_effrank: sum_effrank[i] / n,
                mean_gap,
                mean_sum_rate: has_sum_rate[i].then(|| sum_rate_acc[i] / n),
                realizations: used,
                capped_count: capped[i],
                excluded_failures: failed,
            }
        })
        .collect();
    Ok(records)
}

/// Runs the configured sweep sequentially.
pub fn run_monte_carlo_sequential(cfg: &SimulationConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let mut records = Vec::new();
    for &value in &cfg.sweep.values {
        let (dims, pt) = cfg.operating_point(value);
        let outcomes: Vec<Result<RealizationOutcome>> = (0..cfg.realizations as u64)
            .map(|r| run_realization(cfg, dims, pt, r))
            .collect();
        records.extend(aggregate(cfg, value, outcomes)?);
    }
    Ok(records)
}

/// Runs the configured sweep with realizations fanned out over the rayon
/// pool. The `RISRANK_THREADS` environment variable caps the worker count.
/// Output is byte-identical to the sequential runner.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo_parallel(cfg: &SimulationConfig) -> Result<Vec<MetricsRecord>> {
    cfg.validate()?;
    let body = || -> Result<Vec<MetricsRecord>> {
        let mut records = Vec::new();
        for &value in &cfg.sweep.values {
            let (dims, pt) = cfg.operating_point(value);
            let outcomes: Vec<Result<RealizationOutcome>> = (0..cfg.realizations as u64)
                .into_par_iter()
                .map(|r| run_realization(cfg, dims, pt, r))
                .collect();
            records.extend(aggregate(cfg, value, outcomes)?);
        }
        Ok(records)
    };
    match worker_cap() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("rayon pool")
            .install(body),
        None => body(),
    }
}

#[cfg(feature = "parallel")]
fn worker_cap() -> Option<usize> {
    std::env::var("RISRANK_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

/// Runs the configured sweep, parallel when the `parallel` feature is
/// enabled.
pub fn run_monte_carlo(cfg: &SimulationConfig) -> Result<Vec<MetricsRecord>> {
    #[cfg(feature = "parallel")]
    {
        run_monte_carlo_parallel(cfg)
    }
    #[cfg(not(feature = "parallel"))]
    {
        run_monte_carlo_sequential(cfg)
    }
}

// ---------------------------------------------------------------------------
// Emission
// ---------------------------------------------------------------------------

/// Fixed CSV header, one row per (sweep value, scheme).
pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,scheme,mean_se,ci95,mean_effrank,mean_gap,realizations,capped_count";

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long-format CSV. Floats use Rust's shortest round-trip representation;
/// an absent gap renders as an empty cell.
pub fn records_to_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.sweep_var,
            r.sweep_value,
            r.scheme,
            r.mean_se,
            r.ci95,
            r.mean_effrank,
            fmt_opt(r.mean_gap),
            r.realizations,
            r.capped_count
        ));
    }
    out
}

#[derive(Serialize)]
struct JsonPoint<'a> {
    sweep_value: f64,
    schemes: Vec<&'a MetricsRecord>,
}

#[derive(Serialize)]
struct JsonSweep<'a> {
    sweep_var: SweepVariable,
    points: Vec<JsonPoint<'a>>,
}

/// JSON emission with records grouped by sweep value.
pub fn records_to_json(records: &[MetricsRecord]) -> String {
    let mut points: Vec<JsonPoint> = Vec::new();
    for r in records {
        match points.last_mut() {
            Some(p) if p.sweep_value == r.sweep_value => p.schemes.push(r),
            _ => points.push(JsonPoint {
                sweep_value: r.sweep_value,
                schemes: vec![r],
            }),
        }
    }
    let sweep_var = records
        .first()
        .map(|r| r.sweep_var)
        .unwrap_or(SweepVariable::SnrDb);
    serde_json::to_string_pretty(&JsonSweep { sweep_var, points })
        .expect("records are serializable")
}
