//! Gradient ascent on the RIS phases and the outer alternation with the
//! covariance update.
//!
//! The inner solver climbs the effective rank for a fixed covariance with
//! backtracking step acceptance: a step is taken only if it strictly
//! improves the objective, so the effective rank is monotone along every
//! trajectory. The outer loop alternates the covariance construction
//! (water-filling powers, then precoders) with a phase ascent until the
//! effective rank stops moving. A covariance update that drops the
//! effective rank below the previous iterate, and that the ascent cannot
//! recover, ends the alternation at the previous iterate; this keeps the
//! recorded trace non-decreasing.

use serde::{Deserialize, Serialize};

use crate::channel::{composite_channel, ChannelRealization, RisPhases};
use crate::effective_rank::{effective_rank_at, effrank_phase_gradient};
use crate::error::{Error, Result};
use crate::evaluation::capacity;
use crate::precoding::{scheme_covariance, InputCovariance, PrecoderSet, Scheme};

/// Step size below which backtracking gives up on the current gradient step.
const STEP_UNDERFLOW: f64 = 1e-12;

/// Tuning knobs of the two-level optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    /// Initial learning rate, radians per unit gradient.
    pub alpha: f64,
    /// Outer convergence threshold on the change of the effective rank.
    pub gamma_tol: f64,
    /// Outer iteration cap.
    pub max_outer: usize,
    /// Gradient steps allowed per phase sub-problem.
    pub max_inner: usize,
    /// Gradient-norm threshold that ends a phase sub-problem.
    pub inner_tol: f64,
    /// Step shrink ratio in (0, 1) used when a step fails to improve.
    pub backtrack_factor: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            gamma_tol: 1e-4,
            max_outer: 50,
            max_inner: 200,
            inner_tol: 1e-6,
            backtrack_factor: 0.5,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, name: &'static str, reason: String| {
            if ok {
                Ok(())
            } else {
                Err(Error::InvalidParameter { name, reason })
            }
        };
        check(self.alpha > 0.0, "alpha", format!("must be > 0, got {}", self.alpha))?;
        check(
            self.gamma_tol > 0.0,
            "gamma_tol",
            format!("must be > 0, got {}", self.gamma_tol),
        )?;
        check(self.max_outer >= 1, "max_outer", "must be >= 1".into())?;
        check(self.max_inner >= 1, "max_inner", "must be >= 1".into())?;
        check(
            self.inner_tol > 0.0,
            "inner_tol",
            format!("must be > 0, got {}", self.inner_tol),
        )?;
        check(
            self.backtrack_factor > 0.0 && self.backtrack_factor < 1.0,
            "backtrack_factor",
            format!("must lie in (0, 1), got {}", self.backtrack_factor),
        )
    }
}

/// Result of one phase sub-problem.
#[derive(Debug, Clone)]
pub struct PhaseAscent {
    pub phases: RisPhases,
    /// Accepted gradient steps.
    pub steps: usize,
    /// Effective rank at the returned phases.
    pub effective_rank: f64,
    /// Last accepted step size (0 when no step was taken).
    pub step_size: f64,
}

/// Maximizes the effective rank of `H(theta) Rx H(theta)^H` over the
/// phases for a fixed covariance.
///
/// Each step moves along the analytic gradient with the configured rate,
/// halving it until the objective strictly improves; the step is abandoned
/// once the rate underflows. Stops after `max_inner` accepted steps or when
/// the gradient norm falls below `inner_tol`.
pub fn ascend_phases(
    ch: &ChannelRealization,
    rx: &InputCovariance,
    theta0: &RisPhases,
    cfg: &OptimizerConfig,
) -> Result<PhaseAscent> {
    cfg.validate()?;
    let mut theta = theta0.clone();
    let mut current = effective_rank_at(ch, &theta, &rx.rx)?;
    let mut steps = 0;
    let mut step_size = 0.0;

    while steps < cfg.max_inner {
        let grad = effrank_phase_gradient(ch, &theta, &rx.rx)?;
        let grad_norm = grad.d_theta.iter().map(|g| g * g).sum::<f64>().sqrt();
        if grad_norm < cfg.inner_tol {
            break;
        }
        let mut alpha = cfg.alpha;
        let mut accepted = false;
        while alpha >= STEP_UNDERFLOW {
            let candidate = RisPhases::from_radians(
                theta
                    .theta
                    .iter()
                    .zip(&grad.d_theta)
                    .map(|(t, g)| t + alpha * g)
                    .collect(),
            );
            let value = effective_rank_at(ch, &candidate, &rx.rx)?;
            if value > current {
                theta = candidate;
                current = value;
                steps += 1;
                step_size = alpha;
                accepted = true;
                break;
            }
            alpha *= cfg.backtrack_factor;
        }
        if !accepted {
            break;
        }
    }

    Ok(PhaseAscent {
        phases: theta,
        steps,
        effective_rank: current,
        step_size,
    })
}

/// One accepted outer iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub effective_rank: f64,
    pub capacity_bits: f64,
    pub inner_steps: usize,
    pub step_size: f64,
}

/// Full record of one alternation run.
#[derive(Debug, Clone)]
pub struct OptimizationTrace {
    /// Accepted outer iterations; the effective-rank column is
    /// non-decreasing.
    pub rows: Vec<TraceRow>,
    /// Effective rank at the initial phases with the first covariance,
    /// before any ascent.
    pub initial_effective_rank: f64,
    /// Capacity at the initial phases with the first covariance.
    pub initial_capacity: f64,
    /// Final phases, wrapped into `[0, 2*pi)`.
    pub final_phases: RisPhases,
    pub final_covariance: InputCovariance,
    pub final_precoders: Option<PrecoderSet>,
    /// Whether the outer loop met its convergence test.
    pub converged: bool,
    /// Whether the outer iteration cap was hit instead.
    pub capped: bool,
}

#[derive(Serialize)]
struct TraceJson<'a> {
    rows: &'a [TraceRow],
    initial_effective_rank: f64,
    initial_capacity: f64,
    final_phases: &'a [f64],
    converged: bool,
    capped: bool,
}

impl OptimizationTrace {
    pub fn final_effective_rank(&self) -> f64 {
        self.rows
            .last()
            .map(|r| r.effective_rank)
            .unwrap_or(self.initial_effective_rank)
    }

    pub fn final_capacity(&self) -> f64 {
        self.rows
            .last()
            .map(|r| r.capacity_bits)
            .unwrap_or(self.initial_capacity)
    }

    /// Per-iteration records plus the final state as JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&TraceJson {
            rows: &self.rows,
            initial_effective_rank: self.initial_effective_rank,
            initial_capacity: self.initial_capacity,
            final_phases: &self.final_phases.theta,
            converged: self.converged,
            capped: self.capped,
        })
        .expect("trace is serializable")
    }
}

/// Alternating optimization of the RIS phases and the input covariance.
///
/// Per outer iteration: water-filling powers, precoders for the scheme,
/// covariance assembly, then a phase ascent. Stops when the effective rank
/// moves by at most `gamma_tol` between iterations, when a covariance
/// update can no longer improve on the previous iterate, or at `max_outer`
/// (the trace is then flagged capped, not an error).
pub fn alternate(
    ch: &ChannelRealization,
    scheme: Scheme,
    pt: f64,
    sigma2: f64,
    theta0: &RisPhases,
    cfg: &OptimizerConfig,
) -> Result<OptimizationTrace> {
    cfg.validate()?;
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

    let mut theta = theta0.clone();
    let mut rows = Vec::new();
    let mut previous: Option<(f64, RisPhases, InputCovariance, Option<PrecoderSet>)> = None;
    let mut initial_effective_rank = f64::NAN;
    let mut initial_capacity = f64::NAN;
    let mut converged = false;

    for iteration in 1..=cfg.max_outer {
        let h = composite_channel(ch, &theta)?;
        let prev_pre = previous.as_ref().and_then(|(_, _, _, pre)| pre.as_ref());
        let (pre, cov) = scheme_covariance(scheme, &h, prev_pre, pt, sigma2)?;
        let e_before = effective_rank_at(ch, &theta, &cov.rx)?;
        if iteration == 1 {
            initial_effective_rank = e_before;
            initial_capacity = capacity(&h, &cov, sigma2)?;
        }

        let ascent = ascend_phases(ch, &cov, &theta, cfg)?;
        let reference = previous.as_ref().map(|(e, ..)| *e).unwrap_or(e_before);
        if previous.is_some() && ascent.effective_rank < reference {
            // this covariance lowered E and the ascent could not recover it;
            // the alternation has reached its fixpoint at the previous iterate
            converged = true;
            break;
        }

        theta = ascent.phases;
        let h_after = composite_channel(ch, &theta)?;
        let cap = capacity(&h_after, &cov, sigma2)?;
        rows.push(TraceRow {
            iteration,
            effective_rank: ascent.effective_rank,
            capacity_bits: cap,
            inner_steps: ascent.steps,
            step_size: ascent.step_size,
        });
        previous = Some((ascent.effective_rank, theta.clone(), cov, pre));

        if (ascent.effective_rank - reference).abs() <= cfg.gamma_tol {
            converged = true;
            break;
        }
    }

    let (_, final_theta, final_covariance, final_precoders) =
        previous.expect("max_outer >= 1 guarantees one iteration");
    Ok(OptimizationTrace {
        rows,
        initial_effective_rank,
        initial_capacity,
        final_phases: final_theta.wrapped(),
        final_covariance,
        final_precoders,
        converged,
        capped: !converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{sample_rayleigh, SystemDims};
    use crate::precoding::upa_covariance;
    use crate::testing;

    #[test]
    fn stationary_start_returns_unchanged() {
        // single user: effective rank is constant, gradient vanishes
        let (ch, phases, rx) = testing::random_instance(139, 4, 1, 8, false, 10.0);
        let cov = InputCovariance::new(rx, 10.0).unwrap();
        let result = ascend_phases(&ch, &cov, &phases, &OptimizerConfig::default()).unwrap();
        assert_eq!(result.steps, 0);
        assert_eq!(result.phases, phases);
    }

    #[test]
    fn ascent_is_monotone_step_by_step() {
        let (ch, phases, rx) = testing::random_instance(149, 4, 3, 8, false, 10.0);
        let cov = InputCovariance::new(rx, 10.0).unwrap();
        let cfg = OptimizerConfig {
            max_inner: 40,
            ..OptimizerConfig::default()
        };
        // replay the ascent one accepted step at a time
        let mut theta = phases.clone();
        let mut last_e = effective_rank_at(&ch, &theta, &cov.rx).unwrap();
        for _ in 0..40 {
            let one = OptimizerConfig { max_inner: 1, ..cfg };
            let step = ascend_phases(&ch, &cov, &theta, &one).unwrap();
            if step.steps == 0 {
                break;
            }
            assert!(step.effective_rank >= last_e);
            last_e = step.effective_rank;
            theta = step.phases;
        }
        let full = ascend_phases(&ch, &cov, &phases, &cfg).unwrap();
        assert!(full.effective_rank >= last_e - 1e-12);
    }

    #[test]
    fn toy_instance_matches_grid_search() {
        // N=1, K=M=2 with a direct link: E(theta) is a 1-D periodic curve
        let dims = SystemDims::new(2, 2, 1).unwrap();
        let mut rng = testing::rng(151);
        let ch = sample_rayleigh(dims, true, &mut rng);
        let rx = testing::random_covariance(&mut rng, 2, 4.0);
        let cov = InputCovariance::new(rx, 4.0).unwrap();

        let grid_best = (0..10_000)
            .map(|i| {
                let theta = RisPhases::from_radians(vec![
                    i as f64 / 10_000.0 * 2.0 * std::f64::consts::PI,
                ]);
                effective_rank_at(&ch, &theta, &cov.rx).unwrap()
            })
            .fold(f64::MIN, f64::max);

        let cfg = OptimizerConfig {
            max_inner: 500,
            inner_tol: 1e-9,
            ..OptimizerConfig::default()
        };
        let start = RisPhases::random(1, &mut rng);
        let result = ascend_phases(&ch, &cov, &start, &cfg).unwrap();
        assert!(
            result.effective_rank >= grid_best - 1e-3,
            "ascent {} vs grid {}",
            result.effective_rank,
            grid_best
        );
    }

    #[test]
    fn huge_gamma_tol_stops_after_one_outer_iteration() {
        let (ch, phases, _) = testing::random_instance(157, 4, 3, 8, false, 10.0);
        let cfg = OptimizerConfig {
            gamma_tol: 1e9,
            ..OptimizerConfig::default()
        };
        let trace = alternate(&ch, Scheme::MrtWf, 10.0, 1.0, &phases, &cfg).unwrap();
        assert_eq!(trace.rows.len(), 1);
        assert!(trace.converged);
        assert!(!trace.capped);
    }

    #[test]
    fn single_user_converges_immediately() {
        let (ch, phases, _) = testing::random_instance(163, 4, 1, 8, false, 10.0);
        let trace = alternate(
            &ch,
            Scheme::MmseWf,
            10.0,
            1.0,
            &phases,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(trace.rows.len() <= 2);
        assert!(trace.converged);
    }

    #[test]
    fn outer_trace_is_non_decreasing() {
        for seed in [167, 173, 179, 181] {
            let (ch, phases, _) = testing::random_instance(seed, 4, 3, 8, false, 10.0);
            for scheme in Scheme::ALL {
                let trace = alternate(
                    &ch,
                    scheme,
                    10.0,
                    1.0,
                    &phases,
                    &OptimizerConfig::default(),
                )
                .unwrap();
                for pair in trace.rows.windows(2) {
                    assert!(
                        pair[1].effective_rank >= pair[0].effective_rank,
                        "scheme {scheme} seed {seed}: E decreased"
                    );
                }
                assert!(trace.final_effective_rank() >= trace.initial_effective_rank - 1e-12);
            }
        }
    }

    #[test]
    fn final_phases_are_wrapped_and_metric_invariant() {
        let (ch, phases, _) = testing::random_instance(191, 4, 3, 8, false, 10.0);
        let trace = alternate(
            &ch,
            Scheme::MrtWf,
            10.0,
            1.0,
            &phases,
            &OptimizerConfig::default(),
        )
        .unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        assert!(trace
            .final_phases
            .theta
            .iter()
            .all(|&t| (0.0..two_pi).contains(&t)));
        let e_wrapped =
            effective_rank_at(&ch, &trace.final_phases, &trace.final_covariance.rx).unwrap();
        assert!((e_wrapped - trace.final_effective_rank()).abs() < 1e-9);
    }

    #[test]
    fn alternate_is_deterministic() {
        let (ch, phases, _) = testing::random_instance(193, 4, 3, 8, false, 10.0);
        let cfg = OptimizerConfig::default();
        let a = alternate(&ch, Scheme::MmseWf, 10.0, 1.0, &phases, &cfg).unwrap();
        let b = alternate(&ch, Scheme::MmseWf, 10.0, 1.0, &phases, &cfg).unwrap();
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.final_phases, b.final_phases);
    }

    #[test]
    fn optimization_improves_over_random_start() {
        // paired comparison over seeds: E and C after optimization vs at theta0
        let mut improved_e = 0.0;
        let mut improved_c = 0.0;
        let count = 50;
        for seed in 0..count {
            let (ch, theta0, _) = testing::random_instance(1000 + seed, 4, 3, 32, false, 10.0);
            let trace = alternate(
                &ch,
                Scheme::MrtWf,
                10.0,
                1.0,
                &theta0,
                &OptimizerConfig::default(),
            )
            .unwrap();
            improved_e += trace.final_effective_rank() - trace.initial_effective_rank;
            improved_c += trace.final_capacity() - trace.initial_capacity;
        }
        assert!(
            improved_e / count as f64 > 0.0,
            "mean effective-rank improvement {improved_e}"
        );
        assert!(
            improved_c / count as f64 > 0.0,
            "mean capacity improvement {improved_c}"
        );
    }

    #[test]
    fn upa_alternation_converges() {
        // the covariance is theta-independent: the outer loop is just the
        // phase ascent resumed until |delta E| falls under gamma_tol
        let (ch, phases, _) = testing::random_instance(197, 4, 3, 8, false, 10.0);
        let trace = alternate(
            &ch,
            Scheme::Upa,
            10.0,
            1.0,
            &phases,
            &OptimizerConfig::default(),
        )
        .unwrap();
        assert!(trace.converged);
        let expected = upa_covariance(4, 10.0);
        assert!((&trace.final_covariance.rx - expected.rx).norm() < 1e-12);
    }

    #[test]
    fn trace_json_has_row_fields() {
        let (ch, phases, _) = testing::random_instance(199, 2, 2, 4, false, 4.0);
        let trace = alternate(
            &ch,
            Scheme::MrtWf,
            4.0,
            1.0,
            &phases,
            &OptimizerConfig::default(),
        )
        .unwrap();
        let text = trace.to_json();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        let row = &value["rows"][0];
        for field in [
            "iteration",
            "effective_rank",
            "capacity_bits",
            "inner_steps",
            "step_size",
        ] {
            assert!(!row[field].is_null(), "missing {field}");
        }
        assert!(value["converged"].is_boolean());
    }
}
