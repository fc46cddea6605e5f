//! The AP ↔ CPU alternating optimization loop with backhaul accounting.
//!
//! Each iteration the CPU broadcasts `(u, ω, θ)`, every AP solves its local
//! beamforming problem from that same snapshot and feeds `f_b` back, and the
//! CPU refreshes `u`, `ω` and `θ`. Iterations stop once the sum rate moves by
//! less than `ε` or the iteration cap is reached.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::active::{centralized_active_update, distributed_active_update, DEFAULT_BISECTION_TOL};
use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, CVector, C64};
use crate::passive::{assemble_passive_quadratic, solve_passive, PassiveOptions};
use crate::scenario::{ChannelSet, EffectiveChannels, ScenarioConfig};
use crate::wmmse::{self, BeamState, MseModel, RateReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeId {
    Ap(usize),
    Cpu,
    /// CPU broadcast received by every AP.
    AllAps,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    CsiDirect,
    CsiCascade,
    BroadcastUOmegaTheta,
    ActiveBeamformer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub from: NodeId,
    pub to: NodeId,
    pub kind: MessageKind,
    /// Complex symbols in the payload.
    pub symbols: u64,
    /// 0 for the CSI setup exchange.
    pub iteration: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignalingLedger {
    pub messages: Vec<MessageRecord>,
}

impl SignalingLedger {
    pub fn record(&mut self, from: NodeId, to: NodeId, kind: MessageKind, symbols: u64, iteration: usize) {
        self.messages.push(MessageRecord { from, to, kind, symbols, iteration });
    }

    pub fn totals_by_kind(&self) -> BTreeMap<MessageKind, u64> {
        let mut out = BTreeMap::new();
        for m in &self.messages {
            *out.entry(m.kind).or_insert(0) += m.symbols;
        }
        out
    }

    pub fn totals_by_iteration(&self) -> BTreeMap<usize, u64> {
        let mut out = BTreeMap::new();
        for m in &self.messages {
            *out.entry(m.iteration).or_insert(0) += m.symbols;
        }
        out
    }

    /// Symbols as the closed-form overhead counts them: the direct-channel CSI
    /// exchange counts twice (`2 B N_t K`), the cascade payload not at all,
    /// plus the per-iteration broadcast and beamformer feedback.
    pub fn paper_total(&self) -> u64 {
        self.messages
            .iter()
            .map(|m| match m.kind {
                MessageKind::CsiDirect => 2 * m.symbols,
                MessageKind::CsiCascade => 0,
                MessageKind::BroadcastUOmegaTheta | MessageKind::ActiveBeamformer => m.symbols,
            })
            .sum()
    }

    /// Every payload symbol actually exchanged, including the `B M N_t K` cascade CSI.
    pub fn actual_total(&self) -> u64 {
        self.messages.iter().map(|m| m.symbols).sum()
    }

    pub fn paper_total_for_iteration(&self, iteration: usize) -> u64 {
        self.messages
            .iter()
            .filter(|m| m.iteration == iteration)
            .map(|m| match m.kind {
                MessageKind::CsiDirect => 2 * m.symbols,
                MessageKind::CsiCascade => 0,
                _ => m.symbols,
            })
            .sum()
    }

    pub fn actual_total_for_iteration(&self, iteration: usize) -> u64 {
        self.messages.iter().filter(|m| m.iteration == iteration).map(|m| m.symbols).sum()
    }
}

/// Closed-form backhaul count `2 B N_t K + I (M + 2K + B N_t K)`.
pub fn signaling_formula(b: u64, nt: u64, k: u64, m: u64, iterations: u64) -> u64 {
    2 * b * nt * k + iterations * (m + 2 * k + b * nt * k)
}

/// Overhead of the fully distributed ADMM scheme, `B² (N_t K + I (N_t K + M + 2K))`.
pub fn admm_formula(b: u64, nt: u64, k: u64, m: u64, iterations: u64) -> u64 {
    b * b * (nt * k + iterations * (nt * k + m + 2 * k))
}

/// `I (M^3.5 + B (N_t K)^3)`: order-of-magnitude operation count, not a timing.
pub fn complexity_estimate(b: u64, nt: u64, k: u64, m: u64, iterations: u64) -> f64 {
    iterations as f64 * ((m as f64).powf(3.5) + b as f64 * ((nt * k) as f64).powi(3))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    /// bit/s/Hz
    pub sum_rate: f64,
    /// nats
    pub surrogate: f64,
    /// mW per AP
    pub ap_power: Vec<f64>,
    pub theta_violation: f64,
    pub passive_iterations: usize,
    pub signaling_paper: u64,
    pub signaling_actual: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub method: String,
    pub model: MseModel,
    pub initial_sum_rate: f64,
    pub initial_surrogate: f64,
    pub trace: Vec<IterationRecord>,
    pub iterations: usize,
    pub ledger: SignalingLedger,
    pub converged: bool,
    /// Whether `R_o` never dropped by more than `1e-8` along the trace.
    pub surrogate_monotone: bool,
    pub final_rates: RateReport,
    pub wall_time_s: f64,
}

impl SolveReport {
    pub fn final_sum_rate(&self) -> f64 {
        self.final_rates.weighted_sum_rate
    }

    /// Largest drop of `R_o` between consecutive recorded points (0 if none).
    pub fn worst_surrogate_drop(&self) -> f64 {
        let mut prev = self.initial_surrogate;
        let mut worst = 0.0f64;
        for rec in &self.trace {
            worst = worst.max(prev - rec.surrogate);
            prev = rec.surrogate;
        }
        worst
    }

    /// The report with wall-clock time cleared, for reproducibility checks.
    pub fn without_timing(&self) -> SolveReport {
        SolveReport { wall_time_s: 0.0, ..self.clone() }
    }

    pub fn to_json(&self, include_timing: bool) -> String {
        let report = if include_timing { self.clone() } else { self.without_timing() };
        serde_json::to_string_pretty(&report).expect("report serializes")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub bisection_tol: f64,
    pub passive: PassiveOptions,
    /// Run the per-AP solves on the worker pool.
    pub parallel_aps: bool,
    /// Gauss–Seidel sweeps per outer iteration for the centralized baseline.
    pub centralized_inner_passes: usize,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self {
            bisection_tol: DEFAULT_BISECTION_TOL,
            passive: PassiveOptions::default(),
            parallel_aps: false,
            centralized_inner_passes: 3,
        }
    }
}

/// Wall-clock timer; reads zero on targets without a system clock.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Stopwatch(#[cfg(not(target_arch = "wasm32"))] std::time::Instant);

impl Stopwatch {
    pub fn start() -> Self {
        #[cfg(not(target_arch = "wasm32"))]
        return Self(std::time::Instant::now());
        #[cfg(target_arch = "wasm32")]
        Self()
    }

    pub fn seconds(&self) -> f64 {
        #[cfg(not(target_arch = "wasm32"))]
        return self.0.elapsed().as_secs_f64();
        #[cfg(target_arch = "wasm32")]
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum ActiveScheme {
    Distributed,
    Centralized,
}

/// How one alternating-optimization run is wired.
#[derive(Debug, Clone)]
pub(crate) struct AoPlan {
    pub label: &'static str,
    pub model: MseModel,
    pub active: ActiveScheme,
    /// `None` optimizes θ starting from the configured initialization.
    pub fixed_theta: Option<CVector>,
    pub record_signaling: bool,
}

/// Initial phases: all-ones unless the config asks for random phases.
pub fn initial_theta(config: &ScenarioConfig, ch: &ChannelSet) -> CVector {
    if config.random_theta_init {
        ch.random_phases.clone()
    } else {
        CVector::from_element(ch.ris_elements(), C64::new(1.0, 0.0))
    }
}

/// Per-AP MRT on the effective channels with the power split evenly.
pub fn mrt_on(eff: &EffectiveChannels, p_max: f64) -> Vec<Vec<CVector>> {
    let users = eff.num_users();
    let amp = (p_max / users as f64).sqrt();
    eff.eff
        .iter()
        .map(|hs| {
            hs.iter()
                .map(|h| {
                    let n = norm_sqr(h).sqrt();
                    if n > 0.0 {
                        h * C64::new(amp / n, 0.0)
                    } else {
                        CVector::zeros(h.len())
                    }
                })
                .collect()
        })
        .collect()
}

/// Algorithm-1 loop: distributed active updates, CPU-side `u`, `ω`, `θ`.
pub fn run_partially_distributed(
    config: &ScenarioConfig,
    ch: &ChannelSet,
    opts: &SolveOptions,
) -> Result<(BeamState, SolveReport)> {
    let plan = AoPlan {
        label: "pd_with_ris",
        model: MseModel::PerAp,
        active: ActiveScheme::Distributed,
        fixed_theta: None,
        record_signaling: true,
    };
    run_ao(config, ch, opts, &plan)
}

fn check_dims(config: &ScenarioConfig, ch: &ChannelSet) -> Result<()> {
    config.validate()?;
    let ok = ch.num_aps() == config.num_aps
        && ch.num_users() == config.num_users
        && ch.antennas() == config.antennas_per_ap
        && ch.ris_elements() == config.ris_elements;
    if ok {
        Ok(())
    } else {
        Err(Error::DimensionMismatch("channel set does not match the scenario dimensions".into()))
    }
}

pub(crate) fn run_ao(
    config: &ScenarioConfig,
    ch: &ChannelSet,
    opts: &SolveOptions,
    plan: &AoPlan,
) -> Result<(BeamState, SolveReport)> {
    check_dims(config, ch)?;
    let started = Stopwatch::start();
    let eta = &config.rate_weights;
    let p_max = config.p_max_mw();
    let (aps, nt, users, m) = (ch.num_aps(), ch.antennas(), ch.num_users(), ch.ris_elements());
    let model = plan.model;

    let mut ledger = SignalingLedger::default();
    if plan.record_signaling {
        for b in 0..aps {
            ledger.record(NodeId::Ap(b), NodeId::Cpu, MessageKind::CsiDirect, (nt * users) as u64, 0);
            ledger.record(NodeId::Ap(b), NodeId::Cpu, MessageKind::CsiCascade, (m * nt * users) as u64, 0);
        }
    }

    let theta = plan.fixed_theta.clone().unwrap_or_else(|| initial_theta(config, ch));
    let mut eff = EffectiveChannels::new(ch, &theta)?;
    let active = mrt_on(&eff, p_max);
    let u = wmmse::update_u_eff(model, &eff, &active);
    let mut state = BeamState { active, theta, u, omega: vec![1.0; users] };
    state.omega = wmmse::update_omega_eff(model, &eff, &state.active)?;

    let initial_sum_rate = wmmse::sum_rate_from_sinr(&wmmse::sinrs(&eff, &state.active), eta);
    let initial_surrogate = wmmse::surrogate_eff(model, &eff, &state, eta)?;

    let mut trace = Vec::new();
    let mut prev_rate = initial_sum_rate;
    let mut prev_surrogate = initial_surrogate;
    let mut monotone = true;
    let mut converged = false;

    for iteration in 1..=config.max_iterations {
        // AP side: every AP works from the same broadcast snapshot
        if plan.record_signaling {
            ledger.record(
                NodeId::Cpu,
                NodeId::AllAps,
                MessageKind::BroadcastUOmegaTheta,
                (m + 2 * users) as u64,
                iteration,
            );
        }
        state.active = match plan.active {
            ActiveScheme::Distributed => {
                distributed_active_update(&state, &eff, eta, p_max, opts.bisection_tol, opts.parallel_aps)?
                    .into_iter()
                    .map(|(f, _)| f)
                    .collect()
            }
            ActiveScheme::Centralized => {
                centralized_active_update(&state, &eff, eta, p_max, opts.centralized_inner_passes, opts.bisection_tol)?
            }
        };
        if plan.record_signaling {
            for b in 0..aps {
                ledger.record(
                    NodeId::Ap(b),
                    NodeId::Cpu,
                    MessageKind::ActiveBeamformer,
                    (nt * users) as u64,
                    iteration,
                );
            }
        }

        // CPU side
        state.u = wmmse::update_u_eff(model, &eff, &state.active);
        state.omega = wmmse::update_omega_eff(model, &eff, &state.active)?;
        let mut passive_iterations = 0;
        if plan.fixed_theta.is_none() {
            let quad = assemble_passive_quadratic(model, &state, ch, eta)?;
            let (theta, diag) = solve_passive(&quad, &state.theta, &opts.passive)?;
            passive_iterations = diag.iterations;
            state.theta = theta;
            eff = EffectiveChannels::new(ch, &state.theta)?;
        }

        let sinr = wmmse::sinrs(&eff, &state.active);
        let sum_rate = wmmse::sum_rate_from_sinr(&sinr, eta);
        let surrogate = wmmse::surrogate_eff(model, &eff, &state, eta)?;
        if !sum_rate.is_finite() || !surrogate.is_finite() {
            return Err(Error::NonFinite(format!("iteration {iteration}: sum rate {sum_rate}, surrogate {surrogate}")));
        }
        if surrogate < prev_surrogate - 1e-8 {
            monotone = false;
        }
        trace.push(IterationRecord {
            iteration,
            sum_rate,
            surrogate,
            ap_power: state.ap_powers(),
            theta_violation: state.theta_violation(),
            passive_iterations,
            signaling_paper: ledger.paper_total_for_iteration(iteration),
            signaling_actual: ledger.actual_total_for_iteration(iteration),
        });
        let delta = (sum_rate - prev_rate).abs();
        prev_rate = sum_rate;
        prev_surrogate = surrogate;
        if delta < config.convergence_eps {
            converged = true;
            break;
        }
    }

    let final_rates = wmmse::rate_report(model, &state, ch, eta)?;
    let report = SolveReport {
        method: plan.label.to_string(),
        model,
        initial_sum_rate,
        initial_surrogate,
        iterations: trace.len(),
        trace,
        ledger,
        converged,
        surrogate_monotone: monotone,
        final_rates,
        wall_time_s: started.seconds(),
    };
    Ok((state, report))
}
