//! Randomized invariant checks shared by the test suites and the `verify`
//! subcommand, plus the random-instance generators they draw from.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::Serialize;

use crate::active::{assemble_block_quadratic, solve_local_beamformer, DEFAULT_BISECTION_TOL};
use crate::baselines::{run_baseline, zf_beamformers, MethodId};
use crate::error::Result;
use crate::linalg::{hdot, norm_sqr, CVector, C64};
use crate::orchestrator::{signaling_formula, SolveOptions};
use crate::passive::{assemble_passive_quadratic, solve_passive, PassiveOptions};
use crate::scenario::{generate_channels, ChannelSet, EffectiveChannels, ScenarioConfig};
use crate::wmmse::{self, BeamState, CrossGains, MseModel};

/// Standard complex Gaussian sample.
pub fn complex_normal(rng: &mut impl Rng) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn random_vector(rng: &mut impl Rng, len: usize) -> CVector {
    CVector::from_fn(len, |_, _| complex_normal(rng))
}

/// Phases uniform in the unit disk (by area).
pub fn random_theta(rng: &mut impl Rng, m: usize) -> CVector {
    CVector::from_fn(m, |_, _| {
        let r = rng.random::<f64>().sqrt();
        C64::from_polar(r, std::f64::consts::TAU * rng.random::<f64>())
    })
}

/// A feasible, generic optimization state for `ch`: random beamformers at
/// 20–100 % of the per-AP budget, θ in the unit disk, `u` near its optimum
/// (random scale and phase) and `ω ∈ [0.5, 2]`.
pub fn random_beam_state(rng: &mut impl Rng, ch: &ChannelSet, p_max: f64) -> Result<BeamState> {
    let (aps, nt, users, m) = (ch.num_aps(), ch.antennas(), ch.num_users(), ch.ris_elements());
    let active: Vec<Vec<CVector>> = (0..aps)
        .map(|_| {
            let fs: Vec<CVector> = (0..users).map(|_| random_vector(rng, nt)).collect();
            let power: f64 = fs.iter().map(norm_sqr).sum();
            let target = p_max * rng.random_range(0.2..1.0);
            fs.into_iter().map(|f| f * C64::new((target / power).sqrt(), 0.0)).collect()
        })
        .collect();
    let theta = random_theta(rng, m);
    let eff = EffectiveChannels::new(ch, &theta)?;
    let u = wmmse::update_u_eff(MseModel::Coherent, &eff, &active)
        .into_iter()
        .map(|u| u * C64::from_polar(rng.random_range(0.5..1.5), rng.random_range(-1.0..1.0)))
        .collect();
    let omega = (0..users).map(|_| rng.random_range(0.5..2.0)).collect();
    Ok(BeamState { active, theta, u, omega })
}

/// Positive random weights in `[0.5, 2]`.
pub fn random_weights(rng: &mut impl Rng, users: usize) -> Vec<f64> {
    (0..users).map(|_| rng.random_range(0.5..2.0)).collect()
}

/// Outcome of one named invariant.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self { name, passed, detail }
    }

    fn from_result(name: &'static str, r: Result<(bool, String)>) -> Self {
        match r {
            Ok((passed, detail)) => Self::new(name, passed, detail),
            Err(e) => Self::new(name, false, format!("error: {e}")),
        }
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

fn small_config() -> ScenarioConfig {
    ScenarioConfig::with_dimensions(3, 4, 3, 16)
}

/// Worst relative gap between the per-AP / coherent active quadratics and the
/// direct weighted sum-MSE over `trials` random states.
pub fn active_keystone_error(seed: u64, trials: usize) -> Result<f64> {
    let config = small_config();
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let ch = generate_channels(&config, seed.wrapping_add(t as u64))?;
        let state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        let eta = random_weights(&mut rng, ch.num_users());
        let eff = EffectiveChannels::new(&ch, &state.theta)?;

        let direct = wmmse::weighted_mse(MseModel::PerAp, &eff, &state, &eta);
        let mut total = 0.0;
        let mut constant = 0.0;
        for b in 0..ch.num_aps() {
            let q = assemble_block_quadratic(MseModel::PerAp, b, &state.active, &state.u, &state.omega, &eff, &eta)?;
            total += q.value(&state.active[b]);
            constant = q.constant;
        }
        worst = worst.max(rel_err(total + constant, direct));

        let direct = wmmse::weighted_mse(MseModel::Coherent, &eff, &state, &eta);
        for b in 0..ch.num_aps() {
            let q = assemble_block_quadratic(MseModel::Coherent, b, &state.active, &state.u, &state.omega, &eff, &eta)?;
            worst = worst.max(rel_err(q.value(&state.active[b]) + q.constant, direct));
        }
    }
    Ok(worst)
}

/// Worst relative gap between the passive quadratic and the direct weighted
/// sum-MSE at fresh random `θ`, both models, over `trials` states.
pub fn passive_keystone_error(seed: u64, trials: usize) -> Result<f64> {
    let config = small_config();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let ch = generate_channels(&config, seed.wrapping_add(t as u64))?;
        let mut state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        let eta = random_weights(&mut rng, ch.num_users());
        for model in [MseModel::PerAp, MseModel::Coherent] {
            let quad = assemble_passive_quadratic(model, &state, &ch, &eta)?;
            state.theta = random_theta(&mut rng, ch.ris_elements());
            let eff = EffectiveChannels::new(&ch, &state.theta)?;
            let direct = wmmse::weighted_mse(model, &eff, &state, &eta);
            worst = worst.max(rel_err(quad.value(&state.theta) + quad.constant, direct));
        }
    }
    Ok(worst)
}

/// Power, active-constraint and stationarity figures of the local solver.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct KktSummary {
    /// `max (power / p_max - 1)`; must stay `≤ 1e-9`.
    pub worst_overshoot: f64,
    /// `max |power - p_max| / p_max` over solves with a positive multiplier.
    pub worst_active_gap: f64,
    pub worst_stationarity: f64,
    pub active_cases: usize,
    pub interior_cases: usize,
}

/// Solves `trials` random local problems with both models and collects KKT figures.
pub fn kkt_summary(seed: u64, trials: usize) -> Result<KktSummary> {
    let config = small_config();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xacc7);
    let mut out = KktSummary::default();
    for t in 0..trials {
        let ch = generate_channels(&config, seed.wrapping_add(t as u64))?;
        let mut state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        // small |u| makes the unconstrained optimum feasible, exercising λ = 0
        if t % 3 == 0 {
            let shrink = C64::new(rng.random_range(1.0..50.0), 0.0);
            state.u.iter_mut().for_each(|u| *u *= shrink);
        }
        let eta = random_weights(&mut rng, ch.num_users());
        let eff = EffectiveChannels::new(&ch, &state.theta)?;
        let p_max = config.p_max_mw();
        for model in [MseModel::PerAp, MseModel::Coherent] {
            for b in 0..ch.num_aps() {
                let q = assemble_block_quadratic(model, b, &state.active, &state.u, &state.omega, &eff, &eta)?;
                let (_, diag) = solve_local_beamformer(&q, p_max, DEFAULT_BISECTION_TOL)?;
                out.worst_overshoot = out.worst_overshoot.max(diag.power_used / p_max - 1.0);
                out.worst_stationarity = out.worst_stationarity.max(diag.kkt_residual);
                if diag.multiplier > 0.0 {
                    out.active_cases += 1;
                    out.worst_active_gap = out.worst_active_gap.max((diag.power_used - p_max).abs() / p_max);
                } else {
                    out.interior_cases += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Worst `|ω_k · mse_k - 1|` after the `(u, ω)` update on random states.
pub fn omega_identity_error(model: MseModel, config: &ScenarioConfig, seed: u64, trials: usize) -> Result<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x0e9a);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let ch = generate_channels(config, seed.wrapping_add(t as u64))?;
        let mut state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        let eff = EffectiveChannels::new(&ch, &state.theta)?;
        state.u = wmmse::update_u_eff(model, &eff, &state.active);
        state.omega = wmmse::update_omega_eff(model, &eff, &state.active)?;
        let gains = CrossGains::new(&eff, &state.active);
        for k in 0..ch.num_users() {
            let mse = gains.mse(model, k, state.u[k], eff.noise[k]);
            worst = worst.max((state.omega[k] * mse - 1.0).abs());
        }
    }
    Ok(worst)
}

/// Worst `|R_o - ln 2 · R_sum|` (relative) with one AP after the `(u, ω)` update.
pub fn single_ap_surrogate_error(seed: u64, trials: usize) -> Result<f64> {
    let config = ScenarioConfig::with_dimensions(1, 4, 3, 16);
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x1a9);
    let mut worst = 0.0f64;
    for t in 0..trials {
        let ch = generate_channels(&config, seed.wrapping_add(t as u64))?;
        let mut state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        let eta = random_weights(&mut rng, ch.num_users());
        let eff = EffectiveChannels::new(&ch, &state.theta)?;
        state.u = wmmse::update_u_eff(MseModel::PerAp, &eff, &state.active);
        state.omega = wmmse::update_omega_eff(MseModel::PerAp, &eff, &state.active)?;
        let ro = wmmse::surrogate_eff(MseModel::PerAp, &eff, &state, &eta)?;
        let rate = wmmse::sum_rate_from_sinr(&wmmse::sinrs(&eff, &state.active), &eta);
        worst = worst.max(rel_err(ro, std::f64::consts::LN_2 * rate));
    }
    Ok(worst)
}

/// Largest cross-gain `|h_{b,k}^H f_{b,j}| / (‖h‖‖f‖)`, `j ≠ k`, of local ZF.
pub fn zf_leakage(config: &ScenarioConfig, seed: u64) -> Result<f64> {
    let ch = generate_channels(config, seed)?;
    let f = zf_beamformers(&ch, config.p_max_mw())?;
    let mut worst = 0.0f64;
    for b in 0..ch.num_aps() {
        for k in 0..ch.num_users() {
            for j in (0..ch.num_users()).filter(|&j| j != k) {
                let h = &ch.direct[b][k];
                let g = hdot(h, &f[b][j]).norm() / (norm_sqr(h) * norm_sqr(&f[b][j])).sqrt();
                worst = worst.max(g);
            }
        }
    }
    Ok(worst)
}

/// Runs the full invariant suite. Every check is deterministic in `seed`.
pub fn run_suite(seed: u64) -> Vec<Check> {
    let mut checks = Vec::new();

    checks.push(Check::from_result(
        "active quadratic matches weighted sum-MSE",
        active_keystone_error(seed, 100).map(|e| (e <= 1e-9, format!("worst relative error {e:.2e}"))),
    ));
    checks.push(Check::from_result(
        "passive quadratic matches weighted sum-MSE",
        passive_keystone_error(seed, 100).map(|e| (e <= 1e-9, format!("worst relative error {e:.2e}"))),
    ));
    checks.push(Check::from_result(
        "local solver KKT conditions",
        kkt_summary(seed, 40).map(|s| {
            let ok = s.worst_overshoot <= 1e-9
                && s.worst_active_gap <= 1e-6
                && s.worst_stationarity <= 1e-8
                && s.active_cases > 0
                && s.interior_cases > 0;
            (
                ok,
                format!(
                    "overshoot {:.1e}, active gap {:.1e}, stationarity {:.1e} ({} active / {} interior)",
                    s.worst_overshoot, s.worst_active_gap, s.worst_stationarity, s.active_cases, s.interior_cases
                ),
            )
        }),
    ));
    checks.push(Check::from_result(
        "coherent weight update gives ω·mse = 1",
        omega_identity_error(MseModel::Coherent, &small_config(), seed, 50)
            .map(|e| (e <= 1e-10, format!("worst deviation {e:.2e}"))),
    ));
    checks.push(Check::from_result(
        "single-AP weight update gives ω·mse = 1",
        omega_identity_error(MseModel::PerAp, &ScenarioConfig::with_dimensions(1, 4, 3, 16), seed, 50)
            .map(|e| (e <= 1e-10, format!("worst deviation {e:.2e}"))),
    ));
    checks.push(Check::from_result(
        "single-AP surrogate equals ln2 · sum rate",
        single_ap_surrogate_error(seed, 50).map(|e| (e <= 1e-8, format!("worst relative error {e:.2e}"))),
    ));
    checks.push(Check::from_result(
        "local ZF nulls intra-AP interference",
        zf_leakage(&ScenarioConfig::default(), seed).map(|e| (e <= 1e-10, format!("worst leakage {e:.2e}"))),
    ));
    checks.push(Check::from_result("passive solver stays feasible and monotone", passive_solver_check(seed)));
    checks.push(Check::from_result("runs respect power, ledger and determinism", run_checks(seed)));
    checks
}

fn passive_solver_check(seed: u64) -> Result<(bool, String)> {
    let config = small_config();
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x9a55);
    let mut worst_rise = 0.0f64;
    let mut worst_violation = 0.0f64;
    for t in 0..20 {
        let ch = generate_channels(&config, seed.wrapping_add(t))?;
        let state = random_beam_state(&mut rng, &ch, config.p_max_mw())?;
        let eta = random_weights(&mut rng, ch.num_users());
        let quad = assemble_passive_quadratic(MseModel::PerAp, &state, &ch, &eta)?;
        let (theta, diag) = solve_passive(&quad, &state.theta, &PassiveOptions::default())?;
        for w in diag.objective_trace.windows(2) {
            worst_rise = worst_rise.max(w[1] - w[0]);
        }
        worst_violation = worst_violation.max(theta.iter().map(|z| z.norm() - 1.0).fold(0.0, f64::max));
    }
    Ok((
        worst_rise <= 0.0 && worst_violation <= 1e-12,
        format!("largest objective rise {worst_rise:.1e}, largest |θ| excess {worst_violation:.1e}"),
    ))
}

/// Solves every method on one small scenario and checks power feasibility,
/// the ledger against the closed form, bit-identical reruns and that
/// sequential and pooled AP solves agree. With a single AP the printed
/// weight update is an exact block maximizer, so the trace must be monotone.
fn run_checks(seed: u64) -> Result<(bool, String)> {
    let config = ScenarioConfig::with_dimensions(3, 4, 3, 16);
    let ch = generate_channels(&config, seed)?;
    let opts = SolveOptions::default();
    let p_max = config.p_max_mw();
    let mut problems = Vec::new();
    for method in MethodId::ALL {
        let (state, report) = run_baseline(method, &config, &ch, &opts)?;
        if let Err(e) = state.check_feasible(p_max) {
            problems.push(format!("{method}: {e}"));
        }
        if method.uses_backhaul_protocol() {
            let expected = signaling_formula(
                config.num_aps as u64,
                config.antennas_per_ap as u64,
                config.num_users as u64,
                config.ris_elements as u64,
                report.iterations as u64,
            );
            if report.ledger.paper_total() != expected {
                problems.push(format!("{method}: ledger {} vs formula {expected}", report.ledger.paper_total()));
            }
        }
        let (_, again) = run_baseline(method, &config, &ch, &opts)?;
        if again.without_timing() != report.without_timing() {
            problems.push(format!("{method}: rerun differs"));
        }
    }
    let pooled = SolveOptions { parallel_aps: true, ..opts };
    let (a, _) = run_baseline(MethodId::PdWithRis, &config, &ch, &opts)?;
    let (b, _) = run_baseline(MethodId::PdWithRis, &config, &ch, &pooled)?;
    if a != b {
        problems.push("pooled AP solves differ from sequential".into());
    }
    let single = ScenarioConfig::with_dimensions(1, 4, 3, 16);
    let ch1 = generate_channels(&single, seed)?;
    let (_, report) = run_baseline(MethodId::PdWithRis, &single, &ch1, &opts)?;
    if !report.surrogate_monotone {
        problems.push(format!("single-AP surrogate dropped by {:.2e}", report.worst_surrogate_drop()));
    }
    let (_, report) = run_baseline(MethodId::CentralizedWithRis, &config, &ch, &opts)?;
    if !report.surrogate_monotone {
        problems.push(format!("centralized surrogate dropped by {:.2e}", report.worst_surrogate_drop()));
    }
    let ok = problems.is_empty();
    Ok((ok, if ok { "all methods".into() } else { problems.join("; ") }))
}
