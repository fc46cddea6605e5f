//! Comparison schemes: centralized coherent WMMSE, the distributed loop with
//! random or absent RIS, and one-shot local ZF / MRT without RIS.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{norm_sqr, CMatrix, CVector, C64};
use crate::orchestrator::{
    run_ao, run_partially_distributed, ActiveScheme, AoPlan, SignalingLedger, SolveOptions, SolveReport, Stopwatch,
};
use crate::scenario::{ChannelSet, EffectiveChannels, ScenarioConfig};
use crate::wmmse::{self, BeamState, MseModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MethodId {
    PdWithRis,
    CentralizedWithRis,
    PdRandomRis,
    PdNoRis,
    ZfNoRis,
    MrtNoRis,
}

impl MethodId {
    pub const ALL: [MethodId; 6] = [
        MethodId::CentralizedWithRis,
        MethodId::PdWithRis,
        MethodId::PdRandomRis,
        MethodId::PdNoRis,
        MethodId::ZfNoRis,
        MethodId::MrtNoRis,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            MethodId::PdWithRis => "pd_with_ris",
            MethodId::CentralizedWithRis => "centralized_with_ris",
            MethodId::PdRandomRis => "pd_random_ris",
            MethodId::PdNoRis => "pd_no_ris",
            MethodId::ZfNoRis => "zf_no_ris",
            MethodId::MrtNoRis => "mrt_no_ris",
        }
    }

    /// Iterative methods run the alternating-optimization loop.
    pub fn is_iterative(self) -> bool {
        !matches!(self, MethodId::ZfNoRis | MethodId::MrtNoRis)
    }

    /// Methods that exercise the AP ↔ CPU protocol and therefore keep a ledger.
    pub fn uses_backhaul_protocol(self) -> bool {
        matches!(self, MethodId::PdWithRis | MethodId::PdRandomRis | MethodId::PdNoRis)
    }
}

impl fmt::Display for MethodId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.pad(self.as_str())
    }
}

impl FromStr for MethodId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MethodId::ALL.into_iter().find(|m| m.as_str() == s).ok_or_else(|| Error::Parse(format!("unknown method '{s}'")))
    }
}

/// `f_{b,k} = sqrt(p_max / K) h_{b,k} / ‖h_{b,k}‖` on the direct channels.
pub fn mrt_beamformers(ch: &ChannelSet, p_max: f64) -> Result<Vec<Vec<CVector>>> {
    let amp = (p_max / ch.num_users() as f64).sqrt();
    ch.direct
        .iter()
        .enumerate()
        .map(|(b, hs)| {
            hs.iter()
                .enumerate()
                .map(|(k, h)| {
                    let n = norm_sqr(h).sqrt();
                    if n == 0.0 {
                        Err(Error::DegenerateChannel(format!("direct channel of AP {b} to user {k} is zero")))
                    } else {
                        Ok(h * C64::new(amp / n, 0.0))
                    }
                })
                .collect()
        })
        .collect()
}

/// Local zero forcing: columns of `H_b (H_b^H H_b)^{-1}`, each scaled to `sqrt(p_max / K)`.
pub fn zf_beamformers(ch: &ChannelSet, p_max: f64) -> Result<Vec<Vec<CVector>>> {
    let (nt, users) = (ch.antennas(), ch.num_users());
    if nt < users {
        return Err(Error::DegenerateChannel(format!("local ZF needs N_t ≥ K (N_t = {nt}, K = {users})")));
    }
    let amp = (p_max / users as f64).sqrt();
    ch.direct
        .iter()
        .enumerate()
        .map(|(b, hs)| {
            let h = CMatrix::from_columns(hs);
            let gram = h.ad_mul(&h);
            let inv = gram
                .cholesky()
                .ok_or_else(|| Error::DegenerateChannel(format!("AP {b}: local channel matrix is rank deficient")))?
                .inverse();
            let w = &h * inv;
            w.column_iter()
                .map(|col| {
                    let n = col.norm();
                    if !(n.is_finite() && n > 0.0) {
                        return Err(Error::DegenerateChannel(format!("AP {b}: ZF column degenerate")));
                    }
                    Ok(col.into_owned() * C64::new(amp / n, 0.0))
                })
                .collect()
        })
        .collect()
}

fn one_shot(
    method: MethodId,
    active: Vec<Vec<CVector>>,
    config: &ScenarioConfig,
    ch: &ChannelSet,
    started: Stopwatch,
) -> Result<(BeamState, SolveReport)> {
    let theta = CVector::zeros(ch.ris_elements());
    let eff = EffectiveChannels::new(ch, &theta)?;
    let model = MseModel::Coherent;
    let u = wmmse::update_u_eff(model, &eff, &active);
    let mut state = BeamState { active, theta, u, omega: vec![1.0; ch.num_users()] };
    state.omega = wmmse::update_omega_eff(model, &eff, &state.active)?;
    let final_rates = wmmse::rate_report(model, &state, ch, &config.rate_weights)?;
    let report = SolveReport {
        method: method.to_string(),
        model,
        initial_sum_rate: final_rates.weighted_sum_rate,
        initial_surrogate: final_rates.surrogate,
        trace: Vec::new(),
        iterations: 0,
        ledger: SignalingLedger::default(),
        converged: true,
        surrogate_monotone: true,
        final_rates,
        wall_time_s: started.seconds(),
    };
    Ok((state, report))
}

/// Runs one scheme on one channel realization. Every scheme's rates are the
/// coherent SINR of the final beamformers.
pub fn run_baseline(
    method: MethodId,
    config: &ScenarioConfig,
    ch: &ChannelSet,
    opts: &SolveOptions,
) -> Result<(BeamState, SolveReport)> {
    let started = Stopwatch::start();
    let pd = |label, fixed_theta| AoPlan {
        label,
        model: MseModel::PerAp,
        active: ActiveScheme::Distributed,
        fixed_theta,
        record_signaling: true,
    };
    match method {
        MethodId::PdWithRis => run_partially_distributed(config, ch, opts),
        MethodId::CentralizedWithRis => run_ao(
            config,
            ch,
            opts,
            &AoPlan {
                label: "centralized_with_ris",
                model: MseModel::Coherent,
                active: ActiveScheme::Centralized,
                fixed_theta: None,
                record_signaling: false,
            },
        ),
        MethodId::PdRandomRis => run_ao(config, ch, opts, &pd("pd_random_ris", Some(ch.random_phases.clone()))),
        MethodId::PdNoRis => run_ao(config, ch, opts, &pd("pd_no_ris", Some(CVector::zeros(ch.ris_elements())))),
        MethodId::ZfNoRis => {
            config.validate()?;
            one_shot(method, zf_beamformers(ch, config.p_max_mw())?, config, ch, started)
        }
        MethodId::MrtNoRis => {
            config.validate()?;
            one_shot(method, mrt_beamformers(ch, config.p_max_mw())?, config, ch, started)
        }
    }
}
