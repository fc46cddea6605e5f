//! WMMSE quantities: SINR and rates, the per-user MSE, the closed-form
//! auxiliary and weight updates, and the surrogate objective `R_o`.
//!
//! Two MSE models are supported. [`MseModel::PerAp`] is the decoupled form the
//! distributed algorithm optimizes: interference is summed power-wise per AP
//! while the desired term combines coherently. [`MseModel::Coherent`] is the
//! exact expectation of the received signal and is used by the centralized
//! baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{hdot, norm_sqr, CVector, C64};
use crate::scenario::{ChannelSet, EffectiveChannels};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MseModel {
    PerAp,
    Coherent,
}

/// Optimization variables of one alternating-optimization state.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamState {
    /// `active[b][k]` is `f_{b,k}`.
    pub active: Vec<Vec<CVector>>,
    pub theta: CVector,
    pub u: Vec<C64>,
    pub omega: Vec<f64>,
}

impl BeamState {
    pub fn ap_powers(&self) -> Vec<f64> {
        self.active.iter().map(|fs| fs.iter().map(norm_sqr).sum()).collect()
    }

    /// Largest `|θ_m| - 1`, clipped at zero.
    pub fn theta_violation(&self) -> f64 {
        self.theta.iter().map(|z| z.norm() - 1.0).fold(0.0, f64::max)
    }

    /// Per-AP power cap (with `1e-9` relative slack) and `|θ_m| ≤ 1`.
    pub fn check_feasible(&self, p_max: f64) -> Result<()> {
        for (b, p) in self.ap_powers().into_iter().enumerate() {
            if p > p_max * (1.0 + 1e-9) {
                return Err(Error::Invariant(format!("AP {b} transmits {p:e} mW above cap {p_max:e}")));
            }
        }
        if self.theta_violation() > 1e-12 {
            return Err(Error::Invariant("RIS phase outside the unit disk".into()));
        }
        if self.omega.iter().any(|w| !(*w > 0.0)) {
            return Err(Error::Invariant("non-positive MSE weight".into()));
        }
        Ok(())
    }
}

/// All scalar gains `g[b][k][j] = h̃_{b,k}^H f_{b,j}`.
#[derive(Debug, Clone)]
pub struct CrossGains {
    g: Vec<Vec<Vec<C64>>>,
}

impl CrossGains {
    pub fn new(eff: &EffectiveChannels, active: &[Vec<CVector>]) -> Self {
        let g = eff
            .eff
            .iter()
            .zip(active)
            .map(|(hs, fs)| hs.iter().map(|h| fs.iter().map(|f| hdot(h, f)).collect()).collect())
            .collect();
        Self { g }
    }

    pub fn get(&self, b: usize, k: usize, j: usize) -> C64 {
        self.g[b][k][j]
    }

    /// `Σ_b h̃_{b,k}^H f_{b,j}`.
    pub fn coherent(&self, k: usize, j: usize) -> C64 {
        self.g.iter().map(|gb| gb[k][j]).sum()
    }

    /// Quadratic part of the MSE denominator (without noise).
    pub fn received_power(&self, model: MseModel, k: usize) -> f64 {
        let users = self.g.first().map_or(0, |gb| gb[k].len());
        match model {
            MseModel::PerAp => self.g.iter().flat_map(|gb| gb[k].iter()).map(|z| z.norm_sqr()).sum(),
            MseModel::Coherent => (0..users).map(|j| self.coherent(k, j).norm_sqr()).sum(),
        }
    }

    pub fn sinr(&self, k: usize, noise: f64) -> f64 {
        let users = self.g[0][k].len();
        let signal = self.coherent(k, k).norm_sqr();
        let interference: f64 = (0..users).filter(|&j| j != k).map(|j| self.coherent(k, j).norm_sqr()).sum();
        signal / (interference + noise)
    }

    pub fn mse(&self, model: MseModel, k: usize, u: C64, noise: f64) -> f64 {
        u.norm_sqr() * (self.received_power(model, k) + noise) - 2.0 * (u.conj() * self.coherent(k, k)).re + 1.0
    }

    pub fn optimal_u(&self, model: MseModel, k: usize, noise: f64) -> C64 {
        self.coherent(k, k) / (self.received_power(model, k) + noise)
    }

    /// Closed-form MSE at the optimal `u`.
    ///
    /// For the coherent model this is the exact substitution `1 - |Σ_b g|² / D`
    /// (= `1 / (1 + SINR)`). For the per-AP model the desired power is summed
    /// per AP, `1 - Σ_b |g_{b,k,k}|² / D`, which keeps the value in `(0, 1]`;
    /// it coincides with substitution only when there is a single AP.
    pub fn optimal_mse(&self, model: MseModel, k: usize, noise: f64) -> f64 {
        let den = self.received_power(model, k) + noise;
        let desired = match model {
            MseModel::PerAp => self.g.iter().map(|gb| gb[k][k].norm_sqr()).sum::<f64>(),
            MseModel::Coherent => self.coherent(k, k).norm_sqr(),
        };
        1.0 - desired / den
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateReport {
    pub per_user_sinr: Vec<f64>,
    /// bit/s/Hz
    pub per_user_rate: Vec<f64>,
    /// bit/s/Hz
    pub weighted_sum_rate: f64,
    /// nats
    pub surrogate: f64,
}

/// SINR of user `k` with coherent combining over APs.
pub fn sinr(k: usize, state: &BeamState, ch: &ChannelSet) -> Result<f64> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    Ok(CrossGains::new(&eff, &state.active).sinr(k, eff.noise[k]))
}

pub fn sinrs(eff: &EffectiveChannels, active: &[Vec<CVector>]) -> Vec<f64> {
    let gains = CrossGains::new(eff, active);
    (0..eff.num_users()).map(|k| gains.sinr(k, eff.noise[k])).collect()
}

pub fn sum_rate_from_sinr(sinr: &[f64], eta: &[f64]) -> f64 {
    sinr.iter().zip(eta).map(|(s, w)| w * (1.0 + s).log2()).sum()
}

/// `Σ_k η_k log2(1 + SINR_k)`.
pub fn weighted_sum_rate(state: &BeamState, ch: &ChannelSet, eta: &[f64]) -> Result<f64> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    Ok(sum_rate_from_sinr(&sinrs(&eff, &state.active), eta))
}

/// Per-AP MSE of user `k` as the distributed algorithm evaluates it.
pub fn mse(k: usize, state: &BeamState, ch: &ChannelSet) -> Result<f64> {
    mse_with(MseModel::PerAp, k, state, ch)
}

pub fn mse_with(model: MseModel, k: usize, state: &BeamState, ch: &ChannelSet) -> Result<f64> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    Ok(CrossGains::new(&eff, &state.active).mse(model, k, state.u[k], eff.noise[k]))
}

pub fn update_u(state: &BeamState, ch: &ChannelSet) -> Result<Vec<C64>> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    Ok(update_u_eff(MseModel::PerAp, &eff, &state.active))
}

pub fn update_u_eff(model: MseModel, eff: &EffectiveChannels, active: &[Vec<CVector>]) -> Vec<C64> {
    let gains = CrossGains::new(eff, active);
    (0..eff.num_users()).map(|k| gains.optimal_u(model, k, eff.noise[k])).collect()
}

pub fn update_omega(state: &BeamState, ch: &ChannelSet) -> Result<Vec<f64>> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    update_omega_eff(MseModel::PerAp, &eff, &state.active)
}

/// `ω_k = 1 / mse_k^opt`.
pub fn update_omega_eff(model: MseModel, eff: &EffectiveChannels, active: &[Vec<CVector>]) -> Result<Vec<f64>> {
    let gains = CrossGains::new(eff, active);
    (0..eff.num_users())
        .map(|k| {
            let m = gains.optimal_mse(model, k, eff.noise[k]);
            if m > 0.0 && m.is_finite() {
                Ok(1.0 / m)
            } else {
                Err(Error::Invariant(format!("optimal MSE of user {k} is {m:e}")))
            }
        })
        .collect()
}

/// `Σ_k η_k (ln ω_k - ω_k mse_k + 1)` in nats.
pub fn surrogate_objective(state: &BeamState, ch: &ChannelSet, eta: &[f64]) -> Result<f64> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    surrogate_eff(MseModel::PerAp, &eff, state, eta)
}

pub fn surrogate_eff(model: MseModel, eff: &EffectiveChannels, state: &BeamState, eta: &[f64]) -> Result<f64> {
    let gains = CrossGains::new(eff, &state.active);
    let mut total = 0.0;
    for k in 0..eff.num_users() {
        let w = state.omega[k];
        if !(w > 0.0) {
            return Err(Error::Invariant(format!("ω_{k} = {w:e} is not positive")));
        }
        let m = gains.mse(model, k, state.u[k], eff.noise[k]);
        total += eta[k] * (w.ln() - w * m + 1.0);
    }
    Ok(total)
}

/// Weighted sum-MSE `Σ_k η_k ω_k mse_k`.
pub fn weighted_mse(model: MseModel, eff: &EffectiveChannels, state: &BeamState, eta: &[f64]) -> f64 {
    let gains = CrossGains::new(eff, &state.active);
    (0..eff.num_users()).map(|k| eta[k] * state.omega[k] * gains.mse(model, k, state.u[k], eff.noise[k])).sum()
}

pub fn rate_report(model: MseModel, state: &BeamState, ch: &ChannelSet, eta: &[f64]) -> Result<RateReport> {
    let eff = EffectiveChannels::new(ch, &state.theta)?;
    let per_user_sinr = sinrs(&eff, &state.active);
    let per_user_rate: Vec<f64> = per_user_sinr.iter().map(|s| (1.0 + s).log2()).collect();
    Ok(RateReport {
        weighted_sum_rate: sum_rate_from_sinr(&per_user_sinr, eta),
        surrogate: surrogate_eff(model, &eff, state, eta)?,
        per_user_sinr,
        per_user_rate,
    })
}
