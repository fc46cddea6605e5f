//! Per-AP active beamforming.
//!
//! With `(u, ω, θ)` fixed, AP `b` minimizes
//! `Σ_k f_{b,k}^H A_b f_{b,k} - 2 Re{v_{b,k}^H f_{b,k}}` subject to
//! `Σ_k ‖f_{b,k}‖² ≤ p_max`. The Hessian is block diagonal with `K` copies of
//! the `N_t × N_t` matrix `A_b`, so one eigendecomposition serves every user
//! and every bisection step on the power multiplier.

use nalgebra::SymmetricEigen;

use crate::error::{Error, Result};
use crate::linalg::{add_outer, hdot, norm_sqr, zeros_grid, CMatrix, CVector, C64};
use crate::scenario::EffectiveChannels;
use crate::wmmse::{BeamState, CrossGains, MseModel};

/// Relative power tolerance for the multiplier search.
pub const DEFAULT_BISECTION_TOL: f64 = 1e-12;
pub const MAX_BISECTION_ITERS: usize = 200;

/// Quadratic model of the weighted sum-MSE restricted to one AP's beamformers.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalQuadratic {
    /// `A_b = Σ_k η_k ω_k |u_k|² h̃_{b,k} h̃_{b,k}^H`.
    pub hessian: CMatrix,
    /// One linear vector per user; `v_{b,k} = η_k ω_k u_k h̃_{b,k}` in the per-AP model.
    pub linear: Vec<CVector>,
    pub constant: f64,
}

impl LocalQuadratic {
    /// `Σ_k f_k^H A f_k - 2 Re{v_k^H f_k}` (constant excluded).
    pub fn value(&self, f: &[CVector]) -> f64 {
        f.iter().zip(&self.linear).map(|(fk, vk)| hdot(fk, &(&self.hessian * fk)).re - 2.0 * hdot(vk, fk).re).sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActiveSolveDiagnostics {
    pub multiplier: f64,
    pub bisection_iterations: usize,
    /// mW
    pub power_used: f64,
    /// `max_k ‖(A + λI) f_k - v_k‖ / ‖v_k‖`
    pub kkt_residual: f64,
}

/// Per-AP quadratic of the decoupled MSE for AP `b`.
pub fn assemble_local_quadratic(
    b: usize,
    state: &BeamState,
    eff: &EffectiveChannels,
    eta: &[f64],
) -> Result<LocalQuadratic> {
    assemble_block_quadratic(MseModel::PerAp, b, &state.active, &state.u, &state.omega, eff, eta)
}

/// Quadratic in `f_b` with all other APs' beamformers held fixed.
///
/// In the per-AP model the blocks are decoupled and `constant` is the
/// `f`-independent `Σ_k η_k ω_k (1 + |u_k|² σ_k²)`, so the full objective is
/// `Σ_b value_b + constant`. In the coherent model the other APs' fixed
/// contributions `e_{k,j} = Σ_{b'≠b} h̃_{b',k}^H f_{b',j}` enter the linear
/// term as `-η_k ω_k |u_k|² e_{k,j} h̃_{b,k}` for user slot `j`, and
/// `constant` holds everything that does not depend on `f_b`, so
/// `value_b + constant` is the full objective.
pub fn assemble_block_quadratic(
    model: MseModel,
    b: usize,
    active: &[Vec<CVector>],
    u: &[C64],
    omega: &[f64],
    eff: &EffectiveChannels,
    eta: &[f64],
) -> Result<LocalQuadratic> {
    let users = eff.num_users();
    if b >= eff.num_aps() || u.len() != users || omega.len() != users || eta.len() != users {
        return Err(Error::DimensionMismatch(format!("AP {b} of {}, {users} users", eff.num_aps())));
    }
    let hs = &eff.eff[b];
    let nt = hs[0].len();
    if active.len() != eff.num_aps() || active.iter().any(|fs| fs.len() != users || fs.iter().any(|f| f.len() != nt)) {
        return Err(Error::DimensionMismatch("beamformer grid does not match the channels".into()));
    }
    let scale: Vec<f64> = (0..users).map(|k| eta[k] * omega[k] * u[k].norm_sqr()).collect();

    let mut hessian = CMatrix::zeros(nt, nt);
    for k in 0..users {
        add_outer(&mut hessian, &hs[k], scale[k]);
    }
    let mut linear: Vec<CVector> = (0..users).map(|k| &hs[k] * (u[k] * (eta[k] * omega[k]))).collect();

    let constant = match model {
        MseModel::PerAp => (0..users).map(|k| eta[k] * omega[k] * (1.0 + u[k].norm_sqr() * eff.noise[k])).sum(),
        MseModel::Coherent => {
            let gains = CrossGains::new(eff, active);
            let others = |k: usize, j: usize| gains.coherent(k, j) - gains.get(b, k, j);
            for (j, lin) in linear.iter_mut().enumerate() {
                for k in 0..users {
                    let e = others(k, j);
                    *lin -= &hs[k] * (e * scale[k]);
                }
            }
            (0..users)
                .map(|k| {
                    let rx: f64 = (0..users).map(|j| others(k, j).norm_sqr()).sum();
                    eta[k]
                        * omega[k]
                        * (u[k].norm_sqr() * (rx + eff.noise[k]) - 2.0 * (u[k].conj() * others(k, k)).re + 1.0)
                })
                .sum()
        }
    };
    Ok(LocalQuadratic { hessian, linear, constant })
}

/// Solves the power-constrained local problem: `f_k = (A + λI)^+ v_k`, with
/// `λ = 0` when the (minimum-norm) unconstrained solution fits the budget and
/// otherwise the unique `λ > 0` that exhausts it, found by bisection.
pub fn solve_local_beamformer(
    q: &LocalQuadratic,
    p_max: f64,
    tol: f64,
) -> Result<(Vec<CVector>, ActiveSolveDiagnostics)> {
    if !(p_max > 0.0) {
        return Err(Error::InvalidConfig(format!("p_max must be positive, got {p_max}")));
    }
    let nt = q.hessian.nrows();
    if q.hessian.ncols() != nt || q.linear.iter().any(|v| v.len() != nt) {
        return Err(Error::DimensionMismatch("local quadratic blocks disagree".into()));
    }
    let v_norm2: f64 = q.linear.iter().map(norm_sqr).sum();
    if v_norm2 == 0.0 {
        let zeros = vec![CVector::zeros(nt); q.linear.len()];
        return Ok((
            zeros,
            ActiveSolveDiagnostics { multiplier: 0.0, bisection_iterations: 0, power_used: 0.0, kkt_residual: 0.0 },
        ));
    }
    if !v_norm2.is_finite() || q.hessian.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("local quadratic".into()));
    }

    let sym = (&q.hessian + q.hessian.adjoint()) * C64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(sym);
    let top = eig.eigenvalues.iter().fold(0.0f64, |a, &x| a.max(x.abs()));
    let bottom = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if bottom < -1e-10 * top.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite(bottom));
    }
    let lambdas: Vec<f64> = eig.eigenvalues.iter().map(|&x| x.max(0.0)).collect();
    let basis = &eig.eigenvectors;
    // coordinates of each v_k in the eigenbasis
    let coords: Vec<CVector> = q.linear.iter().map(|v| basis.ad_mul(v)).collect();

    let singular_floor = 1e-12 * top;
    let is_null = |i: usize| lambdas[i] <= singular_floor;

    let power_at = |mu: f64| -> f64 {
        coords.iter().map(|w| (0..nt).map(|i| w[i].norm_sqr() / (lambdas[i] + mu).powi(2)).sum::<f64>()).sum()
    };
    let beam_at = |mu: f64| -> Vec<CVector> {
        coords
            .iter()
            .map(|w| {
                let scaled = CVector::from_fn(nt, |i, _| {
                    let d = lambdas[i] + mu;
                    if mu == 0.0 && is_null(i) {
                        C64::new(0.0, 0.0)
                    } else {
                        w[i] / d
                    }
                });
                basis * scaled
            })
            .collect()
    };

    // λ = 0: exists when v has no component in the numerical null space
    let unbounded = coords.iter().zip(&q.linear).any(|(w, v)| {
        let vn = norm_sqr(v).sqrt();
        (0..nt).any(|i| is_null(i) && w[i].norm() > 1e-10 * vn)
    });
    if !unbounded {
        let p0: f64 = coords
            .iter()
            .map(|w| (0..nt).filter(|&i| !is_null(i)).map(|i| w[i].norm_sqr() / lambdas[i].powi(2)).sum::<f64>())
            .sum();
        if p0 <= p_max {
            let f = beam_at(0.0);
            let diag = diagnostics(q, &f, 0.0, 0, p0);
            return Ok((f, diag));
        }
    }

    let mut lo = 0.0f64;
    let mut hi = (v_norm2 / p_max).sqrt();
    let mut p_hi = power_at(hi);
    if p_hi > p_max * (1.0 + 1e-12) {
        return Err(Error::BracketFailure(format!("power {p_hi:e} at upper bracket exceeds {p_max:e}")));
    }
    let mut iterations = 0;
    while p_hi < p_max * (1.0 - tol) {
        if iterations == MAX_BISECTION_ITERS {
            return Err(Error::BracketFailure(format!(
                "no convergence after {MAX_BISECTION_ITERS} steps (bracket [{lo:e}, {hi:e}])"
            )));
        }
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let p_mid = power_at(mid);
        if p_mid > p_max {
            lo = mid;
        } else {
            hi = mid;
            p_hi = p_mid;
        }
    }
    let f = beam_at(hi);
    let power: f64 = f.iter().map(norm_sqr).sum();
    let diag = diagnostics(q, &f, hi, iterations, power);
    Ok((f, diag))
}

fn diagnostics(q: &LocalQuadratic, f: &[CVector], mu: f64, iterations: usize, power: f64) -> ActiveSolveDiagnostics {
    let kkt_residual = f
        .iter()
        .zip(&q.linear)
        .map(|(fk, vk)| {
            let vn = norm_sqr(vk).sqrt();
            if vn == 0.0 {
                return 0.0;
            }
            let r = &q.hessian * fk + fk * C64::new(mu, 0.0) - vk;
            norm_sqr(&r).sqrt() / vn
        })
        .fold(0.0, f64::max);
    ActiveSolveDiagnostics { multiplier: mu, bisection_iterations: iterations, power_used: power, kkt_residual }
}

/// Solves every AP's local problem from one shared snapshot of `(u, ω, θ)`.
pub fn distributed_active_update(
    state: &BeamState,
    eff: &EffectiveChannels,
    eta: &[f64],
    p_max: f64,
    tol: f64,
    parallel: bool,
) -> Result<Vec<(Vec<CVector>, ActiveSolveDiagnostics)>> {
    let solve = |b: usize| {
        let q = assemble_block_quadratic(MseModel::PerAp, b, &state.active, &state.u, &state.omega, eff, eta)?;
        solve_local_beamformer(&q, p_max, tol)
    };
    let aps = eff.num_aps();
    #[cfg(feature = "parallel")]
    if parallel {
        use rayon::prelude::*;
        return (0..aps).into_par_iter().map(solve).collect();
    }
    let _ = parallel;
    (0..aps).map(solve).collect()
}

/// Gauss–Seidel sweeps over AP blocks on the exact coherent weighted sum-MSE.
pub fn centralized_active_update(
    state: &BeamState,
    eff: &EffectiveChannels,
    eta: &[f64],
    p_max: f64,
    inner_passes: usize,
    tol: f64,
) -> Result<Vec<Vec<CVector>>> {
    let mut active = if state.active.is_empty() {
        zeros_grid(eff.num_aps(), eff.num_users(), eff.eff[0][0].len())
    } else {
        state.active.clone()
    };
    for _ in 0..inner_passes {
        for b in 0..eff.num_aps() {
            let q = assemble_block_quadratic(MseModel::Coherent, b, &active, &state.u, &state.omega, eff, eta)?;
            let (fb, _) = solve_local_beamformer(&q, p_max, tol)?;
            active[b] = fb;
        }
    }
    Ok(active)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::{generate_channels, ScenarioConfig};
    use crate::verify::{random_beam_state, random_vector, random_weights};
    use crate::wmmse::weighted_mse;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    fn quad(hessian: CMatrix, linear: Vec<CVector>) -> LocalQuadratic {
        LocalQuadratic { hessian, linear, constant: 0.0 }
    }

    #[test]
    fn identity_hessian_multiplier() {
        // f = v / (1 + λ) with ‖v‖² = 4 and p_max = 1 forces λ = 1
        let v = CVector::from_vec(vec![c(2.0), c(0.0)]);
        let q = quad(CMatrix::identity(2, 2), vec![v.clone()]);
        let (f, d) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
        assert!((d.multiplier - 1.0).abs() < 1e-9);
        assert!((f[0][0] - c(1.0)).norm() < 1e-9);
        assert!(d.power_used <= 1.0);
    }

    #[test]
    fn interior_solution_has_zero_multiplier() {
        let v = CVector::from_vec(vec![c(0.5), C64::new(0.0, 0.5)]);
        let q = quad(CMatrix::identity(2, 2) * c(2.0), vec![v.clone()]);
        let (f, d) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
        assert_eq!(d.multiplier, 0.0);
        assert!((&f[0] - &v * c(0.5)).norm() < 1e-15);
    }

    #[test]
    fn singular_hessian_uses_pseudo_inverse_or_saturates() {
        let a = CMatrix::from_diagonal(&CVector::from_vec(vec![c(1.0), c(0.0)]));
        // v inside range(A): minimum-norm minimizer, λ = 0
        let q = quad(a.clone(), vec![CVector::from_vec(vec![c(0.5), c(0.0)])]);
        let (f, d) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
        assert_eq!(d.multiplier, 0.0);
        assert!((f[0][1]).norm() == 0.0 && (f[0][0] - c(0.5)).norm() < 1e-15);
        // v with a null-space component: objective unbounded below without the cap
        let q = quad(a, vec![CVector::from_vec(vec![c(0.5), c(0.1)])]);
        let (_, d) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
        assert!(d.multiplier > 0.0);
        assert!((d.power_used - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_linear_term_gives_zero_beams() {
        let q = quad(CMatrix::identity(3, 3), vec![CVector::zeros(3); 2]);
        let (f, d) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
        assert!(f.iter().all(|x| norm_sqr(x) == 0.0));
        assert_eq!(d.power_used, 0.0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let q = quad(CMatrix::identity(2, 2), vec![CVector::from_element(2, c(1.0))]);
        assert!(matches!(solve_local_beamformer(&q, 0.0, 1e-12), Err(Error::InvalidConfig(_))));
        let neg = quad(-CMatrix::identity(2, 2), vec![CVector::from_element(2, c(1.0))]);
        assert!(matches!(solve_local_beamformer(&neg, 1.0, 1e-12), Err(Error::NotPositiveSemidefinite(_))));
        let bad = quad(CMatrix::identity(2, 2), vec![CVector::from_element(3, c(1.0))]);
        assert!(matches!(solve_local_beamformer(&bad, 1.0, 1e-12), Err(Error::DimensionMismatch(_))));
    }

    #[test]
    fn two_antenna_grid_search_oracle() {
        let mut rng = ChaCha20Rng::seed_from_u64(21);
        for _ in 0..5 {
            let a0 = random_vector(&mut rng, 2);
            let a1 = random_vector(&mut rng, 2);
            let mut hessian = CMatrix::zeros(2, 2);
            add_outer(&mut hessian, &a0, 1.0);
            add_outer(&mut hessian, &a1, 0.3);
            let v = random_vector(&mut rng, 2) * c(2.0);
            let q = quad(hessian, vec![v]);
            let (f, _) = solve_local_beamformer(&q, 1.0, DEFAULT_BISECTION_TOL).unwrap();
            let best = q.value(&f);
            // sample the 4-real-dimensional unit ball densely on the boundary and inside
            let mut sampled = f64::INFINITY;
            for _ in 0..200_000 {
                let d = random_vector(&mut rng, 2);
                let r = rng.random::<f64>().powf(0.25);
                let x = &d * c(r / norm_sqr(&d).sqrt());
                sampled = sampled.min(q.value(&[x]));
            }
            assert!(best <= sampled + 1e-12, "solver {best} vs grid {sampled}");
            assert!(best >= sampled - 0.05 * sampled.abs().max(1e-3), "grid {sampled} far below solver {best}");
        }
    }

    fn random_problem(seed: u64, aps: usize) -> (ScenarioConfig, EffectiveChannels, BeamState, Vec<f64>) {
        let config = ScenarioConfig::with_dimensions(aps, 4, 3, 12);
        let ch = generate_channels(&config, seed).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let state = random_beam_state(&mut rng, &ch, config.p_max_mw()).unwrap();
        let eta = random_weights(&mut rng, 3);
        let eff = EffectiveChannels::new(&ch, &state.theta).unwrap();
        (config, eff, state, eta)
    }

    #[test]
    fn distributed_update_lowers_per_ap_objective() {
        let (config, eff, mut state, eta) = random_problem(31, 4);
        let before = weighted_mse(MseModel::PerAp, &eff, &state, &eta);
        let out =
            distributed_active_update(&state, &eff, &eta, config.p_max_mw(), DEFAULT_BISECTION_TOL, false).unwrap();
        state.active = out.into_iter().map(|(f, _)| f).collect();
        let after = weighted_mse(MseModel::PerAp, &eff, &state, &eta);
        assert!(after <= before);
        state.check_feasible(config.p_max_mw()).unwrap();
    }

    #[test]
    fn pooled_and_sequential_solves_identical() {
        let (config, eff, state, eta) = random_problem(32, 5);
        let a = distributed_active_update(&state, &eff, &eta, config.p_max_mw(), DEFAULT_BISECTION_TOL, false).unwrap();
        let b = distributed_active_update(&state, &eff, &eta, config.p_max_mw(), DEFAULT_BISECTION_TOL, true).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn centralized_update_descends_coherent_objective() {
        let (config, eff, mut state, eta) = random_problem(33, 4);
        let mut previous = weighted_mse(MseModel::Coherent, &eff, &state, &eta);
        for _ in 0..4 {
            state.active =
                centralized_active_update(&state, &eff, &eta, config.p_max_mw(), 1, DEFAULT_BISECTION_TOL).unwrap();
            let now = weighted_mse(MseModel::Coherent, &eff, &state, &eta);
            assert!(now <= previous + 1e-12 * previous.abs());
            previous = now;
        }
        state.check_feasible(config.p_max_mw()).unwrap();
    }

    #[test]
    fn keystone_identities_hold() {
        let err = crate::verify::active_keystone_error(41, 20).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn kkt_conditions(seed in 0u64..100_000, users in 1usize..4, nt in 1usize..5, p_max in 0.01f64..100.0) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let mut hessian = CMatrix::zeros(nt, nt);
            for _ in 0..users {
                add_outer(&mut hessian, &random_vector(&mut rng, nt), rng.random_range(0.0..2.0));
            }
            let linear = (0..users).map(|_| random_vector(&mut rng, nt)).collect();
            let q = quad(hessian, linear);
            let (f, d) = solve_local_beamformer(&q, p_max, DEFAULT_BISECTION_TOL).unwrap();
            let power: f64 = f.iter().map(norm_sqr).sum();
            prop_assert!(power <= p_max * (1.0 + 1e-9));
            prop_assert!(d.kkt_residual <= 1e-8);
            if d.multiplier > 0.0 {
                prop_assert!((power - p_max).abs() <= 1e-6 * p_max);
            }
            // scaling any feasible point down never beats the solution
            let half: Vec<CVector> = f.iter().map(|x| x * c(0.5)).collect();
            prop_assert!(q.value(&f) <= q.value(&half) + 1e-12 * q.value(&f).abs());
        }
    }
}
