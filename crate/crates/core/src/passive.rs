//! CPU-side passive beamforming: the quadratic form of the weighted sum-MSE in
//! `θ` and its minimization over the relaxed set `{θ : |θ_m| ≤ 1}`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{all_finite_vec, hdot, norm_sqr, CMatrix, CVector, C64};
use crate::scenario::ChannelSet;
use crate::wmmse::{BeamState, MseModel};

/// `θ^H Q θ - 2 Re{p^H θ} + constant` equals `Σ_k η_k ω_k mse_k(θ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PassiveQuadratic {
    pub q: CMatrix,
    pub p: CVector,
    pub constant: f64,
}

impl PassiveQuadratic {
    /// Objective without the constant.
    pub fn value(&self, theta: &CVector) -> f64 {
        objective(&self.p, theta, &(&self.q * theta))
    }

    pub fn dim(&self) -> usize {
        self.p.len()
    }
}

#[inline]
fn objective(p: &CVector, theta: &CVector, q_theta: &CVector) -> f64 {
    hdot(theta, q_theta).re - 2.0 * hdot(p, theta).re
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassiveSolveDiagnostics {
    pub iterations: usize,
    pub final_gradient_residual: f64,
    pub objective_trace: Vec<f64>,
    pub lipschitz_estimate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PassiveOptions {
    /// Projected-gradient stopping threshold; `None` means `1e-7 · sqrt(M)`.
    pub tol: Option<f64>,
    pub max_iters: usize,
    /// Snap every element to unit modulus after convergence.
    pub finalize_unit_modulus: bool,
}

impl Default for PassiveOptions {
    fn default() -> Self {
        Self { tol: None, max_iters: 2000, finalize_unit_modulus: false }
    }
}

/// Assembles the quadratic in `θ` for fixed `f`, `u`, `ω`.
///
/// With `a_{b,k,j} = q_{b,k}^H f_{b,j}` (an `M`-vector) and
/// `c_{b,k,j} = h_{b,k}^H f_{b,j}`, the per-AP model gives
/// `Q = Σ η_k ω_k |u_k|² a a^H` over all `(b, k, j)` and
/// `p = Σ η_k ω_k (u_k^* a_{b,k,k} - |u_k|² c_{b,k,j}^* a_{b,k,j})`. The
/// coherent model sums `a` and `c` over APs before forming the same terms.
pub fn assemble_passive_quadratic(
    model: MseModel,
    state: &BeamState,
    ch: &ChannelSet,
    eta: &[f64],
) -> Result<PassiveQuadratic> {
    let (aps, users, m) = (ch.num_aps(), ch.num_users(), ch.ris_elements());
    let nt = ch.antennas();
    if state.active.len() != aps
        || state.active.iter().any(|fs| fs.len() != users || fs.iter().any(|f| f.len() != nt))
        || state.u.len() != users
        || state.omega.len() != users
        || eta.len() != users
    {
        return Err(Error::DimensionMismatch("beam state does not match the channel set".into()));
    }

    // F_b: N_t × K beamformer matrix of AP b
    let beams: Vec<CMatrix> = state.active.iter().map(|fs| CMatrix::from_columns(fs)).collect();

    let mut q = CMatrix::zeros(m, m);
    let mut p = CVector::zeros(m);
    let mut constant = 0.0;
    for k in 0..users {
        let weight = eta[k] * state.omega[k];
        let s = weight * state.u[k].norm_sqr();
        // a-columns and direct gains for user k, either per AP or summed over APs
        let (a_cols, c_vals): (DMatrix<C64>, Vec<C64>) = match model {
            MseModel::PerAp => {
                let mut a = CMatrix::zeros(m, aps * users);
                let mut c = Vec::with_capacity(aps * users);
                for b in 0..aps {
                    a.columns_mut(b * users, users).copy_from(&(&ch.cascade[b][k] * &beams[b]));
                    c.extend(ch.direct[b][k].ad_mul(&beams[b]).iter().copied());
                }
                (a, c)
            }
            MseModel::Coherent => {
                let mut a = CMatrix::zeros(m, users);
                let mut c = vec![C64::new(0.0, 0.0); users];
                for b in 0..aps {
                    a += &ch.cascade[b][k] * &beams[b];
                    for (cj, g) in c.iter_mut().zip(ch.direct[b][k].ad_mul(&beams[b]).iter()) {
                        *cj += *g;
                    }
                }
                (a, c)
            }
        };
        q += (&a_cols * a_cols.adjoint()) * C64::new(s, 0.0);
        for (col, c) in a_cols.column_iter().zip(&c_vals) {
            p -= col * (c.conj() * s);
        }
        // desired columns: a_{b,k,k} for every b (per-AP) or the single summed column
        let desired_cols: Vec<usize> = match model {
            MseModel::PerAp => (0..aps).map(|b| b * users + k).collect(),
            MseModel::Coherent => vec![k],
        };
        let mut desired_direct = C64::new(0.0, 0.0);
        for &idx in &desired_cols {
            p += a_cols.column(idx) * (state.u[k].conj() * weight);
            desired_direct += c_vals[idx];
        }
        let rx: f64 = c_vals.iter().map(|c| c.norm_sqr()).sum();
        constant +=
            weight * (state.u[k].norm_sqr() * (rx + ch.noise[k]) - 2.0 * (state.u[k].conj() * desired_direct).re + 1.0);
    }
    // exact Hermitian symmetry regardless of accumulation order
    let q = (&q + q.adjoint()) * C64::new(0.5, 0.0);
    Ok(PassiveQuadratic { q, p, constant })
}

/// Euclidean projection onto the per-element unit disk.
pub fn project_ball(theta: &CVector) -> CVector {
    theta.map(|z| {
        let r = z.norm();
        if r > 1.0 {
            z / r
        } else {
            z
        }
    })
}

/// Upper estimate of `λ_max(Q)`: power iteration (50 steps or `1e-6`
/// relative stagnation) times a 1.01 safety factor.
pub fn lipschitz_estimate(q: &CMatrix) -> f64 {
    let n = q.nrows();
    if n == 0 {
        return 0.0;
    }
    // golden-angle phases avoid a start vector orthogonal to structured eigenvectors
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let mut v = CVector::from_fn(n, |i, _| C64::from_polar(1.0 + 0.25 * ((i as f64) * 0.7).sin(), golden * i as f64));
    let norm = norm_sqr(&v).sqrt();
    v /= C64::new(norm, 0.0);
    let mut estimate = 0.0f64;
    for _ in 0..50 {
        let w = q * &v;
        let rayleigh = hdot(&v, &w).re;
        let wn = norm_sqr(&w).sqrt();
        if wn == 0.0 {
            break;
        }
        let previous = estimate;
        estimate = estimate.max(rayleigh);
        v = w / C64::new(wn, 0.0);
        if previous > 0.0 && (estimate - previous).abs() <= 1e-6 * estimate {
            break;
        }
    }
    1.01 * estimate
}

/// Accelerated projected gradient on `θ^H Q θ - 2 Re{p^H θ}` over `|θ_m| ≤ 1`.
///
/// The real gradient is `2(Qθ - p)` with Lipschitz constant `2 λ_max(Q)`.
/// Momentum is discarded whenever a step would raise the objective, and the
/// fallback plain step backtracks on the step size, so the objective trace is
/// nonincreasing.
pub fn solve_passive(
    quad: &PassiveQuadratic,
    theta_init: &CVector,
    opts: &PassiveOptions,
) -> Result<(CVector, PassiveSolveDiagnostics)> {
    let m = quad.dim();
    if quad.q.shape() != (m, m) || theta_init.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "Q is {:?}, p has {m} entries, θ has {}",
            quad.q.shape(),
            theta_init.len()
        )));
    }
    if !all_finite_vec(&quad.p) || quad.q.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite("passive quadratic".into()));
    }
    let tol = opts.tol.unwrap_or(1e-7 * (m as f64).sqrt());
    let lam = lipschitz_estimate(&quad.q);
    let mut lip = if lam > 0.0 { 2.0 * lam } else { 1.0 };
    let p = &quad.p;
    let grad = |q_theta: &CVector| (q_theta - p) * C64::new(2.0, 0.0);
    let step = |from: &CVector, q_from: &CVector, lip: f64| project_ball(&(from - grad(q_from) / C64::new(lip, 0.0)));

    let mut x = project_ball(theta_init);
    let mut qx = &quad.q * &x;
    let mut fx = objective(p, &x, &qx);
    let mut y = x.clone();
    let mut qy = qx.clone();
    let mut t = 1.0f64;
    let mut trace = vec![fx];
    let mut residual = norm_sqr(&(&x - step(&x, &qx, lip))).sqrt();
    let mut iterations = 0;

    while residual > tol && iterations < opts.max_iters {
        iterations += 1;
        let mut xn = step(&y, &qy, lip);
        let mut qxn = &quad.q * &xn;
        let mut fn_ = objective(p, &xn, &qxn);
        let mut stalled = false;
        if fn_ > fx {
            t = 1.0;
            let mut doublings = 0;
            loop {
                xn = step(&x, &qx, lip);
                qxn = &quad.q * &xn;
                fn_ = objective(p, &xn, &qxn);
                if fn_ <= fx {
                    break;
                }
                doublings += 1;
                if doublings > 30 {
                    // objective flat to rounding: stay put
                    xn = x.clone();
                    qxn = qx.clone();
                    fn_ = fx;
                    stalled = true;
                    break;
                }
                lip *= 2.0;
            }
        }
        let t_next = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        let beta = C64::new((t - 1.0) / t_next, 0.0);
        y = &xn + (&xn - &x) * beta;
        qy = &qxn + (&qxn - &qx) * beta;
        x = xn;
        qx = qxn;
        fx = fn_;
        t = t_next;
        trace.push(fx);
        if !fx.is_finite() {
            return Err(Error::NonFinite("passive objective".into()));
        }
        residual = norm_sqr(&(&x - step(&x, &qx, lip))).sqrt();
        if stalled {
            break;
        }
    }

    if opts.finalize_unit_modulus {
        x = x.map(|z| {
            let r = z.norm();
            if r > 0.0 {
                z / r
            } else {
                C64::new(1.0, 0.0)
            }
        });
    }
    Ok((
        x,
        PassiveSolveDiagnostics {
            iterations,
            final_gradient_residual: residual,
            objective_trace: trace,
            lipschitz_estimate: lam,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::add_outer;
    use crate::verify::{random_theta, random_vector};
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_psd(rng: &mut ChaCha20Rng, m: usize, rank: usize) -> CMatrix {
        let mut q = CMatrix::zeros(m, m);
        for _ in 0..rank {
            add_outer(&mut q, &random_vector(rng, m), rng.random_range(0.1..3.0));
        }
        q
    }

    fn quad(q: CMatrix, p: CVector) -> PassiveQuadratic {
        PassiveQuadratic { q, p, constant: 0.0 }
    }

    #[test]
    fn projection_examples() {
        let t = CVector::from_vec(vec![C64::new(2.0, 0.0), C64::new(0.0, 0.5), C64::new(0.0, 0.0), C64::new(3.0, 4.0)]);
        let p = project_ball(&t);
        assert_eq!(p[0], C64::new(1.0, 0.0));
        assert_eq!(p[1], C64::new(0.0, 0.5));
        assert_eq!(p[2], C64::new(0.0, 0.0));
        assert!((p[3] - C64::new(0.6, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn lipschitz_bounds_largest_eigenvalue() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        for rank in [1, 3, 10] {
            let q = random_psd(&mut rng, 10, rank);
            let top = SymmetricEigen::new(q.clone()).eigenvalues.max();
            let est = lipschitz_estimate(&q);
            assert!(est >= top * (1.0 - 1e-9), "{est} < {top}");
            assert!(est <= 1.02 * top, "{est} ≫ {top}");
        }
        assert_eq!(lipschitz_estimate(&CMatrix::zeros(0, 0)), 0.0);
    }

    #[test]
    fn identity_quadratic_projects_linear_term() {
        let p = CVector::from_vec(vec![C64::new(0.5, 0.0), C64::new(0.0, 2.0), C64::new(-3.0, 4.0)]);
        let (theta, _) =
            solve_passive(&quad(CMatrix::identity(3, 3), p.clone()), &CVector::zeros(3), &PassiveOptions::default())
                .unwrap();
        assert!((&theta - project_ball(&p)).norm() < 1e-6);
    }

    #[test]
    fn zero_quadratic_aligns_with_linear_term() {
        let p = CVector::from_vec(vec![C64::new(1.0, 1.0), C64::new(0.0, -2.0)]);
        let (theta, _) =
            solve_passive(&quad(CMatrix::zeros(2, 2), p.clone()), &CVector::zeros(2), &PassiveOptions::default())
                .unwrap();
        for (t, pm) in theta.iter().zip(p.iter()) {
            assert!((t - pm / pm.norm()).norm() < 1e-9);
        }
    }

    #[test]
    fn long_run_satisfies_ball_kkt() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        for rank in [2, 8] {
            let q = random_psd(&mut rng, 8, rank);
            let p = random_vector(&mut rng, 8) * C64::new(2.0, 0.0);
            let problem = quad(q.clone(), p.clone());
            let opts = PassiveOptions { tol: Some(1e-12), max_iters: 200_000, ..Default::default() };
            let (theta, diag) = solve_passive(&problem, &CVector::zeros(8), &opts).unwrap();
            let g = &q * &theta - &p;
            let scale = norm_sqr(&p).sqrt();
            for m in 0..8 {
                if theta[m].norm() < 1.0 - 1e-6 {
                    assert!(g[m].norm() <= 1e-6 * scale, "interior gradient {}", g[m].norm());
                } else {
                    // gradient must point outward along θ_m: g_m = -μ θ_m, μ ≥ 0
                    let mu = -(g[m] * theta[m].conj()).re;
                    assert!(mu >= -1e-6 * scale);
                    assert!((g[m] + theta[m] * mu).norm() <= 1e-6 * scale);
                }
            }
            let best = problem.value(&theta);
            for _ in 0..2000 {
                assert!(problem.value(&random_theta(&mut rng, 8)) >= best - 1e-9 * best.abs());
            }
            assert!(diag.final_gradient_residual <= 1e-12 || diag.iterations == opts.max_iters);
        }
    }

    #[test]
    fn finalize_snaps_to_unit_modulus() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let problem = quad(random_psd(&mut rng, 6, 6) * C64::new(10.0, 0.0), random_vector(&mut rng, 6));
        let opts = PassiveOptions { finalize_unit_modulus: true, ..Default::default() };
        let (theta, _) = solve_passive(&problem, &CVector::zeros(6), &opts).unwrap();
        assert!(theta.iter().all(|z| (z.norm() - 1.0).abs() < 1e-15));
    }

    #[test]
    fn rejects_mismatched_sizes() {
        let problem = quad(CMatrix::identity(3, 3), CVector::zeros(3));
        assert!(matches!(
            solve_passive(&problem, &CVector::zeros(2), &PassiveOptions::default()),
            Err(Error::DimensionMismatch(_))
        ));
    }

    #[test]
    fn keystone_identity_holds() {
        let err = crate::verify::passive_keystone_error(5, 100).unwrap();
        assert!(err <= 1e-9, "{err}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn trace_monotone_and_feasible(seed in 0u64..100_000, m in 1usize..12, rank in 1usize..6) {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            let problem = quad(random_psd(&mut rng, m, rank), random_vector(&mut rng, m) * C64::new(3.0, 0.0));
            let start = random_vector(&mut rng, m) * C64::new(2.0, 0.0);
            let (theta, diag) = solve_passive(&problem, &start, &PassiveOptions::default()).unwrap();
            prop_assert!(theta.iter().all(|z| z.norm() <= 1.0 + 1e-15));
            for w in diag.objective_trace.windows(2) {
                prop_assert!(w[1] <= w[0]);
            }
            prop_assert!(problem.value(&theta) <= problem.value(&project_ball(&start)));
        }
    }
}
