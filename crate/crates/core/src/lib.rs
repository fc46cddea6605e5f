//! Partially distributed beamforming for RIS-aided cell-free downlinks.
//!
//! Access points optimize their own active beamformers in closed form while a
//! central processing unit updates the WMMSE auxiliaries and the RIS phase
//! vector. The crate also ships the comparison baselines (centralized
//! coherent WMMSE, random/no RIS, local ZF and MRT), a backhaul signaling
//! ledger and a Monte-Carlo sweep harness.
//!
//! ```no_run
//! use cellfree_ris::{generate_channels, run_partially_distributed, ScenarioConfig, SolveOptions};
//!
//! let config = ScenarioConfig::default();
//! let channels = generate_channels(&config, 7).unwrap();
//! let (_state, report) = run_partially_distributed(&config, &channels, &SolveOptions::default()).unwrap();
//! println!("{:.3} bit/s/Hz after {} iterations", report.final_sum_rate(), report.iterations);
//! ```

// `!(x > 0.0)` checks also reject NaN; index loops follow the (b, k, j) sums.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod active;
pub mod baselines;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod orchestrator;
pub mod passive;
pub mod scenario;
pub mod verify;
pub mod wmmse;

pub use active::{
    assemble_local_quadratic, centralized_active_update, solve_local_beamformer, ActiveSolveDiagnostics, LocalQuadratic,
};
pub use baselines::{mrt_beamformers, run_baseline, zf_beamformers, MethodId};
pub use error::{Error, Result};
pub use experiments::{
    emit_csv, mean_stderr, parse_csv, sweep, sweep_with_workers, write_csv, SweepKind, SweepResult, SweepRow, SweepSpec,
};
pub use linalg::{CMatrix, CVector, C64};
pub use orchestrator::{
    admm_formula, complexity_estimate, run_partially_distributed, signaling_formula, MessageKind, MessageRecord,
    NodeId, SignalingLedger, SolveOptions, SolveReport,
};
pub use passive::{
    assemble_passive_quadratic, lipschitz_estimate, project_ball, solve_passive, PassiveOptions, PassiveQuadratic,
    PassiveSolveDiagnostics,
};
pub use scenario::{
    dbm_to_linear, effective_channel, generate_channels, pathloss_db, ChannelSet, EffectiveChannels, Position,
    ScenarioConfig,
};
pub use wmmse::{BeamState, MseModel, RateReport};
