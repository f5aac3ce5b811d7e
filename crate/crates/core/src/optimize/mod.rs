//! Configuration search: phase synthesis, mode-weight fitting and the
//! heuristic searches over mode amplitudes.

mod anneal;
mod combined;
mod hill;
mod lsq;
mod phases;

pub use anneal::{
    sa_init, sa_init_indexed, simulated_annealing, AnnealResult, SAConfig, ENVELOPE_DC, SH_DC,
};
pub use combined::{
    cell_seed, combined, combined_with_reference, phase_reference, slnr_sweep, strongest_modes,
    CombinedConfig, CombinedResult, ModeSelection, PhaseReference, StageSlnr, SweepRow, SweepSpec,
};
pub use hill::{
    brute_force, weight_ranking, BruteForceConfig, HillClimbResult, RankedMode, RANKING_STEP,
};
pub use lsq::{
    design_matrix, gram_matrix, ls_fit, weighted_solve, wls_fit, wls_fit_with_weights, wls_weights,
    RepairConfig, RepairStep, SlopeWeights, WlsSolution, SLOPE_FLOOR, SLOPE_STEP,
};
pub use phases::{
    arbitrary_voltage_state, ideal_phases, multi_beam_phases, null_steer, null_steer_realized,
    realize, NullSteerConfig, NullSteerOutcome,
};
