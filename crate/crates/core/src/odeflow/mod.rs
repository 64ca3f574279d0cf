//! Adaptive integration of the mechanism flows and their recursions.

mod flows;
mod solver;

pub use flows::{
    flow_v, flow_v_joint, flow_v_joint_ctx, flow_v_marked, flow_v_set, g_piecewise, w_chain, y_chain, GPiecewise,
    ResidualReport, WChain, YChain,
};
pub use solver::{integrate, FlowSolution, SolverConfig, SolverStats};
