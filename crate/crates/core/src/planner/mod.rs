//! Affordance-conditioned pose optimization: declarative constraint specs,
//! their geometric terms and a multi-start derivative-free solver.

mod solve;
mod spec;
mod terms;

pub use solve::{initial_pose, solve, solve_scene, OptimizationResult, SolveOptions, TermScore};
pub use spec::{builtin_names, builtin_spec, load_spec, ConstraintSpec, ConstraintTerm, TermKind, TermParams};
pub use terms::{
    eval_term, high_affordance_region, objective, tilt_degrees, PlannerScene, Region, REGION_FALLBACK,
    REGION_MIN_POINTS, REGION_THRESHOLD,
};
