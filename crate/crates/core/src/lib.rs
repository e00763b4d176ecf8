//! Joint Shapley values for cooperative games and model explanation.
//!
//! The joint Shapley value of order `k` assigns a worth to every coalition
//! of at most `k` agents:
//!
//! ```text
//! φ_T = Σ_{S ⊆ N∖T} q_{|S|} [v(S ∪ T) − v(S)]
//! ```
//!
//! with coefficients `q` from [`compute_q`]. Exact values run in rational
//! arithmetic ([`Rational`]) or `f64`; [`sample_joint_shapley`] estimates
//! them by Monte Carlo when `n` is too large to enumerate. The
//! [`attribution`] module turns a prediction model and a dataset into games
//! whose joint Shapley values explain feature interactions.

pub mod attribution;
pub mod coalition;
pub mod coefficients;
pub mod combinatorics;
pub mod error;
pub mod game;
pub mod gamefile;
pub mod indices;
pub mod model;
pub mod sampler;
pub mod worth;

pub use coalition::Coalition;
pub use coefficients::{
    arrival_size_distribution, closed_form_q, compute_q, verify_coefficient_identities,
    ArrivalSizeDistribution, CoefficientReport, CoefficientTable,
};
pub use error::{Error, Result};
pub use game::{
    builtin_game, parse_builtin_game, permute_game, BuiltinGame, Game, Permutation, TableGame,
    WorthTable,
};
pub use gamefile::{game_from_file, load_game_file, write_game_file, GameFile};
pub use indices::{
    added_value, check_axioms, generalised_shapley, joint_shapley_exact, shapley,
    shapley_interaction, shapley_taylor, AxiomReport, IndexKind, IndexResult, Mode,
};
pub use model::{parse_model_spec, BuiltinModel, ExternalModel, Model, TableModel};
pub use sampler::{
    arrival_process_simulate, convergence_trace, sample_joint_shapley, ConvergenceTrace,
    GameSource, SamplerConfig, ValueSource,
};
pub use worth::{Rational, Worth};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
