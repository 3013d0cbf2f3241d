//! Symbolic exterior calculus on a spinor field chart, derivation of the field
//! equations and conserved currents from a single variational 4-form, and
//! norm-preserving integrators for the derived equations on periodic grids.

pub mod charges;
pub mod derivation;
pub mod expr;
pub mod forms;
pub mod model;
pub mod scalar;
pub mod scenario;
pub mod simulate;
pub mod verify;

pub use charges::{fit_precession, series_to_csv, ChargeSeries};
pub use derivation::{
    builtin_generators, check_invariance, derive, Derivation, DeriveError, Generator,
    InvarianceVerdict, NoetherCurrent, OnShellRewriter, PauliPde, SpinorPde, System,
};
pub use expr::{Atom, Context, Expr, ExprError, IdentPolicy, OpaqueFn, Symbol, SymbolKind};
pub use forms::{Chart, Form, Section, VectorField};
pub use model::{eta_forms, EtaForms, Mat4, MatrixRep, Model, RepKind};
pub use scalar::{CNum, Rat};
pub use scenario::{bundled, bundled_names, CheckOutcome, ScenarioConfig};
pub use simulate::{init_packet, run, Grid, PacketKind, RunOutput, SimError, SpinorField};
pub use verify::{run_all, CriterionResult};
