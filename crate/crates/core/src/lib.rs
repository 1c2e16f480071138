pub mod bounds;
pub mod caseio;
pub mod config;
pub mod error;
pub mod methods;
pub mod network;
pub mod ptdf;
pub mod response;
pub mod solver;

pub use config::{BigMMode, Method, RunConfig};
pub use error::{BoundsError, CaseError, MethodError, NetworkError, ScreenError, SolverError};
pub use methods::{solve, DispatchState, IterationRecord, Outcome, RunReport, RunStatus};
pub use network::{Bus, Generator, Line, PowerSystem};
pub use ptdf::{screen, Direction, PtdfBundle, Violation, ViolationTable};
pub use response::{binary_search, ResponseOutcome};
