//! Linear queries and distribution estimation under local differential
//! privacy.
//!
//! Four protocols are provided:
//!
//! * [`protocols::run_gauss`]: `(ε, δ)`-LDP offline queries with Gaussian
//!   noise and projection onto the query polytope.
//! * [`protocols::run_rejsamp`]: pure ε-LDP offline queries obtained from the
//!   Gaussian mechanism by rejection sampling.
//! * [`protocols::run_phr`]: pure ε-LDP distribution estimation by Hadamard
//!   response followed by projection onto the simplex.
//! * [`protocols::run_adsamp`]: pure ε-LDP answers to adaptively chosen
//!   queries by splitting users across rounds.
//!
//! The [`harness`] module runs Monte-Carlo experiments against the known
//! error guarantees and audits the randomizers' privacy loss exactly.
//!
//! All indices in this API are 0-based.

pub mod domain;
pub mod error;
pub mod hadamard;
pub mod harness;
pub mod numeric;
pub mod projection;
pub mod protocols;
pub mod randomizers;
pub mod rng;

pub use domain::{
    histogram, l2_error, linf_error, nonprivate_baseline, sample_dataset, true_answers, Dataset,
    Distribution, Histogram, PrivacyBudget, QueryMatrix, QueryVector,
};
pub use error::{Error, Result};
pub use rng::{ProtocolRng, SeedStream};
