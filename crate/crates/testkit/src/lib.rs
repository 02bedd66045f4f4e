//! Deliberately naive reference implementations, plus the glue that runs
//! the library against them.
//!
//! The oracle modules are plain loops over `Vec`s and share no code with the
//! library under test, so agreement between the two is evidence rather than
//! tautology. Only `checks` touches the library.

pub mod checks;
pub mod conv;
pub mod labels;
pub mod loss;
pub mod mat;
pub mod metrics;
pub mod transformer;

pub use mat::Mat;
