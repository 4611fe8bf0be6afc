//! Sampled checks of the inequalities relating forms, semigroups and kernels.
//!
//! Every check returns a [`CheckRecord`] holding the worst normalized
//! violation, the tolerance and a witness from which the worst input can be
//! regenerated. Records whose hypotheses are not met by the data are
//! marked [`Verdict::ReportOnly`] rather than pass or fail.

mod dynamics;
mod fitting;
mod forms;
mod record;
mod sampling;
mod suite;

pub use dynamics::*;
pub use fitting::*;
pub use forms::*;
pub use record::{CheckRecord, Report, Verdict};
pub use sampling::{Distribution, SampleSpec};
pub use suite::*;
