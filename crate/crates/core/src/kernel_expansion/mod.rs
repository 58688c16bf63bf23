//! Basis machinery: kernels, input measures, Karhunen-Loeve eigensystems,
//! kernel-section and Nystrom bases, and expected Gram matrices.

pub mod basis;
pub mod eigen;
pub mod gram;
pub mod io;
pub mod kernel;
pub mod measure;

pub use basis::{Basis, BasisKind};
pub use eigen::{sinusoid, EigenFamily, EigenSystem};
pub use gram::{expected_gram, GramMethod};
pub use io::ExpansionDoc;
pub use kernel::KernelSpec;
pub use measure::{InputMeasure, Sampling};
