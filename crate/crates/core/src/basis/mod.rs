//! Basis transforms and penalties.

mod filters;
pub mod fpc;
pub mod spline;
pub mod wavelet;

pub use fpc::{init_fpc, FpcInit};
pub use spline::{bspline_design, ospline_design, SplineBasis, SplineKind};
pub use wavelet::{WaveletFamily, WaveletTransform};
