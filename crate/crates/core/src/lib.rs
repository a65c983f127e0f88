//! Selberg zeta functions of Hecke triangle groups `G_q` as Fredholm
//! determinants of a nuclear transfer operator, with the length spectrum,
//! Euler products and period functions used to cross-check them.

pub mod analytic;
pub mod coding;
pub mod determinant;
pub mod error;
pub mod moebius;
pub mod operator;
pub mod period;
pub mod precision;
pub mod verify;
pub mod zeta;

pub use analytic::{hurwitz_zeta, Disk};
pub use coding::{length_spectrum, BranchSymbol, LengthSpectrumEntry, Word};
pub use determinant::{det_at, fredholm_det, scan_zeros, CutoffPolicy, ScanConfig, SpectralScan, ZeroRecord};
pub use error::{Error, Result};
pub use moebius::{hecke_generators, lambda, GroupElement};
pub use num_complex::Complex64;
pub use operator::{assemble, DiskLabel, OperatorConfig, OperatorMatrix, Symmetry, TailMode};
pub use period::{extract_eigenfunction, FastEigenfunction, Parity};
pub use precision::Precision;
pub use verify::{verify, VerifyReport};
pub use zeta::{euler_product, smale_ruelle, EulerProduct};
