//! Packing densities of permutation patterns.
//!
//! Upper bounds come from the flag-algebra semidefinite method: [`flag`]
//! builds exact flag-product tables, [`sdp`] assembles the semidefinite
//! program and drives an external solver, and [`certify`] turns the numeric
//! solution into an exact, independently checkable rational certificate.
//! Lower bounds come from explicit permuton constructions in [`permuton`].

pub mod certify;
pub mod error;
pub mod flag;
pub mod perm;
pub mod permuton;
pub mod sdp;

/// Exact rational number, always in lowest terms.
pub type Rational = num_rational::BigRational;

pub use certify::{Certificate, RationalMatrix, VerificationReport};
pub use error::{CertificateError, CertifyError, FlagError, PermError, PermutonError, SdpError, SolverError};
pub use flag::{Admissibility, Flag, FlagProductTable, TypePerm};
pub use perm::{ForbiddenSet, Permutation};
pub use permuton::{BlockPermuton, Node};
pub use sdp::{NumericSolution, SdpProblem};

/// Version string recorded in certificates.
pub const TOOL_VERSION: &str = concat!("permflag ", env!("CARGO_PKG_VERSION"));

/// `p/q` rendering used by certificates and table files.
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q` or a plain integer.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: num_bigint::BigInt = n.trim().parse().ok()?;
            let d: num_bigint::BigInt = d.trim().parse().ok()?;
            if num_traits::Zero::is_zero(&d) {
                return None;
            }
            Some(Rational::new(n, d))
        }
        None => s.parse().ok().map(Rational::from_integer),
    }
}

/// Nearest `f64` to an exact rational.
pub fn rational_to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}
