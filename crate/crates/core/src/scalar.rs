use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar the numerical core is generic over.
///
/// Random draws and quadrature are always produced in `f64` and converted,
/// so an `f32` run consumes exactly the same random stream as an `f64` run.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Max-entry tolerance on `TᵀT − I` and on doubly-stochastic sums.
    const ORTHO_TOL: f64;
    /// Tolerance on `|det T| − 1`.
    const DET_TOL: f64;

    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 converts to every Scalar")
    }

    fn f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }
}

impl Scalar for f64 {
    const ORTHO_TOL: f64 = 1e-10;
    const DET_TOL: f64 = 1e-8;
}

impl Scalar for f32 {
    const ORTHO_TOL: f64 = 1e-5;
    const DET_TOL: f64 = 1e-4;
}
