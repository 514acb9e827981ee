//! Spectral Galerkin solver for parabolic equations with state-dependent delay.
//!
//! The target dynamics on a Hilbert space `H` is
//!
//! ```text
//! u'(t) + A u(t) + F(u_t) + G(u(t)) = h,        t > 0,
//! u(t) = phi(t),                                t in [-r, 0],
//! ```
//!
//! where `A` is the Dirichlet Laplacian on an interval, `u_t` is the history
//! segment `u_t(theta) = u(t + theta)` for `theta in [-r, 0]`, the delayed
//! term has the form `F(u_t) = F_0(u(t - eta(u_t)))` with a state-dependent
//! lag `eta`, `G` is a local (gradient) nonlinearity, and `h` is a constant
//! forcing. Everything is discretized in the eigenbasis of `A`, which keeps
//! the stiff linear part diagonal and lets exponential integrators treat it
//! exactly.
//!
//! Module map:
//!
//! * [`spectral`]: eigenbasis, coefficient states, fractional norms, grid
//!   transforms.
//! * [`history`]: the rolling delay buffer and the phase-space norms measured
//!   on it.
//! * [`model`]: lag functionals, delayed maps, local nonlinearities, and the
//!   assembled right-hand side.
//! * [`integrator`]: exponential time differencing steppers and trajectory
//!   recording.
//! * [`diagnostics`]: Lyapunov functional, decay fits, absorbing radii, and
//!   two-trajectory separation reports.
//! * [`dimension`]: attractor sampling, box-counting and correlation
//!   dimension estimates, and the covering-based dimension bound.
//! * [`validate`]: self-contained numerical checks wired into both the test
//!   suite and the CLI.

pub mod diagnostics;
pub mod dimension;
pub mod error;
mod fit;
pub mod history;
pub mod integrator;
pub mod model;
pub mod spectral;
pub mod validate;

pub use error::{Error, Result};
pub use spectral::{GridState, SpectralState, Spectrum};
