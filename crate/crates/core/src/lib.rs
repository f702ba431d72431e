//! Large deviations of cumulative rewards in constrained pinning (renewal)
//! models.
//!
//! A constrained pinning model is a Gibbs tilt of a discrete renewal process
//! with Boltzmann weights `a(s) = e^{v(s)} p(s)` on waiting times, conditioned
//! on a renewal at the horizon `t`. Every renewal carries a deterministic
//! vector reward `f(s)`; the cumulative reward `W_t` obeys a large deviation
//! principle whose rate function `I` is the Legendre transform of the free
//! energy `z(k) - z(0)`.
//!
//! The crate is organised bottom-up:
//!
//! * [`model`]: weight tables with analytic power-law tails, rewards, base
//!   laws, the statistical-mechanics presets, and assumption checks.
//! * [`series`]: certified evaluation of the tilted series and its moments.
//! * [`freeenergy`]: `z(k)`, its gradient and Hessian, subdifferentials and
//!   the criticality test.
//! * [`rate`]: the rate function on all of its branches, the effective
//!   domain, the closed-form suite for renewal counts, dimension reduction.
//! * [`exact`]: finite-`t` oracles (partition-function recursion, reward
//!   distributions, enumeration, renewal masses).
//! * [`sampler`]: exact path sampling and deviation-probability curves.

pub mod error;
pub mod exact;
pub mod freeenergy;
pub mod model;
pub mod rate;
pub mod sampler;
pub mod series;

pub use error::{Error, Result};
pub use freeenergy::{criticality, free_energy, CriticalityReport, FreeEnergyPoint, Subdifferential};
pub use model::{BaseLaw, Model, RewardSpec, TailSpec, ValidationReport, WeightModel};
pub use rate::{rate_at, Branch, RateResult, RateSolver};
pub use series::SeriesValue;
