//! Link-level simulation of channel acquisition in wideband massive
//! MIMO-OFDM with adjustable phase shift pilots.
//!
//! The crate is organized around the angle-delay domain picture of a
//! half-wavelength ULA receiving OFDM symbols:
//!
//! * [`transforms`] - DFT/steering kernels, cyclic shifts, Bessel J0.
//! * [`channel`] - angle-delay power/response matrices, their statistics,
//!   space-frequency transforms and scenario presets.
//! * [`pilots`] - basic sequences, phase-shifted pilots, multi-symbol pilot
//!   construction and schedules.
//! * [`estimation`] - observation synthesis, decorrelation, per-element MMSE
//!   estimation/prediction and analytic/empirical MSE evaluation.
//! * [`scheduling`] - greedy phase-shift scheduling and the exhaustive
//!   reference search.
//! * [`experiments`] - experiment specs, MSE sweeps, spectral-efficiency
//!   evaluation and CSV output.
//!
//! All numeric code is generic over the real scalar type through
//! [`scalar::Scalar`]; `f64` aliases for the main types are exported at the
//! crate root.

pub mod channel;
pub mod error;
pub mod estimation;
pub mod experiments;
pub mod pilots;
pub mod rng;
pub mod scalar;
pub mod scheduling;
pub mod transforms;

pub use error::{ApspError, Result};
pub use scalar::Scalar;

use num_complex::Complex;

/// Complex number in the working precision.
pub type Cplx<T> = Complex<T>;

/// Default-precision (f64) aliases for the main domain types.
pub type C64 = Complex<f64>;
pub type ComplexMatrix64 = transforms::ComplexMatrix<f64>;
pub type SystemConfig64 = channel::SystemConfig<f64>;
pub type UtProfile64 = channel::UtProfile<f64>;
pub type Adcpm64 = channel::Adcpm<f64>;
pub type Adcrm64 = channel::Adcrm<f64>;
pub type Sfcrm64 = channel::Sfcrm<f64>;
pub type BasicPilot64 = pilots::BasicPilot<f64>;
pub type Pilot64 = pilots::Pilot<f64>;
pub type PilotSchedule64 = pilots::PilotSchedule<f64>;
pub type ObservationMatrix64 = estimation::ObservationMatrix<f64>;
pub type MseReport64 = estimation::MseReport<f64>;
pub type ScheduleResult64 = scheduling::ScheduleResult<f64>;
pub type ExperimentSpec64 = experiments::ExperimentSpec<f64>;
pub type MseRow64 = experiments::MseRow<f64>;
pub type RateReport64 = experiments::RateReport<f64>;
