//! Simulator and decoder for a soft four-electrode capacitive tactile taxel.
//!
//! * [`physics`]: forward model from deformation, proximity and parasitics to
//!   the four mutual capacitances.
//! * [`decoder`]: normal strain, two-axis shear and stimulus class from frames.
//! * [`calibration`]: material and proximity fits, sensitivity sweeps and
//!   parameter files.
//! * [`readout`]: multiplexed conversion, quantization and the frame protocol.
//! * [`harness`]: scenario timelines, demonstrations and CSV/JSON export.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calibration;
pub mod decoder;
pub mod harness;
pub mod physics;
pub mod readout;
