//! Receptive fields over frequency bins × frames.
//!
//! [`analytic_rf_tdnn`] derives them from the model config,
//! [`gradient_rf_oracle`] measures them on built networks by probing input
//! gradients, and [`analytic_rf_2d`] gives dense 2-D conv stacks for
//! comparison.

mod analytic;
mod grid2d;
mod map;
mod oracle;

pub use analytic::{analytic_maps, analytic_rf_tdnn, rf_half_window, valid_blocks};
pub use grid2d::{analytic_rf_2d, resnet_layers, rf_extent_2d, Layer2d, RESNET34_BLOCKS};
pub use map::{emit_rf_panel, read_rf_csv, RFMap};
pub use oracle::{gradient_rf, gradient_rf_maps, gradient_rf_oracle, input_gradient_mask, ORACLE_DRAWS};
