pub mod error;
pub mod linalg;
pub mod sdp;
pub mod metric;
pub mod calibration;
pub mod coefficients;
pub mod linear_risk;
pub mod support;
pub mod portfolio;
pub mod backtest;
