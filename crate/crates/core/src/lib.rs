//! Secrecy capacity of the amplitude-constrained vector Gaussian wiretap channel.

pub mod bessel;
pub mod density;
pub mod error;
pub mod optimizer;
pub mod quad;
pub mod radial;
pub mod small_amplitude;

pub use bessel::{h_ratio, h_ratio_bounds, scaled_bessel_i, BesselOrder};
pub use error::{Error, Result};
pub use radial::{q_limit_pdf, sample_radial, NoncentralChiSquare};
pub use quad::{
    integrate, integrate_over_s, mc_radial_expectation, radial_expectation, try_radial_expectation,
    McEstimate, QuadratureSpec,
};
pub use small_amplitude::{
    asymptotic_c, asymptotic_integral, f_functional, find_r_bar, gaussian_benchmark, mmse_limit_gap,
    ptp_limit_gap, r_bar_mmse, r_bar_ptp, secrecy_capacity_small, sufficient_radius, AsymptoticConstant,
    ChannelParams, LimitGap, SmallAmplitudeResult,
};
pub use density::{
    count_sign_changes_g, default_g_grid, diagnose_g, g_function, kkt_verify, xi_derivative, xi_general, xi_sphere,
    GDiagnostic, KktReport, RadialPmf, SecrecyDensity,
};
pub use optimizer::{optimize, secrecy_rate, OptimizerConfig, OptimizerOutcome, WeightUpdate};
