//! Samplers and densities for the parameter-noise models.

mod gamma;
mod hyp2f1;
mod posterior;
mod rng;
mod wishart;

pub use gamma::{sample_shifted_gamma, shifted_gamma_mgf, ShiftedGammaNoise};
pub use hyp2f1::{hyp2f1, MAX_TERMS as HYP2F1_MAX_TERMS};
pub use posterior::{
    conditional_correlation_pdf, scaled_inv_chi2_mean, scaled_inv_chi2_pdf,
    scaled_inv_chi2_variance, volatility_pdf,
};
pub use rng::RngStream;
pub use wishart::{
    sample_wishart, vol_corr_2d, wishart_mgf, WishartNoiseModel, WishartSampler,
};
