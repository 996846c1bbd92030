//! Linear sketches for f-moments of turnstile streams whose values live in a
//! finite abelian group.
//!
//! A triple Poisson (or binomial) tower sketches the stream; any f-moment
//! `Σ_v (f(x(v)) - f(0))` is then estimated at query time from the Fourier
//! transform of `f`. A sampling baseline with singleton detection is
//! included for comparison.
//!
//! The numeric layer is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases at the crate root fix it to `f64`. Sketch registers are integer
//! residues and do not depend on the scalar.

pub mod error;
pub mod estimator;
pub mod group;
pub mod math;
pub mod prf;
pub mod sampler;
pub mod scalar;
pub mod tower;

pub use error::{Error, Result};
pub use estimator::{
    aggregate_column, estimate_f, estimate_modulo, estimate_support, estimate_union,
    modulo_spectrum, predict_variance, truncation_correction, variance_factor, ColumnAggregates,
    EstimateOptions, EstimateReport, ModuloSource, RHatTable,
};
pub use group::{
    dft, idft, norms, reduce_mod, spectrum_norm_1, CharacterTable, FunctionTable, GroupDescriptor,
    GroupElement, Norms, SpectrumTable,
};
pub use math::{eta1_closed, eta1_quadrature, gamma_fn, riemann_gap_check, EtaParams, RiemannGap};
pub use num_complex::Complex;
pub use sampler::{
    classify_bucket, equal_memory_m_prime, ideal_oracle_summary, sample_f_moment, splitter_update,
    tau_gra_estimate, tau_gra_estimate_truncated, BucketClass, FingerprintBucket, GraEstimate,
    LevelSummary, Parity, SamplerSketch, TAU_STAR,
};
pub use scalar::Scalar;
pub use tower::{
    binomial_assign, cell_count, IntegerTowerSketch, SketchConfig, TowerMode, TowerParams,
    TowerSketch, COPIES,
};

pub type Function = FunctionTable<f64>;
pub type Spectrum = SpectrumTable<f64>;
pub type Report = EstimateReport<f64>;
pub type Aggregates = ColumnAggregates<f64>;
pub type RHat = RHatTable<f64>;
pub type Eta = EtaParams<f64>;
