//! System parameterisation, hypothesis checks, the generator and the
//! observation drift.

pub mod families;
pub mod generator;
pub mod hypotheses;
pub mod measure;
pub mod spec;
pub mod test_functions;

pub use families::{build_family, family_names, Params, Scenario, FAMILIES};
pub use generator::{apply_generator, apply_generator_with, GeneratorValue, GeneratorWorkspace};
pub use hypotheses::{validate_hypotheses, validate_hypotheses_with, HypothesisConfig, HypothesisEntry, HypothesisReport, Witness};
pub use measure::{LevyMeasure, MarkLaw, MarkRule, MarkSample, SampleKind};
pub use spec::{Dims, EvalScratch, Prior, SensorMixing, SystemSpec, SystemSpecBuilder, Variant};
pub use test_functions::{Bump, Constant, HermiteWindow, Monomial, SharedTest, TestFunction};

/// `σ₂⁻¹(t,y) b₂(t,x,y)`; `b̌₂` for the sensor variant.
pub fn observation_h(spec: &SystemSpec, t: f64, x: &[f64], y: &[f64]) -> crate::Result<Vec<f64>> {
    spec.observation_h(t, x, y)
}
