//! The run configuration: one domain, one coefficient set, and optional
//! parameters for each suite.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dtnlab_core::coeff::CoefficientConfig;
use dtnlab_core::convex::ConvexSetId;
use dtnlab_core::mesh::DomainSpec;
use dtnlab_core::verify::{Distribution, SampleSpec, TimeGrid};

use crate::CliError;

pub const DEFAULT_SEED: u64 = 20_240_601;
pub const DEFAULT_SAMPLES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub domain: DomainSpec,
    #[serde(default)]
    pub coefficients: CoefficientConfig,
    #[serde(default)]
    pub suites: Suites,
    /// Report path used when `--out` is absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
}

/// Per-suite parameters. An absent suite runs with defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "kebab-case")]
pub struct Suites {
    #[serde(default)]
    pub trace_hypotheses: SuiteParams,
    #[serde(default)]
    pub invariance: SuiteParams,
    #[serde(default)]
    pub domination_form: SuiteParams,
    #[serde(default)]
    pub positivity: SuiteParams,
    #[serde(default)]
    pub contractivity: SuiteParams,
    #[serde(default)]
    pub diamagnetic: SuiteParams,
    #[serde(default)]
    pub gauge: SuiteParams,
    #[serde(default)]
    pub scan_threshold: SuiteParams,
    #[serde(default)]
    pub fit_trace: SuiteParams,
    #[serde(default)]
    pub fit_poisson: SuiteParams,
}

/// Parameters shared by the suites; each suite reads the fields it needs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, rename_all = "camelCase")]
pub struct SuiteParams {
    pub seed: Option<u64>,
    pub samples: Option<usize>,
    pub t_grid: Option<TimeGrid>,
    /// Replaces the built-in tolerance of every pass/fail record.
    pub tolerance: Option<f64>,
    /// Convex sets for the invariance suite.
    pub sets: Option<Vec<ConvexSetId>>,
    /// Mesh family members for refinement studies, coarsest first.
    pub refinement: Option<Vec<DomainSpec>>,
    /// Gauge function and its gradient.
    pub chi: Option<String>,
    pub grad: Option<[String; 2]>,
    /// Number of eigenvalues compared by the gauge suite.
    pub count: Option<usize>,
    /// Threshold scan values of `a0`.
    pub lambdas: Option<Vec<f64>>,
    /// Whether `lambdas` are in units of the Dirichlet ground eigenvalue.
    pub relative: Option<bool>,
    /// Fit window for the trace exponent.
    pub window: Option<[f64; 2]>,
    /// Kernel times for the Poisson fit.
    pub times: Option<Vec<f64>>,
}

impl SuiteParams {
    pub fn sample_spec(&self) -> SampleSpec {
        SampleSpec::new(
            self.seed.unwrap_or(DEFAULT_SEED),
            self.samples.unwrap_or(DEFAULT_SAMPLES),
            Distribution::ComplexGaussian,
        )
    }

    pub fn grid(&self) -> TimeGrid {
        self.t_grid.unwrap_or(TimeGrid::new(0.1, 1.0, 3, false))
    }
}

impl Suites {
    fn named(&self) -> [(&'static str, &SuiteParams, bool); 10] {
        // The flag marks suites that evaluate kernels and need t > 0.
        [
            ("trace-hypotheses", &self.trace_hypotheses, false),
            ("invariance", &self.invariance, false),
            ("domination-form", &self.domination_form, false),
            ("positivity", &self.positivity, true),
            ("contractivity", &self.contractivity, true),
            ("diamagnetic", &self.diamagnetic, true),
            ("gauge", &self.gauge, false),
            ("scan-threshold", &self.scan_threshold, true),
            ("fit-trace", &self.fit_trace, false),
            ("fit-poisson", &self.fit_poisson, true),
        ]
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.coefficients
            .compile()
            .map_err(|e| CliError::Config(format!("coefficients: {e}")))?;
        for (name, params, kernel) in self.suites.named() {
            let field = |f: &str| format!("suites.{name}.{f}");
            let grid = params.grid();
            grid.points()
                .map_err(|e| CliError::Config(format!("{}: {e}", field("tGrid"))))?;
            if kernel && grid.min <= 0.0 {
                return Err(CliError::Config(format!(
                    "{}: min must be > 0 for kernel suites",
                    field("tGrid")
                )));
            }
            if params.samples == Some(0) {
                return Err(CliError::Config(format!("{}: must be positive", field("samples"))));
            }
            if let Some(tol) = params.tolerance {
                if !(tol.is_finite() && tol >= 0.0) {
                    return Err(CliError::Config(format!(
                        "{}: must be finite and >= 0",
                        field("tolerance")
                    )));
                }
            }
            if let Some(times) = &params.times {
                if times.is_empty() || times.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                    return Err(CliError::Config(format!(
                        "{}: need positive finite times",
                        field("times")
                    )));
                }
            }
            if let Some(refinement) = &params.refinement {
                if refinement.is_empty() {
                    return Err(CliError::Config(format!("{}: must not be empty", field("refinement"))));
                }
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON (sorted keys) without the output path.
    pub fn hash(&self) -> String {
        let canonical = RunConfig {
            output: None,
            ..self.clone()
        };
        let value = serde_json::to_value(&canonical).expect("config serializes");
        let text = serde_json::to_string(&value).expect("value serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// The refinement family for a suite: the configured list, or the
    /// domain at one quarter, one half and full resolution when it divides.
    pub fn refinement(&self, params: &SuiteParams) -> Vec<DomainSpec> {
        if let Some(r) = &params.refinement {
            return r.clone();
        }
        let coarsen = |d: DomainSpec| match d {
            DomainSpec::Square { n } if n % 2 == 0 && n >= 4 => Some(DomainSpec::Square { n: n / 2 }),
            DomainSpec::Disk { m, rings } if m % 2 == 0 && rings % 2 == 0 && m >= 16 && rings >= 2 => {
                Some(DomainSpec::Disk {
                    m: m / 2,
                    rings: rings / 2,
                })
            }
            _ => None,
        };
        let mut family = vec![self.domain];
        for _ in 0..2 {
            match coarsen(family[0]) {
                Some(d) => family.insert(0, d),
                None => break,
            }
        }
        family
    }
}
