//! JSON run configuration and the two-sided error contract of the binary:
//! configuration problems exit with code 3, numerical failures with code 2.

use std::path::{Path, PathBuf};

use serde::Deserialize;

/// Errors surfaced by the binary, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable or invalid configuration, out-of-range
    /// parameters, spectral samples violating a precondition. Exit code 3.
    Config(String),
    /// A computation ran but failed a numerical guard. Exit code 2.
    Numeric(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Numeric(msg) => write!(f, "numerical failure: {msg}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 3,
            CliError::Numeric(_) => 2,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
}

impl From<zcf_core::Error> for CliError {
    fn from(e: zcf_core::Error) -> Self {
        use zcf_core::Error as E;
        match &e {
            // These arise from user-chosen parameters (domain extents,
            // contour heights, spectral samples), not from the numerics.
            E::InvalidInput(_)
            | E::DomainError { .. }
            | E::EtaViolation { .. }
            | E::SectorError { .. }
            | E::PoleHit { .. }
            | E::SpectraClash { .. } => CliError::Config(e.to_string()),
            _ => CliError::Numeric(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// One run scenario: a potential, grids, spectral samples and tolerances.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Free-form scenario label echoed in the summary line.
    pub scenario: String,
    pub potential: PotentialSpec,
    #[serde(default = "default_domain")]
    pub domain: DomainSpec,
    /// x-coordinates of report points; must lie inside the domain.
    #[serde(default = "default_report_x")]
    pub report_x: Vec<f64>,
    /// t-coordinates of report points; must lie inside the domain.
    #[serde(default = "default_report_t")]
    pub report_t: Vec<f64>,
    /// Spectral samples as [Re z, Im z] pairs.
    #[serde(default = "default_z_samples")]
    pub z_samples: Vec<[f64; 2]>,
    /// Integration density for x- and t-propagation.
    #[serde(default = "default_spu")]
    pub steps_per_unit: usize,
    /// Denser stepping for the stiff Weyl time evolution.
    #[serde(default = "default_evolve_spu")]
    pub evolve_steps_per_unit: usize,
    /// Time horizon of the `weyl-evolve` comparison.
    #[serde(default = "default_evolve_t")]
    pub evolve_t: f64,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub invert: InvertSpec,
    /// Output directory; the --out flag overrides it.
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Which potential v(x, t) drives the run. Complex scalars are [re, im]
/// pairs; complex matrices are row-major lists of such pairs.
#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PotentialSpec {
    /// The free system v = 0 with block size p.
    Zero { p: usize },
    /// Constant scalar potential v = value (p = 1).
    Constant { value: [f64; 2] },
    /// Dressed zero seed: `a1` is the n x n parameter matrix (spectrum in
    /// the open upper half plane), `pi1` the n x 2p seed of the first
    /// generator; the second generator and S follow from the adjoint
    /// pairing.
    GbdtSoliton { a1: Vec<Vec<[f64; 2]>>, pi1: Vec<Vec<[f64; 2]>> },
    /// Scalar samples read from a CSV file with rows x, t, Re v, Im v on a
    /// rectilinear grid; values in between are bilinearly interpolated.
    Tabulated { path: PathBuf, bound: f64 },
}

#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub x_max: f64,
    pub t_max: f64,
    pub nx: usize,
    pub nt: usize,
}

fn default_domain() -> DomainSpec {
    DomainSpec { x_max: 8.0, t_max: 2.0, nx: 32, nt: 8 }
}

fn default_report_x() -> Vec<f64> {
    vec![0.5, 1.0, 2.0]
}

fn default_report_t() -> Vec<f64> {
    vec![0.25, 0.5, 1.0]
}

fn default_z_samples() -> Vec<[f64; 2]> {
    vec![[0.0, -4.0], [0.5, -5.0]]
}

fn default_spu() -> usize {
    400
}

fn default_evolve_spu() -> usize {
    10_000
}

fn default_evolve_t() -> f64 {
    0.4
}

/// Per-check pass thresholds; all must be positive.
#[derive(Deserialize, Clone, Copy)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub factorization: f64,
    pub weyl_gap: f64,
    pub recovery_sup: f64,
    pub mkdv: f64,
    pub darboux_ode: f64,
    pub zero_curvature: f64,
    pub identity_drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            factorization: 1e-6,
            weyl_gap: 1e-4,
            recovery_sup: 1e-2,
            mkdv: 1e-4,
            darboux_ode: 1e-5,
            zero_curvature: 1e-5,
            identity_drift: 1e-8,
        }
    }
}

/// Parameters of the `invert` pipeline.
#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields, default)]
pub struct InvertSpec {
    /// Interval length of the recovery.
    pub l: f64,
    /// Number of grid cells on [0, l].
    pub n: usize,
    /// Truncation radius of the boundary-data transform.
    pub a_trunc: f64,
    /// Contour height; None picks -(2 margin + 1). A Weyl table fixes it
    /// to twice the table's contour height.
    pub eta: Option<f64>,
    /// Optional file of Weyl samples replacing the potential as the data
    /// source.
    pub weyl_table: Option<WeylTableSpec>,
}

impl Default for InvertSpec {
    fn default() -> Self {
        InvertSpec { l: 1.0, n: 60, a_trunc: 32.0, eta: None, weyl_table: None }
    }
}

/// CSV file of Weyl values along one horizontal contour, with rows
/// Re z, Im z, Re phi, Im phi, plus the sup-norm bound of the underlying
/// potential.
#[derive(Deserialize, Clone)]
#[serde(deny_unknown_fields)]
pub struct WeylTableSpec {
    pub path: PathBuf,
    pub margin: f64,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::config(format!("cannot parse {}: {e}", path.display())))
    }

    /// Cross-field checks shared by every command. Runs after the --steps
    /// override so the flag can repair an undersized configuration.
    pub fn validate(&self) -> CliResult<()> {
        let d = &self.domain;
        if !(d.x_max > 0.0) || !(d.t_max > 0.0) {
            return Err(CliError::config("domain extents must be positive"));
        }
        if d.nx == 0 || d.nt == 0 {
            return Err(CliError::config("domain grid sizes must be at least 1"));
        }
        if self.steps_per_unit == 0 || self.evolve_steps_per_unit == 0 {
            return Err(CliError::config("integration densities must be positive"));
        }
        if !(self.evolve_t > 0.0) {
            return Err(CliError::config("evolve_t must be positive"));
        }
        let t = &self.tolerances;
        let tols = [
            t.factorization,
            t.weyl_gap,
            t.recovery_sup,
            t.mkdv,
            t.darboux_ode,
            t.zero_curvature,
            t.identity_drift,
        ];
        if tols.iter().any(|v| !(*v > 0.0)) {
            return Err(CliError::config("all tolerances must be positive"));
        }
        for &x in &self.report_x {
            if !(0.0..d.x_max).contains(&x) {
                return Err(CliError::config(format!(
                    "report x = {x} outside the domain [0, {})",
                    d.x_max
                )));
            }
        }
        for &t in &self.report_t {
            if !(0.0..d.t_max).contains(&t) {
                return Err(CliError::config(format!(
                    "report t = {t} outside the domain [0, {})",
                    d.t_max
                )));
            }
        }
        if self.report_x.is_empty() || self.report_t.is_empty() {
            return Err(CliError::config("report grids must be non-empty"));
        }
        let inv = &self.invert;
        if !(inv.l > 0.0) || !(inv.a_trunc > 0.0) {
            return Err(CliError::config("invert.l and invert.a_trunc must be positive"));
        }
        if inv.n < 5 {
            return Err(CliError::config("invert.n must be at least 5"));
        }
        if let Some(eta) = inv.eta {
            if !(eta < 0.0) {
                return Err(CliError::config("invert.eta must be negative"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal() -> serde_json::Value {
        serde_json::json!({
            "scenario": "unit",
            "potential": { "type": "zero", "p": 1 }
        })
    }

    fn parse(v: serde_json::Value) -> CliResult<RunConfig> {
        let cfg: RunConfig = serde_json::from_value(v)
            .map_err(|e| CliError::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = parse(minimal()).unwrap();
        assert_eq!(cfg.steps_per_unit, 400);
        assert_eq!(cfg.z_samples.len(), 2);
        assert!(cfg.tolerances.factorization > 0.0);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v = minimal();
        v["surprise"] = serde_json::json!(1);
        assert!(parse(v).is_err());
    }

    #[test]
    fn nonpositive_tolerances_are_rejected() {
        let mut v = minimal();
        v["tolerances"] = serde_json::json!({ "factorization": 0.0 });
        let err = parse(v).err().expect("zero tolerance must fail");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn report_points_outside_the_domain_are_rejected() {
        let mut v = minimal();
        v["domain"] = serde_json::json!({ "x_max": 1.0, "t_max": 1.0, "nx": 4, "nt": 4 });
        v["report_x"] = serde_json::json!([1.5]);
        assert!(parse(v).is_err());
    }

    #[test]
    fn numeric_and_config_errors_carry_distinct_exit_codes() {
        assert_eq!(CliError::config("x").exit_code(), 3);
        assert_eq!(CliError::Numeric("x".into()).exit_code(), 2);
        let mapped: CliError = zcf_core::Error::invalid("bad").into();
        assert_eq!(mapped.exit_code(), 3);
        let numeric: CliError =
            (zcf_core::Error::SolveFailure { residual: 1.0, tol: 1e-8 }).into();
        assert_eq!(numeric.exit_code(), 2);
    }
}
