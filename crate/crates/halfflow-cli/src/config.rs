//! Plain-text run configuration: TOML sections mirroring the library's
//! parameter structures, archivable alongside the run outputs.

use serde::Deserialize;

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub flow: FlowSection,
    #[serde(default)]
    pub initial: InitialSection,
    #[serde(default)]
    pub noise: Option<NoiseSection>,
    #[serde(default)]
    pub gluing: GluingSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub half_width: f64,
    pub points: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        // Flow-run default; verification suites use their own grids.
        Self {
            half_width: 400.0,
            points: 1 << 16,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSection {
    /// Time step as a fraction of the grid spacing.
    pub dt_factor: f64,
    pub t_end: f64,
    pub scheme: String,
    pub sample_stride: usize,
    /// Dump the full field every this many samples (0 = never).
    pub field_stride: usize,
}

impl Default for FlowSection {
    fn default() -> Self {
        Self {
            dt_factor: 0.25,
            t_end: 30.0,
            scheme: "semi-implicit-spectral".into(),
            sample_stride: 100,
            field_stride: 0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    /// `constant`, `bubble`, or `bubble-noise`.
    pub kind: String,
    pub mu: f64,
    pub xi: f64,
}

impl Default for InitialSection {
    fn default() -> Self {
        Self {
            kind: "bubble-noise".into(),
            mu: 1.0,
            xi: 0.0,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSection {
    pub epsilon: f64,
    pub center: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GluingSection {
    pub t0: f64,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub dt: f64,
    pub inner_points: usize,
    pub steps: usize,
    /// Compare the reconstructed map against a direct flow run.
    pub cross_check: bool,
    /// Bound reported for the raw mode projections.
    pub projection_tol: f64,
}

impl Default for GluingSection {
    fn default() -> Self {
        Self {
            t0: 10.0,
            rho: 0.1,
            sigma: 0.1,
            alpha: 0.5,
            dt: 0.02,
            inner_points: 0,
            steps: 50,
            cross_check: false,
            projection_tol: 0.1,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub half_width: f64,
    pub points: usize,
}

impl Default for VerifySection {
    fn default() -> Self {
        Self {
            half_width: 200.0,
            points: 1 << 14,
        }
    }
}

pub fn load(path: &std::path::Path) -> Result<RunConfig, String> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| format!("cannot read config {}: {e}", path.display()))?;
    toml::from_str(&text).map_err(|e| format!("cannot parse config {}: {e}", path.display()))
}
