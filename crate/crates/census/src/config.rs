//! Experiment configuration read from TOML.

use std::fs;
use std::path::{Path, PathBuf};

use euler_twist::hurwitz::DhConfig;
use euler_twist::phase::SolverConfig;
use euler_twist::poly::SynthesisConfig;
use euler_twist::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub prime_limit: u64,
    pub family: FamilySpec,
    pub polynomial: PolySpec,
    pub audit: AuditSpec,
    pub densities: DensitySpec,
    pub solve: SolveSpec,
    pub solver: SolverConfig,
    pub synthesis: SynthesisConfig,
    pub scan: ScanSpec,
    pub dh: DhSpec,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: "mod5".into(),
            prime_limit: 1_000_000,
            family: FamilySpec::default(),
            polynomial: PolySpec::default(),
            audit: AuditSpec::default(),
            densities: DensitySpec::default(),
            solve: SolveSpec::default(),
            solver: SolverConfig::default(),
            synthesis: SynthesisConfig::default(),
            scan: ScanSpec::default(),
            dh: DhSpec::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FamilySpec {
    pub modulus: u64,
    /// Indices into the character table; 0 is principal.
    pub characters: Vec<usize>,
    pub streams: Vec<StreamSpec>,
}

impl Default for FamilySpec {
    fn default() -> Self {
        Self {
            modulus: 5,
            characters: vec![1, 2],
            streams: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StreamSpec {
    pub label: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolySpec {
    pub text: Option<String>,
    pub path: Option<PathBuf>,
}

impl Default for PolySpec {
    fn default() -> Self {
        Self {
            text: Some("1:1,0 | 1 0\n1:-1,0 | 0 1\n".into()),
            path: None,
        }
    }
}

impl PolySpec {
    pub fn source(&self) -> Result<String> {
        match (&self.text, &self.path) {
            (_, Some(p)) => Ok(fs::read_to_string(p)?),
            (Some(t), None) => Ok(t.clone()),
            (None, None) => Err(Error::Precondition("no polynomial given".into())),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSpec {
    pub x_max: f64,
}

impl Default for AuditSpec {
    fn default() -> Self {
        Self { x_max: 1e6 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DensitySpec {
    pub alphas: Vec<f64>,
    /// Primes above this form the ambient set.
    pub above: f64,
}

impl Default for DensitySpec {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 0.3, 0.5, 0.9],
            above: 1.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSpec {
    /// One [re, im] target per family member.
    pub targets: Vec<[f64; 2]>,
    /// `linear`, `euler` or `both`.
    pub mode: String,
}

impl Default for SolveSpec {
    fn default() -> Self {
        Self {
            targets: vec![[0.5, 0.0], [0.0, -0.5]],
            mode: "both".into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSpec {
    pub band: (f64, f64),
    pub a: f64,
    pub window_length: f64,
    pub windows: usize,
    pub step: f64,
}

impl Default for ScanSpec {
    fn default() -> Self {
        Self {
            band: (1.01, 1.3),
            a: 0.0,
            window_length: 50.0,
            windows: 5,
            step: 0.01,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DhSpec {
    pub l: u64,
    pub k: u64,
    #[serde(flatten)]
    pub search: DhConfig,
}

impl Default for DhSpec {
    fn default() -> Self {
        Self {
            l: 2,
            k: 5,
            search: DhConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let cfg: Self = toml::from_str(&text).map_err(|e| Error::Parse {
            line: 0,
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.prime_limit < 1000 {
            return bad(format!("prime_limit {} below 1000", self.prime_limit));
        }
        if self.family.modulus == 0 {
            return bad("modulus must be positive".into());
        }
        for s in &self.family.streams {
            if !s.path.exists() {
                return bad(format!("stream file {} does not exist", s.path.display()));
            }
        }
        if let Some(p) = &self.polynomial.path {
            if !p.exists() {
                return bad(format!("polynomial file {} does not exist", p.display()));
            }
        }
        let (s1, s2) = self.scan.band;
        if !(s1 > 1.0 && s2 > s1) {
            return bad(format!("scan band ({s1}, {s2}) must satisfy 1 < σ1 < σ2"));
        }
        if !(self.scan.window_length > 0.0 && self.scan.step > 0.0) || self.scan.windows == 0 {
            return bad("scan windows, window length and step must be positive".into());
        }
        if !(self.audit.x_max >= 1e3 && self.audit.x_max <= self.prime_limit as f64) {
            return bad(format!(
                "audit x_max {} must lie in [1e3, prime_limit]",
                self.audit.x_max
            ));
        }
        if self
            .densities
            .alphas
            .iter()
            .any(|a| !(0.0..=1.0).contains(a))
        {
            return bad("densities must lie in [0, 1]".into());
        }
        if !["linear", "euler", "both"].contains(&self.solve.mode.as_str()) {
            return bad(format!("solve mode `{}`", self.solve.mode));
        }
        Ok(())
    }

    /// Canonical TOML used for the inputs digest.
    pub fn canonical(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
