//! Pipeline configuration.
//!
//! The on-disk format is flat `key=value` text with `#` comments. Key names
//! are fixed; unknown keys are rejected so a typo cannot silently fall back
//! to a default and change the physics of a run.

use std::fmt;
use std::path::Path;

use thiserror::Error;

/// Smoothing parameter: a fixed value for every subdomain, or per-subdomain
/// generalised cross validation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Smoothing {
    Fixed(f64),
    Gcv,
}

impl fmt::Display for Smoothing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Smoothing::Fixed(v) => write!(f, "{v}"),
            Smoothing::Gcv => write!(f, "gcv"),
        }
    }
}

/// Full parameter set for the reconstruction pipeline.
///
/// Lengths are in the units of the input scan (e.g. mm).
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    /// Neighbours used for the outlier statistic.
    pub denoise_nbrs: usize,
    /// Outlier cutoff, in standard deviations above the mean neighbour distance.
    pub denoise_threshold: f64,
    /// Grid step for grid-average downsampling.
    pub grid_step: f64,
    /// Neighbours used for PCA normal estimation.
    pub pca_nbrs: usize,
    /// Coarser downsampling step used only to build the normal similarity graph.
    pub coarse_grid_step: f64,
    /// Neighbours considered when building the normal similarity graph.
    pub graph_nbrs: usize,
    /// Off-surface point distance L.
    pub offset_l: f64,
    /// Minimum number of sites per subdomain.
    pub n_min: usize,
    /// Maximum number of sites per covering sphere at split time.
    pub n_max: usize,
    /// Factor applied to every subdomain radius to guarantee overlap.
    pub expand: f64,
    /// Polyharmonic spline order m (phi = r^(2m-d), log-weighted when even).
    pub spline_order: u32,
    /// Spatial dimension d; the pipeline operates in 3.
    pub dimension: u32,
    /// Smoothing parameter rho, or GCV.
    pub smoothing: Smoothing,
    /// Radius of the evaluation-domain mask around the augmented sites.
    pub alpha: f64,
    /// Grid step for isosurface sampling.
    pub iso_grid_step: f64,
}

impl Default for Config {
    fn default() -> Self {
        // Reference values for a hand-held scan in mm units; alpha sits at
        // the midpoint rule alpha = 5 L.
        Config {
            denoise_nbrs: 50,
            denoise_threshold: 0.15,
            grid_step: 0.5,
            pca_nbrs: 50,
            coarse_grid_step: 2.0,
            graph_nbrs: 10,
            offset_l: 1.0,
            n_min: 2000,
            n_max: 5000,
            expand: 1.1,
            spline_order: 3,
            dimension: 3,
            smoothing: Smoothing::Fixed(1e-3),
            alpha: 5.0,
            iso_grid_step: 0.25,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("nMin ({n_min}) exceeds nMax ({n_max})")]
    MinExceedsMax { n_min: usize, n_max: usize },

    #[error("kernel order m={m} is not valid in dimension d={d}: need 2m - d > 0")]
    KernelOrder { m: u32, d: u32 },

    #[error("dimension must be 2 or 3, got {0}")]
    Dimension(u32),

    #[error("smoothing must be >= 0, got {0}")]
    NegativeSmoothing(f64),

    #[error("expand must be >= 1, got {0}")]
    ExpandTooSmall(f64),

    #[error("{key} must be a positive length, got {value}")]
    NonPositiveLength { key: &'static str, value: f64 },

    #[error("{key} must be positive, got {value}")]
    NonPositiveCount { key: &'static str, value: usize },

    #[error("{key} must be finite")]
    NonFinite { key: &'static str },

    #[error("unknown configuration key '{0}'")]
    UnknownKey(String),

    #[error("duplicate configuration key '{0}'")]
    DuplicateKey(String),

    #[error("invalid value '{value}' for key '{key}': {message}")]
    InvalidValue {
        key: String,
        value: String,
        message: String,
    },

    #[error("malformed line {line}: expected 'key=value'")]
    MalformedLine { line: usize },
}

/// The recognised keys, in file order.
pub const CONFIG_KEYS: [&str; 15] = [
    "denoiseNbrs",
    "denoiseThreshold",
    "gridStep",
    "pcaNbrs",
    "coarseGridStep",
    "graphNbrs",
    "offsetL",
    "nMin",
    "nMax",
    "expand",
    "splineOrder",
    "dimension",
    "smoothing",
    "alpha",
    "isoGridStep",
];

impl Config {
    /// Check every structural invariant; each violation maps to a distinct error.
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, value) in [
            ("gridStep", self.grid_step),
            ("coarseGridStep", self.coarse_grid_step),
            ("offsetL", self.offset_l),
            ("alpha", self.alpha),
            ("isoGridStep", self.iso_grid_step),
        ] {
            if !value.is_finite() {
                return Err(ConfigError::NonFinite { key });
            }
            if value <= 0.0 {
                return Err(ConfigError::NonPositiveLength { key, value });
            }
        }
        for (key, value) in [
            ("denoiseNbrs", self.denoise_nbrs),
            ("pcaNbrs", self.pca_nbrs),
            ("graphNbrs", self.graph_nbrs),
            ("nMin", self.n_min),
            ("nMax", self.n_max),
        ] {
            if value == 0 {
                return Err(ConfigError::NonPositiveCount { key, value });
            }
        }
        if !self.denoise_threshold.is_finite() {
            return Err(ConfigError::NonFinite {
                key: "denoiseThreshold",
            });
        }
        if self.n_min > self.n_max {
            return Err(ConfigError::MinExceedsMax {
                n_min: self.n_min,
                n_max: self.n_max,
            });
        }
        if self.dimension != 2 && self.dimension != 3 {
            return Err(ConfigError::Dimension(self.dimension));
        }
        if 2 * self.spline_order <= self.dimension {
            return Err(ConfigError::KernelOrder {
                m: self.spline_order,
                d: self.dimension,
            });
        }
        if !self.expand.is_finite() {
            return Err(ConfigError::NonFinite { key: "expand" });
        }
        if self.expand < 1.0 {
            return Err(ConfigError::ExpandTooSmall(self.expand));
        }
        if let Smoothing::Fixed(rho) = self.smoothing {
            if !rho.is_finite() {
                return Err(ConfigError::NonFinite { key: "smoothing" });
            }
            if rho < 0.0 {
                return Err(ConfigError::NegativeSmoothing(rho));
            }
        }
        Ok(())
    }

    /// Advisory messages that do not block a run. The ridge shift for kernels
    /// with a negative 1/theta (m=2 or m=4 in d=3) subtracts from the diagonal
    /// of an indefinite system, which can move factorization inertia; worth a
    /// warning whenever smoothing is active there.
    pub fn advisories(&self) -> Vec<String> {
        let mut notes = Vec::new();
        let negative_theta = self.dimension == 3 && self.spline_order % 2 == 0;
        let smoothing_active = !matches!(self.smoothing, Smoothing::Fixed(rho) if rho == 0.0);
        if negative_theta && smoothing_active {
            notes.push(format!(
                "splineOrder {} in dimension 3 has a negative ridge constant 1/theta; \
                 the smoothing shift is subtractive and may change the inertia of the \
                 local systems",
                self.spline_order
            ));
        }
        if self.alpha < 3.0 * self.offset_l || self.alpha > 10.0 * self.offset_l {
            notes.push(format!(
                "alpha = {} is outside the recommended range [3L, 10L] = [{}, {}]",
                self.alpha,
                3.0 * self.offset_l,
                10.0 * self.offset_l
            ));
        }
        notes
    }

    /// Set one field from its textual key and value.
    pub fn set_key(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let bad = |message: &str| ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            message: message.to_string(),
        };
        fn parse_usize(key: &str, value: &str) -> Result<usize, ConfigError> {
            value.parse::<usize>().map_err(|e| ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
                message: e.to_string(),
            })
        }
        fn parse_f64(key: &str, value: &str) -> Result<f64, ConfigError> {
            value.parse::<f64>().map_err(|e| ConfigError::InvalidValue {
                key: key.to_string(),
                value: value.to_string(),
                message: e.to_string(),
            })
        }
        match key {
            "denoiseNbrs" => self.denoise_nbrs = parse_usize(key, value)?,
            "denoiseThreshold" => self.denoise_threshold = parse_f64(key, value)?,
            "gridStep" => self.grid_step = parse_f64(key, value)?,
            "pcaNbrs" => self.pca_nbrs = parse_usize(key, value)?,
            "coarseGridStep" => self.coarse_grid_step = parse_f64(key, value)?,
            "graphNbrs" => self.graph_nbrs = parse_usize(key, value)?,
            "offsetL" => self.offset_l = parse_f64(key, value)?,
            "nMin" => self.n_min = parse_usize(key, value)?,
            "nMax" => self.n_max = parse_usize(key, value)?,
            "expand" => self.expand = parse_f64(key, value)?,
            "splineOrder" => {
                self.spline_order = value.parse::<u32>().map_err(|_| bad("expected integer"))?
            }
            "dimension" => {
                self.dimension = value.parse::<u32>().map_err(|_| bad("expected integer"))?
            }
            "smoothing" => {
                self.smoothing = if value.eq_ignore_ascii_case("gcv") {
                    Smoothing::Gcv
                } else {
                    Smoothing::Fixed(parse_f64(key, value)?)
                }
            }
            "alpha" => self.alpha = parse_f64(key, value)?,
            "isoGridStep" => self.iso_grid_step = parse_f64(key, value)?,
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    /// Parse the flat `key=value` format. Every key may appear at most once;
    /// the result is validated before it is returned.
    pub fn from_key_values(text: &str) -> Result<Self, ConfigError> {
        let mut config = Config::default();
        let mut seen: Vec<String> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or(ConfigError::MalformedLine { line: idx + 1 })?;
            let key = key.trim();
            if seen.iter().any(|k| k == key) {
                return Err(ConfigError::DuplicateKey(key.to_string()));
            }
            seen.push(key.to_string());
            config.set_key(key, value)?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn from_file(path: &Path) -> crate::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| crate::Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Self::from_key_values(&text)?)
    }

    /// Serialise to the same `key=value` format accepted by `from_key_values`.
    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let value = match key {
                "denoiseNbrs" => self.denoise_nbrs.to_string(),
                "denoiseThreshold" => self.denoise_threshold.to_string(),
                "gridStep" => self.grid_step.to_string(),
                "pcaNbrs" => self.pca_nbrs.to_string(),
                "coarseGridStep" => self.coarse_grid_step.to_string(),
                "graphNbrs" => self.graph_nbrs.to_string(),
                "offsetL" => self.offset_l.to_string(),
                "nMin" => self.n_min.to_string(),
                "nMax" => self.n_max.to_string(),
                "expand" => self.expand.to_string(),
                "splineOrder" => self.spline_order.to_string(),
                "dimension" => self.dimension.to_string(),
                "smoothing" => self.smoothing.to_string(),
                "alpha" => self.alpha.to_string(),
                "isoGridStep" => self.iso_grid_step.to_string(),
                _ => unreachable!(),
            };
            out.push_str(key);
            out.push('=');
            out.push_str(&value);
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        Config::default().validate().unwrap();
    }

    #[test]
    fn paper_reference_values_accepted() {
        let mut c = Config::default();
        c.set_key("denoiseNbrs", "50").unwrap();
        c.set_key("denoiseThreshold", "0.15").unwrap();
        c.set_key("gridStep", "0.5").unwrap();
        c.set_key("pcaNbrs", "50").unwrap();
        c.set_key("coarseGridStep", "2.0").unwrap();
        c.set_key("graphNbrs", "10").unwrap();
        c.set_key("offsetL", "1.0").unwrap();
        c.set_key("nMin", "2000").unwrap();
        c.set_key("nMax", "5000").unwrap();
        c.set_key("expand", "1.1").unwrap();
        c.set_key("splineOrder", "3").unwrap();
        c.set_key("smoothing", "1e-3").unwrap();
        c.validate().unwrap();
    }

    #[test]
    fn each_violation_gets_its_own_error() {
        let mut c = Config::default();
        c.n_min = 10;
        c.n_max = 5;
        assert_eq!(
            c.validate(),
            Err(ConfigError::MinExceedsMax { n_min: 10, n_max: 5 })
        );

        let mut c = Config::default();
        c.spline_order = 1;
        c.dimension = 3;
        assert_eq!(c.validate(), Err(ConfigError::KernelOrder { m: 1, d: 3 }));

        let mut c = Config::default();
        c.smoothing = Smoothing::Fixed(-1.0);
        assert_eq!(c.validate(), Err(ConfigError::NegativeSmoothing(-1.0)));

        let mut c = Config::default();
        c.expand = 0.9;
        assert_eq!(c.validate(), Err(ConfigError::ExpandTooSmall(0.9)));

        let mut c = Config::default();
        c.grid_step = 0.0;
        assert_eq!(
            c.validate(),
            Err(ConfigError::NonPositiveLength {
                key: "gridStep",
                value: 0.0
            })
        );

        let mut c = Config::default();
        c.alpha = -2.0;
        assert_eq!(
            c.validate(),
            Err(ConfigError::NonPositiveLength {
                key: "alpha",
                value: -2.0
            })
        );

        let mut c = Config::default();
        c.pca_nbrs = 0;
        assert_eq!(
            c.validate(),
            Err(ConfigError::NonPositiveCount {
                key: "pcaNbrs",
                value: 0
            })
        );

        let mut c = Config::default();
        c.denoise_threshold = f64::NAN;
        assert_eq!(
            c.validate(),
            Err(ConfigError::NonFinite {
                key: "denoiseThreshold"
            })
        );
    }

    #[test]
    fn unknown_key_is_an_error() {
        let err = Config::from_key_values("gridStp=0.5\n").unwrap_err();
        assert_eq!(err, ConfigError::UnknownKey("gridStp".to_string()));
    }

    #[test]
    fn duplicate_key_is_an_error() {
        let err = Config::from_key_values("gridStep=0.5\ngridStep=0.7\n").unwrap_err();
        assert_eq!(err, ConfigError::DuplicateKey("gridStep".to_string()));
    }

    #[test]
    fn parses_comments_and_gcv() {
        let text = "# capsicum-style run\ngridStep = 0.5\nsmoothing = gcv\n";
        let c = Config::from_key_values(text).unwrap();
        assert_eq!(c.smoothing, Smoothing::Gcv);
        assert_eq!(c.grid_step, 0.5);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = Config::default();
        c.smoothing = Smoothing::Gcv;
        c.alpha = 2.25;
        let parsed = Config::from_key_values(&c.to_key_values()).unwrap();
        assert_eq!(parsed, c);
    }

    #[test]
    fn negative_theta_smoothing_gets_advisory() {
        let mut c = Config::default();
        c.spline_order = 2;
        assert!(!c.advisories().is_empty());
        c.spline_order = 3;
        c.alpha = 5.0 * c.offset_l;
        assert!(c.advisories().is_empty());
    }
}
