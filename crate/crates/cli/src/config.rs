//! Experiment configuration shared by every subcommand.
//!
//! Keys are the long flag names. The same keys are accepted from a plain
//! `key = value` file (`#` starts a comment) and, for re-runs, from the
//! `inputs` object of a result envelope.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use suskit_core::kernels::Shape;
use suskit_core::typespace::MeshSpec;
use suskit_core::{Kernel, DEFAULT_SINGULAR_GRADING};

/// Error raised for bad input; it names the offending key.
#[derive(Debug)]
pub struct InvalidInput {
    pub field: String,
    pub reason: String,
}

impl InvalidInput {
    pub fn new(field: impl Into<String>, reason: impl Into<String>) -> Self {
        InvalidInput {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl fmt::Display for InvalidInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {}: {}", self.field, self.reason)
    }
}

impl std::error::Error for InvalidInput {}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kernel: Option<String>,
    pub mesh: Option<String>,
    /// Multiplier of the kernel; 1 when absent.
    pub lambda: Option<f64>,
    /// `LO:HI:COUNT`, endpoints included.
    pub lambda_grid: Option<String>,
    /// Vertex counts, one run (or row) per entry.
    pub n: Vec<usize>,
    pub reps: usize,
    pub seed: u64,
    pub edge_rule: String,
    /// `iid` (types drawn from the mesh) or `grid` (`x_i = i/n`).
    pub vertices: String,
    pub strategy: String,
    pub tol: f64,
    pub j_max: usize,
    /// Threshold route: `norm`, `solvability` or `both`.
    pub method: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    /// Bisection width for the solvability route.
    pub bracket_tol: f64,
    pub k_max: usize,
    pub runs: u64,
    pub cap: u64,
    pub variant: String,
    /// Relative tolerance applied by `verify`.
    pub rel_tol: f64,
    pub output: Option<String>,
    pub format: Format,
    pub csv: Option<String>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kernel: None,
            mesh: None,
            lambda: None,
            lambda_grid: None,
            n: Vec::new(),
            reps: 20,
            seed: 0,
            edge_rule: "clip".into(),
            vertices: "iid".into(),
            strategy: "auto".into(),
            tol: 1e-10,
            j_max: 1_000_000,
            method: "norm".into(),
            lo: None,
            hi: None,
            bracket_tol: 1e-6,
            k_max: 10,
            runs: 100_000,
            cap: 1_000_000,
            variant: "II".into(),
            rel_tol: 0.01,
            output: None,
            format: Format::Json,
            csv: None,
        }
    }
}

/// Every key accepted on the command line and in config files.
pub const KEYS: &[&str] = &[
    "kernel",
    "mesh",
    "lambda",
    "lambda-grid",
    "n",
    "reps",
    "seed",
    "edge-rule",
    "vertices",
    "strategy",
    "tol",
    "j-max",
    "method",
    "lo",
    "hi",
    "bracket-tol",
    "k-max",
    "runs",
    "cap",
    "variant",
    "rel-tol",
    "output",
    "format",
    "csv",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, InvalidInput> {
    value
        .trim()
        .parse()
        .map_err(|_| InvalidInput::new(key, format!("cannot parse {value:?}")))
}

fn positive(key: &str, value: f64) -> Result<f64, InvalidInput> {
    if value > 0.0 && value.is_finite() {
        Ok(value)
    } else {
        Err(InvalidInput::new(key, format!("must be positive, got {value}")))
    }
}

impl ExperimentConfig {
    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), InvalidInput> {
        let v = value.trim();
        match key {
            "kernel" => self.kernel = Some(v.to_owned()),
            "mesh" | "space" => self.mesh = Some(v.to_owned()),
            "lambda" => self.lambda = Some(parse(key, v)?),
            "lambda-grid" => self.lambda_grid = Some(v.to_owned()),
            "n" => {
                self.n = v
                    .split(',')
                    .map(|s| parse::<f64>(key, s).and_then(|x| as_count(key, x)))
                    .collect::<Result<_, _>>()?
            }
            "reps" => self.reps = parse(key, v)?,
            "seed" => self.seed = parse(key, v)?,
            "edge-rule" => self.edge_rule = v.to_owned(),
            "vertices" => self.vertices = v.to_owned(),
            "strategy" => self.strategy = v.to_owned(),
            "tol" => self.tol = positive(key, parse(key, v)?)?,
            "j-max" => self.j_max = parse(key, v)?,
            "method" => self.method = v.to_owned(),
            "lo" => self.lo = Some(parse(key, v)?),
            "hi" => self.hi = Some(parse(key, v)?),
            "bracket-tol" => self.bracket_tol = positive(key, parse(key, v)?)?,
            "k-max" => self.k_max = parse(key, v)?,
            "runs" => self.runs = parse::<f64>(key, v).and_then(|x| as_count(key, x))? as u64,
            "cap" => self.cap = parse::<f64>(key, v).and_then(|x| as_count(key, x))? as u64,
            "variant" => self.variant = v.to_owned(),
            "rel-tol" => self.rel_tol = positive(key, parse(key, v)?)?,
            "output" => self.output = Some(v.to_owned()),
            "format" => {
                self.format = match v {
                    "json" => Format::Json,
                    "csv" => Format::Csv,
                    _ => return Err(InvalidInput::new(key, "expected json | csv")),
                }
            }
            "csv" => self.csv = Some(v.to_owned()),
            _ => return Err(InvalidInput::new(key, format!("unknown key; known keys: {}", KEYS.join(", ")))),
        }
        Ok(())
    }

    /// Load a config file: either `key = value` lines or a JSON result
    /// envelope whose `inputs` are taken over wholesale.
    pub fn from_file(path: &Path) -> Result<Self, InvalidInput> {
        let text = std::fs::read_to_string(path).map_err(|e| InvalidInput::new("config", format!("{}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| InvalidInput::new("config", e.to_string()))?;
            let inputs = value.get("inputs").cloned().unwrap_or(value);
            return serde_json::from_value(inputs).map_err(|e| InvalidInput::new("config", e.to_string()));
        }
        let mut config = Self::default();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or_default().trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| InvalidInput::new("config", format!("line {}: expected key = value", lineno + 1)))?;
            config.set(key.trim(), value)?;
        }
        Ok(config)
    }

    pub fn kernel(&self) -> Result<Kernel, InvalidInput> {
        let spec = self.kernel.as_deref().ok_or_else(|| InvalidInput::new("kernel", "required"))?;
        spec.parse().map_err(|e: suskit_core::Error| InvalidInput::new("kernel", e.to_string()))
    }

    /// The mesh, falling back to a default suited to the kernel's shape.
    pub fn mesh_spec(&self, kernel: &Kernel) -> Result<MeshSpec, InvalidInput> {
        match &self.mesh {
            Some(s) => s.parse().map_err(|e: suskit_core::Error| InvalidInput::new("mesh", e.to_string())),
            None => Ok(default_mesh(kernel)),
        }
    }

    pub fn lambda(&self) -> Result<f64, InvalidInput> {
        let l = self.lambda.unwrap_or(1.0);
        if l >= 0.0 && l.is_finite() {
            Ok(l)
        } else {
            Err(InvalidInput::new("lambda", format!("must be a finite non-negative number, got {l}")))
        }
    }

    pub fn lambda_grid(&self) -> Result<Vec<f64>, InvalidInput> {
        let spec = self.lambda_grid.as_deref().ok_or_else(|| InvalidInput::new("lambda-grid", "required"))?;
        let parts: Vec<&str> = spec.split(':').collect();
        let [lo, hi, count] = parts[..] else {
            return Err(InvalidInput::new("lambda-grid", "expected LO:HI:COUNT"));
        };
        let lo: f64 = parse("lambda-grid", lo)?;
        let hi: f64 = parse("lambda-grid", hi)?;
        let count: usize = parse("lambda-grid", count)?;
        if !(lo >= 0.0 && hi >= lo) || count == 0 || (count == 1 && hi != lo) {
            return Err(InvalidInput::new("lambda-grid", format!("bad grid {spec:?}")));
        }
        if count == 1 {
            return Ok(vec![lo]);
        }
        Ok((0..count).map(|i| lo + (hi - lo) * i as f64 / (count - 1) as f64).collect())
    }

    pub fn n_list(&self) -> Result<&[usize], InvalidInput> {
        if self.n.is_empty() {
            return Err(InvalidInput::new("n", "required"));
        }
        Ok(&self.n)
    }

    /// Fill in defaults that depend on other keys, so the emitted config
    /// re-runs without them.
    pub fn resolve(&mut self) -> Result<(), InvalidInput> {
        if self.kernel.is_some() && self.mesh.is_none() {
            let kernel = self.kernel()?;
            self.mesh = Some(default_mesh(&kernel).to_string());
        }
        Ok(())
    }
}

fn as_count(key: &str, x: f64) -> Result<usize, InvalidInput> {
    if x >= 1.0 && x.fract() == 0.0 && x < 1e15 {
        Ok(x as usize)
    } else {
        Err(InvalidInput::new(key, format!("expected a positive integer, got {x}")))
    }
}

/// Atom for constant kernels, equal masses for finite ones, a graded mesh
/// for kernels singular at the origin and a uniform mesh otherwise.
pub fn default_mesh(kernel: &Kernel) -> MeshSpec {
    match kernel.shape() {
        Shape::Constant(_) => MeshSpec::Atom,
        Shape::Finite { n, .. } => MeshSpec::Finite {
            masses: vec![1.0 / *n as f64; *n],
        },
        Shape::Chkns | Shape::Dubins => MeshSpec::Graded {
            m: 2000,
            gamma: DEFAULT_SINGULAR_GRADING,
        },
        Shape::Rank1(_) | Shape::Max(_) => MeshSpec::Uniform { m: 2000 },
    }
}
