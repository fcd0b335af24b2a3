//! Run configuration: defaults, then a `key = value` file with dotted
//! sections, then `FBI_*` environment variables and flags.

use anyhow::{anyhow, bail, Context, Result};
use clap::Args;
use fbi::chiral::{ChiralModel, Potential};
use fbi::lattice::{KGrid, SQRT3};
use std::collections::BTreeMap;
use std::path::PathBuf;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Tbg2,
    Tbg4,
    Ettg4,
    NLayer,
}

impl ModelKind {
    fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tbg2" | "tbg-2" => Ok(ModelKind::Tbg2),
            "tbg4" | "tbg-4" => Ok(ModelKind::Tbg4),
            "ettg4" | "ettg-4" => Ok(ModelKind::Ettg4),
            "nlayer" => Ok(ModelKind::NLayer),
            _ => bail!("model: expected one of tbg2, tbg4, ettg4, nlayer (got `{s}`)"),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Tbg2 => "tbg2",
            ModelKind::Tbg4 => "tbg4",
            ModelKind::Ettg4 => "ettg4",
            ModelKind::NLayer => "nlayer",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AlphaSpec {
    Value(f64),
    /// `auto:i`, the i-th real magic angle (0-based).
    Auto(usize),
}

impl AlphaSpec {
    fn parse(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(AlphaSpec::Auto(0));
        }
        if let Some(i) = s.strip_prefix("auto:") {
            let i = i.parse().map_err(|_| anyhow!("alpha: bad index in `{s}`"))?;
            return Ok(AlphaSpec::Auto(i));
        }
        let x: f64 = s.parse().map_err(|_| anyhow!("alpha: expected a number or auto:<index> (got `{s}`)"))?;
        if !(x > 0.0) || !x.is_finite() {
            bail!("alpha: must be positive (got {x})");
        }
        Ok(AlphaSpec::Value(x))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Json,
    Csv,
}

/// Options shared by every subcommand. Unset values fall back to the config
/// file, then to the model defaults.
#[derive(Args, Debug, Clone, Default)]
pub struct Common {
    /// Config file with dotted `key = value` lines.
    #[arg(long, global = true, env = "FBI_CONFIG")]
    pub config: Option<PathBuf>,
    /// tbg2, tbg4, ettg4 or nlayer.
    #[arg(long, global = true, env = "FBI_MODEL")]
    pub model: Option<String>,
    /// Number of layers (nlayer only).
    #[arg(long, global = true, env = "FBI_LAYERS")]
    pub layers: Option<String>,
    /// u0, u78, or a file of `a b re im` mode lines.
    #[arg(long, global = true, env = "FBI_POTENTIAL")]
    pub potential: Option<String>,
    /// Coupling: a number or auto:<index>.
    #[arg(long, global = true, env = "FBI_ALPHA")]
    pub alpha: Option<String>,
    /// Momentum grid, e.g. 4x4.
    #[arg(long, global = true, env = "FBI_GRID")]
    pub grid: Option<String>,
    /// Plane-wave cutoff in units of |q1|.
    #[arg(long, global = true, env = "FBI_CUTOFF")]
    pub cutoff: Option<String>,
    /// Form-factor shell |q + G| <= g-cut.
    #[arg(long = "g-cut", global = true, env = "FBI_G_CUT")]
    pub g_cut: Option<String>,
    #[arg(long, global = true, env = "FBI_EPSILON")]
    pub epsilon: Option<String>,
    /// Gate distance.
    #[arg(long = "gate-distance", global = true, env = "FBI_GATE_DISTANCE")]
    pub gate_distance: Option<String>,
    #[arg(long, global = true, env = "FBI_SEED")]
    pub seed: Option<String>,
    /// Output file (stdout when absent).
    #[arg(long, short, global = true, env = "FBI_OUTPUT")]
    pub output: Option<PathBuf>,
    /// json or csv.
    #[arg(long, global = true, env = "FBI_FORMAT")]
    pub format: Option<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, env = "FBI_THREADS")]
    pub threads: Option<String>,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub kind: ModelKind,
    pub model: ChiralModel,
    /// Flat bands per sublattice, when fixed by the model.
    pub m: Option<usize>,
    pub alpha: AlphaSpec,
    pub grid: KGrid,
    pub cutoff: f64,
    pub g_cut: Option<f64>,
    pub epsilon: f64,
    pub gate_distance: f64,
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub format: Format,
    pub threads: usize,
}

const KEYS: &[(&str, &str)] = &[
    ("model", "model.name"),
    ("layers", "model.layers"),
    ("potential", "model.potential"),
    ("alpha", "model.alpha"),
    ("grid", "grid"),
    ("cutoff", "cutoffs.plane_wave"),
    ("g_cut", "cutoffs.g_shell"),
    ("epsilon", "coulomb.epsilon"),
    ("gate_distance", "coulomb.d"),
    ("seed", "seed"),
    ("output", "output.path"),
    ("format", "output.format"),
    ("threads", "threads"),
];

/// Read a TOML config into dotted keys with string values. Grids may be
/// written as `"4x4"` or `[4, 4]`.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>> {
    let table: toml::Table = text.parse().map_err(|e| anyhow!("config: {e}"))?;
    let mut out = BTreeMap::new();
    flatten("", &table, &mut out)?;
    Ok(out)
}

fn flatten(prefix: &str, table: &toml::Table, out: &mut BTreeMap<String, String>) -> Result<()> {
    use toml::Value;
    for (k, v) in table {
        let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
        if let Value::Table(t) = v {
            flatten(&key, t, out)?;
            continue;
        }
        if !KEYS.iter().any(|(_, d)| *d == key) {
            bail!("config: unknown key `{key}`");
        }
        let text = match v {
            Value::String(s) => s.clone(),
            Value::Integer(i) => i.to_string(),
            Value::Float(x) => x.to_string(),
            Value::Array(a) if a.iter().all(|x| x.is_integer()) => {
                a.iter().map(|x| x.as_integer().unwrap_or(0).to_string()).collect::<Vec<_>>().join("x")
            }
            other => bail!("config: unsupported value for `{key}` ({})", other.type_str()),
        };
        out.insert(key, text);
    }
    Ok(())
}

fn positive(field: &str, s: &str) -> Result<f64> {
    let x: f64 = s.trim().parse().map_err(|_| anyhow!("{field}: expected a number (got `{s}`)"))?;
    if !(x > 0.0) || !x.is_finite() {
        bail!("{field}: must be positive (got {x})");
    }
    Ok(x)
}

fn parse_grid(s: &str) -> Result<KGrid> {
    let parts: Vec<&str> = s.split(['x', 'X', ',']).map(str::trim).collect();
    let dims: Vec<usize> = parts
        .iter()
        .map(|p| p.parse().map_err(|_| anyhow!("grid: expected NxM (got `{s}`)")))
        .collect::<Result<_>>()?;
    match dims.as_slice() {
        [a, b] if *a > 0 && *b > 0 => Ok(KGrid::new(*a, *b)?),
        [a] if *a > 0 => Ok(KGrid::new(*a, *a)?),
        _ => bail!("grid: expected two positive sizes (got `{s}`)"),
    }
}

fn load_potential(s: &str) -> Result<Potential> {
    if let Ok(p) = Potential::by_name(s) {
        return Ok(p);
    }
    let text = std::fs::read_to_string(s).with_context(|| format!("potential: `{s}` is neither u0, u78 nor a readable file"))?;
    let mut modes = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.len() != 4 {
            bail!("potential file line {}: expected `a b re im`", n + 1);
        }
        let a: i32 = f[0].parse().map_err(|_| anyhow!("potential file line {}: bad index", n + 1))?;
        let b: i32 = f[1].parse().map_err(|_| anyhow!("potential file line {}: bad index", n + 1))?;
        let re: f64 = f[2].parse().map_err(|_| anyhow!("potential file line {}: bad number", n + 1))?;
        let im: f64 = f[3].parse().map_err(|_| anyhow!("potential file line {}: bad number", n + 1))?;
        modes.push(([a, b], fbi::linalg::c(re, im)));
    }
    Ok(Potential::from_modes(s, modes)?)
}

impl Common {
    fn get(&self, field: &str) -> Option<String> {
        match field {
            "model" => self.model.clone(),
            "layers" => self.layers.clone(),
            "potential" => self.potential.clone(),
            "alpha" => self.alpha.clone(),
            "grid" => self.grid.clone(),
            "cutoff" => self.cutoff.clone(),
            "g_cut" => self.g_cut.clone(),
            "epsilon" => self.epsilon.clone(),
            "gate_distance" => self.gate_distance.clone(),
            "seed" => self.seed.clone(),
            "output" => self.output.as_ref().map(|p| p.display().to_string()),
            "format" => self.format.clone(),
            "threads" => self.threads.clone(),
            _ => None,
        }
    }

    /// Merge flags over the config file and validate.
    pub fn resolve(&self, default_format: Format) -> Result<RunConfig> {
        let file = match &self.config {
            Some(p) => parse_config(&std::fs::read_to_string(p).with_context(|| format!("config: cannot read {}", p.display()))?)?,
            None => BTreeMap::new(),
        };
        let value = |field: &str| -> Option<String> {
            self.get(field).or_else(|| {
                let dotted = KEYS.iter().find(|(f, _)| *f == field).map(|(_, d)| *d)?;
                file.get(dotted).cloned()
            })
        };

        let kind = ModelKind::parse(&value("model").unwrap_or_else(|| "tbg2".into()))?;
        let layers = match (kind, value("layers")) {
            (ModelKind::Tbg2 | ModelKind::Tbg4, _) => 2,
            (ModelKind::Ettg4, _) => 3,
            (ModelKind::NLayer, Some(s)) => {
                let n: usize = s.trim().parse().map_err(|_| anyhow!("layers: expected an integer (got `{s}`)"))?;
                if n < 2 {
                    bail!("layers: need at least 2 (got {n})");
                }
                n
            }
            (ModelKind::NLayer, None) => bail!("layers: required for model nlayer"),
        };
        let default_pot = if kind == ModelKind::Tbg4 { "u78" } else { "u0" };
        let potential = load_potential(&value("potential").unwrap_or_else(|| default_pot.into()))?;
        let model = ChiralModel::new(layers, potential)?;
        let m = match kind {
            ModelKind::Tbg2 => Some(1),
            ModelKind::Tbg4 | ModelKind::Ettg4 => Some(2),
            ModelKind::NLayer => None,
        };
        let alpha = AlphaSpec::parse(&value("alpha").unwrap_or_else(|| "auto:0".into()))?;
        let default_grid = if kind == ModelKind::Tbg2 { "4x4" } else { "3x3" };
        let grid = parse_grid(&value("grid").unwrap_or_else(|| default_grid.into()))?;
        let cutoff = match value("cutoff") {
            Some(s) => positive("cutoff", &s)?,
            None => 8.0,
        };
        if cutoff < 1.0 {
            bail!("cutoff: must be at least |q1| = 1 (got {cutoff})");
        }
        let g_cut = value("g_cut").map(|s| positive("g-cut", &s)).transpose()?;
        let epsilon = value("epsilon").map(|s| positive("epsilon", &s)).transpose()?.unwrap_or(1.0);
        let gate_distance = value("gate_distance").map(|s| positive("gate-distance", &s)).transpose()?.unwrap_or(1.0);
        let seed = match value("seed") {
            Some(s) => s.trim().parse().map_err(|_| anyhow!("seed: expected a non-negative integer (got `{s}`)"))?,
            None => 7,
        };
        let format = match value("format").as_deref().map(str::to_ascii_lowercase).as_deref() {
            None => default_format,
            Some("json") => Format::Json,
            Some("csv") => Format::Csv,
            Some(f) => bail!("format: expected json or csv (got `{f}`)"),
        };
        let threads = match value("threads") {
            Some(s) => s.trim().parse().map_err(|_| anyhow!("threads: expected an integer (got `{s}`)"))?,
            None => 0,
        };
        Ok(RunConfig {
            kind,
            model,
            m,
            alpha,
            grid,
            cutoff,
            g_cut,
            epsilon,
            gate_distance,
            seed,
            output: value("output").map(PathBuf::from),
            format,
            threads,
        })
    }
}

impl RunConfig {
    /// Form-factor shell: the requested one, or `4 |g1|` capped by the
    /// aliasing limit of the plane-wave cutoff.
    pub fn g_cut(&self) -> f64 {
        let limit = fbi::formfactor::max_g_cut(&self.grid, self.cutoff);
        self.g_cut.unwrap_or((4.0 * SQRT3).min(limit))
    }

    pub fn interaction(&self) -> fbi::hf::Interaction {
        fbi::hf::Interaction { eps: self.epsilon, d: self.gate_distance }
    }
}
