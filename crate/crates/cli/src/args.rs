use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "quadweyl", version, about = "Counting, decoupling, transversality and plate experiments for the surface (s, t, s^2, t^2, st)")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random draw of the run.
    #[arg(long, global = true, default_value_t = 42)]
    pub seed: u64,
    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub threads: Option<usize>,
    /// Write the JSON report here instead of stdout.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub out: Option<String>,
    /// Also write the report table as CSV.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub csv: Option<String>,
    /// TOML key-value file (or a previous JSON report) supplying flag defaults.
    #[arg(long, global = true)]
    #[serde(skip)]
    pub config: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count solutions of the quadratic Vinogradov system.
    Count(CountArgs),
    /// Estimate decoupling ratios for witness densities and fit their growth.
    Decouple(DecoupleArgs),
    /// Select ten transverse squares from a collection.
    Select(SelectArgs),
    /// Certify transversality of ten point sets.
    Transversality(TransversalityArgs),
    /// Integrate the multilinear plate functional.
    Kakeya(KakeyaArgs),
    /// Evaluate the exponent iteration and search for its contradiction inequality.
    Gamma(GammaArgs),
    /// Print the artifact version.
    Version,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Count(_) => "count",
            Command::Decouple(_) => "decouple",
            Command::Select(_) => "select",
            Command::Transversality(_) => "transversality",
            Command::Kakeya(_) => "kakeya",
            Command::Gamma(_) => "gamma",
            Command::Version => "version",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CountMode {
    Exact,
    Near,
    Torus,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct CountArgs {
    #[arg(long = "N", visible_alias = "n")]
    #[serde(rename = "N")]
    pub n: u64,
    #[arg(long)]
    pub s: u32,
    #[arg(long, value_enum, default_value_t = CountMode::Exact)]
    pub mode: CountMode,
    /// JSON node file {"x": [...], "y": [...]} for near mode; seeded random nodes otherwise.
    #[arg(long)]
    pub nodes: Option<String>,
    #[arg(long, default_value_t = 100_000_000)]
    pub tuple_budget: u64,
    #[arg(long, default_value_t = 1_000_000_000)]
    pub torus_budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WitnessKind {
    Ones,
    Random,
    SingleDelta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DecoupleMode {
    /// Extension of a density on [0,1]^2 on the weighted ball B_N; N a power of 4.
    Continuous,
    /// Weyl sum on the nodes i/N over B_R with R = r_factor N^2.
    Discrete,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct DecoupleArgs {
    #[arg(long)]
    pub p: f64,
    #[arg(long, value_enum, default_value_t = WitnessKind::Ones)]
    pub witness: WitnessKind,
    /// Comma-separated values of N.
    #[arg(long, value_delimiter = ',', required = true)]
    pub scales: Vec<usize>,
    #[arg(long, value_enum, default_value_t = DecoupleMode::Continuous)]
    pub mode: DecoupleMode,
    /// Monte Carlo samples per scale.
    #[arg(long, default_value_t = 100)]
    pub samples: u64,
    /// Node or block carrying the single-delta witness.
    #[arg(long, default_value_t = 0)]
    pub index: usize,
    #[arg(long, default_value_t = 1.0)]
    pub r_factor: f64,
    /// Largest number of integrand evaluations per continuous scale.
    #[arg(long, default_value_t = 10_000_000_000)]
    pub budget: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FootprintKind {
    HalfSide,
    Dilated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderKind {
    RowMajor,
    Shuffled,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct StiefelArgs {
    #[arg(long, default_value_t = 64)]
    pub restarts: usize,
    #[arg(long, default_value_t = 500)]
    pub iterations: u64,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SelectArgs {
    /// Grid level K (a power of two).
    #[arg(long = "K", visible_alias = "k")]
    #[serde(rename = "K")]
    pub k: u32,
    /// Use every K-square.
    #[arg(long, conflicts_with_all = ["row", "squares"])]
    pub all: bool,
    /// Use the K-squares of one row j.
    #[arg(long, conflicts_with = "squares")]
    pub row: Option<u32>,
    /// JSON square list {"level": K, "squares": [[i, j], ...]}.
    #[arg(long)]
    pub squares: Option<String>,
    #[arg(long, default_value_t = 1.0)]
    pub c1: f64,
    #[arg(long, default_value_t = 4.0)]
    pub c2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.25)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 4)]
    pub max_depth: u32,
    #[arg(long, value_enum, default_value_t = FootprintKind::HalfSide)]
    pub footprint: FootprintKind,
    #[arg(long, value_enum, default_value_t = OrderKind::RowMajor)]
    pub order: OrderKind,
    #[arg(long, default_value_t = 20_000)]
    pub node_budget: u64,
    #[arg(long, default_value_t = 1e-9)]
    pub nu: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub stiefel: StiefelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TransversalityArgs {
    /// JSON file {"points": [[x, y] x 10]} or {"sets": [[[x, y], ...] x 10]}.
    #[arg(long)]
    pub points: String,
    #[arg(long, default_value_t = 1e-9)]
    pub nu: f64,
    /// Lipschitz slack for unsampled points of the sets.
    #[arg(long, default_value_t = 0.0)]
    pub slack: f64,
    /// Random subspaces per dimension for the rank check on the set centroids; 0 skips it.
    #[arg(long, default_value_t = 0)]
    pub bl_trials: usize,
    #[command(flatten)]
    #[serde(flatten)]
    pub stiefel: StiefelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KakeyaArgs {
    /// JSON file {"ball": {"center": [5 reals], "radius": r}, "families": [...]}.
    #[arg(long)]
    pub families: String,
    #[arg(long, default_value_t = 1_000_000)]
    pub samples: u64,
    /// Also certify transversality of the family base points.
    #[arg(long)]
    pub certify: bool,
    #[arg(long, default_value_t = 1e-9)]
    pub nu: f64,
    #[command(flatten)]
    #[serde(flatten)]
    pub stiefel: StiefelArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GammaArgs {
    #[arg(long)]
    pub p: f64,
    /// A number, `auto` for the critical value, or `auto+x` / `auto-x`.
    #[arg(long, default_value = "auto")]
    pub gamma_hyp: String,
    #[arg(long, default_value_t = 0.0)]
    pub epsilon: f64,
    #[arg(long, default_value_t = 0.0)]
    pub delta: f64,
    /// Coefficient of the (1 - kappa_p)^s tail.
    #[arg(long, default_value_t = 0.0)]
    pub c: f64,
    /// Largest s tabulated and searched.
    #[arg(long, default_value_t = 60)]
    pub s_max: u32,
    /// Search for (s, epsilon, delta) with gamma below the hypothesis.
    #[arg(long)]
    pub search: bool,
    #[arg(long, default_value_t = 1e-3)]
    pub eps_max: f64,
}
