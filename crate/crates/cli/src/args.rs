use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pao::experiments::Environment;
use pao::model::Domain;

#[derive(Debug, Parser)]
#[command(name = "pao", version, about = "Pick-an-object mechanisms: rules, engines, checkers, experiments and live sessions")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Seed for generated markets and for `simulate` without --seeds.
    #[arg(long, global = true, default_value_t = 1)]
    pub seed: u64,
    /// Cap on candidates touched by exhaustive enumeration.
    #[arg(long, global = true)]
    pub budget: Option<u64>,
    /// Directory for artifacts and the run manifest.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for the parallel kernels.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EnvArg {
    TtcCyclic,
    TtcAcyclic,
    Sd,
}

impl From<EnvArg> for Environment {
    fn from(e: EnvArg) -> Self {
        match e {
            EnvArg::TtcCyclic => Environment::TtcCyclic,
            EnvArg::TtcAcyclic => Environment::TtcAcyclic,
            EnvArg::Sd => Environment::Sd,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DomainArg {
    Full,
    AllAcceptable,
}

impl From<DomainArg> for Domain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Full => Domain::Full,
            DomainArg::AllAcceptable => Domain::AllAcceptable,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum EngineArg {
    Canonical,
    Genda,
    OspAdapter,
}

impl EngineArg {
    pub fn name(self) -> &'static str {
        match self {
            EngineArg::Canonical => "canonical",
            EngineArg::Genda => "genda",
            EngineArg::OspAdapter => "osp-adapter",
        }
    }

    pub fn parse(s: &str) -> Option<EngineArg> {
        <EngineArg as ValueEnum>::from_str(s, false).ok()
    }
}

/// Where the market comes from: a file, a seeded draw, or the preset's own universe.
#[derive(Clone, Debug, Args)]
pub struct MarketArgs {
    /// Market JSON document.
    #[arg(long, conflicts_with = "env")]
    pub market: Option<PathBuf>,
    /// Draw a market (and a true profile) from an experiment environment with --seed.
    #[arg(long, value_enum)]
    pub env: Option<EnvArg>,
    #[arg(long, default_value_t = 8)]
    pub n: usize,
    #[arg(long, default_value_t = 8)]
    pub m: usize,
    /// Override the market's preference domain.
    #[arg(long, value_enum)]
    pub domain: Option<DomainArg>,
    /// Profile JSON document: agent label to ranking labels.
    #[arg(long)]
    pub profile: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Evaluate a rule at a profile.
    Eval {
        #[arg(long)]
        rule: String,
        #[command(flatten)]
        market: MarketArgs,
    },
    /// Run a pick-an-object engine; prints the transcript as JSON lines.
    RunPao {
        #[arg(long)]
        rule: String,
        #[command(flatten)]
        market: MarketArgs,
        #[arg(long, value_enum, default_value_t = EngineArg::Genda)]
        engine: EngineArg,
        /// Strategy script: agent label to strategy; unlisted agents play straightforwardly.
        #[arg(long)]
        strategies: Option<PathBuf>,
    },
    /// Play an OSP millipede game (rule sd or ttc); prints the moves as JSON lines.
    RunOsp {
        #[arg(long)]
        rule: String,
        #[command(flatten)]
        market: MarketArgs,
        /// Strategy script: agent label to strategy; unlisted agents play greedily.
        #[arg(long)]
        strategies: Option<PathBuf>,
    },
    /// Run property checkers; exits 1 when any property fails.
    Check {
        #[arg(long)]
        rule: String,
        #[command(flatten)]
        market: MarketArgs,
        /// Axiom names, or `ex-post-incentives` and `probe-uniqueness` for an engine.
        #[arg(long, required = true, num_args = 1..)]
        property: Vec<String>,
        /// Engine for the engine-level properties.
        #[arg(long, value_enum, default_value_t = EngineArg::Genda)]
        engine: EngineArg,
    },
    /// Run an experiment battery.
    Simulate {
        #[arg(long, default_value = "table1")]
        plan: String,
        /// `all-truthful`, `all-random`, `half-random` or a comma list of t/r.
        #[arg(long, default_value = "all-truthful")]
        mix: String,
        /// `a..b` (both ends included), `a..=b`, or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long, default_value_t = 1)]
        groups: usize,
        #[arg(long, default_value_t = 8)]
        n: usize,
        #[arg(long, default_value_t = 8)]
        m: usize,
    },
    /// Serve live sessions over HTTP.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        /// Event logs go here; existing logs are replayed at start.
        #[arg(long)]
        data_dir: Option<PathBuf>,
        /// Secret for join tokens; defaults to $PAO_SECRET, else a fresh one.
        #[arg(long)]
        secret: Option<String>,
    },
    /// Re-execute an artifact: a session log, a run directory, or a battery directory.
    Replay { path: PathBuf },
}
