//! The `pao` command line. `main.rs` only forwards `argv` to [`run`].

pub mod args;
mod commands;
mod render;
mod replay;

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use clap::Parser;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use args::{Cli, Command};

pub const RUN_MANIFEST: &str = "run.json";

/// Written next to every artifact set (or to stderr without `--out`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub v: u32,
    pub tool: String,
    pub version: String,
    pub command: String,
    pub args: Vec<String>,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<u64>,
    pub inputs: serde_json::Value,
    /// File name to sha256.
    pub outputs: BTreeMap<String, String>,
    pub exit: i32,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Pao(pao::Error),
}

impl From<pao::Error> for CliError {
    fn from(e: pao::Error) -> Self {
        CliError::Pao(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Pao(e.into())
    }
}

impl CliError {
    fn kind(&self) -> &'static str {
        use pao::Error as E;
        match self {
            CliError::Usage(_) => "usage",
            CliError::Pao(e) => match e {
                E::UniverseMismatch(_) => "universe-mismatch",
                E::BudgetExceeded { .. } => "budget-exceeded",
                E::Validation(_) => "validation",
                E::ContractViolation { .. } | E::MenuContract(_) => "contract",
                E::Divergence { .. } => "divergence",
                E::InvalidChoice { .. } => "invalid-choice",
                E::Unsupported(_) => "unsupported",
                E::Precondition(_) => "precondition",
                E::AlreadySubmitted { .. } | E::NotAwaited { .. } => "session",
                E::Replay { .. } => "replay",
                E::Unauthorized(_) => "unauthorized",
                E::Config(_) => "config",
                E::Io(_) => "io",
            },
        }
    }

    /// 2 for anything the caller can fix by changing the invocation or its inputs.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            "replay" => 1,
            "contract" | "divergence" | "io" => 3,
            _ => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Pao(e) => e.to_string(),
        }
    }
}

/// What a command produced, before it is written out.
pub(crate) struct Outcome {
    pub stdout: String,
    /// Artifacts to write under `--out`.
    pub files: Vec<(String, Vec<u8>)>,
    /// Artifacts the command already wrote under `--out`.
    pub written: Vec<String>,
    pub inputs: serde_json::Value,
    pub exit: i32,
}

impl Outcome {
    pub fn new(stdout: String, inputs: serde_json::Value) -> Outcome {
        Outcome { stdout, files: Vec::new(), written: Vec::new(), inputs, exit: 0 }
    }

    pub fn file(mut self, name: &str, body: impl Into<Vec<u8>>) -> Outcome {
        self.files.push((name.to_string(), body.into()));
        self
    }
}

fn error_record(e: &CliError) -> String {
    serde_json::json!({
        "v": pao::session::SCHEMA_VERSION,
        "error": { "kind": e.kind(), "message": e.message() },
        "exit": e.exit_code(),
    })
    .to_string()
}

pub(crate) fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Eval { .. } => "eval",
        Command::RunPao { .. } => "run-pao",
        Command::RunOsp { .. } => "run-osp",
        Command::Check { .. } => "check",
        Command::Simulate { .. } => "simulate",
        Command::Serve { .. } => "serve",
        Command::Replay { .. } => "replay",
    }
}

fn finish(cli: &Cli, argv: &[String], out: Outcome, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    let mut outputs = BTreeMap::new();
    if let Some(dir) = &cli.global.out {
        std::fs::create_dir_all(dir)?;
        for (name, body) in &out.files {
            std::fs::write(dir.join(name), body)?;
            outputs.insert(name.clone(), sha256_hex(body));
        }
        for name in &out.written {
            outputs.insert(name.clone(), sha256_hex(&std::fs::read(dir.join(name))?));
        }
    }
    let manifest = RunManifest {
        v: pao::session::SCHEMA_VERSION,
        tool: "pao".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: command_name(&cli.command).into(),
        args: argv.to_vec(),
        seed: cli.global.seed,
        budget: cli.global.budget,
        inputs: out.inputs,
        outputs,
        exit: out.exit,
    };
    stdout.write_all(out.stdout.as_bytes())?;
    match &cli.global.out {
        Some(dir) => std::fs::write(dir.join(RUN_MANIFEST), serde_json::to_string_pretty(&manifest).expect("serializable"))?,
        None => writeln!(stderr, "{}", serde_json::json!({ "manifest": manifest }))?,
    }
    Ok(out.exit)
}

fn dispatch(cli: &Cli, argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<i32, CliError> {
    if let Some(j) = cli.global.jobs {
        // Fails only if a pool already exists, as in tests running several commands.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global();
    }
    let g = &cli.global;
    let out = match &cli.command {
        Command::Eval { rule, market } => commands::eval(g, rule, market)?,
        Command::RunPao { rule, market, engine, strategies } => commands::run_pao_cmd(g, rule, market, *engine, strategies.as_deref())?,
        Command::RunOsp { rule, market, strategies } => commands::run_osp(g, rule, market, strategies.as_deref())?,
        Command::Check { rule, market, property, engine } => commands::check(g, rule, market, property, *engine)?,
        Command::Simulate { plan, mix, seeds, groups, n, m } => commands::simulate(g, plan, mix, seeds.as_deref(), *groups, *n, *m)?,
        Command::Serve { addr, data_dir, secret } => {
            let manifest_only = Outcome::new(String::new(), serde_json::json!({ "addr": addr, "data_dir": data_dir }));
            finish(cli, argv, manifest_only, stdout, stderr)?;
            return commands::serve(addr, data_dir.clone(), secret.clone(), stdout);
        }
        Command::Replay { path } => replay::replay(g, path)?,
    };
    finish(cli, argv, out, stdout, stderr)
}

/// Runs one invocation; `argv[0]` is the program name. Returns the exit code.
pub fn run(argv: &[String], stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(stdout, "{e}");
                return 0;
            }
            let err = CliError::Usage(e.render().to_string().trim().to_string());
            let _ = writeln!(stderr, "{}", error_record(&err));
            return 2;
        }
    };
    match dispatch(&cli, argv, stdout, stderr) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "{}", error_record(&e));
            e.exit_code()
        }
    }
}

pub(crate) fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| pao::Error::Validation(format!("{}: {e}", path.display())).into())
}
