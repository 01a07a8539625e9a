//! Command-line verbs. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use pipeforge_core::catalog::{load_catalog, validate_catalog, CatalogError, LATEST};
use pipeforge_core::findings::has_errors;
use pipeforge_core::inference::PlanError;
use pipeforge_core::registry::{breakeven_uses, RegistryStore};
use pipeforge_core::renderer::RenderError;
use pipeforge_core::{scan_repository, verify, Engine, RenderMode, ScanConfig, TemplateCatalog, VerdictKind};

use crate::provision::{generate, plan_repository, write_file, GenerateOptions, ProvisionError, DEFAULT_LOCATOR};
use crate::service::{serve, AppState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_TAMPERED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_POLICY: i32 = 3;
pub const EXIT_CATALOG: i32 = 4;
pub const EXIT_UNSEALED: i32 = 5;

pub const DEFAULT_PORT: u16 = 7780;

#[derive(Debug, Parser)]
#[command(name = "pipeforge", version, about = "Provision sealed CI pipelines from golden-path templates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Yaml,
    Json,
}

#[derive(Debug, clap::Args)]
struct CatalogArgs {
    /// Catalog root holding one directory per version.
    #[arg(long, env = "PIPEFORGE_CATALOG")]
    catalog: PathBuf,
    #[arg(long, default_value = LATEST)]
    catalog_version: String,
}

#[derive(Debug, clap::Args)]
struct PolicyArgs {
    /// Fail when a language has no catalog group.
    #[arg(long)]
    strict: bool,
    /// Reject GitHub blocks that run shell commands.
    #[arg(long)]
    forbid_shell: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the facts found in a repository working tree.
    Scan {
        path: PathBuf,
        #[arg(long, value_enum, default_value = "yaml")]
        format: Format,
    },
    /// Print the engine-agnostic pipeline plan.
    Plan {
        path: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long, value_parser = parse_engine)]
        engine: Option<Engine>,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Write sealed pipeline text for a repository.
    Generate {
        path: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long, value_parser = parse_engine)]
        engine: Engine,
        #[arg(long, value_parser = parse_mode, default_value = "inline")]
        mode: RenderMode,
        /// Output file; `-` for standard output. Defaults to the engine's
        /// conventional path inside PATH.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Template project (`project@ref`) named by include mode.
        #[arg(long, default_value = DEFAULT_LOCATOR)]
        locator: String,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Check a sealed pipeline file for manual edits.
    Verify { file: PathBuf },
    /// Catalog maintenance.
    Catalog {
        #[command(subcommand)]
        command: CatalogCommand,
    },
    /// Run the HTTP service on the loopback interface.
    Serve {
        #[arg(long, env = "PIPEFORGE_REGISTRY")]
        registry: PathBuf,
        #[command(flatten)]
        catalog: CatalogArgs,
        #[arg(long, env = "PIPEFORGE_PORT", default_value_t = DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = DEFAULT_LOCATOR)]
        locator: String,
    },
    /// Uses after which automated provisioning has paid for itself.
    Roi {
        #[arg(long)]
        manual: f64,
        #[arg(long)]
        setup: f64,
        #[arg(long, default_value_t = 0.0)]
        per_use: f64,
    },
}

#[derive(Debug, Subcommand)]
enum CatalogCommand {
    /// Report catalog findings; exit 4 on any error.
    Validate {
        dir: PathBuf,
        #[arg(long, default_value = LATEST)]
        catalog_version: String,
    },
}

fn parse_engine(s: &str) -> Result<Engine, String> {
    s.parse::<Engine>().map_err(|e| e.to_string())
}

fn parse_mode(s: &str) -> Result<RenderMode, String> {
    s.parse()
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl ToString) -> Self {
        Failure {
            code,
            message: message.to_string(),
        }
    }
}

impl From<ProvisionError> for Failure {
    fn from(e: ProvisionError) -> Self {
        let code = match &e {
            ProvisionError::Render(RenderError::PolicyViolation { .. }) => EXIT_POLICY,
            ProvisionError::Plan(PlanError::NoCatalogGroup(_)) => EXIT_POLICY,
            ProvisionError::Render(RenderError::EngineUnsupported { .. })
            | ProvisionError::Render(RenderError::UnresolvedRef { .. })
            | ProvisionError::Render(RenderError::Block(_))
            | ProvisionError::Plan(PlanError::InvalidCatalog { .. })
            | ProvisionError::Plan(PlanError::Catalog(_))
            | ProvisionError::Catalog(_) => EXIT_CATALOG,
            _ => EXIT_USAGE,
        };
        let mut message = e.to_string();
        if let ProvisionError::Plan(PlanError::InvalidCatalog { findings, .. }) = &e {
            for f in findings {
                message.push_str(&format!("\n{f}"));
            }
        }
        Failure::new(code, message)
    }
}

fn catalog_failure(e: CatalogError) -> Failure {
    let code = match e {
        CatalogError::CatalogNotFound(_) | CatalogError::VersionNotFound { .. } => EXIT_USAGE,
        _ => EXIT_CATALOG,
    };
    Failure::new(code, e)
}

fn load(args: &CatalogArgs) -> Result<TemplateCatalog, Failure> {
    load_catalog(&args.catalog, &args.catalog_version).map_err(catalog_failure)
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::new(EXIT_USAGE, format!("{}: {e}", path.display()))
}

/// Parses `args` (program name first) and runs the verb.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(cli.command, out, err) {
        Ok(code) => code,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

fn emit(out: &mut dyn Write, text: &str) -> Result<(), Failure> {
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::new(EXIT_USAGE, format!("writing output: {e}")))
}

fn print_diagnostics(err: &mut dyn Write, diagnostics: &[String]) {
    for d in diagnostics {
        let _ = writeln!(err, "note: {d}");
    }
}

fn options(engine: Engine, mode: RenderMode, locator: String, policy: &PolicyArgs) -> GenerateOptions {
    let mut o = GenerateOptions::new(engine, mode);
    o.locator = locator;
    o.strict = policy.strict;
    o.forbid_shell = policy.forbid_shell;
    o
}

fn execute(command: Command, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32, Failure> {
    match command {
        Command::Scan { path, format } => {
            let facts = scan_repository(&path, &ScanConfig::default())
                .map_err(|e| Failure::new(EXIT_USAGE, e))?;
            let text = match format {
                Format::Yaml => facts.to_yaml(),
                Format::Json => {
                    let mut s = serde_json::to_string_pretty(&facts).expect("facts serialize");
                    s.push('\n');
                    s
                }
            };
            emit(out, &text)?;
            Ok(EXIT_OK)
        }
        Command::Plan {
            path,
            catalog,
            engine,
            policy,
        } => {
            let catalog = load(&catalog)?;
            let o = options(engine.unwrap_or(Engine::Gitlab), RenderMode::Inline, String::new(), &policy);
            let (_, plan) = plan_repository(&path, &catalog, &o)?;
            if let Some(engine) = engine {
                for job in &plan.jobs {
                    let block = catalog.resolve(&job.block).expect("plans resolve");
                    if block.body(engine).is_none() {
                        return Err(ProvisionError::Render(RenderError::EngineUnsupported {
                            block: job.block.path.clone(),
                            engine,
                        })
                        .into());
                    }
                }
            }
            emit(out, &plan.to_yaml())?;
            print_diagnostics(err, &plan.diagnostics);
            Ok(EXIT_OK)
        }
        Command::Generate {
            path,
            catalog,
            engine,
            mode,
            out: target,
            locator,
            policy,
        } => {
            let catalog = load(&catalog)?;
            let generated = generate(&path, &catalog, &options(engine, mode, locator, &policy))?;
            let text = &generated.rendered.text;
            print_diagnostics(err, &generated.plan.diagnostics);
            match target {
                Some(t) if t == Path::new("-") => emit(out, text)?,
                other => {
                    let file = other.unwrap_or_else(|| path.join(engine.output_path()));
                    write_file(&file, text)?;
                    let _ = writeln!(err, "wrote {}", file.display());
                }
            }
            Ok(EXIT_OK)
        }
        Command::Verify { file } => {
            let text = std::fs::read_to_string(&file).map_err(|e| io_failure(&file, e))?;
            let verdict = verify(&text);
            emit(out, &format!("{verdict}\n"))?;
            Ok(match verdict.kind {
                VerdictKind::SealedValid => EXIT_OK,
                VerdictKind::Tampered => EXIT_TAMPERED,
                VerdictKind::Unsealed => EXIT_UNSEALED,
            })
        }
        Command::Catalog {
            command: CatalogCommand::Validate { dir, catalog_version },
        } => {
            let catalog = load_catalog(&dir, &catalog_version).map_err(catalog_failure)?;
            let findings = validate_catalog(&catalog);
            for f in &findings {
                emit(out, &format!("{f}\n"))?;
            }
            if has_errors(&findings) {
                Ok(EXIT_CATALOG)
            } else {
                emit(out, &format!("catalog {} ok\n", catalog.version))?;
                Ok(EXIT_OK)
            }
        }
        Command::Serve {
            registry,
            catalog,
            port,
            locator,
        } => {
            let catalog = load(&catalog)?;
            let findings = validate_catalog(&catalog);
            if has_errors(&findings) {
                for f in &findings {
                    let _ = writeln!(err, "{f}");
                }
                return Ok(EXIT_CATALOG);
            }
            let store = RegistryStore::new(registry);
            store.load().map_err(|e| Failure::new(EXIT_USAGE, e))?;
            let state = AppState::new(store, catalog, locator);
            let addr = SocketAddr::from((Ipv4Addr::LOCALHOST, port));
            let runtime = tokio::runtime::Runtime::new()
                .map_err(|e| Failure::new(EXIT_USAGE, format!("starting runtime: {e}")))?;
            runtime
                .block_on(serve(state, addr))
                .map_err(|e| Failure::new(EXIT_USAGE, format!("serving on {addr}: {e}")))?;
            Ok(EXIT_OK)
        }
        Command::Roi {
            manual,
            setup,
            per_use,
        } => {
            let n = breakeven_uses(manual, setup, per_use).map_err(|e| Failure::new(EXIT_USAGE, e))?;
            emit(out, &format!("{n}\n"))?;
            Ok(EXIT_OK)
        }
    }
}
