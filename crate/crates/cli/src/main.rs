//! `nversion` command-line front end.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use nversion::client::{self, ClientContext, ClientError, GuardConfig, RegisterOptions, VariantHandle};
use nversion::codegen::{self, SpecializedVariant, Template};
use nversion::genome;
use nversion::guard::{self, MapsSource, SegmentDictionary};
use nversion::harness::{self, CostMode, CostParameters, ExperimentReport};
use nversion::pool::{variant_pool_build, VariantPool};
use nversion::server::{http, replay, NVersionDatabase, Server, ServerOptions, Verdict};

#[derive(Parser)]
#[command(name = "nversion", version, about = "Per-client SHA-1 variants for request authentication")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the registration and verification server.
    Serve(ServeArgs),
    /// Obtain a variant from the server.
    Register(RegisterArgs),
    /// Send one MAC'd request.
    Send(SendArgs),
    /// Check a memory map against a segment dictionary.
    GuardScan(GuardScanArgs),
    /// Run an experiment.
    #[command(subcommand)]
    Simulate(Simulate),
    /// Attacker cost for `n` targets.
    Cost(CostArgs),
    /// Render a variant source from chromosomes.
    Render(RenderArgs),
    /// Build a variant pool into a directory.
    PoolBuild(PoolBuildArgs),
    /// Hash stdin (or a file) with the given genes.
    Digest(DigestArgs),
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, env = "NVERSION_LISTEN", default_value = "127.0.0.1:8080")]
    listen: SocketAddr,
    #[arg(long, env = "NVERSION_DB", default_value = "nversion.db")]
    db: PathBuf,
    /// Loaded if it holds a manifest, otherwise built and saved there.
    #[arg(long, env = "NVERSION_POOL_DIR", default_value = "pool")]
    pool_dir: PathBuf,
    #[arg(long, env = "NVERSION_POOL_SIZE", default_value_t = 64)]
    pool_size: usize,
    #[arg(long, env = "NVERSION_REPLAY_WINDOW", default_value_t = replay::DEFAULT_WINDOW)]
    replay_window: usize,
    /// Hand each variant to at most one client.
    #[arg(long, env = "NVERSION_UNIQUE")]
    unique: bool,
    #[arg(long, env = "NVERSION_SEED")]
    seed: Option<u64>,
    #[arg(long, env = "NVERSION_TEMPLATE", default_value = codegen::DEFAULT_TEMPLATE)]
    template: String,
}

#[derive(Args)]
struct RegisterArgs {
    #[arg(long, env = "NVERSION_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long)]
    id: String,
    #[arg(long, default_value = "variants")]
    variant_dir: PathBuf,
    /// Compile the delivered source.
    #[arg(long)]
    build: bool,
}

#[derive(Args)]
struct GuardArgs {
    /// Read the memory map from a file.
    #[arg(long, conflicts_with = "live")]
    maps: Option<PathBuf>,
    /// Read this process's own memory map.
    #[arg(long)]
    live: bool,
    #[arg(long)]
    dict: Option<PathBuf>,
}

impl GuardArgs {
    fn source(&self) -> Option<MapsSource> {
        match (&self.maps, self.live) {
            (Some(path), _) => Some(MapsSource::File(path.clone())),
            (None, true) => Some(MapsSource::Live),
            (None, false) => None,
        }
    }
}

#[derive(Args)]
struct SendArgs {
    #[arg(long, env = "NVERSION_SERVER", default_value = "http://127.0.0.1:8080")]
    server: String,
    #[arg(long)]
    id: String,
    /// Payload file; `-` reads stdin.
    #[arg(long)]
    payload: PathBuf,
    /// Delivered source (interpreted) or a built variant program.
    #[arg(long, required_unless_present = "genes_fp")]
    variant: Option<PathBuf>,
    /// Test mode: use these genes directly.
    #[arg(long, requires = "genes_k", conflicts_with = "variant")]
    genes_fp: Option<String>,
    #[arg(long)]
    genes_k: Option<String>,
    #[command(flatten)]
    guard: GuardArgs,
    /// Report violations but send anyway.
    #[arg(long)]
    no_abort: bool,
}

#[derive(Args)]
struct GuardScanArgs {
    #[command(flatten)]
    guard: GuardArgs,
    /// Write a dictionary of the scanned map instead of checking.
    #[arg(long)]
    record: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Records,
}

#[derive(Subcommand)]
enum Simulate {
    /// Hash one message under random gene pairs.
    Divergence {
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "abc")]
        message: String,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
    /// Replay one client's genes under every other identity.
    Replication {
        #[arg(long, default_value_t = 10)]
        clients: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Text)]
        format: Format,
    },
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    c0: f64,
    #[arg(long)]
    c1: f64,
    #[arg(long)]
    c2: f64,
    #[arg(long)]
    c3: f64,
    #[arg(long)]
    n: u64,
    /// `tamper-each` or `gene-extraction`.
    #[arg(long)]
    mode: CostMode,
}

#[derive(Args)]
struct GenesArgs {
    /// 40-hex function chromosome; omit both for a random draw.
    #[arg(long, requires = "k")]
    fp: Option<String>,
    #[arg(long, requires = "fp")]
    k: Option<String>,
    /// Seed for the random draw.
    #[arg(long, conflicts_with = "fp")]
    seed: Option<u64>,
    /// Standard SHA-1 genes.
    #[arg(long, conflicts_with_all = ["fp", "seed"])]
    canonical: bool,
}

impl GenesArgs {
    fn genes(&self) -> Result<nversion::GeneVector> {
        if self.canonical {
            return Ok(nversion::canonical_genes());
        }
        match (&self.fp, &self.k) {
            (Some(fp), Some(k)) => Ok(genome::decode_hex(fp, k)?),
            _ => Ok(genome::random_genes(self.seed)),
        }
    }
}

#[derive(Args)]
struct RenderArgs {
    #[command(flatten)]
    genes: GenesArgs,
    #[arg(long, default_value = codegen::DEFAULT_TEMPLATE)]
    template: String,
    /// Output file; stdout when omitted.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PoolBuildArgs {
    #[arg(long)]
    dir: PathBuf,
    #[arg(long, default_value_t = 64)]
    size: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = codegen::DEFAULT_TEMPLATE)]
    template: String,
}

#[derive(Args)]
struct DigestArgs {
    #[command(flatten)]
    genes: GenesArgs,
    /// Input file; stdin when omitted.
    #[arg(long)]
    input: Option<PathBuf>,
}

fn read_input(path: Option<&Path>) -> Result<Vec<u8>> {
    match path {
        Some(p) if p != Path::new("-") => std::fs::read(p).with_context(|| format!("reading {}", p.display())),
        _ => {
            let mut buf = Vec::new();
            std::io::Read::read_to_end(&mut std::io::stdin(), &mut buf)?;
            Ok(buf)
        }
    }
}

fn load_pool(args: &ServeArgs) -> Result<VariantPool> {
    if args.pool_dir.join("pool.tsv").exists() {
        let pool = VariantPool::load_dir(&args.pool_dir)?;
        log::info!("loaded {} variants from {}", pool.len(), args.pool_dir.display());
        return Ok(pool);
    }
    let pool = variant_pool_build(args.pool_size, args.seed, &args.template)?;
    pool.save_dir(&args.pool_dir)?;
    log::info!("built {} variants into {}", pool.len(), args.pool_dir.display());
    Ok(pool)
}

fn serve(args: ServeArgs) -> Result<ExitCode> {
    let pool = load_pool(&args)?;
    let db = NVersionDatabase::load_or_default(&args.db)?;
    let options = ServerOptions {
        replay_window: args.replay_window,
        unique_assignment: args.unique,
        db_path: Some(args.db.clone()),
        seed: args.seed,
    };
    let server = Arc::new(Server::new(db, pool, options));
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(args.listen).await?;
        eprintln!("listening on http://{}", listener.local_addr()?);
        http::serve(listener, server, async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
    })?;
    Ok(ExitCode::SUCCESS)
}

fn register(args: RegisterArgs) -> Result<ExitCode> {
    let mut ctx = ClientContext::new(&args.id, &args.server);
    let options = RegisterOptions { variant_dir: Some(args.variant_dir), build: args.build };
    client::client_register(&mut ctx, &options)?;
    let delivery = ctx.delivery.expect("set on success");
    println!("variant {}", delivery.variant_id);
    println!("token   {}", delivery.token);
    if let Some(path) = delivery.source_path {
        println!("source  {}", path.display());
    }
    if let Some(VariantHandle::Executable(exe)) = ctx.variant {
        println!("program {}", exe.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// A path with a template's extension is interpreted; anything else is run.
fn variant_handle(path: &Path) -> Result<VariantHandle> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    match Template::for_extension(ext) {
        Some(template) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            Ok(VariantHandle::Interpreted(SpecializedVariant::from_text(&template.id, &text)?))
        }
        None => Ok(VariantHandle::Executable(path.to_path_buf())),
    }
}

fn load_dict(path: Option<&Path>) -> Result<SegmentDictionary> {
    let Some(path) = path else { bail!("--dict is required with --maps or --live") };
    Ok(SegmentDictionary::load(path)?)
}

fn send(args: SendArgs) -> Result<ExitCode> {
    let handle = match (&args.variant, &args.genes_fp, &args.genes_k) {
        (Some(path), _, _) => variant_handle(path)?,
        (None, Some(fp), Some(k)) => VariantHandle::Embedded(genome::decode_hex(fp, k)?),
        _ => bail!("give --variant or both --genes-fp and --genes-k"),
    };
    let mut ctx = ClientContext::new(&args.id, &args.server);
    ctx.variant = Some(handle);
    if let Some(source) = args.guard.source() {
        let dictionary = load_dict(args.guard.dict.as_deref())?;
        ctx = ctx.with_guard(GuardConfig { dictionary, source, abort_on_violation: !args.no_abort });
    }
    let payload = read_input(Some(&args.payload))?;
    match client::client_send_with_reaction(&mut ctx, &payload, |v| eprintln!("violation: {v}")) {
        Ok(Verdict::Accepted) => {
            println!("accepted");
            Ok(ExitCode::SUCCESS)
        }
        Ok(Verdict::Rejected(reason)) => {
            println!("rejected {reason}");
            Ok(ExitCode::from(1))
        }
        Err(ClientError::GuardViolation(v)) => {
            println!("aborted: {} violation(s)", v.len());
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn guard_scan(args: GuardScanArgs) -> Result<ExitCode> {
    let Some(source) = args.guard.source() else { bail!("give --maps or --live") };
    if let Some(out) = args.record {
        let records = guard::parse_maps(&source.read()?)?;
        let dict = SegmentDictionary::from_records(&records);
        std::fs::write(&out, dict.render()).with_context(|| format!("writing {}", out.display()))?;
        println!("recorded {} segments to {}", dict.len(), out.display());
        return Ok(ExitCode::SUCCESS);
    }
    let dict = load_dict(args.guard.dict.as_deref())?;
    let violations = guard::run_guard(&source, &dict, |v| println!("{v}"))?;
    if violations.is_empty() {
        println!("clean");
        Ok(ExitCode::SUCCESS)
    } else {
        Ok(ExitCode::from(1))
    }
}

fn print_report(report: &ExperimentReport, format: Format) {
    match format {
        Format::Text => print!("{}", report.render_text()),
        Format::Records => print!("{}", report.render_records()),
    }
}

fn simulate(which: Simulate) -> Result<ExitCode> {
    match which {
        Simulate::Divergence { pairs, seed, message, format } => {
            print_report(&harness::divergence_experiment(pairs, message.as_bytes(), seed), format);
        }
        Simulate::Replication { clients, seed, format } => {
            print_report(&harness::replication_experiment(clients, seed)?, format);
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let level = if matches!(cli.command, Command::Serve(_)) { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cli.command {
        Command::Serve(args) => serve(args),
        Command::Register(args) => register(args),
        Command::Send(args) => send(args),
        Command::GuardScan(args) => guard_scan(args),
        Command::Simulate(which) => simulate(which),
        Command::Cost(args) => {
            let params = CostParameters::new(args.c0, args.c1, args.c2, args.c3, args.n)?;
            println!("{}", harness::cost_total(&params, args.mode));
            Ok(ExitCode::SUCCESS)
        }
        Command::Render(args) => {
            let variant = codegen::render_variant(&args.genes.genes()?, &args.template)?;
            match args.out {
                Some(path) => variant.write_to(&path).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{}", variant.source_text),
            }
            eprintln!("variant {}", variant.genes_fingerprint);
            Ok(ExitCode::SUCCESS)
        }
        Command::PoolBuild(args) => {
            let pool = variant_pool_build(args.size, args.seed, &args.template)?;
            pool.save_dir(&args.dir)?;
            println!("{} variants in {}", pool.len(), args.dir.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Digest(args) => {
            let message = read_input(args.input.as_deref())?;
            println!("{}", nversion::digest(&args.genes.genes()?, &message));
            Ok(ExitCode::SUCCESS)
        }
    }
}
