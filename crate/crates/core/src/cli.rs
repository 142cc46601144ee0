//! `spir` command-line front end.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use log::info;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::config::{parse_config, AppConfig};
use crate::cube::{entries_from_bytes, load_entries, synthetic_records, DatabaseCube, LoadedEntries, Manifest};
use crate::error::{Error, Result};
use crate::keystore::{create_pool, open_pool_dir, read_pool_file, Direction, KeyStore, PoolId, PoolKey};
use crate::net::{party_stores, serve_tcp_with, DataCentre, Link, SimDeployment, TcpConnector, UserClient};
use crate::qkd::{distill_session, optimize_params, sweep_distance, CurvePoint, OptimizedParams};
use crate::spir::{required_key_budget, KeyBudget, Role};

#[derive(Debug, Parser)]
#[command(
    name = "spir",
    version,
    about = "Two-database symmetric PIR over simulated MDI-QKD keys"
)]
pub struct Cli {
    /// Configuration file (`key = value` lines under `[section]` headers).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one configuration key, e.g. `--set channel.arm_km=30`.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    /// Seed for every randomised step (same as `--set run.seed=N`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build the database cube snapshot and manifest.
    Ingest(IngestArgs),
    /// Optimise the QKD link and report the finite-key result.
    QkdSim(QkdArgs),
    /// Distil link keys into pool files.
    QkdKeygen(KeygenArgs),
    /// Install pools for the user and both data centres.
    Provision(ProvisionArgs),
    /// Run one data centre over TCP.
    ServeDc(ServeArgs),
    /// Retrieve one record from the two data centres over TCP.
    Get(GetArgs),
    /// End-to-end run over the simulated network.
    Demo(DemoArgs),
    /// Export key-length curves against distance.
    Sweep(SweepArgs),
    /// Print the effective configuration with value sources.
    Config,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Record directory or manifest file.
    #[arg(long)]
    pub source: Option<PathBuf>,
    /// Generate the synthetic database instead of reading records.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub snapshot: Option<PathBuf>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct QkdArgs {
    /// Fibre length of each arm.
    #[arg(long)]
    pub arm_km: Option<f64>,
    #[arg(long)]
    pub n_pulses: Option<f64>,
    /// Ignore detector saturation when choosing the signal intensity.
    #[arg(long)]
    pub uncapped: bool,
}

#[derive(Debug, Args)]
pub struct KeygenArgs {
    #[command(flatten)]
    pub qkd: QkdArgs,
    /// `user-dc1`, `user-dc2`, `dc1-dc2` or `all`.
    #[arg(long, default_value = "all")]
    pub link: String,
}

#[derive(Debug, Args)]
pub struct ProvisionArgs {
    /// Use one distilled key for all three links.
    #[arg(long)]
    pub reuse_keys: bool,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// `dc1` or `dc2`.
    #[arg(long)]
    pub role: String,
    /// Listen address; defaults to the configured endpoint for the role.
    #[arg(long)]
    pub listen: Option<String>,
    /// Exit after this many connections.
    #[arg(long)]
    pub max_connections: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GetArgs {
    #[arg(long)]
    pub index: usize,
    /// Output file; defaults to `<output_dir>/record_<index>.bin`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    /// Record to retrieve; drawn from the seed if absent.
    #[arg(long)]
    pub index: Option<usize>,
    #[arg(long)]
    pub reuse_keys: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Output CSV stem; `-capped.csv` and `-uncapped.csv` are appended.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

const LINKS: [PoolId; 3] = [PoolId::UserDc1, PoolId::UserDc2, PoolId::Dc1Dc2];

fn flags_for(cli: &Cli) -> Result<Vec<(String, String)>> {
    let mut flags = Vec::new();
    for s in &cli.set {
        let (k, v) = s
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("`--set {s}`: expected KEY=VALUE")))?;
        flags.push((k.trim().to_string(), v.trim().to_string()));
    }
    if let Some(seed) = cli.seed {
        flags.push(("run.seed".into(), seed.to_string()));
    }
    let mut push = |k: &str, v: String| flags.push((k.to_string(), v));
    let qkd = match &cli.command {
        Command::QkdSim(a) => Some(a),
        Command::QkdKeygen(a) => Some(&a.qkd),
        _ => None,
    };
    if let Some(a) = qkd {
        if let Some(v) = a.arm_km {
            push("channel.arm_km", v.to_string());
        }
        if let Some(v) = a.n_pulses {
            push("protocol.n_pulses", v.to_string());
        }
        if a.uncapped {
            push("protocol.capped", "false".into());
        }
    }
    match &cli.command {
        Command::Ingest(a) => {
            if let Some(p) = &a.source {
                push("database.source", p.display().to_string());
            }
            if let Some(p) = &a.snapshot {
                push("database.snapshot", p.display().to_string());
            }
            if let Some(p) = &a.manifest {
                push("database.manifest", p.display().to_string());
            }
        }
        Command::Provision(a) if a.reuse_keys => push("keys.reuse_keys", "true".into()),
        Command::Demo(a) if a.reuse_keys => push("keys.reuse_keys", "true".into()),
        Command::Sweep(a) => {
            if let Some(p) = &a.csv {
                push("sweep.csv", p.display().to_string());
            }
        }
        _ => {}
    }
    Ok(flags)
}

pub fn load_config(cli: &Cli) -> Result<AppConfig> {
    let text = match &cli.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::io(p, e))?,
        None => String::new(),
    };
    parse_config(&text, &flags_for(cli)?)
}

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    let stdout = io::stdout();
    match run(&cli, &mut stdout.lock()) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("spir: error[{}]: {e}", e.kind());
            e.exit_code()
        }
    }
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(cli)?;
    match &cli.command {
        Command::Ingest(a) => ingest(&cfg, a.synthetic, out),
        Command::QkdSim(_) => qkd_sim(&cfg, out),
        Command::QkdKeygen(a) => qkd_keygen(&cfg, &a.link, out),
        Command::Provision(_) => provision(&cfg, out),
        Command::ServeDc(a) => serve_dc(&cfg, a, out),
        Command::Get(a) => get(&cfg, a, out),
        Command::Demo(a) => run_demo(&cfg, a.index, out).map(|_| ()),
        Command::Sweep(_) => sweep(&cfg, out),
        Command::Config => write_out(out, &cfg.describe()),
    }
}

fn write_out(out: &mut dyn Write, s: &str) -> Result<()> {
    out.write_all(s.as_bytes()).map_err(|e| Error::io("<stdout>", e))
}

/// `172314` → `172,314`.
pub fn group_digits(v: u64) -> String {
    let s = v.to_string();
    let mut out = String::new();
    for (i, c) in s.chars().enumerate() {
        if i > 0 && (s.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn load_database(cfg: &AppConfig) -> Result<LoadedEntries> {
    match &cfg.database.source {
        Some(src) => load_entries(src),
        None => entries_from_bytes(synthetic_records(
            cfg.database.synthetic_n as usize,
            cfg.database.synthetic_max_bytes as usize,
            cfg.run.seed,
        )),
    }
}

fn budget_line(b: &KeyBudget) -> String {
    format!(
        "key budget per retrieval: user<->DC {} bits per link, DC1<->DC2 {} bits",
        group_digits(b.user_dc_bits),
        group_digits(b.dc_dc_bits)
    )
}

fn ingest(cfg: &AppConfig, synthetic: bool, out: &mut dyn Write) -> Result<()> {
    let entries = if synthetic {
        let recs = synthetic_records(
            cfg.database.synthetic_n as usize,
            cfg.database.synthetic_max_bytes as usize,
            cfg.run.seed,
        );
        let dir = cfg.run.output_dir.join("records");
        for (name, bytes) in &recs {
            write_file(&dir.join(name), bytes)?;
        }
        entries_from_bytes(recs)?
    } else {
        if cfg.database.source.is_none() {
            return Err(Error::Config("ingest needs --source or --synthetic".into()));
        }
        load_database(cfg)?
    };
    let cube = DatabaseCube::from_entries(&entries)?;
    if let Some(dir) = cfg.database.snapshot.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    cube.write_snapshot(&cfg.database.snapshot)?;
    write_file(&cfg.database.manifest, entries.manifest.to_text().as_bytes())?;
    let b = required_key_budget(entries.n, entries.entry_bits);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "records: n = {}, L = {} bits, m = {}",
        entries.n,
        entries.entry_bits,
        cube.side()
    );
    let _ = writeln!(s, "snapshot: {}", cfg.database.snapshot.display());
    let _ = writeln!(s, "manifest: {}", cfg.database.manifest.display());
    let _ = writeln!(s, "{}", budget_line(&b));
    write_out(out, &s)
}

fn optimize(cfg: &AppConfig) -> Result<OptimizedParams> {
    optimize_params(&cfg.channel_model(), cfg.protocol.n_pulses, &cfg.search_constraints())
}

fn qkd_sim(cfg: &AppConfig, out: &mut dyn Write) -> Result<()> {
    let o = optimize(cfg)?;
    let r = &o.result;
    let b = &o.bounds;
    let p = &o.params;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "arm length: {} km per arm, N = {:e}",
        cfg.channel.arm_km, cfg.protocol.n_pulses
    );
    let _ = writeln!(
        s,
        "intensities: mu1 = {:.6}, mu2 = {:.6}, mu3 = {:.6}",
        p.intensities[0], p.intensities[1], p.intensities[2]
    );
    let _ = writeln!(s, "probabilities Z: {:?}", p.probabilities[0]);
    let _ = writeln!(s, "probabilities X: {:?}", p.probabilities[1]);
    let _ = writeln!(s, "sifted bits: {:.0}", b.sifted_bits);
    let _ = writeln!(s, "kept bits: {:.0}", b.kept_bits);
    let _ = writeln!(s, "qber_z: {:.6}", b.qber_z);
    let _ = writeln!(s, "n0_lower: {:.1}", r.n0_lower);
    let _ = writeln!(s, "n1_lower: {:.1}", r.n1_lower);
    let _ = writeln!(s, "e1_upper: {:.6}", r.e1_upper);
    let _ = writeln!(s, "leak_ec: {:.0}", r.leak_ec);
    let _ = writeln!(s, "l: {}", r.l);
    for d in &o.diagnostics {
        let _ = writeln!(s, "note: {d}");
    }
    write_out(out, &s)
}

/// Optimises the link and distils one shared key; returns its bytes.
pub fn distill_link(cfg: &AppConfig, seed: u64) -> Result<(Vec<u8>, u64)> {
    let o = optimize(cfg)?;
    let keys = distill_session(&cfg.channel_model(), &o.params, seed)?;
    if keys.user_key != keys.peer_key {
        return Err(Error::Protocol("distilled keys disagree".into()));
    }
    if keys.user_key.len() < 8 {
        return Err(Error::BudgetExhausted {
            needed: 8,
            available: keys.user_key.len() as u64,
        });
    }
    let whole = keys.user_key.len() / 8;
    Ok((keys.user_key.to_bytes()[..whole].to_vec(), keys.result.l))
}

fn link_seed(cfg: &AppConfig, link: PoolId) -> u64 {
    let i = LINKS.iter().position(|&l| l == link).expect("known link") as u64;
    cfg.run.seed.wrapping_mul(3).wrapping_add(i)
}

/// Distils every link in `links` concurrently.
fn distill_links(cfg: &AppConfig, links: &[PoolId]) -> Result<Vec<(PoolId, Vec<u8>, u64)>> {
    std::thread::scope(|s| {
        let hs: Vec<_> = links
            .iter()
            .map(|&link| s.spawn(move || distill_link(cfg, link_seed(cfg, link)).map(|(k, l)| (link, k, l))))
            .collect();
        hs.into_iter()
            .map(|h| {
                h.join()
                    .unwrap_or_else(|_| Err(Error::Protocol("distillation worker panicked".into())))
            })
            .collect()
    })
}

fn links_dir(cfg: &AppConfig) -> PathBuf {
    cfg.keys.dir.join("links")
}

fn link_file(cfg: &AppConfig, link: PoolId) -> PathBuf {
    links_dir(cfg).join(format!("{}.qkey", link.name()))
}

fn parse_links(spec: &str) -> Result<Vec<PoolId>> {
    if spec == "all" {
        return Ok(LINKS.to_vec());
    }
    spec.split(',')
        .map(|s| {
            LINKS.iter().copied().find(|l| l.name() == s.trim()).ok_or_else(|| {
                Error::Config(format!(
                    "unknown link `{s}`; expected user-dc1, user-dc2, dc1-dc2 or all"
                ))
            })
        })
        .collect()
}

fn qkd_keygen(cfg: &AppConfig, spec: &str, out: &mut dyn Write) -> Result<()> {
    let links = parse_links(spec)?;
    let mut s = String::new();
    for (link, key, l) in distill_links(cfg, &links)? {
        let pool = create_pool(link, &key)?;
        let path = link_file(cfg, link);
        write_file(&path, &pool.to_file_bytes())?;
        let _ = writeln!(
            s,
            "{}: l = {l} bits, pool {} ({} bits)",
            link.name(),
            path.display(),
            pool.capacity_bits()
        );
    }
    write_out(out, &s)
}

fn party_dir(cfg: &AppConfig, party: &str) -> PathBuf {
    cfg.keys.dir.join(party)
}

fn provision(cfg: &AppConfig, out: &mut dyn Write) -> Result<()> {
    let mut s = String::new();
    let mut material: Vec<Vec<u8>> = Vec::new();
    if cfg.keys.reuse_keys {
        let link = PoolId::UserDc1;
        let key = match read_pool_file(&link_file(cfg, link)) {
            Ok(p) => p.to_file_bytes()[14..].to_vec(),
            Err(_) => distill_links(cfg, &[link])?.remove(0).1,
        };
        let _ = writeln!(s, "warning: --reuse-keys installs one distilled key on all three links; pads are not independent across links");
        material = vec![key.clone(), key.clone(), key];
    } else {
        let missing: Vec<PoolId> = LINKS.iter().copied().filter(|&l| !link_file(cfg, l).exists()).collect();
        let fresh = distill_links(cfg, &missing)?;
        for link in LINKS {
            let key = match fresh.iter().find(|(l, _, _)| *l == link) {
                Some((_, k, _)) => {
                    write_file(&link_file(cfg, link), &create_pool(link, k)?.to_file_bytes())?;
                    k.clone()
                }
                None => {
                    let p = read_pool_file(&link_file(cfg, link))?;
                    if p.consumed_bits() > 0 {
                        return Err(Error::KeyReuse(format!(
                            "link file for {} is partly consumed",
                            link.name()
                        )));
                    }
                    p.to_file_bytes()[14..].to_vec()
                }
            };
            material.push(key);
        }
    }
    let (user, dcs) = party_stores(&material[0], &material[1], &material[2])?;
    for (name, store) in [("user", &user), ("dc1", &dcs[0]), ("dc2", &dcs[1])] {
        let dir = party_dir(cfg, name);
        if dir.exists() {
            return Err(Error::Config(format!(
                "{} already exists; refusing to overwrite provisioned pools",
                dir.display()
            )));
        }
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        for p in store.save_pools(&dir)? {
            let _ = writeln!(s, "{name}: {}", p.display());
        }
    }
    write_file(&party_dir(cfg, "user").join("mask.cursor"), b"0\n")?;
    write_out(out, &s)
}

fn parse_role(s: &str) -> Result<Role> {
    match s {
        "dc1" => Ok(Role::Dc1),
        "dc2" => Ok(Role::Dc2),
        _ => Err(Error::Config(format!("unknown role `{s}`; expected dc1 or dc2"))),
    }
}

fn serve_dc(cfg: &AppConfig, a: &ServeArgs, out: &mut dyn Write) -> Result<()> {
    let role = parse_role(&a.role)?;
    let cube = DatabaseCube::read_snapshot(&cfg.database.snapshot)?;
    let dir = party_dir(cfg, role.name());
    let keys = open_pool_dir(&dir)?.with_ledger_file(dir.join("ledger.log"));
    let addr = a.listen.clone().unwrap_or_else(|| match role {
        Role::Dc1 => cfg.network.dc1.clone(),
        Role::Dc2 => cfg.network.dc2.clone(),
    });
    let listener = TcpListener::bind(&addr).map_err(|e| Error::io(&addr, e))?;
    let bound = listener.local_addr().map_err(|e| Error::io(&addr, e))?;
    write_out(out, &format!("{} listening on {bound}\n", role.name()))?;
    out.flush().map_err(|e| Error::io("<stdout>", e))?;
    let dc = Arc::new(DataCentre::new(role, cube, Arc::new(keys)));
    serve_tcp_with(dc, listener, a.max_connections, move |dc| {
        if let Err(e) = dc.keys().save_pools(&dir) {
            log::error!("{}: saving pools failed: {e}", dc.role().name());
        }
    })
}

fn read_cursor(path: &Path) -> Result<u64> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.trim()
        .parse()
        .map_err(|_| Error::Config(format!("{}: not a mask cursor", path.display())))
}

fn get(cfg: &AppConfig, a: &GetArgs, out: &mut dyn Write) -> Result<()> {
    let text = fs::read_to_string(&cfg.database.manifest).map_err(|e| Error::io(&cfg.database.manifest, e))?;
    let manifest = Manifest::parse(&text)?;
    let n = manifest.entries.len();
    let entry_bits = 8 * manifest.entries.iter().map(|e| e.byte_len).max().unwrap_or(0);
    if n == 0 || entry_bits == 0 {
        return Err(Error::Config("manifest lists no non-empty records".into()));
    }
    let dir = party_dir(cfg, "user");
    let cursor_path = dir.join("mask.cursor");
    let keys = Arc::new(open_pool_dir(&dir)?.with_ledger_file(dir.join("ledger.log")));
    let client = UserClient::new(keys.clone(), n, entry_bits)
        .with_manifest(manifest)
        .with_mask_cursor(read_cursor(&cursor_path)?);
    let m = client.plan().m;
    if a.index >= n && a.index < m * m * m {
        eprintln!(
            "spir: warning: index {} is a padding cell (n = {n}, m = {m}); the record is empty",
            a.index
        );
    }
    // Fresh OS entropy for every session; run.seed is not used here.
    let mut rng = rand::rngs::OsRng;
    let connector = TcpConnector::new(cfg.network.dc1.clone(), cfg.network.dc2.clone());
    let res = client.retrieve(a.index, &connector, &mut rng);
    // Spent and reserved bits persist whether or not the retrieval succeeded.
    if client.mask_cursor() != read_cursor(&cursor_path)? {
        write_file(&cursor_path, format!("{}\n", client.mask_cursor()).as_bytes())?;
    }
    keys.save_pools(&dir)?;
    let got = res?;
    let path = a
        .out
        .clone()
        .unwrap_or_else(|| cfg.run.output_dir.join(format!("record_{}.bin", a.index)));
    write_file(&path, &got.bytes)?;
    write_out(
        out,
        &format!(
            "retrieved index {} ({} bytes{}) -> {}\n",
            a.index,
            got.bytes.len(),
            if got.padding { ", padding" } else { "" },
            path.display()
        ),
    )
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LinkUse {
    pub link: &'static str,
    pub spent_bits: u64,
    pub budget_bits: u64,
}

#[derive(Debug, Clone)]
pub struct DemoReport {
    pub index: usize,
    pub n: usize,
    pub entry_bits: usize,
    pub budget: KeyBudget,
    pub byte_exact: bool,
    pub link_use: Vec<LinkUse>,
    pub alarms: usize,
    /// Frames per link, in order, with hex payloads.
    pub transcript: String,
    pub ledgers: String,
    pub elapsed: Duration,
}

fn canonical_transcript(frames: &[(Link, crate::net::Frame)]) -> String {
    let mut links: Vec<Link> = frames.iter().map(|(l, _)| *l).collect();
    links.sort();
    links.dedup();
    let mut s = String::new();
    for link in links {
        for (_, f) in frames.iter().filter(|(l, _)| *l == link) {
            let _ = write!(s, "{link} {} {} ", f.msg_type.name(), f.session);
            for b in &f.payload {
                let _ = write!(s, "{b:02x}");
            }
            s.push('\n');
        }
    }
    s
}

fn spent(store: &KeyStore, id: PoolId, dirs: &[Direction]) -> Result<u64> {
    let mut t = 0;
    for &d in dirs {
        t += store.ledger_report(PoolKey::new(id, d))?.spent_bits;
    }
    Ok(t)
}

/// Ingest, key distillation, provisioning and one retrieval over the
/// simulated network, with outputs written to the run directory.
pub fn run_demo(cfg: &AppConfig, index: Option<usize>, out: &mut dyn Write) -> Result<DemoReport> {
    let start = Instant::now();
    let mut s = String::new();
    let entries = load_database(cfg)?;
    let cube = DatabaseCube::from_entries(&entries)?;
    let budget = required_key_budget(entries.n, entries.entry_bits);
    let _ = writeln!(
        s,
        "database: n = {}, L = {} bits, m = {}",
        entries.n,
        entries.entry_bits,
        cube.side()
    );
    let _ = writeln!(s, "{}", budget_line(&budget));
    let t0 = Instant::now();
    let links: &[PoolId] = if cfg.keys.reuse_keys { &LINKS[..1] } else { &LINKS };
    let keys = distill_links(cfg, links)?;
    for (link, key, l) in &keys {
        let _ = writeln!(
            s,
            "qkd {}: l = {} bits ({} bytes of pool)",
            link.name(),
            group_digits(*l),
            key.len()
        );
    }
    let _ = writeln!(s, "key distillation: {:.1} s", t0.elapsed().as_secs_f64());
    let pick = |i: usize| keys[i.min(keys.len() - 1)].1.as_slice();
    let (user, dcs) = party_stores(pick(0), pick(1), pick(2))?;
    let user = Arc::new(user);
    let dep = SimDeployment::start(cube.clone(), dcs)?;
    let client = UserClient::new(user.clone(), entries.n, entries.entry_bits).with_manifest(entries.manifest.clone());
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.run.seed);
    let x = index.unwrap_or_else(|| rng.gen_range(0..entries.n));
    let got = client.retrieve(x, &dep.net, &mut rng)?;
    let byte_exact = entries
        .manifest
        .byte_len(x)
        .is_some_and(|len| got.bytes.len() == len && got.bytes[..] == entries.records[x].to_bytes()[..len]);
    let link_use = vec![
        LinkUse {
            link: "user-dc1",
            spent_bits: spent(&user, PoolId::UserDc1, &[Direction::Send, Direction::Receive])?,
            budget_bits: budget.user_dc_bits,
        },
        LinkUse {
            link: "user-dc2",
            spent_bits: spent(&user, PoolId::UserDc2, &[Direction::Send, Direction::Receive])?,
            budget_bits: budget.user_dc_bits,
        },
        LinkUse {
            link: "dc1-dc2",
            spent_bits: spent(dep.dcs[0].keys(), PoolId::Dc1Dc2, &[Direction::Whole])?,
            budget_bits: budget.dc_dc_bits,
        },
    ];
    user.audit()?;
    for dc in &dep.dcs {
        dc.keys().audit()?;
    }
    let alarms = dep.net.alarms().len();
    let transcript = canonical_transcript(&dep.net.transcript());
    let mut ledgers = String::new();
    for (name, store) in [
        ("user", user.as_ref()),
        ("dc1", dep.dcs[0].keys().as_ref()),
        ("dc2", dep.dcs[1].keys().as_ref()),
    ] {
        for line in store.ledger_lines() {
            let _ = writeln!(ledgers, "{name} {line}");
        }
    }
    let dir = &cfg.run.output_dir;
    write_file(&dir.join(format!("record_{x}.bin")), &got.bytes)?;
    write_file(&dir.join("transcript.txt"), transcript.as_bytes())?;
    write_file(&dir.join("ledger.txt"), ledgers.as_bytes())?;
    write_file(&dir.join("audit.log"), dep.net.audit_text().as_bytes())?;
    let name = entries.manifest.entries.get(x).map_or("?", |e| e.name.as_str());
    let _ = writeln!(
        s,
        "retrieved index {x} ({name}, {} bytes): {}",
        got.bytes.len(),
        if byte_exact { "byte-exact match" } else { "MISMATCH" }
    );
    for u in &link_use {
        let _ = writeln!(
            s,
            "ledger {}: spent {} of {} budgeted bits",
            u.link,
            group_digits(u.spent_bits),
            group_digits(u.budget_bits)
        );
    }
    let _ = writeln!(
        s,
        "budget ledger: {} / {}",
        group_digits(budget.user_dc_bits),
        group_digits(budget.dc_dc_bits)
    );
    let _ = writeln!(s, "monitor alarms: {alarms}");
    let elapsed = start.elapsed();
    let _ = writeln!(s, "outputs: {}", dir.display());
    info!("demo finished in {:.1} s", elapsed.as_secs_f64());
    write_out(out, &s)?;
    dep.shutdown();
    if !byte_exact {
        return Err(Error::Validation(format!(
            "retrieved record {x} differs from the original"
        )));
    }
    Ok(DemoReport {
        index: x,
        n: entries.n,
        entry_bits: entries.entry_bits,
        budget,
        byte_exact,
        link_use,
        alarms,
        transcript,
        ledgers,
        elapsed,
    })
}

/// Threshold rows written under every curve: the per-retrieval budgets of
/// the 800-record, 4656-bit database.
pub fn default_thresholds() -> Vec<(&'static str, u64)> {
    let b = required_key_budget(800, 4656);
    vec![("dc1-dc2", b.dc_dc_bits), ("user-dc", b.user_dc_bits)]
}

/// `kind,distance_km,l_bits,mu1,mu2,mu3`, one `point` row per curve point
/// and one `threshold:<name>` row per threshold.
pub fn curve_csv(curve: &[CurvePoint], thresholds: &[(&str, u64)]) -> Result<String> {
    annotated_curve_csv(curve, thresholds, &[])
}

/// [`curve_csv`] preceded by one `# note` line per entry of `notes`.
pub fn annotated_curve_csv(curve: &[CurvePoint], thresholds: &[(&str, u64)], notes: &[String]) -> Result<String> {
    if curve.is_empty() {
        return Err(Error::Validation("cannot export an empty curve".into()));
    }
    let mut s = String::new();
    for n in notes {
        let _ = writeln!(s, "# {n}");
    }
    s.push_str("kind,distance_km,l_bits,mu1,mu2,mu3\n");
    for p in curve {
        let [a, b, c] = p.intensities;
        let _ = writeln!(s, "point,{},{},{a:.9},{b:.9},{c:.9}", p.distance_km, p.l);
    }
    for (name, bits) in thresholds {
        let _ = writeln!(s, "threshold:{name},,{bits},,,");
    }
    Ok(s)
}

pub fn export_curve_csv(curve: &[CurvePoint], thresholds: &[(&str, u64)], path: &Path) -> Result<()> {
    let text = curve_csv(curve, thresholds)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// First distance at which the curve drops below `bits`, if it does.
pub fn crossing(curve: &[CurvePoint], bits: u64) -> Option<f64> {
    curve.iter().find(|p| p.l < bits).map(|p| p.distance_km)
}

fn sweep(cfg: &AppConfig, out: &mut dyn Write) -> Result<()> {
    let template = cfg.channel_model();
    let stem = cfg.sweep.csv.with_extension("");
    let mut s = String::new();
    let assumed = format!(
        "assumed constants: dark count {:e}, misalignment {} (calibrated), saturation cap {} counts/s (calibrated), {} dB/km",
        cfg.channel.dark_count,
        cfg.channel.misalignment,
        cfg.channel.saturation_cap.map_or("none".into(), |c| format!("{c:e}")),
        cfg.channel.loss_db_per_km
    );
    let _ = writeln!(s, "{assumed}");
    let thresholds = default_thresholds();
    let runs = [
        ("capped", cfg.sweep.n_capped, true),
        ("uncapped", cfg.sweep.n_uncapped, false),
    ];
    for (name, n, capped) in runs {
        let mut constraints = cfg.search_constraints();
        constraints.saturation = capped;
        let curve = sweep_distance(&template, n, &cfg.sweep.distances_km, &constraints)?;
        let path = PathBuf::from(format!("{}-{name}.csv", stem.display()));
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let notes = [
            assumed.clone(),
            format!(
                "N = {n:e}, saturation cap {}, detector efficiency {}",
                if capped { "applied" } else { "ignored" },
                cfg.channel.detector_efficiency
            ),
        ];
        let text = annotated_curve_csv(&curve, &thresholds, &notes)?;
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        let monotone = curve.windows(2).all(|w| w[1].l <= w[0].l);
        let _ = writeln!(s, "{name} (N = {n:e}): {} points -> {}", curve.len(), path.display());
        for (t, bits) in &thresholds {
            let _ = match crossing(&curve, *bits) {
                Some(d) => writeln!(s, "  below {t} threshold {} bits from {d} km", group_digits(*bits)),
                None => writeln!(
                    s,
                    "  above {t} threshold {} bits over the whole sweep",
                    group_digits(*bits)
                ),
            };
        }
        let _ = writeln!(s, "  monotone non-increasing: {monotone}");
    }
    write_out(out, &s)
}
