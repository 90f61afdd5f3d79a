use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atmcash_core::harness::{self, measure_steps, AtmBehavior, Event, Expect, Roster, RunReport, Scenario, ScenarioConfig};
use atmcash_core::{BalanceMode, Bank, BankConfig, CyclicGroup, Profile, Variant};
use clap::{Args, Parser, Subcommand};
use rand_chacha::ChaCha20Rng;
use rand_core::SeedableRng;

const PASS: u8 = 0;
const FAIL: u8 = 1;
const USAGE: u8 = 2;

/// Upper bounds on serialized object sizes, in bytes.
const MAX_COIN: usize = 2 * 1024;
const MAX_VOUCHER: usize = 60 * 1024;
const MAX_TRANSACTION: usize = 4 * 1024;

#[derive(Parser, Debug)]
#[command(name = "atmcash", version, about = "Multi-issuer offline e-cash: demos, scenarios and benchmarks")]
struct Cli {
    #[command(flatten)]
    opts: Options,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Args, Debug, Clone)]
struct Options {
    /// Parameter profile: production (2048-bit RSA) or toy (1024-bit, tests only).
    #[arg(long, global = true)]
    profile: Option<Profile>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Use the compact variant with reusable PRF keys.
    #[arg(long, global = true)]
    compact: bool,
    /// ATMs check balances against the bank's broadcast filter.
    #[arg(long, global = true)]
    offline: bool,
    /// Scenario file to run; same as `scenario PATH`.
    #[arg(long, global = true, value_name = "PATH")]
    scenario: Option<PathBuf>,
    /// Also write the report to this file.
    #[arg(long, global = true, value_name = "PATH")]
    report: Option<PathBuf>,
    /// Target false-positive rate of the low-balance filter.
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    #[arg(long, global = true)]
    mint_cap: Option<u64>,
    #[arg(long, global = true)]
    opening_balance: Option<u64>,
    #[arg(long, global = true)]
    flush_interval: Option<u64>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate bank keys and print the public parameters.
    Keygen,
    /// Run stock, withdraw, spend and deposit, printing every message.
    Demo,
    /// Run a scenario file and check its expectations and invariants.
    Scenario { path: Option<PathBuf> },
    /// Time the four protocol steps and report object sizes.
    Bench {
        #[arg(long, default_value_t = 5)]
        samples: usize,
    },
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Failure { code: USAGE, message: message.into() }
    }

    fn check(message: impl Into<String>) -> Self {
        Failure { code: FAIL, message: message.into() }
    }
}

impl Options {
    fn profile(&self, default: Profile) -> Profile {
        self.profile.unwrap_or(default)
    }

    fn variant(&self) -> Variant {
        if self.compact {
            Variant::Compact
        } else {
            Variant::Plain
        }
    }

    fn apply(&self, c: &mut ScenarioConfig) {
        if let Some(p) = self.profile {
            c.profile = p;
        }
        if self.compact {
            c.variant = Variant::Compact;
        }
        if self.offline {
            c.mode = BalanceMode::OfflineWithFallback;
        }
        if let Some(e) = self.epsilon {
            c.epsilon = e;
        }
        if let Some(v) = self.mint_cap {
            c.mint_cap = v;
        }
        if let Some(v) = self.opening_balance {
            c.opening_balance = v;
        }
        if let Some(v) = self.flush_interval {
            c.flush_interval = v;
        }
    }

    fn validate(&self) -> Result<(), Failure> {
        if let Some(e) = self.epsilon {
            if !(e > 0.0 && e < 1.0) {
                return Err(Failure::usage(format!("--epsilon must lie in (0, 1), got {e}")));
            }
        }
        Ok(())
    }
}

fn write_report(opts: &Options, text: &str) -> Result<(), Failure> {
    if let Some(path) = &opts.report {
        fs::write(path, text).map_err(|e| Failure::usage(format!("cannot write {}: {e}", path.display())))?;
    }
    Ok(())
}

fn keygen(opts: &Options) -> Result<String, Failure> {
    let profile = opts.profile(Profile::Production);
    if profile == Profile::Toy {
        return Err(Failure::usage("keygen refuses the toy profile: its keys are for tests only"));
    }
    let mut rng = match opts.seed {
        Some(s) => ChaCha20Rng::seed_from_u64(s),
        None => ChaCha20Rng::from_entropy(),
    };
    let bank = Bank::init(BankConfig { profile, ..BankConfig::default() }, &mut rng)
        .map_err(|e| Failure::check(format!("bank setup failed: {e}")))?;
    if !bank.self_test(&mut rng) {
        return Err(Failure::check("bank key self-test failed"));
    }
    let p = bank.params();
    let mut out = String::new();
    let _ = writeln!(out, "profile = \"{}\"", profile.name());
    let _ = writeln!(out, "rsa_bits = {}", p.blind_pk.modulus_bits());
    let _ = writeln!(out, "compact_n = {}", p.compact_n);
    let _ = writeln!(out, "blind_pk = \"{}\"", hex::encode(p.blind_pk.to_bytes()));
    let _ = writeln!(out, "user_cred_pk = \"{}\"", hex::encode(p.user_cred.to_bytes()));
    let _ = writeln!(out, "atm_cred_pk = \"{}\"", hex::encode(p.atm_cred.to_bytes()));
    let _ = writeln!(out, "key_cred_pk = \"{}\"", hex::encode(p.key_cred.to_bytes()));
    let _ = writeln!(out, "cert_pk = \"{}\"", hex::encode(p.cert_pk.to_bytes()));
    let _ = writeln!(out, "g = \"{}\"", hex::encode(p.gens.g.to_bytes()));
    for (i, g) in p.gens.messages.iter().enumerate() {
        let _ = writeln!(out, "g{} = \"{}\"", i + 1, hex::encode(g.to_bytes()));
    }
    let _ = writeln!(out, "g_blinding = \"{}\"", hex::encode(p.gens.blinding.to_bytes()));
    Ok(out)
}

fn demo_scenario(opts: &Options) -> Scenario {
    let mut config = ScenarioConfig { profile: opts.profile(Profile::Production), ..ScenarioConfig::default() };
    opts.apply(&mut config);
    let mut events = Vec::new();
    if config.mode != BalanceMode::Online {
        events.push(Event::BroadcastFilter { epoch: 1 });
    }
    events.push(match config.variant {
        Variant::Plain => Event::Stock { atm: "atm0".into(), count: 1 },
        Variant::Compact => Event::ProvisionCompact { atm: "atm0".into() },
    });
    events.push(Event::Withdraw { user: "user0".into(), atm: "atm0".into(), behavior: AtmBehavior::Honest });
    if config.mode != BalanceMode::Online {
        events.push(Event::Flush { atm: "atm0".into() });
    }
    events.push(Event::Spend { user: "user0".into(), coin: 0, merchant: "merchant0".into() });
    events.push(Event::Deposit { merchant: "merchant0".into() });
    let last = events.len() - 1;
    Scenario {
        name: "demo".to_string(),
        seed: opts.seed.unwrap_or(0),
        roster: Roster::default(),
        config,
        events,
        expect: vec![Expect { event: Some(last), outcome: Some("accepted".into()), ..Expect::default() }],
    }
}

fn size_of(report: &RunReport, kind: &str) -> usize {
    report.log.records().iter().filter(|r| r.kind == kind).map(|r| r.bytes.len()).max().unwrap_or(0)
}

fn demo(opts: &Options) -> Result<String, Failure> {
    let scenario = demo_scenario(opts);
    let report = harness::run(&scenario).map_err(|e| Failure::check(e.to_string()))?;
    let mut out = String::new();
    let _ = writeln!(
        out,
        "demo: profile {}, {:?} variant, {:?} balance checks",
        scenario.config.profile.name(),
        scenario.config.variant,
        scenario.config.mode
    );
    for r in report.log.records() {
        let _ = writeln!(out, "  {:<16} {:>9} -> {:<9} {:>6} bytes", r.kind, r.sender, r.receiver, r.bytes.len());
    }
    for (i, o) in report.outcomes.iter().enumerate() {
        let _ = writeln!(out, "  event {i}: {o}");
    }
    let sizes = [
        ("coin", size_of(&report, "Coin"), MAX_COIN),
        ("voucher", size_of(&report, "Voucher"), MAX_VOUCHER),
        ("transaction", size_of(&report, "Transaction"), MAX_TRANSACTION),
    ];
    let mut ok = report.passed();
    for (name, size, max) in sizes {
        let within = size > 0 && size <= max;
        ok &= within;
        let _ = writeln!(out, "  {name}: {size} bytes (limit {max}){}", if within { "" } else { " EXCEEDED" });
    }
    for c in report.checks.iter().filter(|c| !c.passed) {
        let _ = writeln!(out, "  FAIL {}: {}", c.name, c.detail);
    }
    let _ = writeln!(out, "verdict: {}", if ok { "pass" } else { "fail" });
    write_report(opts, &out)?;
    if ok {
        Ok(out)
    } else {
        Err(Failure::check(out))
    }
}

fn scenario(opts: &Options, path: &Path) -> Result<String, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::usage(format!("cannot read {}: {e}", path.display())))?;
    let mut scenario = Scenario::from_toml(&text).map_err(|e| Failure::usage(e.to_string()))?;
    opts.apply(&mut scenario.config);
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    let report = harness::run(&scenario).map_err(|e| Failure::usage(e.to_string()))?;
    let mut out = report.render();
    let _ = writeln!(out, "verdict: {}", if report.passed() { "pass" } else { "fail" });
    write_report(opts, &out)?;
    if report.passed() {
        Ok(out)
    } else {
        Err(Failure::check(out))
    }
}

fn bench(opts: &Options, samples: usize) -> Result<String, Failure> {
    if samples == 0 {
        return Err(Failure::usage("--samples must be at least 1"));
    }
    let report = measure_steps(opts.profile(Profile::Production), opts.variant(), opts.seed.unwrap_or(0), samples)
        .map_err(|e| Failure::check(e.to_string()))?;
    let out = report.to_toml();
    write_report(opts, &out)?;
    Ok(out)
}

fn execute(cli: Cli) -> Result<String, Failure> {
    cli.opts.validate()?;
    let opts = &cli.opts;
    match (cli.command, &opts.scenario) {
        (Some(Command::Scenario { path: Some(_) }), Some(_)) => {
            Err(Failure::usage("give the scenario path once, either positionally or with --scenario"))
        }
        (Some(Command::Scenario { path: Some(p) }), None) => scenario(opts, &p),
        (Some(Command::Scenario { path: None }) | None, Some(p)) => scenario(opts, p),
        (Some(Command::Scenario { path: None }), None) => Err(Failure::usage("scenario needs a path")),
        (Some(_), Some(_)) => Err(Failure::usage("--scenario only combines with the scenario command")),
        (Some(Command::Keygen), None) => keygen(opts),
        (Some(Command::Demo), None) => demo(opts),
        (Some(Command::Bench { samples }), None) => bench(opts, samples),
        (None, None) => Err(Failure::usage("no command given; see --help")),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { PASS });
        }
    };
    match execute(cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::from(PASS)
        }
        Err(f) => {
            eprint!("{}", f.message);
            if !f.message.ends_with('\n') {
                eprintln!();
            }
            ExitCode::from(f.code)
        }
    }
}
