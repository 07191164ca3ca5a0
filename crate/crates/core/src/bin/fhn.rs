use clap::{Arg, ArgAction, ArgMatches, Command as Cli};
use fhn_spde::config::{parse_override, Config, KEYS};
use fhn_spde::experiments::{run, Command};
use fhn_spde::Error;
use std::path::PathBuf;
use std::process::ExitCode;

const BOOL_KEYS: &[&str] = &["renorm", "corrupt-shift", "dump-fields"];

fn cli() -> Cli {
    let mut app = Cli::new("fhn")
        .about("Renormalised FitzHugh-Nagumo SPDE experiments")
        .args_override_self(true)
        .arg(
            Arg::new("command")
                .required(true)
                .value_parser(clap::builder::EnumValueParser::<Command>::new()),
        )
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_parser(clap::value_parser!(PathBuf))
                .help("TOML file of key = value pairs"),
        );
    for &key in KEYS {
        let mut arg = Arg::new(key).long(key).global(true).action(ArgAction::Set);
        if BOOL_KEYS.contains(&key) {
            arg = arg.num_args(0..=1).default_missing_value("true");
        }
        app = app.arg(arg);
    }
    app
}

fn execute(m: &ArgMatches) -> Result<i32, Error> {
    let command = *m.get_one::<Command>("command").expect("required");
    let mut overrides = toml::Table::new();
    for &key in KEYS {
        if let Some(raw) = m.get_one::<String>(key) {
            overrides.insert(key.to_string(), parse_override(key, raw)?);
        }
    }
    let cfg = Config::load(m.get_one::<PathBuf>("config").map(|p| p.as_path()), overrides)?;
    if cfg.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let report = run(command, &cfg)?;
    let verdict = match report.summary.pass_fail {
        Some(true) => "PASS",
        Some(false) => "FAIL",
        None => "n/a",
    };
    println!("{} {} -> {}", command.name(), verdict, report.dir.display());
    Ok(report.exit_code)
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(&matches) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
