use clap::{Arg, ArgAction, Command};
use sqt::commands::COMMANDS;

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

fn cli() -> Command {
    let mut app = Command::new("sqt")
        .about("Photodetection statistics of squeezed light behind random absorbing or amplifying waveguides")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .after_help(
            "Parameters are given as `--key value` or read with `--config FILE` \
             (`key = value` lines or a JSON object). SQT_SEED overrides a file's seed; \
             `--seed` overrides both.",
        );
    for spec in COMMANDS {
        let mut keys = String::from("Keys (default):\n");
        for k in (spec.keys)() {
            let default = if k.default.is_empty() { "unset" } else { k.default };
            keys.push_str(&format!("  --{:<20} {} ({default})\n", k.name, k.help));
        }
        keys.push_str("  --config               key = value or JSON file\n");
        let mut sub = Command::new(spec.name).about(spec.about).after_help(keys).arg(
            Arg::new("args")
                .num_args(0..)
                .trailing_var_arg(true)
                .allow_hyphen_values(true)
                .action(ArgAction::Append)
                .value_name("ARGS"),
        );
        if let Some(p) = spec.positional {
            sub = sub.override_usage(format!("sqt {} [{}] [--key value]...", spec.name, p.to_uppercase()));
        } else {
            sub = sub.override_usage(format!("sqt {} [--key value]...", spec.name));
        }
        app = app.subcommand(sub);
    }
    app
}

fn main() {
    let matches = cli().get_matches();
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let args: Vec<String> = sub.get_many::<String>("args").map(|v| v.cloned().collect()).unwrap_or_default();
    let env_seed = std::env::var("SQT_SEED").ok();
    std::process::exit(sqt::run_cli(name, &args, env_seed));
}
