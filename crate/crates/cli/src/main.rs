use clap::{Parser, Subcommand};
use invnmt_cli::{attack_cmd, report_cmd, train_cmd, translate_cmd};

/// Train toy translation models, attack them with invariance-seeking word
/// replacements, and score the attacks.
#[derive(Parser)]
#[command(name = "invnmt", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model (and learn the shared BPE vocabulary)
    Train(train_cmd::TrainArgs),
    /// Translate a sentence file with a trained checkpoint
    Translate(translate_cmd::TranslateArgs),
    /// Attack sentences and emit JSONL results
    Attack(attack_cmd::AttackArgs),
    /// Render evaluation tables from attack results or a fixture file
    Report(report_cmd::ReportArgs),
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(args) => train_cmd::run(args),
        Command::Translate(args) => translate_cmd::run(args),
        Command::Attack(args) => attack_cmd::run(args),
        Command::Report(args) => report_cmd::run(args),
    };
    if let Err(e) = result {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
