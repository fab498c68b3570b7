use clap::Parser;

fn main() {
    let cli = cvxfn::cli::Cli::parse();
    std::process::exit(cvxfn::cli::run(cli));
}
