fn main() {
    std::process::exit(simcampaign::cli::run(std::env::args_os()));
}
