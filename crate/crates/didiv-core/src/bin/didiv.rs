fn main() { std::process::exit(didiv_core::cli::run_from_env()); }
