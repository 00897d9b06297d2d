fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WGF_LOG", "warn")).init();
    let code = wgflow::cli::main_with_args(std::env::args_os(), &mut std::io::stdout());
    std::process::exit(code);
}
