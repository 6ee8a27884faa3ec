use mimalloc::MiMalloc;

#[global_allocator]
static GLOBAL: MiMalloc = MiMalloc;

fn main() {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("FLARE_LOG", "warn")).init();
    std::process::exit(flare_cli::main_with_args(std::env::args_os()));
}
