fn main() {
    std::process::exit(kg2ft_cli::run(std::env::args_os()));
}
