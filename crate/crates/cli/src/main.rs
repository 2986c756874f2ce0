fn main() {
    std::process::exit(muon_vr_cli::cli_main(std::env::args_os()));
}
