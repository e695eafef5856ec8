fn main() {
    let code = mscnn_spu::cli::run(std::env::args_os(), &mut std::io::stdout().lock());
    std::process::exit(code);
}
