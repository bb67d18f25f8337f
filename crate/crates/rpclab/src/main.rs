fn main() {
    std::process::exit(rpclab::run(std::env::args_os()));
}
