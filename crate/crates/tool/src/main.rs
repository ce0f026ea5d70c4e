fn main() {
    std::process::exit(lcmis_tool::run(std::env::args_os()));
}
