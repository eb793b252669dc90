fn main() {
    eprintln!("hhlab: cli not wired yet");
    std::process::exit(2);
}
