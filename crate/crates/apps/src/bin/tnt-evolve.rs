//! Real-time evolution: `tnt-evolve -d DIR --system boson --length L -t STEPS --dt DT ...`

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(tnt_apps::main_with(tnt_apps::Mode::Evolve, &argv));
}
