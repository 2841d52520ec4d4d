//! Ground-state search: `tnt-gs -d DIR --system boson --length L ...`

fn main() {
    let argv: Vec<String> = std::env::args().collect();
    std::process::exit(tnt_apps::main_with(tnt_apps::Mode::GroundState, &argv));
}
