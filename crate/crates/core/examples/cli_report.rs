//! Drive the command-line front end in-process and print its JSON report.

fn main() {
    let data = concat!(env!("CARGO_MANIFEST_DIR"), "/data/s_shape");
    let market = format!("{data}/market.json");
    let utility = format!("{data}/utility.json");
    let out = robust_maxmin::cli::run([
        "robust-maxmin",
        "solve",
        "--market",
        &market,
        "--utility",
        &utility,
        "--x0",
        "1",
    ]);
    eprint!("{}", out.stderr);
    println!("exit {}", out.code);
    println!("{}", out.stdout);
}
