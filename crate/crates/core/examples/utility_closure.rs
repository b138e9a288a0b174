//! A discontinuous utility, its usc closure and its jumps.

use robust_maxmin::utility::{check_ae, Piecewise};
use robust_maxmin::{Market, Utility};

const MARKET: &str = include_str!("../data/ce_no_cl/market.json");
const UTILITY: &str = include_str!("../data/ce_no_cl/utility.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = Market::from_json_str(MARKET)?;
    let utility = Utility::from_json_str(UTILITY, &market)?;
    let f: &Piecewise = utility.at(market.tree.find_key("up").unwrap());

    println!("{:>6} {:>8} {:>8} {:>8}", "x", "U", "Cl U", "U(x-)");
    for x in [-1.0, -1e-9, 0.0, 1e-9, 1.0] {
        println!("{x:>6} {:>8} {:>8} {:>8}", f.eval(x), f.cl_eval(x), f.left(x));
    }
    for (b, j) in f.jumps() {
        println!("jump {j} at {b}");
    }
    println!("usc: {}", utility.is_usc());

    let ae = check_ae(&utility, &market);
    println!("AE certificate: {} ({} sample points)", if ae.pass { "ok" } else { "violated" }, ae.samples);
    Ok(())
}
