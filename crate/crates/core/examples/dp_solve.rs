//! Two-period dynamic programming: value functions at the root, the chain
//! of inequalities and a synthesized strategy with its value bracket.
//!
//! cargo run --release --example dp_solve -- [x0]

use robust_maxmin::dp::{gap_bound, lower_value, DpOptions, Engine};
use robust_maxmin::{Market, Utility};

const MARKET: &str = include_str!("../data/s_shape_t2/market.json");
const UTILITY: &str = include_str!("../data/s_shape_t2/utility.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let x0: f64 = std::env::args().nth(1).map_or(Ok(0.5), |s| s.parse())?;
    let market = Market::from_json_str(MARKET)?;
    let utility = Utility::from_json_str(UTILITY, &market)?;
    let engine = Engine::new(&market, &utility, None, DpOptions::default())?;
    let root = market.tree.root();

    let robust = engine.robust_value(root, x0)?;
    let kernel = engine.kernel_value(root, x0)?;
    println!("U_0({x0}) = {}   U_0^P({x0}) = {}", robust.value, kernel.value);

    let chain = engine.chain(root, x0, 1e-9)?;
    println!("chain u {} <= cl u {} <= u_cl {}: {}", chain.u, chain.cl_u, chain.u_cl, chain.holds);

    let policy = engine.synthesize_strategy(x0)?;
    for s in &policy.steps {
        println!("  {:>6} wealth {:>9.5} h {:?}", s.node, s.wealth, s.h);
    }
    let strategy = policy.strategy();
    let lower = lower_value(&market, &utility, &strategy, x0);
    let gap = gap_bound(&market, &utility, &strategy, x0);
    println!("value of strategy {lower}, gap bound {}", gap.bound);
    Ok(())
}
