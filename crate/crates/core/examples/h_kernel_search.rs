//! Look for a kernel whose conditional supports keep 0 in their relative
//! interior, then report alpha per node. The second market has an
//! arbitrage at the root.

use robust_maxmin::structure::{alpha_qna, check_h_membership, find_h_kernel};
use robust_maxmin::Market;

const GOOD: &str = include_str!("../data/s_shape_t2/market.json");
const ARBITRAGE: &str = include_str!("../data/arbitrage/market.json");

fn report(name: &str, market: &Market) {
    println!("== {name}");
    let search = find_h_kernel(market);
    for (node, choice) in &search.choices {
        println!("  {node}: {choice:?}");
    }
    let Some(kernel) = search.kernel else {
        println!("  H-kernel not found, failing nodes {:?}", search.failing_nodes);
        return;
    };
    let membership = check_h_membership(market, &kernel);
    println!("  membership: {}", membership.pass);
    for node in market.tree.non_terminal() {
        match alpha_qna(market, node, &kernel) {
            Ok(a) => println!("  alpha({}) = {} via {:?}", market.tree.node(node).key(), a.value, a.method),
            Err(e) => println!("  alpha({}): {e}", market.tree.node(node).key()),
        }
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    report("two-period", &Market::from_json_str(GOOD)?);
    report("arbitrage", &Market::from_json_str(ARBITRAGE)?);
    Ok(())
}
