//! Parse a market, walk the tree and print the increments and priors.
//!
//! cargo run --example load_market -- [market.json]

use robust_maxmin::Market;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/data/s_shape_t2/market.json").into());
    let market = Market::load(&path)?;
    let tree = &market.tree;
    println!("horizon {} assets {} nodes {}", tree.horizon(), tree.assets(), tree.len());
    for id in tree.non_terminal() {
        let node = tree.node(id);
        println!("{:>8}  dS {:?}", node.key(), tree.increments(id));
        for v in market.priors.vertices(id) {
            println!("          vertex {v:?}");
        }
    }
    let reach = market.reachable_nodes();
    let dead = tree.nodes().filter(|(id, _)| !reach[*id]).count();
    println!("unreachable nodes: {dead}");
    println!("{}", market.to_canonical_json());
    Ok(())
}
