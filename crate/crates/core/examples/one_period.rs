//! One-period problem on the S-shaped example: constants, the a priori
//! bounds on optimal positions and the maximizer of the closure.

use robust_maxmin::one_period::{Objective, OnePeriodProblem, SearchOptions, N0_CAP};
use robust_maxmin::{Market, Utility, ValueFunction, XReal};

const MARKET: &str = include_str!("../data/s_shape/market.json");
const UTILITY: &str = include_str!("../data/s_shape/utility.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let market = Market::from_json_str(MARKET)?;
    let utility = Utility::from_json_str(UTILITY, &market)?;
    let root = market.tree.root();
    let children = &market.tree.node(root).children;
    let v: Vec<&dyn ValueFunction> = children.iter().map(|&c| utility.at(c) as &dyn ValueFunction).collect();
    let vertices = market.priors.vertices(root).to_vec();
    let problem = OnePeriodProblem::new(
        market.tree.increments(root),
        vertices.clone(),
        vertices[0].clone(),
        v,
        vec![XReal::ZERO; children.len()],
        utility.cert.gamma_lo,
        utility.cert.gamma_hi,
        utility.cert.eta,
    )?;
    let consts = problem.constants(None, N0_CAP)?;
    println!(
        "alpha* {}  c* {}  l* {}  n0* {:?}",
        consts.alpha_star, consts.c_star, consts.l_star, consts.n0_star
    );
    for x in [0.0, 0.5, 2.0] {
        let k = problem.k_bounds(&consts, x)?;
        let m = problem.maximize(&consts, x, Objective::ClPsi, &SearchOptions::default())?;
        println!(
            "x {x:>4}: K0 {:.3} K1 {}  h^ {:?}  value {}  bound active {}",
            k.k0, k.k1, m.h_hat, m.value, m.bound_active
        );
    }
    Ok(())
}
