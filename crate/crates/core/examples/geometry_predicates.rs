//! Exact geometry on small point sets: relative interiors, affine hulls
//! and feasible sign patterns of a hyperplane arrangement.

use robust_maxmin::geometry::{affine_hull, feasible_sign_patterns, q_vec, ri_margin, zero_in_rel_interior};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let tri: Vec<_> = [[1.0, 0.0], [-1.0, 1.0], [-1.0, -1.0]]
        .iter()
        .map(|p| q_vec(p))
        .collect::<Result<_, _>>()?;
    println!("0 in ri(triangle): {}", zero_in_rel_interior(&tri)?);
    println!("margin: {:?}", ri_margin(&tri)?);

    let segment = vec![q_vec(&[1.0, 1.0])?, q_vec(&[-2.0, -2.0])?];
    let hull = affine_hull(&segment)?;
    println!("segment hull dim {} linear {}", hull.dim(), hull.is_linear());
    println!("contains (3, 3): {}", hull.contains(&q_vec(&[3.0, 3.0])?));
    println!("contains (1, 0): {}", hull.contains(&q_vec(&[1.0, 0.0])?));

    let one_sided = vec![q_vec(&[1.0, 0.0])?, q_vec(&[2.0, 1.0])?];
    println!("0 in ri(one-sided): {}", zero_in_rel_interior(&one_sided)?);

    let normals = vec![q_vec(&[1.0, 0.0])?, q_vec(&[0.0, 1.0])?, q_vec(&[1.0, 1.0])?];
    let patterns = feasible_sign_patterns(&normals)?;
    println!("{} sign patterns of 3 lines through 0:", patterns.len());
    for p in patterns {
        println!("  {p:?}");
    }
    Ok(())
}
