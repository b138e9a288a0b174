//! A one-period market where the supremum is not attained: every claim
//! about the example is recomputed for a few up-probabilities.

use robust_maxmin::cli::ce_claims;

fn main() {
    for q in [0.6, 0.5, 0.25] {
        println!("q = {q}");
        match ce_claims(q) {
            Ok(claims) => {
                for c in claims {
                    println!("  {} {:<18} {}", if c.pass { "ok  " } else { "FAIL" }, c.claim, c.observed);
                }
            }
            Err(e) => println!("  error: {e}"),
        }
    }
}
