//! The generators produce what they claim.

mod support;

use robust_maxmin::utility::{check_ae_function, AuditGrid, Piecewise};
use robust_maxmin::XReal;
use support::{random_function, rng, Shape};

#[test]
fn plain_evaluation_matches_library() {
    let mut r = rng(11);
    for shape in [Shape::Smooth, Shape::Stepped, Shape::Lipschitz] {
        for _ in 0..50 {
            let f = random_function(&mut r, 0.5, 1.25, shape);
            let p = Piecewise::new(&f.spec).unwrap();
            let mut xs: Vec<f64> = (-40..=40).map(|k| k as f64 / 8.0).collect();
            xs.extend([-1e6, -7.3, 1e-9, -1e-9, 123.4, 1e6]);
            for x in xs {
                assert_eq!(p.eval(x), XReal::new(f.plain.eval(x)), "{x}");
                assert_eq!(p.cl_eval(x), XReal::new(f.plain.right(x)), "{x}");
                assert_eq!(p.left(x), XReal::new(f.plain.left(x)), "{x}");
            }
        }
    }
}

#[test]
fn generated_functions_satisfy_their_certificate() {
    let mut r = rng(12);
    for shape in [Shape::Smooth, Shape::Stepped] {
        for _ in 0..40 {
            let f = random_function(&mut r, 0.5, 1.25, shape);
            let p = Piecewise::new(&f.spec).unwrap();
            let grid = AuditGrid::for_function(&p);
            let v = check_ae_function(&p, XReal::new(f.c), 0.5, 1.25, "n", &grid);
            assert!(v.is_empty(), "{:?}", &v[..v.len().min(3)]);
        }
    }
}
