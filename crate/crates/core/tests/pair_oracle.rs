mod common;

use common::{identical_oracle, p1_tri, pair_oracle, Tri};
use fracafem::quadrature::pairs::{edge_integral, identical_integral, vertex_integral};
use fracafem::quadrature::TouchingRules;

fn max_rel(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / scale)
        .fold(0.0, f64::max)
}

const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

#[test]
fn identical_pair_matches_subdivision_oracle() {
    let rules = TouchingRules::new(7);
    for s in [0.25, 0.5, 0.75] {
        let oracle = identical_oracle(&p1_tri(REF), s, 2);
        let m = identical_integral(REF, s, &rules);
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        let err = max_rel(&flat, &oracle);
        println!(
            "s={s}: entry00 {} oracle {} rel {err:.2e}",
            m[0][0], oracle[0]
        );
        assert!(err < 1e-3, "s={s}: relative deviation {err}");
    }
}

#[test]
fn shared_edge_pair_matches_subdivision_oracle() {
    let rules = TouchingRules::new(7);
    let q = [[0.0, 0.0], [1.0, 0.2], [0.3, 0.9], [0.6, -0.7]];
    // hats of q0..q3 restricted to each triangle
    let a = Tri {
        p: [q[0], q[1], q[2]],
        vals: vec![[1., 0., 0.], [0., 1., 0.], [0., 0., 1.], [0., 0., 0.]],
    };
    let b = Tri {
        p: [q[0], q[1], q[3]],
        vals: vec![[1., 0., 0.], [0., 1., 0.], [0., 0., 0.], [0., 0., 1.]],
    };
    for s in [0.25, 0.5, 0.75] {
        let oracle = pair_oracle(&a, &b, s, 2);
        let m = edge_integral(q, s, &rules);
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        let err = max_rel(&flat, &oracle);
        println!("s={s}: rel {err:.2e}");
        assert!(err < 1e-3, "s={s}: relative deviation {err}");
    }
}

#[test]
fn shared_vertex_pair_matches_subdivision_oracle() {
    let rules = TouchingRules::new(7);
    let q = [
        [0.0, 0.0],
        [1.0, 0.1],
        [0.4, 0.8],
        [-0.9, 0.3],
        [-0.2, -1.0],
    ];
    let z = [0.0; 3];
    let a = Tri {
        p: [q[0], q[1], q[2]],
        vals: vec![[1., 0., 0.], [0., 1., 0.], [0., 0., 1.], z, z],
    };
    let b = Tri {
        p: [q[0], q[3], q[4]],
        vals: vec![[1., 0., 0.], z, z, [0., 1., 0.], [0., 0., 1.]],
    };
    for s in [0.25, 0.5, 0.75] {
        let oracle = pair_oracle(&a, &b, s, 2);
        let m = vertex_integral(q, s, &rules);
        let flat: Vec<f64> = m.iter().flatten().copied().collect();
        let err = max_rel(&flat, &oracle);
        println!("s={s}: rel {err:.2e}");
        assert!(err < 1e-3, "s={s}: relative deviation {err}");
    }
}
