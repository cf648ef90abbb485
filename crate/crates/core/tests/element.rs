use mgcurl::element::{local_curlcurl_matrix, local_mass_matrix, ReferenceBrick};
use nalgebra::DMatrix;
use proptest::prelude::*;

fn extents() -> impl Strategy<Value = [f64; 3]> {
    [0.01f64..4.0, 0.01f64..4.0, 0.01f64..4.0]
}

fn dmatrix(m: &[[f64; 12]; 12]) -> DMatrix<f64> {
    DMatrix::from_fn(12, 12, |i, j| m[i][j])
}

/// Tangential dofs of the gradient of the trilinear hat at corner `v`.
fn gradient_dofs(brick: &ReferenceBrick, v: usize) -> Vec<f64> {
    (0..12)
        .map(|e| {
            let g = brick.edge_geometry(e);
            let corner = |p: [f64; 3]| (0..3).fold(0, |acc, a| acc | (usize::from(p[a] > 0.0) << a));
            let mut end = g.start;
            end[g.dir] += g.length;
            (f64::from(u8::from(corner(end) == v)) - f64::from(u8::from(corner(g.start) == v))) / g.length
        })
        .collect()
}

proptest! {
    #[test]
    fn mass_is_symmetric_positive_definite(h in extents()) {
        let m = dmatrix(&local_mass_matrix(h).unwrap());
        prop_assert!((&m - m.transpose()).amax() <= 1e-14 * m.amax());
        let eig = m.symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() > 0.0);
    }

    #[test]
    fn mass_row_sums_scale_with_volume(h in extents()) {
        // Σ_ij M_ij = ∫ |Σ_e φ_e|² and Σ_e φ_e = (1, 1, 1) on the brick
        let m = local_mass_matrix(h).unwrap();
        let total: f64 = m.iter().flatten().sum();
        let volume = h[0] * h[1] * h[2];
        prop_assert!((total - 3.0 * volume).abs() <= 1e-12 * volume);
    }

    #[test]
    fn curlcurl_kills_gradients(h in extents()) {
        let k = local_curlcurl_matrix(h).unwrap();
        let brick = ReferenceBrick::new(h).unwrap();
        let scale = k.iter().flatten().fold(0.0f64, |a, x| a.max(x.abs()));
        for v in 0..8 {
            let g = gradient_dofs(&brick, v);
            let gscale = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
            for row in &k {
                let r: f64 = row.iter().zip(&g).map(|(a, b)| a * b).sum();
                prop_assert!(r.abs() <= 1e-12 * scale * gscale);
            }
        }
    }

    #[test]
    fn curlcurl_is_positive_semidefinite(h in extents()) {
        let k = dmatrix(&local_curlcurl_matrix(h).unwrap());
        let eig = k.clone().symmetric_eigen().eigenvalues;
        prop_assert!(eig.min() >= -1e-12 * k.amax());
        prop_assert_eq!(k.rank(1e-10 * k.amax()), 5);
    }

    #[test]
    fn basis_is_dual_to_edge_averages(h in extents(), t in 0.0f64..1.0) {
        let brick = ReferenceBrick::new(h).unwrap();
        for e in 0..12 {
            for f in 0..12 {
                let g = brick.edge_geometry(f);
                let mut p = g.start;
                p[g.dir] += t * g.length;
                let value = brick.shape_eval(e, p).unwrap()[g.dir];
                let expected = if e == f { 1.0 } else { 0.0 };
                prop_assert!((value - expected).abs() <= 1e-13);
            }
        }
    }

    #[test]
    fn field_eval_is_linear(
        h in extents(),
        a in prop::array::uniform12(-1.0f64..1.0),
        b in prop::array::uniform12(-1.0f64..1.0),
        s in [0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0],
    ) {
        let brick = ReferenceBrick::new(h).unwrap();
        let p = [s[0] * h[0], s[1] * h[1], s[2] * h[2]];
        let sum: [f64; 12] = std::array::from_fn(|i| a[i] + 2.0 * b[i]);
        let fa = brick.field_eval(&a, p).unwrap();
        let fb = brick.field_eval(&b, p).unwrap();
        let fs = brick.field_eval(&sum, p).unwrap();
        for d in 0..3 {
            prop_assert!((fs[d] - fa[d] - 2.0 * fb[d]).abs() <= 1e-12);
        }
    }
}

#[test]
fn points_outside_the_brick_are_rejected() {
    let brick = ReferenceBrick::new([1.0, 2.0, 0.5]).unwrap();
    assert!(brick.shape_eval(0, [0.5, 2.5, 0.1]).is_err());
    assert!(brick.shape_eval(0, [-0.1, 1.0, 0.1]).is_err());
    assert!(ReferenceBrick::new([1.0, 0.0, 1.0]).is_err());
}
