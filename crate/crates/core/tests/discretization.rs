use dbar_core::dbar::DbarComplex;
use dbar_core::diagnostics::refinement_ratio;
use dbar_core::form::{weighted_inner, weighted_norm, FormField, WeightedMeasure};
use dbar_core::grid::GridSpec;
use dbar_core::operator::{discrete_adjoint, symmetrize, CsrMatrix, WeightedOperator};
use dbar_core::weight::{WeightSpec, WeightTerm};
use dbar_core::C64;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn flat(n: usize) -> WeightSpec {
    WeightSpec::new(n, vec![WeightTerm::radial(0.0, 1)]).unwrap()
}

fn gauss(n: usize) -> WeightSpec {
    WeightSpec::new(n, vec![WeightTerm::radial(1.0, 1)]).unwrap()
}

fn quartic(n: usize) -> WeightSpec {
    WeightSpec::new(n, vec![WeightTerm::radial(1.0, 2)]).unwrap()
}

fn random_form(grid: &GridSpec, degree: usize, rng: &mut ChaCha8Rng) -> FormField {
    let space = grid.space(degree);
    let v: Vec<C64> = (0..space.dim())
        .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    FormField::from_stacked(grid, &space, &v)
}

#[test]
fn grid_examples() {
    let g = GridSpec::new(1, 4.0, 9).unwrap();
    assert_eq!(g.spacing(), 1.0);
    assert_eq!(g.num_points(), 81);
    let g = GridSpec::new(2, 3.0, 13).unwrap();
    assert_eq!(g.spacing(), 0.5);
    assert_eq!(g.num_points(), 28561);
    assert!(GridSpec::new(1, 4.0, 8).is_err());
    assert!(GridSpec::new(1, 4.0, 7).is_err());
    assert!(GridSpec::new(3, 4.0, 9).is_err());
    assert!(GridSpec::new(1, 0.0, 9).is_err());
    assert!(serde_json::from_str::<GridSpec>(r#"{"n":1,"half_width":4.0,"points_per_axis":8}"#).is_err());
}

#[test]
fn grid_is_centred() {
    let g = GridSpec::new(2, 3.0, 13).unwrap();
    let centre = g.flat_index(&[6, 6, 6, 6]);
    assert_eq!(g.modulus(centre), 0.0);
    assert_eq!(g.z(g.flat_index(&[12, 6, 6, 0])), vec![c(3.0, 0.0), c(0.0, -3.0)]);
}

#[test]
fn layers_partition_grid() {
    let g = GridSpec::new(2, 2.0, 9).unwrap();
    for degree in 0..3 {
        let active = g.active_points(degree).len();
        let inside = g.points_per_axis() - 2 * g.layer(degree);
        assert_eq!(active, inside.pow(4));
        let layer = (0..g.num_points()).filter(|&p| g.in_layer(p, degree)).count();
        assert_eq!(active + layer, g.num_points());
    }
    assert_eq!(g.space(2).components, 1);
    assert_eq!(GridSpec::new(1, 2.0, 9).unwrap().space(2).dim(), 0);
}

#[test]
fn dbar0_linear_examples() {
    let g = GridSpec::new(1, 2.0, 17).unwrap();
    let cx = DbarComplex::new(&flat(1), &g).unwrap();
    let zbar = FormField::from_fn(&g, 0, |z| vec![z[0].conj()]);
    let zf = FormField::from_fn(&g, 0, |z| vec![z[0]]);
    let a = cx.dbar_0(&zbar).unwrap();
    let b = cx.dbar_0(&zf).unwrap();
    for &p in &cx.space(1).points {
        assert!((a.component(0)[p] - c(1.0, 0.0)).norm() < 1e-13);
        assert!(b.component(0)[p].norm() < 1e-13);
    }
    assert!(a.is_dirichlet_compatible(&g));
}

#[test]
fn dbar0_gaussian_second_order() {
    let mut errs = Vec::new();
    for np in [41, 81, 161] {
        let g = GridSpec::new(1, 6.0, np).unwrap();
        let cx = DbarComplex::new(&gauss(1), &g).unwrap();
        let f = FormField::from_fn(&g, 0, |z| vec![c((-z[0].norm_sqr()).exp(), 0.0)]);
        let exact = FormField::from_fn(&g, 1, |z| vec![-z[0] * (-z[0].norm_sqr()).exp()]);
        let d = cx.dbar_0(&f).unwrap().axpy(c(-1.0, 0.0), &exact).unwrap();
        errs.push((g.spacing(), cx.norm_sqr(&d).sqrt()));
    }
    for w in errs.windows(2) {
        let r = refinement_ratio(w[0].1, w[1].1, w[0].0, w[1].0);
        assert!((3.0..=5.0).contains(&r), "{r}");
    }
}

#[test]
fn dbar1_examples() {
    let g = GridSpec::new(2, 2.0, 9).unwrap();
    let cx = DbarComplex::new(&flat(2), &g).unwrap();
    let u = FormField::from_fn(&g, 1, |z| vec![z[1].conj(), c(0.0, 0.0)]);
    let v = cx.dbar_1(&u).unwrap();
    let mut checked = 0;
    for &p in &cx.space(2).points {
        let idx = g.multi_index(p);
        if idx.iter().all(|&i| i >= 3 && i <= 5) {
            assert!((v.component(0)[p] - c(-1.0, 0.0)).norm() < 1e-13);
            checked += 1;
        }
    }
    assert_eq!(checked, 81);

    let g1 = GridSpec::new(1, 2.0, 9).unwrap();
    let cx1 = DbarComplex::new(&flat(1), &g1).unwrap();
    let u = FormField::from_fn(&g1, 1, |z| vec![z[0]]);
    assert_eq!(cx1.dbar_1(&u).unwrap().components(), 0);
}

#[test]
fn complex_property() {
    let g = GridSpec::new(2, 3.0, 13).unwrap();
    let cx = DbarComplex::new(&gauss(2), &g).unwrap();
    let f = FormField::from_fn(&g, 0, |z| {
        let r2: f64 = z.iter().map(|v| v.norm_sqr()).sum();
        let b = if r2 < 2.25 { (1.0 - r2 / 2.25).powi(4) } else { 0.0 };
        vec![c(b, 0.3 * b) * (z[0] + z[1].conj())]
    });
    let ddf = cx.dbar_1(&cx.dbar_0(&f).unwrap()).unwrap();
    assert!(cx.norm_sqr(&ddf).sqrt() <= 1e-12 * cx.norm_sqr(&f).sqrt());
}

#[test]
fn weighted_inner_examples() {
    let g = GridSpec::new(2, 2.0, 9).unwrap();
    let m = WeightedMeasure::new(&gauss(2), &g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let zero = FormField::zeros(&g, 1);
    let f = random_form(&g, 1, &mut rng);
    let h = random_form(&g, 1, &mut rng);
    assert_eq!(weighted_inner(&zero, &zero, &m).unwrap(), c(0.0, 0.0));
    let a = weighted_inner(&f, &h, &m).unwrap();
    let b = weighted_inner(&h, &f, &m).unwrap();
    assert!((a - b.conj()).norm() <= 1e-15 * a.norm());
    assert!(weighted_inner(&f, &f, &m).unwrap().re > 0.0);
    assert!(weighted_inner(&f, &FormField::zeros(&g, 0), &m).is_err());

    // phi = 0 and a single-cell bump: h^{2n} |a|^2.
    let g1 = GridSpec::new(1, 2.0, 17).unwrap();
    let m1 = WeightedMeasure::new(&flat(1), &g1).unwrap();
    let mut e = FormField::zeros(&g1, 0);
    e.component_mut(0)[g1.flat_index(&[8, 8])] = c(3.0, 4.0);
    let want = g1.spacing().powi(2) * 25.0;
    assert!((weighted_norm(&e, &m1).powi(2) - want).abs() < 1e-14);
}

#[test]
fn measure_dimension_mismatch() {
    let g = GridSpec::new(2, 2.0, 9).unwrap();
    assert!(WeightedMeasure::new(&gauss(1), &g).is_err());
    assert!(DbarComplex::new(&gauss(1), &g).is_err());
}

#[test]
fn formula_examples() {
    let g = GridSpec::new(1, 2.0, 17).unwrap();
    let cx = DbarComplex::new(&flat(1), &g).unwrap();
    let zero = FormField::zeros(&g, 1);
    assert_eq!(cx.dbar_star_formula(&zero).unwrap().max_abs(), 0.0);
    let u = FormField::from_fn(&g, 1, |z| vec![z[0]]);
    let s = cx.dbar_star_formula(&u).unwrap();
    for &p in &cx.space(0).points {
        let idx = g.multi_index(p);
        let inner = (0..2).all(|a| (3..=13).contains(&idx[a]));
        if inner {
            assert!((s.component(0)[p] - c(-1.0, 0.0)).norm() < 1e-13);
        }
    }
}

#[test]
fn formula_matches_exact_adjoint_to_second_order() {
    let mut errs = Vec::new();
    for np in [41, 81, 161] {
        let g = GridSpec::new(1, 6.0, np).unwrap();
        let cx = DbarComplex::new(&gauss(1), &g).unwrap();
        let u = FormField::from_fn(&g, 1, |z| vec![c(1.0, 0.5) * (-(z[0] - c(0.5, 0.0)).norm_sqr()).exp()]);
        let d = cx.dbar_star_formula(&u).unwrap().axpy(c(-1.0, 0.0), &cx.dbar_star(&u).unwrap()).unwrap();
        errs.push((g.spacing(), cx.norm_sqr(&d).sqrt()));
    }
    for w in errs.windows(2) {
        let r = refinement_ratio(w[0].1, w[1].1, w[0].0, w[1].0);
        assert!((3.0..=5.0).contains(&r), "{r}");
    }
}

fn adjoint_defect(cx: &DbarComplex, op: &WeightedOperator, adj: &WeightedOperator, rng: &mut ChaCha8Rng) -> f64 {
    let g = &cx.grid;
    let f = random_form(g, op.source_degree, rng);
    let h = random_form(g, op.target_degree, rng);
    let (sf, th) = (cx.space(op.source_degree), cx.space(op.target_degree));
    let fx = f.to_stacked(sf);
    let hx = h.to_stacked(th);
    let lhs = WeightedOperator::inner(&op.target_log_weights, &op.apply(&fx), &hx);
    let rhs = WeightedOperator::inner(&op.source_log_weights, &fx, &adj.apply(&hx));
    let nf = WeightedOperator::inner(&op.source_log_weights, &fx, &fx).re.sqrt();
    let nh = WeightedOperator::inner(&op.target_log_weights, &hx, &hx).re.sqrt();
    (lhs - rhs).norm() / (nf * nh)
}

#[test]
fn exact_adjointness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let cases = [(gauss(1), GridSpec::new(1, 3.0, 21).unwrap()), (quartic(2), GridSpec::new(2, 1.5, 9).unwrap())];
    for (spec, g) in cases {
        let cx = DbarComplex::new(&spec, &g).unwrap();
        for _ in 0..10 {
            assert!(adjoint_defect(&cx, &cx.d0, &cx.d0_adj, &mut rng) <= 1e-12);
            if g.n() == 2 {
                assert!(adjoint_defect(&cx, &cx.d1, &cx.d1_adj, &mut rng) <= 1e-12);
            }
        }
    }
}

#[test]
fn adjoint_involution_and_zero() {
    let g = GridSpec::new(1, 2.0, 13).unwrap();
    let cx = DbarComplex::new(&gauss(1), &g).unwrap();
    let back = discrete_adjoint(&cx.d0_adj);
    for (r, col, v) in cx.d0.matrix.triplets() {
        assert!((back.matrix.get(r, col) - v).norm() <= 1e-14 * v.norm());
    }
    assert_eq!(back.matrix.nnz(), cx.d0.matrix.nnz());
    let z = WeightedOperator::new(CsrMatrix::zeros(3, 2), 0, 1, vec![0.0; 2], vec![-1.0; 3]);
    let za = discrete_adjoint(&z);
    assert_eq!(za.matrix.nnz(), 0);
    assert_eq!((za.matrix.nrows(), za.matrix.ncols()), (2, 3));
}

#[test]
fn box_laplacian_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for (spec, g) in [(quartic(1), GridSpec::new(1, 2.0, 17).unwrap()), (quartic(2), GridSpec::new(2, 1.5, 9).unwrap())] {
        let cx = DbarComplex::new(&spec, &g).unwrap();
        let op = cx.box_laplacian();
        let s = symmetrize(&op).unwrap();
        assert!(s.hermiticity_defect() <= 1e-12 * s.max_abs());
        for _ in 0..10 {
            let u = random_form(&g, 1, &mut rng);
            let x = u.to_stacked(cx.space(1));
            let bx = op.apply(&x);
            let lhs = WeightedOperator::inner(&op.source_log_weights, &bx, &x);
            let q = cx.q_form(&u, &u).unwrap();
            let star = cx.dbar_star(&u).unwrap();
            let top = cx.dbar_1(&u).unwrap();
            let direct = cx.norm_sqr(&star) + cx.norm_sqr(&top);
            assert!(lhs.re >= 0.0 && q.re >= 0.0);
            assert!((lhs - q).norm() <= 1e-10 * q.norm());
            assert!((direct - q.re).abs() <= 1e-10 * q.re);
            assert!(q.im.abs() <= 1e-12 * q.re);
        }
        assert_eq!(cx.q_form(&FormField::zeros(&g, 1), &FormField::zeros(&g, 1)).unwrap(), c(0.0, 0.0));
    }
}

#[test]
fn box_in_one_dimension_is_d0_d0star() {
    let g = GridSpec::new(1, 2.0, 13).unwrap();
    let cx = DbarComplex::new(&gauss(1), &g).unwrap();
    assert_eq!(cx.d1.matrix.nnz(), 0);
    let direct = cx.d0.matrix.matmul(&cx.d0_adj.matrix);
    let op = cx.box_laplacian();
    for (r, col, v) in direct.triplets() {
        assert!((op.matrix.get(r, col) - v).norm() <= 1e-12 * (1.0 + v.norm()));
    }
}

#[test]
fn symmetrize_uniform_measure_is_identity_map() {
    let m = CsrMatrix::from_triplets(2, 2, vec![(0, 0, c(2.0, 0.0)), (0, 1, c(0.0, 1.0)), (1, 0, c(0.0, -1.0))]);
    let op = WeightedOperator::new(m.clone(), 1, 1, vec![0.7; 2], vec![0.7; 2]);
    assert_eq!(symmetrize(&op).unwrap(), m);
}

#[test]
fn csr_operations() {
    let a = CsrMatrix::from_triplets(
        2,
        3,
        vec![(0, 0, c(1.0, 0.0)), (1, 2, c(0.0, 2.0)), (0, 0, c(1.0, 1.0)), (1, 1, c(3.0, 0.0))],
    );
    assert_eq!(a.nnz(), 3);
    assert_eq!(a.get(0, 0), c(2.0, 1.0));
    assert_eq!(a.matvec(&[c(1.0, 0.0), c(1.0, 0.0), c(1.0, 0.0)]), vec![c(2.0, 1.0), c(3.0, 2.0)]);
    let ah = a.conj_transpose();
    assert_eq!(ah.get(2, 1), c(0.0, -2.0));
    let p = a.matmul(&ah);
    let da = a.to_dense();
    for i in 0..2 {
        for j in 0..2 {
            let want: C64 = (0..3).map(|k| da[i][k] * da[j][k].conj()).sum();
            assert_eq!(p.get(i, j), want);
        }
    }
    assert_eq!(p.hermiticity_defect(), 0.0);
    let mut buf = Vec::new();
    a.write_matrix_market(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("%%MatrixMarket matrix coordinate complex general\n2 3 3\n1 1 "));
    assert_eq!(CsrMatrix::read_matrix_market(&text).unwrap(), a);
}

#[test]
fn exported_box_round_trips() {
    let g = GridSpec::new(1, 2.0, 11).unwrap();
    let op = DbarComplex::new(&gauss(1), &g).unwrap().box_laplacian();
    let mut buf = Vec::new();
    op.matrix.write_matrix_market(&mut buf).unwrap();
    let back = CsrMatrix::read_matrix_market(std::str::from_utf8(&buf).unwrap()).unwrap();
    assert_eq!(back, op.matrix);
}

#[test]
fn field_csv_layout() {
    let g = GridSpec::new(1, 2.0, 9).unwrap();
    let mut f = FormField::zeros(&g, 1);
    f.component_mut(0)[40] = c(1.5, -2.0);
    let csv = f.to_csv();
    assert!(csv.starts_with("index,re,im\n"));
    assert!(csv.contains("\n40,1.5,-2\n"));
}

proptest! {
    #[test]
    fn flat_index_round_trip(n in 1usize..=2, k in 0usize..3, seed in any::<u64>()) {
        let g = GridSpec::new(n, 1.0, 9 + 2 * k).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rng.random_range(0..g.num_points());
        prop_assert_eq!(g.flat_index(&g.multi_index(p)[..g.real_dims()]), p);
    }

    #[test]
    fn stacked_and_symmetrized_round_trip(n in 1usize..=2, degree in 0usize..3, seed in any::<u64>()) {
        let g = GridSpec::new(n, 1.5, 9).unwrap();
        let m = WeightedMeasure::new(&quartic(n), &g).unwrap();
        let space = g.space(degree);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_form(&g, degree, &mut rng);
        prop_assert_eq!(&FormField::from_stacked(&g, &space, &f.to_stacked(&space)), &f);
        let back = FormField::from_symmetrized(&g, &space, &m, &f.to_symmetrized(&space, &m)).unwrap();
        prop_assert!(back.axpy(c(-1.0, 0.0), &f).unwrap().max_abs() <= 1e-12 * f.max_abs().max(1e-300));
        for i in 0..space.dim() {
            let (comp, p) = space.locate(i);
            prop_assert_eq!(space.dof(comp, p), Some(i));
        }
    }

    #[test]
    fn adjointness_random_pairs(seed in any::<u64>()) {
        let g = GridSpec::new(1, 3.0, 15).unwrap();
        let cx = DbarComplex::new(&WeightSpec::new(1, vec![WeightTerm::coordinate(1.0, 1, 2)]).unwrap(), &g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        prop_assert!(adjoint_defect(&cx, &cx.d0, &cx.d0_adj, &mut rng) <= 1e-12);
    }
}
