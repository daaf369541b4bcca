use nalgebra::{Matrix4, Point3, SymmetricEigen, Vector3, Vector4};

use super::*;
use crate::geometry::{shapes, Compartment, Conductivity, Segmentation};
use crate::meshgen::{generate_mesh, OrientationMode, SigmaField};
use crate::sparse::to_dense;

fn single_tet(sigma: SigmaField) -> TetMesh {
    TetMesh::new(
        vec![
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
            Point3::new(0.0, 0.0, 1.0),
        ],
        vec![[0, 1, 2, 3]],
        vec![0],
        sigma,
    )
    .unwrap()
}

fn cube_mesh(h: f64) -> TetMesh {
    let cube = shapes::box_surface("cube", Point3::origin(), Point3::new(1.0, 1.0, 1.0));
    let seg = Segmentation::new(vec![Compartment::new(
        "cube",
        vec![cube],
        Conductivity::Isotropic(0.5),
        0,
        true,
    )
    .unwrap()])
    .unwrap();
    generate_mesh(&seg, h).unwrap()
}

fn cube_electrodes(mesh: &TetMesh) -> ElectrodeSet {
    let centers = [
        Point3::new(0.5, 0.5, 1.0),
        Point3::new(0.5, 0.5, 0.0),
        Point3::new(1.0, 0.5, 0.5),
    ];
    ElectrodeSet::from_centers(mesh, &centers, 0.3, &[2.0, 3.0, 5.0]).unwrap()
}

#[test]
fn electrode_surface_mass_on_single_triangle() {
    let mesh = single_tet(SigmaField::Scalar(vec![0.0]));
    let z = 4.0;
    // face z = 0, outward
    let tri = [0usize, 2, 1];
    let el = ElectrodeSet::from_triangles(&mesh, vec![(vec![tri], z)]).unwrap();
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    assert_eq!(sys.ground, 3);
    let a = to_dense(&sys.a);
    for &i in &tri {
        for &j in &tri {
            let expected = if i == j {
                1.0 / (6.0 * z)
            } else {
                1.0 / (12.0 * z)
            };
            assert!(
                (a[(i, j)] - expected).abs() < 1e-15,
                "({i},{j}) = {}",
                a[(i, j)]
            );
        }
    }
    assert_eq!(a[(3, 3)], 1.0);
    for j in 0..3 {
        assert_eq!(a[(3, j)], 0.0);
        assert_eq!(a[(j, 3)], 0.0);
    }
}

#[test]
fn b_c_for_single_triangle() {
    let mesh = single_tet(SigmaField::Scalar(vec![1.0]));
    let z = 4.0;
    let tri = [0usize, 2, 1];
    let at = 0.5;
    let el = ElectrodeSet::from_triangles(&mesh, vec![(vec![tri], z)]).unwrap();
    assert!((el.get(0).area - at).abs() < 1e-15);
    let (b, c, r) = assemble_b_c_r_with(&mesh, &el, Coupling::Literal).unwrap();
    let b = to_dense(&b);
    for &i in &tri {
        assert!((b[(i, 0)] - at / (3.0 * z)).abs() < 1e-15);
    }
    assert_eq!(b[(3, 0)], 0.0);
    assert!((c[0] - at / z).abs() < 1e-15);
    assert!((b.column(0).sum() - at / z).abs() < 1e-15);
    assert_eq!(r.shape(), (1, 1));

    let (b, c, _) = assemble_b_c_r(&mesh, &el).unwrap();
    let b = to_dense(&b);
    for &i in &tri {
        assert!((b[(i, 0)] - 1.0 / (3.0 * z)).abs() < 1e-15);
    }
    assert!((c[0] - 1.0 / z).abs() < 1e-15);
}

#[test]
fn consistent_coupling_annihilates_constants() {
    let mesh = cube_mesh(0.25);
    let el = cube_electrodes(&mesh);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let raw = assemble_volume_stiffness(&mesh).unwrap();
    let b = to_dense(&sys.b);
    let mut e = to_dense(&raw);
    for electrode in el.electrodes() {
        for t in &electrode.triangles {
            let at = crate::geometry::triangle_area(
                &mesh.nodes()[t[0]],
                &mesh.nodes()[t[1]],
                &mesh.nodes()[t[2]],
            );
            let w = 1.0 / (electrode.impedance * electrode.area);
            for i in 0..3 {
                for j in 0..3 {
                    e[(t[i], t[j])] += w * if i == j { at / 6.0 } else { at / 12.0 };
                }
            }
        }
    }
    let ones_n = DVector::from_element(mesh.node_count(), 1.0);
    let ones_l = DVector::from_element(el.len(), 1.0);
    let top = &e * &ones_n - &b * &ones_l;
    let bottom = -b.transpose() * &ones_n + DVector::from_iterator(el.len(), sys.c.iter().copied());
    assert!(top.amax() < 1e-12 * e.amax());
    assert!(bottom.amax() < 1e-12 * sys.c.amax());
}

#[test]
fn projector_two_electrodes() {
    let r = mean_free_projector(2);
    assert_eq!(r, DMatrix::from_row_slice(2, 2, &[0.5, -0.5, -0.5, 0.5]));
}

#[test]
fn projector_annihilates_constants() {
    for l in 1..40 {
        let r = mean_free_projector(l);
        let ones = DVector::from_element(l, 1.0);
        assert!((&r * ones).amax() < 1e-14);
        assert_eq!(r, r.transpose());
    }
}

#[test]
fn tensor_isotropic_matches_scalar() {
    let mesh = cube_mesh(0.5);
    let s = 0.7;
    let tmesh = mesh
        .with_sigma(SigmaField::Tensor(vec![
            [s, s, s, 0.0, 0.0, 0.0];
            mesh.element_count()
        ]))
        .unwrap();
    let smesh = mesh
        .with_sigma(SigmaField::Scalar(vec![s; mesh.element_count()]))
        .unwrap();
    let el = cube_electrodes(&mesh);
    let g = grounding_node(&mesh, &el).unwrap();
    let a1 = to_dense(&assemble_a(&smesh, &el, g).unwrap());
    let a2 = to_dense(&assemble_a(&tmesh, &el, g).unwrap());
    assert!((a1 - a2).amax() < 1e-15);
}

#[test]
fn non_spd_tensor_rejected() {
    let mesh = single_tet(SigmaField::Scalar(vec![-1.0]));
    assert!(matches!(
        assemble_volume_stiffness(&mesh),
        Err(Error::Assembly(_))
    ));
}

/// P1 functions from an explicit 4×4 solve, integrated with the 4-point
/// Gauss rule on the reference tetrahedron.
#[test]
fn stiffness_matches_quadrature_oracle() {
    let s = 1.0 / (2.0 * 2f64.sqrt());
    let nodes = vec![
        Point3::new(s, s, s),
        Point3::new(s, -s, -s),
        Point3::new(-s, s, -s),
        Point3::new(-s, -s, s),
    ];
    let mut tet = [0usize, 1, 2, 3];
    if crate::meshgen::tet_signed_volume(&nodes[0], &nodes[1], &nodes[2], &nodes[3]) < 0.0 {
        tet.swap(1, 2);
    }
    let mesh = TetMesh::new(
        nodes.clone(),
        vec![tet],
        vec![0],
        SigmaField::Scalar(vec![1.0]),
    )
    .unwrap();
    let k = to_dense(&assemble_volume_stiffness(&mesh).unwrap());

    let vander = Matrix4::from_fn(|i, j| if j == 0 { 1.0 } else { nodes[i][j - 1] });
    let coeffs = vander.try_inverse().unwrap();
    let grad = |i: usize| Vector3::new(coeffs[(1, i)], coeffs[(2, i)], coeffs[(3, i)]);
    let a = 0.585_410_196_624_968_5;
    let b = 0.138_196_601_125_010_5;
    let bary = [[a, b, b, b], [b, a, b, b], [b, b, a, b], [b, b, b, a]];
    let vol = (nodes[1] - nodes[0])
        .dot(&(nodes[2] - nodes[0]).cross(&(nodes[3] - nodes[0])))
        .abs()
        / 6.0;
    for i in 0..4 {
        for j in 0..4 {
            let mut q = 0.0;
            for _point in &bary {
                q += 0.25 * vol * grad(i).dot(&grad(j));
            }
            assert!(
                (k[(i, j)] - q).abs() < 1e-14,
                "({i},{j}): {} vs {q}",
                k[(i, j)]
            );
        }
    }
}

#[test]
fn volume_stiffness_symmetric_with_zero_row_sums() {
    let mesh = cube_mesh(0.25);
    let k = assemble_volume_stiffness(&mesh).unwrap();
    assert!(crate::sparse::is_symmetric(&k, 1e-14));
    let d = to_dense(&k);
    for i in 0..d.nrows() {
        assert!(d.row(i).sum().abs() < 1e-13);
    }
}

#[test]
fn grounded_a_is_positive_definite() {
    let mesh = cube_mesh(0.5);
    let el = cube_electrodes(&mesh);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let a = to_dense(&sys.a);
    assert!((&a - a.transpose()).amax() < 1e-14);
    let eig = SymmetricEigen::new(a);
    assert!(eig.eigenvalues.min() > 0.0);
}

#[test]
fn b_column_sums_equal_c() {
    let mesh = cube_mesh(0.25);
    let el = cube_electrodes(&mesh);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let b = to_dense(&sys.b);
    for l in 0..el.len() {
        assert!((b.column(l).sum() - sys.c[l]).abs() < 1e-14);
    }
}

#[test]
fn zero_area_electrode_rejected() {
    let mesh = single_tet(SigmaField::Scalar(vec![1.0]));
    let err = ElectrodeSet::from_triangles(&mesh, vec![(vec![], 1.0)]).unwrap_err();
    assert!(matches!(err, Error::Electrode(_)));
}

#[test]
fn interior_triangle_is_not_an_electrode() {
    let mesh = cube_mesh(0.5);
    // the Kuhn diagonal face through the cube corner (0,0,0) is interior
    let faces = mesh.face_map();
    let interior = faces.iter().find(|(_, v)| v.len() == 2).unwrap().0;
    let err = ElectrodeSet::from_triangles(&mesh, vec![(vec![*interior], 1.0)]).unwrap_err();
    assert!(matches!(err, Error::Electrode(_)));
}

#[test]
fn single_tet_face_column() {
    let mesh = single_tet(SigmaField::Scalar(vec![1.0]));
    let src = SourceSpace::new(
        vec![mesh.centroid(0)],
        vec![],
        vec![0],
        OrientationMode::Cartesian,
    )
    .unwrap();
    let g = to_dense(&assemble_face_g(&mesh, &src).unwrap());
    assert_eq!(g.shape(), (4, 4));
    for f in 0..4 {
        for n in 0..4 {
            assert_eq!(g[(n, f)], 0.25);
        }
    }
    let x = DVector::zeros(4);
    assert_eq!((&g * x).amax(), 0.0);
}

#[test]
fn interior_face_columns_sum_to_zero() {
    let mesh = cube_mesh(0.5);
    let model = SourceModel::new(&mesh);
    let src = SourceSpace::new(
        (0..mesh.element_count())
            .map(|e| mesh.centroid(e))
            .collect(),
        vec![],
        (0..mesh.element_count()).collect(),
        OrientationMode::Cartesian,
    )
    .unwrap();
    let g = to_dense(&assemble_face_g(&mesh, &src).unwrap());
    let mut interior = 0;
    for e in 0..mesh.element_count() {
        for (f, ff) in model.face_functions(&mesh, e).iter().enumerate() {
            let sum = g.column(4 * e + f).sum();
            if ff.neighbor.is_some() {
                interior += 1;
                assert!(sum.abs() < 1e-14);
            } else {
                assert!((sum - 1.0).abs() < 1e-14);
            }
        }
    }
    assert!(interior > 0);
}

#[test]
fn cartesian_columns_match_unit_moments() {
    let mesh = cube_mesh(0.5);
    let model = SourceModel::new(&mesh);
    for e in [0, 7, 20, 47] {
        let ffs = model.face_functions(&mesh, e);
        for target in [
            Vector3::x(),
            Vector3::y(),
            Vector3::z(),
            Vector3::new(0.3, -0.5, 0.8).normalize(),
        ] {
            let alpha: Vector4<f64> = model.moment_matching(&mesh, e, &target).unwrap();
            let m = (0..4).fold(Vector3::zeros(), |acc, f| {
                acc + model.moment(&mesh, &ffs[f]) * alpha[f]
            });
            assert!((m - target).norm() < 1e-12);
        }
    }
}

/// A face function's moment equals `∫ w dV` computed from the explicit field
/// `±(x − p_opp)/(3V)` with the one-point centroid rule (exact for linear
/// integrands).
#[test]
fn face_moment_matches_field_integral() {
    let mesh = cube_mesh(0.5);
    let model = SourceModel::new(&mesh);
    let field_integral = |e: usize, f: usize, sign: f64| {
        let opp = mesh.nodes()[mesh.tetra()[e][f]];
        sign * (mesh.centroid(e) - opp) / 3.0
    };
    for e in 0..mesh.element_count() {
        for ff in model.face_functions(&mesh, e) {
            let mut m = field_integral(e, ff.local_face, 1.0);
            if let Some((e2, f2)) = ff.neighbor {
                m += field_integral(e2, f2, -1.0);
            }
            assert!((model.moment(&mesh, &ff) - m).norm() < 1e-14);
        }
    }
}

#[test]
fn source_outside_host_rejected() {
    let mesh = single_tet(SigmaField::Scalar(vec![1.0]));
    let src = SourceSpace::new(
        vec![Point3::new(2.0, 2.0, 2.0)],
        vec![],
        vec![0],
        OrientationMode::Cartesian,
    )
    .unwrap();
    assert!(matches!(assemble_g(&mesh, &src), Err(Error::Location(_))));
}

#[test]
fn matrix_market_export() {
    let mesh = cube_mesh(0.5);
    let el = cube_electrodes(&mesh);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let dir = tempfile::tempdir().unwrap();
    sys.export_matrix_market(dir.path()).unwrap();
    for name in ["A.mtx", "B.mtx", "C.mtx", "R.mtx", "G.mtx"] {
        assert!(dir.path().join(name).exists());
    }
}
