use nalgebra::{DMatrix, DVector, Point3};

use super::*;
use crate::fem::{CemSystem, ElectrodeSet};
use crate::geometry::{shapes, Compartment, Conductivity, Segmentation};
use crate::meshgen::{generate_mesh, place_sources, OrientationMode, TetMesh};
use crate::sparse::{from_triplets, to_dense};

fn fixture(h: f64) -> (TetMesh, Segmentation, ElectrodeSet) {
    let outer = shapes::box_surface("outer", Point3::origin(), Point3::new(1.0, 1.0, 1.0));
    let inner = shapes::box_surface(
        "inner",
        Point3::new(0.25, 0.25, 0.25),
        Point3::new(0.75, 0.75, 0.75),
    );
    let seg = Segmentation::new(vec![
        Compartment::new("inner", vec![inner], Conductivity::Isotropic(0.33), 1, true).unwrap(),
        Compartment::new("outer", vec![outer], Conductivity::Isotropic(1.0), 0, false).unwrap(),
    ])
    .unwrap();
    let mesh = generate_mesh(&seg, h).unwrap();
    let centers = [
        Point3::new(0.5, 0.5, 1.0),
        Point3::new(0.5, 0.5, 0.0),
        Point3::new(1.0, 0.5, 0.5),
        Point3::new(0.0, 0.5, 0.5),
        Point3::new(0.5, 1.0, 0.5),
    ];
    let el = ElectrodeSet::from_centers(&mesh, &centers, 0.2, &[1.0, 2.0, 1.5, 1.0, 3.0]).unwrap();
    (mesh, seg, el)
}

fn dense_m(sys: &CemSystem) -> (DMatrix<f64>, DMatrix<f64>) {
    let a = to_dense(&sys.a);
    let b = to_dense(&sys.b);
    let a_inv = a.cholesky().unwrap().inverse();
    let m = sys.c_matrix() - b.transpose() * &a_inv * &b;
    (a_inv, m)
}

#[test]
fn eeg_matches_dense_formula() {
    let (mesh, seg, el) = fixture(0.25);
    let sources = place_sources(&mesh, &seg, 6, OrientationMode::Cartesian, 3).unwrap();
    let sys = CemSystem::assemble(&mesh, &el)
        .unwrap()
        .with_sources(&mesh, &sources)
        .unwrap();
    let lf = eeg_leadfield(&sys, &sources, &PcgConfig::with_tolerance(1e-13)).unwrap();
    assert_eq!(lf.matrix.shape(), (5, 18));

    let (a_inv, m) = dense_m(&sys);
    let b = to_dense(&sys.b);
    let g = to_dense(&sys.g);
    let oracle = &sys.r
        * (b.transpose() * &a_inv * &b - sys.c_matrix())
            .try_inverse()
            .unwrap()
        * b.transpose()
        * &a_inv
        * g;
    let rel = (&lf.matrix - &oracle).norm() / oracle.norm();
    assert!(rel < 1e-8, "relative error {rel:e}");
    assert!((m.clone() - m.transpose()).amax() < 1e-12 * m.amax());

    for col in lf.matrix.column_iter() {
        assert!(col.sum().abs() <= 1e-10 * col.norm().max(1e-300));
    }
}

#[test]
fn zero_source_column_gives_zero_column() {
    let (mesh, seg, el) = fixture(0.25);
    let sources = place_sources(&mesh, &seg, 2, OrientationMode::Cartesian, 1).unwrap();
    let mut sys = CemSystem::assemble(&mesh, &el)
        .unwrap()
        .with_sources(&mesh, &sources)
        .unwrap();
    let mut g = to_dense(&sys.g);
    g.column_mut(4).fill(0.0);
    sys.g = crate::sparse::from_dense(&g);
    let lf = eeg_leadfield(&sys, &sources, &PcgConfig::default()).unwrap();
    assert_eq!(lf.matrix.column(4).amax(), 0.0);
    assert!(lf.matrix.column(3).amax() > 0.0);
}

#[test]
fn electrode_reordering_permutes_rows() {
    let (mesh, seg, el) = fixture(0.25);
    let sources = place_sources(&mesh, &seg, 3, OrientationMode::Cartesian, 5).unwrap();
    let cfg = PcgConfig::with_tolerance(1e-12);
    let sys = CemSystem::assemble(&mesh, &el)
        .unwrap()
        .with_sources(&mesh, &sources)
        .unwrap();
    let base = eeg_leadfield(&sys, &sources, &cfg).unwrap();
    let order = [3, 0, 4, 2, 1];
    let sys2 = CemSystem::assemble(&mesh, &el.permuted(&order))
        .unwrap()
        .with_sources(&mesh, &sources)
        .unwrap();
    let perm = eeg_leadfield(&sys2, &sources, &cfg).unwrap();
    let expected = base.permute_rows(&order);
    assert!((&perm.matrix - &expected.matrix).amax() < 1e-9 * base.matrix.amax());
}

#[test]
fn eeg_requires_sources() {
    let (mesh, seg, el) = fixture(0.25);
    let sources = place_sources(&mesh, &seg, 2, OrientationMode::Cartesian, 1).unwrap();
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    assert!(matches!(
        eeg_leadfield(&sys, &sources, &PcgConfig::default()),
        Err(Error::Parameter(_))
    ));
}

#[test]
fn singular_m_is_reported() {
    let r = CemOperator::from_parts(DMatrix::zeros(3, 2), DMatrix::zeros(2, 2));
    assert!(matches!(r, Err(Error::SingularSystem(_))));
    let r = CemOperator::from_parts(
        DMatrix::zeros(3, 2),
        DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
    );
    assert!(matches!(r, Err(Error::SingularSystem(_))));
}

#[test]
fn eit_forward_basic_properties() {
    let (mesh, _, el) = fixture(0.25);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let cfg = PcgConfig::with_tolerance(1e-12);
    let op = CemOperator::new(&sys, &cfg).unwrap();
    let zero = eit_forward_with(&op, &DMatrix::zeros(5, 1)).unwrap();
    assert_eq!(zero.amax(), 0.0);

    let i = DMatrix::from_column_slice(5, 1, &[1.0, -0.5, 0.0, -0.25, -0.25]);
    let y = eit_forward_with(&op, &i).unwrap();
    assert!(y.sum().abs() < 1e-12 * y.norm());
    let y3 = eit_forward_with(&op, &(&i * 3.0)).unwrap();
    assert!((y3 - &y * 3.0).amax() < 1e-12 * y.amax());

    let (_, m) = dense_m(&sys);
    let mut oracle = m.try_inverse().unwrap() * &i;
    center_columns(&mut oracle);
    assert!((&y - &oracle).amax() < 1e-8 * oracle.amax());

    let bad = DMatrix::from_column_slice(5, 1, &[1.0, 0.0, 0.0, 0.0, 0.0]);
    assert!(matches!(
        eit_forward(&sys, &bad, &cfg),
        Err(Error::CurrentPattern { .. })
    ));
}

#[test]
fn adjacent_patterns_sum_to_zero() {
    let p = adjacent_patterns(4, 2.0);
    assert_eq!(p.column(0).as_slice(), &[2.0, -2.0, 0.0, 0.0]);
    assert_eq!(p.column(3).as_slice(), &[-2.0, 0.0, 0.0, 2.0]);
    for c in p.column_iter() {
        assert_eq!(c.sum(), 0.0);
    }
}

fn dense_forward(mesh: &TetMesh, el: &ElectrodeSet, patterns: &DMatrix<f64>) -> DVector<f64> {
    let sys = CemSystem::assemble(mesh, el).unwrap();
    let (_, m) = dense_m(&sys);
    let mut y = m.lu().solve(patterns).unwrap();
    center_columns(&mut y);
    stack_patterns(&y)
}

#[test]
fn eit_leadfield_matches_finite_differences() {
    let (mesh, _, el) = fixture(0.25);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let patterns = adjacent_patterns(5, 1.0);
    let dofs = EitDofMap::cluster(&mesh, &[0, 1], 12, 7).unwrap();
    let lf = eit_leadfield(
        &mesh,
        &sys,
        &dofs,
        &patterns,
        &PcgConfig::with_tolerance(1e-13),
    )
    .unwrap();
    assert_eq!(lf.matrix.shape(), (25, dofs.len()));
    let y_bg = dense_forward(&mesh, &el, &patterns);
    assert!((lf.background.as_ref().unwrap() - &y_bg).amax() < 1e-8 * y_bg.amax());

    for m in 0..dofs.len() {
        let s = mesh.sigma().get(dofs.sets()[m][0]);
        let crate::geometry::Conductivity::Isotropic(s) = s else {
            unreachable!()
        };
        let delta = 1e-6 * s;
        let mut dx = vec![0.0; dofs.len()];
        dx[m] = delta;
        let plus = mesh
            .with_sigma(dofs.perturb(mesh.sigma(), &dx).unwrap())
            .unwrap();
        dx[m] = -delta;
        let minus = mesh
            .with_sigma(dofs.perturb(mesh.sigma(), &dx).unwrap())
            .unwrap();
        let fd = (dense_forward(&plus, &el, &patterns) - dense_forward(&minus, &el, &patterns))
            / (2.0 * delta);
        let col = lf.matrix.column(m);
        let rel = (&fd - col).amax() / col.amax();
        assert!(rel < 1e-3, "DOF {m}: relative error {rel:e}");
    }
}

#[test]
fn duplicate_dof_gives_identical_columns() {
    let (mesh, _, el) = fixture(0.25);
    let sys = CemSystem::assemble(&mesh, &el).unwrap();
    let set: Vec<usize> = (0..5).collect();
    let dofs = EitDofMap::new(&mesh, vec![set.clone(), vec![7, 8], set]).unwrap();
    let lf = eit_leadfield(
        &mesh,
        &sys,
        &dofs,
        &adjacent_patterns(5, 1.0),
        &PcgConfig::default(),
    )
    .unwrap();
    assert_eq!(lf.matrix.column(0), lf.matrix.column(2));
    let zero = lf.predict(&DVector::zeros(3)).unwrap();
    assert_eq!(&zero, lf.background.as_ref().unwrap());
    assert!(matches!(
        EitDofMap::new(&mesh, vec![vec![]]),
        Err(Error::Dof(_))
    ));
}

#[test]
fn cluster_partitions_elements() {
    let (mesh, _, _) = fixture(0.25);
    let dofs = EitDofMap::cluster(&mesh, &[0], 10, 3).unwrap();
    let mut all: Vec<usize> = dofs.sets().iter().flatten().copied().collect();
    all.sort_unstable();
    let expected: Vec<usize> = (0..mesh.element_count())
        .filter(|&e| mesh.labels()[e] == 0)
        .collect();
    assert_eq!(all, expected);
    assert!(dofs.sets().iter().all(|s| !s.is_empty()));
    assert!(EitDofMap::cluster(&mesh, &[0], 100000, 3).is_err());
}

#[test]
fn save_load_roundtrip() {
    let lf = LeadField {
        matrix: DMatrix::from_fn(3, 2, |i, j| (i as f64 + 1.0) * 0.1 - j as f64),
        positions: vec![Point3::new(0.0, 1.0, 2.0), Point3::new(-1.0, 0.5, 0.25)],
        orientations: vec![],
        modality: Modality::Eit,
        sigma_hash: Some("abc".into()),
        background: Some(DVector::from_vec(vec![1.0, 2.0, 3.0])),
    };
    let dir = tempfile::tempdir().unwrap();
    let stem = dir.path().join("lf");
    lf.save(&stem, true).unwrap();
    assert_eq!(LeadField::load(&stem).unwrap(), lf);
    assert_eq!(LeadField::load(dir.path().join("lf.json")).unwrap(), lf);
    let csv = std::fs::read_to_string(dir.path().join("lf.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    let bytes = std::fs::read(dir.path().join("lf.bin")).unwrap();
    assert_eq!(
        f64::from_le_bytes(bytes[8..16].try_into().unwrap()),
        lf.matrix[(1, 0)]
    );
}

#[test]
fn sparse_g_transpose_product() {
    let g = from_triplets(3, 2, &[(0, 0, 1.0), (2, 1, 2.0)]);
    let t = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
    let p: DMatrix<f64> = &g.transpose() * &t;
    assert_eq!(p.as_slice(), &[1.0, 6.0]);
}
