use hyperball::atomic::{
    kernel_bloch_norm, standard_test_set, AtomicConfig, AtomicSystem, CoefficientSequence, Normalization,
};
use hyperball::kernels::KernelTable;
use hyperball::lattice::{build_lattice, Partition};
use hyperball::operators::{bloch_norms, BlochGrid, ZonalExpansion};
use hyperball::Error;
use std::sync::{Arc, OnceLock};

fn config(mode: Normalization) -> AtomicConfig {
    let mut cfg = AtomicConfig::new(0.0, 1.0, mode);
    cfg.norm_radius = 0.6;
    cfg.grid.r_max = 0.6;
    cfg.fine_grid.r_max = 0.6;
    cfg.max_iterations = 12;
    cfg
}

fn partition() -> Arc<Partition> {
    static P: OnceLock<Arc<Partition>> = OnceLock::new();
    P.get_or_init(|| Arc::new(Partition::new(Arc::new(build_lattice(3, 0.2, 0.9, 1).unwrap())))).clone()
}

#[test]
fn harmonic_engine_matches_direct_kernel_sums() {
    let sys = AtomicSystem::new(partition(), config(Normalization::KernelBlochNorm)).unwrap();
    let f = standard_test_set(3, 0.0, 1).unwrap().swap_remove(4);
    let d = sys.run_batch(&[(&f, Normalization::KernelBlochNorm)]).unwrap().remove(0);
    let direct = sys.op_t(&d.lambda, d.normalization).unwrap();
    let mut grid = sys.cfg.fine_grid.clone();
    grid.r_max = sys.cfg.norm_radius;
    let pts = grid.points(&f).unwrap();
    assert_eq!(pts.len() / 3, d.reconstruction.len());
    let sup = d.reconstruction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    for (x, want) in pts.chunks(3).zip(&d.reconstruction).step_by(7) {
        let got = direct.value(x).unwrap();
        assert!((got - want).abs() <= 1e-9 * sup, "at {x:?}: {got} vs {want}");
    }
}

#[test]
fn decomposition_reconstructs_the_test_set() {
    let sys = AtomicSystem::new(partition(), config(Normalization::KernelBlochNorm)).unwrap();
    let set = standard_test_set(3, 0.0, 1).unwrap();
    let jobs: Vec<(&ZonalExpansion, Normalization)> = set
        .iter()
        .flat_map(|f| [(f, Normalization::KernelBlochNorm), (f, Normalization::WeightPower)])
        .collect();
    let runs = sys.run_batch(&jobs).unwrap();
    let c = sys.recorded_contraction().unwrap();
    assert!(c < 0.8, "contraction {c}");
    for d in &runs {
        assert_eq!(d.lambda.len(), sys.lattice().len());
        assert!(d.reconstruction_error < 1e-2, "reconstruction error {}", d.reconstruction_error);
        assert!(d.history.last().unwrap() < &d.history[0]);
    }
    let report = sys.report(runs);
    assert_eq!(report.centers, sys.lattice().len());
    assert_eq!(report.brackets.len(), 2);
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.contains("kernel_degree"));
}

#[test]
fn coefficient_operator_is_linear() {
    let sys = AtomicSystem::new(partition(), config(Normalization::WeightPower)).unwrap();
    let set = standard_test_set(3, 0.0, 2).unwrap();
    let (f, g) = (&set[3], &set[5]);
    let sum = f.plus(&g.scaled(-2.0)).unwrap();
    let (uf, ug, us) = (
        sys.op_u(f, Normalization::WeightPower).unwrap(),
        sys.op_u(g, Normalization::WeightPower).unwrap(),
        sys.op_u(&sum, Normalization::WeightPower).unwrap(),
    );
    for m in 0..us.len() {
        let want = uf.values[m] - 2.0 * ug.values[m];
        assert!((us.values[m] - want).abs() <= 1e-12 * (1.0 + want.abs()));
    }
}

#[test]
fn wrong_length_coefficients_are_rejected() {
    let sys = AtomicSystem::new(partition(), config(Normalization::WeightPower)).unwrap();
    let lambda = CoefficientSequence::zeros(3);
    assert!(matches!(sys.op_t(&lambda, Normalization::WeightPower), Err(Error::Input(_))));
    assert!(CoefficientSequence::new(vec![1.0, f64::NAN]).is_err());
}

#[test]
fn kernel_bloch_norm_matches_grid_estimate() {
    let table = KernelTable::shared(3, 0.0, 3000).unwrap();
    let shifted = KernelTable::shared(3, 1.0, 3000).unwrap();
    let grid = BlochGrid { per_octave: 4, sphere_degree: 24, r_max: 0.999, include_poles: true };
    for ra in [0.0, 0.5, 0.8] {
        let along_rays = kernel_bloch_norm(&shifted, 1.0, ra).unwrap();
        let mut a = vec![0.0; 3];
        a[0] = ra;
        let k = ZonalExpansion::slice_degree(&table, ra, 0.999, 1e-10).unwrap();
        let f = ZonalExpansion::kernel_slice(&table, &a, k).unwrap();
        let est = bloch_norms(&f, &[(0.0, 1.0)], &grid).unwrap().weighted[0].value;
        assert!((along_rays - est).abs() < 0.05 * along_rays, "|a| = {ra}: {along_rays} vs {est}");
    }
}

#[test]
fn invalid_configuration_is_rejected() {
    let mut cfg = config(Normalization::WeightPower);
    cfg.max_iterations = 0;
    assert!(AtomicSystem::new(partition(), cfg).is_err());
}
