//! Point-measure calculus on hand-checkable configurations.

use coalesce::measure::{conversion_coefficients, partitions};
use coalesce::{MonotoneAtomMap, PointMeasure};

fn pm(atoms: &[f64]) -> PointMeasure {
    PointMeasure::new(atoms.to_vec(), (-10.0, 10.0)).unwrap()
}

#[test]
fn factorial_and_tensor_small_cases() {
    let n = pm(&[0.0, 1.0, 2.5]);
    assert_eq!(n.factorial_integral(2, |_| 1.0).unwrap(), 6.0);
    assert_eq!(n.tensor_integral(2, |_| 1.0).unwrap(), 9.0);
    let two = pm(&[0.0, 1.0]);
    assert_eq!(two.factorial_integral(2, |u| u[0] + u[1]).unwrap(), 2.0);
    // tensor minus factorial is the diagonal
    let f = |u: &[f64]| (u[0] - 0.3 * u[1]).cos();
    let diag: f64 = n.atoms().iter().map(|&x| f(&[x, x])).sum();
    let gap = n.tensor_integral(2, f).unwrap() - n.factorial_integral(2, f).unwrap();
    assert!((gap - diag).abs() < 1e-12);
}

#[test]
fn factorial_integral_is_symmetric_for_symmetric_integrands() {
    let n = pm(&[-1.0, 0.2, 0.7, 3.0]);
    let f = |u: &[f64]| u[0] * u[1] * u[2] + u[0] + u[1] + u[2];
    let a = n.factorial_integral(3, f).unwrap();
    let b = n.factorial_integral(3, |u| f(&[u[2], u[0], u[1]])).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn conversion_tables() {
    assert_eq!(partitions(2), vec![vec![1, 1], vec![2]]);
    let c4 = conversion_coefficients(4).unwrap();
    // sum of A over partitions counts set partitions: Bell(4) = 15
    assert_eq!(c4.iter().map(|c| c.tensor_to_factorial).sum::<i64>(), 15);
    // the single-block coefficient of the falling factorial is (-1)^{n-1}(n-1)!
    assert_eq!(c4.last().unwrap().factorial_to_tensor, -6);
}

#[test]
fn inclusion_exclusion_on_merged_clusters() {
    let n = pm(&[0.0, 0.5, 1.0, 4.0]);
    let phi = MonotoneAtomMap::new(n, vec![2.0, 2.0, 2.0, 5.0]).unwrap();
    assert_eq!(phi.level_sets(), vec![(2.0, 3), (5.0, 1)]);
    assert_eq!(phi.mu_k_phi(2).unwrap(), vec![(2.0, 6)]);
    assert_eq!(phi.mu_k_phi(3).unwrap(), vec![(2.0, 6)]);
    let (lhs, rhs) = phi.inclusion_exclusion_eval(|y| y * y).unwrap();
    assert_eq!(lhs, rhs);
    assert_eq!(lhs, 29.0);
}

#[test]
fn block_integrals_partition_the_window() {
    let n = PointMeasure::new(vec![0.1, 0.9, 1.0, 2.4, 3.99], (0.0, 4.0)).unwrap();
    let f = coalesce::PeriodicFunction::cos(1);
    let total: f64 = (0..4).map(|k| n.block_integral(&f, k).unwrap()).sum();
    assert!((total - n.integrate(|x| f.eval(x))).abs() < 1e-12);
}
