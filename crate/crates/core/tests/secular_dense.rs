//! The secular route against a dense eigensolver on simulated data.

use specrecon::lab::{
    gen_data_matrix, mc_map, perturbation_column, sample_covariance, sym_eigen, ExperimentShape,
    GroundTruthModel,
};
use specrecon::rng::UniformStream;
use specrecon::secular::{interlacing_check, locality_profile, secular_solve, SecularProblem};
use specrecon::spectrum::{signed_shift, Role};

const MODELS: [&str; 5] = [
    "identity",
    "linear(1,10)",
    "geometric(1,1000)",
    "two_cluster(10,1,0.2)",
    "iid:geometric(0.5,20)",
];

#[test]
fn perturbation_plus_secular_reproduces_dense() {
    let worst = mc_map(17, 120, |t, seed| {
        let mut u = UniformStream::new(seed);
        let p = 2 + (u.next_f64() * 63.0) as usize;
        let n = 1 + (u.next_f64() * 3.0 * p as f64) as usize;
        let i = (u.next_f64() * p as f64) as usize;
        let m = GroundTruthModel::new(MODELS[t as usize % MODELS.len()].parse()?, p, seed)?;
        let x = gen_data_matrix(&ExperimentShape::new(p, n, seed)?, &m)?;
        let col = perturbation_column(&x, i)?;
        let roots = secular_solve(&SecularProblem::from_column(&col)?)?;
        let dense = sym_eigen(&sample_covariance(&x), false)?.spectrum(Role::Sample)?;
        assert!(interlacing_check(&dense, &col.nu)?);
        // rank-deficient zeros come back at rounding level; snap before counting
        let g = signed_shift(&roots.snap_near_zero(1e-10), &col.nu.snap_near_zero(1e-10))?;
        assert!(g.alternates() && g.total_mass() == 1);
        locality_profile(&roots, &col.nu, i)?;
        let dev = roots
            .values()
            .iter()
            .zip(dense.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        Ok(dev / dense.scale())
    })
    .unwrap();
    let max = worst.iter().cloned().fold(0.0, f64::max);
    assert!(max <= 1e-8, "{max}");
}

#[test]
fn rank_deficient_data() {
    // n < p leaves p - n zero eigenvalues; ties must deflate cleanly
    let m = GroundTruthModel::new("linear(1,5)".parse().unwrap(), 30, 0).unwrap();
    let x = gen_data_matrix(&ExperimentShape::new(30, 10, 4).unwrap(), &m).unwrap();
    let col = perturbation_column(&x, 7).unwrap();
    let roots = secular_solve(&SecularProblem::from_column(&col).unwrap()).unwrap();
    let dense = sym_eigen(&sample_covariance(&x), false).unwrap().spectrum(Role::Sample).unwrap();
    for (a, b) in roots.values().iter().zip(dense.values()) {
        assert!((a - b).abs() <= 1e-8 * dense.scale(), "{a} vs {b}");
    }
    assert!(interlacing_check(&roots, &col.nu).unwrap());
}
