//! The three bundled scenarios, as INI text and as ready-built models.

use crate::model::{ConnectivityKernel, GainSpec, GainTable, IntrinsicDynamics, NetworkModel, SpatialBasis};
use crate::BasisFunction;

pub const TEST1: &str = include_str!("../presets/test1.ini");
pub const TEST2: &str = include_str!("../presets/test2.ini");
pub const TEST3: &str = include_str!("../presets/test3.ini");

/// `(name, one-line summary, INI text)`.
pub const ALL: [(&str, &str, &str); 3] = [
    ("test1", "point network, linear gains, constant balanced means", TEST1),
    ("test2", "point network, tanh gains, means driven by relaxing covariances", TEST2),
    ("test3", "ring network, no stable balanced root, oscillating particles", TEST3),
];

pub fn get(name: &str) -> Option<&'static str> {
    ALL.iter().find(|(n, _, _)| *n == name).map(|(_, _, text)| *text)
}

/// Stationary covariance `τΣ²/2` of the ring scenario.
pub const TEST3_EQUILIBRIUM_VARIANCE: f64 = 0.0625;

fn point_model(gains: [[GainSpec; 2]; 2]) -> NetworkModel {
    NetworkModel::new(
        SpatialBasis::point(),
        ConnectivityKernel::mean_field([[1.0, 1.0], [1.0, 1.0]]),
        GainTable(gains),
        IntrinsicDynamics::linear([1.0, 1.0], [1.0, 1.0]),
    )
    .expect("bundled model is valid")
}

pub fn test1_model() -> NetworkModel {
    point_model([
        [GainSpec::Constant(1.0), GainSpec::Linear(1.0)],
        [GainSpec::Linear(1.0), GainSpec::Linear(0.5)],
    ])
}

pub fn test2_model() -> NetworkModel {
    point_model([
        [GainSpec::Constant(0.1), GainSpec::tanh(1.0, 1.0, 0.0)],
        [GainSpec::tanh(1.0, 1.0, 0.0), GainSpec::tanh(0.5, 1.0, 0.0)],
    ])
}

pub fn test3_model() -> NetworkModel {
    let basis = SpatialBasis::ring(vec![BasisFunction::Constant, BasisFunction::Cosine, BasisFunction::Sine])
        .expect("bundled basis is valid");
    let kernel = ConnectivityKernel::diagonal([
        [vec![0.5, 2.0, 2.0], vec![4.0, 4.0, 4.0]],
        [vec![1.0, 2.0, 2.0], vec![1.0, 2.0, 2.0]],
    ])
    .expect("bundled kernel is valid");
    let g = GainSpec::tanh(1.0, 1.0, 0.0);
    NetworkModel::new(
        basis,
        kernel,
        GainTable([[g, g], [g, g]]),
        IntrinsicDynamics::linear([0.5, 0.5], [0.5, 0.5]),
    )
    .expect("bundled model is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup() {
        assert!(get("test2").unwrap().contains("name = test2"));
        assert!(get("test4").is_none());
    }

    #[test]
    fn ring_equilibrium_variance() {
        let (tau, sigma) = test3_model().dynamics.gaussian_parameters(crate::Population::Excitatory).unwrap();
        assert_eq!(TEST3_EQUILIBRIUM_VARIANCE, tau * sigma * sigma / 2.0);
    }
}
