use std::sync::Arc;

use dbf_core::{
    joint_likelihood, l1_distance, local_degree_weights, logop, AdjacencyMatrix,
    AdjacencySchedule, CentralizedBayesFilter, CentralizedInfoFilter, DbfNetwork, DensityGrid,
    Digraph, DistributedInfoFilter, GaussianInfo, LinearModel, LinearSensor, PoolWeights,
    StateGrid, TransitionKernel,
};
use dbf_core::engine::GaussianRandomWalk;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn grid() -> Arc<StateGrid> {
    StateGrid::line(-20.0, 20.0, 120).unwrap().into_shared()
}

fn measurements(n: usize, truth: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = rng.sample(StandardNormal);
            truth + 2.0 * z
        })
        .collect()
}

fn likelihoods(g: &Arc<StateGrid>, ys: &[f64]) -> Vec<DensityGrid> {
    ys.iter()
        .map(|y| DensityGrid::gaussian(g, &[*y], &[2.0]).unwrap())
        .collect()
}

#[test]
fn single_agent_matches_centralized_filter() {
    let g = grid();
    let prior = DensityGrid::gaussian(&g, &[0.0], &[5.0]).unwrap();
    let kernel = TransitionKernel::from_model(&g, &GaussianRandomWalk { std: vec![0.7] }, 1.0).unwrap();
    let mut net = DbfNetwork::with_common_prior(
        prior.clone(),
        AdjacencySchedule::constant(AdjacencyMatrix::identity(1)),
    )
    .unwrap();
    let mut central = CentralizedBayesFilter::new(prior);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for k in 0..30 {
        let l = likelihoods(&g, &measurements(1, 0.3 * k as f64, &mut rng));
        net.step(&l, &kernel).unwrap();
        central.step(&l, &kernel).unwrap();
        assert_eq!(net.agents()[0].w.values(), central.w.values());
    }
}

#[test]
fn consensus_conserves_the_geometric_mean_of_likelihoods() {
    let g = grid();
    let n = 6;
    let a = local_degree_weights(&Digraph::cycle(n)).unwrap();
    let kernel = TransitionKernel::from_model(&g, &GaussianRandomWalk { std: vec![0.5] }, 1.0).unwrap();
    let mut net =
        DbfNetwork::with_common_prior(DensityGrid::uniform(&g), AdjacencySchedule::constant(a))
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = PoolWeights::uniform(n).unwrap();
    for k in 0..40 {
        let l = likelihoods(&g, &measurements(n, 0.1 * k as f64, &mut rng));
        net.step(&l, &kernel).unwrap();
        let u: Vec<DensityGrid> = net.agents().iter().map(|a| a.u.clone()).collect();
        let d = l1_distance(&logop(&u, &w).unwrap(), &logop(&l, &w).unwrap()).unwrap();
        assert!(d < 1e-9, "step {k}: {d}");
    }
}

#[test]
fn static_likelihoods_reach_the_joint_on_a_sparse_graph() {
    let g = grid();
    let n = 5;
    let a = local_degree_weights(&Digraph::cycle(n)).unwrap();
    let mut net =
        DbfNetwork::with_common_prior(DensityGrid::uniform(&g), AdjacencySchedule::constant(a))
            .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let l = likelihoods(&g, &measurements(n, 1.5, &mut rng));
    let mut history = Vec::new();
    for _ in 0..80 {
        history.push(net.step(&l, &TransitionKernel::Identity).unwrap().max_l1());
    }
    assert!(history[79] < 1e-6, "{history:?}");
    assert!(history[79] < history[10]);
    let joint = joint_likelihood(&l).unwrap();
    for agent in net.agents() {
        assert!(l1_distance(&agent.t, &joint).unwrap() < 1e-6);
        assert!((agent.w.mean()[0] - joint.mean()[0]).abs() < 0.5);
    }
}

#[test]
fn single_agent_information_filter_is_the_central_filter() {
    let f = DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 0.0, 1.0]);
    let q = DMatrix::from_row_slice(2, 2, &[1e-3, 0.0, 0.0, 1e-2]);
    let model = LinearModel::new(f.clone(), q).unwrap();
    let sensors = vec![Some(
        LinearSensor::new(
            DMatrix::from_row_slice(1, 2, &[1.0, 0.0]),
            DMatrix::from_element(1, 1, 0.5),
        )
        .unwrap(),
    )];
    let prior = GaussianInfo::from_moments(&DVector::zeros(2), &DMatrix::identity(2, 2)).unwrap();
    let mut dist = DistributedInfoFilter::new(
        prior.clone(),
        AdjacencySchedule::constant(AdjacencyMatrix::identity(1)),
    );
    let mut central = CentralizedInfoFilter::new(prior);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut x = DVector::from_vec(vec![0.0, 1.0]);
    for _ in 0..25 {
        x = &f * x;
        let z: f64 = rng.sample(StandardNormal);
        let ys = vec![Some(DVector::from_vec(vec![x[0] + 0.5f64.sqrt() * z]))];
        let d = dist.step(&model, &sensors, &ys).unwrap();
        let c = central.step(&model, &sensors, &ys).unwrap();
        assert_eq!(d[0].x, c.x);
        assert_eq!(d[0].p, c.p);
    }
}
