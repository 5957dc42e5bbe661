//! Feasibility-driven starting point: equal budgets scaled down until the
//! satellite leakage cap holds, clamped to node caps and split evenly
//! between the two users.

use crate::allocation::PowerAllocation;
use crate::channel::NodeKind;
use crate::error::Result;
use crate::network::Network;
use crate::rates::{satellite_leakage, slack_fractions, solve_fixed_point, AuxVariables};
use crate::sca::linearize::LinearizationPoint;
use crate::sca::problem::Problem;
use crate::sca::ConstraintSet;

/// Equal-split allocation after leakage scaling, and the number of
/// `(1 - step)` scale-downs that were needed.
pub fn initial_power(net: &Network, constraints: &ConstraintSet) -> Result<(PowerAllocation, usize)> {
    constraints.validate(net.num_clusters())?;
    let clamped = |budget: f64| {
        let mut p = PowerAllocation::zeros(&net.topology);
        for (k, cluster) in net.topology.clusters.iter().enumerate() {
            let per_node = budget / cluster.num_nodes() as f64;
            for n in 0..cluster.num_nodes() {
                let cap = match cluster.node_kind(n) {
                    NodeKind::Tbs => constraints.p_tbs_max,
                    NodeKind::Uav => constraints.p_uav_max,
                };
                let node = per_node.min(cap);
                p.p[k][0][n] = node / 2.0;
                p.p[k][1][n] = node / 2.0;
            }
        }
        p
    };
    let over = |p: &PowerAllocation| (0..net.num_sat_users()).any(|j| satellite_leakage(net, p, j) > constraints.leakage_cap);

    let mut budget = constraints.p_max;
    let mut steps = 0;
    let mut power = clamped(budget);
    while over(&power) {
        budget *= 1.0 - constraints.init_step;
        steps += 1;
        power = clamped(budget);
    }
    Ok((power, steps))
}

/// `z_k = v*` of each chain's far-user term and `t` at equality; clusters
/// without a chain get the NOMA far-user values.
pub(crate) fn aux_for_problem(net: &Network, problem: &Problem, power: &PowerAllocation) -> Result<AuxVariables> {
    let mut aux = crate::rates::aux_at_equality(net, power)?;
    let flat = power.to_flat();
    for chain in &problem.chains {
        let snr = chain.term.snr(&flat);
        let v = solve_fixed_point(&snr, chain.term.antennas)?.v_star;
        aux.t[chain.cluster] = slack_fractions(&snr, chain.term.antennas, v);
        aux.z[chain.cluster] = v;
    }
    Ok(aux)
}

/// Starting linearization point of the NOMA problem.
pub fn initialize(net: &Network, constraints: &ConstraintSet) -> Result<LinearizationPoint> {
    let (power, _) = initial_power(net, constraints)?;
    let aux = crate::rates::aux_at_equality(net, &power)?;
    let mut point = LinearizationPoint::new(power, aux);
    point.repair_interior();
    Ok(point)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{Cluster, Position, Topology};
    use crate::rates::{max_satellite_leakage, tests::toy_network};

    fn mixed_network() -> Network {
        let mut net = toy_network(1, 3, 3, 1e-12, 1e-14);
        let cluster = &mut net.topology.clusters[0];
        let uav = cluster.tbs.pop().unwrap();
        cluster.uavs.push(uav);
        net
    }

    #[test]
    fn hand_traced_caps() {
        let net = mixed_network();
        let mut c = ConstraintSet::with_defaults(1);
        c.p_max = 125.0;
        c.p_tbs_max = 40.0;
        c.p_uav_max = 30.0;
        c.leakage_cap = 1.0;
        let (p, steps) = initial_power(&net, &c).unwrap();
        assert_eq!(steps, 0);
        assert_eq!(p.p[0][0], vec![20.0, 20.0, 15.0]);
        assert_eq!(p.p[0][1], vec![20.0, 20.0, 15.0]);
    }

    #[test]
    fn halving_leakage_takes_about_693_steps() {
        let net = toy_network(1, 2, 2, 1e-12, 1e-14);
        let mut c = ConstraintSet::with_defaults(1);
        c.p_max = 50.0;
        c.p_tbs_max = 1e3;
        let full = 50.0 * 1e-12;
        c.leakage_cap = full / 2.0;
        let (p, steps) = initial_power(&net, &c).unwrap();
        let expected = (0.5f64).ln() / (1.0 - c.init_step).ln();
        assert!((steps as f64 - expected.ceil()).abs() <= 1.0, "{steps} vs {expected}");
        assert!(max_satellite_leakage(&net, &p) <= c.leakage_cap);
    }

    #[test]
    fn aux_is_interior() {
        let topo = Topology {
            clusters: vec![Cluster {
                tbs: vec![Position::new(0.0, -1000.0, 30.0)],
                uavs: vec![Position::new(0.0, 5000.0, 200.0)],
                users: [Position::new(0.0, 8000.0, 5.0), Position::new(0.0, 40000.0, 5.0)],
                antennas_per_user: 2,
            }],
            satellite_users: vec![Position::new(20000.0, 30000.0, 5.0)],
        };
        let net = Network::new(topo, &Default::default()).unwrap();
        let point = initialize(&net, &ConstraintSet::with_defaults(1)).unwrap();
        assert!(point.z_prev[0] > 1.0);
        assert!(point.t_prev[0].iter().all(|&t| t > 0.0 && t < 1.0));
    }
}
