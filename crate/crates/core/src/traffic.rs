//! Synchronous packet traffic with degree-dependent creation and delivery.
//!
//! Every step, node `i` forwards up to `1 + beta * k_i` packets from the head
//! of its FIFO queue, then creates `lambda * k_i` new ones. Fractional rates
//! are realized by stochastic rounding so the expected rate is exact. All
//! routing decisions within a step see the queue lengths as they were at the
//! start of that step; arrivals land after every node has forwarded.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::graph::{generate_scale_free, Network};
use crate::{Error, Result};

/// Absolute tolerance when comparing strategy costs.
pub const COST_TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    /// Random shortest-path next hop.
    Liu,
    /// Minimize `h * d + (1 - h) * n / (1 + beta * k)` over neighbors.
    Echenique,
    /// Minimize the expected waiting time summed along a shortest path.
    Zhang,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Liu, Strategy::Echenique, Strategy::Zhang];

    pub fn name(self) -> &'static str {
        match self {
            Strategy::Liu => "liu",
            Strategy::Echenique => "echenique",
            Strategy::Zhang => "zhang",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "liu" => Ok(Strategy::Liu),
            "echenique" => Ok(Strategy::Echenique),
            "zhang" => Ok(Strategy::Zhang),
            _ => Err(Error::InvalidParameter {
                name: "strategy",
                reason: "expected liu, echenique or zhang",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Packet {
    pub destination: u32,
    pub birth_time: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub strategy: Strategy,
    /// Packets created per unit degree per step.
    pub lambda: f64,
    /// Delivery capacity per unit degree per step.
    pub beta: f64,
    /// Echenique weighing factor; ignored by the other strategies.
    pub h: f64,
    pub steps: u64,
    pub warmup: u64,
    pub seed: u64,
    pub n_nodes: usize,
    pub links_per_new_node: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            strategy: Strategy::Liu,
            lambda: 0.01,
            beta: 0.1,
            h: 0.85,
            steps: 11_000,
            warmup: 1_000,
            seed: 1,
            n_nodes: 1000,
            links_per_new_node: 3,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason| Err(Error::InvalidParameter { name, reason });
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda", "must be a finite non-negative number");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta", "must be a finite non-negative number");
        }
        if !(0.0..=1.0).contains(&self.h) {
            return bad("h", "must lie in [0, 1]");
        }
        if self.steps == 0 {
            return bad("steps", "must be positive");
        }
        if self.warmup >= self.steps {
            return bad("warmup", "must be smaller than steps");
        }
        if self.links_per_new_node == 0 {
            return bad("links_per_new_node", "must be at least 1");
        }
        if self.n_nodes < self.links_per_new_node + 1 {
            return bad("n_nodes", "must be at least links_per_new_node + 1");
        }
        Ok(())
    }

    pub fn build_network(&self) -> Result<Network> {
        generate_scale_free(self.n_nodes, self.links_per_new_node, self.seed)
    }
}

/// `floor(x)` plus a Bernoulli draw on the fractional part. Its mean is `x`.
pub fn stochastic_round<R: Rng + ?Sized>(x: f64, rng: &mut R) -> u64 {
    debug_assert!(x >= 0.0, "stochastic_round of negative {x}");
    let whole = libm::floor(x);
    let frac = x - whole;
    let extra = frac > 0.0 && rng.random::<f64>() < frac;
    whole as u64 + u64::from(extra)
}

/// Packets a node of degree `k` may forward this step: `1 + round(beta * k)`.
pub fn capacity<R: Rng + ?Sized>(beta: f64, k: usize, rng: &mut R) -> u64 {
    1 + stochastic_round(beta * k as f64, rng)
}

/// Per-step counters returned by [`SimState::step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepStats {
    pub created: u64,
    pub delivered: u64,
    pub queued: u64,
}

/// Per-node FIFO queues plus clock, RNG and counters.
#[derive(Debug, Clone)]
pub struct SimState {
    queues: Vec<VecDeque<Packet>>,
    clock: u64,
    rng: ChaCha8Rng,
    created_total: u64,
    delivered_total: u64,
    enqueued: Vec<u64>,
    loads: Vec<u32>,
    staging: Vec<(u32, Packet)>,
}

impl SimState {
    /// Empty queues with a traffic RNG seeded from `seed`. The RNG stream is
    /// separate from the one the network generator uses for the same seed.
    pub fn new(n_nodes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(1);
        Self {
            queues: (0..n_nodes).map(|_| VecDeque::new()).collect(),
            clock: 0,
            rng,
            created_total: 0,
            delivered_total: 0,
            enqueued: alloc::vec![0; n_nodes],
            loads: alloc::vec![0; n_nodes],
            staging: Vec::new(),
        }
    }

    pub fn clock(&self) -> u64 {
        self.clock
    }

    pub fn created_total(&self) -> u64 {
        self.created_total
    }

    pub fn delivered_total(&self) -> u64 {
        self.delivered_total
    }

    pub fn queue(&self, node: usize) -> &VecDeque<Packet> {
        &self.queues[node]
    }

    pub fn queue_len(&self, node: usize) -> usize {
        self.queues[node].len()
    }

    pub fn total_queued(&self) -> u64 {
        self.queues.iter().map(|q| q.len() as u64).sum()
    }

    /// Packets ever appended to `node`'s queue (created there or arrived).
    pub fn enqueued_at(&self, node: usize) -> u64 {
        self.enqueued[node]
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Appends a packet directly to a queue tail, counting it as created.
    pub fn inject(&mut self, node: usize, packet: Packet) {
        debug_assert_ne!(node, packet.destination as usize);
        self.queues[node].push_back(packet);
        self.enqueued[node] += 1;
        self.created_total += 1;
    }

    fn stage_new_packets(&mut self, net: &Network, lambda: f64) -> u64 {
        let n = net.node_count();
        if lambda <= 0.0 || n < 2 {
            return 0;
        }
        let mut created = 0;
        for i in 0..n {
            let count = stochastic_round(lambda * net.degree(i) as f64, &mut self.rng);
            for _ in 0..count {
                let mut dest = self.rng.random_range(0..n - 1);
                if dest >= i {
                    dest += 1;
                }
                let packet = Packet {
                    destination: dest as u32,
                    birth_time: self.clock,
                };
                self.staging.push((i as u32, packet));
            }
            created += count;
        }
        self.created_total += created;
        created
    }

    fn flush_staging(&mut self) {
        for (node, packet) in self.staging.drain(..) {
            self.queues[node as usize].push_back(packet);
            self.enqueued[node as usize] += 1;
        }
    }

    /// Every node appends `round(lambda * k_i)` packets with uniformly random
    /// destinations other than itself. Returns the number created.
    pub fn create_packets(&mut self, net: &Network, lambda: f64) -> u64 {
        let created = self.stage_new_packets(net, lambda);
        self.flush_staging();
        created
    }

    /// Advances one synchronous step: forward, create, then enqueue staged
    /// arrivals and new packets in staging order.
    pub fn step(&mut self, net: &Network, cfg: &SimConfig) -> StepStats {
        let n = net.node_count();
        for (load, q) in self.loads.iter_mut().zip(&self.queues) {
            *load = q.len() as u32;
        }
        let mut delivered = 0;
        for at in 0..n {
            if self.queues[at].is_empty() {
                continue;
            }
            let cap = capacity(cfg.beta, net.degree(at), &mut self.rng);
            let sends = cap.min(self.queues[at].len() as u64);
            for _ in 0..sends {
                let Some(packet) = self.queues[at].pop_front() else {
                    break;
                };
                let dest = packet.destination as usize;
                let next = route(cfg, net, &self.loads, at, dest, &mut self.rng);
                if next == dest {
                    delivered += 1;
                } else {
                    self.staging.push((next as u32, packet));
                }
            }
        }
        let created = self.stage_new_packets(net, cfg.lambda);
        self.flush_staging();
        self.delivered_total += delivered;
        self.clock += 1;
        StepStats {
            created,
            delivered,
            queued: self.created_total - self.delivered_total,
        }
    }
}

/// Dispatches to the configured routing strategy.
pub fn route<R: Rng + ?Sized>(
    cfg: &SimConfig,
    net: &Network,
    loads: &[u32],
    at: usize,
    dest: usize,
    rng: &mut R,
) -> usize {
    match cfg.strategy {
        Strategy::Liu => route_liu(net, at, dest, rng),
        Strategy::Echenique => route_echenique(net, loads, at, dest, cfg.beta, cfg.h, rng),
        Strategy::Zhang => route_zhang(net, loads, at, dest, cfg.beta, rng),
    }
}

/// Uniformly random neighbor one hop closer to `dest`.
pub fn route_liu<R: Rng + ?Sized>(net: &Network, at: usize, dest: usize, rng: &mut R) -> usize {
    assert_ne!(at, dest, "packet already at its destination");
    let target = net.distance(at, dest) - 1;
    let neighbors = net.neighbors(at);
    let count = neighbors
        .iter()
        .filter(|&&l| net.distance(l, dest) == target)
        .count();
    let pick = if count == 1 {
        0
    } else {
        rng.random_range(0..count)
    };
    neighbors
        .iter()
        .copied()
        .filter(|&l| net.distance(l, dest) == target)
        .nth(pick)
        .expect("connected network always has a closer neighbor")
}

/// Neighbor minimizing `h * d(l, dest) + (1 - h) * n_l / (1 + beta * k_l)`.
pub fn route_echenique<R: Rng + ?Sized>(
    net: &Network,
    loads: &[u32],
    at: usize,
    dest: usize,
    beta: f64,
    h: f64,
    rng: &mut R,
) -> usize {
    assert_ne!(at, dest, "packet already at its destination");
    argmin_neighbor(net, at, dest, rng, |l| {
        let d = f64::from(net.distance(l, dest));
        h * d + (1.0 - h) * f64::from(loads[l]) / (1.0 + beta * net.degree(l) as f64)
    })
}

/// Expected waiting time along the canonical shortest path from `from` to
/// `dest`, `from` included and `dest` excluded.
pub fn zhang_cost(net: &Network, loads: &[u32], from: usize, dest: usize, beta: f64) -> f64 {
    let mut cost = 0.0;
    let mut v = from;
    while v != dest {
        cost += f64::from(loads[v]) / (1.0 + beta * net.degree(v) as f64);
        v = net.canonical_next(v, dest);
    }
    cost
}

/// Neighbor with the smallest [`zhang_cost`] to `dest`.
pub fn route_zhang<R: Rng + ?Sized>(
    net: &Network,
    loads: &[u32],
    at: usize,
    dest: usize,
    beta: f64,
    rng: &mut R,
) -> usize {
    assert_ne!(at, dest, "packet already at its destination");
    argmin_neighbor(net, at, dest, rng, |l| {
        zhang_cost(net, loads, l, dest, beta)
    })
}

/// Minimizes `cost` over the neighbors of `at`. Costs within
/// [`COST_TIE_TOLERANCE`] of the minimum tie; ties go to the smallest hop
/// distance to `dest`, then uniformly at random.
fn argmin_neighbor<R, F>(net: &Network, at: usize, dest: usize, rng: &mut R, cost: F) -> usize
where
    R: Rng + ?Sized,
    F: Fn(usize) -> f64,
{
    let neighbors = net.neighbors(at);
    let best_cost = neighbors
        .iter()
        .map(|&l| cost(l))
        .fold(f64::INFINITY, f64::min);
    let cutoff = best_cost + COST_TIE_TOLERANCE;
    let mut best_dist = u16::MAX;
    let mut count = 0;
    for &l in neighbors {
        if cost(l) <= cutoff {
            let d = net.distance(l, dest);
            if d < best_dist {
                best_dist = d;
                count = 1;
            } else if d == best_dist {
                count += 1;
            }
        }
    }
    let pick = if count == 1 {
        0
    } else {
        rng.random_range(0..count)
    };
    neighbors
        .iter()
        .copied()
        .filter(|&l| net.distance(l, dest) == best_dist && cost(l) <= cutoff)
        .nth(pick)
        .expect("at least one neighbor attains the minimum")
}

/// Sampled mean queue length per node after the warmup prefix.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    pub values: Vec<f64>,
    /// Clock value of the first retained sample.
    pub start: u64,
}

impl TimeSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// A finished run: the load series plus hub throughput for the threshold
/// cross-check.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub series: TimeSeries,
    pub created_total: u64,
    pub delivered_total: u64,
    /// Mean packets appended to the hub's queue per step after warmup.
    pub hub_arrival_rate: f64,
}

/// Runs `cfg` on an existing network; the network seed is not consulted.
pub fn run_on(net: &Network, cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.n_nodes != net.node_count() {
        return Err(Error::InvalidParameter {
            name: "n_nodes",
            reason: "does not match the network",
        });
    }
    let mut state = SimState::new(net.node_count(), cfg.seed);
    let n = net.node_count() as f64;
    let hub = net.hub_index();
    let mut values = Vec::with_capacity((cfg.steps - cfg.warmup) as usize);
    let mut hub_at_warmup = 0;
    for t in 0..cfg.steps {
        if t == cfg.warmup {
            hub_at_warmup = state.enqueued_at(hub);
        }
        let stats = state.step(net, cfg);
        if t >= cfg.warmup {
            values.push(stats.queued as f64 / n);
        }
    }
    let window = (cfg.steps - cfg.warmup) as f64;
    Ok(RunOutput {
        series: TimeSeries {
            values,
            start: cfg.warmup + 1,
        },
        created_total: state.created_total(),
        delivered_total: state.delivered_total(),
        hub_arrival_rate: (state.enqueued_at(hub) - hub_at_warmup) as f64 / window,
    })
}

/// Builds the network from `cfg` and runs it.
pub fn run(cfg: &SimConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    let net = cfg.build_network()?;
    run_on(&net, cfg).map(|out| out.series)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn small_cfg(net: &Network, strategy: Strategy) -> SimConfig {
        SimConfig {
            strategy,
            n_nodes: net.node_count(),
            links_per_new_node: 2,
            steps: 200,
            warmup: 0,
            ..SimConfig::default()
        }
    }

    #[test]
    fn stochastic_round_integers_are_exact() {
        let mut r = rng(1);
        for _ in 0..1000 {
            assert_eq!(stochastic_round(2.0, &mut r), 2);
            assert_eq!(stochastic_round(0.0, &mut r), 0);
        }
    }

    #[test]
    fn capacity_is_at_least_one() {
        let mut r = rng(2);
        for k in 1..50 {
            assert_eq!(capacity(0.0, k, &mut r), 1);
        }
        for _ in 0..100 {
            assert_eq!(capacity(0.5, 4, &mut r), 3);
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for s in Strategy::ALL {
            assert_eq!(s.name().parse::<Strategy>().unwrap(), s);
        }
        assert!("dijkstra".parse::<Strategy>().is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = [
            SimConfig {
                lambda: -0.1,
                ..SimConfig::default()
            },
            SimConfig {
                beta: f64::NAN,
                ..SimConfig::default()
            },
            SimConfig {
                h: 1.5,
                ..SimConfig::default()
            },
            SimConfig {
                warmup: 11_000,
                ..SimConfig::default()
            },
            SimConfig {
                steps: 0,
                warmup: 0,
                ..SimConfig::default()
            },
            SimConfig {
                links_per_new_node: 0,
                ..SimConfig::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }

    /// c=0 with leaves a=1, b=2 and e=4; a and b both touch the destination d=3.
    fn echenique_fixture() -> Network {
        Network::from_edges(5, &[(0, 1), (0, 2), (1, 3), (2, 3), (0, 4)], None).unwrap()
    }

    #[test]
    fn echenique_prefers_unloaded_neighbor() {
        let net = echenique_fixture();
        let mut loads = vec![0u32; 5];
        loads[1] = 10;
        let (h, beta) = (0.85, 0.1);
        // Independent evaluation of every neighbor's cost.
        let costs: Vec<(usize, f64)> = net
            .neighbors(0)
            .iter()
            .map(|&l| {
                let d = f64::from(net.distance(l, 3));
                (
                    l,
                    h * d + (1.0 - h) * f64::from(loads[l]) / (1.0 + beta * net.degree(l) as f64),
                )
            })
            .collect();
        assert!((costs[0].1 - 2.1).abs() < 1e-12);
        assert!((costs[1].1 - 0.85).abs() < 1e-12);
        let oracle = costs.iter().min_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        let mut r = rng(3);
        for _ in 0..100 {
            assert_eq!(route_echenique(&net, &loads, 0, 3, beta, h, &mut r), oracle);
        }
        assert_eq!(oracle, 2);
    }

    #[test]
    fn echenique_with_h_one_is_shortest_path() {
        let net = echenique_fixture();
        let loads = vec![50u32, 50, 0, 0, 0];
        let mut r = rng(4);
        for _ in 0..50 {
            let hop = route_echenique(&net, &loads, 0, 3, 0.1, 1.0, &mut r);
            assert_eq!(net.distance(hop, 3), net.distance(0, 3) - 1);
        }
    }

    #[test]
    fn zhang_line_path_sum() {
        // a=0, b=1, c=2, d=3
        let net = Network::from_edges(4, &[(0, 1), (1, 2), (2, 3)], None).unwrap();
        let loads = vec![0u32, 4, 2, 7];
        let oracle: f64 = [1usize, 2]
            .iter()
            .map(|&s| f64::from(loads[s]) / (1.0 + 0.0 * net.degree(s) as f64))
            .sum();
        assert_eq!(oracle, 6.0);
        assert_eq!(zhang_cost(&net, &loads, 1, 3, 0.0), 6.0);
        assert_eq!(route_zhang(&net, &loads, 0, 3, 0.0, &mut rng(5)), 1);
    }

    #[test]
    fn zhang_picks_destination_when_adjacent() {
        // 0 touches both the destination 3 and node 1; 1 is loaded.
        let net = Network::from_edges(4, &[(0, 1), (0, 3), (1, 3), (1, 2)], None).unwrap();
        let loads = vec![0u32, 3, 0, 9];
        assert_eq!(zhang_cost(&net, &loads, 3, 3, 0.1), 0.0);
        assert_eq!(route_zhang(&net, &loads, 0, 3, 0.1, &mut rng(6)), 3);
    }

    #[test]
    fn zhang_empty_queues_follow_shortest_paths() {
        let net = Network::from_edges(5, &[(0, 1), (1, 2), (2, 3), (0, 4), (4, 3), (4, 2)], None)
            .unwrap();
        let loads = vec![0u32; 5];
        let mut r = rng(7);
        for at in 0..5 {
            for dest in (0..5).filter(|&d| d != at) {
                let hop = route_zhang(&net, &loads, at, dest, 0.2, &mut r);
                assert_eq!(net.distance(hop, dest) + 1, net.distance(at, dest));
            }
        }
    }

    #[test]
    fn liu_to_adjacent_destination() {
        let net = echenique_fixture();
        assert_eq!(route_liu(&net, 1, 3, &mut rng(8)), 3);
    }

    #[test]
    #[should_panic]
    fn routing_at_destination_panics() {
        let net = echenique_fixture();
        route_liu(&net, 3, 3, &mut rng(9));
    }

    #[test]
    fn integer_creation_rate() {
        let net = Network::from_edges(4, &[(0, 1), (0, 2), (0, 3)], None).unwrap();
        let mut state = SimState::new(4, 1);
        assert_eq!(state.create_packets(&net, 0.0), 0);
        assert_eq!(state.create_packets(&net, 1.0), 6);
        assert_eq!(state.queue_len(0), 3);
        for v in 0..4 {
            assert!(state.queue(v).iter().all(|p| p.destination as usize != v));
        }
    }

    #[test]
    fn idle_step_only_advances_clock() {
        let net = echenique_fixture();
        let cfg = SimConfig {
            lambda: 0.0,
            ..small_cfg(&net, Strategy::Liu)
        };
        let mut state = SimState::new(5, 1);
        let stats = state.step(&net, &cfg);
        assert_eq!(stats, StepStats::default());
        assert_eq!(state.clock(), 1);
    }

    #[test]
    fn pure_drain_decreases_strictly() {
        let net = crate::graph::generate_scale_free(60, 2, 3).unwrap();
        let cfg = SimConfig {
            lambda: 0.0,
            beta: 5.0,
            ..small_cfg(&net, Strategy::Liu)
        };
        let mut state = SimState::new(60, 2);
        state.create_packets(&net, 0.5);
        let mut queued = state.total_queued();
        assert!(queued > 0);
        while queued > 0 {
            let stats = state.step(&net, &cfg);
            assert!(stats.queued < queued);
            queued = stats.queued;
        }
    }

    #[test]
    fn zero_lambda_run_is_all_zero() {
        let cfg = SimConfig {
            lambda: 0.0,
            n_nodes: 50,
            steps: 300,
            warmup: 100,
            ..SimConfig::default()
        };
        let series = run(&cfg).unwrap();
        assert_eq!(series.len(), 200);
        assert!(series.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn run_on_checks_network_size() {
        let net = crate::graph::generate_scale_free(30, 2, 1).unwrap();
        assert!(run_on(&net, &SimConfig::default()).is_err());
    }
}
