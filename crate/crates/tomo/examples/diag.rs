use tomo::scenarios::{preset, scenario};
use tomo::swarm::run_broadcast;

fn main() {
    let name = std::env::args().nth(1).unwrap();
    let (topo, _) = scenario(&name).unwrap();
    let cfg = tomo::swarm::SwarmConfig { rng_seed: 12345, ..preset(&name).unwrap() };
    let ledger = run_broadcast(&topo, &cfg);
    eprintln!("nodes={} done", ledger.node_count());
}
