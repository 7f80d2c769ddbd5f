//! Regenerates `data/amazon-like.edges`.
//!
//! cargo run -p tcache --example gen_amazon_like > crates/core/data/amazon-like.edges
//!
//! Optional arguments override the generator parameters in order:
//! communities, min_size, max_size, p_in, links_per_community, seed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tcache::workload::graph::{clustered_graph, ClusteredParams};

fn main() -> std::io::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let arg = |i: usize| args.get(i).map(String::as_str);
    let mut p = ClusteredParams::default();
    if let Some(v) = arg(0) {
        p.communities = v.parse().expect("communities");
    }
    if let Some(v) = arg(1) {
        p.min_size = v.parse().expect("min_size");
    }
    if let Some(v) = arg(2) {
        p.max_size = v.parse().expect("max_size");
    }
    if let Some(v) = arg(3) {
        p.p_in = v.parse().expect("p_in");
    }
    if let Some(v) = arg(4) {
        p.links_per_community = v.parse().expect("links_per_community");
    }
    let seed = arg(5).map_or(20_111, |v| v.parse().expect("seed"));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = clustered_graph(p, &mut rng);
    eprintln!(
        "nodes {} edges {} clustering {:.3}",
        g.node_count(),
        g.edge_count(),
        g.average_clustering()
    );
    g.write_edge_list(std::io::stdout().lock())
}
