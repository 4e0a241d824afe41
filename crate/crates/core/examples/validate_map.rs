//! Loads a map and reports its size or the invariants it breaks.
//!
//! cargo run --example validate_map -- [map.json]

use failgen::network::load_network;

fn main() {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/maps/garage_small.json").into());
    match load_network(&path) {
        Ok(net) => println!(
            "{path}: {} nodes, {} lanes, {} decision points, {} walls, AV loop {:.1} m",
            net.nodes.len(),
            net.lanes.len(),
            net.decision_points.len(),
            net.obstacles.len(),
            net.av_loop_length()
        ),
        Err(e) => {
            println!("{path}: {e}");
            std::process::exit(1);
        }
    }
}
