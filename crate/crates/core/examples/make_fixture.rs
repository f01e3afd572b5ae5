//! Writes the synthetic highD fixture recording.
//!
//! `cargo run -p lanechange-core --example make_fixture -- <dir> [recording id]`

use std::path::PathBuf;

fn main() {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixtures/highd".into()));
    let id = args.next().map_or(1, |s| s.parse().expect("recording id"));
    let fx = lanechange_core::synthetic::fixture(id);
    for p in fx.write_to(&dir).expect("write fixture") {
        println!("{}", p.display());
    }
}
