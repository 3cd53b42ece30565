//! Times `quotient` on random automata of growing size.

use std::time::Instant;
use weakbisim::decide::quotient;
use weakbisim::harness::{gen_pa, GenConfig};
use weakbisim::Options;

fn main() {
    for n in [10usize, 20, 40] {
        for seed in 0..3 {
            let cfg = GenConfig {
                seed,
                min_states: n,
                max_states: n,
                min_transitions: 2 * n,
                max_transitions: 2 * n,
                ..GenConfig::default()
            };
            let a = gen_pa(&cfg);
            let b = gen_pa(&GenConfig {
                seed: seed + 100,
                ..cfg
            });
            let t = Instant::now();
            let q = quotient(&a, &b, &Options::default()).unwrap();
            println!(
                "n={n} seed={seed} blocks={} splits={} {:?}",
                q.partition.num_blocks(),
                q.trace.len(),
                t.elapsed()
            );
        }
    }
}
