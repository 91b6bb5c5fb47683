//! Soft throughput floor for the S-only sweep.

use std::time::Instant;

use rwre_core::lattice::{sweep_with, FunctionalSet, Site, DEFAULT_MEMORY_CAP};
use rwre_core::{EnvironmentSpec, WeightOracle};

fn cells_per_second(spec: &str, want: FunctionalSet) -> f64 {
    let env = WeightOracle::new(spec.parse::<EnvironmentSpec>().unwrap(), 1);
    let (w, h) = (200_000u64, 19u64);
    let mut sink = 0.0;
    let t0 = Instant::now();
    sweep_with(&env, Site::ORIGIN, w, h, want, DEFAULT_MEMORY_CAP, |c| {
        if c.site.x2 == h as i64 {
            sink += c.s;
        }
    })
    .unwrap();
    let secs = t0.elapsed().as_secs_f64();
    assert!(sink.is_finite());
    ((w + 1) * (h + 1)) as f64 / secs
}

#[test]
fn sweep_throughput_meets_the_floor() {
    for spec in ["beta:1,1", "dirichlet:1,1,1,1", "logpareto:3,1"] {
        for (label, want) in [("S", FunctionalSet::S_ONLY), ("S,G,L", FunctionalSet::ALL)] {
            let rate = cells_per_second(spec, want);
            println!("{spec} [{label}]: {rate:.3e} cells/s");
            if rate < 1e7 {
                eprintln!("warning: {spec} [{label}] below 1e7 cells/s");
            }
            assert!(rate >= 1e6, "{spec} [{label}]: {rate:.3e} cells/s");
        }
    }
}
