//! Prints the four-arm replication table.
//!
//! `cargo run --release --example table1 -- [replicates] [seed]`

use pairwise_closure::design::{disjunctive_power, lfc};
use pairwise_closure::sim::{table1_report, Table1Options};
use pairwise_closure::TrialConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let mut opts = Table1Options::default();
    if let Some(r) = args.next() {
        opts.replicates = r.parse()?;
    }
    if let Some(s) = args.next() {
        opts.seed = s.parse()?;
    }
    let report = table1_report(&opts)?;
    print!("{report}");

    let cfg = TrialConfig::equal(4, 1.0, opts.n_per_arm, pairwise_closure::Sided::TwoSided)?;
    let at_given = disjunctive_power(&cfg, &lfc(4, 0.3743)?, opts.alpha, None, opts.seed)?;
    println!("\nLFC power with delta/sigma = 0.3743 at n = {}: {:.4}", opts.n_per_arm, at_given.disjunctive);
    Ok(())
}
