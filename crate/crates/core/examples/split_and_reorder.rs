// Splits a raw trace into its delay and loss tables, moves the loss table
// into arrival order, and rebuilds the original trace from the pieces.
//
//   cargo run --example split_and_reorder

use std::error::Error;

use satemu::trace::{
    arrival_order, reconstruct, reorder_loss, restore_send_order, split_trace, RawTrace, LOST,
};

const MS: i64 = 1_000_000;
const INTERVAL_NS: u64 = 10_000_000;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    // packets 0 and 1 carry the slow floor and are overtaken by packet 2
    let raw = RawTrace::new(
        vec![LOST, 42 * MS, 20 * MS, LOST, LOST, 18 * MS],
        INTERVAL_NS,
    )?;

    let (delays, loss) = split_trace(&raw)?;
    println!("raw         {:?}", raw.entries());
    println!("delays      {:?}", delays.delays());
    println!("send loss   {:?}", loss.flags());

    let perm = arrival_order(&delays, INTERVAL_NS)?;
    let arrival = reorder_loss(&loss, &perm)?;
    println!("arrival     {:?}", perm.order());
    println!("arrival loss {:?}", arrival.flags());

    assert_eq!(restore_send_order(&arrival, &perm)?, loss);
    let rebuilt = reconstruct(&delays, &loss, INTERVAL_NS)?;
    assert_eq!(rebuilt, raw);
    println!("reconstructed trace matches");
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
