// Imports an irtt JSON result, reports what was filled in, and writes the
// canonical `index,delay_ns` file.
//
//   cargo run --example ingest_irtt [irtt.json]

use std::error::Error;
use std::fs;

use satemu::ingest::{parse_irtt, read_canonical, write_canonical};
use satemu::trace::validate;

const SAMPLE: &str = r#"{
  "config": {"params": {"interval": 10000000}},
  "round_trips": [
    {"seqno": 0, "lost": "false", "delay": {"rtt": 48211000}},
    {"seqno": 1, "lost": "false", "delay": {"rtt": 47902000}},
    {"seqno": 2, "lost": "true_down", "delay": {}},
    {"seqno": 4, "lost": "false", "delay": {"rtt": 31240000}},
    {"seqno": 4, "lost": "false", "delay": {"rtt": 99000000}},
    {"seqno": 5, "lost": "true"}
  ]
}"#;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let document = match std::env::args().nth(1) {
        Some(path) => fs::read_to_string(path)?,
        None => SAMPLE.to_string(),
    };
    let import = parse_irtt(&document, None)?;
    let raw = &import.trace;
    println!("{} packets every {} ns", raw.len(), raw.send_interval_ns());
    println!(
        "missing seqnos {:?}, duplicates {:?}",
        import.missing_seqs, import.duplicate_seqs
    );
    println!("loss markers {:?}", import.loss_markers);

    let diag = validate(raw);
    println!(
        "{} losses, max delay {:?} ns, fits kernel map: {}",
        diag.losses, diag.max_delay_ns, diag.fits_u32
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("trace.csv");
    write_canonical(raw, &path)?;
    print!("{}", fs::read_to_string(&path)?);
    assert_eq!(&read_canonical(&path, raw.send_interval_ns())?, raw);
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
