// Produces everything needed to load a trace into the in-kernel programs:
// bpftool map payloads for both tables and attach/detach scripts.
//
//   cargo run --example kernel_artifacts

use std::error::Error;

use satemu::deploy::{
    emit_deploy_script, emit_map_commands, emit_teardown_script, MapImage, MapTarget, Role,
};
use satemu::trace::{arrival_order, reorder_loss, split_trace, RawTrace, LOST};

const MS: i64 = 1_000_000;
const INTERVAL_NS: u64 = 10_000_000;

pub fn run_example() -> Result<(), Box<dyn Error>> {
    let raw = RawTrace::new(vec![50 * MS, LOST, 60 * MS], INTERVAL_NS)?;
    let (delays, loss) = split_trace(&raw)?;
    let arrival = reorder_loss(&loss, &arrival_order(&delays, INTERVAL_NS)?)?;

    let delay_map = MapImage::delay(&delays)?;
    let loss_map = MapImage::loss(&arrival)?;
    for (key, value) in delay_map.encoded() {
        println!("{} key [{key}] value [{value}]", delay_map.name());
    }

    let by_id = emit_map_commands(&delay_map, &MapTarget::Id(42), false)?;
    print!("{}", by_id.script);
    let by_name = emit_map_commands(&loss_map, &MapTarget::Name(loss_map.name().into()), true)?;
    print!("{}", by_name.script);
    if let Some(batch) = &by_name.batch_file {
        print!("{batch}");
    }

    let sender = emit_deploy_script(Role::Sender, "enX1", "edt_delay_packet.o", "delay_ebpf")?;
    let receiver = emit_deploy_script(Role::Receiver, "enX1", "xdp_drop_packet.o", "loss_bpf")?;
    print!("{}{}", sender.render(), receiver.render());
    print!("{}", emit_teardown_script(Role::Sender, "enX1")?.render());
    Ok(())
}

fn main() -> Result<(), Box<dyn Error>> {
    run_example()
}
