use std::fmt::Write as _;

use super::scripts::check_name;
use super::DeployError;
use crate::trace::{DelayTrace, Indexing, LossTrace};

/// Map names declared by the data-plane programs.
pub const DELAY_MAP_NAME: &str = "delay_map";
pub const LOSS_MAP_NAME: &str = "loss_map";

/// Renders a 32-bit value as four space-separated decimal bytes, least
/// significant first, the way `bpftool map update` takes keys and values.
pub fn encode_u32_le(value: u32) -> String {
    let [a, b, c, d] = value.to_le_bytes();
    format!("{a} {b} {c} {d}")
}

pub fn decode_u32_le(bytes: &str) -> Result<u32, DeployError> {
    let malformed = || DeployError::MalformedBytes(bytes.to_owned());
    let parts: Vec<u8> = bytes
        .split_whitespace()
        .map(|b| b.parse::<u8>().map_err(|_| malformed()))
        .collect::<Result<_, _>>()?;
    let array: [u8; 4] = parts.try_into().map_err(|_| malformed())?;
    Ok(u32::from_le_bytes(array))
}

/// Contents of one `BPF_MAP_TYPE_ARRAY` with `u32` keys and values.
///
/// Keys are always `0..len`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapImage {
    name: String,
    values: Vec<u32>,
}

impl MapImage {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn values(&self) -> &[u32] {
        &self.values
    }

    pub fn trace_len(&self) -> usize {
        self.values.len()
    }

    pub fn entries(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.values.iter().enumerate().map(|(k, &v)| (k as u32, v))
    }

    /// `(key bytes, value bytes)` per entry, in key order.
    pub fn encoded(&self) -> impl Iterator<Item = (String, String)> + '_ {
        self.entries()
            .map(|(k, v)| (encode_u32_le(k), encode_u32_le(v)))
    }

    /// Delay map in send order, nanosecond values.
    pub fn delay(delays: &DelayTrace) -> Result<Self, DeployError> {
        encode_map_entries(DELAY_MAP_NAME, delays.delays())
    }

    /// Loss map; only arrival-ordered flags are accepted because the
    /// receiver indexes packets as they arrive.
    pub fn loss(loss: &LossTrace) -> Result<Self, DeployError> {
        loss.expect_indexing(Indexing::ArrivalOrder)?;
        let flags: Vec<u64> = loss.flags().iter().map(|&f| f as u64).collect();
        encode_map_entries(LOSS_MAP_NAME, &flags)
    }
}

pub fn encode_map_entries(name: &str, values: &[u64]) -> Result<MapImage, DeployError> {
    if values.len() > u32::MAX as usize + 1 {
        return Err(DeployError::KeyOverflow(values.len()));
    }
    let values = values
        .iter()
        .enumerate()
        .map(|(key, &value)| {
            u32::try_from(value).map_err(|_| DeployError::ValueOverflow { key, value })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(MapImage {
        name: name.to_owned(),
        values,
    })
}

/// How the script finds the map to update.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MapTarget {
    Id(u32),
    /// Looked up with `bpftool map show name` when the script runs.
    Name(String),
}

/// A population script, plus the command file it feeds to `bpftool batch`
/// when batching was requested.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MapCommands {
    pub script: String,
    pub batch_file: Option<String>,
}

impl MapCommands {
    /// File name the script expects the batch file under, next to itself.
    pub fn batch_file_name(image: &MapImage) -> String {
        format!("{}.batch", image.name())
    }
}

const MAP_ID_VAR: &str = "$map_id";
/// Placeholder in name-targeted batch files, substituted when the script runs.
const MAP_ID_PLACEHOLDER: &str = "{map_id}";

fn resolve_lines(name: &str) -> String {
    format!(
        "map_id=$(sudo bpftool map show name {name} | sed -n '1s/:.*//p')\n\
         if [ -z \"$map_id\" ]; then\n\
         \techo \"map {name} not loaded\" >&2\n\
         \texit 1\n\
         fi\n"
    )
}

/// Writes `bpftool` commands that load `image` into a live map.
///
/// Without batching there is one `sudo bpftool map update` line per entry,
/// in key order. With batching the same commands go into a batch file (one
/// per line, without the leading `bpftool`) and the script runs
/// `bpftool batch file` once.
pub fn emit_map_commands(
    image: &MapImage,
    target: &MapTarget,
    batch: bool,
) -> Result<MapCommands, DeployError> {
    if image.values.is_empty() {
        return Err(DeployError::EmptyImage);
    }
    let mut script = String::from("#!/bin/sh\nset -e\n");
    let id = match target {
        MapTarget::Id(id) => id.to_string(),
        MapTarget::Name(name) => {
            check_name("map name", name)?;
            script.push_str(&resolve_lines(name));
            if batch {
                MAP_ID_PLACEHOLDER.to_owned()
            } else {
                MAP_ID_VAR.to_owned()
            }
        }
    };

    let mut commands = String::new();
    for (key, value) in image.encoded() {
        writeln!(commands, "map update id {id} key {key} value {value}").unwrap();
    }

    if !batch {
        for line in commands.lines() {
            writeln!(script, "sudo bpftool {line}").unwrap();
        }
        return Ok(MapCommands {
            script,
            batch_file: None,
        });
    }

    let file = MapCommands::batch_file_name(image);
    match target {
        MapTarget::Id(_) => {
            writeln!(script, "sudo bpftool batch file \"$(dirname \"$0\")/{file}\"").unwrap()
        }
        MapTarget::Name(_) => writeln!(
            script,
            "sed \"s/{MAP_ID_PLACEHOLDER}/$map_id/\" \"$(dirname \"$0\")/{file}\" | sudo bpftool batch file -"
        )
        .unwrap(),
    }
    Ok(MapCommands {
        script,
        batch_file: Some(commands),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    // Repeated division by 256, independent of to_le_bytes.
    fn base256_oracle(mut v: u64) -> String {
        let mut bytes = Vec::new();
        for _ in 0..4 {
            bytes.push((v % 256).to_string());
            v /= 256;
        }
        bytes.join(" ")
    }

    #[test]
    fn encodes_little_endian_decimal_bytes() {
        assert_eq!(encode_u32_le(0), "0 0 0 0");
        assert_eq!(0x02FA_F080, 50_000_000);
        assert_eq!(base256_oracle(50_000_000), "128 240 250 2");
        assert_eq!(encode_u32_le(50_000_000), "128 240 250 2");
        assert_eq!(encode_u32_le(7), base256_oracle(7));
        assert_eq!(encode_u32_le(7), "7 0 0 0");
    }

    #[test]
    fn boundary_values_round_trip() {
        for v in [0u32, 1, 255, 256, u32::MAX] {
            assert_eq!(encode_u32_le(v), base256_oracle(v as u64));
            assert_eq!(decode_u32_le(&encode_u32_le(v)).unwrap(), v);
        }
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_u32_le("1 2 3").is_err());
        assert!(decode_u32_le("1 2 3 256").is_err());
        assert!(decode_u32_le("a b c d").is_err());
    }

    #[test]
    fn overflow_is_reported_with_key() {
        assert_eq!(
            encode_map_entries("m", &[1, 1 << 32]),
            Err(DeployError::ValueOverflow {
                key: 1,
                value: 1 << 32
            })
        );
    }

    #[test]
    fn loss_map_requires_arrival_order() {
        let send = LossTrace::new(vec![0, 1], Indexing::SendOrder).unwrap();
        assert!(matches!(MapImage::loss(&send), Err(DeployError::Trace(_))));
        let arrival = LossTrace::new(vec![0, 1], Indexing::ArrivalOrder).unwrap();
        let img = MapImage::loss(&arrival).unwrap();
        assert_eq!(img.name(), LOSS_MAP_NAME);
        assert_eq!(img.values(), &[0, 1]);
    }

    #[test]
    fn single_entry_by_id() {
        let img = encode_map_entries(DELAY_MAP_NAME, &[50_000_000]).unwrap();
        let cmds = emit_map_commands(&img, &MapTarget::Id(42), false).unwrap();
        assert_eq!(
            cmds.script,
            "#!/bin/sh\nset -e\nsudo bpftool map update id 42 key 0 0 0 0 value 128 240 250 2\n"
        );
        assert!(cmds.batch_file.is_none());
    }

    #[test]
    fn lines_follow_key_order() {
        let img = encode_map_entries("m", &[5, 6, 7]).unwrap();
        let cmds = emit_map_commands(&img, &MapTarget::Id(1), false).unwrap();
        let updates: Vec<&str> = cmds
            .script
            .lines()
            .filter(|l| l.starts_with("sudo bpftool map update"))
            .collect();
        assert_eq!(
            updates,
            vec![
                "sudo bpftool map update id 1 key 0 0 0 0 value 5 0 0 0",
                "sudo bpftool map update id 1 key 1 0 0 0 value 6 0 0 0",
                "sudo bpftool map update id 1 key 2 0 0 0 value 7 0 0 0",
            ]
        );
    }

    #[test]
    fn name_target_resolves_first() {
        let img = encode_map_entries(DELAY_MAP_NAME, &[1]).unwrap();
        let cmds = emit_map_commands(&img, &MapTarget::Name(DELAY_MAP_NAME.into()), false).unwrap();
        let lines: Vec<&str> = cmds.script.lines().collect();
        assert_eq!(
            lines[2],
            "map_id=$(sudo bpftool map show name delay_map | sed -n '1s/:.*//p')"
        );
        assert_eq!(
            *lines.last().unwrap(),
            "sudo bpftool map update id $map_id key 0 0 0 0 value 1 0 0 0"
        );
    }

    #[test]
    fn batch_mode_moves_commands_to_file() {
        let img = encode_map_entries(LOSS_MAP_NAME, &[0, 1]).unwrap();
        let cmds = emit_map_commands(&img, &MapTarget::Id(9), true).unwrap();
        assert_eq!(
            cmds.batch_file.as_deref(),
            Some("map update id 9 key 0 0 0 0 value 0 0 0 0\nmap update id 9 key 1 0 0 0 value 1 0 0 0\n")
        );
        assert!(cmds
            .script
            .ends_with("sudo bpftool batch file \"$(dirname \"$0\")/loss_map.batch\"\n"));

        let named = emit_map_commands(&img, &MapTarget::Name("loss_map".into()), true).unwrap();
        assert!(named
            .batch_file
            .unwrap()
            .starts_with("map update id {map_id} key"));
        assert!(named.script.contains("| sudo bpftool batch file -"));
    }

    #[test]
    fn empty_image_and_unsafe_name_rejected() {
        let empty = encode_map_entries("m", &[]).unwrap();
        assert_eq!(
            emit_map_commands(&empty, &MapTarget::Id(1), false),
            Err(DeployError::EmptyImage)
        );
        let img = encode_map_entries("m", &[1]).unwrap();
        assert!(matches!(
            emit_map_commands(&img, &MapTarget::Name("x; rm -rf /".into()), false),
            Err(DeployError::UnsafeName { .. })
        ));
    }

    proptest! {
        #[test]
        fn encoding_is_bijective(v in any::<u32>()) {
            prop_assert_eq!(decode_u32_le(&encode_u32_le(v)).unwrap(), v);
            prop_assert_eq!(encode_u32_le(v), base256_oracle(v as u64));
        }

        #[test]
        fn image_has_contiguous_keys(values in proptest::collection::vec(any::<u32>(), 1..200)) {
            let wide: Vec<u64> = values.iter().map(|&v| v as u64).collect();
            let img = encode_map_entries("m", &wide).unwrap();
            prop_assert_eq!(img.trace_len(), values.len());
            for (k, (key, value)) in img.entries().enumerate() {
                prop_assert_eq!(key as usize, k);
                prop_assert_eq!(value, values[k]);
            }
        }
    }
}
