use std::fmt;
use std::str::FromStr;

use super::DeployError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    /// Runs the traffic-control egress delay program.
    Sender,
    /// Runs the XDP drop program.
    Receiver,
}

impl FromStr for Role {
    type Err = DeployError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sender" => Ok(Role::Sender),
            "receiver" => Ok(Role::Receiver),
            _ => Err(DeployError::InvalidRole(s.to_owned())),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Role::Sender => "sender",
            Role::Receiver => "receiver",
        })
    }
}

/// An ordered list of shell commands for one host.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DeployScript {
    pub role: Role,
    pub device: String,
    /// Comment lines (e.g. the compile step) shown before the commands.
    pub notes: Vec<String>,
    pub lines: Vec<String>,
}

impl DeployScript {
    /// POSIX sh text: shebang, notes as comments, then the commands.
    pub fn render(&self) -> String {
        let mut out = String::from("#!/bin/sh\nset -e\n");
        for note in &self.notes {
            out.push_str("# ");
            out.push_str(note);
            out.push('\n');
        }
        for line in &self.lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }
}

/// Rejects anything that would need quoting in a shell word.
pub(crate) fn check_name(what: &'static str, value: &str) -> Result<(), DeployError> {
    let ok = !value.is_empty()
        && !value.starts_with('-')
        && value
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || "._-/+@:".contains(c));
    if ok {
        Ok(())
    } else {
        Err(DeployError::UnsafeName {
            what,
            value: value.to_owned(),
        })
    }
}

fn compile_note(object_file: &str) -> Option<String> {
    let source = object_file.strip_suffix(".o")?;
    Some(format!(
        "clang -O2 -g -target bpf -c {source}.c -o {object_file}"
    ))
}

/// Attach commands for one side of the emulated link.
///
/// The sender gets a `clsact` qdisc, the delay program as a direct-action
/// egress filter, and `fq` as root qdisc so departure timestamps are
/// honoured. The receiver gets the drop program in generic XDP mode.
pub fn emit_deploy_script(
    role: Role,
    device: &str,
    object_file: &str,
    section: &str,
) -> Result<DeployScript, DeployError> {
    check_name("device", device)?;
    check_name("object file", object_file)?;
    check_name("section", section)?;
    let lines = match role {
        Role::Sender => vec![
            format!("sudo tc qdisc add dev {device} clsact"),
            format!(
                "sudo tc filter add dev {device} egress bpf direct-action obj {object_file} sec {section}"
            ),
            format!("sudo tc qdisc add dev {device} root fq"),
        ],
        Role::Receiver => vec![format!(
            "sudo ip link set dev {device} xdpgeneric obj {object_file} sec {section}"
        )],
    };
    Ok(DeployScript {
        role,
        device: device.to_owned(),
        notes: compile_note(object_file).into_iter().collect(),
        lines,
    })
}

/// Undoes [`emit_deploy_script`]. Every command tolerates the thing it
/// removes being absent already.
pub fn emit_teardown_script(role: Role, device: &str) -> Result<DeployScript, DeployError> {
    check_name("device", device)?;
    let lines = match role {
        Role::Sender => vec![
            format!("sudo tc qdisc del dev {device} root 2>/dev/null || true"),
            format!("sudo tc qdisc del dev {device} clsact 2>/dev/null || true"),
        ],
        Role::Receiver => vec![format!(
            "sudo ip link set dev {device} xdpgeneric off 2>/dev/null || true"
        )],
    };
    Ok(DeployScript {
        role,
        device: device.to_owned(),
        notes: Vec::new(),
        lines,
    })
}
