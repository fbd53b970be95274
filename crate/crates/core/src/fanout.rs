//! Instance fan-out: port and display ladders, world-file port rewriting and
//! launch-command rendering.
//!
//! A campaign runs many copies of one simulation template side by side. Each
//! copy needs its own TraCI port (two servers cannot share one) and, in
//! headless mode, its own virtual display. Ports climb from `base_port` in
//! steps of `port_stride`; displays take the smallest free numbers from
//! `display_start` upwards.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::{Manifest, Mode, MAX_PORT};

/// Placeholder accepted anywhere in a world file in place of a `port` line.
pub const PORT_PLACEHOLDER: &str = "{{PORT}}";

pub const HEADLESS_TEMPLATE: &str =
    "xvfb-run -a -n {display} singularity exec {image} webots --batch --mode=fast {workdir}/{world_file}";
pub const GUI_TEMPLATE: &str = "singularity exec {image} webots {workdir}/{world_file}";

/// One fanned-out simulation instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstancePlan {
    pub instance_id: u32,
    pub port: u16,
    pub display: u32,
    /// Absolute path of this instance's private template copy.
    pub workdir: String,
    pub command: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LadderError {
    #[error("port ladder needs at least one port")]
    Empty,
    #[error("port stride must be at least 1 for more than one port")]
    ZeroStride,
    #[error("port ladder ends at {last}, past {MAX_PORT}")]
    RangeOverflow { last: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RewriteError {
    #[error("no port token (`port <n>` line or {PORT_PLACEHOLDER}) found")]
    TokenNotFound,
    #[error("{count} port tokens found, refusing an ambiguous rewrite")]
    MultipleTokens { count: usize },
    #[error("port token value {0:?} is not a valid port")]
    BadValue(String),
}

/// `n` ports starting at `base_port`, `stride` apart.
pub fn port_ladder(base_port: u16, stride: u32, n: u32) -> Result<Vec<u16>, LadderError> {
    if n == 0 {
        return Err(LadderError::Empty);
    }
    if stride == 0 && n > 1 {
        return Err(LadderError::ZeroStride);
    }
    let last = u64::from(base_port) + u64::from(stride) * u64::from(n - 1);
    if last > MAX_PORT {
        return Err(LadderError::RangeOverflow { last });
    }
    Ok((0..n)
        .map(|i| (u64::from(base_port) + u64::from(stride) * u64::from(i)) as u16)
        .collect())
}

/// The `n` smallest display numbers `>= start` that are not `occupied`.
pub fn display_ladder(start: u32, occupied: &BTreeSet<u32>, n: usize) -> Vec<u32> {
    (start..)
        .filter(|d| !occupied.contains(d))
        .take(n)
        .collect()
}

/// Directory name of instance `id` under the campaign output directory.
pub fn instance_dir_name(instance_id: u32) -> String {
    format!("instance_{instance_id:04}")
}

/// Byte ranges of the port value in every port token of `text`.
///
/// A token is either the `{{PORT}}` placeholder or the integer on a line
/// that reads `port <integer>` (leading and trailing blanks allowed).
fn port_tokens(text: &str) -> Vec<Range<usize>> {
    let mut found: Vec<Range<usize>> = text
        .match_indices(PORT_PLACEHOLDER)
        .map(|(at, s)| at..at + s.len())
        .collect();

    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        if let Some(digits) = port_line_digits(line) {
            found.push(offset + digits.start..offset + digits.end);
        }
        offset += line.len();
    }
    found.sort_by_key(|r| r.start);
    found
}

fn is_blank(c: char) -> bool {
    c == ' ' || c == '\t'
}

fn port_line_digits(line: &str) -> Option<Range<usize>> {
    let body = line.trim_end_matches(['\n', '\r']);
    let rest = body.trim_start_matches(is_blank);
    let rest = rest.strip_prefix("port")?;
    let after_kw = body.len() - rest.len();

    let value = rest.trim_start_matches(is_blank);
    if value.len() == rest.len() {
        return None;
    }
    let start = after_kw + (rest.len() - value.len());
    let digit_len = value.bytes().take_while(u8::is_ascii_digit).count();
    if digit_len == 0 || !value[digit_len..].chars().all(is_blank) {
        return None;
    }
    Some(start..start + digit_len)
}

fn single_token(text: &str) -> Result<Range<usize>, RewriteError> {
    let mut tokens = port_tokens(text);
    match tokens.len() {
        0 => Err(RewriteError::TokenNotFound),
        1 => Ok(tokens.remove(0)),
        count => Err(RewriteError::MultipleTokens { count }),
    }
}

/// Replaces the single port token in `world_text` with `port`.
pub fn rewrite_port(world_text: &str, port: u16) -> Result<String, RewriteError> {
    let span = single_token(world_text)?;
    let mut out = String::with_capacity(world_text.len() + 8);
    out.push_str(&world_text[..span.start]);
    out.push_str(&port.to_string());
    out.push_str(&world_text[span.end..]);
    Ok(out)
}

/// Reads back the port a world file's single token carries.
pub fn read_port(world_text: &str) -> Result<u16, RewriteError> {
    let span = single_token(world_text)?;
    let value = &world_text[span];
    value
        .parse::<u16>()
        .map_err(|_| RewriteError::BadValue(value.to_string()))
}

/// Ports for instances `0..n`: the per-job ladder, repeated for every job.
pub fn instance_ports(m: &Manifest, n: u32) -> Result<Vec<u16>, LadderError> {
    let per_job = m.instances_per_job().max(1);
    let width = u64::from(n).min(per_job) as u32;
    let ladder = port_ladder(m.base_port, m.port_stride, width)?;
    Ok((0..n)
        .map(|i| ladder[(u64::from(i) % per_job) as usize])
        .collect())
}

/// Plans `n` instances for `m` without touching the filesystem.
///
/// `workdir_of` maps an instance id to the absolute path of its copy.
pub fn plan_instances(
    m: &Manifest,
    n: u32,
    occupied_displays: &BTreeSet<u32>,
    workdir_of: impl Fn(u32) -> String,
) -> Result<Vec<InstancePlan>, LadderError> {
    let ports = instance_ports(m, n)?;
    let displays = display_ladder(m.display_start, occupied_displays, n as usize);
    Ok(ports
        .into_iter()
        .zip(displays)
        .enumerate()
        .map(|(i, (port, display))| {
            let mut plan = InstancePlan {
                instance_id: i as u32,
                port,
                display,
                workdir: workdir_of(i as u32),
                command: String::new(),
            };
            plan.command = render_command(&plan, m);
            plan
        })
        .collect())
}

/// Launch command line for `p`.
///
/// Uses `m.command_template` when set, otherwise the built-in template for
/// `m.mode`. Placeholders: `{image}`, `{workdir}`, `{world_file}`,
/// `{display}`, `{mode}` and `{instance_id}`; anything else in braces is
/// kept verbatim.
pub fn render_command(p: &InstancePlan, m: &Manifest) -> String {
    let template = match (&m.command_template, m.mode) {
        (Some(t), _) => t.as_str(),
        (None, Mode::Headless) => HEADLESS_TEMPLATE,
        (None, Mode::Gui) => GUI_TEMPLATE,
    };
    let workdir = p.workdir.trim_end_matches('/');
    substitute(template, |name| match name {
        "image" => Some(m.container_image.clone()),
        "workdir" => Some(workdir.to_string()),
        "world_file" => Some(m.world_file.clone()),
        "display" => Some(p.display.to_string()),
        "mode" => Some(m.mode.as_str().to_string()),
        "instance_id" => Some(p.instance_id.to_string()),
        _ => None,
    })
}

/// Single left-to-right pass, so substituted values are never rescanned.
fn substitute(template: &str, value_of: impl Fn(&str) -> Option<String>) -> String {
    let mut out = String::with_capacity(template.len() + 64);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let replaced = tail[1..].find('}').and_then(|close| {
            let name = &tail[1..1 + close];
            value_of(name).map(|v| (v, close + 2))
        });
        match replaced {
            Some((value, consumed)) => {
                out.push_str(&value);
                rest = &tail[consumed..];
            }
            None => {
                out.push('{');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    out
}
