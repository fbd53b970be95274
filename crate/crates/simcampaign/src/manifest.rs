//! Manifest file parsing, serialization and filesystem-aware validation.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use simcampaign_core::manifest::{self, KNOWN_FIELDS, NODE_PROFILE_FIELDS, REQUIRED_FIELDS};
use simcampaign_core::{Manifest, Violation};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("missing required field `{0}`")]
    MissingField(&'static str),
    #[error("type error at line {line}, column {column}: {message}")]
    Type {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("cannot read manifest {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Parses a JSON manifest document, filling absent optional fields with
/// their defaults.
///
/// Unknown keys do not fail the parse; they are kept in
/// `Manifest::unknown_fields` and reported by [`validate`].
pub fn parse_manifest(document: &str) -> Result<Manifest, ManifestError> {
    let value: Value = serde_json::from_str(document).map_err(|e| ManifestError::Syntax {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    let Value::Object(obj) = &value else {
        return Err(ManifestError::Type {
            line: 1,
            column: 1,
            message: String::from("manifest must be a JSON object"),
        });
    };
    for field in REQUIRED_FIELDS {
        if !obj.contains_key(*field) {
            return Err(ManifestError::MissingField(field));
        }
    }

    let mut m: Manifest = serde_json::from_str(document).map_err(|e| ManifestError::Type {
        line: e.line(),
        column: e.column(),
        message: strip_position(&e),
    })?;
    m.unknown_fields = unknown_fields(obj);
    Ok(m)
}

fn unknown_fields(obj: &Map<String, Value>) -> Vec<String> {
    let mut out: Vec<String> = obj
        .keys()
        .filter(|k| !KNOWN_FIELDS.contains(&k.as_str()))
        .cloned()
        .collect();
    if let Some(Value::Object(profile)) = obj.get("node_profile") {
        out.extend(
            profile
                .keys()
                .filter(|k| !NODE_PROFILE_FIELDS.contains(&k.as_str()))
                .map(|k| format!("node_profile.{k}")),
        );
    }
    out
}

/// serde_json appends " at line X column Y"; the variants carry those.
fn strip_position(e: &serde_json::Error) -> String {
    let s = e.to_string();
    match s.rfind(" at line ") {
        Some(at) => s[..at].to_string(),
        None => s,
    }
}

/// Pretty JSON with every field spelled out.
pub fn serialize_manifest(m: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(m).expect("manifest serializes");
    s.push('\n');
    s
}

/// Reads and parses `path`, resolving relative `template_dir` and
/// `output_dir` against the manifest's own directory.
pub fn load_manifest(path: &Path) -> Result<Manifest, ManifestError> {
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut m = parse_manifest(&text)?;
    let base = path
        .parent()
        .map(|p| {
            if p.as_os_str().is_empty() {
                Path::new(".")
            } else {
                p
            }
        })
        .unwrap_or(Path::new("."));
    let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
    m.template_dir = resolve(&base, &m.template_dir);
    m.output_dir = resolve(&base, &m.output_dir);
    Ok(m)
}

fn resolve(base: &Path, p: &str) -> String {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_string_lossy().into_owned()
    } else {
        base.join(p).to_string_lossy().into_owned()
    }
}

/// Every invariant violation, plus missing template paths when `check_fs`.
pub fn validate(m: &Manifest, check_fs: bool) -> Vec<Violation> {
    let mut out = manifest::validate(m);
    if check_fs {
        let template = Path::new(&m.template_dir);
        if !template.is_dir() {
            out.push(Violation::MissingPath {
                field: "template_dir",
                path: m.template_dir.clone(),
            });
        } else if !template.join(&m.world_file).is_file() {
            out.push(Violation::MissingPath {
                field: "world_file",
                path: template.join(&m.world_file).to_string_lossy().into_owned(),
            });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use simcampaign_core::{Mode, NodeProfile};

    const REFERENCE_CLUSTER: &str = r#"{
        "campaign_name": "highway",
        "template_dir": "/srv/template",
        "world_file": "worlds/merge.wbt",
        "total_runs": 2304,
        "nodes": 6,
        "slots_per_node": 8,
        "output_dir": "/srv/out"
    }"#;

    #[test]
    fn reference_cluster_manifest_has_48_per_job() {
        let m = parse_manifest(REFERENCE_CLUSTER).unwrap();
        assert_eq!(m.instances_per_job(), 48);
        assert!(validate(&m, false).is_empty());
    }

    #[test]
    fn defaults_are_injected() {
        let m = parse_manifest(REFERENCE_CLUSTER).unwrap();
        assert_eq!(m.base_port, 8873);
        assert_eq!(m.port_stride, 7);
        assert_eq!(m.display_start, 99);
        assert_eq!(m.walltime_minutes, 15);
        assert_eq!(m.mode, Mode::Headless);
        assert_eq!(
            m.node_profile,
            NodeProfile {
                cores: 40,
                ram_gb: 744,
                scratch_gb: 1843,
                gpus: 2
            }
        );
        assert_eq!(m, parse_manifest(REFERENCE_CLUSTER).unwrap());
    }

    #[test]
    fn missing_total_runs_is_named() {
        let doc = REFERENCE_CLUSTER.replace("\"total_runs\": 2304,", "");
        let err = parse_manifest(&doc).unwrap_err();
        assert!(
            matches!(err, ManifestError::MissingField("total_runs")),
            "{err}"
        );
        assert_eq!(err.to_string(), "missing required field `total_runs`");
    }

    #[test]
    fn syntax_error_has_position() {
        let err = parse_manifest("{\n  \"campaign_name\": \"x\",\n  oops\n}").unwrap_err();
        match err {
            ManifestError::Syntax { line, column, .. } => {
                assert_eq!(line, 3);
                assert_eq!(column, 3);
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn wrong_kind_is_type_error() {
        let doc = REFERENCE_CLUSTER.replace("\"nodes\": 6", "\"nodes\": \"six\"");
        let err = parse_manifest(&doc).unwrap_err();
        match err {
            ManifestError::Type { line, message, .. } => {
                assert_eq!(line, 6);
                assert!(message.contains("invalid type"), "{message}");
            }
            other => panic!("{other}"),
        }
        let err = parse_manifest("[1, 2]").unwrap_err();
        assert!(matches!(err, ManifestError::Type { .. }));
        let doc = REFERENCE_CLUSTER.replace("\"nodes\": 6", "\"base_port\": 70000");
        assert!(matches!(
            parse_manifest(&doc).unwrap_err(),
            ManifestError::Type { .. }
        ));
    }

    #[test]
    fn unknown_fields_become_violations() {
        let doc = REFERENCE_CLUSTER.replace(
            "\"nodes\": 6,",
            "\"nodes\": 6, \"colour\": 1, \"node_profile\": {\"cores\": 8, \"tpu\": 1},",
        );
        let m = parse_manifest(&doc).unwrap();
        assert_eq!(m.node_profile.cores, 8);
        assert_eq!(m.node_profile.ram_gb, 744);
        assert_eq!(
            validate(&m, false),
            [
                Violation::UnknownField("colour".into()),
                Violation::UnknownField("node_profile.tpu".into()),
            ]
        );
    }

    #[test]
    fn filesystem_check() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = parse_manifest(REFERENCE_CLUSTER).unwrap();
        m.template_dir = dir.path().join("nope").to_string_lossy().into_owned();
        assert!(matches!(
            validate(&m, true)[..],
            [Violation::MissingPath {
                field: "template_dir",
                ..
            }]
        ));
        m.template_dir = dir.path().to_string_lossy().into_owned();
        assert!(matches!(
            validate(&m, true)[..],
            [Violation::MissingPath {
                field: "world_file",
                ..
            }]
        ));
        std::fs::create_dir_all(dir.path().join("worlds")).unwrap();
        std::fs::write(dir.path().join("worlds/merge.wbt"), "port 8873\n").unwrap();
        assert!(validate(&m, true).is_empty());
        assert!(validate(&m, false).is_empty());
    }

    #[test]
    fn relative_paths_resolve_against_manifest_dir() {
        let dir = tempfile::tempdir().unwrap();
        let doc = REFERENCE_CLUSTER
            .replace("/srv/template", "template")
            .replace("/srv/out", "out");
        let path = dir.path().join("m.json");
        std::fs::write(&path, doc).unwrap();
        let m = load_manifest(&path).unwrap();
        assert_eq!(Path::new(&m.template_dir), dir.path().join("template"));
        assert_eq!(Path::new(&m.output_dir), dir.path().join("out"));
    }
}
