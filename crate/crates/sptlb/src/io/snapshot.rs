//! The snapshot file format: a `sptlb-snapshot v1` header line followed by a
//! TOML body whose fields mirror the domain types one to one. Human readable,
//! hand-authorable, and byte-stable for golden-file testing.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::evaluation::LatencyModel;
use crate::io::IoError;
use crate::model::{AppRecord, Snapshot, TierSpec};

pub const SNAPSHOT_HEADER: &str = "sptlb-snapshot v1";

#[derive(Serialize, Deserialize)]
struct SnapshotFile {
    tiers: Vec<TierSpec>,
    apps: Vec<AppRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    latency_model: Option<LatencyModel>,
}

/// Parses snapshot text. Returns the validated snapshot plus any non-fatal
/// warnings (apps whose SLO their current tier does not support, unless
/// `strict`).
pub fn parse_snapshot(text: &str, strict: bool) -> Result<(Snapshot, Vec<String>), IoError> {
    let (first, body) = text.split_once('\n').unwrap_or((text, ""));
    if first.trim() != SNAPSHOT_HEADER {
        return Err(IoError::BadHeader {
            expected: SNAPSHOT_HEADER.to_string(),
            found: first.trim().to_string(),
        });
    }
    let file: SnapshotFile = toml::from_str(body)?;
    let (snapshot, warnings) = Snapshot::new(file.tiers, file.apps, file.latency_model, strict)?;
    Ok((snapshot, warnings))
}

pub fn load_snapshot(
    path: impl AsRef<Path>,
    strict: bool,
) -> Result<(Snapshot, Vec<String>), IoError> {
    parse_snapshot(&crate::io::read_file(path)?, strict)
}

pub fn snapshot_to_string(snapshot: &Snapshot) -> Result<String, IoError> {
    let file = SnapshotFile {
        tiers: snapshot.tiers().to_vec(),
        apps: snapshot.apps().to_vec(),
        latency_model: snapshot.latency_model.clone(),
    };
    Ok(format!("{SNAPSHOT_HEADER}\n{}", toml::to_string_pretty(&file)?))
}

pub fn write_snapshot(path: impl AsRef<Path>, snapshot: &Snapshot) -> Result<(), IoError> {
    crate::io::write_file(path, &snapshot_to_string(snapshot)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"sptlb-snapshot v1
[[tiers]]
tier_id = "t1"
cpu_capacity = 100.0
mem_capacity = 100.0
task_limit = 50
util_target_cpu = 0.7
util_target_mem = 0.7
util_target_tasks = 0.8
supported_slos = [1, 2]

[tiers.regions]
r1 = 10
"#;

    #[test]
    fn minimal_file_roundtrips() {
        let (snapshot, warnings) = parse_snapshot(MINIMAL, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(snapshot.tiers().len(), 1);
        assert_eq!(snapshot.apps().len(), 0);
        let text = snapshot_to_string(&snapshot).unwrap();
        let (again, _) = parse_snapshot(&text, true).unwrap();
        assert_eq!(snapshot, again);
    }

    #[test]
    fn header_is_mandatory() {
        let err = parse_snapshot("something else\n", true).unwrap_err();
        assert!(matches!(err, IoError::BadHeader { .. }), "{err}");
    }

    #[test]
    fn five_tier_slo_table_accepted() {
        let mut body = String::from("sptlb-snapshot v1\n");
        for i in 1..=5 {
            let slos = if i <= 3 { "[1, 2, 3]" } else { "[3, 4]" };
            body.push_str(&format!(
                "[[tiers]]\ntier_id = \"t{i}\"\ncpu_capacity = 100.0\nmem_capacity = 100.0\n\
                 task_limit = 50\nutil_target_cpu = 0.7\nutil_target_mem = 0.7\n\
                 util_target_tasks = 0.8\nsupported_slos = {slos}\n[tiers.regions]\nr1 = 10\n\n"
            ));
        }
        let (snapshot, _) = parse_snapshot(&body, true).unwrap();
        assert!(snapshot.tier("t1").unwrap().supports_slo(1));
        assert!(!snapshot.tier("t1").unwrap().supports_slo(4));
        assert!(snapshot.tier("t4").unwrap().supports_slo(4));
        assert!(snapshot.tier("t5").unwrap().supports_slo(3));
    }

    #[test]
    fn dangling_tier_reference_is_a_parse_failure() {
        let body = format!(
            "{MINIMAL}\n[[apps]]\napp_id = \"a1\"\ncpu_p99 = 1.0\nmem_p99 = 1.0\n\
             task_count = 1\nslo_score = 1\ncriticality_score = 0.5\n\
             source_region = \"r1\"\ncurrent_tier = \"t9\"\n"
        );
        let err = parse_snapshot(&body, true).unwrap_err();
        assert!(err.to_string().contains("t9"), "{err}");
    }

    #[test]
    fn generated_snapshot_roundtrips_through_files() {
        let snapshot = crate::generator::generate(&crate::generator::GeneratorSpec {
            app_count: 40,
            seed: 3,
            ..Default::default()
        })
        .unwrap();
        let text = snapshot_to_string(&snapshot).unwrap();
        let (loaded, warnings) = parse_snapshot(&text, true).unwrap();
        assert!(warnings.is_empty());
        assert_eq!(snapshot, loaded);
        // Serialization itself is deterministic.
        assert_eq!(text, snapshot_to_string(&loaded).unwrap());
    }
}
