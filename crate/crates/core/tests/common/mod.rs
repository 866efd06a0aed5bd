//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};

use dbforge_core::planning::{CodingPlan, PlanBlock, PlannedUnit};
use dbforge_core::profile::DbProfile;

pub fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../..")
        .canonicalize()
        .unwrap()
}

pub fn toydb_profile() -> DbProfile {
    DbProfile::load(&workspace_root().join("profiles/toydb.toml")).unwrap()
}

/// A scratch copy of the toy database.
pub fn toydb_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    dbforge_core::eval::copy_repo(&workspace_root().join("fixtures/toydb"), dir.path()).unwrap();
    dir
}

/// A plan with exactly `bad_refs` unresolvable references, `bad_locations`
/// units outside the repository and `units` units overall.
pub fn plan_with_defects(bad_refs: usize, bad_locations: usize, units: usize) -> CodingPlan {
    assert!(units >= 1 && bad_locations <= units);
    let units = (0..units)
        .map(|i| PlannedUnit {
            unit_name: format!("unit_{i}"),
            file_path: if i < bad_locations {
                format!("../outside_{i}.c")
            } else {
                format!("new_{i}.c")
            },
            create_file: true,
            blocks: vec![PlanBlock {
                description: "step".into(),
                candidate_refs: if i == 0 {
                    (0..bad_refs).map(|k| format!("missing_ref_{k}")).collect()
                } else {
                    vec![]
                },
            }],
        })
        .collect();
    CodingPlan {
        function_name: "f".into(),
        units,
        provenance: Default::default(),
    }
}
