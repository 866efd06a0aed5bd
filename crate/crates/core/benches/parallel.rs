use std::path::Path;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use dbforge_core::characterize::characterize;
use dbforge_core::exec::Exec;
use dbforge_core::index::scan_repo_with;
use dbforge_core::profile::DbProfile;

fn workspace() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

/// The toy database plus `files` generated sources of 200 small functions
/// each, so scanning has enough work to spread.
fn synthetic_repo(files: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    dbforge_core::eval::copy_repo(&workspace().join("fixtures/toydb"), dir.path()).unwrap();
    for f in 0..files {
        let mut src = String::from("#include \"toydb.h\"\n\n");
        for i in 0..200 {
            src.push_str(&format!(
                "static int gen_{f}_{i}(int a, int b)\n{{\n    int t = a * {i} + b;\n    if (t > 100) {{\n        t -= b;\n    }}\n    return t;\n}}\n\n"
            ));
        }
        std::fs::write(dir.path().join(format!("gen_{f}.c")), src).unwrap();
    }
    dir
}

fn modes() -> [(&'static str, Exec); 2] {
    [
        ("sequential", Exec::Sequential),
        ("parallel", Exec::Parallel),
    ]
}

fn bench_scan(c: &mut Criterion) {
    let profile = DbProfile::load(&workspace().join("profiles/toydb.toml")).unwrap();
    let repo = synthetic_repo(32);
    let mut group = c.benchmark_group("scan_repo");
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| scan_repo_with(repo.path(), &profile, exec).unwrap())
        });
    }
    group.finish();
}

fn bench_characterize(c: &mut Criterion) {
    let profile = DbProfile::load(&workspace().join("profiles/toydb.toml")).unwrap();
    let repo = synthetic_repo(8);
    let cfg = Default::default();
    let mut group = c.benchmark_group("characterize");
    group.sample_size(20);
    for (name, exec) in modes() {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| characterize(repo.path(), &profile, &cfg, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, bench_scan, bench_characterize);
criterion_main!(benches);
