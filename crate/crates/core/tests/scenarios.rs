use std::fs;
use std::path::Path;

use atmcash_core::harness::{run, Scenario};

#[test]
fn bundled_scenarios_pass() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut paths: Vec<_> = fs::read_dir(&dir).unwrap().map(|e| e.unwrap().path()).collect();
    paths.sort();
    assert!(paths.len() >= 8);
    for path in paths {
        let scenario = Scenario::from_toml(&fs::read_to_string(&path).unwrap()).unwrap();
        let report = run(&scenario).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        assert!(report.passed(), "{}\n{}", path.display(), report.render());
    }
}
