//! The sample configs shipped in `configs/` must stay loadable.

use std::fs;
use std::path::Path;

use coalesce::experiments::ExperimentConfig;

#[test]
fn sample_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut kinds = Vec::new();
    for entry in fs::read_dir(&dir).expect("configs directory") {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let text = fs::read_to_string(&path).unwrap();
            let cfg = ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            kinds.push(cfg.experiment.name().to_string());
        }
    }
    kinds.sort();
    assert_eq!(kinds.len(), 10, "one config per experiment kind");
    kinds.dedup();
    assert_eq!(kinds.len(), 10);
}
