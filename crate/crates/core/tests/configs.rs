use opre::harness::TrainConfig;
use std::path::Path;

#[test]
fn shipped_configs_parse_and_validate() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = TrainConfig::from_file(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            let arch = cfg.arch_for(&cfg.grid().unwrap());
            assert_eq!(arch.num_opponents + 1, cfg.grid().unwrap().num_players, "{}", path.display());
            seen += 1;
        }
    }
    assert!(seen >= 4);
}
