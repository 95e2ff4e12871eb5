//! Running an experiment config from code. Artifacts land under a temporary
//! directory and the manifest is printed.

use std::path::Path;

use hbflow::experiments::run_experiment;

fn main() -> hbflow::Result<()> {
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/twod_trajectories.toml");
    let root = std::env::temp_dir().join("hbflow-example");
    let dir = run_experiment(&config, &root, 2)?;
    println!("{}", dir.display());
    println!("{}", std::fs::read_to_string(dir.join("manifest.json"))?);
    Ok(())
}
