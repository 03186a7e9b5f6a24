// The full triad case study through the pipeline, written to a directory.
//
// `cargo run --release --example case_study -- out/case_study`

use std::path::Path;

use cgns::pipeline;
use cgns::RunConfig;

pub fn run_example(cfg: &RunConfig, out: Option<&Path>) -> cgns::Result<pipeline::Analysis> {
    cfg.validate()?;
    let analysis = pipeline::case_study(cfg, out)?;
    if let Some(dir) = out {
        let files = analysis.write(dir, true)?;
        println!("wrote {} files to {}", files.len(), dir.display());
    }
    Ok(analysis)
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "out/case_study".into());
    std::fs::create_dir_all(&out)?;
    let a = run_example(&RunConfig::default(), Some(Path::new(&out)))?;
    for est in &a.metrics.estimates {
        let all = est.component("all").unwrap();
        println!("{:<18} srmse {:.3}  corr {:.3}  eta {:.3}", est.estimate, all.srmse, all.corr, all.eta);
    }
    Ok(())
}
