//! Drives the command-line interface in-process: a TOML config with dotted
//! overrides, then mock → train → sample → eval in a scratch directory.
//! Every step leaves its resolved config and a manifest of input digests.
//!
//! `cargo run --release --example cli_workflow`

use kinflow::cli::{run, Manifest, RunConfig};

const CONFIG: &str = r#"
seed = 3

[model]
hidden = 32
blocks = 2

[train]
lr = 1e-3
batch_size = 1000
max_epochs = 4
validation_subset = 1000
"#;

fn main() -> kinflow::Result<()> {
    let dir = std::env::temp_dir().join("kinflow_cli_workflow");
    std::fs::create_dir_all(&dir).map_err(|e| kinflow::Error::io(&dir, e))?;
    let config = dir.join("run.toml");
    std::fs::write(&config, CONFIG).map_err(|e| kinflow::Error::io(&config, e))?;

    let resolved = RunConfig::load(&config)?.with_overrides(&["solver.atol=1e-5", "solver.rtol=1e-5"])?;
    println!("solver after overrides: {:?}", resolved.solver);

    let p = |s: &str| dir.join(s).display().to_string();
    let cfg = config.display().to_string();
    let steps: Vec<Vec<String>> = vec![
        vec!["mock".into(), "--family".into(), "bimodal-asym".into(), "--n".into(), "20000".into(), "--out-dir".into(), p("mock")],
        vec!["train".into(), "--data".into(), p("mock/events.ev"), "--out-dir".into(), p("train")],
        vec!["sample".into(), "--checkpoint".into(), p("train/best.ckpt"), "--n".into(), "5000".into(), "--solver.atol=1e-5".into(), "--solver.rtol=1e-5".into(), "--out-dir".into(), p("sample")],
        vec!["eval".into(), "--gen".into(), p("sample/samples.ev"), "--truth".into(), p("mock/events.ev"), "--train".into(), p("mock/events.ev"), "--out-dir".into(), p("eval")],
    ];
    for step in steps {
        let mut args = vec!["kinflow".to_string(), "--config".into(), cfg.clone()];
        args.extend(step);
        println!("\n$ {}", args[3..].join(" "));
        let code = run(&args);
        if code != 0 {
            eprintln!("exit code {code}");
            std::process::exit(code);
        }
    }

    let manifest: Manifest = serde_json::from_slice(&std::fs::read(dir.join("eval/manifest.json")).unwrap()).unwrap();
    println!("\neval manifest:");
    for input in &manifest.inputs {
        println!("  {:<6} {} {}", input.role, &input.sha256[..16], input.path.display());
    }
    println!("  outputs {:?}", manifest.outputs);
    Ok(())
}
