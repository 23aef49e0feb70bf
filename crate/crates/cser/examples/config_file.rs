//! The declarative config format: write a TOML experiment file, load it
//! back, and run it through the harness, as the CLI would.
//!
//!     cargo run --release --example config_file

use cser::harness::{run, RunConfig};

const CONFIG: &str = r#"
[problem]
kind = "quadratic"
n = 8
d = 1000
lambda_min = 0.5
lambda_max = 5.0
center_spread = 2.0
noise_scale = 0.5
seed = 1

[problem.init]
kind = "zeros"

[optimizer]
variant = "m_cser"
eta = 0.005
beta = 0.9
h = 8

[optimizer.c1]
kind = "grbs"
ratio = 8.0
blocks = 0      # auto: min(d, 512)
seed = 11

[optimizer.c2]
kind = "grbs"
ratio = 64.0
blocks = 0
seed = 12

[optimizer.schedule]
kind = "constant"

[fabric]
reduction_order = "sequential_by_id"
threads = 2

[run]
rounds = 400
seeds = [1, 2, 3]
cadence = 100
out = "out/config_file_demo"
"#;

fn main() -> cser::Result<()> {
    let cfg = RunConfig::from_toml(CONFIG)?;
    cfg.validate()?;
    println!("loaded config for variant {:?}; auto blocks = {}", cfg.optimizer.variant, cfg.optimizer.c1.blocks);
    println!("canonical form:\n{}", cfg.to_toml());

    let metrics = run(&cfg, true)?;
    for m in &metrics {
        let last = m.final_record().expect("records present");
        println!(
            "seed {}: {:?}, final loss {:.5}, uplink {:.2} Mbit",
            m.seed,
            m.status,
            last.loss,
            last.uplink_bits as f64 / 1e6
        );
    }
    println!("metric files in {}", cfg.run.out.display());
    Ok(())
}
