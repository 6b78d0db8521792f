//! The full run pipeline from a configuration, printing the comparison
//! table and the CSV.

use bohm_twotime::cli::{run, summary, to_csv, ScenarioConfig};

fn main() -> bohm_twotime::Result<()> {
    let config = ScenarioConfig::from_toml(
        r#"
        [times]
        t1 = [0.5]
        delta_t = [0.0, 1.5707963267948966, 3.141592653589793]

        [monte_carlo]
        n = 5000
        trajectory_n = 300
        seed = 1
        dt = 0.01
        "#,
    )?;
    let report = run(&config)?;
    print!("{}", summary(&report));
    println!();
    print!("{}", to_csv(&report));
    for w in &report.metadata.warnings {
        println!("warning: {w}");
    }
    Ok(())
}
