//! Drive a configured run from code, the way the `pspin` binary does.

use pspin::cli::{self, Command, Overrides};

const CONFIG: &str = r#"
[model]
nu = [0.125]
beta = 1.0
q_star = 1.0
q_o = 0.5
e_star = 0.625
g_star = 1.25

[grid]
t_max = 2.0
h = 0.01

[compare]
left = { kind = "hard" }
right = { kind = "sk" }
tol = 1e-3
"#;

fn main() -> anyhow::Result<()> {
    let cfg = cli::parse_config_str(CONFIG)?;
    let out = std::env::temp_dir().join("pspin-config-run");
    for cmd in [Command::SolveHard, Command::Compare, Command::Report] {
        let o = cli::run(cmd, &cfg, &out.join(cmd.name()), Overrides::default())?;
        println!("{:<10} exit {} -> {} files", cmd.name(), o.exit_code(), o.files.len());
    }
    println!("{}", std::fs::read_to_string(out.join("report").join("report.md"))?);
    Ok(())
}
