use std::process::ExitCode;

use dotfield_cli::commands::{
    cmd_convergence, cmd_mesh_info, cmd_probe, cmd_slice, cmd_solve, cmd_sweep, USAGE,
};

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let Some(command) = argv.first() else {
        eprint!("{}", USAGE);
        return ExitCode::from(2);
    };
    let rest = &argv[1..];
    let result = match command.as_str() {
        "solve" => cmd_solve(rest),
        "sweep" => cmd_sweep(rest),
        "probe" => cmd_probe(rest),
        "slice" => cmd_slice(rest),
        "convergence" => cmd_convergence(rest),
        "mesh-info" => cmd_mesh_info(rest),
        "help" | "--help" | "-h" => {
            print!("{}", USAGE);
            return ExitCode::SUCCESS;
        }
        other => {
            eprintln!("unknown command `{}`\n", other);
            eprint!("{}", USAGE);
            return ExitCode::from(2);
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e);
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
