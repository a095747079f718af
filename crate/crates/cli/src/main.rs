use std::process::ExitCode;

fn main() -> ExitCode {
    match handwave_cli::cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let unknown_layer = e
                .chain()
                .filter_map(|c| c.downcast_ref::<handwave_core::Error>())
                .any(|c| matches!(c, handwave_core::Error::UnknownLayer { .. }));
            if unknown_layer {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
