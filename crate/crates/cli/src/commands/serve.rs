use std::net::SocketAddr;

use ulfsynth_qcserve::{serve, ServerConfig};

use crate::{CliError, Outcome, ServeArgs};

pub fn run(args: ServeArgs) -> Result<Outcome, CliError> {
    let config = ServerConfig {
        manifest: args.manifest,
        ratings: args.ratings,
        flags: args.flags,
        static_dir: args.static_dir,
    };
    let addr = SocketAddr::new(args.host, args.port);
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Config(format!("cannot start runtime: {e}")))?;
    rt.block_on(serve(config, addr))?;
    Ok(Outcome::Complete)
}
