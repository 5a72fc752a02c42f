//! Serves a built-in predictor over the wire protocol, on standard
//! input/output by default or on a TCP listener.
//!
//! ```text
//! mtraj-echo                       # straight-line echo predictor on stdio
//! mtraj-echo --sut builtin:cvg     # any built-in predictor
//! mtraj-echo --tcp 127.0.0.1:7777  # one thread per connection
//! ```

use std::io::{self, BufReader};
use std::net::TcpListener;
use std::sync::Arc;
use std::thread;

use anyhow::{Context, Result};
use clap::Parser;

use mtraj_core::harness::{builtin_sut, Sut};
use mtraj_core::sutproto::serve;

#[derive(Parser)]
#[command(name = "mtraj-echo", version, about = "Serve a built-in predictor over the wire protocol")]
struct Args {
    #[arg(long, default_value = "builtin:echo")]
    sut: String,
    /// Listen on this address instead of using standard input/output.
    #[arg(long)]
    tcp: Option<String>,
}

fn main() -> Result<()> {
    let args = Args::parse();
    let sut: Arc<dyn Sut> = builtin_sut(&args.sut)?.into();
    match args.tcp {
        None => serve(io::stdin().lock(), io::stdout().lock(), sut.as_ref())?,
        Some(addr) => {
            let listener = TcpListener::bind(&addr).with_context(|| format!("binding {addr}"))?;
            eprintln!("listening on {}", listener.local_addr()?);
            for stream in listener.incoming() {
                let stream = stream?;
                let sut = sut.clone();
                thread::spawn(move || -> io::Result<()> {
                    let reader = BufReader::new(stream.try_clone()?);
                    serve(reader, stream, sut.as_ref())
                });
            }
        }
    }
    Ok(())
}
