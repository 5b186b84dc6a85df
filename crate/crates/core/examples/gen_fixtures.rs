//! Regenerates the committed test fixtures.
//!
//! ```text
//! cargo run -p consent-audit --example gen_fixtures [OUT_DIR]
//! ```

#[path = "../tests/support/mod.rs"]
mod support;

use std::path::PathBuf;

fn main() {
    let root = std::env::args_os()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(support::fixtures_dir);
    match support::write_fixtures(&root) {
        Ok(n) => println!("wrote {n} files under {}", root.display()),
        Err(e) => {
            eprintln!("cannot write fixtures: {e}");
            std::process::exit(1);
        }
    }
}
