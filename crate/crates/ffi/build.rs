use std::path::Path;

fn main() {
    println!("cargo:rerun-if-changed=src/lib.rs");
    println!("cargo:rerun-if-changed=cbindgen.toml");
    let header = Path::new("include").join("coreset.h");
    cbindgen::generate(".")
        .expect("Failed to generate C bindings")
        .write_to_file(header);
}
