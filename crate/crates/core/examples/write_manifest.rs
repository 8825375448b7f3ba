//! Regenerates `manifest/examples.json`.
fn main() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/manifest/examples.json");
    std::fs::write(path, adiabatica::opfamily::manifest_json()).expect("write manifest");
}
