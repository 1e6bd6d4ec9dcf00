//! Lists the quantization tables of a JPEG file and the standard quality
//! factor each one is closest to.
//!
//! cargo run --example inspect_dqt -- [file.jpg]

use comprint::jpeg_sim;

fn main() -> comprint::Result<()> {
    let path = std::env::args()
        .nth(1)
        .unwrap_or_else(|| concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/q50_gray.jpg").into());
    let bytes = std::fs::read(&path)?;
    for parsed in jpeg_sim::parse_dqt_detailed(&bytes)? {
        let (qf, dist) = jpeg_sim::nearest_standard_qf(&parsed.table);
        println!("slot {} ({}-bit), nearest QF {qf} at L1 distance {dist}", parsed.slot, parsed.precision_bits);
        print!("{}", parsed.table);
    }
    Ok(())
}
