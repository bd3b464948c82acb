//! Writes a weight file for a small network, lists its record table, and shows
//! what loading it against a mismatched config reports.

use lungseg::config::DecoderConfig;
use lungseg::decoder::WeightStore;
use lungseg::segw::parse_table;
use lungseg::Result;

fn main() -> Result<()> {
    let config = DecoderConfig::parse("block_channels = 16, 8\nencoder_channels = 32\nencoder_downsample = 4\n")?;
    let weights = WeightStore::random(&config, 1)?;
    let bytes = weights.to_bytes();
    println!(
        "{} bytes, header {:?}",
        bytes.len(),
        String::from_utf8_lossy(&bytes[..4])
    );

    let table = parse_table(&bytes)?;
    for h in &table.headers {
        println!("  {:<28} {:?}", h.name, h.dims);
    }

    let round_trip = WeightStore::from_bytes(&bytes, &config)?;
    println!("round trip identical: {}", round_trip == weights);

    let other = DecoderConfig {
        block_channels: vec![16, 4],
        ..config
    };
    match WeightStore::from_bytes(&bytes, &other) {
        Ok(_) => println!("unexpectedly loaded"),
        Err(e) => println!("against another config: {e}"),
    }
    Ok(())
}
