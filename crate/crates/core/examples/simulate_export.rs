//! Simulate entry-game data, write it as CSV with a provenance header and
//! read it back.

use idbounds::io::{read_distribution_csv, read_header_line, write_distribution_csv, Metadata};
use idbounds::models::entry::{simulate_entry_data, simulate_entry_markets, EntryGameConfig, Selection, ShockLaw};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = EntryGameConfig::default();
    let theta0 = cfg.theta0();
    let law = ShockLaw::Normal { sd: 1.0, seed: 42 };
    let markets = simulate_entry_markets(&cfg, &theta0, 5, Selection::Random(7), &law)?;
    for m in &markets {
        println!("x = {:?}, u = [{:.3}, {:.3}], y = {:?}", m.x, m.u[0], m.u[1], m.y);
    }

    let data = simulate_entry_data(&cfg, &theta0, 500, Selection::Random(7), &law)?;
    let meta = Metadata::new("example", Some(42));
    let mut buf = Vec::new();
    write_distribution_csv(&mut buf, Some(&meta), &data)?;
    print!("{}", String::from_utf8_lossy(&buf));

    println!("header: {:?}", read_header_line(&buf[..])?);
    let back = read_distribution_csv(&buf[..])?;
    println!("round trip exact: {}", back == data);
    Ok(())
}
