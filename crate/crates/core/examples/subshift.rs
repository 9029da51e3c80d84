//! Factor complexity of sturmian, periodic and Thue-Morse words, and the transfer
//! bound from a rotation to its coding.

use nilcomplex::subshift::{complexity, factor_transfer_check, morse_hedlund_check, SubshiftSpec, TransferOptions};

fn main() -> nilcomplex::Result<()> {
    for name in ["sturmian:silver", "periodic:abc", "thue-morse"] {
        let spec: SubshiftSpec = name.parse()?;
        let table = complexity(&spec, 12)?;
        let counts: Vec<usize> = table.rows.iter().map(|r| r.count).collect();
        println!("{:<16} {counts:?} {:?}", name, morse_hedlund_check(&table)?);
    }
    let sturmian = SubshiftSpec::sturmian(2f64.sqrt() - 1.0, 0.0)?;
    let report = factor_transfer_check(&sturmian, 0.05, &[8, 32, 128], TransferOptions::default())?;
    println!("window L = {}", report.window);
    for row in &report.rows {
        println!("n={:4} S_Y = {:3} <= C_X(n+2L+1) = {}", row.n, row.spanning, row.complexity);
    }
    Ok(())
}
