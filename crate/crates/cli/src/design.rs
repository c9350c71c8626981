use tconv_core::fir::{default_bank, design_bandpass, frequency_response, FilterBank, FirFilter};

use crate::args::{DesignArgs, ResponseArgs};
use crate::error::Result;
use crate::manifest::Recorder;

pub fn design(a: DesignArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("design", argv, &a.out.out)?;
    rec.config(&serde_json::json!({
        "bank": a.bank, "lo": a.lo, "hi": a.hi, "order": a.order, "rate": a.rate, "points": a.points,
    }))?;
    if a.bank {
        let bank = default_bank(a.rate, a.order)?;
        rec.write("bank.json", bank.to_json()?.as_bytes())?;
        write_bank_responses(&mut rec, &bank, a.points)?;
        println!("wrote {} bands of order {} to {}", bank.filters().len(), a.order, rec.out().display());
    } else {
        let (lo, hi) = (a.lo.expect("clap requires lo"), a.hi.expect("clap requires hi"));
        let filter = design_bandpass(lo, hi, a.order, a.rate)?;
        rec.write("filter.json", filter.to_json()?.as_bytes())?;
        rec.write("response.csv", frequency_response(&filter, a.points)?.to_csv().as_bytes())?;
        println!("wrote {lo}-{hi} Hz filter of order {} to {}", a.order, rec.out().display());
    }
    rec.finish()?;
    Ok(())
}

fn write_bank_responses(rec: &mut Recorder, bank: &FilterBank, points: usize) -> Result<()> {
    for (b, f) in bank.filters().iter().enumerate() {
        rec.write(&format!("response_band{b}.csv"), frequency_response(f, points)?.to_csv().as_bytes())?;
    }
    Ok(())
}

/// Accepts either a single-filter or a bank JSON file.
pub fn response(a: ResponseArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("response", argv, &a.out.out)?;
    let text = rec.read_string(&a.filter)?;
    rec.config(&serde_json::json!({ "points": a.points }))?;
    match FirFilter::from_json(&text) {
        Ok(filter) => {
            rec.write("response.csv", frequency_response(&filter, a.points)?.to_csv().as_bytes())?;
        }
        Err(single_err) => {
            let bank = FilterBank::from_json(&text).map_err(|_| single_err)?;
            write_bank_responses(&mut rec, &bank, a.points)?;
        }
    }
    rec.finish()?;
    Ok(())
}
