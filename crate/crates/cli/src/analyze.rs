use std::collections::BTreeMap;

use serde::Serialize;
use tconv_core::data::{load_recording, read_labels_csv, Label, Subset};
use tconv_core::dsp::{ltsa, LTSA_HOP, LTSA_WINDOW};
use tconv_core::fir::{group_delay, phase_linearity_residual, response_of};
use tconv_core::model::Network;
use tconv_core::PIPELINE_RATE_HZ;

use crate::args::AnalyzeArgs;
use crate::data_cmds::label_name;
use crate::error::{CliError, Result};
use crate::manifest::Recorder;

/// Bins within this many dB of a band's peak count as in-band.
const IN_BAND_DB: f64 = 20.0;

#[derive(Debug, Serialize)]
struct BandPhase {
    band: usize,
    taps: usize,
    symmetric: bool,
    /// Delay of a symmetric filter of this length, `(taps − 1) / 2`.
    centre_delay_samples: f64,
    peak_hz: f64,
    group_delay_at_peak: f64,
    /// Worst in-band deviation from the centre-delay linear phase, modulo π.
    linear_phase_residual_rad: Option<f64>,
}

pub fn analyze(a: AnalyzeArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("analyze", argv, &a.out.out)?;
    let net = Network::from_bytes(&rec.read(&a.ckpt)?)?;
    rec.config(&serde_json::json!({ "points": a.points, "network": net.config() }))?;

    let kernel = net.frontend_kernel();
    let taps = *kernel.shape().last().expect("rank-3 kernel");
    let mut csv = String::from("band,tap,value\n");
    for (b, row) in kernel.data().chunks(taps).enumerate() {
        for (i, v) in row.iter().enumerate() {
            csv.push_str(&format!("{b},{i},{v:.17e}\n"));
        }
    }
    rec.write("kernels.csv", csv.as_bytes())?;

    let mut phases = Vec::new();
    for (band, coeffs) in net.equivalent_fir().iter().enumerate() {
        let resp = response_of(coeffs, PIPELINE_RATE_HZ, a.points)?;
        rec.write(&format!("response_band{band}.csv"), resp.to_csv().as_bytes())?;
        let peak = (0..resp.magnitude_db.len())
            .max_by(|&i, &j| resp.magnitude_db[i].total_cmp(&resp.magnitude_db[j]))
            .unwrap_or(0);
        let n = coeffs.len();
        let centre = (n - 1) as f64 / 2.0;
        let omega = std::f64::consts::PI * peak as f64 / (a.points - 1) as f64;
        phases.push(BandPhase {
            band,
            taps: n,
            symmetric: (0..n).all(|i| coeffs[i] == coeffs[n - 1 - i]),
            centre_delay_samples: centre,
            peak_hz: resp.freq_hz[peak],
            group_delay_at_peak: group_delay(coeffs, omega),
            linear_phase_residual_rad: phase_linearity_residual(&resp, centre, IN_BAND_DB),
        });
    }
    rec.write("phase.json", serde_json::to_string_pretty(&phases)?.as_bytes())?;
    for p in &phases {
        let residual = p.linear_phase_residual_rad.map_or("n/a".to_string(), |r| format!("{r:.3e}"));
        println!(
            "band {}: peak {:.1} Hz, group delay {:.3}, symmetric {}, residual {residual}",
            p.band, p.peak_hz, p.group_delay_at_peak, p.symmetric
        );
    }

    if let (Some(dir), Some(labels_path)) = (&a.wav_dir, &a.labels) {
        rec.read(labels_path)?;
        write_ltsa(&mut rec, dir, &read_labels_csv(labels_path)?)?;
    }
    rec.finish()?;
    Ok(())
}

fn subset_name(s: Subset) -> &'static str {
    match s {
        Subset::A => "a",
        Subset::B => "b",
        Subset::C => "c",
        Subset::D => "d",
        Subset::E => "e",
        Subset::F => "f",
        Subset::Synthetic => "synthetic",
    }
}

/// Mean LTSA per (label, subset) group of the labelled recordings.
fn write_ltsa(rec: &mut Recorder, dir: &std::path::Path, labels: &BTreeMap<String, Label>) -> Result<()> {
    let mut groups: BTreeMap<(&str, &str), (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for (id, &label) in labels {
        let path = dir.join(format!("{id}.wav"));
        if !path.exists() {
            eprintln!("ltsa: no recording for {id}");
            continue;
        }
        rec.read(&path)?;
        let (w, meta) = load_recording(&path, label)?;
        let profile = match ltsa(&w, LTSA_WINDOW, LTSA_HOP) {
            Ok(p) => p,
            Err(e) if e.is_data_error() => {
                eprintln!("ltsa: skipping {id}: {e}");
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let entry = groups
            .entry((label_name(label), subset_name(meta.subset)))
            .or_insert_with(|| (profile.freq_hz.clone(), vec![0.0; profile.freq_hz.len()], 0));
        for (acc, v) in entry.1.iter_mut().zip(&profile.avg_log_magnitude_db) {
            *acc += v;
        }
        entry.2 += 1;
    }
    if groups.is_empty() {
        return Err(CliError::Data(format!("no labelled recordings found in {}", dir.display())));
    }
    for ((label, subset), (freq, sum, count)) in groups {
        let mut csv = String::from("freq_hz,mean_db,recordings\n");
        for (f, s) in freq.iter().zip(&sum) {
            csv.push_str(&format!("{f:.17e},{:.17e},{count}\n", s / count as f64));
        }
        rec.write(&format!("ltsa_{label}_{subset}.csv"), csv.as_bytes())?;
    }
    Ok(())
}
