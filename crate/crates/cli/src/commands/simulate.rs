//! The `simulate` command: draw a regime-switching corpus from a spec and
//! write it as a ready-to-train dataset with its manifest, plus the true
//! hidden paths for later inspection.

use std::fs;
use std::path::{Path, PathBuf};

use nhmm_core::data::{generate, CsvSchema, DatasetManifest, SyntheticSpec};
use nhmm_core::Result;

use crate::config::{file_sha256, load_json, write_json, Stamp};

pub fn run(spec_path: &Path, seed: u64, out: &PathBuf) -> Result<()> {
    let spec: SyntheticSpec = load_json(spec_path)?;
    let data = generate(&spec, seed)?;
    fs::create_dir_all(out)?;

    let has_signal = data.records.iter().any(|r| r.signal_channels() > 0);
    let series_path = out.join("series.csv");
    {
        let mut writer = csv::Writer::from_path(&series_path)?;
        let mut header = Vec::new();
        for record in &data.records {
            header.push(record.id.clone());
            if has_signal {
                header.push(format!("{}_signal", record.id));
            }
        }
        writer.write_record(&header)?;
        for t in 0..spec.length {
            let mut row = Vec::new();
            for record in &data.records {
                row.push(record.y[t].to_string());
                if has_signal {
                    let w = record.w.as_ref().expect("signal corpus has channels");
                    row.push(w[0][t].to_string());
                }
            }
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }

    let regimes_path = out.join("regimes.csv");
    {
        let mut writer = csv::Writer::from_path(&regimes_path)?;
        let header: Vec<&str> = data.records.iter().map(|r| r.id.as_str()).collect();
        writer.write_record(&header)?;
        for t in 0..spec.length {
            let row: Vec<String> = data
                .hidden_paths
                .iter()
                .map(|path| path[t].to_string())
                .collect();
            writer.write_record(&row)?;
        }
        writer.flush()?;
    }

    let manifest = DatasetManifest {
        csv: "series.csv".into(),
        schema: CsvSchema::Wide {
            time_column: None,
            signal_suffixes: if has_signal { vec!["_signal".into()] } else { Vec::new() },
        },
        m: spec.seasonality,
        frequency: "synthetic".into(),
    };
    write_json(&out.join("manifest.json"), &manifest)?;

    let data_sha256 = file_sha256(&series_path)?;
    write_json(
        &out.join("stamp.json"),
        &Stamp { command: "simulate", seed, data_sha256: &data_sha256, config: &spec },
    )?;

    println!(
        "simulated {} series of length {} ({} regimes, seed {seed})",
        data.records.len(),
        spec.length,
        spec.regimes.len()
    );
    println!("wrote {}", out.join("manifest.json").display());
    Ok(())
}
