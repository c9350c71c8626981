use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use tconv_core::data::{
    load_recording, make_folds, read_cycle_store, read_labels_csv, recordings_of, segment_cycles, synth_pcg,
    write_cycle_store, write_folds_csv, write_labels_csv, write_wav, CycleRecord, FoldAssignment, Label, SynthConfig,
    FOLDS, TRAIN_ONLY,
};

use crate::args::{FoldsArgs, IngestArgs, LabelArg, SegmentArgs, SynthArgs};
use crate::error::{CliError, Result};
use crate::manifest::Recorder;

pub fn synth(a: SynthArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("synth", argv, &a.out.out)?;
    let mut cfg: SynthConfig = match &a.config {
        Some(p) => serde_json::from_slice(&rec.read(p)?)?,
        None => SynthConfig::default(),
    };
    cfg.n_recordings = a.n.unwrap_or(cfg.n_recordings);
    cfg.abnormal_fraction = a.abnormal_fraction.unwrap_or(cfg.abnormal_fraction);
    cfg.duration_s = a.duration.unwrap_or(cfg.duration_s);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    rec.config(&cfg)?;
    rec.seed(cfg.seed);

    let recordings = synth_pcg(&cfg)?;
    let mut labels = BTreeMap::new();
    for r in &recordings {
        let name = format!("wav/{}.wav", r.meta.id);
        write_wav(&rec.target(&name)?, &r.waveform)?;
        rec.record_existing(&name)?;
        labels.insert(r.meta.id.clone(), r.meta.label);
    }
    write_labels_csv(&rec.target("labels.csv")?, &labels)?;
    rec.record_existing("labels.csv")?;
    let params: Vec<_> = recordings.iter().map(|r| &r.params).collect();
    rec.write("synth_params.json", serde_json::to_string_pretty(&params)?.as_bytes())?;

    let abnormal = labels.values().filter(|&&l| l == Label::Abnormal).count();
    println!("label     recordings");
    println!("normal    {:>10}", labels.len() - abnormal);
    println!("abnormal  {:>10}", abnormal);
    rec.finish()?;
    Ok(())
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(dir, e))?
        .map(|e| e.map(|e| e.path()).map_err(|err| CliError::io(dir, err)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    files.sort();
    Ok(files)
}

pub fn ingest(a: IngestArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("ingest", argv, &a.out.out)?;
    rec.read(&a.labels)?;
    let labels = read_labels_csv(&a.labels)?;
    let mut cycles = Vec::new();
    let mut skipped: Vec<(String, String)> = Vec::new();
    let mut seen = BTreeSet::new();
    for path in wav_files(&a.wav_dir)? {
        let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        let Some(&label) = labels.get(&id) else {
            skipped.push((id, "no label".into()));
            continue;
        };
        seen.insert(id.clone());
        rec.read(&path)?;
        match load_recording(&path, label).and_then(|(w, meta)| segment_cycles(&w, &meta)) {
            Ok(c) => cycles.extend(c),
            Err(e) if e.is_data_error() => skipped.push((id, e.to_string())),
            Err(e) => return Err(e.into()),
        }
    }
    for id in labels.keys().filter(|id| !seen.contains(*id)) {
        skipped.push((id.clone(), "no wav file".into()));
    }
    skipped.sort();
    if cycles.is_empty() {
        return Err(CliError::Data(format!("no cycles extracted from {}", a.wav_dir.display())));
    }
    write_cycle_store(&rec.target("cycles.bin")?, &cycles)?;
    rec.record_existing("cycles.bin")?;
    let mut wtr = csv::Writer::from_writer(Vec::new());
    wtr.write_record(["id", "reason"])?;
    for (id, reason) in &skipped {
        wtr.write_record([id, reason])?;
    }
    let bytes = wtr.into_inner().map_err(|e| CliError::Data(e.to_string()))?;
    rec.write("skipped.csv", &bytes)?;

    print_label_table(&cycles);
    for (id, reason) in &skipped {
        println!("skipped {id}: {reason}");
    }
    rec.finish()?;
    Ok(())
}

fn print_label_table(cycles: &[CycleRecord]) {
    let metas = recordings_of(cycles);
    println!("label     recordings  cycles");
    for label in [Label::Normal, Label::Abnormal] {
        let r = metas.iter().filter(|m| m.label == label).count();
        let c = cycles.iter().filter(|c| c.label == label).count();
        println!("{:<9} {r:>10}  {c:>6}", label_name(label));
    }
}

pub fn label_name(label: Label) -> &'static str {
    match label {
        Label::Normal => "normal",
        Label::Abnormal => "abnormal",
    }
}

pub fn segment(a: SegmentArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("segment", argv, &a.out.out)?;
    rec.read(&a.wav)?;
    let label = match a.label {
        LabelArg::Normal => Label::Normal,
        LabelArg::Abnormal => Label::Abnormal,
    };
    let (w, meta) = load_recording(&a.wav, label)?;
    let cycles = segment_cycles(&w, &meta)?;
    write_cycle_store(&rec.target("cycles.bin")?, &cycles)?;
    rec.record_existing("cycles.bin")?;
    let mut table = String::from("index,start,valid_len\n");
    for (i, c) in cycles.iter().enumerate() {
        table.push_str(&format!("{i},{},{}\n", c.start, c.valid_len));
    }
    rec.write("cycles.csv", table.as_bytes())?;
    println!("{}: {} cycles", meta.id, cycles.len());
    rec.finish()?;
    Ok(())
}

fn read_id_list(text: &str) -> Result<BTreeSet<String>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let mut ids = BTreeSet::new();
    for row in rdr.records() {
        let row = row?;
        if let Some(id) = row.get(0).map(str::trim).filter(|s| !s.is_empty()) {
            ids.insert(id.to_string());
        }
    }
    Ok(ids)
}

pub fn folds(a: FoldsArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("folds", argv, &a.out.out)?;
    rec.read(&a.cycles)?;
    let cycles = read_cycle_store(&a.cycles)?;
    let pinned = match &a.fold0 {
        Some(p) => Some(read_id_list(&rec.read_string(p)?)?),
        None => None,
    };
    rec.config(&serde_json::json!({ "seed": a.seed, "fold0": pinned }))?;
    rec.seed(a.seed);
    let assignment = make_folds(&recordings_of(&cycles), pinned.as_ref(), a.seed)?;
    write_folds_csv(&rec.target("folds.csv")?, &assignment)?;
    rec.record_existing("folds.csv")?;
    print_fold_table(&assignment, &cycles);
    rec.finish()?;
    Ok(())
}

fn print_fold_table(assignment: &FoldAssignment, cycles: &[CycleRecord]) {
    println!("fold        normal  abnormal  cycles");
    let metas = recordings_of(cycles);
    let rows = (0..FOLDS as i32).chain([TRAIN_ONLY]);
    for f in rows {
        let in_fold = |id: &str| assignment.fold_of(id) == Some(f);
        let n = metas.iter().filter(|m| in_fold(&m.id) && m.label == Label::Normal).count();
        let x = metas.iter().filter(|m| in_fold(&m.id) && m.label == Label::Abnormal).count();
        let c = cycles.iter().filter(|c| in_fold(&c.recording_id)).count();
        let name = if f == TRAIN_ONLY { "train-only".to_string() } else { f.to_string() };
        println!("{name:<10} {n:>7}  {x:>8}  {c:>6}");
    }
}
