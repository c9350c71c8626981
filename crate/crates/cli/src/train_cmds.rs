use serde::{Deserialize, Serialize};
use tconv_core::data::{limit_cycles_per_recording, read_cycle_store, read_folds_csv, split_fold, CycleRecord};
use tconv_core::layers::InitKind;
use tconv_core::model::{Frontend, Network, NetworkConfig};
use tconv_core::train::{evaluate, history_csv, round2, train_fold, FoldMetrics, TrainConfig};

use crate::args::{DataSplitArgs, EvalArgs, FrontendArg, InitArg, TrainArgs};
use crate::error::{CliError, Result};
use crate::manifest::Recorder;
use crate::report::row_label;

/// Contents of `train --config`. Absent fields keep their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub frontend: FrontendArg,
    pub init: InitArg,
    /// Defaults to trainable for tConv front-ends and fixed for the baseline.
    pub trainable: Option<bool>,
    pub max_cycles_per_recording: Option<usize>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            frontend: FrontendArg::Lp,
            init: InitArg::Fir,
            trainable: None,
            max_cycles_per_recording: None,
            train: TrainConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn network(&self) -> Result<NetworkConfig> {
        let init = match self.init {
            InitArg::Fir => InitKind::FirBank,
            InitArg::Random => InitKind::Random,
            InitArg::Zeros => InitKind::Zeros,
            InitArg::He => InitKind::He,
        };
        let frontend = match self.frontend {
            FrontendArg::Baseline => Frontend::ExternalFir,
            FrontendArg::Tconv => Frontend::TconvFree,
            FrontendArg::Lp => Frontend::TconvLp,
            FrontendArg::Zp => Frontend::TconvZp,
        };
        let trainable = self.trainable.unwrap_or(frontend != Frontend::ExternalFir);
        if frontend == Frontend::ExternalFir {
            if init != InitKind::FirBank {
                return Err(CliError::Usage("the baseline front-end only takes --init fir".into()));
            }
            if trainable {
                return Err(CliError::Usage("the baseline front-end cannot be --trainable".into()));
            }
        }
        let t = &self.train;
        let cfg = NetworkConfig {
            dropout: t.dropout,
            pool: t.pool,
            l2_conv: t.l2_conv,
            ..NetworkConfig::tconv(frontend, init, trainable, t.seed)
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// What `train` and `eval` leave behind for `report`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldEval {
    pub label: String,
    pub fold: i32,
    pub network: NetworkConfig,
    pub metrics: FoldMetrics,
}

fn load_split(rec: &mut Recorder, s: &DataSplitArgs) -> Result<(Vec<CycleRecord>, Vec<CycleRecord>)> {
    rec.read(&s.cycles)?;
    rec.read(&s.folds)?;
    let cycles = read_cycle_store(&s.cycles)?;
    let folds = read_folds_csv(&s.folds)?;
    let (train, val) = split_fold(&cycles, &folds, s.fold)?;
    if val.is_empty() {
        return Err(CliError::Data(format!("fold {} has no validation cycles", s.fold)));
    }
    Ok((train, val))
}

fn write_eval(rec: &mut Recorder, eval: &FoldEval) -> Result<()> {
    let m = &eval.metrics;
    let csv = format!(
        "fold,tp,tn,fp,fn,sensitivity,specificity,macc,cycle_accuracy\n{},{},{},{},{},{:.2},{:.2},{:.2},{:.2}\n",
        eval.fold,
        m.tp,
        m.tn,
        m.fp,
        m.fn_,
        round2(m.sensitivity),
        round2(m.specificity),
        round2(m.macc),
        round2(m.cycle_accuracy)
    );
    rec.write("eval.csv", csv.as_bytes())?;
    rec.write("eval.json", serde_json::to_string_pretty(eval)?.as_bytes())?;
    println!(
        "{} fold {}: sensitivity {:.2}  specificity {:.2}  Macc {:.2}",
        eval.label,
        eval.fold,
        round2(m.sensitivity),
        round2(m.specificity),
        round2(m.macc)
    );
    Ok(())
}

pub fn train(a: TrainArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("train", argv, &a.out.out)?;
    let mut cfg: RunConfig = match &a.config {
        Some(p) => serde_json::from_slice(&rec.read(p)?)?,
        None => RunConfig::default(),
    };
    cfg.frontend = a.frontend.unwrap_or(cfg.frontend);
    cfg.init = a.init.unwrap_or(cfg.init);
    cfg.trainable = a.trainable_flag().or(cfg.trainable);
    cfg.max_cycles_per_recording = a.max_cycles_per_recording.or(cfg.max_cycles_per_recording);
    let t = &mut cfg.train;
    t.epochs = a.epochs.unwrap_or(t.epochs);
    t.batch_size = a.batch_size.unwrap_or(t.batch_size);
    t.lr0 = a.lr0.unwrap_or(t.lr0);
    t.lr_decay = a.lr_decay.unwrap_or(t.lr_decay);
    t.seed = a.seed.unwrap_or(t.seed);
    cfg.train.validate()?;
    let net_cfg = cfg.network()?;
    rec.config(&cfg)?;
    rec.seed(cfg.train.seed);

    let (train, val) = load_split(&mut rec, &a.split)?;
    let train = match cfg.max_cycles_per_recording {
        Some(n) => limit_cycles_per_recording(&train, n),
        None => train,
    };
    let label = row_label(&net_cfg);
    println!("{label}: fold {}, {} training and {} validation cycles", a.split.fold, train.len(), val.len());
    let outcome = train_fold(Network::build(net_cfg.clone())?, &train, Some(&val), &cfg.train)?;
    rec.write("checkpoint.ckpt", &outcome.net.to_bytes()?)?;
    rec.write("history.csv", history_csv(&outcome.history).as_bytes())?;
    let eval = FoldEval {
        label,
        fold: a.split.fold,
        network: net_cfg,
        metrics: evaluate(&outcome.net, &val)?,
    };
    write_eval(&mut rec, &eval)?;
    rec.finish()?;
    Ok(())
}

pub fn eval(a: EvalArgs, argv: &[String]) -> Result<()> {
    let mut rec = Recorder::new("eval", argv, &a.out.out)?;
    let net = Network::from_bytes(&rec.read(&a.ckpt)?)?;
    let (_, val) = load_split(&mut rec, &a.split)?;
    let eval = FoldEval {
        label: row_label(net.config()),
        fold: a.split.fold,
        network: net.config().clone(),
        metrics: evaluate(&net, &val)?,
    };
    write_eval(&mut rec, &eval)?;
    rec.finish()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_and_constraints() {
        let lp = RunConfig::default().network().unwrap();
        assert_eq!(lp.frontend, Frontend::TconvLp);
        assert!(lp.trainable_frontend);

        let baseline = RunConfig {
            frontend: FrontendArg::Baseline,
            ..RunConfig::default()
        };
        assert!(!baseline.network().unwrap().trainable_frontend);
        for bad in [
            RunConfig {
                init: InitArg::Zeros,
                ..baseline.clone()
            },
            RunConfig {
                trainable: Some(true),
                ..baseline.clone()
            },
        ] {
            assert!(matches!(bad.network(), Err(CliError::Usage(_))));
        }
    }

    #[test]
    fn config_file_fields_are_checked() {
        let cfg: RunConfig = serde_json::from_str(r#"{"frontend":"zp","train":{"epochs":3}}"#).unwrap();
        assert_eq!(cfg.frontend, FrontendArg::Zp);
        assert_eq!(cfg.train.epochs, 3);
        assert_eq!(cfg.train.batch_size, TrainConfig::default().batch_size);
        assert!(serde_json::from_str::<RunConfig>(r#"{"frontnd":"zp"}"#).is_err());
    }
}
