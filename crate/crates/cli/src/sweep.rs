//! One run per axis value (and seed replicate), summarized in a single CSV.

use std::path::Path;
use std::str::FromStr;

use elastic_pinn::checkpoint::atomic_write;
use elastic_pinn::ActivationKind;

use crate::config::Loaded;
use crate::run::{run, Failure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    Activation,
    Architecture,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SweepValue {
    Activation(ActivationKind),
    /// `(hidden_width, hidden_layers)`.
    Architecture(usize, usize),
}

impl SweepValue {
    pub fn parse(axis: Axis, s: &str) -> Result<Self, String> {
        match axis {
            Axis::Activation => ActivationKind::from_str(s).map(SweepValue::Activation).map_err(|e| e.to_string()),
            Axis::Architecture => {
                let (w, l) = s
                    .split_once(['x', 'X'])
                    .ok_or_else(|| format!("architecture '{s}' is not of the form WIDTHxLAYERS"))?;
                let parse = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("bad architecture '{s}'"));
                Ok(SweepValue::Architecture(parse(w)?, parse(l)?))
            }
        }
    }

    pub fn label(&self) -> String {
        match self {
            SweepValue::Activation(a) => a.to_string(),
            SweepValue::Architecture(w, l) => format!("{w}x{l}"),
        }
    }

    fn apply(&self, loaded: &mut Loaded) {
        match *self {
            SweepValue::Activation(a) => loaded.config.network.activation = a,
            SweepValue::Architecture(w, l) => {
                loaded.config.network.hidden_width = w;
                loaded.config.network.hidden_layers = l;
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Row {
    pub value: String,
    /// Seed of a replicate, or `median`.
    pub seed: String,
    pub status: String,
    pub terms: Vec<f64>,
    pub total: f64,
    pub train_seconds: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Column-wise median of the successful rows.
pub fn median_row(value: &str, rows: &[Row]) -> Option<Row> {
    let ok: Vec<&Row> = rows.iter().filter(|r| r.status == "ok").collect();
    let first = ok.first()?;
    let terms = (0..first.terms.len()).map(|k| median(ok.iter().map(|r| r.terms[k]).collect())).collect();
    Some(Row {
        value: value.to_string(),
        seed: "median".into(),
        status: format!("ok ({} of {})", ok.len(), rows.len()),
        terms,
        total: median(ok.iter().map(|r| r.total).collect()),
        train_seconds: median(ok.iter().map(|r| r.train_seconds).collect()),
    })
}

pub fn write_summary(path: &Path, term_names: &[String], rows: &[Row]) -> elastic_pinn::Result<()> {
    atomic_write(path, |w| {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec!["value".to_string(), "seed".into(), "status".into()];
        header.extend(term_names.iter().cloned());
        header.extend(["total".to_string(), "t_tr_seconds".into()]);
        out.write_record(&header).map_err(csv_io)?;
        for r in rows {
            let mut rec = vec![r.value.clone(), r.seed.clone(), r.status.clone()];
            rec.extend(r.terms.iter().map(|t| format!("{t:e}")));
            rec.push(format!("{:e}", r.total));
            rec.push(format!("{:.3}", r.train_seconds));
            out.write_record(&rec).map_err(csv_io)?;
        }
        out.flush()?;
        Ok(())
    })
}

fn csv_io(e: csv::Error) -> elastic_pinn::Error {
    elastic_pinn::Error::Io(std::io::Error::other(e))
}

/// Runs every `(value, seed)` pair; individual failures are recorded and the sweep continues.
pub fn sweep(base: &Loaded, values: &[SweepValue], seeds: &[u64]) -> Result<Vec<Row>, Failure> {
    let root = base.config.out_dir.clone();
    let mut rows = Vec::new();
    let mut term_names: Vec<String> = Vec::new();
    for value in values {
        let mut group = Vec::new();
        let replicate: Vec<Option<u64>> =
            if seeds.is_empty() { vec![None] } else { seeds.iter().copied().map(Some).collect() };
        for seed in replicate {
            let mut loaded = Loaded { config: base.config.clone(), source: base.source.clone() };
            value.apply(&mut loaded);
            let mut name = format!("{}-{}", base.config.label, value.label());
            if let Some(s) = seed {
                loaded.config.train.seed = s;
                loaded.config.network.init_seed = s;
                loaded.config.collocation.seed = s;
                name.push_str(&format!("-s{s}"));
            }
            loaded.config.label = name.clone();
            loaded.config.out_dir = root.join(&name);
            let seed_label = seed.map_or_else(|| loaded.config.train.seed.to_string(), |s| s.to_string());
            let outcome = loaded.validate().map_err(Failure::Config).and_then(|()| run(&loaded));
            let row = match outcome {
                Ok(summary) => {
                    term_names = summary.term_names.clone();
                    Row {
                        value: value.label(),
                        seed: seed_label,
                        status: "ok".into(),
                        terms: summary.final_loss.terms.clone(),
                        total: summary.final_loss.total,
                        train_seconds: summary.train_seconds,
                    }
                }
                Err(e) => {
                    eprintln!("{name}: {e}");
                    Row {
                        value: value.label(),
                        seed: seed_label,
                        status: e.to_string().replace(['\n', ','], " "),
                        terms: Vec::new(),
                        total: f64::NAN,
                        train_seconds: f64::NAN,
                    }
                }
            };
            eprintln!("{name}: {} total={:e}", row.status, row.total);
            group.push(row);
        }
        if seeds.len() > 1 {
            if let Some(m) = median_row(&value.label(), &group) {
                group.push(m);
            }
        }
        rows.extend(group);
    }
    for r in rows.iter_mut().filter(|r| r.terms.is_empty()) {
        r.terms = vec![f64::NAN; term_names.len()];
    }
    std::fs::create_dir_all(&root)?;
    write_summary(&root.join("summary.csv"), &term_names, &rows)?;
    Ok(rows)
}
