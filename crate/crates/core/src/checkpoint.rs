//! Plain-text checkpoints of field networks and, optionally, optimizer state.
//!
//! ```text
//! elastic-pinn-checkpoint 1
//! networks 2
//! network u_x width 20 layers 5 input 2 output 1 activation tanh seed 7
//! layer 0 20 2
//! w <2 values>          (one line per weight row)
//! b <20 values>
//! ...
//! optimizer step 120 epoch 3
//! m u_x <values>
//! v u_x <values>
//! end
//! ```
//!
//! Values are written with 17 significant digits so every double round-trips exactly.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::activation::ActivationKind;
use crate::error::{Error, Result};
use crate::network::{DenseNetwork, FieldBundle, NetworkSpec};
use crate::trainer::{AdamState, TrainState};

pub const FORMAT_VERSION: u32 = 1;
const MAGIC: &str = "elastic-pinn-checkpoint";

/// Optimizer part of a full-state checkpoint.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub adam: AdamState,
    pub epoch: usize,
}

pub fn write_checkpoint<W: Write>(mut w: W, bundle: &FieldBundle, optimizer: Option<&OptimizerState>) -> Result<()> {
    writeln!(w, "{MAGIC} {FORMAT_VERSION}")?;
    writeln!(w, "networks {}", bundle.len())?;
    for (name, net) in bundle.names().iter().zip(bundle.nets()) {
        let s = net.spec();
        writeln!(
            w,
            "network {name} width {} layers {} input {} output {} activation {} seed {}",
            s.hidden_width, s.hidden_layers, s.input_dim, s.output_dim, s.activation, s.init_seed
        )?;
        for (l, (wt, b, rows, cols)) in net.layers().into_iter().enumerate() {
            writeln!(w, "layer {l} {rows} {cols}")?;
            for row in wt.chunks(cols) {
                write_values(&mut w, "w", row)?;
            }
            write_values(&mut w, "b", b)?;
        }
    }
    if let Some(opt) = optimizer {
        if opt.adam.m.len() != bundle.param_len() || opt.adam.v.len() != bundle.param_len() {
            return Err(Error::ShapeMismatch("optimizer moments do not match the parameter count".into()));
        }
        writeln!(w, "optimizer step {} epoch {}", opt.adam.step, opt.epoch)?;
        for (moment, data) in [("m", &opt.adam.m), ("v", &opt.adam.v)] {
            for (f, name) in bundle.names().iter().enumerate() {
                let off = bundle.offset(f);
                let n = bundle.net(f).params().len();
                write_values(&mut w, &format!("{moment} {name}"), &data[off..off + n])?;
            }
        }
    }
    writeln!(w, "end")?;
    w.flush()?;
    Ok(())
}

fn write_values<W: Write>(w: &mut W, key: &str, values: &[f64]) -> Result<()> {
    write!(w, "{key}")?;
    for v in values {
        write!(w, " {v:.16e}")?;
    }
    writeln!(w)?;
    Ok(())
}

struct Lines<R> {
    inner: std::io::Lines<R>,
    line: usize,
}

impl<R: BufRead> Lines<R> {
    /// Next non-empty line; `None` at end of file.
    fn next(&mut self) -> Result<Option<String>> {
        for l in self.inner.by_ref() {
            self.line += 1;
            let l = l?;
            if !l.trim().is_empty() {
                return Ok(Some(l));
            }
        }
        Ok(None)
    }

    /// Next line, which must exist; running out means an array was cut short.
    fn expect(&mut self, what: &str) -> Result<String> {
        self.next()?
            .ok_or_else(|| Error::ShapeMismatch(format!("file ends after line {} while reading {what}", self.line)))
    }

    fn malformed(&self, reason: impl Into<String>) -> Error {
        Error::Malformed { line: self.line, reason: reason.into() }
    }

    fn parse<T: std::str::FromStr>(&self, tok: Option<&str>, what: &str) -> Result<T> {
        let tok = tok.ok_or_else(|| self.malformed(format!("missing {what}")))?;
        tok.parse().map_err(|_| self.malformed(format!("invalid {what} '{tok}'")))
    }

    /// Line `<key...> v1 v2 ...` with exactly `n` values.
    fn values(&mut self, key: &[&str], n: usize) -> Result<Vec<f64>> {
        let what = key.join(" ");
        let l = self.expect(&what)?;
        let mut toks = l.split_whitespace();
        for k in key {
            let t = toks.next();
            if t != Some(k) {
                return Err(self.malformed(format!("expected '{k}', found '{}'", t.unwrap_or(""))));
            }
        }
        let vals: Vec<f64> = toks.map(|t| self.parse(Some(t), "number")).collect::<Result<_>>()?;
        if vals.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "line {}: '{what}' has {} values, expected {n}",
                self.line,
                vals.len()
            )));
        }
        Ok(vals)
    }
}

pub fn read_checkpoint<R: BufRead>(reader: R) -> Result<(FieldBundle, Option<OptimizerState>)> {
    let mut lines = Lines { inner: reader.lines(), line: 0 };
    let header = lines.next()?.ok_or_else(|| lines.malformed("empty file"))?;
    let mut toks = header.split_whitespace();
    if toks.next() != Some(MAGIC) {
        return Err(lines.malformed("not a checkpoint file"));
    }
    let version: u32 = lines.parse(toks.next(), "format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FORMAT_VERSION });
    }

    let l = lines.expect("network count")?;
    let mut toks = l.split_whitespace();
    if toks.next() != Some("networks") {
        return Err(lines.malformed("expected 'networks <count>'"));
    }
    let count: usize = lines.parse(toks.next(), "network count")?;

    let mut names = Vec::with_capacity(count);
    let mut nets = Vec::with_capacity(count);
    for _ in 0..count {
        let l = lines.expect("network header")?;
        let toks: Vec<&str> = l.split_whitespace().collect();
        let keys = ["network", "", "width", "", "layers", "", "input", "", "output", "", "activation", "", "seed", ""];
        if toks.len() != keys.len() || keys.iter().zip(&toks).any(|(k, t)| !k.is_empty() && k != t) {
            return Err(lines.malformed(
                "expected 'network <name> width <n> layers <n> input <n> output <n> activation <kind> seed <n>'",
            ));
        }
        let spec = NetworkSpec {
            hidden_width: lines.parse(Some(toks[3]), "width")?,
            hidden_layers: lines.parse(Some(toks[5]), "layers")?,
            input_dim: lines.parse(Some(toks[7]), "input dimension")?,
            output_dim: lines.parse(Some(toks[9]), "output dimension")?,
            activation: lines.parse::<ActivationKind>(Some(toks[11]), "activation")?,
            init_seed: lines.parse(Some(toks[13]), "seed")?,
        };
        spec.validate().map_err(|e| lines.malformed(e.to_string()))?;
        let mut params = Vec::with_capacity(spec.param_count());
        for (l, (rows, cols)) in spec.layer_dims().into_iter().enumerate() {
            let h = lines.expect("layer header")?;
            let t: Vec<&str> = h.split_whitespace().collect();
            if t.first() != Some(&"layer") || t.len() != 4 {
                return Err(lines.malformed("expected 'layer <index> <rows> <cols>'"));
            }
            let dims: (usize, usize, usize) = (
                lines.parse(Some(t[1]), "layer index")?,
                lines.parse(Some(t[2]), "rows")?,
                lines.parse(Some(t[3]), "cols")?,
            );
            if dims != (l, rows, cols) {
                return Err(Error::ShapeMismatch(format!(
                    "line {}: layer {} is {}x{}, spec requires layer {l} to be {rows}x{cols}",
                    lines.line, dims.0, dims.1, dims.2
                )));
            }
            for _ in 0..rows {
                params.extend(lines.values(&["w"], cols)?);
            }
            params.extend(lines.values(&["b"], rows)?);
        }
        names.push(toks[1].to_string());
        nets.push(DenseNetwork::from_params(&spec, params)?);
    }
    let bundle = FieldBundle::new(names, nets)?;

    let l = lines.expect("'end' or optimizer section")?;
    let toks: Vec<&str> = l.split_whitespace().collect();
    let optimizer = match toks.first() {
        Some(&"end") => None,
        Some(&"optimizer") => {
            if toks.len() != 5 || toks[1] != "step" || toks[3] != "epoch" {
                return Err(lines.malformed("expected 'optimizer step <n> epoch <n>'"));
            }
            let step: u64 = lines.parse(Some(toks[2]), "step")?;
            let epoch: usize = lines.parse(Some(toks[4]), "epoch")?;
            let mut m = Vec::with_capacity(bundle.param_len());
            let mut v = Vec::with_capacity(bundle.param_len());
            for (moment, out) in [("m", &mut m), ("v", &mut v)] {
                for (f, name) in bundle.names().iter().enumerate() {
                    out.extend(lines.values(&[moment, name], bundle.net(f).params().len())?);
                }
            }
            if lines.expect("'end'")?.trim() != "end" {
                return Err(lines.malformed("expected 'end'"));
            }
            Some(OptimizerState { adam: AdamState { m, v, step }, epoch })
        }
        _ => return Err(lines.malformed("expected 'end' or 'optimizer'")),
    };
    Ok((bundle, optimizer))
}

/// Writes `path` through a temporary file in the same directory, then renames it into place.
pub fn atomic_write(path: &Path, f: impl FnOnce(&mut BufWriter<&mut File>) -> Result<()>) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    {
        let mut w = BufWriter::new(tmp.as_file_mut());
        f(&mut w)?;
        w.flush()?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Weights-only checkpoint.
pub fn save_checkpoint(bundle: &FieldBundle, path: impl AsRef<Path>) -> Result<()> {
    atomic_write(path.as_ref(), |w| write_checkpoint(w, bundle, None))
}

/// Loads the networks of a checkpoint, ignoring any optimizer section.
pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<FieldBundle> {
    Ok(read_checkpoint(BufReader::new(File::open(path)?))?.0)
}

/// Weights plus Adam moments, step, and completed epochs.
pub fn save_state(state: &TrainState, path: impl AsRef<Path>) -> Result<()> {
    let opt = OptimizerState { adam: state.adam.clone(), epoch: state.epoch };
    atomic_write(path.as_ref(), |w| write_checkpoint(w, &state.bundle, Some(&opt)))
}

pub fn load_state(path: impl AsRef<Path>) -> Result<TrainState> {
    let (bundle, opt) = read_checkpoint(BufReader::new(File::open(path)?))?;
    let opt = opt.ok_or_else(|| Error::Malformed { line: 0, reason: "checkpoint has no optimizer state".into() })?;
    Ok(TrainState { bundle, adam: opt.adam, epoch: opt.epoch })
}
