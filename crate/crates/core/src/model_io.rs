//! Line-oriented text formats for trained models.
//!
//! Every file starts with a magic line (`ISAREC-NET v1`, `ISAREC-VOCAB v1`,
//! `ISAREC-SVM v1`). Numbers are written in scientific notation with 17
//! significant digits, so reloading reproduces every `f64` bit for bit.
//! Matrices are written row-major, one row per line, space-separated.
//!
//! Network layout:
//!
//! ```text
//! ISAREC-NET v1
//! [whiten1] in=<n> out=<d> eps=<e>
//! <mean: n values>
//! <basis: d rows of n values>
//! [layer1] k=<k> g=<g> eps=<e>
//! <filters: k rows of d values>
//! [whiten2] ...            (as whiten1)
//! [layer2] ...             (as layer1)
//! [geometry] l1=sx,sy,st l1_stride=... l2=... l2_stride=... grid=nx,ny,nt sub_stride=...
//! ```

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::classifier::{BinarySvm, PairMachine, SvmModel};
use crate::error::{Error, Result};
use crate::isa::{IsaLayer, IsaNetwork, StackGeometry};
use crate::patch_sampling::BlockGeometry;
use crate::vocabulary::Vocabulary;
use crate::whitening::WhiteningTransform;

pub const NET_MAGIC: &str = "ISAREC-NET v1";
pub const VOCAB_MAGIC: &str = "ISAREC-VOCAB v1";
pub const SVM_MAGIC: &str = "ISAREC-SVM v1";

/// 17 significant digits.
pub fn format_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn push_row<'a>(out: &mut String, values: impl IntoIterator<Item = &'a f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(' ');
        }
        out.push_str(&format_f64(*v));
        first = false;
    }
    out.push('\n');
}

fn push_matrix(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        push_row(out, m.row(r).iter());
    }
}

fn triple(v: [usize; 3]) -> String {
    format!("{},{},{}", v[0], v[1], v[2])
}

pub fn network_to_string(net: &IsaNetwork) -> String {
    let mut out = format!("{NET_MAGIC}\n");
    let whiten = |out: &mut String, name: &str, w: &WhiteningTransform| {
        out.push_str(&format!(
            "[{name}] in={} out={} eps={}\n",
            w.in_dim(),
            w.out_dim(),
            format_f64(w.eps)
        ));
        push_row(out, w.mean.iter());
        push_matrix(out, &w.basis);
    };
    let layer = |out: &mut String, name: &str, l: &IsaLayer| {
        out.push_str(&format!(
            "[{name}] k={} g={} eps={}\n",
            l.num_filters(),
            l.group_size,
            format_f64(l.eps)
        ));
        push_matrix(out, &l.filters);
    };
    whiten(&mut out, "whiten1", &net.whiten1);
    layer(&mut out, "layer1", &net.layer1);
    whiten(&mut out, "whiten2", &net.whiten2);
    layer(&mut out, "layer2", &net.layer2);
    let g = &net.geometry;
    out.push_str(&format!(
        "[geometry] l1={} l1_stride={} l2={} l2_stride={} grid={} sub_stride={}\n",
        triple([g.layer1.sx, g.layer1.sy, g.layer1.st]),
        triple([g.layer1.stride_x, g.layer1.stride_y, g.layer1.stride_t]),
        triple([g.layer2.sx, g.layer2.sy, g.layer2.st]),
        triple([g.layer2.stride_x, g.layer2.stride_y, g.layer2.stride_t]),
        triple(g.grid),
        triple(g.sub_stride),
    ));
    out
}

struct Reader<'a> {
    origin: String,
    lines: Vec<&'a str>,
    pos: usize,
}

impl<'a> Reader<'a> {
    fn new(text: &'a str, origin: &str) -> Self {
        Reader {
            origin: origin.to_string(),
            lines: text.lines().collect(),
            pos: 0,
        }
    }

    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            path: self.origin.clone(),
            line: self.pos,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        let line = *self
            .lines
            .get(self.pos)
            .ok_or_else(|| Error::Parse {
                path: self.origin.clone(),
                line: self.pos + 1,
                msg: "unexpected end of file".into(),
            })?;
        self.pos += 1;
        Ok(line.trim_end_matches('\r'))
    }

    fn magic(&mut self, expected: &str) -> Result<()> {
        let line = self.next_line()?;
        if line == expected {
            return Ok(());
        }
        let kind = expected.split(' ').next().unwrap_or_default();
        if line.starts_with(kind) {
            Err(Error::Format(format!("unsupported version `{line}`, expected `{expected}`")))
        } else {
            Err(Error::Format(format!("not a `{expected}` file (found `{line}`)")))
        }
    }

    fn keyvals(&self, text: &str) -> Result<HashMap<String, String>> {
        text.split_whitespace()
            .map(|kv| {
                kv.split_once('=')
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .ok_or_else(|| self.err(format!("expected key=value, found `{kv}`")))
            })
            .collect()
    }

    fn section(&mut self, name: &str) -> Result<HashMap<String, String>> {
        let line = self.next_line()?;
        let tag = format!("[{name}]");
        let rest = line
            .strip_prefix(&tag)
            .ok_or_else(|| self.err(format!("expected section `{tag}`")))?;
        self.keyvals(rest)
    }

    fn get<T: std::str::FromStr>(&self, kv: &HashMap<String, String>, key: &str) -> Result<T> {
        kv.get(key)
            .ok_or_else(|| self.err(format!("missing `{key}`")))?
            .parse()
            .map_err(|_| self.err(format!("bad value for `{key}`")))
    }

    fn triple(&self, kv: &HashMap<String, String>, key: &str) -> Result<[usize; 3]> {
        let raw: String = self.get(kv, key)?;
        let parts: Vec<usize> = raw
            .split(',')
            .map(|p| p.parse().map_err(|_| self.err(format!("bad triple for `{key}`"))))
            .collect::<Result<_>>()?;
        parts
            .try_into()
            .map_err(|_| self.err(format!("`{key}` needs three values")))
    }

    fn row(&mut self, len: usize) -> Result<Vec<f64>> {
        let line = self.next_line()?;
        let values: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect::<Result<_>>()?;
        if values.len() != len {
            return Err(self.err(format!("expected {len} values, found {}", values.len())));
        }
        Ok(values)
    }

    fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            data.extend(self.row(cols)?);
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }

    fn whitening(&mut self, name: &str) -> Result<WhiteningTransform> {
        let kv = self.section(name)?;
        let (n, d): (usize, usize) = (self.get(&kv, "in")?, self.get(&kv, "out")?);
        let eps = self.get(&kv, "eps")?;
        let mean = DVector::from_vec(self.row(n)?);
        let basis = self.matrix(d, n)?;
        Ok(WhiteningTransform { mean, basis, eps })
    }

    fn layer(&mut self, name: &str, input_dim: usize) -> Result<IsaLayer> {
        let kv = self.section(name)?;
        let k: usize = self.get(&kv, "k")?;
        let g: usize = self.get(&kv, "g")?;
        let eps: f64 = self.get(&kv, "eps")?;
        let filters = self.matrix(k, input_dim)?;
        IsaLayer::new(filters, g, eps)
    }
}

pub fn network_from_str(text: &str, origin: &str) -> Result<IsaNetwork> {
    let mut r = Reader::new(text, origin);
    r.magic(NET_MAGIC)?;
    let whiten1 = r.whitening("whiten1")?;
    let layer1 = r.layer("layer1", whiten1.out_dim())?;
    let whiten2 = r.whitening("whiten2")?;
    let layer2 = r.layer("layer2", whiten2.out_dim())?;
    let kv = r.section("geometry")?;
    let block = |size: [usize; 3], stride: [usize; 3]| {
        BlockGeometry::new(size[0], size[1], size[2], stride[0], stride[1], stride[2])
    };
    let geometry = StackGeometry {
        layer1: block(r.triple(&kv, "l1")?, r.triple(&kv, "l1_stride")?)?,
        layer2: block(r.triple(&kv, "l2")?, r.triple(&kv, "l2_stride")?)?,
        grid: r.triple(&kv, "grid")?,
        sub_stride: r.triple(&kv, "sub_stride")?,
    };
    let net = IsaNetwork {
        whiten1,
        layer1,
        whiten2,
        layer2,
        geometry,
    };
    net.validate()?;
    Ok(net)
}

pub fn vocabulary_to_string(vocab: &Vocabulary) -> String {
    let mut out = format!("{VOCAB_MAGIC}\nk={} d={}\n", vocab.len(), vocab.dim());
    for c in &vocab.centroids {
        push_row(&mut out, c);
    }
    out
}

pub fn vocabulary_from_str(text: &str, origin: &str) -> Result<Vocabulary> {
    let mut r = Reader::new(text, origin);
    r.magic(VOCAB_MAGIC)?;
    let line = r.next_line()?;
    let kv = r.keyvals(line)?;
    let (k, d): (usize, usize) = (r.get(&kv, "k")?, r.get(&kv, "d")?);
    let centroids = (0..k).map(|_| r.row(d)).collect::<Result<_>>()?;
    Vocabulary::new(centroids)
}

/// Layout after the magic line: `classes=<n>`, one class name per line,
/// `C=<c> gamma=<g>`, then for each pair `[pair] positive=<i> negative=<j>
/// n_sv=<n> d=<d> bias=<b>` followed by `n` lines of `<coef> <sv values>`.
pub fn svm_to_string(model: &SvmModel) -> String {
    let mut out = format!("{SVM_MAGIC}\nclasses={}\n", model.classes.len());
    for c in &model.classes {
        out.push_str(c);
        out.push('\n');
    }
    out.push_str(&format!("C={} gamma={}\n", format_f64(model.c), format_f64(model.gamma)));
    for m in &model.machines {
        let d = m.svm.support_vectors.first().map_or(0, Vec::len);
        out.push_str(&format!(
            "[pair] positive={} negative={} n_sv={} d={} bias={}\n",
            m.positive,
            m.negative,
            m.svm.support_vectors.len(),
            d,
            format_f64(m.svm.bias)
        ));
        for (sv, coef) in m.svm.support_vectors.iter().zip(&m.svm.dual_coefs) {
            push_row(&mut out, std::iter::once(coef).chain(sv));
        }
    }
    out
}

pub fn svm_from_str(text: &str, origin: &str) -> Result<SvmModel> {
    let mut r = Reader::new(text, origin);
    r.magic(SVM_MAGIC)?;
    let line = r.next_line()?;
    let kv = r.keyvals(line)?;
    let n: usize = r.get(&kv, "classes")?;
    if n < 2 {
        return Err(r.err("an svm model needs at least two classes"));
    }
    let classes: Vec<String> = (0..n)
        .map(|_| r.next_line().map(str::to_string))
        .collect::<Result<_>>()?;
    let line = r.next_line()?;
    let kv = r.keyvals(line)?;
    let (c, gamma): (f64, f64) = (r.get(&kv, "C")?, r.get(&kv, "gamma")?);
    let mut machines = Vec::with_capacity(n * (n - 1) / 2);
    for _ in 0..n * (n - 1) / 2 {
        let kv = r.section("pair")?;
        let positive: usize = r.get(&kv, "positive")?;
        let negative: usize = r.get(&kv, "negative")?;
        if positive >= n || negative >= n {
            return Err(r.err("pair refers to an unknown class"));
        }
        let n_sv: usize = r.get(&kv, "n_sv")?;
        let d: usize = r.get(&kv, "d")?;
        let bias: f64 = r.get(&kv, "bias")?;
        let mut support_vectors = Vec::with_capacity(n_sv);
        let mut dual_coefs = Vec::with_capacity(n_sv);
        for _ in 0..n_sv {
            let row = r.row(d + 1)?;
            dual_coefs.push(row[0]);
            support_vectors.push(row[1..].to_vec());
        }
        machines.push(PairMachine {
            positive,
            negative,
            svm: BinarySvm {
                support_vectors,
                dual_coefs,
                bias,
                gamma,
                c,
            },
        });
    }
    Ok(SvmModel {
        classes,
        c,
        gamma,
        machines,
    })
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn save_network(path: &Path, net: &IsaNetwork) -> Result<()> {
    write(path, &network_to_string(net))
}

pub fn load_network(path: &Path) -> Result<IsaNetwork> {
    network_from_str(&read(path)?, &path.display().to_string())
}

pub fn save_vocabulary(path: &Path, vocab: &Vocabulary) -> Result<()> {
    write(path, &vocabulary_to_string(vocab))
}

pub fn load_vocabulary(path: &Path) -> Result<Vocabulary> {
    vocabulary_from_str(&read(path)?, &path.display().to_string())
}

pub fn save_svm(path: &Path, model: &SvmModel) -> Result<()> {
    write(path, &svm_to_string(model))
}

pub fn load_svm(path: &Path) -> Result<SvmModel> {
    svm_from_str(&read(path)?, &path.display().to_string())
}
