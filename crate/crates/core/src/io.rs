//! Run configuration, the binary matrix container, and CSV/JSON/SVG emitters.
//!
//! Matrix container layout (all integers little-endian):
//!
//! ```text
//! b"HPCAMAT1"  u32 entry count
//! per entry:   u32 name length, UTF-8 name, u64 rows, u64 cols, rows·cols f64 (row-major)
//! ```

use crate::error::{Error, Result};
use crate::harness::{ComparisonRow, SweepAxis};
use crate::model::{Dataset, GroundTruth, LatentSignal, ModelSpec, Modes};
use crate::theory::{Branch, ContinuationOptions};
use crate::Matrix;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 8] = b"HPCAMAT1";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingConfig {
    /// Gaussian width in time steps; 0 disables smoothing.
    #[serde(default)]
    pub tau_z: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    #[serde(default = "twenty")]
    pub replicates: usize,
}

fn twenty() -> usize {
    20
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbcdConfig {
    /// Components reported as A, B, C, D.
    #[serde(default = "first_four")]
    pub components: [usize; 4],
}

fn first_four() -> [usize; 4] {
    [0, 1, 2, 3]
}

impl Default for AbcdConfig {
    fn default() -> Self {
        AbcdConfig { components: first_four() }
    }
}

/// Contents of a run configuration file (TOML).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default)]
    pub smoothing: SmoothingConfig,
    #[serde(default)]
    pub theory: ContinuationOptions,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub abcd: AbcdConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        cfg.model.validate()?;
        if !(cfg.smoothing.tau_z >= 0.0 && cfg.smoothing.tau_z.is_finite()) {
            return Err(Error::param("smoothing.tau_z", "must be finite and ≥ 0"));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }
}

/// Named matrices in insertion order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MatrixBundle {
    pub entries: Vec<(String, Matrix)>,
}

impl MatrixBundle {
    pub fn push(&mut self, name: impl Into<String>, m: Matrix) {
        self.entries.push((name.into(), m));
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m)
            .ok_or_else(|| Error::Parse(format!("matrix `{name}` missing from container")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, m) in &self.entries {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(m.nrows() as u64).to_le_bytes());
            out.extend_from_slice(&(m.ncols() as u64).to_le_bytes());
            for i in 0..m.nrows() {
                for j in 0..m.ncols() {
                    out.extend_from_slice(&m[(i, j)].to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = bytes;
        let mut magic = [0u8; 8];
        take(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Parse("not a matrix container (bad magic)".into()));
        }
        let count = u32::from_le_bytes(take_array(&mut r)?) as usize;
        let mut entries = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = u32::from_le_bytes(take_array(&mut r)?) as usize;
            if len > r.len() {
                return Err(Error::Parse("truncated matrix container".into()));
            }
            let name = std::str::from_utf8(&r[..len]).map_err(|_| Error::Parse("matrix name is not UTF-8".into()))?;
            let name = name.to_string();
            r = &r[len..];
            let rows = u64::from_le_bytes(take_array(&mut r)?) as usize;
            let cols = u64::from_le_bytes(take_array(&mut r)?) as usize;
            let n = rows.checked_mul(cols).filter(|n| n.checked_mul(8).is_some_and(|b| b <= r.len()));
            let n = n.ok_or_else(|| Error::Parse(format!("truncated payload for `{name}`")))?;
            let data: Vec<f64> = r[..n * 8].chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
            r = &r[n * 8..];
            entries.push((name, Matrix::from_row_slice(rows, cols, &data)));
        }
        if !r.is_empty() {
            return Err(Error::Parse(format!("{} trailing bytes after last matrix", r.len())));
        }
        Ok(MatrixBundle { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf)
    }
}

fn take(r: &mut &[u8], out: &mut [u8]) -> Result<()> {
    if r.len() < out.len() {
        return Err(Error::Parse("truncated matrix container".into()));
    }
    out.copy_from_slice(&r[..out.len()]);
    *r = &r[out.len()..];
    Ok(())
}

fn take_array<const N: usize>(r: &mut &[u8]) -> Result<[u8; N]> {
    let mut a = [0u8; N];
    take(r, &mut a)?;
    Ok(a)
}

/// JSON sidecar stored next to a dataset container.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub spec: ModelSpec,
    pub samples: usize,
    pub seed: u64,
    pub amplitudes: Vec<f64>,
}

pub const DATASET_FILE: &str = "dataset.hpm";
pub const DATASET_META: &str = "ground_truth.json";

pub fn dataset_bundle(ds: &Dataset) -> MatrixBundle {
    let mut b = MatrixBundle::default();
    b.push("s", ds.s.clone());
    b.push("x", ds.truth.signal.x.clone());
    b.push("e", ds.truth.modes.e.clone());
    b.push("x_filtered", ds.truth.x_filtered.clone());
    for (i, m) in ds.truth.dx.iter().enumerate() {
        b.push(format!("dx_{i}"), m.clone());
    }
    for (i, m) in ds.truth.kernels.iter().enumerate() {
        b.push(format!("kernels_{i}"), m.clone());
    }
    b
}

/// Writes `dataset.hpm` and `ground_truth.json` into `dir`.
pub fn save_dataset(ds: &Dataset, seed: u64, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    dataset_bundle(ds).save(&dir.join(DATASET_FILE))?;
    let meta =
        DatasetMeta { spec: ds.spec.clone(), samples: ds.samples, seed, amplitudes: ds.truth.signal.amplitudes.clone() };
    write_json(&dir.join(DATASET_META), &meta)
}

pub fn load_dataset(dir: &Path) -> Result<(Dataset, u64)> {
    let b = MatrixBundle::load(&dir.join(DATASET_FILE))?;
    let meta: DatasetMeta = serde_json::from_str(&std::fs::read_to_string(dir.join(DATASET_META))?)
        .map_err(|e| Error::Parse(format!("{DATASET_META}: {e}")))?;
    let collect = |prefix: &str| -> Vec<Matrix> {
        b.entries.iter().filter(|(n, _)| n.strip_prefix(prefix).is_some_and(|r| r.parse::<usize>().is_ok())).map(|(_, m)| m.clone()).collect()
    };
    // stored x is already centered; re-centering would perturb it at rounding level
    let signal = LatentSignal { x: b.get("x")?.clone(), amplitudes: meta.amplitudes };
    let ds = Dataset {
        s: b.get("s")?.clone(),
        spec: meta.spec,
        truth: GroundTruth {
            signal,
            modes: Modes { e: b.get("e")?.clone() },
            dx: collect("dx_"),
            kernels: collect("kernels_"),
            x_filtered: b.get("x_filtered")?.clone(),
        },
        samples: meta.samples,
    };
    let d = ds.spec.dims;
    if ds.s.shape() != (d.n, d.t) || ds.truth.modes.e.shape() != (d.k, d.n) || ds.truth.signal.x.shape() != (d.k, d.t) {
        return Err(Error::Dimension("dataset shapes disagree with its spec".into()));
    }
    Ok((ds, meta.seed))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))?;
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&std::fs::read_to_string(path)?).map_err(|e| Error::Parse(e.to_string()))
}

const MATRIX_GROUPS: [&str; 6] =
    ["eps_theory", "rho_theory", "eps_emp_mean", "eps_emp_stderr", "rho_emp_mean", "rho_emp_stderr"];

/// Sweep CSV header for K modes. Matrix entries are flattened as `<name>_<k>_<l>`, 1-based.
pub fn sweep_csv_header(k: usize) -> Vec<String> {
    let mut h = vec!["value".to_string(), "replicates".into(), "transition".into(), "theory_branch".into()];
    for g in MATRIX_GROUPS {
        for a in 1..=k {
            for b in 1..=k {
                h.push(format!("{g}_{a}_{b}"));
            }
        }
    }
    h.extend(["sim_seconds", "theory_seconds", "theory_error"].map(String::from));
    h
}

fn branch_name(b: Option<Branch>) -> &'static str {
    match b {
        Some(Branch::Continuation) => "continuation",
        Some(Branch::NoRecovery) => "no-recovery",
        None => "",
    }
}

pub fn write_sweep_csv<W: Write>(w: W, rows: &[ComparisonRow], k: usize) -> Result<()> {
    for r in rows {
        let all = [&r.eps_emp_mean, &r.eps_emp_stderr, &r.rho_emp_mean, &r.rho_emp_stderr];
        let theory = [r.eps_theory.as_ref(), r.rho_theory.as_ref()];
        if all.into_iter().chain(theory.into_iter().flatten()).any(|m| m.shape() != (k, k)) {
            return Err(Error::Dimension(format!("sweep row at {} is not {k}×{k}", r.value)));
        }
    }
    let mut out = csv::Writer::from_writer(w);
    let err = |e: csv::Error| Error::Io(std::io::Error::other(e));
    out.write_record(sweep_csv_header(k)).map_err(err)?;
    for r in rows {
        let mut rec = vec![r.value.to_string(), r.replicates.to_string(), r.transition.to_string(), branch_name(r.theory_branch).into()];
        let groups = [
            r.eps_theory.as_ref(),
            r.rho_theory.as_ref(),
            Some(&r.eps_emp_mean),
            Some(&r.eps_emp_stderr),
            Some(&r.rho_emp_mean),
            Some(&r.rho_emp_stderr),
        ];
        for m in groups {
            for a in 0..k {
                for b in 0..k {
                    rec.push(m.map(|m| m[(a, b)].to_string()).unwrap_or_default());
                }
            }
        }
        rec.push(r.sim_seconds.to_string());
        rec.push(r.theory_seconds.to_string());
        rec.push(r.theory_error.clone().unwrap_or_default());
        out.write_record(&rec).map_err(err)?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<ComparisonRow>> {
    let mut rd = csv::Reader::from_reader(r);
    let perr = |e: csv::Error| Error::Parse(e.to_string());
    let header = rd.headers().map_err(perr)?.clone();
    let cells = header.len();
    let k2 = cells.checked_sub(7).map(|m| m / 6).unwrap_or(0);
    let k = (k2 as f64).sqrt().round() as usize;
    if k == 0 || k * k * 6 + 7 != cells || header.iter().ne(sweep_csv_header(k).iter().map(String::as_str)) {
        return Err(Error::Parse("unrecognised sweep CSV header".into()));
    }
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number `{s}`")));
    let mut rows = Vec::new();
    for rec in rd.records() {
        let rec = rec.map_err(perr)?;
        let mut mats: Vec<Option<Matrix>> = Vec::new();
        for g in 0..6 {
            let base = 4 + g * k * k;
            if rec[base].is_empty() {
                mats.push(None);
            } else {
                let vals = (0..k * k).map(|i| num(&rec[base + i])).collect::<Result<Vec<_>>>()?;
                mats.push(Some(Matrix::from_row_slice(k, k, &vals)));
            }
        }
        let tail = 4 + 6 * k * k;
        let need = |m: Option<Matrix>| m.ok_or_else(|| Error::Parse("missing empirical entries".into()));
        let mut it = mats.into_iter();
        let (et, rt) = (it.next().unwrap(), it.next().unwrap());
        rows.push(ComparisonRow {
            value: num(&rec[0])?,
            replicates: rec[1].parse().map_err(|_| Error::Parse("bad replicate count".into()))?,
            transition: rec[2].parse().map_err(|_| Error::Parse("bad transition flag".into()))?,
            theory_branch: match &rec[3] {
                "continuation" => Some(Branch::Continuation),
                "no-recovery" => Some(Branch::NoRecovery),
                "" => None,
                other => return Err(Error::Parse(format!("unknown branch `{other}`"))),
            },
            eps_theory: et,
            rho_theory: rt,
            eps_emp_mean: need(it.next().unwrap())?,
            eps_emp_stderr: need(it.next().unwrap())?,
            rho_emp_mean: need(it.next().unwrap())?,
            rho_emp_stderr: need(it.next().unwrap())?,
            sim_seconds: num(&rec[tail])?,
            theory_seconds: num(&rec[tail + 1])?,
            theory_error: Some(rec[tail + 2].to_string()).filter(|s| !s.is_empty()),
        });
    }
    Ok(rows)
}

/// Line plot of the diagonal entries of one observable: theory as lines,
/// empirical means as dots with ±1 stderr bars.
pub fn sweep_svg(rows: &[ComparisonRow], observable: &str, axis_label: &str) -> Result<String> {
    let pick = |r: &ComparisonRow| -> Result<(Option<Matrix>, Matrix, Matrix)> {
        match observable {
            "eps" => Ok((r.eps_theory.clone(), r.eps_emp_mean.clone(), r.eps_emp_stderr.clone())),
            "rho" => Ok((r.rho_theory.clone(), r.rho_emp_mean.clone(), r.rho_emp_stderr.clone())),
            _ => Err(Error::param("observable", format!("expected `eps` or `rho`, got `{observable}`"))),
        }
    };
    let data: Vec<_> = rows.iter().map(|r| pick(r).map(|d| (r.value, d))).collect::<Result<_>>()?;
    let k = data.first().map(|(_, d)| d.1.nrows()).unwrap_or(0);
    let (w, h, pad) = (640.0, 420.0, 60.0);
    let xs: Vec<f64> = data.iter().map(|d| d.0).collect();
    let mut ys: Vec<f64> = Vec::new();
    for (_, (th, m, s)) in &data {
        for a in 0..k {
            ys.push(m[(a, a)] - s[(a, a)]);
            ys.push(m[(a, a)] + s[(a, a)]);
            if let Some(t) = th {
                ys.push(t[(a, a)]);
            }
        }
    }
    let span = |v: &[f64]| {
        let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !lo.is_finite() { (0.0, 1.0) } else if hi > lo { (lo, hi) } else { (lo - 0.5, lo + 0.5) }
    };
    let ((x0, x1), (y0, y1)) = (span(&xs), span(&ys));
    let px = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let py = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    let colors = ["#d62728", "#17becf", "#2ca02c", "#9467bd", "#ff7f0e"];

    let mut s = String::new();
    let _ = writeln!(s, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" font-family="sans-serif" font-size="12">"#);
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<path d="M{pad} {pad} V{b} H{r}" stroke="black" fill="none"/>"#,
        b = h - pad,
        r = w - pad
    );
    for (v, x, y, anchor) in [(x0, px(x0), h - pad + 18.0, "middle"), (x1, px(x1), h - pad + 18.0, "middle")] {
        let _ = writeln!(s, r#"<text x="{x:.1}" y="{y:.1}" text-anchor="{anchor}">{v:.3}</text>"#);
    }
    for v in [y0, y1] {
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{v:.3e}</text>"#, pad - 4.0, py(v) + 4.0);
    }
    let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{axis_label}</text>"#, w / 2.0, h - 12.0);
    let _ = writeln!(s, r#"<text x="14" y="{:.1}" transform="rotate(-90 14 {:.1})" text-anchor="middle">{observable}</text>"#, h / 2.0, h / 2.0);
    for a in 0..k {
        let c = colors[a % colors.len()];
        let pts: Vec<String> = data
            .iter()
            .filter_map(|(x, (th, _, _))| th.as_ref().map(|t| format!("{:.2},{:.2}", px(*x), py(t[(a, a)]))))
            .collect();
        if pts.len() > 1 {
            let _ = writeln!(s, r#"<polyline points="{}" stroke="{c}" fill="none" stroke-width="1.5"/>"#, pts.join(" "));
        }
        for (x, (_, m, e)) in &data {
            let (cx, cy) = (px(*x), py(m[(a, a)]));
            let (lo, hi) = (py(m[(a, a)] - e[(a, a)]), py(m[(a, a)] + e[(a, a)]));
            let _ = writeln!(s, r#"<line x1="{cx:.2}" y1="{lo:.2}" x2="{cx:.2}" y2="{hi:.2}" stroke="{c}"/>"#);
            let _ = writeln!(s, r#"<circle cx="{cx:.2}" cy="{cy:.2}" r="3" fill="{c}"/>"#);
        }
        let _ = writeln!(s, r#"<text x="{:.1}" y="{:.1}" fill="{c}">({},{})</text>"#, w - pad + 6.0, pad + 14.0 * a as f64, a + 1, a + 1);
    }
    s.push_str("</svg>\n");
    Ok(s)
}
