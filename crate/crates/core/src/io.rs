//! File formats.
//!
//! A problem bundle is a JSON manifest whose array data lives in CSV files
//! next to it (paths are resolved relative to the manifest):
//!
//! ```json
//! {
//!   "b": "b.csv",
//!   "block1": {"map": {"kind": "identity", "dim": 900},
//!              "regularizer": {"kind": "nuclear", "beta": 0.25, "box": null, "shape": [30, 30]}},
//!   "block2": {"map": {"kind": "empty"}},
//!   "f3": {"kind": "canonical"}
//! }
//! ```
//!
//! Map kinds: `identity {dim}`, `dense {matrix}`, `rank_one_column {rows, cols}`,
//! `entry_mask {rows, cols, mask}`, `empty`. `f3` is either `canonical` or
//! `quadratic {Q, q, sigma?, L?}`. Vector CSVs hold one value per line,
//! matrix CSVs one row per line, mask CSVs one zero-based `row,col` pair
//! per line. Matrices used as vectors are flattened column-major.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{Block, BlockMap, MapKind, RlsdProblem, StronglyConvexSmooth, F3};
use crate::regularizers::Regularizer;
use crate::solver::{SolveResult, Status, TraceRecord};

pub const PROBLEM_FILE: &str = "problem.json";
pub const TRUTH_FILE: &str = "truth.json";
pub const TRACE_HEADER: [&str; 9] = [
    "k",
    "objective",
    "lagrangian",
    "primal_residual",
    "kkt_max",
    "d_x1",
    "d_x2",
    "d_x3",
    "d_lambda",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MapSpec {
    Identity { dim: usize },
    Dense { matrix: String },
    RankOneColumn { rows: usize, cols: usize },
    EntryMask { rows: usize, cols: usize, mask: String },
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockSpec {
    pub map: MapSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub regularizer: Option<Regularizer>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum F3Spec {
    Canonical,
    Quadratic {
        #[serde(rename = "Q")]
        q_matrix: String,
        q: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        sigma: Option<f64>,
        #[serde(rename = "L", default, skip_serializing_if = "Option::is_none")]
        lipschitz: Option<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProblemManifest {
    pub b: String,
    pub block1: BlockSpec,
    pub block2: BlockSpec,
    pub f3: F3Spec,
}

fn parse_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.display().to_string(),
        msg: msg.to_string(),
    }
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| parse_err(path, e))
}

/// Rows of a header-less CSV file, skipping blank lines.
fn read_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse_err(path, e))?;
        if rec.iter().all(str::is_empty) {
            continue;
        }
        rows.push(rec.iter().map(str::to_owned).collect());
    }
    Ok(rows)
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(path, format!("line {}: not a number: {s:?}", line + 1)))
}

/// Shortest representation that parses back to the same value.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

pub fn read_vector_csv(path: &Path) -> Result<DVector<f64>> {
    let rows = read_rows(path)?;
    let mut out = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        if row.len() != 1 {
            return Err(parse_err(path, format!("line {}: expected one value per line", i + 1)));
        }
        out.push(parse_f64(path, i, &row[0])?);
    }
    Ok(DVector::from_vec(out))
}

pub fn write_vector_csv(path: &Path, v: &DVector<f64>) -> Result<()> {
    let mut s = String::with_capacity(v.len() * 20);
    for x in v.iter() {
        s.push_str(&fmt_f64(*x));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_matrix_csv(path: &Path) -> Result<DMatrix<f64>> {
    let rows = read_rows(path)?;
    let ncols = rows.first().map_or(0, Vec::len);
    let mut data = Vec::with_capacity(rows.len() * ncols);
    for (i, row) in rows.iter().enumerate() {
        if row.len() != ncols {
            return Err(parse_err(
                path,
                format!("line {}: expected {ncols} columns, found {}", i + 1, row.len()),
            ));
        }
        for s in row {
            data.push(parse_f64(path, i, s)?);
        }
    }
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &data))
}

pub fn write_matrix_csv(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    let mut s = String::new();
    for row in a.row_iter() {
        let line: Vec<String> = row.iter().map(|x| fmt_f64(*x)).collect();
        s.push_str(&line.join(","));
        s.push('\n');
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_mask_csv(path: &Path) -> Result<Vec<(usize, usize)>> {
    let rows = read_rows(path)?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let idx = |s: &String| {
                s.parse::<usize>()
                    .map_err(|_| parse_err(path, format!("line {}: bad index {s:?}", i + 1)))
            };
            match row.as_slice() {
                [r, c] => Ok((idx(r)?, idx(c)?)),
                _ => Err(parse_err(path, format!("line {}: expected row,col", i + 1))),
            }
        })
        .collect()
}

/// Entries in column-major order.
pub fn write_mask_csv(path: &Path, rows: usize, mask: &[bool]) -> Result<()> {
    let mut s = String::new();
    for (idx, _) in mask.iter().enumerate().filter(|(_, &m)| m) {
        s.push_str(&format!("{},{}\n", idx % rows, idx / rows));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| parse_err(path, e))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn resolve(base: &Path, file: &str) -> PathBuf {
    base.join(file)
}

fn load_block(base: &Path, spec: &BlockSpec, output_dim: usize, label: &str) -> Result<Block> {
    let map = match &spec.map {
        MapSpec::Empty => {
            if spec.regularizer.is_some() {
                return Err(Error::InvalidInput(format!("{label}: an empty block takes no regularizer")));
            }
            return Ok(Block::empty(output_dim));
        }
        MapSpec::Identity { dim } => BlockMap::identity(*dim)?,
        MapSpec::Dense { matrix } => BlockMap::dense(read_matrix_csv(&resolve(base, matrix))?)?,
        MapSpec::RankOneColumn { rows, cols } => BlockMap::rank_one_column(*rows, *cols)?,
        MapSpec::EntryMask { rows, cols, mask } => {
            BlockMap::entry_mask(*rows, *cols, &read_mask_csv(&resolve(base, mask))?)?
        }
    };
    let reg = spec
        .regularizer
        .clone()
        .ok_or_else(|| Error::InvalidInput(format!("{label}: a non-empty block needs a regularizer")))?;
    Block::new(map, reg)
}

pub fn problem_from_manifest(manifest: &ProblemManifest, base: &Path) -> Result<RlsdProblem> {
    let b = read_vector_csv(&resolve(base, &manifest.b))?;
    let block1 = load_block(base, &manifest.block1, b.len(), "block1")?;
    let block2 = load_block(base, &manifest.block2, b.len(), "block2")?;
    let f3 = match &manifest.f3 {
        F3Spec::Canonical => F3::Canonical,
        F3Spec::Quadratic {
            q_matrix,
            q,
            sigma,
            lipschitz,
        } => F3::Quadratic(StronglyConvexSmooth::new(
            read_matrix_csv(&resolve(base, q_matrix))?,
            read_vector_csv(&resolve(base, q))?,
            *sigma,
            *lipschitz,
        )?),
    };
    RlsdProblem::new(block1, block2, b, f3)
}

/// Reads a bundle given its manifest path.
pub fn read_problem(path: &Path) -> Result<RlsdProblem> {
    let manifest: ProblemManifest = read_json(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    problem_from_manifest(&manifest, base)
}

fn save_block(dir: &Path, block: &Block, label: &str) -> Result<BlockSpec> {
    let map = match block.map().kind() {
        MapKind::Empty { .. } => MapSpec::Empty,
        MapKind::Identity { dim } => MapSpec::Identity { dim: *dim },
        MapKind::Dense(a) => {
            let file = format!("A_{label}.csv");
            write_matrix_csv(&dir.join(&file), a)?;
            MapSpec::Dense { matrix: file }
        }
        MapKind::RankOneColumn { rows, cols } => MapSpec::RankOneColumn {
            rows: *rows,
            cols: *cols,
        },
        MapKind::EntryMask { rows, cols, mask } => {
            let file = format!("mask_{label}.csv");
            write_mask_csv(&dir.join(&file), *rows, mask)?;
            MapSpec::EntryMask {
                rows: *rows,
                cols: *cols,
                mask: file,
            }
        }
    };
    Ok(BlockSpec {
        map,
        regularizer: block.regularizer().cloned(),
    })
}

/// Writes `problem.json` and its CSV files into `dir`; returns the manifest path.
pub fn write_problem(dir: &Path, p: &RlsdProblem) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    write_vector_csv(&dir.join("b.csv"), p.b())?;
    let f3 = match p.f3() {
        F3::Canonical => F3Spec::Canonical,
        F3::Quadratic(q) => {
            write_matrix_csv(&dir.join("Q.csv"), q.q_matrix())?;
            write_vector_csv(&dir.join("q.csv"), q.q_vector())?;
            F3Spec::Quadratic {
                q_matrix: "Q.csv".into(),
                q: "q.csv".into(),
                sigma: Some(q.sigma()),
                lipschitz: Some(q.lipschitz()),
            }
        }
    };
    let manifest = ProblemManifest {
        b: "b.csv".into(),
        block1: save_block(dir, p.block1(), "block1")?,
        block2: save_block(dir, p.block2(), "block2")?,
        f3,
    };
    let path = dir.join(PROBLEM_FILE);
    write_json(&path, &manifest)?;
    Ok(path)
}

pub fn write_trace_csv(path: &Path, records: &[TraceRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| parse_err(path, e))?;
    for r in records {
        w.serialize(r).map_err(|e| parse_err(path, e))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let text = read_text(path)?;
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| parse_err(path, e))?.clone();
    for col in TRACE_HEADER {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::InvalidInput(format!(
                "{}: trace lacks the {col} column",
                path.display()
            )));
        }
    }
    let records = rdr
        .deserialize()
        .collect::<std::result::Result<Vec<TraceRecord>, _>>()
        .map_err(|e| parse_err(path, e))?;
    if records.is_empty() {
        return Err(Error::InvalidInput(format!("{}: trace has no rows", path.display())));
    }
    for (i, r) in records.iter().enumerate() {
        if r.k != i {
            return Err(Error::InvalidInput(format!(
                "{}: row {} has k = {}, expected consecutive iterations from 0",
                path.display(),
                i + 1,
                r.k
            )));
        }
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub status: Status,
    pub iterations: usize,
    pub objective: f64,
    pub kkt_max: f64,
    pub gamma: f64,
}

impl Summary {
    pub fn new(res: &SolveResult, gamma: f64) -> Self {
        Summary {
            status: res.status,
            iterations: res.iterations,
            objective: res.objective,
            kkt_max: res.kkt.max,
            gamma,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate, BenchSpec};
    use crate::regularizers::BoxSet;
    use crate::solver::{solve, SolverConfig};

    fn roundtrip(p: &RlsdProblem) -> RlsdProblem {
        let dir = tempfile::tempdir().unwrap();
        let path = write_problem(dir.path(), p).unwrap();
        read_problem(&path).unwrap()
    }

    #[test]
    fn bundles_roundtrip() {
        for spec in [
            BenchSpec::spcp(5, 4, 1),
            BenchSpec::background(6, 3, 2),
            BenchSpec::cpcp(5, 4, 0.6, 3),
            BenchSpec::lasso(8, 3, 4),
        ] {
            let p = generate(&spec).unwrap().problem;
            let q = roundtrip(&p);
            assert_eq!(p.b(), q.b());
            assert_eq!(p.block1().map(), q.block1().map());
            assert_eq!(p.block2().map(), q.block2().map());
            assert_eq!(p.block1().regularizer(), q.block1().regularizer());
            assert_eq!(p.block2().regularizer(), q.block2().regularizer());
        }
    }

    #[test]
    fn quadratic_bundle() {
        let b1 = Block::new(
            BlockMap::identity(2).unwrap(),
            Regularizer::zero_on_box(BoxSet::uniform(-1.0, 1.0).unwrap()).unwrap(),
        )
        .unwrap();
        let q = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.5]);
        let f3 = StronglyConvexSmooth::new(q, DVector::from_vec(vec![0.1, -0.3]), None, None).unwrap();
        let p = RlsdProblem::new(b1, Block::empty(2), DVector::from_vec(vec![0.3, 0.7]), F3::Quadratic(f3))
            .unwrap();
        let back = roundtrip(&p);
        let (F3::Quadratic(a), F3::Quadratic(b)) = (p.f3(), back.f3()) else {
            panic!("f3 kind lost");
        };
        assert_eq!(a.q_matrix(), b.q_matrix());
        assert_eq!(a.sigma(), b.sigma());
    }

    #[test]
    fn trace_roundtrip_is_exact() {
        let p = generate(&BenchSpec::lasso(8, 3, 4)).unwrap().problem;
        let res = solve(&p, &SolverConfig::new(0.7).with_trace(false)).unwrap();
        let recs = res.trace.unwrap().records;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        write_trace_csv(&path, &recs).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), TRACE_HEADER.join(","));
        assert_eq!(read_trace_csv(&path).unwrap(), recs);
    }

    #[test]
    fn parse_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.csv");
        fs::write(&path, "1\nabc\n").unwrap();
        assert!(matches!(read_vector_csv(&path), Err(Error::Parse { .. })));
        fs::write(&path, "1,2\n3\n").unwrap();
        assert!(read_matrix_csv(&path).is_err());
        assert!(read_problem(&dir.path().join("missing.json")).is_err());
        fs::write(&path, "k,objective\n0,1\n").unwrap();
        assert!(matches!(read_trace_csv(&path), Err(Error::InvalidInput(_))));
    }

    #[test]
    fn float_format_roundtrips() {
        for x in [0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0] {
            assert_eq!(fmt_f64(x).parse::<f64>().unwrap(), x);
        }
    }
}
