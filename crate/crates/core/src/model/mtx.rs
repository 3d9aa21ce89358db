//! Matrix Market I/O and ingestion of (E, A, B, C, D) descriptor files.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{DaeBlocks, SemiExplicitDae};
use crate::error::{MorError, Result};
use crate::linalg::{Mat, SparseMatrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
    SkewSymmetric,
}

/// Parse a real Matrix Market stream (coordinate or array format).
pub fn read_matrix_market(reader: impl Read) -> Result<SparseMatrix> {
    let mut lines = BufReader::new(reader).lines().enumerate();
    let (_, banner) = lines.next().ok_or(MorError::Parse {
        line: 1,
        msg: "empty file".into(),
    })?;
    let banner = banner?;
    let tokens: Vec<String> = banner.split_whitespace().map(|t| t.to_ascii_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(MorError::Parse {
            line: 1,
            msg: format!("bad banner '{banner}'"),
        });
    }
    let coordinate = match tokens[2].as_str() {
        "coordinate" => true,
        "array" => false,
        other => return Err(parse_err(1, format!("unsupported format '{other}'"))),
    };
    if !matches!(tokens[3].as_str(), "real" | "integer" | "double") {
        return Err(parse_err(1, format!("unsupported field '{}'", tokens[3])));
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" => Symmetry::SkewSymmetric,
        other => return Err(parse_err(1, format!("unsupported symmetry '{other}'"))),
    };

    let mut data = lines.filter_map(|(k, l)| match l {
        Ok(l) if l.trim().is_empty() || l.trim_start().starts_with('%') => None,
        Ok(l) => Some(Ok((k + 1, l))),
        Err(e) => Some(Err(MorError::from(e))),
    });
    let (size_line, size) = data.next().ok_or(parse_err(2, "missing size line".into()))??;
    let dims: Vec<usize> = size
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| parse_err(size_line, format!("bad size '{t}'"))))
        .collect::<Result<_>>()?;

    let mut trip = Vec::new();
    let push = |trip: &mut Vec<(usize, usize, f64)>, i: usize, j: usize, v: f64| {
        trip.push((i, j, v));
        if i != j {
            match symmetry {
                Symmetry::General => {}
                Symmetry::Symmetric => trip.push((j, i, v)),
                Symmetry::SkewSymmetric => trip.push((j, i, -v)),
            }
        }
    };
    let (nrows, ncols) = if coordinate {
        let [nrows, ncols, nnz] = dims[..] else {
            return Err(parse_err(size_line, "coordinate size line needs 3 fields".into()));
        };
        for _ in 0..nnz {
            let (ln, l) = data
                .next()
                .ok_or(parse_err(0, "fewer entries than declared".into()))??;
            let f: Vec<&str> = l.split_whitespace().collect();
            if f.len() < 3 {
                return Err(parse_err(ln, "entry needs row, column and value".into()));
            }
            let i: usize = f[0].parse().map_err(|_| parse_err(ln, "bad row index".into()))?;
            let j: usize = f[1].parse().map_err(|_| parse_err(ln, "bad column index".into()))?;
            let v: f64 = f[2].parse().map_err(|_| parse_err(ln, "bad value".into()))?;
            if i == 0 || j == 0 || i > nrows || j > ncols {
                return Err(parse_err(ln, format!("index ({i},{j}) out of range")));
            }
            push(&mut trip, i - 1, j - 1, v);
        }
        (nrows, ncols)
    } else {
        let [nrows, ncols] = dims[..] else {
            return Err(parse_err(size_line, "array size line needs 2 fields".into()));
        };
        for j in 0..ncols {
            let start = if symmetry == Symmetry::General { 0 } else { j };
            for i in start..nrows {
                let (ln, l) = data
                    .next()
                    .ok_or(parse_err(0, "fewer entries than declared".into()))??;
                let v: f64 = l.trim().parse().map_err(|_| parse_err(ln, "bad value".into()))?;
                push(&mut trip, i, j, v);
            }
        }
        (nrows, ncols)
    };
    SparseMatrix::from_triplets(nrows, ncols, &trip)
}

fn parse_err(line: usize, msg: String) -> MorError {
    MorError::Parse { line, msg }
}

pub fn write_matrix_market(m: &SparseMatrix, out: &mut impl Write) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", m.nrows(), m.ncols(), m.nnz())?;
    for (i, j, v) in m.triplets() {
        // {:e} prints the shortest representation that round-trips exactly
        writeln!(out, "{} {} {:e}", i + 1, j + 1, v)?;
    }
    Ok(())
}

pub fn read_mtx_file(path: &Path) -> Result<SparseMatrix> {
    read_matrix_market(std::fs::File::open(path)?)
}

pub fn write_mtx_file(m: &SparseMatrix, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_matrix_market(m, &mut f)?;
    f.flush()?;
    Ok(())
}

/// JSON sidecar naming the descriptor files, relative to the sidecar's directory.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(rename_all = "UPPERCASE")]
pub struct Sidecar {
    pub e: PathBuf,
    pub a: PathBuf,
    pub b: PathBuf,
    pub c: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<PathBuf>,
    #[serde(default, rename = "n_dyn", skip_serializing_if = "Option::is_none")]
    pub n_dyn: Option<usize>,
}

/// How the file ordering was mapped onto the [x1; x2] partition.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct IngestRecord {
    /// permutation[k] = original index of new state k
    pub permutation: Vec<usize>,
    pub n_dyn: usize,
    pub identity: bool,
}

/// Descriptor data as raw matrices, before partitioning.
#[derive(Clone, Debug)]
pub struct DescriptorFiles {
    pub e: SparseMatrix,
    pub a: SparseMatrix,
    pub b: Mat,
    pub c: Mat,
    pub d: Option<Mat>,
}

pub fn load_matrix_market(sidecar_path: &Path) -> Result<(SemiExplicitDae, IngestRecord)> {
    let sidecar: Sidecar = serde_json::from_str(&std::fs::read_to_string(sidecar_path)?)?;
    let dir = sidecar_path.parent().unwrap_or(Path::new("."));
    let files = DescriptorFiles {
        e: read_mtx_file(&dir.join(&sidecar.e))?,
        a: read_mtx_file(&dir.join(&sidecar.a))?,
        b: read_mtx_file(&dir.join(&sidecar.b))?.to_dense(),
        c: read_mtx_file(&dir.join(&sidecar.c))?.to_dense(),
        d: match &sidecar.d {
            Some(p) => Some(read_mtx_file(&dir.join(p))?.to_dense()),
            None => None,
        },
    };
    partition_descriptor(&files, sidecar.n_dyn)
}

/// Symmetrically permute so that the nonzero rows/columns of E come first.
pub fn partition_descriptor(f: &DescriptorFiles, n_dyn_hint: Option<usize>) -> Result<(SemiExplicitDae, IngestRecord)> {
    let n = f.e.nrows();
    if f.e.shape() != (n, n) || f.a.shape() != (n, n) || f.b.nrows() != n || f.c.ncols() != n {
        return Err(MorError::dims(format!(
            "E {:?}, A {:?}, B {:?}, C {:?}",
            f.e.shape(),
            f.a.shape(),
            f.b.shape(),
            f.c.shape()
        )));
    }
    let mut row_nz = vec![false; n];
    let mut col_nz = vec![false; n];
    for (i, j, _) in f.e.triplets() {
        row_nz[i] = true;
        col_nz[j] = true;
    }
    if let Some(k) = (0..n).find(|&k| row_nz[k] != col_nz[k]) {
        return Err(MorError::NotSemiExplicit(format!(
            "E has a zero {} at index {k} whose {} is nonzero; no symmetric permutation isolates E11",
            if row_nz[k] { "column" } else { "row" },
            if row_nz[k] { "row" } else { "column" },
        )));
    }
    let mut perm: Vec<usize> = (0..n).filter(|&k| row_nz[k]).collect();
    let n_dyn = perm.len();
    perm.extend((0..n).filter(|&k| !row_nz[k]));
    if let Some(h) = n_dyn_hint {
        if h != n_dyn {
            return Err(MorError::NotSemiExplicit(format!(
                "sidecar declares n_dyn = {h} but E has {n_dyn} nonzero rows"
            )));
        }
    }

    let e = f.e.permute_symmetric(&perm);
    let a = f.a.permute_symmetric(&perm);
    let b = Mat::from_fn(n, f.b.ncols(), |i, j| f.b[(perm[i], j)]);
    let c = Mat::from_fn(f.c.nrows(), n, |i, j| f.c[(i, perm[j])]);
    let d = f.d.clone().unwrap_or_else(|| Mat::zeros(c.nrows(), b.ncols()));
    let n2 = n - n_dyn;
    let blocks = DaeBlocks {
        e11: e.slice(0..n_dyn, 0..n_dyn),
        a11: a.slice(0..n_dyn, 0..n_dyn),
        a12: a.slice(0..n_dyn, n_dyn..n),
        a21: a.slice(n_dyn..n, 0..n_dyn),
        a22: a.slice(n_dyn..n, n_dyn..n),
        b11: b.rows(0, n_dyn).clone_owned(),
        b22: b.rows(n_dyn, n2).clone_owned(),
        c11: c.columns(0, n_dyn).clone_owned(),
        c22: c.columns(n_dyn, n2).clone_owned(),
        d,
    };
    let dae = SemiExplicitDae::new(blocks).map_err(|e| match e {
        MorError::SingularMatrix { context, .. } => {
            MorError::NotSemiExplicit(format!("{context} is singular after partitioning"))
        }
        other => other,
    })?;
    let identity = perm.iter().enumerate().all(|(k, &p)| k == p);
    Ok((
        dae,
        IngestRecord {
            permutation: perm,
            n_dyn,
            identity,
        },
    ))
}

/// Write E, A, B, C, D and a sidecar into `dir`; returns the sidecar path.
pub fn save_matrix_market(dae: &SemiExplicitDae, dir: &Path, stem: &str) -> Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let desc = dae.descriptor();
    let name = |m: &str| PathBuf::from(format!("{stem}.{m}.mtx"));
    write_mtx_file(&desc.e, &dir.join(name("E")))?;
    write_mtx_file(&desc.a, &dir.join(name("A")))?;
    write_mtx_file(&SparseMatrix::from_dense(&desc.b), &dir.join(name("B")))?;
    write_mtx_file(&SparseMatrix::from_dense(&desc.c), &dir.join(name("C")))?;
    write_mtx_file(&SparseMatrix::from_dense(&desc.d), &dir.join(name("D")))?;
    let sidecar = Sidecar {
        e: name("E"),
        a: name("A"),
        b: name("B"),
        c: name("C"),
        d: Some(name("D")),
        n_dyn: Some(dae.n_dyn()),
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(&path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(path)
}
