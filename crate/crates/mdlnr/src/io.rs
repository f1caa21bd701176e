//! File formats: state matrices (TSV/CSV) and networks (TSV edge list with a
//! JSON sidecar carrying categories and node fields).

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{
    ordered, Alphabet, DataKind, Dataset, NodeFields, WeightTarget, WeightedNetwork,
};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: empty file")]
    Empty { path: PathBuf },
    #[error("{path}: row {row} has {got} values, expected {expected}")]
    Ragged {
        path: PathBuf,
        row: usize,
        got: usize,
        expected: usize,
    },
    #[error("{path}: row {row}, column {col}: value '{token}' outside alphabet {alphabet}")]
    BadValue {
        path: PathBuf,
        row: usize,
        col: usize,
        token: String,
        alphabet: &'static str,
    },
    #[error("{path}: line {line}: malformed edge line '{content}'")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        content: String,
    },
    #[error("{path}: line {line}: self-loop at node {node}")]
    SelfLoop {
        path: PathBuf,
        line: usize,
        node: usize,
    },
    #[error("{path}: line {line}: duplicate pair ({i}, {j})")]
    DuplicatePair {
        path: PathBuf,
        line: usize,
        i: usize,
        j: usize,
    },
    #[error("{path}: sidecar inconsistent with edge list: {reason}")]
    SidecarMismatch { path: PathBuf, reason: String },
    #[error("{path}: invalid sidecar: {source}")]
    SidecarParse {
        path: PathBuf,
        source: serde_json::Error,
    },
}

/// Accepted value alphabets for data files.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AlphabetSpec {
    /// Values in {-1, +1}.
    Binary,
    /// Values in {-1, 0, +1}.
    ZeroValued,
    /// Values in {0, 1}, mapped to {-1, +1}.
    ZeroOneMapped,
}

impl AlphabetSpec {
    fn name(self) -> &'static str {
        match self {
            AlphabetSpec::Binary => "{-1,1}",
            AlphabetSpec::ZeroValued => "{-1,0,1}",
            AlphabetSpec::ZeroOneMapped => "{0,1}",
        }
    }

    pub fn alphabet(self) -> Alphabet {
        match self {
            AlphabetSpec::Binary | AlphabetSpec::ZeroOneMapped => Alphabet::Binary,
            AlphabetSpec::ZeroValued => Alphabet::ZeroValued,
        }
    }

    fn parse_token(self, token: &str) -> Option<i8> {
        let v: i8 = match token {
            "1" | "+1" => 1,
            "-1" => -1,
            "0" => 0,
            _ => return None,
        };
        match self {
            AlphabetSpec::Binary => (v == 1 || v == -1).then_some(v),
            AlphabetSpec::ZeroValued => Some(v),
            AlphabetSpec::ZeroOneMapped => match v {
                1 => Some(1),
                0 => Some(-1),
                _ => None,
            },
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParsedMatrix {
    pub n_nodes: usize,
    pub n_samples: usize,
    pub states: Vec<i8>,
    pub labels: Option<Vec<String>>,
}

impl ParsedMatrix {
    pub fn into_dataset(
        self,
        kind: DataKind,
        alphabet: Alphabet,
    ) -> Result<Dataset, crate::graph::DataError> {
        Dataset::new(self.n_nodes, self.n_samples, self.states, kind, alphabet)
    }
}

fn split_line(line: &str) -> Vec<&str> {
    if line.contains('\t') {
        line.split('\t').map(str::trim).collect()
    } else if line.contains(',') {
        line.split(',').map(str::trim).collect()
    } else {
        line.split_whitespace().collect()
    }
}

/// Parse a node-state matrix: rows are nodes, columns are samples. A first
/// line equal to `#labels` declares that every row starts with a node label.
pub fn parse_data_matrix(path: &Path, spec: AlphabetSpec) -> Result<ParsedMatrix, IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut lines: Vec<&str> = text.lines().collect();
    while lines.last().is_some_and(|l| l.trim().is_empty()) {
        lines.pop();
    }
    if lines.is_empty() {
        return Err(IoError::Empty {
            path: path.to_path_buf(),
        });
    }
    let labeled = lines[0].trim() == "#labels";
    let rows = if labeled { &lines[1..] } else { &lines[..] };
    if rows.is_empty() {
        return Err(IoError::Empty {
            path: path.to_path_buf(),
        });
    }
    let mut states: Vec<i8> = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    let mut n_samples: Option<usize> = None;
    for (r, line) in rows.iter().enumerate() {
        let mut fields = split_line(line);
        if labeled {
            if fields.is_empty() {
                return Err(IoError::Ragged {
                    path: path.to_path_buf(),
                    row: r,
                    got: 0,
                    expected: n_samples.map_or(1, |m| m + 1),
                });
            }
            labels.push(fields.remove(0).to_string());
        }
        match n_samples {
            None => n_samples = Some(fields.len()),
            Some(m) if m != fields.len() => {
                return Err(IoError::Ragged {
                    path: path.to_path_buf(),
                    row: r,
                    got: fields.len(),
                    expected: m,
                });
            }
            _ => {}
        }
        for (c, token) in fields.iter().enumerate() {
            match spec.parse_token(token) {
                Some(v) => states.push(v),
                None => {
                    return Err(IoError::BadValue {
                        path: path.to_path_buf(),
                        row: r,
                        col: c,
                        token: token.to_string(),
                        alphabet: spec.name(),
                    });
                }
            }
        }
    }
    Ok(ParsedMatrix {
        n_nodes: rows.len(),
        n_samples: n_samples.unwrap_or(0),
        states,
        labels: labeled.then_some(labels),
    })
}

pub fn write_data_matrix(
    path: &Path,
    data: &Dataset,
    labels: Option<&[String]>,
) -> Result<(), IoError> {
    let mut out = String::new();
    if labels.is_some() {
        out.push_str("#labels\n");
    }
    for i in 0..data.n_nodes() {
        let mut first = true;
        if let Some(ls) = labels {
            out.push_str(&ls[i]);
            first = false;
        }
        for m in 0..data.n_samples() {
            if !first {
                out.push('\t');
            }
            let _ = write!(out, "{}", data.get(i, m));
            first = false;
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Serialize, Deserialize)]
struct SidecarCategory {
    value: f64,
    count: usize,
}

/// Category and node-field companion of a network edge list.
#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    n_nodes: usize,
    delta: f64,
    lambda: f64,
    categories: Vec<SidecarCategory>,
    delta_theta: f64,
    lambda_theta: f64,
    theta: Vec<f64>,
    theta_categories: Vec<SidecarCategory>,
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut os = path.as_os_str().to_os_string();
    os.push(".json");
    PathBuf::from(os)
}

/// Write the network as TSV lines `i <TAB> j <TAB> weight` (i < j, 17
/// significant digits) plus a JSON sidecar with categories and fields.
pub fn write_network(
    path: &Path,
    net: &WeightedNetwork,
    fields: &NodeFields,
) -> Result<(), IoError> {
    let mut out = String::new();
    for ((i, j), w) in net.sorted_edges() {
        let _ = writeln!(out, "{i}\t{j}\t{w:.16e}");
    }
    fs::write(path, out).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let sidecar = Sidecar {
        n_nodes: net.n_nodes(),
        delta: net.grid_delta(),
        lambda: net.categories().lambda(),
        categories: net
            .categories()
            .sorted_value_counts()
            .into_iter()
            .map(|(value, count)| SidecarCategory { value, count })
            .collect(),
        delta_theta: fields.delta(),
        lambda_theta: fields.lambda(),
        theta: fields.thetas().to_vec(),
        theta_categories: fields
            .sorted_value_counts()
            .into_iter()
            .map(|(value, count)| SidecarCategory { value, count })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    let sp = sidecar_path(path);
    fs::write(&sp, json).map_err(|source| IoError::File { path: sp, source })
}

/// Read a network written by [`write_network`]. Without a sidecar the node
/// count is inferred from the largest index, every distinct weight becomes
/// its own category, and the fields are zero.
pub fn read_network(path: &Path) -> Result<(WeightedNetwork, NodeFields), IoError> {
    let text = fs::read_to_string(path).map_err(|source| IoError::File {
        path: path.to_path_buf(),
        source,
    })?;
    let mut edges: Vec<(usize, usize, f64)> = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = split_line(line);
        let parsed = (|| {
            if fields.len() != 3 {
                return None;
            }
            let i: usize = fields[0].parse().ok()?;
            let j: usize = fields[1].parse().ok()?;
            let w: f64 = fields[2].parse().ok()?;
            Some((i, j, w))
        })();
        let Some((i, j, w)) = parsed else {
            return Err(IoError::MalformedLine {
                path: path.to_path_buf(),
                line: idx + 1,
                content: line.to_string(),
            });
        };
        if i == j {
            return Err(IoError::SelfLoop {
                path: path.to_path_buf(),
                line: idx + 1,
                node: i,
            });
        }
        let (a, b) = ordered(i, j);
        if edges.iter().any(|&(x, y, _)| (x, y) == (a, b)) {
            return Err(IoError::DuplicatePair {
                path: path.to_path_buf(),
                line: idx + 1,
                i: a,
                j: b,
            });
        }
        edges.push((a, b, w));
    }

    let sp = sidecar_path(path);
    let sidecar: Option<Sidecar> = if sp.exists() {
        let json = fs::read_to_string(&sp).map_err(|source| IoError::File {
            path: sp.clone(),
            source,
        })?;
        Some(
            serde_json::from_str(&json).map_err(|source| IoError::SidecarParse {
                path: sp.clone(),
                source,
            })?,
        )
    } else {
        None
    };

    let max_node = edges.iter().map(|&(_, j, _)| j).max().map_or(0, |j| j + 1);
    let (n_nodes, delta, lambda) = match &sidecar {
        Some(s) => (s.n_nodes, s.delta, s.lambda),
        None => (max_node, 1e-8, 1.0),
    };
    if n_nodes < max_node {
        return Err(IoError::SidecarMismatch {
            path: path.to_path_buf(),
            reason: format!("edge list references node {} of {n_nodes}", max_node - 1),
        });
    }
    let mut net = WeightedNetwork::new(n_nodes, delta, lambda);
    for &(i, j, w) in &edges {
        net.set_entry_target(i, j, WeightTarget::NewValue(w))
            .map_err(|e| IoError::SidecarMismatch {
                path: path.to_path_buf(),
                reason: e.to_string(),
            })?;
    }

    let fields = match &sidecar {
        Some(s) => {
            // Validate the recorded categories against the rebuilt network.
            let rebuilt = net.categories().sorted_value_counts();
            let recorded: Vec<(f64, usize)> =
                s.categories.iter().map(|c| (c.value, c.count)).collect();
            if rebuilt != recorded {
                return Err(IoError::SidecarMismatch {
                    path: path.to_path_buf(),
                    reason: "edge weights do not reproduce the recorded categories".to_string(),
                });
            }
            if s.theta.len() != n_nodes {
                return Err(IoError::SidecarMismatch {
                    path: path.to_path_buf(),
                    reason: format!("theta has {} entries for {n_nodes} nodes", s.theta.len()),
                });
            }
            let mut f = NodeFields::new_zero(n_nodes, s.delta_theta, s.lambda_theta);
            for (i, &t) in s.theta.iter().enumerate() {
                f.set_theta(i, t, true)
                    .map_err(|e| IoError::SidecarMismatch {
                        path: path.to_path_buf(),
                        reason: e.to_string(),
                    })?;
            }
            let rebuilt_u = f.sorted_value_counts();
            let recorded_u: Vec<(f64, usize)> = s
                .theta_categories
                .iter()
                .map(|c| (c.value, c.count))
                .collect();
            if rebuilt_u != recorded_u {
                return Err(IoError::SidecarMismatch {
                    path: path.to_path_buf(),
                    reason: "theta values do not reproduce the recorded categories".to_string(),
                });
            }
            f
        }
        None => NodeFields::new_zero(n_nodes, 1e-8, 1.0),
    };
    Ok((net, fields))
}

/// The dataset kind a model expects from its input file.
pub fn expected_kind(dynamics: crate::models::Dynamics) -> DataKind {
    match dynamics {
        crate::models::Dynamics::Kinetic => DataKind::Markov,
        crate::models::Dynamics::EquilibriumPl => DataKind::Iid,
    }
}
