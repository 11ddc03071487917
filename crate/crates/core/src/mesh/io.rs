//! Native mesh text format.
//!
//! ```text
//! MYOMESH 1
//! NODES <n>
//! <index> <x> <y> <z>
//! CELLS <m> <nodes-per-cell>
//! <index> <region> <n0> ... <n7|n26>
//! FACESETS <k>
//! <name> <count> <cell>:<face> ...
//! NODESETS <k>                          (optional)
//! <name> <count> <node> ...
//! FIBRES REGION <k>                     (optional, one of three forms)
//! <region> <ax> <ay> <az>
//! FIBRES CELL <m>
//! <cell> <ax> <ay> <az>
//! FIBRES QUADRATURE <m> <points-per-cell>
//! <cell> <point> <ax> <ay> <az>
//! END
//! ```
//!
//! Lengths are in metres. Floats are written with 17 significant digits so a
//! parse/write cycle reproduces the file byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{FibreField, Mesh};
use crate::constitutive::TissueKind;
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::tensor::Vec3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ImportOptions {
    /// Normalize fibre vectors instead of rejecting non-unit ones.
    pub normalize_fibres: bool,
}

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn vec_str(v: &Vec3) -> String {
    format!("{} {} {}", fmt_f64(v.x), fmt_f64(v.y), fmt_f64(v.z))
}

pub fn write_mesh(mesh: &Mesh) -> String {
    let mut s = String::new();
    s.push_str("MYOMESH 1\n");
    let _ = writeln!(s, "NODES {}", mesh.n_nodes());
    for (i, x) in mesh.nodes.iter().enumerate() {
        let _ = writeln!(s, "{i} {}", vec_str(x));
    }
    let _ = writeln!(s, "CELLS {} {}", mesh.n_cells(), mesh.nodes_per_cell());
    for c in 0..mesh.n_cells() {
        let _ = write!(s, "{c} {}", mesh.regions[c].name());
        for n in mesh.cell(c) {
            let _ = write!(s, " {n}");
        }
        s.push('\n');
    }
    let _ = writeln!(s, "FACESETS {}", mesh.face_sets.len());
    for (name, faces) in &mesh.face_sets {
        let _ = write!(s, "{name} {}", faces.len());
        for (c, f) in faces {
            let _ = write!(s, " {c}:{f}");
        }
        s.push('\n');
    }
    if !mesh.node_sets.is_empty() {
        let _ = writeln!(s, "NODESETS {}", mesh.node_sets.len());
        for (name, nodes) in &mesh.node_sets {
            let _ = write!(s, "{name} {}", nodes.len());
            for n in nodes {
                let _ = write!(s, " {n}");
            }
            s.push('\n');
        }
    }
    match &mesh.fibres {
        FibreField::PerRegion(m) => {
            let _ = writeln!(s, "FIBRES REGION {}", m.len());
            for (k, v) in m {
                let _ = writeln!(s, "{} {}", k.name(), vec_str(v));
            }
        }
        FibreField::PerCell(v) => {
            let _ = writeln!(s, "FIBRES CELL {}", v.len());
            for (c, a) in v.iter().enumerate() {
                let _ = writeln!(s, "{c} {}", vec_str(a));
            }
        }
        FibreField::PerQuadrature { per_cell, dirs } => {
            let _ = writeln!(
                s,
                "FIBRES QUADRATURE {} {per_cell}",
                dirs.len() / per_cell.max(&1)
            );
            for (i, a) in dirs.iter().enumerate() {
                let _ = writeln!(s, "{} {} {}", i / per_cell, i % per_cell, vec_str(a));
            }
        }
    }
    s.push_str("END\n");
    s
}

struct Lines<'a> {
    inner: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Self {
            inner: text.lines().enumerate().peekable(),
            last: 0,
        }
    }

    /// Next non-empty, non-comment line as tokens, with its 1-based number.
    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        for (i, line) in self.inner.by_ref() {
            let t = line.trim();
            if t.is_empty() || t.starts_with('#') {
                continue;
            }
            self.last = i + 1;
            return Some((i + 1, t.split_whitespace().collect()));
        }
        None
    }

    fn expect(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.last;
        self.next()
            .ok_or_else(|| perr(last + 1, format!("unexpected end of file, expected {what}")))
    }
}

fn perr(line: usize, message: impl Into<String>) -> MyoError {
    MyoError::Parse {
        line,
        message: message.into(),
    }
}

fn num<T: std::str::FromStr>(line: usize, tok: &str, what: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| perr(line, format!("invalid {what} '{tok}'")))
}

fn arity(line: usize, toks: &[&str], n: usize, what: &str) -> Result<()> {
    if toks.len() != n {
        return Err(perr(
            line,
            format!("{what}: expected {n} fields, found {}", toks.len()),
        ));
    }
    Ok(())
}

fn vec3(line: usize, toks: &[&str]) -> Result<Vec3> {
    Ok(Vec3::new(
        num(line, toks[0], "coordinate")?,
        num(line, toks[1], "coordinate")?,
        num(line, toks[2], "coordinate")?,
    ))
}

fn check_index(line: usize, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(perr(
            line,
            format!("record index {got} out of sequence, expected {want}"),
        ));
    }
    Ok(())
}

pub fn parse_mesh(text: &str, opts: ImportOptions) -> Result<Mesh> {
    let mut lines = Lines::new(text);
    let (ln, head) = lines.expect("header")?;
    if head != ["MYOMESH", "1"] {
        return Err(perr(ln, "expected header 'MYOMESH 1'"));
    }

    let (ln, t) = lines.expect("NODES")?;
    if t.len() != 2 || t[0] != "NODES" {
        return Err(perr(ln, "expected 'NODES <count>'"));
    }
    let n_nodes: usize = num(ln, t[1], "node count")?;
    let mut nodes = Vec::with_capacity(n_nodes);
    for i in 0..n_nodes {
        let (ln, t) = lines.expect("node record")?;
        arity(ln, &t, 4, "node")?;
        check_index(ln, num(ln, t[0], "node index")?, i)?;
        nodes.push(vec3(ln, &t[1..])?);
    }

    let (ln, t) = lines.expect("CELLS")?;
    if t.len() != 3 || t[0] != "CELLS" {
        return Err(perr(ln, "expected 'CELLS <count> <nodes-per-cell>'"));
    }
    let n_cells: usize = num(ln, t[1], "cell count")?;
    let npc: usize = num(ln, t[2], "nodes per cell")?;
    let element = ElementType::from_nodes_per_cell(npc)
        .ok_or_else(|| perr(ln, format!("unsupported nodes per cell {npc} (8 or 27)")))?;
    let mut connectivity = Vec::with_capacity(n_cells * npc);
    let mut regions = Vec::with_capacity(n_cells);
    for c in 0..n_cells {
        let (ln, t) = lines.expect("cell record")?;
        arity(ln, &t, npc + 2, "cell")?;
        check_index(ln, num(ln, t[0], "cell index")?, c)?;
        regions.push(
            TissueKind::from_name(t[1])
                .ok_or_else(|| perr(ln, format!("unknown region '{}'", t[1])))?,
        );
        for tok in &t[2..] {
            let n: usize = num(ln, tok, "node index")?;
            if n >= n_nodes {
                return Err(MyoError::Validation(format!(
                    "cell {c} (line {ln}): node index {n} out of range"
                )));
            }
            connectivity.push(n);
        }
    }

    let mut face_sets = BTreeMap::new();
    let mut node_sets = BTreeMap::new();
    let mut fibres = None;
    loop {
        let (ln, t) = lines.expect("section or END")?;
        match t[0] {
            "END" => break,
            "FACESETS" => {
                arity(ln, &t, 2, "FACESETS header")?;
                let k: usize = num(ln, t[1], "set count")?;
                for _ in 0..k {
                    let (ln, t) = lines.expect("face set")?;
                    if t.len() < 2 {
                        return Err(perr(ln, "face set needs a name and a count"));
                    }
                    let count: usize = num(ln, t[1], "face count")?;
                    arity(ln, &t, count + 2, "face set")?;
                    let mut faces = Vec::with_capacity(count);
                    for tok in &t[2..] {
                        let (c, f) = tok.split_once(':').ok_or_else(|| {
                            perr(ln, format!("expected cell:face, found '{tok}'"))
                        })?;
                        faces.push((num(ln, c, "cell index")?, num(ln, f, "face index")?));
                    }
                    face_sets.insert(t[0].to_string(), faces);
                }
            }
            "NODESETS" => {
                arity(ln, &t, 2, "NODESETS header")?;
                let k: usize = num(ln, t[1], "set count")?;
                for _ in 0..k {
                    let (ln, t) = lines.expect("node set")?;
                    if t.len() < 2 {
                        return Err(perr(ln, "node set needs a name and a count"));
                    }
                    let count: usize = num(ln, t[1], "node count")?;
                    arity(ln, &t, count + 2, "node set")?;
                    let ids = t[2..]
                        .iter()
                        .map(|s| num(ln, s, "node index"))
                        .collect::<Result<Vec<usize>>>()?;
                    node_sets.insert(t[0].to_string(), ids);
                }
            }
            "FIBRES" => {
                if t.len() < 3 {
                    return Err(perr(
                        ln,
                        "expected 'FIBRES <REGION|CELL|QUADRATURE> <count>'",
                    ));
                }
                let count: usize = num(ln, t[2], "fibre count")?;
                fibres = Some(match t[1] {
                    "REGION" => {
                        let mut m = BTreeMap::new();
                        for _ in 0..count {
                            let (ln, t) = lines.expect("region fibre")?;
                            arity(ln, &t, 4, "region fibre")?;
                            let k = TissueKind::from_name(t[0])
                                .ok_or_else(|| perr(ln, format!("unknown region '{}'", t[0])))?;
                            m.insert(k, vec3(ln, &t[1..])?);
                        }
                        FibreField::PerRegion(m)
                    }
                    "CELL" => {
                        let mut v = Vec::with_capacity(count);
                        for c in 0..count {
                            let (ln, t) = lines.expect("cell fibre")?;
                            arity(ln, &t, 4, "cell fibre")?;
                            check_index(ln, num(ln, t[0], "cell index")?, c)?;
                            v.push(vec3(ln, &t[1..])?);
                        }
                        FibreField::PerCell(v)
                    }
                    "QUADRATURE" => {
                        arity(ln, &t, 4, "FIBRES QUADRATURE header")?;
                        let per_cell: usize = num(ln, t[3], "points per cell")?;
                        let mut dirs = Vec::with_capacity(count * per_cell);
                        for i in 0..count * per_cell {
                            let (ln, t) = lines.expect("point fibre")?;
                            arity(ln, &t, 5, "point fibre")?;
                            check_index(ln, num(ln, t[0], "cell index")?, i / per_cell)?;
                            check_index(ln, num(ln, t[1], "point index")?, i % per_cell)?;
                            dirs.push(vec3(ln, &t[2..])?);
                        }
                        FibreField::PerQuadrature { per_cell, dirs }
                    }
                    other => return Err(perr(ln, format!("unknown fibre layout '{other}'"))),
                });
            }
            other => return Err(perr(ln, format!("unknown section '{other}'"))),
        }
    }

    let mut mesh = Mesh {
        element,
        nodes,
        connectivity,
        regions,
        face_sets,
        node_sets,
        fibres: fibres.unwrap_or_else(|| {
            FibreField::PerRegion(BTreeMap::from([(TissueKind::Muscle, Vec3::x())]))
        }),
    };
    if opts.normalize_fibres {
        mesh.normalize_fibres();
    }
    mesh.validate().map_err(|e| match e {
        MyoError::InvertedCell { cell, det } => MyoError::Validation(format!(
            "cell {cell} is inverted (reference Jacobian {det:e})"
        )),
        other => other,
    })?;
    Ok(mesh)
}

pub fn import_mesh(path: &Path, opts: ImportOptions) -> Result<Mesh> {
    parse_mesh(&std::fs::read_to_string(path)?, opts)
}
