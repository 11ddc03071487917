//! Legacy-format ASCII VTK unstructured grids for field snapshots.

use std::fmt::Write as _;

use crate::assembly::Model;
use crate::constitutive::MaterialLibrary;
use crate::dynamics::Checkpoint;
use crate::elements::ElementType;
use crate::error::{MyoError, Result};
use crate::kinematics::from_f;
use crate::mesh::Mesh;

const VTK_HEXAHEDRON: u8 = 12;
const VTK_TRIQUADRATIC_HEXAHEDRON: u8 = 29;

/// Local node of each VTK hexahedron vertex, in lexicographic `i + 2j + 4k`.
const Q1_ORDER: [usize; 8] = [0, 1, 3, 2, 4, 5, 7, 6];

/// Local node of each VTK triquadratic vertex, in lexicographic `i + 3j + 9k`:
/// corners, the twelve edges, the faces -x, +x, -y, +y, -z, +z, the centre.
const Q2_ORDER: [usize; 27] = [
    0, 2, 8, 6, 18, 20, 26, 24, // corners
    1, 5, 7, 3, 19, 23, 25, 21, 9, 11, 17, 15, // edges
    12, 14, 10, 16, 4, 22, // faces
    13,
];

#[derive(Debug, Clone, PartialEq)]
pub struct VtkArray {
    pub name: String,
    pub components: usize,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VtkFile {
    pub title: String,
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub point_data: Vec<VtkArray>,
    pub cell_data: Vec<VtkArray>,
}

impl VtkFile {
    pub fn point_array(&self, name: &str) -> Option<&VtkArray> {
        self.point_data.iter().find(|a| a.name == name)
    }

    pub fn cell_array(&self, name: &str) -> Option<&VtkArray> {
        self.cell_data.iter().find(|a| a.name == name)
    }
}

/// Snapshot of a checkpointed state on its mesh: displacement (vector,
/// components and magnitude) and velocity at the nodes; volume-averaged
/// `J`, pressure, activation, fibre direction and region per cell.
pub fn snapshot(mesh: &Mesh, cp: &Checkpoint, title: &str) -> Result<VtkFile> {
    cp.matches(mesh)?;
    let lib = MaterialLibrary::default();
    let params = mesh.regions.iter().map(|&r| lib.tissue(r)).collect();
    let model = Model::new(mesh.clone(), params, &[])?;
    let state = &cp.state;

    let order: &[usize] = match mesh.element {
        ElementType::Q1P0 => &Q1_ORDER,
        ElementType::Q2P1 => &Q2_ORDER,
    };
    let cell_type = match mesh.element {
        ElementType::Q1P0 => VTK_HEXAHEDRON,
        ElementType::Q2P1 => VTK_TRIQUADRATIC_HEXAHEDRON,
    };
    let cells = (0..mesh.n_cells())
        .map(|c| order.iter().map(|&l| mesh.cell(c)[l]).collect())
        .collect();

    let n = mesh.n_nodes();
    let u = state.u.as_slice();
    let mut point_data = vec![VtkArray {
        name: "displacement".into(),
        components: 3,
        values: u.to_vec(),
    }];
    for (i, axis) in ["x", "y", "z"].iter().enumerate() {
        point_data.push(VtkArray {
            name: format!("displacement_{axis}"),
            components: 1,
            values: (0..n).map(|a| u[3 * a + i]).collect(),
        });
    }
    point_data.push(VtkArray {
        name: "displacement_magnitude".into(),
        components: 1,
        values: (0..n).map(|a| state.node_u(a).norm()).collect(),
    });
    point_data.push(VtkArray {
        name: "velocity".into(),
        components: 3,
        values: state.v.as_slice().to_vec(),
    });

    let mut j_avg = Vec::with_capacity(mesh.n_cells());
    let mut p_avg = Vec::with_capacity(mesh.n_cells());
    let mut fibre = Vec::with_capacity(3 * mesh.n_cells());
    for c in 0..mesh.n_cells() {
        let (mut vol, mut jv, mut pv) = (0.0, 0.0, 0.0);
        for q in 0..model.n_qp() {
            let dv = model.qp_volume(c, q);
            let j = from_f(model.deformation(state, c, q))
                .map_err(|e| e.with_cell(c))?
                .j;
            vol += dv;
            jv += j * dv;
            pv += model.p_d(state, c, q).0 * dv;
        }
        j_avg.push(jv / vol);
        p_avg.push(pv / vol);
        let a = mesh.fibre(c, model.n_qp() / 2);
        fibre.extend([a.x, a.y, a.z]);
    }
    let cell_data = vec![
        VtkArray {
            name: "J".into(),
            components: 1,
            values: j_avg,
        },
        VtkArray {
            name: "pressure".into(),
            components: 1,
            values: p_avg,
        },
        VtkArray {
            name: "activation".into(),
            components: 1,
            values: cp.activation.clone(),
        },
        VtkArray {
            name: "fibre".into(),
            components: 3,
            values: fibre,
        },
        VtkArray {
            name: "region".into(),
            components: 1,
            values: mesh
                .regions
                .iter()
                .map(|&r| region_code(r) as f64)
                .collect(),
        },
    ];
    Ok(VtkFile {
        title: title.lines().next().unwrap_or("").to_string(),
        points: mesh.nodes.iter().map(|x| [x.x, x.y, x.z]).collect(),
        cells,
        cell_types: vec![cell_type; mesh.n_cells()],
        point_data,
        cell_data,
    })
}

fn region_code(r: crate::constitutive::TissueKind) -> u8 {
    use crate::constitutive::TissueKind::*;
    match r {
        Muscle => 0,
        Aponeurosis => 1,
        Tendon => 2,
        Fat => 3,
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn write_arrays(out: &mut String, arrays: &[VtkArray]) {
    for a in arrays {
        if a.components == 3 {
            let _ = writeln!(out, "VECTORS {} double", a.name);
            for v in a.values.chunks(3) {
                let _ = writeln!(out, "{} {} {}", num(v[0]), num(v[1]), num(v[2]));
            }
        } else {
            let _ = writeln!(out, "SCALARS {} double {}", a.name, a.components);
            out.push_str("LOOKUP_TABLE default\n");
            for v in a.values.chunks(a.components.max(1)) {
                let row: Vec<String> = v.iter().map(|&x| num(x)).collect();
                let _ = writeln!(out, "{}", row.join(" "));
            }
        }
    }
}

pub fn write_vtk(f: &VtkFile) -> String {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    let _ = writeln!(out, "{}", f.title);
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", f.points.len());
    for p in &f.points {
        let _ = writeln!(out, "{} {} {}", num(p[0]), num(p[1]), num(p[2]));
    }
    let size: usize = f.cells.iter().map(|c| c.len() + 1).sum();
    let _ = writeln!(out, "CELLS {} {}", f.cells.len(), size);
    for c in &f.cells {
        let ids: Vec<String> = c.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{} {}", c.len(), ids.join(" "));
    }
    let _ = writeln!(out, "CELL_TYPES {}", f.cell_types.len());
    for t in &f.cell_types {
        let _ = writeln!(out, "{t}");
    }
    if !f.point_data.is_empty() {
        let _ = writeln!(out, "POINT_DATA {}", f.points.len());
        write_arrays(&mut out, &f.point_data);
    }
    if !f.cell_data.is_empty() {
        let _ = writeln!(out, "CELL_DATA {}", f.cells.len());
        write_arrays(&mut out, &f.cell_data);
    }
    out
}

struct Reader<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Reader<'a> {
    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            let (i, l) = self.lines.next().ok_or_else(|| MyoError::Parse {
                line: self.line + 1,
                message: "unexpected end of file".into(),
            })?;
            self.line = i + 1;
            if !l.trim().is_empty() {
                return Ok(l.trim());
            }
        }
    }

    fn err(&self, message: impl Into<String>) -> MyoError {
        MyoError::Parse {
            line: self.line,
            message: message.into(),
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self, count: usize) -> Result<Vec<T>> {
        let l = self.next_line()?;
        let v: Vec<T> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| self.err(format!("bad number {t:?}"))))
            .collect::<Result<_>>()?;
        if v.len() != count {
            return Err(self.err(format!("expected {count} values, found {}", v.len())));
        }
        Ok(v)
    }

    fn count(&self, tok: Option<&str>) -> Result<usize> {
        tok.and_then(|t| t.parse().ok())
            .ok_or_else(|| self.err("bad count"))
    }
}

/// Reads files written by [`write_vtk`].
pub fn parse_vtk(text: &str) -> Result<VtkFile> {
    let mut r = Reader {
        lines: text.lines().enumerate(),
        line: 0,
    };
    let head = r.lines.next().map(|(_, l)| l).unwrap_or("");
    if !head.starts_with("# vtk DataFile") {
        return Err(MyoError::Parse {
            line: 1,
            message: "missing VTK header".into(),
        });
    }
    let title = r
        .lines
        .next()
        .map(|(_, l)| l.to_string())
        .unwrap_or_default();
    r.line = 2;
    if r.next_line()? != "ASCII" {
        return Err(r.err("only ASCII files are supported"));
    }
    if r.next_line()? != "DATASET UNSTRUCTURED_GRID" {
        return Err(r.err("expected DATASET UNSTRUCTURED_GRID"));
    }
    let l = r.next_line()?;
    let mut t = l.split_whitespace();
    if t.next() != Some("POINTS") {
        return Err(r.err("expected POINTS"));
    }
    let n_points = r.count(t.next())?;
    let mut points = Vec::with_capacity(n_points);
    for _ in 0..n_points {
        let v = r.numbers::<f64>(3)?;
        points.push([v[0], v[1], v[2]]);
    }
    let l = r.next_line()?;
    let mut t = l.split_whitespace();
    if t.next() != Some("CELLS") {
        return Err(r.err("expected CELLS"));
    }
    let n_cells = r.count(t.next())?;
    let mut cells = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        let l = r.next_line()?;
        let v: Vec<usize> = l
            .split_whitespace()
            .map(|t| t.parse().map_err(|_| r.err(format!("bad index {t:?}"))))
            .collect::<Result<_>>()?;
        if v.is_empty() || v[0] + 1 != v.len() || v[1..].iter().any(|&i| i >= n_points) {
            return Err(r.err("malformed cell record"));
        }
        cells.push(v[1..].to_vec());
    }
    let l = r.next_line()?;
    let mut t = l.split_whitespace();
    if t.next() != Some("CELL_TYPES") || r.count(t.next())? != n_cells {
        return Err(r.err("expected CELL_TYPES matching CELLS"));
    }
    let mut cell_types = Vec::with_capacity(n_cells);
    for _ in 0..n_cells {
        cell_types.push(r.numbers::<u8>(1)?[0]);
    }

    let mut point_data = Vec::new();
    let mut cell_data = Vec::new();
    let mut target: Option<(bool, usize)> = None;
    loop {
        let l = match r.next_line() {
            Ok(l) => l,
            Err(_) => break,
        };
        let tok: Vec<&str> = l.split_whitespace().collect();
        match tok.as_slice() {
            ["POINT_DATA", n] => {
                let n = r.count(Some(n))?;
                if n != n_points {
                    return Err(r.err("POINT_DATA count differs from POINTS"));
                }
                target = Some((true, n));
            }
            ["CELL_DATA", n] => {
                let n = r.count(Some(n))?;
                if n != n_cells {
                    return Err(r.err("CELL_DATA count differs from CELLS"));
                }
                target = Some((false, n));
            }
            ["VECTORS", name, "double"] | ["SCALARS", name, "double", _] => {
                let (is_point, n) =
                    target.ok_or_else(|| r.err("data array outside POINT_DATA/CELL_DATA"))?;
                let components = if tok[0] == "VECTORS" {
                    3
                } else {
                    r.count(Some(tok[3]))?
                };
                if tok[0] == "SCALARS" && r.next_line()? != "LOOKUP_TABLE default" {
                    return Err(r.err("expected LOOKUP_TABLE default"));
                }
                let mut values = Vec::with_capacity(n * components);
                for _ in 0..n {
                    values.extend(r.numbers::<f64>(components)?);
                }
                let a = VtkArray {
                    name: name.to_string(),
                    components,
                    values,
                };
                if is_point {
                    point_data.push(a);
                } else {
                    cell_data.push(a);
                }
            }
            _ => return Err(r.err(format!("unexpected record {l:?}"))),
        }
    }
    Ok(VtkFile {
        title,
        points,
        cells,
        cell_types,
        point_data,
        cell_data,
    })
}
