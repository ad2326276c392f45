//! Readers and writers for the supported exchange formats.
//!
//! XYZ: whitespace-separated `x y z [nx ny nz]` per line, `#` comments,
//! extra trailing columns ignored. PLY: ASCII 1.0 only, `vertex` element with
//! float `x y z`, optional `nx ny nz`, and any further float properties read
//! back as named scalar channels; `face` element with an index list.
//! OBJ: `v`/`f` records with 1-based indices.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::cloud::PointCloud;
use crate::error::{Error, Result};
use crate::mesh::TriangleMesh;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    PlyAscii,
}

impl CloudFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "pts" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::PlyAscii),
            _ => None,
        }
    }
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "obj" => Some(MeshFormat::Obj),
            "ply" => Some(MeshFormat::PlyAscii),
            _ => None,
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Load a point cloud in the declared format. Normals are populated only if
/// the file carries them; they are renormalised to unit length on load.
pub fn load_point_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::Xyz => load_xyz(path),
        CloudFormat::PlyAscii => load_ply_cloud(path),
    }
}

/// Write a point cloud in the declared format.
pub fn save_point_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    match format {
        CloudFormat::Xyz => save_xyz(cloud, path),
        CloudFormat::PlyAscii => save_ply_cloud(cloud, path),
    }
}

/// Write a mesh in the declared format. OBJ drops scalar channels (the format
/// has no per-vertex scalar slot); PLY writes one extra float property per
/// channel.
pub fn save_mesh(mesh: &TriangleMesh, path: &Path, format: MeshFormat) -> Result<()> {
    mesh.validate()?;
    match format {
        MeshFormat::Obj => save_obj(mesh, path),
        MeshFormat::PlyAscii => save_ply_mesh(mesh, path),
    }
}

/// Load a mesh in the declared format.
pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriangleMesh> {
    match format {
        MeshFormat::Obj => load_obj(path),
        MeshFormat::PlyAscii => load_ply_mesh(path),
    }
}

fn parse_coord(path: &Path, line: usize, token: &str) -> Result<f64> {
    let v: f64 = token
        .parse()
        .map_err(|_| parse_err(path, line, format!("cannot parse number '{token}'")))?;
    if !v.is_finite() {
        return Err(parse_err(path, line, format!("non-finite value '{token}'")));
    }
    Ok(v)
}

fn unit_normal(path: &Path, line: usize, n: Vector3<f64>) -> Result<Vector3<f64>> {
    let norm = n.norm();
    if norm <= 0.0 {
        return Err(parse_err(path, line, "zero-length normal"));
    }
    Ok(n / norm)
}

// ---------------------------------------------------------------------------
// XYZ
// ---------------------------------------------------------------------------

fn load_xyz(path: &Path) -> Result<PointCloud> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);

    let mut points = Vec::new();
    let mut normals: Vec<Option<Vector3<f64>>> = Vec::new();
    let mut arity: Option<bool> = None; // whether lines carry normals

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err(path))?;
        let data = line.split('#').next().unwrap_or("").trim();
        if data.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = data.split_whitespace().collect();
        if tokens.len() < 3 {
            return Err(parse_err(path, lineno, "expected at least 3 columns"));
        }
        let has_normal = tokens.len() >= 6;
        match arity {
            None => arity = Some(has_normal),
            Some(expected) if expected != has_normal => {
                return Err(parse_err(
                    path,
                    lineno,
                    "inconsistent column count (normals must be on every line or none)",
                ));
            }
            _ => {}
        }
        let x = parse_coord(path, lineno, tokens[0])?;
        let y = parse_coord(path, lineno, tokens[1])?;
        let z = parse_coord(path, lineno, tokens[2])?;
        points.push(Point3::new(x, y, z));
        if has_normal {
            let nx = parse_coord(path, lineno, tokens[3])?;
            let ny = parse_coord(path, lineno, tokens[4])?;
            let nz = parse_coord(path, lineno, tokens[5])?;
            normals.push(Some(unit_normal(path, lineno, Vector3::new(nx, ny, nz))?));
        }
    }

    if points.is_empty() {
        return Err(parse_err(path, 0, "file contains no points"));
    }
    let mut cloud = PointCloud::new(points)?;
    if arity == Some(true) {
        cloud.set_normals(normals)?;
    }
    Ok(cloud)
}

fn save_xyz(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let with_normals = cloud.has_normals();
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        if with_normals {
            let n = cloud.normal(i).expect("has_normals checked");
            writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)
                .map_err(io_err(path))?;
        } else {
            writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

// ---------------------------------------------------------------------------
// PLY (ASCII)
// ---------------------------------------------------------------------------

struct PlyHeader {
    vertex_count: usize,
    face_count: usize,
    vertex_props: Vec<String>,
    data_start: usize, // line index of first data line
}

fn parse_ply_header(path: &Path, lines: &[String]) -> Result<PlyHeader> {
    if lines.first().map(|l| l.trim()) != Some("ply") {
        return Err(parse_err(path, 1, "missing 'ply' magic"));
    }
    let mut vertex_count = 0usize;
    let mut face_count = 0usize;
    let mut vertex_props = Vec::new();
    let mut current_element: Option<String> = None;
    let mut saw_format = false;

    for (idx, raw) in lines.iter().enumerate().skip(1) {
        let lineno = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with("comment") {
            continue;
        }
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("format") => {
                let rest: Vec<&str> = tokens.collect();
                if rest.first() != Some(&"ascii") {
                    return Err(parse_err(path, lineno, "only ascii 1.0 format is supported"));
                }
                saw_format = true;
            }
            Some("element") => {
                let name = tokens
                    .next()
                    .ok_or_else(|| parse_err(path, lineno, "element without a name"))?;
                let count: usize = tokens
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| parse_err(path, lineno, "element without a count"))?;
                match name {
                    "vertex" => vertex_count = count,
                    "face" => face_count = count,
                    other => {
                        return Err(parse_err(path, lineno, format!("unsupported element '{other}'")))
                    }
                }
                current_element = Some(name.to_string());
            }
            Some("property") => {
                if current_element.as_deref() == Some("vertex") {
                    let name = line
                        .split_whitespace()
                        .last()
                        .ok_or_else(|| parse_err(path, lineno, "property without a name"))?;
                    vertex_props.push(name.to_string());
                }
                // face index-list property accepted as-is
            }
            Some("end_header") => {
                if !saw_format {
                    return Err(parse_err(path, lineno, "missing format line"));
                }
                return Ok(PlyHeader {
                    vertex_count,
                    face_count,
                    vertex_props,
                    data_start: idx + 1,
                });
            }
            _ => return Err(parse_err(path, lineno, format!("unexpected header line '{line}'"))),
        }
    }
    Err(parse_err(path, lines.len(), "missing end_header"))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let file = File::open(path).map_err(io_err(path))?;
    BufReader::new(file)
        .lines()
        .collect::<std::io::Result<Vec<_>>>()
        .map_err(io_err(path))
}

struct PlyVertexData {
    positions: Vec<Point3<f64>>,
    normals: Vec<Option<Vector3<f64>>>,
    has_normals: bool,
    extra: Vec<(String, Vec<f64>)>,
}

fn parse_ply_vertices(path: &Path, lines: &[String], header: &PlyHeader) -> Result<PlyVertexData> {
    let props = &header.vertex_props;
    let find = |name: &str| props.iter().position(|p| p == name);
    let (xi, yi, zi) = match (find("x"), find("y"), find("z")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(parse_err(path, header.data_start, "vertex element lacks x y z")),
    };
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some((a, b, c)),
        _ => None,
    };
    let mut extra_names: Vec<(usize, String)> = Vec::new();
    for (i, p) in props.iter().enumerate() {
        if ![xi, yi, zi].contains(&i) && normal_idx.map_or(true, |(a, b, c)| ![a, b, c].contains(&i))
        {
            extra_names.push((i, p.clone()));
        }
    }

    let mut positions = Vec::with_capacity(header.vertex_count);
    let mut normals = Vec::with_capacity(header.vertex_count);
    let mut extra: Vec<(String, Vec<f64>)> = extra_names
        .iter()
        .map(|(_, n)| (n.clone(), Vec::with_capacity(header.vertex_count)))
        .collect();

    for row in 0..header.vertex_count {
        let lineno = header.data_start + row + 1;
        let line = lines
            .get(header.data_start + row)
            .ok_or_else(|| parse_err(path, lineno, "unexpected end of file in vertex data"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < props.len() {
            return Err(parse_err(
                path,
                lineno,
                format!("expected {} vertex properties", props.len()),
            ));
        }
        let x = parse_coord(path, lineno, tokens[xi])?;
        let y = parse_coord(path, lineno, tokens[yi])?;
        let z = parse_coord(path, lineno, tokens[zi])?;
        positions.push(Point3::new(x, y, z));
        if let Some((a, b, c)) = normal_idx {
            let n = Vector3::new(
                parse_coord(path, lineno, tokens[a])?,
                parse_coord(path, lineno, tokens[b])?,
                parse_coord(path, lineno, tokens[c])?,
            );
            normals.push(Some(unit_normal(path, lineno, n)?));
        }
        for (slot, (col, _)) in extra_names.iter().enumerate() {
            // scalar channels may carry NaN markers (e.g. undefined curvature)
            let token = tokens[*col];
            let v: f64 = token
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("cannot parse number '{token}'")))?;
            extra[slot].1.push(v);
        }
    }

    Ok(PlyVertexData {
        positions,
        normals,
        has_normals: normal_idx.is_some(),
        extra,
    })
}

fn load_ply_cloud(path: &Path) -> Result<PointCloud> {
    let lines = read_lines(path)?;
    let header = parse_ply_header(path, &lines)?;
    if header.vertex_count == 0 {
        return Err(parse_err(path, 0, "file contains no points"));
    }
    let data = parse_ply_vertices(path, &lines, &header)?;
    let mut cloud = PointCloud::new(data.positions)?;
    if data.has_normals {
        cloud.set_normals(data.normals)?;
    }
    Ok(cloud)
}

fn save_ply_cloud(cloud: &PointCloud, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let with_normals = cloud.has_normals();
    writeln!(w, "ply").map_err(io_err(path))?;
    writeln!(w, "format ascii 1.0").map_err(io_err(path))?;
    writeln!(w, "element vertex {}", cloud.len()).map_err(io_err(path))?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}").map_err(io_err(path))?;
    }
    if with_normals {
        for p in ["nx", "ny", "nz"] {
            writeln!(w, "property float {p}").map_err(io_err(path))?;
        }
    }
    writeln!(w, "end_header").map_err(io_err(path))?;
    for i in 0..cloud.len() {
        let p = cloud.point(i);
        if with_normals {
            let n = cloud.normal(i).expect("has_normals checked");
            writeln!(w, "{} {} {} {} {} {}", p.x, p.y, p.z, n.x, n.y, n.z)
                .map_err(io_err(path))?;
        } else {
            writeln!(w, "{} {} {}", p.x, p.y, p.z).map_err(io_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

fn save_ply_mesh(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    let scalar_names: Vec<&str> = mesh.scalar_names().collect();
    writeln!(w, "ply").map_err(io_err(path))?;
    writeln!(w, "format ascii 1.0").map_err(io_err(path))?;
    writeln!(w, "element vertex {}", mesh.vertex_count()).map_err(io_err(path))?;
    for p in ["x", "y", "z"] {
        writeln!(w, "property float {p}").map_err(io_err(path))?;
    }
    for name in &scalar_names {
        writeln!(w, "property float {name}").map_err(io_err(path))?;
    }
    writeln!(w, "element face {}", mesh.triangle_count()).map_err(io_err(path))?;
    writeln!(w, "property list uchar int vertex_indices").map_err(io_err(path))?;
    writeln!(w, "end_header").map_err(io_err(path))?;
    for (i, p) in mesh.vertices().iter().enumerate() {
        let mut line = format!("{} {} {}", p.x, p.y, p.z);
        for name in &scalar_names {
            let v = mesh.scalar(name).expect("listed name")[i];
            line.push(' ');
            line.push_str(&v.to_string());
        }
        writeln!(w, "{line}").map_err(io_err(path))?;
    }
    for t in mesh.triangles() {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2]).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn load_ply_mesh(path: &Path) -> Result<TriangleMesh> {
    let lines = read_lines(path)?;
    let header = parse_ply_header(path, &lines)?;
    let data = parse_ply_vertices(path, &lines, &header)?;
    let n_vertices = data.positions.len();

    let mut triangles = Vec::with_capacity(header.face_count);
    for row in 0..header.face_count {
        let line_idx = header.data_start + header.vertex_count + row;
        let lineno = line_idx + 1;
        let line = lines
            .get(line_idx)
            .ok_or_else(|| parse_err(path, lineno, "unexpected end of file in face data"))?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.first() != Some(&"3") {
            return Err(parse_err(path, lineno, "only triangle faces are supported"));
        }
        if tokens.len() < 4 {
            return Err(parse_err(path, lineno, "truncated face record"));
        }
        let mut tri = [0usize; 3];
        for (k, token) in tokens[1..4].iter().enumerate() {
            tri[k] = token
                .parse()
                .map_err(|_| parse_err(path, lineno, format!("bad vertex index '{token}'")))?;
        }
        triangles.push(tri);
    }

    let mut mesh = TriangleMesh::new(data.positions, triangles)?;
    for (name, values) in data.extra {
        debug_assert_eq!(values.len(), n_vertices);
        mesh.set_scalar(&name, values)?;
    }
    Ok(mesh)
}

// ---------------------------------------------------------------------------
// OBJ
// ---------------------------------------------------------------------------

fn save_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = BufWriter::new(file);
    for p in mesh.vertices() {
        writeln!(w, "v {} {} {}", p.x, p.y, p.z).map_err(io_err(path))?;
    }
    for t in mesh.triangles() {
        writeln!(w, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1).map_err(io_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn load_obj(path: &Path) -> Result<TriangleMesh> {
    let file = File::open(path).map_err(io_err(path))?;
    let reader = BufReader::new(file);
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(io_err(path))?;
        let line = line.trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let coords: Vec<&str> = tokens.collect();
                if coords.len() < 3 {
                    return Err(parse_err(path, lineno, "vertex needs 3 coordinates"));
                }
                vertices.push(Point3::new(
                    parse_coord(path, lineno, coords[0])?,
                    parse_coord(path, lineno, coords[1])?,
                    parse_coord(path, lineno, coords[2])?,
                ));
            }
            Some("f") => {
                let idxs: Vec<&str> = tokens.collect();
                if idxs.len() != 3 {
                    return Err(parse_err(path, lineno, "only triangle faces are supported"));
                }
                let mut tri = [0usize; 3];
                for (k, token) in idxs.iter().enumerate() {
                    // take the vertex index before any '/' attribute slot
                    let token = token.split('/').next().unwrap_or("");
                    let one_based: usize = token.parse().map_err(|_| {
                        parse_err(path, lineno, format!("bad vertex index '{token}'"))
                    })?;
                    if one_based == 0 {
                        return Err(parse_err(path, lineno, "OBJ indices are 1-based"));
                    }
                    tri[k] = one_based - 1;
                }
                triangles.push(tri);
            }
            _ => {} // comments, empty lines, unsupported records
        }
    }
    TriangleMesh::new(vertices, triangles)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tmp(name: &str) -> std::path::PathBuf {
        let dir = std::env::temp_dir().join("thinsurf-io-tests");
        std::fs::create_dir_all(&dir).unwrap();
        dir.join(name)
    }

    #[test]
    fn xyz_three_lines() {
        let path = tmp("three.xyz");
        std::fs::write(&path, "0 0 0\n1 0 0\n0 1 0\n").unwrap();
        let cloud = load_point_cloud(&path, CloudFormat::Xyz).unwrap();
        assert_eq!(cloud.len(), 3);
        assert!(!cloud.has_normals());
    }

    #[test]
    fn xyz_comments_and_normals() {
        let path = tmp("normals.xyz");
        std::fs::write(&path, "# header\n0 0 0 0 0 1\n1 0 0 0 1 0\n").unwrap();
        let cloud = load_point_cloud(&path, CloudFormat::Xyz).unwrap();
        assert!(cloud.has_normals());
        assert_eq!(cloud.normal(0), Some(Vector3::z()));
    }

    #[test]
    fn xyz_nan_is_an_error_with_line_number() {
        let path = tmp("nan.xyz");
        std::fs::write(&path, "0 0 0\n1 nan 0\n").unwrap();
        match load_point_cloud(&path, CloudFormat::Xyz).unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("expected parse error, got {other}"),
        }
    }

    #[test]
    fn xyz_empty_file_is_an_error() {
        let path = tmp("empty.xyz");
        std::fs::write(&path, "# nothing\n").unwrap();
        assert!(load_point_cloud(&path, CloudFormat::Xyz).is_err());
    }

    #[test]
    fn ply_cloud_with_normals() {
        let path = tmp("cloud.ply");
        std::fs::write(
            &path,
            "ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\n\
             property float z\nproperty float nx\nproperty float ny\nproperty float nz\n\
             end_header\n0 0 0 0 0 1\n1 2 3 1 0 0\n",
        )
        .unwrap();
        let cloud = load_point_cloud(&path, CloudFormat::PlyAscii).unwrap();
        assert_eq!(cloud.len(), 2);
        assert!(cloud.has_normals());
        assert_eq!(cloud.point(1), Point3::new(1.0, 2.0, 3.0));
    }

    #[test]
    fn obj_single_triangle_format() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ];
        let mesh = TriangleMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        let path = tmp("tri.obj");
        save_mesh(&mesh, &path, MeshFormat::Obj).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 3);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 1);
        assert!(text.contains("f 1 2 3"));
        let back = load_mesh(&path, MeshFormat::Obj).unwrap();
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn ply_mesh_round_trips_scalar_channel() {
        let verts = vec![
            Point3::origin(),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.25),
        ];
        let mut mesh = TriangleMesh::new(verts, vec![[0, 1, 2]]).unwrap();
        mesh.set_scalar("curvature", vec![-2.0, -1.5, 0.125]).unwrap();
        let path = tmp("scalar.ply");
        save_mesh(&mesh, &path, MeshFormat::PlyAscii).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("property float curvature"));
        let back = load_mesh(&path, MeshFormat::PlyAscii).unwrap();
        assert_eq!(back.scalar("curvature").unwrap(), &[-2.0, -1.5, 0.125]);
        assert_eq!(back.triangles(), mesh.triangles());
    }

    #[test]
    fn empty_mesh_round_trips() {
        let mesh = TriangleMesh::empty();
        for (name, format) in [("empty.obj", MeshFormat::Obj), ("empty.ply", MeshFormat::PlyAscii)] {
            let path = tmp(name);
            save_mesh(&mesh, &path, format).unwrap();
            let back = load_mesh(&path, format).unwrap();
            assert_eq!(back.vertex_count(), 0);
            assert_eq!(back.triangle_count(), 0);
        }
    }

    #[test]
    fn unwritable_path_is_an_io_error() {
        let mesh = TriangleMesh::empty();
        let err = save_mesh(
            &mesh,
            Path::new("/nonexistent-dir/mesh.obj"),
            MeshFormat::Obj,
        )
        .unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
