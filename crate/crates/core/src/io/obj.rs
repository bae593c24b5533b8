use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::vec3::Vec3;

fn parse_err(path: &str, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_string(),
        location: format!("line {line}"),
        message: message.into(),
    }
}

/// Vertices and fan-triangulated faces of an OBJ document.
pub(crate) fn parse_obj(text: &str, path: &str) -> Result<(Vec<Vec3>, Vec<[usize; 3]>)> {
    let mut vertices: Vec<Vec3> = Vec::new();
    let mut faces = Vec::new();
    for (ln, raw) in text.lines().enumerate() {
        let line_no = ln + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tok = line.split_whitespace();
        let Some(kw) = tok.next() else { continue };
        match kw {
            "v" => {
                let nums = tok
                    .map(|t| t.parse::<f64>().map_err(|_| parse_err(path, line_no, format!("bad number `{t}`"))))
                    .collect::<Result<Vec<_>>>()?;
                // x y z, optionally w or an r g b colour triple
                if !matches!(nums.len(), 3 | 4 | 6 | 7) {
                    return Err(parse_err(path, line_no, format!("vertex with {} coordinates", nums.len())));
                }
                if nums[..3].iter().any(|c| !c.is_finite()) {
                    return Err(parse_err(path, line_no, "non-finite vertex coordinate"));
                }
                vertices.push([nums[0], nums[1], nums[2]]);
            }
            "f" => {
                let idx = tok
                    .map(|t| resolve_index(t, vertices.len()).map_err(|m| parse_err(path, line_no, m)))
                    .collect::<Result<Vec<_>>>()?;
                if idx.len() < 3 {
                    return Err(parse_err(path, line_no, format!("face with {} vertices", idx.len())));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "vt" | "vn" | "vp" | "g" | "o" | "s" | "usemtl" | "mtllib" => {}
            "l" | "p" | "curv" | "curv2" | "surf" | "cstype" | "deg" | "bmat" | "step" | "parm" | "trim" | "hole" => {
                return Err(Error::Unsupported(format!("{path}: line {line_no}: OBJ element `{kw}`")));
            }
            other => return Err(parse_err(path, line_no, format!("unknown OBJ keyword `{other}`"))),
        }
    }
    Ok((vertices, faces))
}

/// Zero-based vertex index from `a`, `a/b`, `a//c` or `a/b/c`, with
/// negative indices counted back from the latest vertex.
fn resolve_index(token: &str, count: usize) -> std::result::Result<usize, String> {
    let first = token.split('/').next().unwrap_or("");
    let i: i64 = first.parse().map_err(|_| format!("bad face index `{token}`"))?;
    let resolved = match i {
        0 => return Err("face index 0 is invalid".into()),
        i if i > 0 => i - 1,
        i => count as i64 + i,
    };
    if resolved < 0 || resolved >= count as i64 {
        return Err(format!("face index {i} out of range ({count} vertices so far)"));
    }
    Ok(resolved as usize)
}

pub(crate) fn write_obj(vertices: &[Vec3], faces: &[[usize; 3]]) -> String {
    let mut s = String::new();
    for v in vertices {
        writeln!(s, "v {} {} {}", v[0], v[1], v[2]).unwrap();
    }
    for f in faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn index_forms() {
        assert_eq!(resolve_index("3", 5), Ok(2));
        assert_eq!(resolve_index("3/1", 5), Ok(2));
        assert_eq!(resolve_index("3//7", 5), Ok(2));
        assert_eq!(resolve_index("3/1/7", 5), Ok(2));
        assert_eq!(resolve_index("-1", 5), Ok(4));
        assert!(resolve_index("0", 5).is_err());
        assert!(resolve_index("6", 5).is_err());
        assert!(resolve_index("-6", 5).is_err());
        assert!(resolve_index("x", 5).is_err());
    }

    #[test]
    fn quads_are_fan_triangulated() {
        let text = "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 2 0\nf 1 2 3 4 5\n";
        let (_, f) = parse_obj(text, "t").unwrap();
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3], [0, 3, 4]]);
    }

    #[test]
    fn malformed_input_is_rejected() {
        for bad in ["v 1 2\n", "v 1 2 x\n", "v 0 0 0\nf 1 1\n", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n", "foo 1\n"] {
            assert!(matches!(parse_obj(bad, "t"), Err(Error::Parse { .. })), "{bad:?}");
        }
        assert!(matches!(parse_obj("v 0 0 0\nv 1 0 0\nl 1 2\n", "t"), Err(Error::Unsupported(_))));
    }

    #[test]
    fn parse_error_names_line() {
        let err = parse_obj("v 0 0 0\n\nv 1\n", "a.obj").unwrap_err().to_string();
        assert!(err.contains("a.obj") && err.contains("line 3"), "{err}");
    }
}
