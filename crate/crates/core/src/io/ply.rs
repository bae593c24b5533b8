use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) enum Encoding {
    Ascii,
    BinaryLe,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }

    fn is_integer(self) -> bool {
        !matches!(self, Scalar::F32 | Scalar::F64)
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(Scalar, String),
    List(Scalar, Scalar, String),
}

impl Property {
    fn name(&self) -> &str {
        match self {
            Property::Scalar(_, n) | Property::List(_, _, n) => n,
        }
    }
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

/// Column-wise contents of one element: scalars per property, lists per
/// list property.
#[derive(Clone, Debug, Default)]
pub(crate) struct ElementData {
    pub scalars: Vec<(String, Vec<f64>)>,
    pub lists: Vec<(String, Vec<Vec<f64>>)>,
}

impl ElementData {
    pub fn scalar(&self, name: &str) -> Option<&[f64]> {
        self.scalars.iter().find(|(n, _)| n == name).map(|(_, v)| v.as_slice())
    }

    pub fn list(&self, names: &[&str]) -> Option<&[Vec<f64>]> {
        self.lists.iter().find(|(n, _)| names.contains(&n.as_str())).map(|(_, v)| v.as_slice())
    }
}

pub(crate) struct PlyDocument {
    pub elements: Vec<(String, ElementData)>,
}

impl PlyDocument {
    pub fn element(&self, name: &str) -> Option<&ElementData> {
        self.elements.iter().find(|(n, _)| n == name).map(|(_, d)| d)
    }
}

struct Ctx<'a> {
    path: &'a str,
}

impl Ctx<'_> {
    fn err(&self, location: String, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_string(),
            location,
            message: message.into(),
        }
    }
}

pub(crate) fn parse_ply(bytes: &[u8], path: &str) -> Result<PlyDocument> {
    let ctx = Ctx { path };
    let mut pos = 0;
    let mut line_no = 0;
    let mut next_line = |pos: &mut usize| -> Option<(usize, String)> {
        let rest = &bytes[*pos..];
        let end = rest.iter().position(|&b| b == b'\n')?;
        *pos += end + 1;
        line_no += 1;
        Some((line_no, String::from_utf8_lossy(&rest[..end]).trim_end_matches('\r').to_string()))
    };
    match next_line(&mut pos) {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(ctx.err("line 1".into(), "missing `ply` magic")),
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some((ln, line)) = next_line(&mut pos) else {
            return Err(ctx.err(format!("byte {pos}"), "header ends without `end_header`"));
        };
        let loc = format!("line {ln}");
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["end_header"] => break,
            ["format", fmt, ver] => {
                if *ver != "1.0" {
                    return Err(ctx.err(loc, format!("unsupported PLY version {ver}")));
                }
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => {
                        return Err(Error::Unsupported(format!("{path}: big-endian PLY")));
                    }
                    other => return Err(ctx.err(loc, format!("unknown PLY format `{other}`"))),
                });
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => {
                let count = count.parse().map_err(|_| ctx.err(loc, format!("bad element count `{count}`")))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            ["property", "list", ct, it, name] => {
                let (Some(ct), Some(it)) = (Scalar::parse(ct), Scalar::parse(it)) else {
                    return Err(ctx.err(loc, format!("bad list property types in `{line}`")));
                };
                if !ct.is_integer() {
                    return Err(ctx.err(loc, "list count type must be an integer"));
                }
                let Some(el) = elements.last_mut() else {
                    return Err(ctx.err(loc, "property before any element"));
                };
                el.props.push(Property::List(ct, it, name.to_string()));
            }
            ["property", ty, name] => {
                let Some(ty) = Scalar::parse(ty) else {
                    return Err(ctx.err(loc, format!("unknown property type `{ty}`")));
                };
                let Some(el) = elements.last_mut() else {
                    return Err(ctx.err(loc, "property before any element"));
                };
                el.props.push(Property::Scalar(ty, name.to_string()));
            }
            _ => return Err(ctx.err(loc, format!("unrecognised header line `{line}`"))),
        }
    }
    let Some(encoding) = encoding else {
        return Err(ctx.err("header".into(), "missing `format` line"));
    };
    let body = &bytes[pos..];
    let mut out = Vec::new();
    match encoding {
        Encoding::Ascii => {
            let text = std::str::from_utf8(body).map_err(|_| ctx.err(format!("byte {pos}"), "ASCII body is not UTF-8"))?;
            let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
            for el in &elements {
                let mut data = empty_data(el);
                for _ in 0..el.count {
                    let Some((i, l)) = lines.next() else {
                        return Err(ctx.err("end of file".into(), format!("element `{}` is truncated", el.name)));
                    };
                    let loc = format!("line {}", line_no + i + 1);
                    let nums = l
                        .split_whitespace()
                        .map(|t| t.parse::<f64>().map_err(|_| ctx.err(loc.clone(), format!("bad number `{t}`"))))
                        .collect::<Result<Vec<_>>>()?;
                    let mut k = 0;
                    let mut take = |n: usize| -> Result<&[f64]> {
                        if k + n > nums.len() {
                            return Err(ctx.err(loc.clone(), "too few values on line"));
                        }
                        k += n;
                        Ok(&nums[k - n..k])
                    };
                    let (mut si, mut li) = (0, 0);
                    for p in &el.props {
                        match p {
                            Property::Scalar(..) => {
                                let v = take(1)?[0];
                                data.scalars[si].1.push(v);
                                si += 1;
                            }
                            Property::List(..) => {
                                let n = take(1)?[0];
                                if n < 0.0 || n.fract() != 0.0 {
                                    return Err(ctx.err(loc.clone(), format!("bad list length {n}")));
                                }
                                let items = take(n as usize)?.to_vec();
                                data.lists[li].1.push(items);
                                li += 1;
                            }
                        }
                    }
                    if k != nums.len() {
                        return Err(ctx.err(loc, "extra values on line"));
                    }
                }
                out.push((el.name.clone(), data));
            }
            if let Some((i, _)) = lines.next() {
                return Err(ctx.err(format!("line {}", line_no + i + 1), "data after the last element"));
            }
        }
        Encoding::BinaryLe => {
            let mut at = 0usize;
            let read = |s: Scalar, at: &mut usize| -> Result<f64> {
                if body.len() - *at < s.size() {
                    return Err(ctx.err(format!("byte {}", pos + *at), "unexpected end of binary body"));
                }
                let v = s.read_le(&body[*at..]);
                *at += s.size();
                Ok(v)
            };
            for el in &elements {
                let mut data = empty_data(el);
                for _ in 0..el.count {
                    let (mut si, mut li) = (0, 0);
                    for p in &el.props {
                        match *p {
                            Property::Scalar(s, _) => {
                                let v = read(s, &mut at)?;
                                data.scalars[si].1.push(v);
                                si += 1;
                            }
                            Property::List(ct, it, _) => {
                                let n = read(ct, &mut at)?;
                                if n < 0.0 {
                                    return Err(ctx.err(format!("byte {}", pos + at), "negative list length"));
                                }
                                let items = (0..n as usize).map(|_| read(it, &mut at)).collect::<Result<Vec<_>>>()?;
                                data.lists[li].1.push(items);
                                li += 1;
                            }
                        }
                    }
                }
                out.push((el.name.clone(), data));
            }
            if at != body.len() {
                return Err(ctx.err(format!("byte {}", pos + at), "trailing bytes after the last element"));
            }
        }
    }
    Ok(PlyDocument { elements: out })
}

fn empty_data(el: &Element) -> ElementData {
    let mut d = ElementData::default();
    for p in &el.props {
        match p {
            Property::Scalar(..) => d.scalars.push((p.name().to_string(), Vec::with_capacity(el.count))),
            Property::List(..) => d.lists.push((p.name().to_string(), Vec::with_capacity(el.count))),
        }
    }
    d
}

/// Writes vertex rows of doubles (`x y z` plus any extra named columns)
/// and optional triangle faces.
pub(crate) fn write_ply(encoding: Encoding, columns: &[&str], rows: &[Vec<f64>], faces: Option<&[[usize; 3]]>) -> Vec<u8> {
    let mut header = String::from("ply\n");
    header.push_str(match encoding {
        Encoding::Ascii => "format ascii 1.0\n",
        Encoding::BinaryLe => "format binary_little_endian 1.0\n",
    });
    header.push_str(&format!("element vertex {}\n", rows.len()));
    for c in columns {
        header.push_str(&format!("property double {c}\n"));
    }
    if let Some(f) = faces {
        header.push_str(&format!("element face {}\nproperty list uchar int vertex_indices\n", f.len()));
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    match encoding {
        Encoding::Ascii => {
            let mut s = String::new();
            for r in rows {
                let parts: Vec<String> = r.iter().map(|x| x.to_string()).collect();
                s.push_str(&parts.join(" "));
                s.push('\n');
            }
            for f in faces.unwrap_or(&[]) {
                s.push_str(&format!("3 {} {} {}\n", f[0], f[1], f[2]));
            }
            out.extend_from_slice(s.as_bytes());
        }
        Encoding::BinaryLe => {
            for r in rows {
                for x in r {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
            for f in faces.unwrap_or(&[]) {
                out.push(3);
                for &i in f {
                    out.extend_from_slice(&(i as i32).to_le_bytes());
                }
            }
        }
    }
    out
}
