//! IGES 5.3 subset: rational B-spline curves (126) and surfaces (128) are parsed into splines;
//! every other entity is carried as an opaque record. Curve ownership is read from
//! curve-on-surface (142), boundary (141), bounded-surface (143), trimmed-surface (144) and
//! composite-curve (102) links.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::reconstruct::{Entity, EntityKind, GeometryModel, TopologyRecord};
use crate::spline::{extract_range, KnotVector, Spline};
use crate::Point;

const DATA_COLS: usize = 72;
const PARAM_COLS: usize = 64;

/// Entity types that carry geometry in a form other than rational B-splines.
const NON_NURBS: &[(u32, &str)] = &[
    (100, "circular arc"),
    (104, "conic arc"),
    (106, "copious data"),
    (108, "plane"),
    (110, "line"),
    (112, "parametric spline curve"),
    (114, "parametric spline surface"),
    (116, "point"),
    (118, "ruled surface"),
    (120, "surface of revolution"),
    (122, "tabulated cylinder"),
    (130, "offset curve"),
    (140, "offset surface"),
    (190, "plane surface"),
    (192, "right circular cylindrical surface"),
    (194, "right circular conical surface"),
    (196, "spherical surface"),
    (198, "toroidal surface"),
];

/// Directory entry of one IGES entity, kept as its two raw 72-column lines.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirectoryRecord {
    /// Sequence number of the first directory line (the entity's pointer value).
    pub id: usize,
    pub entity_type: u32,
    pub lines: [String; 2],
    pub geometric: bool,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IgesDocument {
    /// Data columns (1-72) of the start section lines.
    pub start: Vec<String>,
    /// Data columns (1-72) of the global section lines.
    pub global: Vec<String>,
    pub param_delimiter: char,
    pub record_delimiter: char,
    pub directory: Vec<DirectoryRecord>,
}

#[derive(Clone, Copy, Debug)]
pub struct IgesWriteOptions {
    /// Degrees above this are written but reported, since many CAD systems reject them.
    pub max_degree: Option<usize>,
}

impl Default for IgesWriteOptions {
    fn default() -> Self {
        IgesWriteOptions {
            max_degree: Some(25),
        }
    }
}

impl IgesDocument {
    /// Fresh document for a model that was not read from IGES: default start and global
    /// sections, one directory entry per entity and topology record, ordered by id.
    pub fn for_model(model: &GeometryModel) -> Result<Self> {
        let mut records: Vec<DirectoryRecord> = model
            .entities
            .iter()
            .map(|e| {
                let ty = entity_type(&e.spline);
                let status = if e.parametric_space {
                    "00010500"
                } else {
                    "00000000"
                };
                DirectoryRecord {
                    id: e.id,
                    entity_type: ty,
                    lines: directory_lines(ty, 0, status),
                    geometric: true,
                }
            })
            .chain(model.topology.iter().map(|t| DirectoryRecord {
                id: t.id,
                entity_type: t.entity_type,
                lines: t.directory.clone(),
                geometric: false,
            }))
            .collect();
        records.sort_by_key(|r| r.id);
        for (k, r) in records.iter().enumerate() {
            if r.id != 2 * k + 1 {
                return Err(Error::IgesWrite(format!(
                    "entity ids must be the odd numbers 1, 3, 5, ... (found {} at position {k})",
                    r.id
                )));
            }
        }
        Ok(IgesDocument::fresh(',', ';', records))
    }

    /// Regenerate the start and global sections for other delimiters. Digits, letters,
    /// blanks and the characters `+ - .` are rejected, since they occur inside fields.
    pub fn with_delimiters(self, param_delimiter: char, record_delimiter: char) -> Result<Self> {
        let bad = |c: char| {
            c.is_alphanumeric() || c.is_whitespace() || "+-.".contains(c) || !c.is_ascii()
        };
        if bad(param_delimiter) || bad(record_delimiter) || param_delimiter == record_delimiter {
            return Err(Error::IgesWrite(format!(
                "unusable delimiters {param_delimiter:?} and {record_delimiter:?}"
            )));
        }
        Ok(IgesDocument::fresh(
            param_delimiter,
            record_delimiter,
            self.directory,
        ))
    }

    fn fresh(pd: char, rd: char, directory: Vec<DirectoryRecord>) -> Self {
        IgesDocument {
            start: vec!["Spline model written by cadrecon".into()],
            global: wrap_global(&default_global(pd, rd), pd, rd),
            param_delimiter: pd,
            record_delimiter: rd,
            directory,
        }
    }
}

/// Two directory lines (72 columns each) for a new entity; pointer and line-count fields are
/// filled in when writing.
pub fn directory_lines(entity_type: u32, form: u32, status: &str) -> [String; 2] {
    let f = |fields: &[String]| fields.iter().map(|s| format!("{s:>8}")).collect::<String>();
    let ty = entity_type.to_string();
    let z = || "0".to_string();
    [
        f(&[
            ty.clone(),
            z(),
            z(),
            z(),
            z(),
            z(),
            z(),
            z(),
            status.to_string(),
        ]),
        f(&[
            ty,
            z(),
            z(),
            z(),
            form.to_string(),
            String::new(),
            String::new(),
            String::new(),
            z(),
        ]),
    ]
}

/// Split parameter text into 64-column data fields, breaking only after delimiters.
pub fn parameter_lines(text: &str, param_delimiter: char, record_delimiter: char) -> Vec<String> {
    let mut lines = Vec::new();
    let mut cur = String::new();
    let mut token = String::new();
    for ch in text.chars() {
        token.push(ch);
        if ch == param_delimiter || ch == record_delimiter {
            if cur.len() + token.len() > PARAM_COLS && !cur.is_empty() {
                lines.push(std::mem::take(&mut cur));
            }
            cur.push_str(&token);
            token.clear();
        }
    }
    cur.push_str(&token);
    if !cur.is_empty() {
        lines.push(cur);
    }
    lines
}

/// Render a real losslessly: 17 significant digits, `D` exponent, trailing zeros removed.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0.0".into();
    }
    let s = format!("{x:.16e}");
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let mant = mant.trim_end_matches('0');
    let mant = if mant.ends_with('.') {
        format!("{mant}0")
    } else {
        mant.to_string()
    };
    format!("{mant}D{exp}")
}

pub fn read_iges(bytes: &[u8]) -> Result<(GeometryModel, IgesDocument)> {
    let text: String = bytes.iter().map(|&b| b as char).collect();
    let lines = split_records(&text);
    let mut sections: HashMap<char, Vec<(usize, String)>> = HashMap::new();
    let order = ['S', 'G', 'D', 'P', 'T'];
    let mut current = 0usize;
    for (n, raw) in lines.iter().enumerate() {
        let lineno = n + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let line = pad(raw, 80);
        let letter = line.chars().nth(72).unwrap_or(' ');
        let pos = order
            .iter()
            .position(|&c| c == letter)
            .ok_or_else(|| Error::IgesParse {
                line: lineno,
                message: format!("unknown section letter {letter:?} in column 73"),
            })?;
        if pos < current {
            return Err(Error::IgesParse {
                line: lineno,
                message: format!("section {letter} after section {}", order[current]),
            });
        }
        current = pos;
        let seq: usize = sub(&line, 73, 80)
            .trim()
            .parse()
            .map_err(|_| Error::IgesParse {
                line: lineno,
                message: format!("bad sequence number {:?}", sub(&line, 73, 80)),
            })?;
        let list = sections.entry(letter).or_default();
        if seq != list.len() + 1 {
            return Err(Error::IgesParse {
                line: lineno,
                message: format!(
                    "sequence number {seq} in section {letter}, expected {}",
                    list.len() + 1
                ),
            });
        }
        list.push((lineno, line));
    }
    let take = |c: char| sections.get(&c).cloned().unwrap_or_default();
    let (start, global, dir, par) = (take('S'), take('G'), take('D'), take('P'));
    if dir.len() % 2 != 0 {
        return Err(Error::IgesParse {
            line: dir.last().map(|l| l.0).unwrap_or(0),
            message: "directory section has an odd number of lines".into(),
        });
    }

    let global_text: String = global.iter().map(|(_, l)| sub(l, 0, DATA_COLS)).collect();
    let (pd, rd) = global_delimiters(&global_text).map_err(|message| Error::IgesParse {
        line: global.first().map(|l| l.0).unwrap_or(0),
        message,
    })?;

    let mut doc = IgesDocument {
        start: start.iter().map(|(_, l)| sub(l, 0, DATA_COLS)).collect(),
        global: global.iter().map(|(_, l)| sub(l, 0, DATA_COLS)).collect(),
        param_delimiter: pd,
        record_delimiter: rd,
        directory: Vec::new(),
    };

    struct Parsed {
        id: usize,
        lineno: usize,
        ty: u32,
        lines: [String; 2],
        data: Vec<String>,
        status: String,
        transform: i64,
    }
    let mut parsed = Vec::with_capacity(dir.len() / 2);
    for pair in dir.chunks(2) {
        let (l1, a) = (&pair[0].0, &pair[0].1);
        let b = &pair[1].1;
        let field = |s: &str, k: usize| sub(s, 8 * k, 8 * k + 8).trim().to_string();
        let int = |s: &str, k: usize, what: &str| -> Result<i64> {
            let f = field(s, k);
            if f.is_empty() {
                return Ok(0);
            }
            f.parse().map_err(|_| Error::IgesParse {
                line: *l1,
                message: format!("bad {what} field {f:?}"),
            })
        };
        let id = (parsed.len()) * 2 + 1;
        let ty = int(a, 0, "entity type")? as u32;
        let ptr = int(a, 1, "parameter pointer")?;
        let count = int(b, 3, "parameter line count")?;
        let transform = int(a, 6, "transformation")?;
        if ptr < 1 || count < 0 || (ptr + count - 1) as usize > par.len() {
            return Err(Error::IgesParse {
                line: *l1,
                message: format!(
                    "parameter lines {ptr}..{} outside the parameter section",
                    ptr + count
                ),
            });
        }
        let mut data = Vec::with_capacity(count as usize);
        for (lineno, line) in &par[(ptr - 1) as usize..(ptr - 1 + count) as usize] {
            let back: usize = sub(line, 65, 72).trim().parse().unwrap_or(0);
            if back != id {
                return Err(Error::IgesParse {
                    line: *lineno,
                    message: format!("parameter line points to entity {back}, expected {id}"),
                });
            }
            data.push(sub(line, 0, PARAM_COLS));
        }
        parsed.push(Parsed {
            id,
            lineno: *l1,
            ty,
            lines: [sub(a, 0, DATA_COLS), sub(b, 0, DATA_COLS)],
            data,
            status: format!("{:0>8}", field(a, 8)),
            transform,
        });
    }

    let mut entities = Vec::new();
    let mut topology = Vec::new();
    let mut params_of: HashMap<usize, Vec<String>> = HashMap::new();
    for p in &parsed {
        if let Some((_, name)) = NON_NURBS.iter().find(|(t, _)| *t == p.ty) {
            return Err(Error::Unsupported(format!(
                "entity {} is a {name} (type {}); export the model with the NURBS-only (spline) option",
                p.id, p.ty
            )));
        }
        let geometric = p.ty == 126 || p.ty == 128;
        doc.directory.push(DirectoryRecord {
            id: p.id,
            entity_type: p.ty,
            lines: p.lines.clone(),
            geometric,
        });
        let text: String = p.data.concat();
        let tokens = tokenize(&text, pd, rd);
        if geometric {
            if p.transform != 0 {
                return Err(Error::Unsupported(format!(
                    "entity {}: transformation matrices on spline entities are not supported",
                    p.id
                )));
            }
            let spline = parse_spline(p.ty, &tokens).map_err(|e| Error::IgesParse {
                line: p.lineno,
                message: format!("entity {} (type {}): {e}", p.id, p.ty),
            })?;
            let mut e = Entity::new(p.id, spline)?;
            e.parametric_space = p.status.get(4..6) == Some("05");
            entities.push(e);
        } else {
            params_of.insert(p.id, tokens);
            topology.push(TopologyRecord {
                id: p.id,
                entity_type: p.ty,
                directory: p.lines.clone(),
                parameters: p.data.clone(),
            });
        }
    }
    if entities.is_empty() {
        return Err(Error::Model(
            "IGES file contains no rational B-spline entities".into(),
        ));
    }
    link_owners(&mut entities, &topology, &params_of);
    let model = GeometryModel::new(entities, topology)?;
    Ok((model, doc))
}

pub fn write_iges(doc: &IgesDocument, model: &GeometryModel) -> Result<Vec<u8>> {
    write_iges_with(doc, model, &IgesWriteOptions::default()).map(|(b, _)| b)
}

/// Serialize `model` into the layout of `doc`. Returns the bytes and writer warnings.
pub fn write_iges_with(
    doc: &IgesDocument,
    model: &GeometryModel,
    opts: &IgesWriteOptions,
) -> Result<(Vec<u8>, Vec<String>)> {
    if model.entities.is_empty() {
        return Err(Error::IgesWrite("model has no entities".into()));
    }
    let entities: HashMap<usize, &Entity> = model.entities.iter().map(|e| (e.id, e)).collect();
    let topology: HashMap<usize, &TopologyRecord> =
        model.topology.iter().map(|t| (t.id, t)).collect();
    let mut seen = 0;
    let mut warnings = Vec::new();
    let (pd, rd) = (doc.param_delimiter, doc.record_delimiter);

    let mut out = String::new();
    let mut emit = |data: &str, letter: char, seq: usize| {
        out.push_str(&pad(data, DATA_COLS));
        out.push(letter);
        out.push_str(&format!("{seq:>7}\n"));
    };
    for (k, l) in doc.start.iter().enumerate() {
        emit(l, 'S', k + 1);
    }
    for (k, l) in doc.global.iter().enumerate() {
        emit(l, 'G', k + 1);
    }

    let mut dir_lines = Vec::new();
    let mut par_lines: Vec<(usize, String)> = Vec::new();
    for rec in &doc.directory {
        let (lines, data) = if rec.geometric {
            let e = entities.get(&rec.id).ok_or_else(|| {
                Error::IgesWrite(format!(
                    "document entity {} is missing from the model",
                    rec.id
                ))
            })?;
            seen += 1;
            if let Some(cap) = opts.max_degree {
                if e.spline.max_degree() > cap {
                    warnings.push(format!(
                        "entity {}: degree {} exceeds {cap}; some CAD systems will reject it",
                        e.id,
                        e.spline.max_degree()
                    ));
                }
            }
            let ty = entity_type(&e.spline);
            let mut lines = rec.lines.clone();
            if ty != rec.entity_type {
                return Err(Error::IgesWrite(format!(
                    "entity {}: type {} in the document but the model holds type {ty}",
                    rec.id, rec.entity_type
                )));
            }
            if entity_form(&lines) != 0 && !e.parametric_space {
                // A form number promises a special shape, which a deformed spline no longer has.
                set_field(&mut lines[1], 4, "0");
            }
            (
                lines,
                parameter_lines(&spline_text(&e.spline, pd, rd), pd, rd),
            )
        } else {
            let t = topology.get(&rec.id).ok_or_else(|| {
                Error::IgesWrite(format!(
                    "document record {} is missing from the model topology",
                    rec.id
                ))
            })?;
            (t.directory.clone(), t.parameters.clone())
        };
        let first = par_lines.len() + 1;
        let count = data.len();
        for d in data {
            par_lines.push((rec.id, d));
        }
        let mut lines = lines;
        set_field(&mut lines[0], 1, &first.to_string());
        set_field(&mut lines[1], 3, &count.to_string());
        dir_lines.push(lines);
    }
    if seen != model.entities.len() {
        return Err(Error::IgesWrite(format!(
            "model has {} entities but the document lists {seen}",
            model.entities.len()
        )));
    }
    for (k, [a, b]) in dir_lines.iter().enumerate() {
        emit(a, 'D', 2 * k + 1);
        emit(b, 'D', 2 * k + 2);
    }
    for (k, (id, d)) in par_lines.iter().enumerate() {
        emit(&format!("{:<64} {id:>7}", d), 'P', k + 1);
    }
    let tail = format!(
        "S{:>7}G{:>7}D{:>7}P{:>7}",
        doc.start.len(),
        doc.global.len(),
        2 * dir_lines.len(),
        par_lines.len()
    );
    emit(&tail, 'T', 1);
    Ok((out.chars().map(|c| c as u32 as u8).collect(), warnings))
}

fn entity_type(s: &Spline) -> u32 {
    if s.param_dim() == 1 {
        126
    } else {
        128
    }
}

fn entity_form(lines: &[String; 2]) -> i64 {
    sub(&lines[1], 32, 40).trim().parse().unwrap_or(0)
}

fn set_field(line: &mut String, k: usize, value: &str) {
    let s = pad(line, DATA_COLS);
    *line = format!(
        "{}{value:>8}{}",
        sub(&s, 0, 8 * k),
        sub(&s, 8 * k + 8, DATA_COLS)
    );
}

/// Characters `a..b` (IGES columns are counted in bytes; text is decoded one char per byte).
fn sub(s: &str, a: usize, b: usize) -> String {
    s.chars().skip(a).take(b - a).collect()
}

fn pad(s: &str, n: usize) -> String {
    let mut out: String = s.chars().take(n).collect();
    let len = out.chars().count();
    out.extend(std::iter::repeat_n(' ', n - len));
    out
}

/// Lines of a fixed-record file; files without line breaks are cut into 80-byte records.
fn split_records(text: &str) -> Vec<String> {
    let lines: Vec<&str> = text.lines().collect();
    if lines.len() == 1
        && lines[0].chars().count() > 80
        && lines[0].chars().count().is_multiple_of(80)
    {
        let chars: Vec<char> = lines[0].chars().collect();
        return chars.chunks(80).map(|c| c.iter().collect()).collect();
    }
    lines
        .iter()
        .map(|l| l.trim_end_matches('\r').to_string())
        .collect()
}

/// Parameter and record delimiters from the start of the global section.
fn global_delimiters(g: &str) -> std::result::Result<(char, char), String> {
    let chars: Vec<char> = g.chars().collect();
    let mut pos = 0;
    let pd = if chars.len() >= 3 && chars[0] == '1' && chars[1] == 'H' {
        pos = 3;
        chars[2]
    } else {
        ','
    };
    if chars.get(pos) != Some(&pd) {
        // A global section may consist of the record delimiter alone.
        return match chars.get(pos) {
            Some(&c) if c == ';' => Ok((pd, ';')),
            None => Ok((pd, ';')),
            Some(c) => Err(format!("expected parameter delimiter {pd:?}, found {c:?}")),
        };
    }
    pos += 1;
    let rd = if chars.len() >= pos + 3 && chars[pos] == '1' && chars[pos + 1] == 'H' {
        chars[pos + 2]
    } else {
        ';'
    };
    if rd == pd {
        return Err("parameter and record delimiters coincide".into());
    }
    Ok((pd, rd))
}

fn default_global(pd: char, rd: char) -> String {
    let h = |s: &str| format!("{}H{s}", s.len());
    let fields = [
        format!("1H{pd}"),
        format!("1H{rd}"),
        h("cadrecon"),
        h("model.igs"),
        h("cadrecon"),
        h(env!("CARGO_PKG_VERSION")),
        "32".into(),
        "38".into(),
        "6".into(),
        "308".into(),
        "15".into(),
        h("cadrecon"),
        "1.0".into(),
        "2".into(),
        h("MM"),
        "1".into(),
        "0.0".into(),
        h("20000101.000000"),
        "1.0D-9".into(),
        "0.0".into(),
        h(""),
        h(""),
        "11".into(),
        "0".into(),
        h("20000101.000000"),
    ];
    let mut s = fields.join(&pd.to_string());
    s.push(rd);
    s
}

/// Global-section text cut into 72-column records.
fn wrap_global(text: &str, pd: char, rd: char) -> Vec<String> {
    let mut lines = Vec::new();
    let mut cur = String::new();
    let mut token = String::new();
    for ch in text.chars() {
        token.push(ch);
        if (ch == pd || ch == rd) && !token.starts_with("1H")
            || token.len() == 3 && token.starts_with("1H")
        {
            if cur.len() + token.len() > DATA_COLS {
                lines.push(std::mem::take(&mut cur));
            }
            cur.push_str(&token);
            token.clear();
        }
    }
    cur.push_str(&token);
    if !cur.is_empty() {
        lines.push(cur);
    }
    lines
}

/// Split free-format parameter data into fields (up to the record delimiter), honoring
/// Hollerith strings.
fn tokenize(text: &str, pd: char, rd: char) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let mut cur = String::new();
    while i < chars.len() {
        let c = chars[i];
        if cur.trim().chars().all(|d| d.is_ascii_digit())
            && !cur.trim().is_empty()
            && (c == 'H' || c == 'h')
        {
            let n: usize = cur.trim().parse().unwrap_or(0);
            let s: String = chars[i + 1..(i + 1 + n).min(chars.len())].iter().collect();
            cur = format!("{}H{s}", n);
            i += 1 + n;
            continue;
        }
        if c == pd || c == rd {
            out.push(cur.trim().to_string());
            cur.clear();
            if c == rd {
                return out;
            }
        } else {
            cur.push(c);
        }
        i += 1;
    }
    if !cur.trim().is_empty() {
        out.push(cur.trim().to_string());
    }
    out
}

struct Fields<'a> {
    tokens: &'a [String],
    pos: usize,
}

impl Fields<'_> {
    fn real(&mut self) -> std::result::Result<f64, String> {
        let t = self
            .tokens
            .get(self.pos)
            .ok_or_else(|| format!("parameter {} missing", self.pos))?;
        self.pos += 1;
        if t.is_empty() {
            return Ok(0.0);
        }
        t.replace(['D', 'd'], "E")
            .parse()
            .map_err(|_| format!("parameter {} is not a number: {t:?}", self.pos - 1))
    }

    fn int(&mut self) -> std::result::Result<i64, String> {
        let x = self.real()?;
        if x.fract() != 0.0 {
            return Err(format!(
                "parameter {} should be an integer, got {x}",
                self.pos - 1
            ));
        }
        Ok(x as i64)
    }

    fn reals(&mut self, n: usize) -> std::result::Result<Vec<f64>, String> {
        (0..n).map(|_| self.real()).collect()
    }
}

fn parse_spline(ty: u32, tokens: &[String]) -> std::result::Result<Spline, String> {
    let mut f = Fields { tokens, pos: 1 };
    let (ks, ms) = if ty == 126 {
        let k = f.int()?;
        let m = f.int()?;
        (vec![k], vec![m])
    } else {
        let k1 = f.int()?;
        let k2 = f.int()?;
        let m1 = f.int()?;
        let m2 = f.int()?;
        (vec![k1, k2], vec![m1, m2])
    };
    let props = f.reals(if ty == 126 { 4 } else { 5 })?;
    let polynomial = props[2] == 1.0;
    let mut bases = Vec::new();
    for (&k, &m) in ks.iter().zip(&ms) {
        if k < 0 || m < 1 || k < m {
            return Err(format!("invalid sizes K={k}, M={m}"));
        }
        let knots = f.reals((k + m + 2) as usize)?;
        bases.push(KnotVector::new(m as usize, knots).map_err(|e| e.to_string())?);
    }
    let n: usize = ks.iter().map(|&k| (k + 1) as usize).product();
    let weights = f.reals(n)?;
    let mut cps = Vec::with_capacity(n);
    for _ in 0..n {
        let c = f.reals(3)?;
        cps.push(Point::new(c[0], c[1], c[2]));
    }
    let ranges: Vec<(f64, f64)> = (0..ks.len())
        .map(|_| Ok((f.real()?, f.real()?)))
        .collect::<std::result::Result<_, String>>()?;
    let uniform = weights
        .iter()
        .all(|&w| (w - weights[0]).abs() <= 1e-15 * weights[0].abs());
    let weights = if polynomial || uniform {
        None
    } else {
        Some(weights)
    };
    let mut s = Spline::new(bases, cps, weights).map_err(|e| e.to_string())?;
    for (d, (lo, hi)) in ranges.into_iter().enumerate() {
        let (a, b) = s.domain(d);
        let w = b - a;
        let same = (lo - a).abs() <= 1e-12 * w && (hi - b).abs() <= 1e-12 * w;
        if !same {
            s = extract_range(&s, d, lo.max(a), hi.min(b)).map_err(|e| e.to_string())?;
        }
    }
    Ok(s)
}

fn spline_text(s: &Spline, pd: char, rd: char) -> String {
    let mut t: Vec<String> = Vec::new();
    let int = |x: usize| x.to_string();
    let counts = s.counts();
    let poly = if s.is_rational() { "0" } else { "1" };
    if s.param_dim() == 1 {
        t.push("126".into());
        t.push(int(counts[0] - 1));
        t.push(int(s.degrees()[0]));
        t.extend(["0", "0", poly, "0"].map(String::from));
    } else {
        t.push("128".into());
        t.push(int(counts[0] - 1));
        t.push(int(counts[1] - 1));
        t.push(int(s.degrees()[0]));
        t.push(int(s.degrees()[1]));
        t.extend(["0", "0", poly, "0", "0"].map(String::from));
    }
    for kv in s.knot_vectors() {
        t.extend(kv.knots().iter().map(|&k| format_real(k)));
    }
    let n = s.control_points().len();
    t.extend((0..n).map(|i| format_real(s.weight(i))));
    for p in s.control_points() {
        t.extend([p.x, p.y, p.z].map(format_real));
    }
    for d in 0..s.param_dim() {
        let (a, b) = s.domain(d);
        t.push(format_real(a));
        t.push(format_real(b));
    }
    if s.param_dim() == 1 {
        t.extend(["0.0", "0.0", "0.0"].map(String::from));
    }
    let mut text = t.join(&pd.to_string());
    text.push(rd);
    text
}

/// Fill `owner_ids` of model-space curves from the topology links, in record order.
fn link_owners(
    entities: &mut [Entity],
    topology: &[TopologyRecord],
    params: &HashMap<usize, Vec<String>>,
) {
    let kind: HashMap<usize, EntityKind> = entities.iter().map(|e| (e.id, e.kind)).collect();
    let types: HashMap<usize, u32> = topology.iter().map(|t| (t.id, t.entity_type)).collect();
    let ptr = |tokens: &[String], k: usize| -> Option<usize> {
        tokens
            .get(k)
            .and_then(|t| t.parse::<i64>().ok())
            .filter(|&v| v > 0)
            .map(|v| v as usize)
    };
    // Trimmed surfaces point at their base surface.
    let mut base_surface: HashMap<usize, usize> = HashMap::new();
    for t in topology {
        if t.entity_type == 144 {
            if let Some(s) = params.get(&t.id).and_then(|p| ptr(p, 1)) {
                base_surface.insert(t.id, s);
            }
        }
    }
    let resolve_surface = |id: usize| -> Option<usize> {
        let id = base_surface.get(&id).copied().unwrap_or(id);
        (kind.get(&id) == Some(&EntityKind::Surface)).then_some(id)
    };
    // Composite curves expand to their members.
    let members = |id: usize| -> Vec<usize> {
        if types.get(&id) == Some(&102) {
            let p = &params[&id];
            let n = ptr(p, 1).unwrap_or(0);
            (0..n).filter_map(|k| ptr(p, 2 + k)).collect()
        } else {
            vec![id]
        }
    };
    let mut links: Vec<(usize, usize)> = Vec::new();
    let mut parametric: Vec<usize> = Vec::new();
    for t in topology {
        let Some(p) = params.get(&t.id) else { continue };
        match t.entity_type {
            142 => {
                let (Some(s), c) = (ptr(p, 2).and_then(resolve_surface), ptr(p, 4)) else {
                    continue;
                };
                if let Some(c) = c {
                    links.extend(members(c).into_iter().map(|m| (m, s)));
                }
                if let Some(b) = ptr(p, 3) {
                    parametric.extend(members(b));
                }
            }
            141 => {
                let Some(s) = ptr(p, 3).and_then(resolve_surface) else {
                    continue;
                };
                let n = ptr(p, 4).unwrap_or(0);
                let mut k = 5;
                for _ in 0..n {
                    if let Some(c) = ptr(p, k) {
                        links.extend(members(c).into_iter().map(|m| (m, s)));
                    }
                    let pcurves = ptr(p, k + 2).unwrap_or(0);
                    for j in 0..pcurves {
                        if let Some(b) = ptr(p, k + 3 + j) {
                            parametric.extend(members(b));
                        }
                    }
                    k += 3 + pcurves;
                }
            }
            _ => {}
        }
    }
    for e in entities.iter_mut() {
        if parametric.contains(&e.id) && e.kind == EntityKind::Curve {
            e.parametric_space = true;
        }
    }
    for (c, s) in links {
        if let Some(e) = entities.iter_mut().find(|e| e.id == c) {
            if e.kind == EntityKind::Curve && !e.parametric_space && !e.owner_ids.contains(&s) {
                e.owner_ids.push(s);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(data: &str, letter: char, seq: usize) -> String {
        format!("{:<72}{letter}{seq:>7}\n", data)
    }

    fn minimal_curve_file() -> String {
        let mut s = String::new();
        s += &line("minimal", 'S', 1);
        s += &line("1H,,1H;;", 'G', 1);
        let mut d = directory_lines(126, 0, "00000000");
        set_field(&mut d[0], 1, "1");
        set_field(&mut d[1], 3, "2");
        s += &line(&d[0], 'D', 1);
        s += &line(&d[1], 'D', 2);
        s += &format!(
            "{:<64} {:>7}P{:>7}\n",
            "126,1,1,0,0,1,0,0.,0.,1.,1.,1.,1.,1.,2.,3.,", 1, 1
        );
        s += &format!("{:<64} {:>7}P{:>7}\n", "4.,5.,6.,0.,1.,0.,0.,0.;", 1, 2);
        s += &line("S      1G      1D      2P      2", 'T', 1);
        s
    }

    #[test]
    fn reads_minimal_curve() {
        let (m, doc) = read_iges(minimal_curve_file().as_bytes()).unwrap();
        assert_eq!(m.entities.len(), 1);
        let c = &m.entities[0].spline;
        assert_eq!(c.degrees(), vec![1]);
        assert_eq!(c.evaluate(&[0.0]).unwrap(), Point::new(1.0, 2.0, 3.0));
        assert_eq!(c.evaluate(&[1.0]).unwrap(), Point::new(4.0, 5.0, 6.0));
        assert_eq!(doc.directory.len(), 1);
        let bytes = write_iges(&doc, &m).unwrap();
        let (m2, _) = read_iges(&bytes).unwrap();
        assert_eq!(m2.entities[0].spline, m.entities[0].spline);
    }

    #[test]
    fn rejects_lines() {
        let f = minimal_curve_file().replace("     126       1", "     110       1");
        assert!(matches!(
            read_iges(f.as_bytes()),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn bad_sequence_reports_line() {
        let f = minimal_curve_file().replace("D      2\n", "D      3\n");
        match read_iges(f.as_bytes()) {
            Err(Error::IgesParse { line, .. }) => assert_eq!(line, 4),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn reals_round_trip() {
        for x in [
            0.1,
            -1.0 / 3.0,
            1e-300,
            6.02e23,
            200.0,
            -0.0,
            f64::MIN_POSITIVE,
        ] {
            let s = format_real(x);
            assert!(s.len() <= 24, "{s}");
            let y: f64 = s.replace('D', "E").parse().unwrap();
            assert_eq!(x, y);
        }
        assert_eq!(format_real(1.5), "1.5D0");
    }

    #[test]
    fn custom_delimiters() {
        assert!(!global_delimiters("1H/,").unwrap_err().is_empty());
        assert_eq!(global_delimiters("1H//1H#/").unwrap(), ('/', '#'));
        assert_eq!(global_delimiters(",,").unwrap(), (',', ';'));
        assert_eq!(
            tokenize("3Ha,b,12,;rest", ',', ';'),
            vec!["3Ha,b", "12", ""]
        );
    }
}
