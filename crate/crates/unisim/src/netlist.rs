//! Line-oriented netlist format.
//!
//! One record per line, fields separated by whitespace, `#` starts a comment.
//! The full grammar lives in `docs/netlist.md`.

use std::collections::HashMap;

use thiserror::Error;
use unisim_core::circuit::{CircuitBuilder, CircuitGraph, Coil, ControlRef, ElementId, ElementKind, NodeRef, Waveform};
use unisim_core::machine::{LoadTorque, MotorParams};
use unisim_core::steady::{balanced_set, PqLoadSpec, PvGenSpec};
use unisim_core::SpeedMode;

/// Rejected netlist. Both kinds carry a 1-based line and column.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum NetlistError {
    /// The text does not follow the grammar.
    #[error("parse error at line {line}, column {column}: {reason}")]
    Parse { line: usize, column: usize, reason: String },
    /// Well-formed text describing an invalid circuit.
    #[error("validation error at line {line}, column {column}: {reason}")]
    Validation { line: usize, column: usize, reason: String },
}

impl NetlistError {
    pub fn line(&self) -> usize {
        match self {
            Self::Parse { line, .. } | Self::Validation { line, .. } => *line,
        }
    }

    pub fn column(&self) -> usize {
        match self {
            Self::Parse { column, .. } | Self::Validation { column, .. } => *column,
        }
    }

    pub fn reason(&self) -> &str {
        match self {
            Self::Parse { reason, .. } | Self::Validation { reason, .. } => reason,
        }
    }

    pub fn is_parse(&self) -> bool {
        matches!(self, Self::Parse { .. })
    }
}

type Result<T> = std::result::Result<T, NetlistError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Units {
    #[default]
    Si,
    PerUnit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AnalysisKind {
    Steady,
    Transient,
    Compare,
}

/// Solver settings; unset fields fall through to the next source.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Settings {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
    pub max_nr: Option<usize>,
}

impl Settings {
    /// Fields of `self` win; gaps are filled from `fallback`.
    pub fn or(self, fallback: Settings) -> Settings {
        Settings {
            dt: self.dt.or(fallback.dt),
            t_end: self.t_end.or(fallback.t_end),
            tol: self.tol.or(fallback.tol),
            max_nr: self.max_nr.or(fallback.max_nr),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Directive {
    pub kind: AnalysisKind,
    pub settings: Settings,
    pub line: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    Resistor,
    Inductor,
    Coupling,
    VoltageSource,
    CurrentSource,
    Vccs,
    Ccvs,
    Switch,
    PqLoad,
    PvGenerator,
    Supply,
    Motor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ElementRecord {
    pub name: String,
    pub kind: RecordKind,
    pub line: usize,
}

/// A validated netlist together with the circuit it describes.
#[derive(Debug, Clone)]
pub struct Netlist {
    pub title: Option<String>,
    pub units: Units,
    pub ground: String,
    /// Declared nodes, in declaration order.
    pub nodes: Vec<String>,
    /// Element records in file order. A `supply` line is one record.
    pub elements: Vec<ElementRecord>,
    pub directives: Vec<Directive>,
    pub circuit: CircuitGraph,
}

impl Netlist {
    pub fn frequency(&self) -> f64 {
        self.circuit.frequency
    }

    pub fn motors(&self) -> Vec<(&str, &MotorParams)> {
        self.circuit
            .elements()
            .iter()
            .filter_map(|e| match &e.kind {
                ElementKind::InductionMotor { params, .. } => Some((e.name.as_str(), params)),
                _ => None,
            })
            .collect()
    }

    pub fn motor(&self, name: &str) -> Option<&MotorParams> {
        self.motors().into_iter().find(|(n, _)| *n == name).map(|(_, p)| p)
    }

    pub fn directive(&self, kind: AnalysisKind) -> Option<&Directive> {
        self.directives.iter().find(|d| d.kind == kind)
    }

    /// Directive settings for `kind`. A `compare` directive also configures the
    /// other two analyses, and `compare` borrows from `transient`.
    pub fn settings(&self, kind: AnalysisKind) -> Settings {
        let of = |k| self.directive(k).map(|d| d.settings).unwrap_or_default();
        match kind {
            AnalysisKind::Steady => of(AnalysisKind::Steady).or(Settings {
                tol: of(AnalysisKind::Compare).tol,
                ..Settings::default()
            }),
            AnalysisKind::Transient => of(AnalysisKind::Transient).or(of(AnalysisKind::Compare)),
            AnalysisKind::Compare => of(AnalysisKind::Compare).or(of(AnalysisKind::Transient)),
        }
    }
}

#[derive(Debug, Clone)]
struct Token {
    text: String,
    line: usize,
    column: usize,
}

impl Token {
    fn parse_error(&self, reason: impl Into<String>) -> NetlistError {
        NetlistError::Parse {
            line: self.line,
            column: self.column,
            reason: reason.into(),
        }
    }

    fn invalid(&self, reason: impl Into<String>) -> NetlistError {
        NetlistError::Validation {
            line: self.line,
            column: self.column,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Num {
    value: f64,
    line: usize,
    column: usize,
}

impl Num {
    fn invalid(&self, reason: impl Into<String>) -> NetlistError {
        NetlistError::Validation {
            line: self.line,
            column: self.column,
            reason: reason.into(),
        }
    }

    fn positive(self, what: &str) -> Result<f64> {
        if self.value > 0.0 {
            Ok(self.value)
        } else {
            Err(self.invalid(format!("{what} must be positive, got {}", self.value)))
        }
    }
}

fn tokenize(raw: &str, line: usize) -> Vec<Token> {
    let body = raw.split('#').next().unwrap_or("");
    let mut out = Vec::new();
    let mut start: Option<(usize, usize)> = None;
    let flush = |start: &mut Option<(usize, usize)>, end: usize, out: &mut Vec<Token>| {
        if let Some((s, column)) = start.take() {
            out.push(Token {
                text: body[s..end].to_string(),
                line,
                column,
            });
        }
    };
    for (column, (i, ch)) in body.char_indices().enumerate() {
        if ch.is_whitespace() {
            flush(&mut start, i, &mut out);
        } else if start.is_none() {
            start = Some((i, column + 1));
        }
    }
    flush(&mut start, body.len(), &mut out);
    out
}

/// One non-empty line split into its keyword, positional fields and `key=value` pairs.
struct Record {
    head: Token,
    positional: Vec<Token>,
    keyed: Vec<(Token, Token)>,
    end: usize,
}

impl Record {
    fn split(tokens: Vec<Token>) -> Result<Self> {
        let mut it = tokens.into_iter();
        let head = it.next().expect("caller skips blank lines");
        let mut end = head.column + head.text.chars().count();
        let (mut positional, mut keyed) = (Vec::new(), Vec::new());
        for tok in it {
            end = tok.column + tok.text.chars().count();
            match tok.text.split_once('=') {
                None => {
                    if !keyed.is_empty() {
                        return Err(tok.parse_error("positional field after key=value pairs"));
                    }
                    positional.push(tok)
                }
                Some((k, v)) => {
                    if k.is_empty() || v.is_empty() {
                        return Err(tok.parse_error(format!("malformed key=value pair `{}`", tok.text)));
                    }
                    let key = Token {
                        text: k.to_ascii_lowercase(),
                        line: tok.line,
                        column: tok.column,
                    };
                    let value = Token {
                        text: v.to_string(),
                        line: tok.line,
                        column: tok.column + k.chars().count() + 1,
                    };
                    keyed.push((key, value));
                }
            }
        }
        Ok(Self {
            head,
            positional,
            keyed,
            end,
        })
    }

    fn missing(&self, what: &str) -> NetlistError {
        NetlistError::Parse {
            line: self.head.line,
            column: self.end,
            reason: format!("`{}` record is missing {what}", self.head.text),
        }
    }

    /// Exactly `names.len()` positional fields.
    fn positional(&self, names: &[&str]) -> Result<&[Token]> {
        if let Some(extra) = self.positional.get(names.len()) {
            return Err(extra.parse_error(format!("unexpected field `{}`", extra.text)));
        }
        if let Some(name) = names.get(self.positional.len()) {
            return Err(self.missing(name));
        }
        Ok(&self.positional)
    }

    fn keys(&self, allowed: &[&str]) -> Result<Keys<'_>> {
        let mut seen: Vec<&str> = Vec::new();
        for (k, _) in &self.keyed {
            if !allowed.contains(&k.text.as_str()) {
                return Err(k.parse_error(format!("unknown key `{}` for `{}`", k.text, self.head.text)));
            }
            if seen.contains(&k.text.as_str()) {
                return Err(k.parse_error(format!("duplicate key `{}`", k.text)));
            }
            seen.push(&k.text);
        }
        Ok(Keys { record: self })
    }

    fn no_keys(&self) -> Result<()> {
        self.keys(&[]).map(|_| ())
    }
}

struct Keys<'a> {
    record: &'a Record,
}

impl Keys<'_> {
    fn get(&self, key: &str) -> Option<&Token> {
        self.record.keyed.iter().find(|(k, _)| k.text == key).map(|(_, v)| v)
    }

    fn number(&self, key: &str) -> Result<Option<Num>> {
        self.get(key).map(number).transpose()
    }

    fn required(&self, key: &str) -> Result<Num> {
        self.number(key)?.ok_or_else(|| self.record.missing(&format!("`{key}=`")))
    }

    fn list(&self, key: &str) -> Result<Option<Vec<Num>>> {
        let Some(tok) = self.get(key) else { return Ok(None) };
        let mut column = tok.column;
        let mut out = Vec::new();
        for part in tok.text.split(',') {
            out.push(number(&Token {
                text: part.to_string(),
                line: tok.line,
                column,
            })?);
            column += part.chars().count() + 1;
        }
        Ok(Some(out))
    }

    fn integer(&self, key: &str) -> Result<Option<(usize, Token)>> {
        let Some(tok) = self.get(key) else { return Ok(None) };
        match tok.text.parse::<usize>() {
            Ok(v) => Ok(Some((v, tok.clone()))),
            Err(_) => Err(tok.parse_error(format!("`{}` is not a non-negative integer", tok.text))),
        }
    }
}

fn number(tok: &Token) -> Result<Num> {
    match tok.text.parse::<f64>() {
        Ok(value) if value.is_finite() => Ok(Num {
            value,
            line: tok.line,
            column: tok.column,
        }),
        _ => Err(tok.parse_error(format!("`{}` is not a finite number", tok.text))),
    }
}

fn name(tok: &Token) -> Result<Token> {
    let ok = tok
        .text
        .chars()
        .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '.' | ':' | '+' | '-'));
    if ok {
        Ok(tok.clone())
    } else {
        Err(tok.parse_error(format!("`{}` is not a valid name", tok.text)))
    }
}

fn names<const N: usize>(toks: &[Token]) -> Result<[Token; N]> {
    let mut out: [Token; N] = std::array::from_fn(|k| toks[k].clone());
    for t in &mut out {
        *t = name(t)?;
    }
    Ok(out)
}

struct MotorSpec {
    terminals: [Token; 3],
    rs: Num,
    rr: Num,
    lls: Num,
    llr: Num,
    lm: Num,
    j: Num,
    d: Option<Num>,
    poles: (usize, Token),
    tl: Option<Vec<Num>>,
    vll: Option<Num>,
    f: Option<Num>,
}

enum Spec {
    Resistor { a: Token, b: Token, value: Num },
    Inductor { a: Token, b: Token, value: Num },
    Coupling { first: Token, second: Token, k: Num },
    Source { current: bool, p: Token, n: Token, amplitude: Num, phase: Option<Num> },
    Vccs { p: Token, n: Token, cp: Token, cn: Token, gain: Num },
    Ccvs { p: Token, n: Token, control: Token, gain: Num },
    Switch { p: Token, n: Token, closed: bool, toggles: Vec<Num> },
    Pq { node: Token, p: Num, q: Num },
    Pv { node: Token, p: Num, v: Num },
    Supply { nodes: [Token; 3], vll: Num, phase: Option<Num> },
    Motor(Box<MotorSpec>),
}

impl Spec {
    fn kind(&self) -> RecordKind {
        match self {
            Spec::Resistor { .. } => RecordKind::Resistor,
            Spec::Inductor { .. } => RecordKind::Inductor,
            Spec::Coupling { .. } => RecordKind::Coupling,
            Spec::Source { current: false, .. } => RecordKind::VoltageSource,
            Spec::Source { current: true, .. } => RecordKind::CurrentSource,
            Spec::Vccs { .. } => RecordKind::Vccs,
            Spec::Ccvs { .. } => RecordKind::Ccvs,
            Spec::Switch { .. } => RecordKind::Switch,
            Spec::Pq { .. } => RecordKind::PqLoad,
            Spec::Pv { .. } => RecordKind::PvGenerator,
            Spec::Supply { .. } => RecordKind::Supply,
            Spec::Motor(_) => RecordKind::Motor,
        }
    }
}

struct Item {
    name: Token,
    spec: Spec,
}

#[derive(Default)]
struct Parsed {
    title: Option<(String, usize)>,
    units: Option<(Units, Token)>,
    freq: Option<Num>,
    grounds: Vec<Token>,
    nodes: Vec<Token>,
    items: Vec<Item>,
    directives: Vec<(Directive, Token)>,
    lines: usize,
}

/// Parses and validates `text`. Never panics; every rejection carries a location.
pub fn parse_netlist(text: &str) -> Result<Netlist> {
    let parsed = parse_records(text)?;
    build(parsed)
}

fn parse_records(text: &str) -> Result<Parsed> {
    let mut out = Parsed::default();
    for (index, raw) in text.lines().enumerate() {
        let line = index + 1;
        out.lines = line;
        let tokens = tokenize(raw, line);
        if tokens.is_empty() {
            continue;
        }
        let rec = Record::split(tokens)?;
        let keyword = rec.head.text.to_ascii_lowercase();
        match keyword.as_str() {
            "title" => {
                if let Some((_, first)) = out.title {
                    return Err(rec.head.invalid(format!("second title; the first is on line {first}")));
                }
                let body = raw.split('#').next().unwrap_or("").trim();
                let rest = body.get(rec.head.text.len()..).unwrap_or("").trim();
                out.title = Some((rest.to_string(), line));
            }
            "units" => {
                let [u] = rec.positional(&["a unit system"])? else { unreachable!() };
                rec.no_keys()?;
                let units = match u.text.to_ascii_lowercase().as_str() {
                    "si" => Units::Si,
                    "pu" => Units::PerUnit,
                    _ => return Err(u.parse_error(format!("unit system must be `si` or `pu`, got `{}`", u.text))),
                };
                if out.units.is_some() {
                    return Err(rec.head.invalid("unit system declared twice"));
                }
                out.units = Some((units, u.clone()));
            }
            "freq" => {
                let [f] = rec.positional(&["a frequency"])? else { unreachable!() };
                rec.no_keys()?;
                if out.freq.is_some() {
                    return Err(rec.head.invalid("frequency declared twice"));
                }
                out.freq = Some(number(f)?);
            }
            "ground" => {
                let [g] = rec.positional(&["a node name"])? else { unreachable!() };
                rec.no_keys()?;
                out.grounds.push(name(g)?);
            }
            "node" => {
                rec.no_keys()?;
                if rec.positional.is_empty() {
                    return Err(rec.missing("a node name"));
                }
                for t in &rec.positional {
                    out.nodes.push(name(t)?);
                }
            }
            "analysis" => {
                let [k] = rec.positional(&["an analysis kind"])? else { unreachable!() };
                let (kind, allowed): (_, &[&str]) = match k.text.to_ascii_lowercase().as_str() {
                    "steady" => (AnalysisKind::Steady, &["tol", "max_nr"]),
                    "transient" => (AnalysisKind::Transient, &["dt", "tend", "tol", "max_nr"]),
                    "compare" => (AnalysisKind::Compare, &["dt", "tend", "tol", "max_nr"]),
                    _ => {
                        return Err(k.parse_error(format!(
                            "analysis must be `steady`, `transient` or `compare`, got `{}`",
                            k.text
                        )))
                    }
                };
                let keys = rec.keys(allowed)?;
                let positive = |key: &str| -> Result<Option<f64>> {
                    keys.number(key)?.map(|n| n.positive(key)).transpose()
                };
                let max_nr = match keys.integer("max_nr")? {
                    Some((0, tok)) => return Err(tok.invalid("max_nr must be at least 1")),
                    other => other.map(|(v, _)| v),
                };
                let settings = Settings {
                    dt: positive("dt")?,
                    t_end: positive("tend")?,
                    tol: positive("tol")?,
                    max_nr,
                };
                out.directives.push((Directive { kind, settings, line }, rec.head.clone()));
            }
            _ => {
                let item = parse_element(&rec, &keyword)?;
                out.items.push(item);
            }
        }
    }
    Ok(out)
}

fn parse_element(rec: &Record, keyword: &str) -> Result<Item> {
    let field = |names: &[&str]| -> Result<Vec<Token>> { rec.positional(names).map(|t| t.to_vec()) };
    let (el_name, spec) = match keyword {
        "r" | "l" => {
            let t = field(&["a name", "node a", "node b", "a value"])?;
            rec.no_keys()?;
            let [n, a, b] = names(&t)?;
            let value = number(&t[3])?;
            let spec = if keyword == "r" {
                Spec::Resistor { a, b, value }
            } else {
                Spec::Inductor { a, b, value }
            };
            (n, spec)
        }
        "k" => {
            let t = field(&["a name", "the first inductor", "the second inductor", "a coupling coefficient"])?;
            rec.no_keys()?;
            let [n, first, second] = names(&t)?;
            (n, Spec::Coupling { first, second, k: number(&t[3])? })
        }
        "v" | "i" => {
            let t = field(&["a name", "node p", "node n", "an amplitude"])?;
            let keys = rec.keys(&["phase"])?;
            let [n, p, nn] = names(&t)?;
            let spec = Spec::Source {
                current: keyword == "i",
                p,
                n: nn,
                amplitude: number(&t[3])?,
                phase: keys.number("phase")?,
            };
            (n, spec)
        }
        "g" => {
            let t = field(&["a name", "node p", "node n", "control node p", "control node n", "a gain"])?;
            rec.no_keys()?;
            let [n, p, nn, cp, cn] = names(&t)?;
            (n, Spec::Vccs { p, n: nn, cp, cn, gain: number(&t[5])? })
        }
        "h" => {
            let t = field(&["a name", "node p", "node n", "a control element", "a gain"])?;
            rec.no_keys()?;
            let [n, p, nn, control] = names(&t)?;
            (n, Spec::Ccvs { p, n: nn, control, gain: number(&t[4])? })
        }
        "s" => {
            let t = field(&["a name", "node p", "node n", "a state"])?;
            let keys = rec.keys(&["toggle"])?;
            let [n, p, nn] = names(&t)?;
            let closed = match t[3].text.to_ascii_lowercase().as_str() {
                "open" => false,
                "closed" => true,
                _ => return Err(t[3].parse_error(format!("switch state must be `open` or `closed`, got `{}`", t[3].text))),
            };
            let toggles = keys.list("toggle")?.unwrap_or_default();
            (n, Spec::Switch { p, n: nn, closed, toggles })
        }
        "pq" => {
            let t = field(&["a name", "a node"])?;
            let keys = rec.keys(&["p", "q"])?;
            let [n, node] = names(&t)?;
            (n, Spec::Pq { node, p: keys.required("p")?, q: keys.required("q")? })
        }
        "pv" => {
            let t = field(&["a name", "a node"])?;
            let keys = rec.keys(&["p", "v"])?;
            let [n, node] = names(&t)?;
            (n, Spec::Pv { node, p: keys.required("p")?, v: keys.required("v")? })
        }
        "supply" => {
            let t = field(&["a name", "node a", "node b", "node c"])?;
            let keys = rec.keys(&["vll", "phase"])?;
            let [n, a, b, c] = names(&t)?;
            (
                n,
                Spec::Supply {
                    nodes: [a, b, c],
                    vll: keys.required("vll")?,
                    phase: keys.number("phase")?,
                },
            )
        }
        "motor" => {
            let t = field(&["a name", "node a", "node b", "node c"])?;
            let keys = rec.keys(&["rs", "rr", "lls", "llr", "lm", "j", "d", "poles", "tl", "vll", "f"])?;
            let [n, a, b, c] = names(&t)?;
            let poles = keys.integer("poles")?.ok_or_else(|| rec.missing("`poles=`"))?;
            let spec = MotorSpec {
                terminals: [a, b, c],
                rs: keys.required("rs")?,
                rr: keys.required("rr")?,
                lls: keys.required("lls")?,
                llr: keys.required("llr")?,
                lm: keys.required("lm")?,
                j: keys.required("j")?,
                d: keys.number("d")?,
                poles,
                tl: keys.list("tl")?,
                vll: keys.number("vll")?,
                f: keys.number("f")?,
            };
            (n, Spec::Motor(Box::new(spec)))
        }
        _ => return Err(rec.head.parse_error(format!("unknown record `{}`", rec.head.text))),
    };
    Ok(Item { name: el_name, spec })
}

/// Coil record indices and `(coil, coil, k)` couplings of one inductor block.
type Block = (Vec<usize>, Vec<(usize, usize, f64)>);

/// Element slots each record occupies in the circuit, and how branch currents are addressed.
struct Slots {
    first: Vec<Option<ElementId>>,
    /// Inductor record index to (block root record, coil position).
    coil: HashMap<usize, (usize, usize)>,
    /// Inductor block root to its coils and mutual terms.
    blocks: HashMap<usize, Block>,
}

fn find(parent: &mut [usize], mut i: usize) -> usize {
    while parent[i] != i {
        parent[i] = parent[parent[i]];
        i = parent[i];
    }
    i
}

fn allocate(items: &[Item], index: &HashMap<&str, usize>) -> Result<Slots> {
    let mut parent: Vec<usize> = (0..items.len()).collect();
    let mut mutual = Vec::new();
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for item in items {
        let Spec::Coupling { first, second, k } = &item.spec else { continue };
        let coil = |t: &Token| -> Result<usize> {
            match index.get(t.text.as_str()) {
                Some(&i) if matches!(items[i].spec, Spec::Inductor { .. }) => Ok(i),
                _ => Err(t.invalid(format!("`{}` is not an inductor", t.text))),
            }
        };
        let (a, b) = (coil(first)?, coil(second)?);
        if a == b {
            return Err(second.invalid("an inductor cannot couple to itself"));
        }
        let pair = (a.min(b), a.max(b));
        if pairs.contains(&pair) {
            return Err(item.name.invalid(format!("`{}` and `{}` are already coupled", first.text, second.text)));
        }
        if k.value.abs() >= 1.0 {
            return Err(k.invalid(format!("coupling coefficient must satisfy |k| < 1, got {}", k.value)));
        }
        pairs.push(pair);
        mutual.push((a, b, k.value));
        let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
        // the earlier record roots the block so it keeps its place in file order
        parent[ra.max(rb)] = ra.min(rb);
    }

    let mut slots = Slots {
        first: vec![None; items.len()],
        coil: HashMap::new(),
        blocks: HashMap::new(),
    };
    let mut next = 0;
    for (i, item) in items.iter().enumerate() {
        match &item.spec {
            Spec::Coupling { .. } => {}
            Spec::Inductor { .. } => {
                let root = find(&mut parent, i);
                let block = slots.blocks.entry(root).or_default();
                slots.coil.insert(i, (root, block.0.len()));
                block.0.push(i);
                if root == i {
                    slots.first[i] = Some(ElementId(next));
                    next += 1;
                }
            }
            Spec::Supply { .. } => {
                slots.first[i] = Some(ElementId(next));
                next += 3;
            }
            _ => {
                slots.first[i] = Some(ElementId(next));
                next += 1;
            }
        }
    }
    for (a, b, k) in mutual {
        let root = find(&mut parent, a);
        slots.blocks.get_mut(&root).expect("block exists").1.push((a, b, k));
    }
    Ok(slots)
}

fn build(parsed: Parsed) -> Result<Netlist> {
    let Parsed {
        title,
        units,
        freq,
        grounds,
        nodes,
        items,
        directives,
        lines,
    } = parsed;

    let ground = match grounds.as_slice() {
        [] => {
            return Err(NetlistError::Validation {
                line: lines.max(1),
                column: 1,
                reason: "netlist declares no ground node".into(),
            })
        }
        [g] => g.clone(),
        [_, second, ..] => return Err(second.invalid("exactly one ground node is allowed")),
    };
    let mut declared: HashMap<&str, &Token> = HashMap::new();
    for n in &nodes {
        if n.text == ground.text {
            return Err(n.invalid(format!("`{}` is already the ground node", n.text)));
        }
        if let Some(prev) = declared.insert(&n.text, n) {
            return Err(n.invalid(format!("node `{}` already declared on line {}", n.text, prev.line)));
        }
    }

    for (k, (d, tok)) in directives.iter().enumerate() {
        if let Some((first, _)) = directives[..k].iter().find(|(e, _)| e.kind == d.kind) {
            return Err(tok.invalid(format!("analysis given twice; the first is on line {}", first.line)));
        }
    }

    let mut index: HashMap<&str, usize> = HashMap::new();
    let mut taken: HashMap<String, usize> = HashMap::new();
    for (i, item) in items.iter().enumerate() {
        let mut claim = |label: String| match taken.insert(label.clone(), item.name.line) {
            Some(line) => Err(item.name.invalid(format!("element `{label}` already defined on line {line}"))),
            None => Ok(()),
        };
        claim(item.name.text.clone())?;
        if let Spec::Supply { .. } = item.spec {
            for phase in ["a", "b", "c"] {
                claim(format!("{}.{phase}", item.name.text))?;
            }
        }
        index.insert(&item.name.text, i);
    }

    let units_value = units.as_ref().map_or(Units::Si, |(u, _)| *u);
    let mut frequency = freq;
    if let Some(f) = frequency {
        if f.value < 0.0 {
            return Err(f.invalid("frequency must be non-negative"));
        }
    }
    for item in &items {
        if let Spec::Motor(m) = &item.spec {
            if units_value == Units::PerUnit {
                return Err(item.name.invalid("motors are modelled in SI units; declare `units si`"));
            }
            if let Some(f) = m.f {
                match frequency {
                    Some(sys) if sys.value != f.value => {
                        return Err(f.invalid(format!(
                            "motor frequency {} differs from the system frequency {} on line {}",
                            f.value, sys.value, sys.line
                        )))
                    }
                    Some(_) => {}
                    None => frequency = Some(f),
                }
            }
        }
    }
    let frequency = frequency.map_or(0.0, |f| f.value);

    let slots = allocate(&items, &index)?;
    let mut builder = CircuitBuilder::new(&ground.text).frequency(frequency);
    for n in &nodes {
        builder.node(&n.text);
    }
    let node = |t: &Token| -> Result<NodeRef> {
        if t.text == ground.text {
            Ok(NodeRef::GROUND)
        } else if declared.contains_key(t.text.as_str()) {
            let pos = nodes.iter().position(|n| n.text == t.text).expect("declared");
            Ok(NodeRef(pos + 1))
        } else {
            Err(t.invalid(format!("undeclared node `{}`", t.text)))
        }
    };
    let control = |t: &Token| -> Result<ControlRef> {
        let bad = || t.invalid(format!("`{}` does not carry a branch current", t.text));
        if let Some((supply, phase)) = t.text.rsplit_once('.') {
            if let Some(&i) = index.get(supply) {
                if let (Spec::Supply { .. }, Some(k)) = (&items[i].spec, ["a", "b", "c"].iter().position(|p| *p == phase)) {
                    let base = slots.first[i].expect("supply slot");
                    return Ok(ControlRef {
                        element: ElementId(base.0 + k),
                        coil: 0,
                    });
                }
            }
        }
        let i = *index.get(t.text.as_str()).ok_or_else(|| t.invalid(format!("unknown element `{}`", t.text)))?;
        match &items[i].spec {
            Spec::Inductor { .. } => {
                let (root, pos) = slots.coil[&i];
                Ok(ControlRef {
                    element: slots.first[root].expect("block root slot"),
                    coil: pos,
                })
            }
            Spec::Source { current: false, .. } | Spec::Switch { .. } | Spec::Ccvs { .. } => Ok(ControlRef {
                element: slots.first[i].expect("slot"),
                coil: 0,
            }),
            _ => Err(bad()),
        }
    };
    let degrees = |p: Option<Num>| p.map_or(0.0, |p| p.value.to_radians());

    for (i, item) in items.iter().enumerate() {
        let label = item.name.text.as_str();
        match &item.spec {
            Spec::Resistor { a, b, value } => {
                let resistance = value.positive("resistance")?;
                builder.add(label, ElementKind::Resistor { a: node(a)?, b: node(b)?, resistance });
            }
            Spec::Inductor { .. } => {
                let Some((coils, mutual)) = slots.blocks.get(&i) else { continue };
                let n = coils.len();
                let mut inductance = vec![0.0; n * n];
                let mut block_coils = Vec::with_capacity(n);
                for (k, &c) in coils.iter().enumerate() {
                    let Spec::Inductor { a, b, value } = &items[c].spec else { unreachable!() };
                    inductance[k * n + k] = value.positive("inductance")?;
                    block_coils.push(Coil {
                        label: items[c].name.text.clone(),
                        p: node(a)?,
                        n: node(b)?,
                    });
                }
                for &(a, b, k) in mutual {
                    let (ia, ib) = (slots.coil[&a].1, slots.coil[&b].1);
                    let m = k * (inductance[ia * n + ia] * inductance[ib * n + ib]).sqrt();
                    inductance[ia * n + ib] = m;
                    inductance[ib * n + ia] = m;
                }
                builder.add(
                    label,
                    ElementKind::Inductors {
                        coils: block_coils,
                        inductance,
                    },
                );
            }
            Spec::Coupling { .. } => {}
            Spec::Source {
                current,
                p,
                n,
                amplitude,
                phase,
            } => {
                let source = Waveform {
                    amplitude: amplitude.value,
                    phase: degrees(*phase),
                };
                let (p, n) = (node(p)?, node(n)?);
                let kind = if *current {
                    ElementKind::CurrentSource { p, n, source }
                } else {
                    ElementKind::VoltageSource { p, n, source }
                };
                builder.add(label, kind);
            }
            Spec::Vccs { p, n, cp, cn, gain } => {
                let kind = ElementKind::Vccs {
                    p: node(p)?,
                    n: node(n)?,
                    cp: node(cp)?,
                    cn: node(cn)?,
                    gain: gain.value,
                };
                builder.add(label, kind);
            }
            Spec::Ccvs { p, n, control: c, gain } => {
                let kind = ElementKind::Ccvs {
                    p: node(p)?,
                    n: node(n)?,
                    control: control(c)?,
                    gain: gain.value,
                };
                builder.add(label, kind);
            }
            Spec::Switch { p, n, closed, toggles } => {
                if let Some(w) = toggles.windows(2).find(|w| w[1].value <= w[0].value) {
                    return Err(w[1].invalid("switching times must increase"));
                }
                let kind = ElementKind::Switch {
                    p: node(p)?,
                    n: node(n)?,
                    closed: *closed,
                    toggles: toggles.iter().map(|t| t.value).collect(),
                };
                builder.add(label, kind);
            }
            Spec::Pq { node: bus, p, q } => {
                let spec = PqLoadSpec {
                    node: node(bus)?,
                    p: p.value,
                    q: q.value,
                };
                builder.add(label, ElementKind::PqLoad(spec));
            }
            Spec::Pv { node: bus, p, v } => {
                let spec = PvGenSpec {
                    node: node(bus)?,
                    p_g: p.value,
                    v_set: v.positive("voltage set point")?,
                };
                builder.add(label, ElementKind::PvGenerator(spec));
            }
            Spec::Supply { nodes: phases, vll, phase } => {
                let vll = vll.positive("line-line voltage")?;
                if frequency <= 0.0 {
                    return Err(item.name.invalid("a three-phase supply needs a positive `freq`"));
                }
                let set = balanced_set(vll * 2f64.sqrt() / 3f64.sqrt(), degrees(*phase));
                for (k, (t, v)) in phases.iter().zip(set).enumerate() {
                    let p = node(t)?;
                    builder.add(
                        &format!("{label}.{}", ["a", "b", "c"][k]),
                        ElementKind::VoltageSource {
                            p,
                            n: NodeRef::GROUND,
                            source: Waveform::from_phasor(v),
                        },
                    );
                }
            }
            Spec::Motor(m) => {
                let params = motor_params(item, m, &items, frequency)?;
                let terminals = [node(&m.terminals[0])?, node(&m.terminals[1])?, node(&m.terminals[2])?];
                builder.add(
                    label,
                    ElementKind::InductionMotor {
                        terminals,
                        params,
                        speed: SpeedMode::Free,
                    },
                );
            }
        }
    }

    let circuit = builder.build().map_err(|e| locate(e, &items, &nodes))?;
    Ok(Netlist {
        title: title.map(|(t, _)| t),
        units: units_value,
        ground: ground.text,
        nodes: nodes.into_iter().map(|n| n.text).collect(),
        elements: items
            .iter()
            .map(|it| ElementRecord {
                name: it.name.text.clone(),
                kind: it.spec.kind(),
                line: it.name.line,
            })
            .collect(),
        directives: directives.into_iter().map(|(d, _)| d).collect(),
        circuit,
    })
}

fn motor_params(item: &Item, m: &MotorSpec, items: &[Item], frequency: f64) -> Result<MotorParams> {
    let vll = match m.vll {
        Some(v) => v.positive("vll")?,
        None => {
            // nameplate voltage defaults to the supply wired to the same terminals
            let feeding = items.iter().find_map(|it| match &it.spec {
                Spec::Supply { nodes, vll, .. } if nodes.iter().zip(&m.terminals).all(|(a, b)| a.text == b.text) => {
                    Some(vll.value)
                }
                _ => None,
            });
            feeding.ok_or_else(|| item.name.invalid("motor needs `vll=` when no supply feeds its terminals"))?
        }
    };
    if frequency <= 0.0 {
        return Err(item.name.invalid("a motor needs a positive `freq` or `f=`"));
    }
    let (poles, poles_tok) = &m.poles;
    if *poles == 0 || !poles.is_multiple_of(2) {
        return Err(poles_tok.invalid(format!("pole count must be even and positive, got {poles}")));
    }
    let damping = match m.d {
        Some(d) if d.value < 0.0 => return Err(d.invalid("damping must be non-negative")),
        Some(d) => d.value,
        None => 0.0,
    };
    let params = MotorParams {
        rs: m.rs.positive("rs")?,
        rr: m.rr.positive("rr")?,
        lls: m.lls.positive("lls")?,
        llr: m.llr.positive("llr")?,
        lm: m.lm.positive("lm")?,
        inertia: m.j.positive("j")?,
        damping,
        poles: u32::try_from(*poles).map_err(|_| poles_tok.invalid("pole count out of range"))?,
        load_torque: LoadTorque {
            coefficients: m.tl.as_ref().map_or(vec![0.0], |c| c.iter().map(|n| n.value).collect()),
        },
        v_ll: vll,
        frequency,
    };
    params.validate().map_err(|e| item.name.invalid(e.to_string()))?;
    Ok(params)
}

/// Pins a circuit-level error to the record it names.
fn locate(err: unisim_core::Error, items: &[Item], nodes: &[Token]) -> NetlistError {
    if let unisim_core::Error::UnreferencedNode { node } = &err {
        if let Some(t) = nodes.iter().find(|t| &t.text == node) {
            return t.invalid(format!("node `{node}` is not connected to any element"));
        }
    }
    let message = err.to_string();
    let mut by_length: Vec<&Item> = items.iter().collect();
    by_length.sort_by_key(|it| std::cmp::Reverse(it.name.text.len()));
    let hit = by_length.into_iter().find(|it| {
        let n = &it.name.text;
        message.contains(&format!("`{n}`")) || message.contains(&format!("{n}:")) || message.contains(&format!("of {n})"))
    });
    match hit.or(items.first()) {
        Some(it) => it.name.invalid(message),
        None => NetlistError::Validation {
            line: 1,
            column: 1,
            reason: message,
        },
    }
}
