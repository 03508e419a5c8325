//! Binary denial constraints: a small rule language and violation counting.
//!
//! Grammar (whitespace-insensitive):
//!
//! ```text
//! rule      := '!' '(' predicate ( '&' predicate )* ')'
//! predicate := ref op ( ref | 'constant' )
//! ref       := ('t1' | 't2') '.' attribute
//! op        := '=' | '!=' | '>=' | '<=' | '<' | '>'
//! ```
//!
//! Operands compare numerically when both parse as decimal numbers and as
//! byte strings otherwise.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::candidates::Candidates;
use crate::dataset::{Assignment, FusionDataset};
use crate::error::{FusionError, Result};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("at byte {position}: {message}")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TupleVar {
    T1,
    T2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompareOp {
    Eq,
    Ne,
    Ge,
    Le,
    Lt,
    Gt,
}

impl CompareOp {
    fn symbol(self) -> &'static str {
        match self {
            CompareOp::Eq => "=",
            CompareOp::Ne => "!=",
            CompareOp::Ge => ">=",
            CompareOp::Le => "<=",
            CompareOp::Lt => "<",
            CompareOp::Gt => ">",
        }
    }

    fn holds(self, ord: Ordering) -> bool {
        match self {
            CompareOp::Eq => ord == Ordering::Equal,
            CompareOp::Ne => ord != Ordering::Equal,
            CompareOp::Ge => ord != Ordering::Less,
            CompareOp::Le => ord != Ordering::Greater,
            CompareOp::Lt => ord == Ordering::Less,
            CompareOp::Gt => ord == Ordering::Greater,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttrRef {
    pub var: TupleVar,
    pub attribute: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operand {
    Attr(AttrRef),
    Const(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Predicate {
    pub lhs: AttrRef,
    pub op: CompareOp,
    pub rhs: Operand,
}

/// A rule ¬(P₁ ∧ … ∧ Pₘ) over the tuple variables t1 and t2.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DenialConstraint {
    pub predicates: Vec<Predicate>,
}

impl DenialConstraint {
    fn refs(&self) -> impl Iterator<Item = &AttrRef> {
        self.predicates.iter().flat_map(|p| {
            std::iter::once(&p.lhs).chain(match &p.rhs {
                Operand::Attr(r) => Some(r),
                Operand::Const(_) => None,
            })
        })
    }

    /// Attributes the rule mentions, ascending and deduplicated.
    pub fn attributes(&self) -> Vec<usize> {
        let mut a: Vec<usize> = self.refs().map(|r| r.attribute).collect();
        a.sort_unstable();
        a.dedup();
        a
    }

    pub fn mentions(&self, attribute: usize) -> bool {
        self.refs().any(|r| r.attribute == attribute)
    }

    /// True when both tuple variables appear.
    pub fn is_binary(&self) -> bool {
        let mut t1 = false;
        let mut t2 = false;
        for r in self.refs() {
            match r.var {
                TupleVar::T1 => t1 = true,
                TupleVar::T2 => t2 = true,
            }
        }
        t1 && t2
    }
}

impl fmt::Display for TupleVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TupleVar::T1 => "t1",
            TupleVar::T2 => "t2",
        })
    }
}

impl fmt::Display for AttrRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.var, self.name)
    }
}

impl fmt::Display for DenialConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("!(")?;
        for (n, p) in self.predicates.iter().enumerate() {
            if n > 0 {
                f.write_str(" & ")?;
            }
            write!(f, "{} {} ", p.lhs, p.op.symbol())?;
            match &p.rhs {
                Operand::Attr(r) => write!(f, "{r}")?,
                Operand::Const(c) => {
                    f.write_str("'")?;
                    for ch in c.chars() {
                        if ch == '\'' || ch == '\\' {
                            f.write_str("\\")?;
                        }
                        write!(f, "{ch}")?;
                    }
                    f.write_str("'")?;
                }
            }
        }
        f.write_str(")")
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
    schema: &'a [String],
}

fn is_ident_char(c: char) -> bool {
    !(c.is_whitespace() || "=!<>&()'.".contains(c))
}

impl<'a> Parser<'a> {
    fn err<T>(&self, message: impl Into<String>) -> std::result::Result<T, ParseError> {
        Err(ParseError {
            position: self.pos,
            message: message.into(),
        })
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start();
        self.pos = self.src.len() - trimmed.len();
    }

    fn eat(&mut self, token: &str) -> bool {
        self.skip_ws();
        if self.rest().starts_with(token) {
            self.pos += token.len();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, token: &str) -> std::result::Result<(), ParseError> {
        if self.eat(token) {
            Ok(())
        } else {
            self.err(format!("expected `{token}`"))
        }
    }

    fn ident(&mut self) -> std::result::Result<(usize, &'a str), ParseError> {
        self.skip_ws();
        let start = self.pos;
        let len: usize = self
            .rest()
            .chars()
            .take_while(|&c| is_ident_char(c))
            .map(char::len_utf8)
            .sum();
        if len == 0 {
            return self.err("expected identifier");
        }
        self.pos += len;
        Ok((start, &self.src[start..self.pos]))
    }

    fn attr_ref(&mut self) -> std::result::Result<AttrRef, ParseError> {
        let (at, var) = self.ident()?;
        let var = match var {
            "t1" => TupleVar::T1,
            "t2" => TupleVar::T2,
            other => {
                return Err(ParseError {
                    position: at,
                    message: format!(
                        "unsupported tuple variable `{other}` (rules range over t1 and t2 only)"
                    ),
                })
            }
        };
        if !self.rest().starts_with('.') {
            return self.err("expected `.` after tuple variable");
        }
        self.pos += 1;
        let (at, name) = self.ident()?;
        let attribute = self
            .schema
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| ParseError {
                position: at,
                message: format!("unknown attribute `{name}`"),
            })?;
        Ok(AttrRef {
            var,
            attribute,
            name: name.to_string(),
        })
    }

    fn constant(&mut self) -> std::result::Result<String, ParseError> {
        self.expect("'")?;
        let mut out = String::new();
        let mut chars = self.rest().char_indices();
        while let Some((off, c)) = chars.next() {
            match c {
                '\'' => {
                    self.pos += off + 1;
                    return Ok(out);
                }
                '\\' => match chars.next() {
                    Some((_, e)) => out.push(e),
                    None => break,
                },
                c => out.push(c),
            }
        }
        self.pos = self.src.len();
        self.err("unterminated constant")
    }

    fn op(&mut self) -> std::result::Result<CompareOp, ParseError> {
        for (tok, op) in [
            ("!=", CompareOp::Ne),
            (">=", CompareOp::Ge),
            ("<=", CompareOp::Le),
            ("=", CompareOp::Eq),
            ("<", CompareOp::Lt),
            (">", CompareOp::Gt),
        ] {
            if self.eat(tok) {
                return Ok(op);
            }
        }
        self.err("expected comparison operator")
    }

    fn predicate(&mut self) -> std::result::Result<Predicate, ParseError> {
        self.skip_ws();
        if self.rest().starts_with('\'') {
            return self.err("left operand must be an attribute reference");
        }
        let lhs = self.attr_ref()?;
        let op = self.op()?;
        self.skip_ws();
        let rhs = if self.rest().starts_with('\'') {
            Operand::Const(self.constant()?)
        } else {
            Operand::Attr(self.attr_ref()?)
        };
        Ok(Predicate { lhs, op, rhs })
    }

    fn rule(&mut self) -> std::result::Result<DenialConstraint, ParseError> {
        self.expect("!")?;
        self.expect("(")?;
        let mut predicates = vec![self.predicate()?];
        while self.eat("&") {
            predicates.push(self.predicate()?);
        }
        self.expect(")")?;
        self.skip_ws();
        if !self.rest().is_empty() {
            return self.err("trailing input after rule");
        }
        Ok(DenialConstraint { predicates })
    }
}

pub fn parse_dc(text: &str, schema: &[String]) -> std::result::Result<DenialConstraint, ParseError> {
    Parser {
        src: text,
        pos: 0,
        schema,
    }
    .rule()
}

/// Parses a constraints file: one rule per line, `#` comments, blank lines ignored.
pub fn parse_constraints(text: &str, schema: &[String]) -> Result<Vec<DenialConstraint>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_dc(line, schema).map_err(|source| FusionError::Constraint {
            rule: n + 1,
            source,
        })?);
    }
    Ok(out)
}

/// Σ_j: constraint indices per attribute.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintIndex {
    by_attribute: Vec<Vec<usize>>,
}

impl ConstraintIndex {
    pub fn build(constraints: &[DenialConstraint], n_attributes: usize) -> Self {
        let mut by_attribute = vec![Vec::new(); n_attributes];
        for (n, dc) in constraints.iter().enumerate() {
            for a in dc.attributes() {
                by_attribute[a].push(n);
            }
        }
        Self { by_attribute }
    }

    pub fn for_attribute(&self, attribute: usize) -> &[usize] {
        &self.by_attribute[attribute]
    }
}

/// Which values partner rows contribute when counting violations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PartnerValues {
    Raw,
    #[default]
    Working,
}

/// Strict decimal: optional sign, digits, optional fraction.
pub fn parse_decimal(s: &str) -> Option<f64> {
    let body = s.strip_prefix(['+', '-']).unwrap_or(s);
    let (int, frac) = match body.split_once('.') {
        Some((i, f)) => (i, Some(f)),
        None => (body, None),
    };
    let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
    let ok = match frac {
        None => digits(int),
        Some(f) => digits(f) && (int.is_empty() || digits(int)),
    };
    if ok {
        s.parse().ok()
    } else {
        None
    }
}

#[derive(Clone, Copy)]
struct Val<'a> {
    text: &'a str,
    num: Option<f64>,
}

fn compare(a: Val<'_>, b: Val<'_>, op: CompareOp) -> bool {
    let ord = match (a.num, b.num) {
        (Some(x), Some(y)) => x.partial_cmp(&y).unwrap_or(Ordering::Equal),
        _ => a.text.as_bytes().cmp(b.text.as_bytes()),
    };
    op.holds(ord)
}

/// Values seen for partner rows: raw cells, or each row's cluster working assignment.
pub struct RowView<'a> {
    ds: &'a FusionDataset,
    working: Option<(&'a Candidates, &'a Assignment)>,
    numeric: Vec<Vec<Option<f64>>>,
}

impl<'a> RowView<'a> {
    pub fn raw(ds: &'a FusionDataset) -> Self {
        Self {
            ds,
            working: None,
            numeric: numeric_cache(ds),
        }
    }

    pub fn working(ds: &'a FusionDataset, candidates: &'a Candidates, working: &'a Assignment) -> Self {
        Self {
            ds,
            working: Some((candidates, working)),
            numeric: numeric_cache(ds),
        }
    }

    pub fn new(
        ds: &'a FusionDataset,
        candidates: &'a Candidates,
        working: &'a Assignment,
        mode: PartnerValues,
    ) -> Self {
        match mode {
            PartnerValues::Raw => Self::raw(ds),
            PartnerValues::Working => Self::working(ds, candidates, working),
        }
    }

    fn code(&self, row: usize, attribute: usize) -> u32 {
        match self.working {
            None => self.ds.code(row, attribute),
            Some((cands, assign)) => {
                let k = self.ds.cluster_of(row);
                cands.get(k, attribute).codes[assign.get(k, attribute)]
            }
        }
    }

    fn partner(&self, row: usize, attribute: usize) -> Val<'_> {
        let code = self.code(row, attribute) as usize;
        Val {
            text: &self.ds.dictionary(attribute)[code],
            num: self.numeric[attribute][code],
        }
    }

    fn own(&self, row: usize, attribute: usize) -> Val<'_> {
        let code = self.ds.code(row, attribute) as usize;
        Val {
            text: &self.ds.dictionary(attribute)[code],
            num: self.numeric[attribute][code],
        }
    }
}

fn numeric_cache(ds: &FusionDataset) -> Vec<Vec<Option<f64>>> {
    (0..ds.n_attributes())
        .map(|j| ds.dictionary(j).iter().map(|v| parse_decimal(v)).collect())
        .collect()
}

/// Compiled form of a constraint with constants pre-parsed.
struct Compiled<'c> {
    dc: &'c DenialConstraint,
    consts: Vec<Option<f64>>,
}

impl<'c> Compiled<'c> {
    fn new(dc: &'c DenialConstraint) -> Self {
        let consts = dc
            .predicates
            .iter()
            .map(|p| match &p.rhs {
                Operand::Const(c) => parse_decimal(c),
                Operand::Attr(_) => None,
            })
            .collect();
        Self { dc, consts }
    }

    /// Evaluates the conjunction with t1 bound to `t1` and t2 to `t2`; `own_row`
    /// selects which binding reads raw cells (the hypothesized-correct row).
    fn holds(&self, view: &RowView<'_>, t1: usize, t2: usize, own_row: usize) -> bool {
        let get = |r: &AttrRef| {
            let row = match r.var {
                TupleVar::T1 => t1,
                TupleVar::T2 => t2,
            };
            if row == own_row {
                view.own(row, r.attribute)
            } else {
                view.partner(row, r.attribute)
            }
        };
        self.dc.predicates.iter().zip(&self.consts).all(|(p, &cnum)| {
            let lhs = get(&p.lhs);
            let rhs = match &p.rhs {
                Operand::Attr(r) => get(r),
                Operand::Const(c) => Val {
                    text: c,
                    num: cnum,
                },
            };
            compare(lhs, rhs, p.op)
        })
    }
}

/// Violations of `dc` involving row `i`, taking row `i` as correct.
///
/// Binary rules count partner rows `i' ≠ i` for which either binding order
/// satisfies every predicate. Single-tuple rules yield 1 when row `i` itself
/// satisfies the body and 0 otherwise.
pub fn count_violations(i: usize, dc: &DenialConstraint, view: &RowView<'_>) -> usize {
    let compiled = Compiled::new(dc);
    count_compiled(i, &compiled, view)
}

fn count_compiled(i: usize, compiled: &Compiled<'_>, view: &RowView<'_>) -> usize {
    if !compiled.dc.is_binary() {
        return usize::from(compiled.holds(view, i, i, i));
    }
    (0..view.ds.n_rows())
        .filter(|&other| {
            other != i
                && (compiled.holds(view, i, other, i) || compiled.holds(view, other, i, i))
        })
        .count()
}

/// Violation counts for every row against every constraint: `[row][constraint]`.
pub fn violation_table(constraints: &[DenialConstraint], view: &RowView<'_>) -> Vec<Vec<usize>> {
    let compiled: Vec<Compiled<'_>> = constraints.iter().map(Compiled::new).collect();
    (0..view.ds.n_rows())
        .map(|i| compiled.iter().map(|c| count_compiled(i, c, view)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{build_candidate_sets, weak_labels};
    use crate::dataset::GroundTruth;

    fn schema() -> Vec<String> {
        vec!["Zip".into(), "City".into(), "Age".into()]
    }

    #[test]
    fn parses_functional_dependency() {
        let dc = parse_dc("!(t1.Zip = t2.Zip & t1.City != t2.City)", &schema()).unwrap();
        assert_eq!(dc.predicates.len(), 2);
        assert_eq!(dc.predicates[0].op, CompareOp::Eq);
        assert_eq!(dc.predicates[1].op, CompareOp::Ne);
        assert!(dc.is_binary());
        assert_eq!(dc.attributes(), vec![0, 1]);
    }

    #[test]
    fn parses_constant_rule() {
        let dc = parse_dc("!(t1.Age < '0')", &schema()).unwrap();
        assert!(!dc.is_binary());
        assert_eq!(dc.predicates[0].rhs, Operand::Const("0".into()));
    }

    #[test]
    fn rejects_unknown_attribute() {
        let err = parse_dc("!(t1.Zip = t2.Zipp & t1.City != t2.City)", &schema()).unwrap_err();
        assert!(err.message.contains("Zipp"));
        assert_eq!(err.position, 14);
    }

    #[test]
    fn rejects_third_tuple_variable() {
        let err = parse_dc("!(t1.Zip = t3.Zip)", &schema()).unwrap_err();
        assert!(err.message.contains("t3"));
    }

    #[test]
    fn rejects_malformed_syntax() {
        for bad in [
            "(t1.Zip = t2.Zip)",
            "!(t1.Zip t2.Zip)",
            "!(t1.Zip = t2.Zip",
            "!(t1.Zip = 'x) ",
            "!('x' = t1.Zip)",
            "!(t1.Zip = t2.Zip) extra",
        ] {
            assert!(parse_dc(bad, &schema()).is_err(), "{bad}");
        }
    }

    #[test]
    fn constraints_file_skips_comments() {
        let text = "# rules\n\n!(t1.Zip = t2.Zip & t1.City != t2.City)\n  # more\n!(t1.Age < '0')\n";
        assert_eq!(parse_constraints(text, &schema()).unwrap().len(), 2);
        let err = parse_constraints("!(t1.Zip = t2.Nope)", &schema()).unwrap_err();
        assert!(matches!(err, FusionError::Constraint { rule: 1, .. }));
    }

    #[test]
    fn index_buckets_by_attribute() {
        let dcs = vec![
            parse_dc("!(t1.Zip = t2.Zip & t1.City != t2.City)", &schema()).unwrap(),
            parse_dc("!(t1.Age < '0')", &schema()).unwrap(),
        ];
        let idx = ConstraintIndex::build(&dcs, 3);
        assert_eq!(idx.for_attribute(0), &[0]);
        assert_eq!(idx.for_attribute(1), &[0]);
        assert_eq!(idx.for_attribute(2), &[1]);
    }

    #[test]
    fn decimals() {
        assert_eq!(parse_decimal("12"), Some(12.0));
        assert_eq!(parse_decimal("-1.5"), Some(-1.5));
        assert_eq!(parse_decimal(".5"), Some(0.5));
        for s in ["", "1e3", "inf", "NaN", "1.", "1.2.3", "+", "0x1"] {
            assert_eq!(parse_decimal(s), None, "{s}");
        }
    }

    fn zip_dataset(rows: &[(&str, &str, &str)]) -> FusionDataset {
        FusionDataset::new(
            schema(),
            rows.iter()
                .map(|(z, c, a)| vec![z.to_string(), c.to_string(), a.to_string()])
                .collect(),
            (0..rows.len()).map(|i| format!("r{i}")).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn shared_zip_counts_disagreeing_cities() {
        let ds = zip_dataset(&[("10001", "NYC", "1"), ("10001", "NYC", "1"), ("10001", "LA", "1")]);
        let dc = parse_dc("!(t1.Zip = t2.Zip & t1.City != t2.City)", ds.schema()).unwrap();
        let view = RowView::raw(&ds);
        assert_eq!(count_violations(2, &dc, &view), 2);
        assert_eq!(count_violations(0, &dc, &view), 1);
    }

    #[test]
    fn distinct_zips_never_violate() {
        let ds = zip_dataset(&[("1", "A", "1"), ("2", "B", "1"), ("3", "A", "1")]);
        let dc = parse_dc("!(t1.Zip = t2.Zip & t1.City != t2.City)", ds.schema()).unwrap();
        let view = RowView::raw(&ds);
        assert!((0..3).all(|i| count_violations(i, &dc, &view) == 0));
    }

    #[test]
    fn numeric_comparison_when_both_numeric() {
        let ds = zip_dataset(&[("1", "A", "-3"), ("2", "B", "10"), ("3", "C", "abc")]);
        let dc = parse_dc("!(t1.Age < '0')", ds.schema()).unwrap();
        let view = RowView::raw(&ds);
        assert_eq!(count_violations(0, &dc, &view), 1);
        assert_eq!(count_violations(1, &dc, &view), 0);
        // "abc" vs "0": byte order, 'a' > '0'
        assert_eq!(count_violations(2, &dc, &view), 0);
        let dc = parse_dc("!(t1.Age > t2.Age)", ds.schema()).unwrap();
        // numeric: 10 > -3 holds for rows (1,0); "abc" compared by bytes with the others
        assert_eq!(count_violations(1, &dc, &view), 2);
    }

    #[test]
    fn partners_use_working_assignment() {
        // Cluster "c" has a 2-1 split on City; its majority is "NYC".
        let ds = FusionDataset::new(
            schema(),
            vec![
                vec!["10001".into(), "NYC".into(), "1".into()],
                vec!["10001".into(), "NYC".into(), "1".into()],
                vec!["10001".into(), "LA".into(), "1".into()],
                vec!["10001".into(), "LA".into(), "1".into()],
            ],
            vec!["c".into(), "c".into(), "c".into(), "d".into()],
            None,
        )
        .unwrap();
        let cands = build_candidate_sets(&ds);
        let working = weak_labels(&cands, &GroundTruth::new()).unwrap();
        let dc = parse_dc("!(t1.Zip = t2.Zip & t1.City != t2.City)", ds.schema()).unwrap();
        let view = RowView::working(&ds, &cands, &working);
        // Row 2 says LA; partners 0 and 1 read NYC (cluster c majority), row 3 reads LA.
        assert_eq!(count_violations(2, &dc, &view), 2);
        assert_eq!(count_violations(3, &dc, &view), 3);
        let raw = RowView::raw(&ds);
        assert_eq!(count_violations(3, &dc, &raw), 2);
    }

    #[test]
    fn display_round_trips() {
        let dc = parse_dc("!(t1.Zip=t2.Zip&t1.City != 'it\\'s')", &schema()).unwrap();
        let text = dc.to_string();
        assert_eq!(text, "!(t1.Zip = t2.Zip & t1.City != 'it\\'s')");
        assert_eq!(parse_dc(&text, &schema()).unwrap(), dc);
    }
}
