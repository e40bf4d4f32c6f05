//! Runtime values and the operators over them.
//!
//! Values are plain owned data. Assigning a list to a second name copies it,
//! so aliasing never leaks state between scopes.

use std::cmp::Ordering;
use std::fmt::Write as _;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::ast::{BinOp, CmpOp};
use crate::domains::date::shift_date;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RelDelta {
    pub years: i64,
    pub months: i64,
    pub days: i64,
}

impl RelDelta {
    pub fn negate(self) -> RelDelta {
        RelDelta { years: -self.years, months: -self.months, days: -self.days }
    }

    pub fn is_zero(&self) -> bool {
        self.years == 0 && self.months == 0 && self.days == 0
    }

    fn combine(self, other: RelDelta, sign: i64) -> Option<RelDelta> {
        Some(RelDelta {
            years: self.years.checked_add(other.years.checked_mul(sign)?)?,
            months: self.months.checked_add(other.months.checked_mul(sign)?)?,
            days: self.days.checked_add(other.days.checked_mul(sign)?)?,
        })
    }

    fn scale(self, k: i64) -> Option<RelDelta> {
        Some(RelDelta {
            years: self.years.checked_mul(k)?,
            months: self.months.checked_mul(k)?,
            days: self.days.checked_mul(k)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    None,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    List(Vec<Value>),
    /// Insertion-ordered mapping.
    Dict(Vec<(Value, Value)>),
    Range { start: i64, stop: i64, step: i64 },
    Date(NaiveDate),
    Delta(RelDelta),
}

type OpResult = Result<Value, String>;

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::None => "NoneType",
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "str",
            Value::List(_) => "list",
            Value::Dict(_) => "dict",
            Value::Range { .. } => "range",
            Value::Date(_) => "date",
            Value::Delta(_) => "relativedelta",
        }
    }

    pub fn truthy(&self) -> bool {
        match self {
            Value::None => false,
            Value::Bool(b) => *b,
            Value::Int(i) => *i != 0,
            Value::Float(x) => *x != 0.0,
            Value::Str(s) => !s.is_empty(),
            Value::List(v) => !v.is_empty(),
            Value::Dict(d) => !d.is_empty(),
            Value::Range { .. } => self.range_len() > 0,
            Value::Date(_) => true,
            Value::Delta(d) => !d.is_zero(),
        }
    }

    /// `str(v)` as the host language would print it.
    pub fn to_display(&self) -> String {
        match self {
            Value::Str(s) => s.clone(),
            other => other.repr(),
        }
    }

    pub fn repr(&self) -> String {
        let mut out = String::new();
        self.write_repr(&mut out);
        out
    }

    fn write_repr(&self, out: &mut String) {
        match self {
            Value::None => out.push_str("None"),
            Value::Bool(true) => out.push_str("True"),
            Value::Bool(false) => out.push_str("False"),
            Value::Int(i) => {
                let _ = write!(out, "{i}");
            }
            Value::Float(x) => out.push_str(&format_float(*x)),
            Value::Str(s) => out.push_str(&quote_str(s)),
            Value::List(items) => {
                out.push('[');
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    v.write_repr(out);
                }
                out.push(']');
            }
            Value::Dict(pairs) => {
                out.push('{');
                for (i, (k, v)) in pairs.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    k.write_repr(out);
                    out.push_str(": ");
                    v.write_repr(out);
                }
                out.push('}');
            }
            Value::Range { start, stop, step } => {
                if *step == 1 {
                    let _ = write!(out, "range({start}, {stop})");
                } else {
                    let _ = write!(out, "range({start}, {stop}, {step})");
                }
            }
            Value::Date(d) => {
                let _ = write!(out, "{}", d.format("%Y-%m-%d"));
            }
            Value::Delta(d) => {
                let parts: Vec<String> = [("years", d.years), ("months", d.months), ("days", d.days)]
                    .iter()
                    .filter(|(_, n)| *n != 0)
                    .map(|(k, n)| format!("{k}={n:+}"))
                    .collect();
                let _ = write!(out, "relativedelta({})", parts.join(", "));
            }
        }
    }

    pub fn range_len(&self) -> i64 {
        match self {
            Value::Range { start, stop, step } => range_len(*start, *stop, *step),
            _ => 0,
        }
    }

    fn as_number(&self) -> Option<Num> {
        match self {
            Value::Bool(b) => Some(Num::I(*b as i64)),
            Value::Int(i) => Some(Num::I(*i)),
            Value::Float(x) => Some(Num::F(*x)),
            _ => None,
        }
    }

    pub fn as_f64(&self) -> Option<f64> {
        self.as_number().map(|n| n.to_f64())
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            Value::Bool(b) => Some(*b as i64),
            Value::Int(i) => Some(*i),
            _ => None,
        }
    }

    /// Materialize an iterable into its items. Dicts yield keys, strings yield characters.
    pub fn iter_items(&self) -> Result<Vec<Value>, String> {
        match self {
            Value::List(v) => Ok(v.clone()),
            Value::Dict(d) => Ok(d.iter().map(|(k, _)| k.clone()).collect()),
            Value::Str(s) => Ok(s.chars().map(|c| Value::Str(c.to_string())).collect()),
            Value::Range { start, stop, step } => {
                let n = range_len(*start, *stop, *step);
                Ok((0..n).map(|i| Value::Int(start + i * step)).collect())
            }
            other => Err(format!("'{}' object is not iterable", other.type_name())),
        }
    }

    pub fn len(&self) -> Result<i64, String> {
        match self {
            Value::List(v) => Ok(v.len() as i64),
            Value::Dict(d) => Ok(d.len() as i64),
            Value::Str(s) => Ok(s.chars().count() as i64),
            Value::Range { .. } => Ok(self.range_len()),
            other => Err(format!("object of type '{}' has no len()", other.type_name())),
        }
    }

    pub fn dict_get(&self, key: &Value) -> Option<&Value> {
        match self {
            Value::Dict(pairs) => pairs.iter().find(|(k, _)| py_eq(k, key)).map(|(_, v)| v),
            _ => None,
        }
    }

    pub fn index(&self, idx: &Value) -> OpResult {
        match self {
            Value::List(items) => {
                let i = seq_index(idx, items.len())?;
                Ok(items[i].clone())
            }
            Value::Str(s) => {
                let chars: Vec<char> = s.chars().collect();
                let i = seq_index(idx, chars.len())?;
                Ok(Value::Str(chars[i].to_string()))
            }
            Value::Range { start, step, .. } => {
                let n = self.range_len();
                let i = seq_index(idx, n as usize)?;
                Ok(Value::Int(start + i as i64 * step))
            }
            Value::Dict(_) => {
                check_hashable(idx)?;
                self.dict_get(idx).cloned().ok_or_else(|| format!("KeyError: {}", idx.repr()))
            }
            other => Err(format!("'{}' object is not subscriptable", other.type_name())),
        }
    }

    pub fn set_index(&mut self, idx: Value, v: Value) -> Result<(), String> {
        match self {
            Value::List(items) => {
                let i = seq_index(&idx, items.len())?;
                items[i] = v;
                Ok(())
            }
            Value::Dict(pairs) => {
                check_hashable(&idx)?;
                if let Some(slot) = pairs.iter_mut().find(|(k, _)| py_eq(k, &idx)) {
                    slot.1 = v;
                } else {
                    pairs.push((idx, v));
                }
                Ok(())
            }
            other => Err(format!(
                "'{}' object does not support item assignment",
                other.type_name()
            )),
        }
    }
}

fn check_hashable(v: &Value) -> Result<(), String> {
    match v {
        Value::List(_) | Value::Dict(_) => Err(format!("unhashable type: '{}'", v.type_name())),
        _ => Ok(()),
    }
}

pub fn range_len(start: i64, stop: i64, step: i64) -> i64 {
    let (start, stop, step) = (start as i128, stop as i128, step as i128);
    let n = if step > 0 && start < stop {
        (stop - start + step - 1) / step
    } else if step < 0 && start > stop {
        (start - stop - step - 1) / (-step)
    } else {
        0
    };
    n as i64
}

fn seq_index(idx: &Value, len: usize) -> Result<usize, String> {
    let Some(i) = idx.as_int() else {
        return Err(format!("indices must be integers, not {}", idx.type_name()));
    };
    let len = len as i64;
    let j = if i < 0 { i + len } else { i };
    if j < 0 || j >= len {
        return Err("index out of range".into());
    }
    Ok(j as usize)
}

#[derive(Clone, Copy)]
enum Num {
    I(i64),
    F(f64),
}

impl Num {
    fn to_f64(self) -> f64 {
        match self {
            Num::I(i) => i as f64,
            Num::F(x) => x,
        }
    }
}

fn overflow() -> String {
    "integer overflow".into()
}

fn unsupported(op: &str, a: &Value, b: &Value) -> String {
    format!(
        "unsupported operand type(s) for {op}: '{}' and '{}'",
        a.type_name(),
        b.type_name()
    )
}

pub fn binary_op(op: BinOp, a: &Value, b: &Value) -> OpResult {
    if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
        return numeric_op(op, x, y);
    }
    let sym = op.symbol();
    match (op, a, b) {
        (BinOp::Add, Value::Str(x), Value::Str(y)) => Ok(Value::Str(format!("{x}{y}"))),
        (BinOp::Add, Value::List(x), Value::List(y)) => {
            let mut v = x.clone();
            v.extend(y.iter().cloned());
            Ok(Value::List(v))
        }
        (BinOp::Mul, Value::Str(s), n) | (BinOp::Mul, n, Value::Str(s)) if n.as_int().is_some() => {
            let k = n.as_int().unwrap_or(0).max(0) as usize;
            if s.len().saturating_mul(k) > 10_000_000 {
                return Err("string repetition too large".into());
            }
            Ok(Value::Str(s.repeat(k)))
        }
        (BinOp::Mul, Value::List(items), n) | (BinOp::Mul, n, Value::List(items))
            if n.as_int().is_some() =>
        {
            let k = n.as_int().unwrap_or(0).max(0) as usize;
            if items.len().saturating_mul(k) > 1_000_000 {
                return Err("list repetition too large".into());
            }
            let mut out = Vec::with_capacity(items.len() * k);
            for _ in 0..k {
                out.extend(items.iter().cloned());
            }
            Ok(Value::List(out))
        }
        (BinOp::Add, Value::Date(d), Value::Delta(r)) | (BinOp::Add, Value::Delta(r), Value::Date(d)) => {
            shift_date(*d, *r).map(Value::Date).ok_or_else(|| "date value out of range".into())
        }
        (BinOp::Sub, Value::Date(d), Value::Delta(r)) => shift_date(*d, r.negate())
            .map(Value::Date)
            .ok_or_else(|| "date value out of range".into()),
        (BinOp::Sub, Value::Date(x), Value::Date(y)) => {
            Ok(Value::Delta(RelDelta { days: (*x - *y).num_days(), ..RelDelta::default() }))
        }
        (BinOp::Add, Value::Delta(x), Value::Delta(y)) => {
            x.combine(*y, 1).map(Value::Delta).ok_or_else(overflow)
        }
        (BinOp::Sub, Value::Delta(x), Value::Delta(y)) => {
            x.combine(*y, -1).map(Value::Delta).ok_or_else(overflow)
        }
        (BinOp::Mul, Value::Delta(r), n) | (BinOp::Mul, n, Value::Delta(r)) if n.as_int().is_some() => {
            r.scale(n.as_int().unwrap_or(0)).map(Value::Delta).ok_or_else(overflow)
        }
        _ => Err(unsupported(sym, a, b)),
    }
}

fn numeric_op(op: BinOp, x: Num, y: Num) -> OpResult {
    match (x, y) {
        (Num::I(a), Num::I(b)) => int_op(op, a, b),
        _ => float_op(op, x.to_f64(), y.to_f64()),
    }
}

fn int_op(op: BinOp, a: i64, b: i64) -> OpResult {
    let v = match op {
        BinOp::Add => a.checked_add(b).ok_or_else(overflow)?,
        BinOp::Sub => a.checked_sub(b).ok_or_else(overflow)?,
        BinOp::Mul => a.checked_mul(b).ok_or_else(overflow)?,
        BinOp::Div => {
            if b == 0 {
                return Err("division by zero".into());
            }
            return Ok(Value::Float(a as f64 / b as f64));
        }
        BinOp::FloorDiv => {
            if b == 0 {
                return Err("integer division or modulo by zero".into());
            }
            let q = a.checked_div(b).ok_or_else(overflow)?;
            if (a % b != 0) && ((a < 0) != (b < 0)) {
                q - 1
            } else {
                q
            }
        }
        BinOp::Mod => {
            if b == 0 {
                return Err("integer division or modulo by zero".into());
            }
            let r = a.checked_rem(b).ok_or_else(overflow)?;
            if r != 0 && ((r < 0) != (b < 0)) {
                r + b
            } else {
                r
            }
        }
        BinOp::Pow => {
            if b < 0 {
                if a == 0 {
                    return Err("0.0 cannot be raised to a negative power".into());
                }
                return Ok(Value::Float((a as f64).powf(b as f64)));
            }
            let e = u32::try_from(b).map_err(|_| overflow())?;
            a.checked_pow(e).ok_or_else(overflow)?
        }
    };
    Ok(Value::Int(v))
}

fn float_op(op: BinOp, a: f64, b: f64) -> OpResult {
    let v = match op {
        BinOp::Add => a + b,
        BinOp::Sub => a - b,
        BinOp::Mul => a * b,
        BinOp::Div => {
            if b == 0.0 {
                return Err("float division by zero".into());
            }
            a / b
        }
        BinOp::FloorDiv => {
            if b == 0.0 {
                return Err("float floor division by zero".into());
            }
            (a / b).floor()
        }
        BinOp::Mod => {
            if b == 0.0 {
                return Err("float modulo".into());
            }
            let r = a % b;
            if r != 0.0 && ((r < 0.0) != (b < 0.0)) {
                r + b
            } else {
                r
            }
        }
        BinOp::Pow => {
            if a == 0.0 && b < 0.0 {
                return Err("0.0 cannot be raised to a negative power".into());
            }
            let v = a.powf(b);
            if v.is_nan() && !a.is_nan() && !b.is_nan() {
                return Err("math domain error".into());
            }
            v
        }
    };
    Ok(Value::Float(v))
}

pub fn negate(v: &Value) -> OpResult {
    match v {
        Value::Bool(b) => Ok(Value::Int(-(*b as i64))),
        Value::Int(i) => i.checked_neg().map(Value::Int).ok_or_else(overflow),
        Value::Float(x) => Ok(Value::Float(-x)),
        Value::Delta(d) => Ok(Value::Delta(d.negate())),
        other => Err(format!("bad operand type for unary -: '{}'", other.type_name())),
    }
}

/// Host-language `==`: numbers compare across int/float/bool, containers element-wise.
pub fn py_eq(a: &Value, b: &Value) -> bool {
    if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
        return match (x, y) {
            (Num::I(p), Num::I(q)) => p == q,
            _ => x.to_f64() == y.to_f64(),
        };
    }
    match (a, b) {
        (Value::None, Value::None) => true,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::List(x), Value::List(y)) => {
            x.len() == y.len() && x.iter().zip(y).all(|(p, q)| py_eq(p, q))
        }
        (Value::Dict(x), Value::Dict(y)) => {
            x.len() == y.len()
                && x.iter().all(|(k, v)| b.dict_get(k).is_some_and(|w| py_eq(v, w)))
        }
        (Value::Range { .. }, Value::Range { .. }) => {
            let (n, m) = (a.range_len(), b.range_len());
            n == m && (n == 0 || a.iter_items().ok() == b.iter_items().ok())
        }
        (Value::Date(x), Value::Date(y)) => x == y,
        (Value::Delta(x), Value::Delta(y)) => x == y,
        _ => false,
    }
}

pub fn py_cmp(a: &Value, b: &Value) -> Result<Ordering, String> {
    if let (Some(x), Some(y)) = (a.as_number(), b.as_number()) {
        return match (x, y) {
            (Num::I(p), Num::I(q)) => Ok(p.cmp(&q)),
            _ => x
                .to_f64()
                .partial_cmp(&y.to_f64())
                .ok_or_else(|| "comparison with nan".to_string()),
        };
    }
    match (a, b) {
        (Value::Str(x), Value::Str(y)) => Ok(x.cmp(y)),
        (Value::Date(x), Value::Date(y)) => Ok(x.cmp(y)),
        (Value::List(x), Value::List(y)) => {
            for (p, q) in x.iter().zip(y) {
                if !py_eq(p, q) {
                    return py_cmp(p, q);
                }
            }
            Ok(x.len().cmp(&y.len()))
        }
        _ => Err(format!(
            "'<' not supported between instances of '{}' and '{}'",
            a.type_name(),
            b.type_name()
        )),
    }
}

pub fn contains(container: &Value, item: &Value) -> Result<bool, String> {
    match container {
        Value::List(items) => Ok(items.iter().any(|v| py_eq(v, item))),
        Value::Dict(_) => {
            check_hashable(item)?;
            Ok(container.dict_get(item).is_some())
        }
        Value::Str(s) => match item {
            Value::Str(sub) => Ok(s.contains(sub.as_str())),
            other => Err(format!(
                "'in <string>' requires string as left operand, not {}",
                other.type_name()
            )),
        },
        Value::Range { start, step, .. } => match item.as_int() {
            Some(i) => {
                let n = container.range_len();
                let off = i as i128 - *start as i128;
                let step = *step as i128;
                Ok(off % step == 0 && (0..n as i128).contains(&(off / step)))
            }
            None => Ok(false),
        },
        other => Err(format!("argument of type '{}' is not iterable", other.type_name())),
    }
}

pub fn compare(op: CmpOp, a: &Value, b: &Value) -> Result<bool, String> {
    Ok(match op {
        CmpOp::Eq => py_eq(a, b),
        CmpOp::NotEq => !py_eq(a, b),
        CmpOp::Lt => py_cmp(a, b)? == Ordering::Less,
        CmpOp::LtE => py_cmp(a, b)? != Ordering::Greater,
        CmpOp::Gt => py_cmp(a, b)? == Ordering::Greater,
        CmpOp::GtE => py_cmp(a, b)? != Ordering::Less,
        CmpOp::In => contains(b, a)?,
        CmpOp::NotIn => !contains(b, a)?,
    })
}

/// Shortest round-trip float rendering with the host language's layout rules:
/// fixed notation for exponents in [-4, 16), scientific otherwise, and a
/// trailing `.0` on integral values.
pub fn format_float(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return if x.is_sign_negative() { "-0.0".into() } else { "0.0".into() };
    }
    let sci = format!("{:e}", x.abs());
    let (mantissa, exp) = sci.split_once('e').expect("{:e} always has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(|c| *c != '.').collect();
    let sign = if x < 0.0 { "-" } else { "" };
    if (-4..16).contains(&exp) {
        let point = exp + 1;
        let body = if point <= 0 {
            format!("0.{}{}", "0".repeat((-point) as usize), digits)
        } else if point as usize >= digits.len() {
            format!("{}{}.0", digits, "0".repeat(point as usize - digits.len()))
        } else {
            let (int, frac) = digits.split_at(point as usize);
            format!("{int}.{frac}")
        };
        format!("{sign}{body}")
    } else {
        let mant = if digits.len() == 1 {
            digits.clone()
        } else {
            format!("{}.{}", &digits[..1], &digits[1..])
        };
        let esign = if exp < 0 { '-' } else { '+' };
        format!("{sign}{mant}e{esign}{:02}", exp.abs())
    }
}

fn quote_str(s: &str) -> String {
    let q = if s.contains('\'') && !s.contains('"') { '"' } else { '\'' };
    let mut out = String::new();
    out.push(q);
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c == q => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out.push(q);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn float_formatting_matches_host_repr() {
        let cases = [
            (72.0, "72.0"),
            (0.1, "0.1"),
            (1e-5, "1e-05"),
            (0.0001, "0.0001"),
            (1e16, "1e+16"),
            (123456789012345.6, "123456789012345.6"),
            (-2.5, "-2.5"),
            (1.5e300, "1.5e+300"),
            (40.0 / 9.0 * 9.0, "40.0"),
        ];
        for (x, want) in cases {
            assert_eq!(format_float(x), want, "{x}");
        }
    }

    #[test]
    fn floor_semantics() {
        assert_eq!(int_op(BinOp::FloorDiv, -7, 2), Ok(Value::Int(-4)));
        assert_eq!(int_op(BinOp::Mod, -7, 2), Ok(Value::Int(1)));
        assert_eq!(int_op(BinOp::Mod, 7, -2), Ok(Value::Int(-1)));
        assert_eq!(float_op(BinOp::Mod, -7.0, 2.0), Ok(Value::Float(1.0)));
    }

    #[test]
    fn overflow_is_an_error() {
        assert!(int_op(BinOp::Mul, i64::MAX, 2).is_err());
        assert!(int_op(BinOp::Pow, 10, 40).is_err());
    }

    #[test]
    fn cross_type_equality() {
        assert!(py_eq(&Value::Int(1), &Value::Float(1.0)));
        assert!(py_eq(&Value::Bool(true), &Value::Int(1)));
        assert!(!py_eq(&Value::Str("1".into()), &Value::Int(1)));
    }

    #[test]
    fn range_membership_and_len() {
        let r = Value::Range { start: 10, stop: 0, step: -3 };
        assert_eq!(r.len(), Ok(4));
        assert_eq!(contains(&r, &Value::Int(4)), Ok(true));
        assert_eq!(contains(&r, &Value::Int(5)), Ok(false));
        assert_eq!(r.iter_items().unwrap(), vec![Value::Int(10), Value::Int(7), Value::Int(4), Value::Int(1)]);
    }

    #[test]
    fn reprs() {
        let v = Value::List(vec![Value::Str("a'b".into()), Value::None, Value::Float(2.0)]);
        assert_eq!(v.repr(), "[\"a'b\", None, 2.0]");
        let d = Value::Dict(vec![(Value::Str("oak planks".into()), Value::Int(4))]);
        assert_eq!(d.to_display(), "{'oak planks': 4}");
    }
}
