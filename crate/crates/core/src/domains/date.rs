//! Calendar arithmetic on the proleptic Gregorian calendar.
//!
//! `relativedelta` applies years and months first, clamping the day to the
//! end of the resulting month, then adds days.

use chrono::{Datelike, Duration, NaiveDate};

use super::{str_arg, type_error, Domain, Primitive, Registry};
use crate::proglang::value::RelDelta;
use crate::proglang::{CallArgs, ExecError, Interpreter, Value};

pub fn days_in_month(year: i32, month: u32) -> u32 {
    let (ny, nm) = if month == 12 { (year + 1, 1) } else { (year, month + 1) };
    NaiveDate::from_ymd_opt(ny, nm, 1)
        .and_then(|d| d.pred_opt())
        .map(|d| d.day())
        .unwrap_or(31)
}

/// `d + delta` with month-end clamping. `None` when the result leaves chrono's range.
pub fn shift_date(d: NaiveDate, delta: RelDelta) -> Option<NaiveDate> {
    let months = delta.years.checked_mul(12)?.checked_add(delta.months)?;
    let total = (d.year() as i64).checked_mul(12)?.checked_add(d.month0() as i64)?.checked_add(months)?;
    let year = i32::try_from(total.div_euclid(12)).ok()?;
    let month = total.rem_euclid(12) as u32 + 1;
    let day = d.day().min(days_in_month(year, month));
    let shifted = NaiveDate::from_ymd_opt(year, month, day)?;
    shifted.checked_add_signed(Duration::try_days(delta.days)?)
}

fn int_of(name: &str, v: &Value) -> Result<i64, ExecError> {
    match v {
        Value::Int(i) => Ok(*i),
        Value::Float(x) if x.fract() == 0.0 && x.abs() < 1e15 => Ok(*x as i64),
        other => Err(type_error(name, "an integer", other)),
    }
}

fn prim_date(_: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let mut parts: [Option<i64>; 3] = [None; 3];
    if args.positional.len() > 3 {
        return Err(ExecError::runtime("date() takes at most 3 arguments"));
    }
    for (i, v) in args.positional.iter().enumerate() {
        parts[i] = Some(int_of("date", v)?);
    }
    for (k, v) in &args.keyword {
        let slot = match k.as_str() {
            "year" => 0,
            "month" => 1,
            "day" => 2,
            other => {
                return Err(ExecError::runtime(format!(
                    "date() got an unexpected keyword argument '{other}'"
                )))
            }
        };
        if parts[slot].is_some() {
            return Err(ExecError::runtime(format!("date() got multiple values for '{k}'")));
        }
        parts[slot] = Some(int_of("date", v)?);
    }
    let [Some(y), Some(m), Some(d)] = parts else {
        return Err(ExecError::runtime("date() needs year, month and day"));
    };
    let date = i32::try_from(y)
        .ok()
        .zip(u32::try_from(m).ok())
        .zip(u32::try_from(d).ok())
        .and_then(|((y, m), d)| NaiveDate::from_ymd_opt(y, m, d))
        .ok_or_else(|| ExecError::runtime(format!("invalid date {y}-{m}-{d}")))?;
    Ok(Value::Date(date))
}

fn prim_relativedelta(_: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    if !args.positional.is_empty() {
        return Err(ExecError::runtime(
            "relativedelta() takes keyword arguments only (days, weeks, months, years)",
        ));
    }
    let mut delta = RelDelta::default();
    let overflow = || ExecError::runtime("relativedelta() value too large");
    for (k, v) in &args.keyword {
        let n = int_of("relativedelta", v)?;
        match k.as_str() {
            "days" => delta.days = delta.days.checked_add(n).ok_or_else(overflow)?,
            "weeks" => {
                delta.days = n.checked_mul(7).and_then(|w| delta.days.checked_add(w)).ok_or_else(overflow)?
            }
            "months" => delta.months = n,
            "years" => delta.years = n,
            other => {
                return Err(ExecError::runtime(format!(
                    "relativedelta() got an unexpected keyword argument '{other}'"
                )))
            }
        }
    }
    Ok(Value::Delta(delta))
}

/// Format with `%m %d %Y %A %%`; any other directive is an error.
pub fn strftime(d: NaiveDate, fmt: &str) -> Result<String, String> {
    let mut out = String::new();
    let mut chars = fmt.chars();
    while let Some(c) = chars.next() {
        if c != '%' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('m') => out.push_str(&format!("{:02}", d.month())),
            Some('d') => out.push_str(&format!("{:02}", d.day())),
            Some('Y') => out.push_str(&format!("{:04}", d.year())),
            Some('A') => out.push_str(&d.format("%A").to_string()),
            Some('%') => out.push('%'),
            Some(other) => return Err(format!("unsupported format directive '%{other}'")),
            None => return Err("format string ends with a bare '%'".into()),
        }
    }
    Ok(out)
}

fn prim_strftime(_: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = args.positional_only("strftime", 2)?;
    let Value::Date(d) = &a[0] else {
        return Err(type_error("strftime", "a date", &a[0]));
    };
    let fmt = str_arg("strftime", &a[1])?;
    strftime(*d, fmt).map(Value::Str).map_err(ExecError::runtime)
}

pub fn date_registry() -> Registry {
    let p = |name, signature, doc, func| Primitive { name, signature, doc, func };
    Registry::new(
        Domain::Date,
        vec![
            p("date", "date(year, month, day)", "returns a date object", prim_date as _),
            p(
                "relativedelta",
                "relativedelta(days=0, weeks=0, months=0, years=0)",
                "a span of time; add it to or subtract it from a date. Months and years clamp to the last valid day",
                prim_relativedelta as _,
            ),
            p(
                "strftime",
                "strftime(date, format)",
                "prints the date in the specified format (%m, %d, %Y, %A)",
                prim_strftime as _,
            ),
        ],
        vec![],
        None,
    )
}
