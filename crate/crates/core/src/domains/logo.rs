//! Turtle graphics.
//!
//! Heading 0 points along +x and `left` turns counterclockwise. The turtle
//! starts at the origin facing 0 with the pen down.

use super::{number_arg, str_arg, type_error, Domain, DomainResult, KindMismatch, Primitive, Registry, World};
use crate::proglang::{CallArgs, ExecError, Interpreter, Value};

/// Loop count for a half circle of `EPS_ANGLE` turns.
pub const HALF_INF: i64 = 180;
pub const EPS_ANGLE: f64 = 1.0;
pub const EPS_DIST: f64 = 0.05;
/// Stroke endpoints are rounded to this grid before comparison.
pub const STROKE_QUANTUM: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TurtleState {
    pub x: f64,
    pub y: f64,
    /// Degrees in [0, 360).
    pub heading: f64,
    pub pen_down: bool,
    pub segments: Vec<Segment>,
}

impl Default for TurtleState {
    fn default() -> Self {
        TurtleState { x: 0.0, y: 0.0, heading: 0.0, pen_down: true, segments: Vec::new() }
    }
}

pub fn normalize_heading(h: f64) -> f64 {
    let r = h.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// cos/sin of a heading in degrees, exact on multiples of 90.
fn direction(heading: f64) -> (f64, f64) {
    if heading % 90.0 == 0.0 {
        match (heading / 90.0) as i64 {
            0 => return (1.0, 0.0),
            1 => return (0.0, 1.0),
            2 => return (-1.0, 0.0),
            3 => return (0.0, -1.0),
            _ => {}
        }
    }
    let r = heading.to_radians();
    (r.cos(), r.sin())
}

impl TurtleState {
    pub fn forward(&mut self, dist: f64) {
        let (c, s) = direction(self.heading);
        let nx = self.x + dist * c;
        let ny = self.y + dist * s;
        if self.pen_down {
            self.segments.push(Segment { x1: self.x, y1: self.y, x2: nx, y2: ny });
        }
        self.x = nx;
        self.y = ny;
    }

    pub fn left(&mut self, theta: f64) {
        self.heading = normalize_heading(self.heading + theta);
    }

    pub fn teleport(&mut self, x: f64, y: f64, theta: f64) {
        self.x = x;
        self.y = y;
        self.heading = normalize_heading(theta);
    }

    pub fn pose(&self) -> (bool, f64, f64, f64) {
        (self.pen_down, self.x, self.y, self.heading)
    }

    pub fn set_pose(&mut self, pose: (bool, f64, f64, f64)) {
        (self.pen_down, self.x, self.y, self.heading) = pose;
    }
}

fn turtle<'a>(it: &'a mut Interpreter<'_>) -> &'a mut TurtleState {
    match &mut it.world {
        World::Logo(t) => t,
        _ => unreachable!("LOGO primitives only run against a LOGO world"),
    }
}

fn prim_forward(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let d = number_arg("forward", &args.positional_only("forward", 1)?[0])?;
    turtle(it).forward(d);
    Ok(Value::None)
}

fn prim_left(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = number_arg("left", &args.positional_only("left", 1)?[0])?;
    turtle(it).left(a);
    Ok(Value::None)
}

fn prim_right(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = number_arg("right", &args.positional_only("right", 1)?[0])?;
    turtle(it).left(-a);
    Ok(Value::None)
}

fn prim_penup(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    args.positional_only("penup", 0)?;
    turtle(it).pen_down = false;
    Ok(Value::None)
}

fn prim_pendown(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    args.positional_only("pendown", 0)?;
    turtle(it).pen_down = true;
    Ok(Value::None)
}

fn prim_teleport(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = args.positional_only("teleport", 3)?;
    let x = number_arg("teleport", &a[0])?;
    let y = number_arg("teleport", &a[1])?;
    let theta = number_arg("teleport", &a[2])?;
    turtle(it).teleport(x, y, theta);
    Ok(Value::None)
}

fn prim_heading(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    args.positional_only("heading", 0)?;
    Ok(Value::Float(turtle(it).heading))
}

fn prim_isdown(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    args.positional_only("isdown", 0)?;
    Ok(Value::Bool(turtle(it).pen_down))
}

/// Runs a nested program, keeps what it drew, then puts the turtle back.
fn prim_embed(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = args.positional_only("embed", 2)?;
    let program = str_arg("embed", &a[0])?.to_string();
    let bindings = match &a[1] {
        Value::Dict(pairs) => pairs
            .iter()
            .map(|(k, v)| match k {
                Value::Str(k) => Ok((k.clone(), v.clone())),
                other => Err(type_error("embed", "a dict with string keys", other)),
            })
            .collect::<Result<Vec<_>, _>>()?,
        other => return Err(type_error("embed", "a dict of variables", other)),
    };
    let saved = turtle(it).pose();
    let result = it.eval_embedded(&program, bindings);
    turtle(it).set_pose(saved);
    result.map(|_| Value::None)
}

pub fn logo_registry() -> Registry {
    assert_eq!(HALF_INF as f64 * EPS_ANGLE, 180.0, "HALF_INF turns of EPS_ANGLE must make a half circle");
    let p = |name, signature, doc, func| Primitive { name, signature, doc, func };
    Registry::new(
        Domain::Logo,
        vec![
            p("forward", "forward(x)", "move forward x pixels", prim_forward as _),
            p("left", "left(theta)", "rotate left by theta degrees", prim_left as _),
            p("right", "right(theta)", "rotate right by theta degrees", prim_right as _),
            p("penup", "penup()", "stop drawing", prim_penup as _),
            p("pendown", "pendown()", "start drawing", prim_pendown as _),
            p(
                "teleport",
                "teleport(x, y, theta)",
                "move to position (x, y) with angle theta",
                prim_teleport as _,
            ),
            p("heading", "heading()", "get the current angle of the turtle", prim_heading as _),
            p("isdown", "isdown()", "check if the pen is down", prim_isdown as _),
            p(
                "embed",
                "embed(program, local_vars)",
                "runs the code in program using the current context and teleports back to the original position. Allows you to nest programs. Implementationally, embed gets the turtle state (is_down, x, y, heading), executes program, then returns to the original state.",
                prim_embed as _,
            ),
        ],
        vec![
            ("HALF_INF", Value::Int(HALF_INF)),
            ("EPS_ANGLE", Value::Float(EPS_ANGLE)),
            ("EPS_DIST", Value::Float(EPS_DIST)),
        ],
        None,
    )
}

fn quantize(v: f64) -> i64 {
    let q = (v / STROKE_QUANTUM).round();
    // avoid distinguishing -0 from 0
    if q == 0.0 {
        0
    } else {
        q as i64
    }
}

pub fn strokes_result(t: &TurtleState) -> DomainResult {
    let mut segments: Vec<[i64; 4]> = t
        .segments
        .iter()
        .map(|s| {
            let a = (quantize(s.x1), quantize(s.y1));
            let b = (quantize(s.x2), quantize(s.y2));
            let (p, q) = if a <= b { (a, b) } else { (b, a) };
            [p.0, p.1, q.0, q.1]
        })
        .collect();
    segments.sort_unstable();
    DomainResult::Strokes { segments }
}

/// Multiset equality of quantized segments; drawing order and direction are ignored.
pub fn compare_strokes(a: &DomainResult, b: &DomainResult) -> Result<bool, KindMismatch> {
    match (a, b) {
        (DomainResult::Strokes { segments: x }, DomainResult::Strokes { segments: y }) => Ok(x == y),
        _ => Err(KindMismatch { left: a.kind(), right: b.kind() }),
    }
}
