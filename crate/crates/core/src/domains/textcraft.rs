//! Text crafting game: fetch raw items, craft others from recipes.
//!
//! Item names are matched loosely: case and a trailing plural `s` on the
//! last word are ignored, and a recipe ingredient like `planks` accepts any
//! item whose name ends in ` planks` (`oak planks`). Failed gets and crafts
//! are recorded in the trace and execution carries on.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{str_arg, type_error, Domain, DomainResult, Primitive, Registry, World};
use crate::proglang::{CallArgs, ExecError, Interpreter, Value};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Recipe {
    pub output: String,
    pub count: i64,
    pub ingredients: Vec<(String, i64)>,
}

/// On-disk task: a goal and recipe sentences, plus items the world does not supply.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CraftTask {
    pub goal: String,
    pub commands: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub unavailable: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CraftEnv {
    pub goal: String,
    pub recipes: Vec<Recipe>,
    pub unavailable: BTreeSet<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct CraftState {
    pub inventory: BTreeMap<String, i64>,
    pub trace: Vec<String>,
}

/// Lowercased, whitespace-collapsed, without a `minecraft:` prefix.
pub fn normalize(name: &str) -> String {
    let lower = name.trim().to_lowercase();
    let lower = lower.strip_prefix("minecraft:").unwrap_or(&lower).to_string();
    lower.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Comparison key: normalized with the last word singularized.
fn key(name: &str) -> String {
    let n = normalize(name);
    match n.rsplit_once(' ') {
        Some((head, last)) => format!("{head} {}", singular(last)),
        None => singular(&n).to_string(),
    }
}

fn singular(word: &str) -> &str {
    if word.len() > 3 && word.ends_with('s') && !word.ends_with("ss") {
        &word[..word.len() - 1]
    } else {
        word
    }
}

/// Does `item` satisfy a recipe slot named `wanted`?
fn satisfies(item: &str, wanted: &str) -> bool {
    let (i, w) = (key(item), key(wanted));
    i == w || i.ends_with(&format!(" {w}"))
}

/// Split an optional leading count: `"6 oak planks"` -> `(Some(6), "oak planks")`.
fn split_count(s: &str) -> (Option<i64>, String) {
    let t = s.trim();
    if let Some((first, rest)) = t.split_once(' ') {
        if let Ok(n) = first.parse::<i64>() {
            return (Some(n), rest.trim().to_string());
        }
    }
    (None, t.to_string())
}

/// Parse `craft <n> <item> using <n> <item>[, <n> <item>][ and <n> <item>]`.
pub fn parse_recipe(line: &str) -> Result<Recipe, String> {
    let bad = || format!("cannot parse recipe '{line}'");
    let body = line.trim().strip_prefix("craft ").ok_or_else(bad)?;
    let (out, ings) = body.split_once(" using ").ok_or_else(bad)?;
    let (count, output) = split_count(out);
    let count = count.ok_or_else(bad)?;
    let mut ingredients = Vec::new();
    for part in ings.split(", ").flat_map(|p| p.split(" and ")) {
        let part = part.trim().trim_start_matches("and ").trim();
        if part.is_empty() {
            continue;
        }
        let (n, name) = split_count(part);
        ingredients.push((normalize(&name), n.ok_or_else(bad)?));
    }
    if ingredients.is_empty() || count < 1 || ingredients.iter().any(|(_, n)| *n < 1) {
        return Err(bad());
    }
    Ok(Recipe { output: normalize(&output), count, ingredients })
}

impl CraftEnv {
    pub fn from_task(task: &CraftTask) -> Result<CraftEnv, String> {
        let recipes = task.commands.iter().map(|c| parse_recipe(c)).collect::<Result<Vec<_>, _>>()?;
        Ok(CraftEnv {
            goal: normalize(&task.goal),
            recipes,
            unavailable: task.unavailable.iter().map(|s| key(s)).collect(),
        })
    }

    pub fn recipe_for(&self, target: &str) -> Option<&Recipe> {
        let k = key(target);
        self.recipes.iter().find(|r| key(&r.output) == k)
    }

    /// Raw items can be fetched; craftable items and group names cannot.
    pub fn is_raw(&self, name: &str) -> bool {
        let k = key(name);
        !self.recipes.iter().any(|r| {
            let o = key(&r.output);
            o == k || o.ends_with(&format!(" {k}"))
        })
    }

    pub fn goal_count(&self, state: &CraftState) -> i64 {
        let k = key(&self.goal);
        state.inventory.iter().filter(|(n, _)| key(n) == k).map(|(_, c)| *c).sum()
    }

    pub fn result(&self, state: &CraftState) -> DomainResult {
        let goal_count = self.goal_count(state);
        DomainResult::Crafting {
            goal_achieved: goal_count > 0,
            goal_count,
            inventory: state.inventory.clone(),
            trace: state.trace.clone(),
        }
    }

    /// One unit of `name`, unless it is craftable or unavailable.
    pub fn get(&self, state: &mut CraftState, name: &str) -> bool {
        let (count, item) = split_count(name);
        let failure = if count.is_some() {
            Some("get_object fetches one unit per call; pass the bare item name".to_string())
        } else if item.is_empty() {
            Some("empty item name".to_string())
        } else if self.recipe_for(&item).is_some() {
            Some(format!("{item} is crafted, not fetched"))
        } else if !self.is_raw(&item) {
            Some(format!("{item} names a group of items; fetch a specific one"))
        } else if self.unavailable.contains(&key(&item)) {
            Some(format!("{item} is not available"))
        } else {
            None
        };
        match failure {
            Some(why) => {
                state.trace.push(format!("get {}: failed ({why})", normalize(name)));
                false
            }
            None => {
                let n = normalize(&item);
                *state.inventory.entry(n.clone()).or_insert(0) += 1;
                state.trace.push(format!("got 1 {n}"));
                true
            }
        }
    }

    /// Craft `target` from `ingredients`, which must line up one-to-one with the recipe.
    pub fn craft(&self, state: &mut CraftState, target: &str, ingredients: &[String]) -> bool {
        match self.try_craft(state, target, ingredients) {
            Ok(msg) => {
                state.trace.push(msg);
                true
            }
            Err(why) => {
                state.trace.push(format!("craft {}: failed ({why})", normalize(target)));
                false
            }
        }
    }

    fn try_craft(&self, state: &mut CraftState, target: &str, ingredients: &[String]) -> Result<String, String> {
        let (_, target_name) = split_count(target);
        let recipe = self
            .recipe_for(&target_name)
            .ok_or_else(|| format!("no recipe produces {}", normalize(&target_name)))?;
        let needs = || {
            recipe.ingredients.iter().map(|(n, c)| format!("{c} {n}")).collect::<Vec<_>>().join(", ")
        };
        if ingredients.len() != recipe.ingredients.len() {
            return Err(format!("ingredients do not match the recipe (needs {})", needs()));
        }
        // pair each provided ingredient with an unused recipe slot
        let mut used = vec![false; recipe.ingredients.len()];
        let mut plan: Vec<(String, i64)> = Vec::new();
        for given in ingredients {
            let (n, name) = split_count(given);
            let slot = recipe
                .ingredients
                .iter()
                .enumerate()
                .position(|(i, (want, _))| !used[i] && satisfies(&name, want))
                .ok_or_else(|| format!("{} is not an ingredient of {} (needs {})", normalize(&name), recipe.output, needs()))?;
            used[slot] = true;
            let need = recipe.ingredients[slot].1;
            if n.is_some_and(|n| n != need) {
                return Err(format!("recipe needs {need} {}, not {}", recipe.ingredients[slot].0, n.unwrap_or(0)));
            }
            plan.push((name, need));
        }
        // resolve each to a concrete inventory entry with enough units
        let mut take: Vec<(String, i64)> = Vec::new();
        for (name, need) in &plan {
            let held: Vec<(&String, i64)> = state
                .inventory
                .iter()
                .filter(|(item, c)| **c > 0 && satisfies(item, name) && !take.iter().any(|(t, _)| t == *item))
                .map(|(item, c)| (item, *c))
                .collect();
            match held.iter().find(|(_, c)| c >= need) {
                Some((item, _)) => take.push(((*item).clone(), *need)),
                None => {
                    let have = held.iter().map(|(_, c)| *c).max().unwrap_or(0);
                    return Err(format!("not enough {}: have {have}, need {need}", normalize(name)));
                }
            }
        }
        for (item, n) in &take {
            let slot = state.inventory.get_mut(item).expect("resolved above");
            *slot -= n;
            if *slot == 0 {
                state.inventory.remove(item);
            }
        }
        *state.inventory.entry(recipe.output.clone()).or_insert(0) += recipe.count;
        Ok(format!("crafted {} {}", recipe.count, recipe.output))
    }
}

fn craft_parts<'a>(it: &'a mut Interpreter<'_>) -> (&'a CraftEnv, &'a mut CraftState) {
    let env = it.registry().craft_env().expect("crafting registry carries its task");
    match &mut it.world {
        World::Craft(s) => (env, s),
        _ => unreachable!("crafting primitives only run against a crafting world"),
    }
}

fn prim_get(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = args.positional_only("get_object", 1)?;
    let name = str_arg("get_object", &a[0])?.to_string();
    let (env, state) = craft_parts(it);
    Ok(Value::Bool(env.get(state, &name)))
}

fn prim_craft(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    let a = args.positional_only("craft_object", 2)?;
    let target = str_arg("craft_object", &a[0])?.to_string();
    let ingredients = match &a[1] {
        Value::List(items) => items
            .iter()
            .map(|v| str_arg("craft_object", v).map(str::to_string))
            .collect::<Result<Vec<_>, _>>()?,
        other => return Err(type_error("craft_object", "a list of ingredient names", other)),
    };
    let (env, state) = craft_parts(it);
    Ok(Value::Bool(env.craft(state, &target, &ingredients)))
}

fn prim_inventory(it: &mut Interpreter<'_>, args: CallArgs) -> Result<Value, ExecError> {
    args.positional_only("check_inventory", 0)?;
    let (_, state) = craft_parts(it);
    Ok(Value::Dict(
        state.inventory.iter().map(|(k, v)| (Value::Str(k.clone()), Value::Int(*v))).collect(),
    ))
}

pub fn textcraft_registry(env: CraftEnv) -> Registry {
    let p = |name, signature, doc, func| Primitive { name, signature, doc, func };
    Registry::new(
        Domain::Textcraft,
        vec![
            p(
                "get_object",
                "get_object(obj_name)",
                "get one unit of obj_name from the environment (raw items only)",
                prim_get as _,
            ),
            p(
                "craft_object",
                "craft_object(obj_name, [ingredients])",
                "craft obj_name using the list of ingredients",
                prim_craft as _,
            ),
            p(
                "check_inventory",
                "check_inventory()",
                "return the contents of the inventory as a dict of item -> count",
                prim_inventory as _,
            ),
        ],
        vec![],
        Some(std::sync::Arc::new(env)),
    )
}
