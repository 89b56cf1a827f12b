//! End-to-end recipes: a bundled scenario, the verdict it must produce and
//! the facts about the final world that must hold.

use std::fmt::Write as _;

use serde::Serialize;

use txsc_core::chainsim::{compile_deployments, run, EventKind, LockStatus, ScenarioConfig, SimError, Simulation};
use txsc_core::corpus;
use txsc_core::interp::Outcome;
use txsc_core::serializability::{check, CheckOptions, Verdict};
use txsc_core::value::{Address, Value};

use crate::CliError;

pub struct Recipe {
    pub name: &'static str,
    pub about: &'static str,
    scenario: &'static str,
    transform_all: bool,
    pub expect_serializable: bool,
    assertions: fn(&Simulation, &Verdict) -> Vec<Assertion>,
}

pub const RECIPES: [Recipe; 6] = [
    Recipe {
        name: "puzzle-anomaly",
        about: "stale reward read pays the solver nothing",
        scenario: "puzzle",
        transform_all: false,
        expect_serializable: false,
        assertions: puzzle_anomaly,
    },
    Recipe {
        name: "puzzle-fixed",
        about: "rewritten puzzle aborts the stale submission",
        scenario: "puzzle",
        transform_all: true,
        expect_serializable: true,
        assertions: puzzle_fixed,
    },
    Recipe {
        name: "blockking-anomaly",
        about: "every callback sees the last entrant",
        scenario: "blockking",
        transform_all: false,
        expect_serializable: false,
        assertions: blockking_anomaly,
    },
    Recipe {
        name: "blockking-fixed",
        about: "locks serialize entry and callback",
        scenario: "blockking-locked",
        transform_all: false,
        expect_serializable: true,
        assertions: blockking_fixed,
    },
    Recipe {
        name: "out-of-gas-atomicity",
        about: "out-of-gas calls and callbacks leave no trace",
        scenario: "out-of-gas",
        transform_all: false,
        expect_serializable: true,
        assertions: out_of_gas,
    },
    Recipe {
        name: "lost-callback",
        about: "a dropped callback is recovered by the owner",
        scenario: "lost-callback",
        transform_all: false,
        expect_serializable: true,
        assertions: lost_callback,
    },
];

pub fn find(name: &str) -> Option<&'static Recipe> {
    RECIPES.iter().find(|r| r.name == name)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn assertion(name: &str, passed: bool, detail: impl Into<String>) -> Assertion {
    Assertion { name: name.to_string(), passed, detail: detail.into() }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RecipeReport {
    pub recipe: String,
    pub seed: u64,
    pub expect_serializable: bool,
    pub verdict: Verdict,
    pub assertions: Vec<Assertion>,
}

impl RecipeReport {
    pub fn passed(&self) -> bool {
        self.verdict.serializable == self.expect_serializable && self.assertions.iter().all(|a| a.passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "recipe {} (seed {})", self.recipe, self.seed);
        let expected = if self.expect_serializable { "serializable" } else { "not serializable" };
        let got = if self.verdict.serializable { "serializable" } else { "not serializable" };
        let _ = writeln!(out, "  verdict: {got} (expected {expected})");
        if let Some(w) = &self.verdict.witness_order {
            let _ = writeln!(out, "  witness: {}", w.join(" -> "));
        }
        if let Some(c) = &self.verdict.conflict_cycle {
            for e in c {
                let _ = writeln!(out, "  conflict: {} -> {} on {} ({:?})", e.from, e.to, e.attribute, e.kind);
            }
        }
        if !self.verdict.invalidated_spans.is_empty() {
            let _ = writeln!(out, "  invalidated: {}", self.verdict.invalidated_spans.join(", "));
        }
        for a in &self.assertions {
            let _ = writeln!(out, "  [{}] {}: {}", if a.passed { "ok" } else { "FAILED" }, a.name, a.detail);
        }
        let _ = writeln!(out, "{}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

pub fn scenario_config(recipe: &Recipe, seed: Option<u64>) -> Result<ScenarioConfig, CliError> {
    let text =
        corpus::scenario(recipe.scenario).ok_or_else(|| CliError::Input(format!("no scenario {}", recipe.scenario)))?;
    let mut cfg = ScenarioConfig::from_toml(text)?;
    if recipe.transform_all {
        for d in &mut cfg.contracts {
            d.transform = true;
        }
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

pub fn simulate(cfg: &ScenarioConfig) -> Result<Simulation, CliError> {
    let contracts = compile_deployments(cfg, |f| {
        corpus::source(f)
            .map(str::to_string)
            .ok_or_else(|| SimError::Contract { file: f.into(), message: "not bundled".into() })
    })?;
    let sim = run(cfg, &contracts)?;
    sim.replay()?;
    sim.check_lock_safety()?;
    Ok(sim)
}

pub fn run_recipe(recipe: &Recipe, seed: Option<u64>) -> Result<RecipeReport, CliError> {
    let cfg = scenario_config(recipe, seed)?;
    let sim = simulate(&cfg)?;
    let verdict = check(&sim.history(), CheckOptions::default())?;
    let assertions = (recipe.assertions)(&sim, &verdict);
    Ok(RecipeReport {
        recipe: recipe.name.to_string(),
        seed: cfg.seed,
        expect_serializable: recipe.expect_serializable,
        verdict,
        assertions,
    })
}

fn attr(sim: &Simulation, obj: &str, a: &str) -> Option<Value> {
    sim.object(obj).and_then(|o| o.get(a)).cloned()
}

fn show(v: &Option<Value>) -> String {
    v.as_ref().map_or("missing".into(), |v| format!("{v:?}"))
}

fn outcome_of(sim: &Simulation, span: &str, i: usize) -> Option<Outcome> {
    sim.history().span(span).and_then(|s| s.events.get(i)).map(|e| e.outcome.clone())
}

fn puzzle_anomaly(sim: &Simulation, v: &Verdict) -> Vec<Assertion> {
    let h = sim.history();
    let paid = h.span("bob-1").and_then(|s| s.events.first()).and_then(|e| e.transfers.first()).map(|t| t.amount);
    let solved = attr(sim, "puzzle", "solved");
    let on_reward = v.conflict_cycle.as_ref().is_some_and(|c| c.iter().all(|e| e.attribute == "puzzle.reward"));
    vec![
        assertion("solution accepted", solved == Some(Value::Bool(true)), show(&solved)),
        assertion("solver paid zero", paid == Some(0), format!("{paid:?}")),
        assertion("cycle on puzzle.reward", on_reward, format!("{:?}", v.conflict_cycle.as_ref().map(Vec::len))),
    ]
}

fn puzzle_fixed(sim: &Simulation, v: &Verdict) -> Vec<Assertion> {
    let bob = outcome_of(sim, "bob-1", 0);
    let stale = matches!(&bob, Some(Outcome::AbortedRequires { check }) if check.expr == "reward == msg.data.reward");
    let solved = attr(sim, "puzzle", "solved");
    vec![
        assertion("stale submission aborted", stale, format!("{bob:?}")),
        assertion("puzzle unsolved", solved == Some(Value::Bool(false)), show(&solved)),
        assertion("submission invalidated", v.invalidated_spans == ["bob-1"], v.invalidated_spans.join(",")),
    ]
}

fn blockking_anomaly(sim: &Simulation, v: &Verdict) -> Vec<Assertion> {
    let h = sim.history();
    let last = h.spans.iter().max_by_key(|s| s.events[0].commit_index).map(|s| s.client_id.clone()).unwrap_or_default();
    let seen: Vec<String> = h
        .spans
        .iter()
        .filter_map(|s| s.events.iter().find(|e| e.kind == EventKind::Callback))
        .map(|cb| format!("{:?}", cb.read_snapshot.get("warrior")))
        .collect();
    let all_last = seen.len() == h.spans.len()
        && seen.iter().all(|w| *w == format!("{:?}", Some(Value::Address(Address::new(&last)))));
    let on_warrior = v.conflict_cycle.as_ref().is_some_and(|c| c.iter().any(|e| e.attribute == "blockking.warrior"));
    vec![
        assertion("callbacks see the last entrant", all_last, format!("{} callbacks, last entrant {last}", seen.len())),
        assertion(
            "cycle through blockking.warrior",
            on_warrior,
            format!("{:?}", v.conflict_cycle.as_ref().map(Vec::len)),
        ),
    ]
}

fn blockking_fixed(sim: &Simulation, _: &Verdict) -> Vec<Assertion> {
    let h = sim.history();
    let own = h.spans.iter().all(|s| {
        s.events.iter().any(|e| {
            e.kind == EventKind::Callback
                && e.outcome.is_committed()
                && e.read_snapshot.get("__after_warrior") == Some(&Value::Address(Address::new(&s.client_id)))
        })
    });
    let released = sim.locks().records().all(|r| r.status == LockStatus::Released);
    let refunded = h.spans.iter().all(|s| sim.lock_of_span(&s.span_id).is_some_and(|l| sim.escrow(l).is_none()));
    vec![
        assertion("each callback sees its own entrant", own, format!("{} spans", h.spans.len())),
        assertion("all locks released", released, format!("{} locks", sim.locks().records().count())),
        assertion("all deposits refunded", refunded, ""),
    ]
}

fn out_of_gas(sim: &Simulation, _: &Verdict) -> Vec<Assertion> {
    let bob = outcome_of(sim, "bob-1", 0);
    let carol_cb = outcome_of(sim, "carol-1", 1);
    let solved = attr(sim, "puzzle", "solved");
    let warrior = attr(sim, "blockking", "warrior");
    let genesis = sim.genesis_object("blockking").and_then(|o| o.get("warrior")).cloned();
    let forfeited =
        sim.lock_of_span("carol-1").and_then(|l| sim.locks().get(l)).is_some_and(|r| r.status == LockStatus::Forfeited);
    vec![
        assertion("submission ran out of gas", bob == Some(Outcome::AbortedOutOfGas), format!("{bob:?}")),
        assertion("puzzle unchanged", solved == Some(Value::Bool(false)), show(&solved)),
        assertion("callback ran out of gas", carol_cb == Some(Outcome::AbortedOutOfGas), format!("{carol_cb:?}")),
        assertion("warrior rolled back", warrior == genesis, show(&warrior)),
        assertion("deposit forfeited", forfeited, ""),
    ]
}

fn lost_callback(sim: &Simulation, _: &Verdict) -> Vec<Assertion> {
    let lock = sim.lock_of_span("alice-1");
    let forfeited = lock.and_then(|l| sim.locks().get(l)).is_some_and(|r| r.status == LockStatus::Forfeited);
    let genesis = sim.genesis_object("blockking");
    let now = sim.object("blockking");
    let kept = match (genesis, now) {
        (Some(g), Some(n)) => {
            n.attrs.iter().filter(|(k, _)| !k.starts_with("__")).all(|(k, v)| g.attrs.get(k) == Some(v))
        }
        _ => false,
    };
    let gained = sim.account("owner").saturating_sub(sim.initial_account("owner"));
    vec![
        assertion("callback dropped", sim.dropped_callbacks == 1, format!("{} dropped", sim.dropped_callbacks)),
        assertion("real attributes untouched", kept, ""),
        assertion("lock forfeited", forfeited, format!("{lock:?}")),
        assertion("owner receives deposit", gained == sim.config.transform.deposit_amount, format!("{gained}")),
    ]
}
