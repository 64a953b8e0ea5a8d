use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use ita_core::classgraph::{Caps, ClassError, ClassGraph, EdgeKind};
use ita_core::expressions::{ExpressionError, ExpressionSets};
use ita_core::itaminus::{to_ita_minus, ItaMinusError};
use ita_core::lpreach::{alternate, bounded_reach_with, default_depth, realize, LpError, SearchError, DEFAULT_DEPTH_CAP, DEFAULT_MAX_NODES};
use ita_core::semantics::{parse_run, render_run, render_word, replay, RunStep};
use ita_core::tctl::{check, parse_formula_for, Options, TctlError};
use ita_core::{load_ita, parse_ita, Ita, ModelError, StateId, TransitionId};

#[derive(Parser)]
#[command(name = "ita", version, about = "Verification of interrupt timed automata")]
struct Cli {
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[arg(long, global = true, default_value_t = 200_000)]
    max_classes: usize,
    #[arg(long, global = true, default_value_t = 2_000)]
    max_exprs: usize,
    /// Worker threads for class-graph exploration.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the structural conditions of a model.
    Validate {
        model: PathBuf,
        #[arg(long)]
        require_ita_minus: bool,
    },
    /// Replay a run file and print the final configuration and timed word.
    Simulate { model: PathBuf, run: PathBuf },
    /// Build the class graph.
    Classgraph {
        model: PathBuf,
        #[arg(long)]
        dot: bool,
        /// Refine the classes with the comparisons of this formula.
        #[arg(long)]
        formula: Option<String>,
        #[arg(long)]
        dump_expressions: bool,
    },
    /// Decide whether a state is reachable.
    Reach {
        model: PathBuf,
        #[arg(long)]
        target: String,
        #[arg(long, value_enum, default_value_t = Method::Both)]
        method: Method,
        /// Discrete steps for the bounded search.
        #[arg(long)]
        depth: Option<usize>,
    },
    /// Translate into the restricted subclass and print the model.
    ToItaMinus {
        model: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        max_states: usize,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Untimed language as a finite automaton over classes.
    Untimed {
        model: PathBuf,
        /// Remove silent edges.
        #[arg(long)]
        no_epsilon: bool,
    },
    /// Model-check a formula at the initial configuration.
    Check {
        model: PathBuf,
        #[arg(long)]
        formula: String,
        #[arg(long)]
        depth: Option<usize>,
    },
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    Classgraph,
    Bounded,
    Both,
}

enum Failure {
    Input(String),
    Cap(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Input(_) => 3,
            Failure::Cap(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Input(m) | Failure::Cap(m) => m,
        }
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        Failure::Input(e.to_string())
    }
}

impl From<ClassError> for Failure {
    fn from(e: ClassError) -> Self {
        match e {
            ClassError::CapExceeded(_) | ClassError::Expressions(ExpressionError::CapExceeded { .. }) => Failure::Cap(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<ExpressionError> for Failure {
    fn from(e: ExpressionError) -> Self {
        Failure::Cap(e.to_string())
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::NodeCap(_) | SearchError::Lp(LpError::TooLarge { .. }) => Failure::Cap(e.to_string()),
            _ => Failure::Input(e.to_string()),
        }
    }
}

impl From<LpError> for Failure {
    fn from(e: LpError) -> Self {
        Failure::Cap(e.to_string())
    }
}

impl From<TctlError> for Failure {
    fn from(e: TctlError) -> Self {
        match e {
            TctlError::Class(c) => c.into(),
            TctlError::Search(s) => s.into(),
            other => Failure::Input(other.to_string()),
        }
    }
}

impl From<ItaMinusError> for Failure {
    fn from(e: ItaMinusError) -> Self {
        match e {
            ItaMinusError::CapExceeded(_) => Failure::Cap(e.to_string()),
            ItaMinusError::Invalid(_) => Failure::Input(e.to_string()),
        }
    }
}

/// Printed output and exit code of a successful command.
struct Outcome {
    text: String,
    code: u8,
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Ita, Failure> {
    Ok(load_ita(&read(path)?)?)
}

fn caps(cli: &Cli) -> Caps {
    Caps { max_classes: cli.max_classes, max_exprs: cli.max_exprs, jobs: cli.jobs }
}

fn witness_json(run: &[RunStep]) -> Value {
    json!(run.iter().map(|s| s.to_string()).collect::<Vec<_>>())
}

fn verdict_json(verdict: Option<bool>, procedure: &str, witness: Option<&[RunStep]>, complete: bool) -> String {
    let v = json!({
        "schema": 1,
        "verdict": verdict,
        "procedure": procedure,
        "witness": witness.map(witness_json),
        "complete": complete,
    });
    serde_json::to_string_pretty(&v).expect("json values serialize") + "\n"
}

fn validate(cli: &Cli, path: &Path, require_minus: bool) -> Result<Outcome, Failure> {
    let m = parse_ita(&read(path)?)?;
    let mut violations = m.validate();
    if require_minus && violations.is_empty() {
        violations = m.ita_minus_violations();
    }
    let code = if violations.is_empty() { 0 } else { 1 };
    let text = if cli.json {
        let list: Vec<String> = violations.iter().map(|v| v.to_string()).collect();
        serde_json::to_string_pretty(&json!({ "schema": 1, "ok": violations.is_empty(), "violations": list })).unwrap() + "\n"
    } else if violations.is_empty() {
        "ok\n".to_string()
    } else {
        violations.iter().map(|v| format!("{v}\n")).collect()
    };
    Ok(Outcome { text, code })
}

fn simulate(cli: &Cli, model: &Path, run: &Path) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let steps = parse_run(&read(run)?).map_err(|e| Failure::Input(format!("{}: {e}", run.display())))?;
    let (end, word) = replay(&m, &steps).map_err(|e| Failure::Input(e.to_string()))?;
    let state = &m.state(end.state).name;
    let text = if cli.json {
        let w: Vec<Value> = word.iter().map(|(a, t)| json!([a, t.to_string()])).collect();
        let v = json!({
            "schema": 1,
            "state": state,
            "valuation": end.valuation.to_string(),
            "accepting": m.state(end.state).accepting,
            "word": w,
        });
        serde_json::to_string_pretty(&v).unwrap() + "\n"
    } else {
        format!("state {state}\nvaluation {}\nword {}\n", end.valuation, render_word(&word))
    };
    Ok(Outcome { text, code: 0 })
}

fn classgraph(cli: &Cli, model: &Path, dot: bool, formula: Option<&str>, dump: bool) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let comparisons = match formula {
        Some(src) => parse_formula_for(src, Some(m.clocks)).map_err(|e| Failure::Input(e.to_string()))?.comparisons(),
        None => Vec::new(),
    };
    if dump {
        let sets = ExpressionSets::build(&m, &comparisons, cli.max_exprs)?;
        let text = if cli.json { serde_json::to_string_pretty(&sets.to_json()).unwrap() + "\n" } else { sets.to_string() };
        return Ok(Outcome { text, code: 0 });
    }
    let g = ClassGraph::explore(&m, &comparisons, &caps(cli))?;
    let text = if dot {
        g.to_dot()
    } else if cli.json {
        serde_json::to_string_pretty(&g.to_json()).unwrap() + "\n"
    } else {
        let mut s = format!("{} classes, {} edges\n", g.nodes.len(), g.edges.len());
        for (i, n) in g.nodes.iter().enumerate() {
            s += &format!("n{i}: {}\n", g.abs.describe(n).replace('\n', "\n    "));
        }
        s
    };
    Ok(Outcome { text, code: 0 })
}

/// A concrete run along the discrete transitions of a class path.
fn concretize(m: &Ita, path: &[TransitionId]) -> Result<Option<Vec<RunStep>>, Failure> {
    realize(m, &alternate(path, false), |_, _| Vec::new(), &[]).map_err(|e| Failure::Input(e.to_string()))
}

fn reach(cli: &Cli, model: &Path, target: &str, method: Method, depth: Option<usize>) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let goal: Vec<StateId> = m.state_ids().filter(|q| m.state(*q).name == target || m.state(*q).has(target)).collect();
    if goal.is_empty() {
        return Err(Failure::Input(format!("no state or proposition `{target}`")));
    }
    let mut lines = Vec::new();
    let mut verdicts = Vec::new();
    let mut witness = None;
    let mut procedures = Vec::new();
    if method != Method::Bounded {
        let g = ClassGraph::explore(&m, &[], &caps(cli))?;
        let path = g.reachable(|n| goal.contains(&n.state));
        let found = path.is_some();
        if let Some(edges) = path {
            let ts: Vec<TransitionId> = edges
                .iter()
                .filter_map(|e| match e.kind {
                    EdgeKind::Discrete(t) => Some(t),
                    EdgeKind::Time => None,
                })
                .collect();
            witness = concretize(&m, &ts)?;
        }
        lines.push(format!("classgraph: {} ({} classes)", if found { "reachable" } else { "unreachable" }, g.nodes.len()));
        verdicts.push((found, true));
        procedures.push("classgraph");
    }
    if method != Method::Classgraph {
        let depth = depth.unwrap_or_else(|| default_depth(&m, DEFAULT_DEPTH_CAP));
        let r = bounded_reach_with(&m, &|q| goal.contains(&q), depth, DEFAULT_MAX_NODES)?;
        let found = r.witness.is_some();
        let word = match &r.witness {
            Some(w) => Some(render_word(&replay(&m, &w.run).map_err(|e| Failure::Input(e.to_string()))?.1)),
            None => None,
        };
        let status = match (found, r.complete) {
            (true, _) => "reachable".to_string(),
            (false, true) => "unreachable".to_string(),
            (false, false) => format!("not found within depth {depth} (incomplete)"),
        };
        lines.push(format!("bounded: {status}{}", word.map(|w| format!(" with word {w}")).unwrap_or_default()));
        if witness.is_none() {
            witness = r.witness.map(|w| w.run);
        }
        verdicts.push((found, r.complete));
        procedures.push("bounded");
    }
    let reachable = verdicts.iter().any(|(f, _)| *f);
    let complete = verdicts.iter().any(|(f, c)| *c && (*f || !reachable));
    if verdicts.iter().all(|(_, c)| *c) && verdicts.iter().any(|(f, _)| *f != reachable) {
        return Err(Failure::Input("procedures disagree".into()));
    }
    let code = match (reachable, complete) {
        (true, _) => 0,
        (false, true) => 1,
        (false, false) => 2,
    };
    let text = if cli.json {
        verdict_json(complete.then_some(reachable), &procedures.join("+"), witness.as_deref(), complete)
    } else {
        let mut s = lines.join("\n") + "\n";
        if let Some(w) = &witness {
            s += "witness:\n";
            s += &render_run(w);
        }
        s
    };
    Ok(Outcome { text, code })
}

fn to_minus(model: &Path, max_states: usize, output: Option<&Path>) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let t = to_ita_minus(&m, max_states)?;
    let rendered = t.model.render();
    match output {
        Some(p) => {
            fs::write(p, &rendered).map_err(|e| Failure::Input(format!("{}: {e}", p.display())))?;
            Ok(Outcome { text: format!("{} states, {} transitions\n", t.model.states.len(), t.model.transitions.len()), code: 0 })
        }
        None => Ok(Outcome { text: rendered, code: 0 }),
    }
}

fn untimed(cli: &Cli, model: &Path, no_epsilon: bool) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let g = ClassGraph::explore(&m, &[], &caps(cli))?;
    let mut nfa = g.untimed_automaton();
    if no_epsilon {
        nfa = nfa.eliminate_epsilon();
    }
    let text = if cli.json {
        let edges: Vec<Value> = nfa.edges.iter().map(|(a, l, b)| json!([a, l, b])).collect();
        let v = json!({ "schema": 1, "states": nfa.states, "initial": nfa.initial, "finals": nfa.finals, "edges": edges });
        serde_json::to_string_pretty(&v).unwrap() + "\n"
    } else {
        nfa.render()
    };
    Ok(Outcome { text, code: 0 })
}

fn check_formula(cli: &Cli, model: &Path, src: &str, depth: Option<usize>) -> Result<Outcome, Failure> {
    let m = load_model(model)?;
    let f = parse_formula_for(src, Some(m.clocks)).map_err(|e| Failure::Input(e.to_string()))?;
    let mut o = Options::for_model(&m);
    o.caps = caps(cli);
    if let Some(d) = depth {
        o.depth = d;
    }
    let v = check(&m, &f, &o)?;
    let code = match (v.holds, v.complete) {
        (_, false) => 2,
        (true, true) => 0,
        (false, true) => 1,
    };
    let text = if cli.json {
        verdict_json(v.complete.then_some(v.holds), &v.procedure, v.run.as_deref(), v.complete)
    } else {
        let mut s = format!("{}{} ({})\n", v.holds, if v.complete { "" } else { " (incomplete)" }, v.procedure);
        if let Some(run) = &v.run {
            s += if v.holds { "witness:\n" } else { "counterexample:\n" };
            s += if run.is_empty() { "(empty run)\n".to_string() } else { render_run(run) }.as_str();
        }
        s
    };
    Ok(Outcome { text, code })
}

fn run(cli: &Cli) -> Result<Outcome, Failure> {
    match &cli.command {
        Command::Validate { model, require_ita_minus } => validate(cli, model, *require_ita_minus),
        Command::Simulate { model, run } => simulate(cli, model, run),
        Command::Classgraph { model, dot, formula, dump_expressions } => {
            classgraph(cli, model, *dot, formula.as_deref(), *dump_expressions)
        }
        Command::Reach { model, target, method, depth } => reach(cli, model, target, *method, *depth),
        Command::ToItaMinus { model, max_states, output } => to_minus(model, *max_states, output.as_deref()),
        Command::Untimed { model, no_epsilon } => untimed(cli, model, *no_epsilon),
        Command::Check { model, formula, depth } => check_formula(cli, model, formula, *depth),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{}", out.text);
            ExitCode::from(out.code)
        }
        Err(f) => {
            if cli.json {
                println!("{}", json!({ "schema": 1, "error": f.message(), "exit": f.code() }));
            } else {
                eprintln!("error: {}", f.message());
            }
            ExitCode::from(f.code())
        }
    }
}
