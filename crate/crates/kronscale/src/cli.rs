//! Command-line front end. [`run`] parses arguments, dispatches to the
//! library and returns an exit code with a serializable report; the binary
//! only prints.

use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::algebra::{FieldSpec, Rng};
use crate::circuit::{baur_strassen, homogenize, Circuit, Name};
use crate::coeffx::{extract_coeff, ExtractionRequest, Method, TriOptions};
use crate::counting::{self, SetFamily};
use crate::error::{Error, Result};
use crate::matchcon::{self, NiceTreeDecomposition};
use crate::scaling::{decompose_p, verify_scaling, BlockStructure, DecProvider, FixedProvider, PBuilder, Padding, TrivialProvider};
use crate::sieving::{self, Graph, SieveOptions, Triples};
use crate::steinitz::{concentration_partition, steinitz_permutation, VectorFamily, Q};
use crate::tensor::RankDecomposition;

pub const EXIT_OK: i32 = 0;
pub const EXIT_FALSE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "kronscale", version, about = "Kronecker-scaling circuits, counting, sieving and matchings-connectivity checks")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Seed for every random choice; a fresh one is drawn and reported if absent.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Print the report as JSON.
    #[arg(long, global = true)]
    pub json: bool,
    /// Cap on worker threads. Runs are single-threaded, so only 1 changes nothing.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u32).range(1..))]
    pub threads: u32,
    /// Field, `p=<prime>` or `gf2 w=<8|16|32|64>`.
    #[arg(long, global = true)]
    pub field: Option<FieldSpec>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exhaustively check the Kronecker-scaling identity for P_n.
    VerifyScaling {
        #[arg(long)]
        b: usize,
        #[arg(long)]
        g: usize,
        #[arg(long)]
        s: usize,
    },
    /// Build a P_n circuit and write it in circuit text format.
    BuildP {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        b: usize,
        #[arg(long)]
        g: Option<usize>,
        #[arg(long)]
        dec: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pad by the worst-case constant instead of the realized deviation.
        #[arg(long)]
        paper_padding: bool,
    },
    /// Extract the coefficient of the product of all variables in a slot.
    Extract {
        #[arg(long)]
        circuit: PathBuf,
        /// Slot letter: every input `<slot>:{...}` is a variable.
        #[arg(long, default_value = "x")]
        vars: char,
        #[arg(long, value_enum, default_value_t = Mode::Direct)]
        method: Mode,
        #[command(flatten)]
        tri: TriArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Permanent of a matrix file.
    Perm(CountArgs),
    /// Hafnian of a symmetric matrix file.
    Haf(CountArgs),
    /// Number of partitions of the ground set into family members.
    Setpart(CountArgs),
    /// Detection by sieving: k-path, 3-dimensional matching, long cycle.
    #[command(subcommand)]
    Sieve(SieveCmd),
    /// Checks on the matchings-connectivity basis and its tensor.
    #[command(subcommand)]
    Matchcon(MatchconCmd),
    /// Evaluate, homogenize, differentiate or summarize a circuit file.
    #[command(subcommand)]
    Circuit(CircuitCmd),
    /// Steinitz orders and concentration partitions of vector files.
    #[command(subcommand)]
    Steinitz(SteinitzCmd),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Direct,
    Tri,
}

impl From<Mode> for Method {
    fn from(m: Mode) -> Method {
        match m {
            Mode::Direct => Method::Direct,
            Mode::Tri => Method::Tripartition,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct TriArgs {
    /// Block size for the P combination.
    #[arg(long = "block")]
    pub b: Option<usize>,
    /// Blocks per group.
    #[arg(long = "group")]
    pub g: Option<usize>,
    /// Rank-decomposition file used for every P_d factor.
    #[arg(long)]
    pub dec: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct CountArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value_t = Mode::Direct)]
    pub mode: Mode,
    #[command(flatten)]
    pub tri: TriArgs,
}

#[derive(Args, Debug, Clone)]
pub struct SieveArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 7)]
    pub trials: usize,
    /// Extraction method; by default direct for small k.
    #[arg(long, value_enum)]
    pub method: Option<Mode>,
}

#[derive(Subcommand, Debug)]
pub enum SieveCmd {
    /// Directed or undirected simple path with k edges.
    Kpath(SieveArgs),
    /// Three-dimensional matching of size k; `--graph` is a triples file.
    Matroid3(SieveArgs),
    /// Cycle of length at least k in a bipartite graph.
    Longcycle(SieveArgs),
}

#[derive(Subcommand, Debug)]
pub enum MatchconCmd {
    /// Check the basis identity over all pairs of perfect matchings of K_q.
    VerifyBasis {
        #[arg(long)]
        q: usize,
    },
    /// Check the blockwise factorization of H_q with blocks of size b.
    VerifyFac {
        #[arg(long)]
        q: usize,
        #[arg(long)]
        b: usize,
    },
    /// Check the join formula at every join bag against brute force.
    VerifyJoin {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        td: PathBuf,
        /// Comma-separated edge weights; random in 1..=n² if absent.
        #[arg(long, value_delimiter = ',')]
        weights: Option<Vec<u64>>,
    },
}

#[derive(Subcommand, Debug)]
pub enum CircuitCmd {
    /// Evaluate; unassigned inputs get random field values.
    Eval {
        #[arg(long)]
        circuit: PathBuf,
        /// `name=value`, repeatable.
        #[arg(long = "set")]
        set: Vec<String>,
    },
    /// Split into homogeneous components up to degree d.
    Homogenize {
        #[arg(long)]
        circuit: PathBuf,
        #[arg(long)]
        d: usize,
        /// Slot letter of the variables; all inputs if absent.
        #[arg(long)]
        vars: Option<char>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// All first partial derivatives in one circuit.
    Grad {
        #[arg(long)]
        circuit: PathBuf,
        /// Slot letter of the variables; all inputs if absent.
        #[arg(long)]
        wrt: Option<char>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gate, arc and degree counts.
    Stats {
        #[arg(long)]
        circuit: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum SteinitzCmd {
    /// Order a zero-sum-shifted vector family with small prefix sums.
    Perm {
        #[arg(long = "in")]
        input: PathBuf,
    },
    /// Split into groups of the given sizes with concentrated averages.
    Partition {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Ok,
    False,
    Counterexample,
}

impl Verdict {
    pub fn exit_code(self) -> i32 {
        match self {
            Verdict::Ok => EXIT_OK,
            _ => EXIT_FALSE,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub command: String,
    pub parameters: Value,
    pub seed: u64,
    pub verdict: Verdict,
    pub values: Value,
    pub wall_ms: f64,
}

/// What a finished invocation hands back to the caller.
pub struct Outcome {
    pub code: i32,
    pub report: Option<RunReport>,
    /// Text for stdout (the report, or help).
    pub stdout: String,
    pub stderr: String,
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).map_err(|e| Error::InvalidSpec(format!("{}: {e}", p.display())))
}

fn write_out(p: &Option<PathBuf>, text: &str) -> Result<Option<String>> {
    match p {
        Some(p) => {
            std::fs::write(p, text).map_err(|e| Error::InvalidSpec(format!("{}: {e}", p.display())))?;
            Ok(Some(p.display().to_string()))
        }
        None => Ok(None),
    }
}

fn provider(dec: &Option<PathBuf>) -> Result<Box<dyn DecProvider>> {
    Ok(match dec {
        Some(p) => Box::new(FixedProvider(RankDecomposition::from_text(&read(p)?)?)),
        None => Box::new(TrivialProvider),
    })
}

fn tri_opts(t: &TriArgs) -> TriOptions {
    TriOptions { b: t.b, g: t.g }
}

fn q_str(q: &Q) -> String {
    q.to_string()
}

fn slot_vars(c: &Circuit, slot: Option<char>) -> Vec<Name> {
    let mut v: Vec<Name> = c.input_names().into_iter().filter(|n| slot.is_none_or(|s| n.slot() == Some(s))).collect();
    v.sort();
    v.dedup();
    v
}

type Step = (String, Value, Verdict, Value);

fn dispatch(cmd: &Command, common: &Common, seed: u64) -> Result<Step> {
    let field = common.field.unwrap_or_default();
    let mut rng = Rng::new(seed);
    let ok = |b: bool| if b { Verdict::Ok } else { Verdict::Counterexample };
    Ok(match cmd {
        Command::VerifyScaling { b, g, s } => {
            let r = verify_scaling(&BlockStructure::new(*b, *g, *s)?)?;
            ("verify-scaling".into(), json!({"b": b, "g": g, "s": s}), ok(r.ok()), serde_json::to_value(&r).unwrap())
        }
        Command::BuildP { n, b, g, dec, out, paper_padding } => {
            let prov = provider(dec)?;
            let g = g.unwrap_or(n / (*b).max(1));
            let bs = BlockStructure::new(*b, g, n.checked_div(b * g).unwrap_or(0))?;
            if bs.n() != *n {
                return Err(Error::Divisibility(*n));
            }
            let padding = if *paper_padding { Padding::Paper } else { Padding::Adaptive };
            let pb = PBuilder::from_decomposition(field, decompose_p(&bs, padding)?, prov.as_ref())?;
            let (c, rep) = pb.circuit()?;
            let written = write_out(out, &c.to_text())?;
            let params = json!({"n": n, "b": b, "g": g, "padding": format!("{padding:?}").to_lowercase(), "field": field.to_string()});
            ("build-p".into(), params, Verdict::Ok, json!({"report": rep, "out": written}))
        }
        Command::Extract { circuit, vars, method, tri, out } => {
            let c = Circuit::from_text(&read(circuit)?)?;
            let names = slot_vars(&c, Some(*vars));
            let prov = provider(&tri.dec)?;
            let req = ExtractionRequest { circuit: &c, vars: names.clone(), method: (*method).into(), tri: tri_opts(tri) };
            let e = extract_coeff(&req, prov.as_ref())?;
            let written = write_out(out, &e.circuit.to_text())?;
            let value = if e.circuit.input_names().is_empty() { e.circuit.eval_with(|_| None).ok().map(|v| c.field.format(v[0])) } else { None };
            let params = json!({"circuit": circuit, "vars": names.iter().map(|n| n.to_string()).collect::<Vec<_>>(), "method": Method::from(*method).to_string()});
            ("extract".into(), params, Verdict::Ok, json!({"stats": e.stats, "gates": e.circuit.gates.len(), "value": value, "out": written}))
        }
        Command::Perm(a) => {
            let m = counting::parse_matrix(field, &read(&a.input)?)?;
            let prov = provider(&a.tri.dec)?;
            let n = m.rows;
            let (c, arcs) = match a.mode {
                Mode::Tri if n % 3 == 0 && n > 0 => {
                    let (c, rep) = counting::build_permanent_circuit(field, n, tri_opts(&a.tri), prov.as_ref())?;
                    (c, rep.arcs)
                }
                mode => {
                    let (c, st) = counting::permanent_via_extraction(field, n, mode.into(), tri_opts(&a.tri), prov.as_ref())?;
                    (c, st.arcs)
                }
            };
            let v = counting::eval_on_matrix(&c, &m)?;
            let check = if n <= 20 { Some(counting::permanent_ryser(field, &m)?) } else { None };
            let verdict = ok(check.is_none_or(|r| r == v));
            let params = json!({"in": a.input, "mode": Method::from(a.mode).to_string(), "field": field.to_string()});
            ("perm".into(), params, verdict, json!({"n": n, "value": field.format(v), "ryser": check.map(|r| field.format(r)), "arcs": arcs}))
        }
        Command::Haf(a) => {
            let m = counting::parse_matrix(field, &read(&a.input)?)?;
            let prov = provider(&a.tri.dec)?;
            let (c, st) = counting::build_hafnian_circuit(field, m.rows, a.mode.into(), tri_opts(&a.tri), prov.as_ref())?;
            let v = counting::hafnian_eval(&c, &m)?;
            let check = if m.rows <= 14 { Some(counting::hafnian_bruteforce(field, &m)?) } else { None };
            let params = json!({"in": a.input, "mode": Method::from(a.mode).to_string(), "field": field.to_string()});
            ("haf".into(), params, ok(check.is_none_or(|r| r == v)), json!({"n": m.rows, "value": field.format(v), "bruteforce": check.map(|r| field.format(r)), "arcs": st.arcs}))
        }
        Command::Setpart(a) => {
            let fam = SetFamily::from_text(&read(&a.input)?)?;
            let prov = provider(&a.tri.dec)?;
            let r = counting::count_set_partitions(field, &fam, a.mode.into(), tri_opts(&a.tri), prov.as_ref())?;
            let check = if fam.members.len() <= 24 { Some(field.from_u64(counting::setpart_bruteforce(&fam)?)) } else { None };
            let params = json!({"in": a.input, "mode": Method::from(a.mode).to_string(), "field": field.to_string()});
            let values = json!({"n": fam.n, "m": fam.members.len(), "value": field.format(r.value), "residue_only": r.residue_only, "bruteforce": check.map(|c| field.format(c)), "arcs": r.stats.arcs});
            ("setpart".into(), params, ok(check.is_none_or(|c| c == r.value)), values)
        }
        Command::Sieve(s) => {
            let (name, a) = match s {
                SieveCmd::Kpath(a) => ("kpath", a),
                SieveCmd::Matroid3(a) => ("matroid3", a),
                SieveCmd::Longcycle(a) => ("longcycle", a),
            };
            let text = read(&a.graph)?;
            let opts = SieveOptions {
                trials: a.trials,
                method: a.method.map(Method::from),
                field: common.field.unwrap_or(sieving::DEFAULT_FIELD),
                ..SieveOptions::default()
            };
            let out = match s {
                SieveCmd::Kpath(_) => sieving::kpath_detect(&Graph::from_text(&text)?, a.k, &mut rng, &opts)?,
                SieveCmd::Matroid3(_) => sieving::threedm_detect(&Triples::from_text(&text)?, a.k, &mut rng, &opts)?,
                SieveCmd::Longcycle(_) => sieving::longcycle_detect(&Graph::from_text(&text)?, a.k, &mut rng, &opts)?,
            };
            let params = json!({"graph": a.graph, "k": a.k, "trials": a.trials, "method": a.method.map(|m| Method::from(m).to_string()), "field": opts.field.to_string()});
            let verdict = if out.found { Verdict::Ok } else { Verdict::False };
            (format!("sieve {name}"), params, verdict, serde_json::to_value(&out).unwrap())
        }
        Command::Matchcon(m) => match m {
            MatchconCmd::VerifyBasis { q } => {
                let r = matchcon::verify_basis_identity(*q)?;
                let cut = matchcon::cut_observation(*q);
                let values = json!({"pairs": r.pairs, "counterexample": r.counterexample, "cut_observation": cut});
                ("matchcon verify-basis".into(), json!({"q": q}), ok(r.ok() && cut), values)
            }
            MatchconCmd::VerifyFac { q, b } => {
                let r = matchcon::verify_factorization(*q, *b)?;
                ("matchcon verify-fac".into(), json!({"q": q, "b": b}), ok(r.ok()), serde_json::to_value(&r).unwrap())
            }
            MatchconCmd::VerifyJoin { graph, td, weights } => {
                let g = Graph::from_text(&read(graph)?)?;
                let t = NiceTreeDecomposition::from_text(&read(td)?)?;
                let w = weights.clone().unwrap_or_else(|| matchcon::random_weights(&g, &mut rng));
                let r = matchcon::verify_join(&g, &t, &w)?;
                let params = json!({"graph": graph, "td": td, "weights": w});
                ("matchcon verify-join".into(), params, ok(r.ok()), serde_json::to_value(&r).unwrap())
            }
        },
        Command::Circuit(c) => match c {
            CircuitCmd::Eval { circuit, set } => {
                let c = Circuit::from_text(&read(circuit)?)?;
                let mut fixed = std::collections::HashMap::new();
                for s in set {
                    let (n, v) = s.split_once('=').ok_or_else(|| Error::InvalidSpec(format!("expected name=value, got {s:?}")))?;
                    let n: Name = n.trim().parse().map_err(Error::InvalidSpec)?;
                    fixed.insert(n, c.field.parse_value(v.trim())?);
                }
                // random values in input order, so the seed alone fixes them
                let mut assign = fixed.clone();
                for n in slot_vars(&c, None) {
                    assign.entry(n).or_insert_with(|| c.field.random(&mut rng, false));
                }
                let out = c.evaluate(&assign)?;
                let shown: std::collections::BTreeMap<String, String> = assign.iter().map(|(n, v)| (n.to_string(), c.field.format(*v))).collect();
                let values = json!({"outputs": out.iter().map(|v| c.field.format(*v)).collect::<Vec<_>>(), "assignment": shown});
                ("circuit eval".into(), json!({"circuit": circuit}), Verdict::Ok, values)
            }
            CircuitCmd::Homogenize { circuit, d, vars, out } => {
                let c = Circuit::from_text(&read(circuit)?)?;
                let slot = *vars;
                let h = homogenize(&c, *d, &|n: &Name| slot.is_none_or(|s| n.slot() == Some(s)))?;
                let written = write_out(out, &h.circuit.to_text())?;
                let values = json!({"size_in": c.size(), "size_out": h.circuit.size(), "outputs": h.circuit.outputs.len(), "out": written});
                ("circuit homogenize".into(), json!({"circuit": circuit, "d": d, "vars": vars}), Verdict::Ok, values)
            }
            CircuitCmd::Grad { circuit, wrt, out } => {
                let c = Circuit::from_text(&read(circuit)?)?;
                let names = slot_vars(&c, *wrt);
                let g = baur_strassen(&c, &names)?;
                let written = write_out(out, &g.to_text())?;
                let values = json!({"size_in": c.size(), "size_out": g.size(), "wrt": names.iter().map(|n| n.to_string()).collect::<Vec<_>>(), "out": written});
                ("circuit grad".into(), json!({"circuit": circuit, "wrt": wrt}), Verdict::Ok, values)
            }
            CircuitCmd::Stats { circuit } => {
                let c = Circuit::from_text(&read(circuit)?)?;
                ("circuit stats".into(), json!({"circuit": circuit}), Verdict::Ok, serde_json::to_value(c.stats()).unwrap())
            }
        },
        Command::Steinitz(s) => match s {
            SteinitzCmd::Perm { input } => {
                let f = VectorFamily::from_text(&read(input)?)?;
                let p = steinitz_permutation(&f)?;
                let d = f.get(0).len();
                let within = p.bound <= Q::from_integer(d as i64);
                let values = json!({"perm": p.perm, "bound": q_str(&p.bound), "within_d": within});
                ("steinitz perm".into(), json!({"in": input}), ok(within), values)
            }
            SteinitzCmd::Partition { input, sizes } => {
                let f = VectorFamily::from_text(&read(input)?)?;
                let p = concentration_partition(&f, sizes)?;
                let d = f.get(0).len();
                let values = json!({
                    "groups": p.groups,
                    "deviation": p.deviation.iter().map(q_str).collect::<Vec<_>>(),
                    "steinitz_bound": q_str(&p.steinitz_bound),
                    "within_guarantee": p.within_guarantee(d),
                });
                ("steinitz partition".into(), json!({"in": input, "sizes": sizes}), ok(p.within_guarantee(d)), values)
            }
        },
    })
}

fn fresh_seed() -> u64 {
    let t = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_nanos()).unwrap_or(0);
    (t as u64) ^ (std::process::id() as u64).rotate_left(32)
}

fn human(r: &RunReport) -> String {
    let mut s = format!("{}: {:?}\nseed: {}\n", r.command, r.verdict, r.seed).to_lowercase();
    if let Value::Object(m) = &r.values {
        for (k, v) in m {
            s += &format!("{k}: {v}\n");
        }
    }
    s + &format!("time: {:.1} ms\n", r.wall_ms)
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            return if code == EXIT_OK {
                Outcome { code, report: None, stdout: text, stderr: String::new() }
            } else {
                Outcome { code, report: None, stdout: String::new(), stderr: text }
            };
        }
    };
    let seed = cli.common.seed.unwrap_or_else(fresh_seed);
    let start = Instant::now();
    match dispatch(&cli.command, &cli.common, seed) {
        Ok((command, parameters, verdict, values)) => {
            let report = RunReport { command, parameters, seed, verdict, values, wall_ms: start.elapsed().as_secs_f64() * 1e3 };
            let stdout = if cli.common.json { serde_json::to_string_pretty(&report).unwrap() + "\n" } else { human(&report) };
            Outcome { code: verdict.exit_code(), report: Some(report), stdout, stderr: String::new() }
        }
        Err(e) => Outcome { code: EXIT_USAGE, report: None, stdout: String::new(), stderr: format!("error: {e}\n(seed {seed})\n") },
    }
}
