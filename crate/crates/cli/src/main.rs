use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;
use xpview::bench::{bench_grid, BenchReport};
use xpview::dag::{parse_dag, unfold, ViewSet};
use xpview::eval::{eval_plan, eval_tree_pattern, materialize_all};
use xpview::interleave::{dag_contained, interleavings_capped, union_free_oracle, DEFAULT_CAP};
use xpview::mapping::{minimize, tree_contains};
use xpview::nested::nested_rewrite;
use xpview::rewrite::{all_rewrites, rewrite, Mode, RewriteOptions, RewritePlan};
use xpview::rules::apply_rules;
use xpview::workload::{generate_workload, parse_category, GenConfig};
use xpview::xml::XmlTree;
use xpview::{parse, Dialect, Pattern};

#[derive(Parser)]
#[command(name = "xpview", version, about = "Rewrite XPath queries using intersections of materialized views")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Expression arguments are read from a file when one exists at that path,
/// from stdin when `-`, and taken literally otherwise.
#[derive(Subcommand)]
enum Cmd {
    /// Parse an expression and print its syntax tree as JSON.
    Parse {
        expr: String,
        #[arg(long, value_enum, default_value_t = DialectArg::Xpint)]
        dialect: DialectArg,
    },
    /// Parse an expression and print it back in canonical form.
    Print {
        expr: String,
        #[arg(long, value_enum, default_value_t = DialectArg::Xpint)]
        dialect: DialectArg,
    },
    /// Decide whether the first expression is contained in the second.
    Contains { left: String, right: String },
    /// Decide whether two expressions are equivalent.
    Equiv { left: String, right: String },
    /// Print the minimal equivalent tree pattern.
    Minimize { expr: String },
    /// List the interleavings of an intersection.
    Interleave {
        expr: String,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
        /// Print only how many there are.
        #[arg(long)]
        count: bool,
    },
    /// Print the interleaving equivalent to an intersection, if any.
    UnionFree { expr: String },
    /// Run the rewrite rules on an intersection.
    ApplyRules {
        expr: String,
        /// Print the fired rules as JSON.
        #[arg(long)]
        trace: bool,
    },
    /// Rewrite a query using a set of views.
    Rewrite(RewriteArgs),
    /// Evaluate a query over an XML document, or a plan over the views
    /// materialized from it.
    Eval {
        #[arg(long)]
        doc: String,
        #[arg(long, conflicts_with = "plan")]
        query: Option<String>,
        #[arg(long, requires = "views")]
        plan: Option<String>,
        #[arg(long)]
        views: Option<String>,
    },
    /// Generate a benchmark workload.
    Generate {
        #[command(flatten)]
        gen: GenArgs,
        /// Directory receiving document.xml, query.xp, views.txt and useful.txt.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Time rewriting and evaluation over generated workloads.
    Bench(BenchArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum DialectArg {
    Xp,
    Xpcap,
    Xpint,
}

impl From<DialectArg> for Dialect {
    fn from(d: DialectArg) -> Dialect {
        match d {
            DialectArg::Xp => Dialect::Xp,
            DialectArg::Xpcap => Dialect::XpCap,
            DialectArg::Xpint => Dialect::XpInt,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
    Xpath,
}

#[derive(Args)]
struct RewriteArgs {
    #[arg(long)]
    query: String,
    /// File of `name = expression` lines.
    #[arg(long)]
    views: String,
    /// Accept a prefix only when the rules produce a tree.
    #[arg(long, conflicts_with_all = ["all", "nested"])]
    efficient: bool,
    /// Every plan, over subsets of the applicable views.
    #[arg(long, conflicts_with = "nested")]
    all: bool,
    /// Nested intersections.
    #[arg(long)]
    nested: bool,
    /// File of key target paths, one per line; only prefixes contained in
    /// one of them are tried.
    #[arg(long)]
    keys: Option<String>,
    #[arg(long, default_value_t = 8)]
    max_views: usize,
    /// Try the views sharing the root token of the prefix first.
    #[arg(long)]
    akin_first: bool,
    #[arg(long, value_enum, default_value_t = OutFormat::Json)]
    out: OutFormat,
}

#[derive(Args, Clone)]
struct GenArgs {
    /// File of `key = value` lines.
    #[arg(long)]
    config: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    main_branch_size: Option<usize>,
    /// es, slashslash or full.
    #[arg(long)]
    category: Option<String>,
    #[arg(long)]
    view_set_size: Option<usize>,
    #[arg(long)]
    useful_ratio: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum BenchFormat {
    Json,
    Csv,
    Table,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Efficient,
    Full,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    gen: GenArgs,
    /// Main-branch sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 7, 9])]
    sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = ["es".to_string(), "slashslash".to_string(), "full".to_string()])]
    categories: Vec<String>,
    /// View-set sizes.
    #[arg(long, value_delimiter = ',', default_values_t = [40usize, 80, 160, 320, 640])]
    views: Vec<usize>,
    /// Queries per (size, category, view-set size).
    #[arg(long, default_value_t = 10)]
    queries: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Efficient)]
    mode: ModeArg,
    #[arg(long, value_enum, default_value_t = BenchFormat::Table)]
    format: BenchFormat,
    /// Worker threads; each case runs alone on its thread.
    #[arg(long, default_value_t = 1)]
    parallel: usize,
}

/// An input error, reported with exit code 2.
struct InputError(anyhow::Error);

/// Successful command: text for stdout and whether the decision was positive.
struct Outcome {
    text: String,
    positive: bool,
}

fn ok(text: impl Into<String>) -> Outcome {
    Outcome { text: text.into(), positive: true }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(o) => {
            if !o.text.is_empty() {
                // a closed pipe downstream is not an error
                let _ = writeln!(std::io::stdout().lock(), "{}", o.text.trim_end());
            }
            if o.positive {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(InputError(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn input(arg: &str) -> Result<String> {
    if arg == "-" {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        return Ok(s.trim().to_string());
    }
    let p = Path::new(arg);
    if p.is_file() {
        return Ok(std::fs::read_to_string(p).with_context(|| format!("reading {arg}"))?.trim().to_string());
    }
    Ok(arg.to_string())
}

fn file(arg: &str) -> Result<String> {
    std::fs::read_to_string(arg).with_context(|| format!("reading {arg}"))
}

fn tree(arg: &str) -> Result<Pattern> {
    Ok(Pattern::parse(&input(arg)?)?)
}

/// An intersection over the base document; `None` when it is empty.
fn dag(arg: &str) -> Result<Option<Pattern>> {
    Ok(parse_dag(&input(arg)?)?)
}

fn show(p: &Pattern) -> String {
    if p.is_tree() {
        p.xpath()
    } else {
        p.to_json()
    }
}

fn contained(a: &Option<Pattern>, b: &Option<Pattern>) -> Result<bool> {
    Ok(match (a, b) {
        (None, _) => true,
        (Some(_), None) => false,
        (Some(a), Some(b)) if a.is_tree() && b.is_tree() => tree_contains(b, a),
        (Some(a), Some(b)) => dag_contained(a, b)?,
    })
}

fn run(cmd: Cmd) -> std::result::Result<Outcome, InputError> {
    execute(cmd).map_err(InputError)
}

fn execute(cmd: Cmd) -> Result<Outcome> {
    match cmd {
        Cmd::Parse { expr, dialect } => {
            let ast = parse(&input(&expr)?, dialect.into())?;
            Ok(ok(serde_json::to_string_pretty(&ast)?))
        }
        Cmd::Print { expr, dialect } => Ok(ok(parse(&input(&expr)?, dialect.into())?.to_string())),
        Cmd::Contains { left, right } => {
            let r = contained(&dag(&left)?, &dag(&right)?)?;
            Ok(Outcome { text: r.to_string(), positive: r })
        }
        Cmd::Equiv { left, right } => {
            let (a, b) = (dag(&left)?, dag(&right)?);
            let r = contained(&a, &b)? && contained(&b, &a)?;
            Ok(Outcome { text: r.to_string(), positive: r })
        }
        Cmd::Minimize { expr } => Ok(ok(minimize(&tree(&expr)?).xpath())),
        Cmd::Interleave { expr, cap, count } => {
            let Some(d) = dag(&expr)? else { return Ok(ok("0")) };
            let all = interleavings_capped(&d, cap)?;
            if count {
                return Ok(ok(all.len().to_string()));
            }
            Ok(ok(all.iter().map(|i| i.pattern.xpath()).collect::<Vec<_>>().join("\n")))
        }
        Cmd::UnionFree { expr } => {
            let Some(d) = dag(&expr)? else { bail!("the intersection is empty") };
            match union_free_oracle(&d)? {
                Some(t) => Ok(ok(t.xpath())),
                None => Ok(Outcome { text: "not union-free".into(), positive: false }),
            }
        }
        Cmd::ApplyRules { expr, trace } => {
            let Some(d) = dag(&expr)? else { bail!("the intersection is empty") };
            let (t, tr) = apply_rules(&d)?;
            if trace {
                let v = json!({ "result": show(&t), "isTree": t.is_tree(), "trace": tr.to_json() });
                Ok(ok(serde_json::to_string_pretty(&v)?))
            } else {
                Ok(ok(show(&t)))
            }
        }
        Cmd::Rewrite(a) => rewrite_cmd(a),
        Cmd::Eval { doc, query, plan, views } => {
            let t = XmlTree::parse_xml(&file(&doc)?)?;
            let result = match (query, plan) {
                (Some(q), None) => eval_tree_pattern(&tree(&q)?, &t),
                (None, Some(p)) => {
                    let vs = ViewSet::parse_text(&file(views.as_deref().unwrap())?)?;
                    let ast = parse(&input(&p)?, Dialect::XpInt)?;
                    eval_plan(&ast, &materialize_all(&vs, &t))?
                }
                _ => bail!("give either --query or --plan"),
            };
            let nodes: Vec<Value> = result.iter().map(|&x| json!({ "id": x, "label": t.label(x) })).collect();
            Ok(ok(serde_json::to_string_pretty(&json!({ "count": nodes.len(), "nodes": nodes }))?))
        }
        Cmd::Generate { gen, out_dir } => {
            let cfg = gen_config(&gen)?;
            let w = generate_workload(&cfg)?;
            match out_dir {
                Some(dir) => {
                    std::fs::create_dir_all(&dir)?;
                    std::fs::write(dir.join("document.xml"), w.doc.to_xml())?;
                    std::fs::write(dir.join("query.xp"), format!("{}\n", w.query.xpath()))?;
                    std::fs::write(dir.join("views.txt"), w.views.to_text())?;
                    std::fs::write(dir.join("useful.txt"), w.useful.join("\n") + "\n")?;
                    Ok(ok(format!("wrote workload for seed {} to {}", cfg.seed, dir.display())))
                }
                None => {
                    let views: serde_json::Map<String, Value> = w.views.iter().map(|(n, v)| (n.to_string(), Value::String(v.xpath()))).collect();
                    let v = json!({
                        "seed": cfg.seed,
                        "query": w.query.xpath(),
                        "views": views,
                        "useful": w.useful,
                        "docNodes": w.doc.len(),
                    });
                    Ok(ok(serde_json::to_string_pretty(&v)?))
                }
            }
        }
        Cmd::Bench(b) => bench_cmd(b),
    }
}

fn gen_config(g: &GenArgs) -> Result<GenConfig> {
    let mut cfg = match &g.config {
        Some(path) => GenConfig::from_kv(&file(path)?)?,
        None => GenConfig::default(),
    };
    if let Ok(s) = std::env::var("REWRITER_SEED") {
        cfg.seed = s.trim().parse().map_err(|_| anyhow!("REWRITER_SEED must be an integer, got `{s}`"))?;
    }
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    if let Some(n) = g.main_branch_size {
        cfg.main_branch_size = n;
    }
    if let Some(c) = &g.category {
        cfg.category = parse_category(c)?;
    }
    if let Some(n) = g.view_set_size {
        cfg.view_set_size = n;
    }
    if let Some(r) = g.useful_ratio {
        cfg.useful_ratio = r;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn plan_json(plan: &RewritePlan) -> Value {
    json!({
        "plan": plan.text(),
        "prefixIndex": plan.prefix_index,
        "views": plan.branches.iter().map(|b| b.view.clone()).collect::<Vec<_>>(),
        "candidates": plan.candidates,
        "ruleTrace": plan.trace.to_json(),
    })
}

fn rewrite_cmd(a: RewriteArgs) -> Result<Outcome> {
    let mut q = tree(&a.query)?;
    let views = ViewSet::parse_text(&file(&a.views)?)?;
    let keys = match &a.keys {
        Some(k) => Some(file(k)?.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(Pattern::parse).collect::<xpview::Result<Vec<_>>>()?),
        None => None,
    };
    let start = Instant::now();
    if a.all {
        let m = minimize(&q);
        if m.len() < q.len() {
            eprintln!("warning: the query is not minimal; rewriting {}", m.xpath());
            q = m;
        }
        let plans = all_rewrites(&q, &views, a.max_views)?;
        let ms = start.elapsed().as_secs_f64() * 1e3;
        let positive = !plans.is_empty();
        let text = match a.out {
            OutFormat::Xpath => plans.iter().map(|p| p.text()).collect::<Vec<_>>().join("\n"),
            OutFormat::Json => serde_json::to_string_pretty(&json!({
                "status": if positive { "rewritten" } else { "noRewriting" },
                "plans": plans.iter().map(plan_json).collect::<Vec<_>>(),
                "timings": { "rewriteMs": ms },
            }))?,
        };
        return Ok(Outcome { text, positive });
    }
    let result = if a.nested {
        nested_rewrite(&q, &views)
    } else {
        let opts = RewriteOptions {
            mode: if a.efficient { Mode::Efficient } else { Mode::Full },
            akin_first: a.akin_first,
            keys,
            ..Default::default()
        };
        rewrite(&q, &views, &opts)
    };
    let ms = start.elapsed().as_secs_f64() * 1e3;
    let (status, plan) = match result {
        Ok(Some(p)) => ("rewritten", Some(p)),
        Ok(None) => ("noRewriting", None),
        Err(xpview::Error::CapExceeded(n)) => {
            eprintln!("more than {n} rule applications or interleavings");
            ("capExceeded", None)
        }
        Err(e) => return Err(e.into()),
    };
    let positive = plan.is_some();
    let text = match a.out {
        OutFormat::Xpath => plan.as_ref().map(|p| p.text()).unwrap_or_default(),
        OutFormat::Json => {
            let mut v = json!({ "status": status, "plan": Value::Null, "prefixIndex": Value::Null, "ruleTrace": [], "timings": { "rewriteMs": ms } });
            if let Some(p) = &plan {
                v["plan"] = json!(p.text());
                v["prefixIndex"] = json!(p.prefix_index);
                v["views"] = json!(p.branches.iter().map(|b| b.view.clone()).collect::<Vec<_>>());
                v["ruleTrace"] = p.trace.to_json();
                if let Ok(Some(u)) = unfold(&p.ast, &views) {
                    v["unfold"] = json!(show(&u));
                }
            }
            serde_json::to_string_pretty(&v)?
        }
    };
    Ok(Outcome { text, positive })
}

fn bench_cmd(b: BenchArgs) -> Result<Outcome> {
    let base = gen_config(&b.gen)?;
    let cats = b.categories.iter().map(|c| parse_category(c)).collect::<xpview::Result<Vec<_>>>()?;
    let mode = match b.mode {
        ModeArg::Efficient => Mode::Efficient,
        ModeArg::Full => Mode::Full,
    };
    let mut grid = Vec::new();
    for &s in &b.sizes {
        for &c in &cats {
            for &n in &b.views {
                grid.push((s, c, n));
            }
        }
    }
    let run_one = |&(s, c, n): &(usize, xpview::fragment::FragmentClass, usize)| bench_grid(&base, &[s], &[c], &[n], b.queries, mode);
    let parts: Vec<xpview::Result<BenchReport>> = if b.parallel <= 1 {
        grid.iter().map(run_one).collect()
    } else {
        let chunk = grid.len().div_ceil(b.parallel).max(1);
        std::thread::scope(|scope| {
            let handles: Vec<_> = grid.chunks(chunk).map(|part| scope.spawn(move || part.iter().map(run_one).collect::<Vec<_>>())).collect();
            handles.into_iter().flat_map(|h| h.join().unwrap()).collect()
        })
    };
    let mut report = BenchReport::default();
    for p in parts {
        report.cases.extend(p?.cases);
    }
    let text = match b.format {
        BenchFormat::Json => report.to_json(),
        BenchFormat::Csv => report.to_csv(),
        BenchFormat::Table => report.to_table(),
    };
    Ok(ok(text))
}
