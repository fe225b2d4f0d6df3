//! `cantor`: field inspection, binomial reductions, refinement certificates,
//! canonical forms, homeomorphism tables and the rational obstruction.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use cantor_core::binomial::{search_rep, SearchOutcome, DEFAULT_N_MAX};
use cantor_core::cylinder::{Cylinder, CylinderMultiset};
use cantor_core::homeo::{
    build, check_stage, complement_field, export_table, verify_table, BuildOptions, Expansion, HomeoSetup, HomeoTable,
    StageReport, TableReport, CELL_FUEL,
};
use cantor_core::numberfield::{parse_rational, FieldElement, NumberField};
use cantor_core::refiner::sampling::{random_equal_sum_pair, SampleBounds};
use cantor_core::refiner::{
    canonical_form, canonicalize_pair, check_rational_obstruction, refine_partition, verify_certificate, Canonicalizer,
    Certificate, ObstructionOutcome, R4sCanon, RefineOptions, SelmerCanon, StrategyRegistry, AUTO, DEFAULT_MAX_DEPTH,
};
use cantor_core::{Error, Fuel, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[derive(Parser, Debug)]
#[command(
    name = "cantor",
    version,
    about = "Exact tools for Bernoulli measures on the Cantor space"
)]
struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Step budget for searches and rewriting (per cell for homeo-build).
    #[arg(long, global = true, env = "CANTOR_FUEL")]
    fuel: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Degree, irreducibility, isolating interval and applicable strategies.
    FieldInfo(FieldArgs),
    /// Search binomial representations of `s` over `r` and of `r` over `s`.
    ReduceSearch(ReduceArgs),
    /// Refinement certificate for a partition of a cylinder size.
    Refine(RefineArgs),
    /// Canonical form of a multiset, a pair, or random pairs.
    Canonical(CanonicalArgs),
    /// Back-and-forth clopen bijection table between mu(r) and mu(s).
    HomeoBuild(HomeoArgs),
    /// Re-validate a certificate or table file.
    VerifyCert(VerifyArgs),
    /// Bounded search for tree refinements with a rational parameter.
    RationalCheck(RationalArgs),
}

#[derive(Args, Debug)]
struct FieldArgs {
    /// Minimal polynomial, e.g. `x^4+x-1`.
    #[arg(long)]
    minpoly: String,
    /// Isolating interval `lo,hi` (default `0,1`).
    #[arg(long, value_parser = parse_interval)]
    root: Option<(String, String)>,
}

impl FieldArgs {
    fn field(&self) -> Result<NumberField> {
        field_from(&self.minpoly, self.root.as_ref())
    }
}

#[derive(Args, Debug)]
struct ReduceArgs {
    /// Minimal polynomial of `r`.
    #[arg(long)]
    r: String,
    #[arg(long, value_parser = parse_interval)]
    root: Option<(String, String)>,
    /// `s` as `r^m` or `1-r`.
    #[arg(long, default_value = "r^2", value_parser = parse_derived)]
    s: Derived,
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: u32,
}

#[derive(Args, Debug)]
struct RefineArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Cylinder size `a,b` to refine.
    #[arg(long, default_value = "0,0", value_parser = parse_cylinder)]
    cyl: Cylinder,
    /// Parts `a,b;a,b*k;...`.
    #[arg(long, value_parser = parse_multiset)]
    parts: CylinderMultiset,
    #[arg(long, default_value = AUTO)]
    strategy: String,
    /// Depth bound of the generic search.
    #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
    depth: u32,
    /// Write the certificate here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CanonicalArgs {
    #[command(flatten)]
    field: FieldArgs,
    /// Multiset `a,b;a,b*k;...`.
    #[arg(long, value_parser = parse_multiset, required_unless_present = "random")]
    parts: Option<CylinderMultiset>,
    /// Second multiset of the same sum; both are brought to a shared window.
    #[arg(long, value_parser = parse_multiset)]
    with: Option<CylinderMultiset>,
    /// `selmer` or `r4s` (default: whichever accepts the field).
    #[arg(long)]
    strategy: Option<String>,
    /// Window; by default the smallest admissible one.
    #[arg(long)]
    k: Option<u32>,
    /// Check this many random equal-sum pairs instead.
    #[arg(long, conflicts_with_all = ["parts", "with"])]
    random: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct HomeoArgs {
    /// Minimal polynomial of `r`.
    #[arg(long)]
    r: String,
    #[arg(long, value_parser = parse_interval)]
    root: Option<(String, String)>,
    /// `s` as `r^m` or `1-r`.
    #[arg(long, default_value = "r^2", value_parser = parse_derived)]
    s: Derived,
    /// Number of steps after stage 0.
    #[arg(long, default_value_t = 6)]
    depth: usize,
    /// Largest `n` for the binomial representations.
    #[arg(long, default_value_t = DEFAULT_N_MAX)]
    nmax: u32,
    /// `factored`, `joint` or `canonical`.
    #[arg(long, default_value = "factored", value_parser = parse_expansion)]
    expansion: Expansion,
    /// Refinement strategy for `--expansion canonical`.
    #[arg(long, default_value = AUTO)]
    strategy: String,
    /// Write the table here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Certificate or table JSON file.
    path: PathBuf,
}

#[derive(Args, Debug)]
struct RationalArgs {
    /// Rational parameter, e.g. `1/3`.
    #[arg(long, value_parser = parse_rational_arg)]
    r: String,
    #[arg(long, value_parser = parse_multiset)]
    parts: CylinderMultiset,
    #[arg(long, default_value_t = 10)]
    depth: u32,
}

#[derive(Clone, Copy, Debug)]
enum Derived {
    Power(u32),
    Complement,
}

fn parse_interval(s: &str) -> std::result::Result<(String, String), String> {
    let (lo, hi) = s.split_once(',').ok_or("expected `lo,hi`")?;
    for v in [lo, hi] {
        parse_rational(v).map_err(|e| e.to_string())?;
    }
    Ok((lo.trim().to_string(), hi.trim().to_string()))
}

fn parse_cylinder(s: &str) -> std::result::Result<Cylinder, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_multiset(s: &str) -> std::result::Result<CylinderMultiset, String> {
    let ms: CylinderMultiset = s.parse().map_err(|e: Error| e.to_string())?;
    if ms.is_empty() {
        return Err("empty multiset".into());
    }
    Ok(ms)
}

fn parse_rational_arg(s: &str) -> std::result::Result<String, String> {
    parse_rational(s).map_err(|e| e.to_string())?;
    Ok(s.trim().to_string())
}

fn parse_expansion(s: &str) -> std::result::Result<Expansion, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_derived(s: &str) -> std::result::Result<Derived, String> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
    match t.as_str() {
        "r" => Ok(Derived::Power(1)),
        "1-r" => Ok(Derived::Complement),
        _ => {
            let m = t
                .strip_prefix("r^")
                .and_then(|e| e.parse::<u32>().ok())
                .filter(|&m| m >= 1)
                .ok_or_else(|| format!("`{s}`: expected r, r^m (m >= 1) or 1-r"))?;
            Ok(Derived::Power(m))
        }
    }
}

fn field_from(minpoly: &str, root: Option<&(String, String)>) -> Result<NumberField> {
    match root {
        Some((lo, hi)) => NumberField::parse(minpoly, lo, hi),
        None => NumberField::parse(minpoly, "0", "1"),
    }
}

/// `s` inside the field of `r`, with the field of `s`.
fn derived(r: &NumberField, s: Derived) -> Result<(NumberField, FieldElement)> {
    match s {
        Derived::Power(m) => {
            let (field, _) = r.power_subfield(m)?;
            Ok((field, r.pow(&r.generator(), m as u64)))
        }
        Derived::Complement => Ok((complement_field(r)?, r.one().sub(&r.generator()))),
    }
}

struct Ctx {
    json: bool,
    fuel: u64,
    explicit_fuel: Option<u64>,
}

impl Ctx {
    fn fuel(&self) -> Fuel {
        Fuel::new(self.fuel)
    }

    fn emit(&self, value: &Value, text: &str) {
        if self.json {
            out(&format!("{value}\n"));
        } else {
            out(text);
        }
    }
}

/// Writes to standard output; a closed pipe is not an error.
fn out(s: &str) {
    let mut stdout = std::io::stdout().lock();
    let _ = stdout.write_all(s.as_bytes()).and_then(|()| stdout.flush());
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let ctx = Ctx {
        json: cli.json,
        fuel: cli.fuel.unwrap_or(Fuel::DEFAULT),
        explicit_fuel: cli.fuel,
    };
    match run(&ctx, cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            if ctx.json {
                eprintln!("{}", json!({"error": e.code(), "message": e.to_string()}));
            } else {
                eprintln!("error[{}]: {e}", e.code());
            }
            ExitCode::from(1)
        }
    }
}

fn run(ctx: &Ctx, cmd: Command) -> Result<()> {
    match cmd {
        Command::FieldInfo(a) => field_info(ctx, &a),
        Command::ReduceSearch(a) => reduce_search(ctx, &a),
        Command::Refine(a) => refine(ctx, &a),
        Command::Canonical(a) => canonical(ctx, &a),
        Command::HomeoBuild(a) => homeo_build(ctx, &a),
        Command::VerifyCert(a) => verify(ctx, &a),
        Command::RationalCheck(a) => rational_check(ctx, &a),
    }
}

fn field_info(ctx: &Ctx, a: &FieldArgs) -> Result<()> {
    let f = a.field()?;
    let reg = StrategyRegistry::with_defaults();
    let strategies: Vec<&str> = reg
        .iter()
        .filter(|s| s.check_field(&f).is_ok())
        .map(|s| s.name())
        .collect();
    let spec = f.spec();
    let v = json!({
        "minpoly": spec.minpoly,
        "degree": f.degree(),
        "irreducibility": f.irreducibility(),
        "interval": spec.interval,
        "approx": f.root_approx(),
        "selmer_exponent": f.selmer_exponent(),
        "strategies": strategies,
    });
    let text = format!(
        "minpoly      {}\ndegree       {}\nirreducible  {:?}\ninterval     [{}, {}]\nroot         ~{:.12}\nstrategies   {}\n",
        spec.minpoly,
        f.degree(),
        f.irreducibility(),
        spec.interval[0],
        spec.interval[1],
        f.root_approx(),
        strategies.join(", ")
    );
    ctx.emit(&v, &text);
    Ok(())
}

fn rep_value(o: &SearchOutcome) -> Value {
    match o {
        SearchOutcome::Found(rep) => serde_json::to_value(rep).expect("reps serialize"),
        SearchOutcome::NotFound { .. } => Value::Null,
    }
}

fn rep_text(o: &SearchOutcome) -> String {
    match o {
        SearchOutcome::Found(rep) => rep.to_string(),
        SearchOutcome::NotFound { n_max } => format!("not found up to n={n_max} (inconclusive)"),
    }
}

fn reduce_search(ctx: &Ctx, a: &ReduceArgs) -> Result<()> {
    let r = field_from(&a.r, a.root.as_ref())?;
    let (s, image) = derived(&r, a.s)?;
    let fuel = ctx.fuel();
    let forward = search_rep(&image, &r, a.nmax, &fuel)?;
    let emb = cantor_core::numberfield::FieldEmbedding::new(&r, &s, &image)?;
    let r_in_s = emb.preimage(&r.generator()).ok_or(Error::NotAGenerator)?;
    let backward = search_rep(&r_in_s, &s, a.nmax, &fuel)?;
    let v = json!({
        "r_field": r.spec(),
        "s_field": s.spec(),
        "s_over_r": rep_value(&forward),
        "r_over_s": rep_value(&backward),
    });
    let text = format!("s over r: {}\nr over s: {}\n", rep_text(&forward), rep_text(&backward));
    ctx.emit(&v, &text);
    Ok(())
}

fn refine(ctx: &Ctx, a: &RefineArgs) -> Result<()> {
    let f = a.field.field()?;
    let reg = StrategyRegistry::with_defaults();
    let fuel = ctx.fuel();
    let cert = refine_partition(
        &reg,
        &f,
        a.cyl,
        &a.parts,
        &a.strategy,
        &RefineOptions { max_depth: a.depth },
        &fuel,
    )?;
    let body = cert.to_json();
    match &a.out {
        None => out(&format!("{body}\n")),
        Some(path) => {
            write_file(path, &body)?;
            let v = json!({
                "out": path,
                "strategy": cert.strategy,
                "leaves": cert.partition.leaves.len(),
                "depth": cert.partition.depth(),
            });
            let text = format!(
                "certificate ({}, {} leaves, depth {}) written to {}\n",
                cert.strategy,
                cert.partition.leaves.len(),
                cert.partition.depth(),
                path.display()
            );
            ctx.emit(&v, &text);
        }
    }
    Ok(())
}

fn canonicalizer(f: &NumberField, name: Option<&str>) -> Result<&'static dyn Canonicalizer> {
    let all: [&'static dyn Canonicalizer; 2] = [&SelmerCanon, &R4sCanon];
    match name {
        Some(n) => {
            let c = all
                .into_iter()
                .find(|c| c.name() == n)
                .ok_or_else(|| Error::UnknownStrategy(n.to_string()))?;
            c.check_field(f)?;
            Ok(c)
        }
        None => all
            .into_iter()
            .find(|c| c.check_field(f).is_ok())
            .ok_or_else(|| Error::StrategyInapplicable {
                strategy: AUTO.into(),
                reason: "no canonicalizer accepts this field".into(),
            }),
    }
}

fn canonical(ctx: &Ctx, a: &CanonicalArgs) -> Result<()> {
    let f = a.field.field()?;
    let canon = canonicalizer(&f, a.strategy.as_deref())?;
    let fuel = ctx.fuel();
    if let Some(count) = a.random {
        let mut rng = ChaCha8Rng::seed_from_u64(a.seed);
        let mut agreed = 0;
        let mut validated = 0;
        for _ in 0..count {
            let (x, y) = random_equal_sum_pair(&mut rng, &f, SampleBounds::default())?;
            let pair = canonicalize_pair(canon, &f, &x, &y, &fuel, true)?;
            validated += pair.validated;
            if pair.agree() {
                agreed += 1;
            }
        }
        let v = json!({"strategy": canon.name(), "seed": a.seed, "pairs": count, "agreed": agreed, "validated_moves": validated});
        let text = format!(
            "{agreed}/{count} random pairs agree ({}, seed {}, {validated} move realizations validated)\n",
            canon.name(),
            a.seed
        );
        ctx.emit(&v, &text);
        if agreed != count {
            return Err(Error::Malformed(format!("{} pairs disagree", count - agreed)));
        }
        return Ok(());
    }
    let parts = a.parts.as_ref().expect("clap requires parts");
    match &a.with {
        None => {
            let (form, k) = canonical_form(canon, &f, parts, a.k, &fuel, false)?;
            let v = json!({"strategy": canon.name(), "k": k, "form": form});
            ctx.emit(&v, &format!("{form} (k = {k})\n"));
        }
        Some(other) => {
            if parts.sum(&f) != other.sum(&f) {
                return Err(Error::SumMismatch);
            }
            let pair = canonicalize_pair(canon, &f, parts, other, &fuel, true)?;
            let v = json!({"strategy": canon.name(), "k": pair.k, "a": pair.a, "b": pair.b, "agree": pair.agree()});
            let text = format!(
                "{}\n{}\n{} (k = {})\n",
                pair.a,
                pair.b,
                if pair.agree() { "agree" } else { "differ" },
                pair.k
            );
            ctx.emit(&v, &text);
        }
    }
    Ok(())
}

fn homeo_build(ctx: &Ctx, a: &HomeoArgs) -> Result<()> {
    let r = field_from(&a.r, a.root.as_ref())?;
    let (s, image) = derived(&r, a.s)?;
    let setup = HomeoSetup::new(r, s, image, a.nmax, &ctx.fuel())?;
    let reg = StrategyRegistry::with_defaults();
    let opts = BuildOptions {
        expansion: a.expansion,
        strategy: a.strategy.clone(),
        fuel_per_cell: ctx.explicit_fuel.unwrap_or(CELL_FUEL),
        ..BuildOptions::default()
    };
    let stages = build(&setup, a.depth, &reg, &opts)?;
    let mut reports: Vec<StageReport> = Vec::new();
    for (i, st) in stages.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &stages[j]);
        reports.push(check_stage(&setup, prev, st)?);
    }
    let table = export_table(&setup, &stages)?;
    let checked = verify_table(&table)?;
    let body = table.to_json();
    match &a.out {
        None => out(&format!("{body}\n")),
        Some(path) => {
            write_file(path, &body)?;
            let v = json!({"out": path, "stages": reports, "table": checked});
            ctx.emit(&v, &stage_text(&reports, &checked, path));
        }
    }
    Ok(())
}

fn stage_text(reports: &[StageReport], table: &TableReport, path: &std::path::Path) -> String {
    let mut s = String::from("stage  cells  P-addr  Q-addr  maxlen-P  maxlen-Q\n");
    for r in reports {
        s.push_str(&format!(
            "{:>5}  {:>5}  {:>6}  {:>6}  {:>8}  {:>8}\n",
            r.index, r.cells, r.p_addresses, r.q_addresses, r.max_len_p, r.max_len_q
        ));
    }
    s.push_str(&format!(
        "all stage invariants hold; table of {} rows verified and written to {}\n",
        table.rows,
        path.display()
    ));
    s
}

fn verify(ctx: &Ctx, a: &VerifyArgs) -> Result<()> {
    let body = fs::read_to_string(&a.path).map_err(|e| Error::Malformed(format!("{}: {e}", a.path.display())))?;
    let raw: Value = serde_json::from_str(&body).map_err(|e| Error::Malformed(format!("JSON: {e}")))?;
    if raw.get("rows").is_some() {
        let table = HomeoTable::from_json(&body)?;
        let rep = verify_table(&table)?;
        let v = json!({"kind": "table", "valid": true, "report": rep});
        let text = format!(
            "table valid: {} rows, {} source and {} target addresses\n",
            rep.rows, rep.src_addresses, rep.dst_addresses
        );
        ctx.emit(&v, &text);
        return Ok(());
    }
    let cert = Certificate::from_json(&body)?;
    let rep = verify_certificate(&cert, &ctx.fuel())?;
    let v = json!({"kind": "certificate", "valid": true, "report": rep});
    let text = format!(
        "certificate valid: {} leaves in {} parts, depth {}, {} + {} moves replayed\n",
        rep.leaves, rep.parts, rep.depth, rep.moves_a, rep.moves_b
    );
    ctx.emit(&v, &text);
    Ok(())
}

fn rational_check(ctx: &Ctx, a: &RationalArgs) -> Result<()> {
    let r = parse_rational(&a.r)?;
    let report = check_rational_obstruction(&r, &a.parts, a.depth, &ctx.fuel())?;
    let mut text = match &report.outcome {
        ObstructionOutcome::NoTreeRefinementUpTo { depth } => format!("no tree refinement up to depth {depth}\n"),
        ObstructionOutcome::Refinement { depth, partition, .. } => {
            format!(
                "tree refinement at depth {depth} with {} leaves\n",
                partition.leaves.len()
            )
        }
    };
    let ol = &report.ones_leaf;
    text.push_str(&format!(
        "one-leaf property (exactly one all-ones leaf) {} for all {} tree partitions of depth <= {}\n",
        if ol.holds { "holds" } else { "FAILS" },
        ol.partitions,
        ol.depth
    ));
    let v = serde_json::to_value(&report).expect("reports serialize");
    ctx.emit(&v, &text);
    Ok(())
}

fn write_file(path: &std::path::Path, body: &str) -> Result<()> {
    fs::write(path, format!("{body}\n")).map_err(|e| Error::Malformed(format!("{}: {e}", path.display())))
}
