//! `kummerdens`: exact and empirical densities of primes for which a rational
//! point on an elliptic curve reduces to a point of order coprime to m.
//!
//! Subcommands: `measure` (kernel-class Haar measures), `density` (exact
//! per-prime and composite densities), `empirical` (prime sweep), `arboreal`
//! (finite-level group oracles), and `verify-paper` (one-shot reproduction of
//! the reference tables).
//!
//! Exit codes: 0 ok, 1 check or runtime failure, 2 usage error.

mod verify;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use kummerdens_core::arboreal::{ArborealLevelGroup, KummerAssumptions, MatrixPart};
use kummerdens_core::characters::{Sign, ZClass};
use kummerdens_core::classmeasure::{
    measure_class, measure_class_char, ClassConstraint, ClassMeasureTable,
};
use kummerdens_core::density::{dens_serre_composite, SerreDensityInput};
use kummerdens_core::empirical::{estimate_density, q_scalar_mul, CurveConfig, QPoint};
use kummerdens_core::rational::{
    decimal_string, parse_rational, percent_string, ExactRational, RationalJson,
};
use kummerdens_core::QuadraticFieldData;
use std::path::PathBuf;
use std::process::ExitCode;

const ENUM_BOUND_ENV: &str = "KUMMERDENS_ENUM_BOUND";

#[derive(Parser)]
#[command(
    name = "kummerdens",
    version,
    about = "Exact densities of reduction orders coprime to m"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Cap on worker threads for parallel sweeps and enumerations.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Subcommand)]
enum Command {
    /// Haar measure of a kernel-class set, optionally character-restricted.
    Measure(MeasureArgs),
    /// Exact density for square-free m (per-prime closed forms, overrides,
    /// and the discriminant entanglement when a curve is given).
    Density(DensityArgs),
    /// Empirical density by prime sweep with exact point orders.
    Empirical(EmpiricalArgs),
    /// Finite-level arboreal group oracle: order, density, Kummer constant.
    Arboreal(ArborealArgs),
    /// Re-derive every reference value and compare against the golden file.
    VerifyPaper(VerifyArgs),
}

#[derive(Args)]
struct MeasureArgs {
    #[arg(long)]
    ell: u64,
    #[arg(long)]
    a: Option<u32>,
    #[arg(long)]
    b: Option<u32>,
    /// Restrict to ε_ℓ = ±1 (odd ℓ).
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    /// Restrict to matrices fixing √z, z ∈ {-1, 2, -2} (ℓ = 2).
    #[arg(long, allow_hyphen_values = true)]
    fixes: Option<i64>,
    /// Restrict to ψ = ±1 (ℓ = 2).
    #[arg(long, allow_hyphen_values = true)]
    psi: Option<String>,
    /// Emit the whole table for a ≤ max-a, b ≤ max-b instead of one entry.
    #[arg(long)]
    table: bool,
    #[arg(long, default_value_t = 4)]
    max_a: u32,
    #[arg(long, default_value_t = 4)]
    max_b: u32,
}

#[derive(Args)]
struct DensityArgs {
    /// Square-free modulus m.
    #[arg(long)]
    m: u64,
    /// Curve/point JSON; supplies the discriminant for entanglement.
    #[arg(long)]
    curve: Option<PathBuf>,
    /// Point multiple k: densities are computed for k·α.
    #[arg(long, default_value_t = 1)]
    mult: u64,
    /// Per-prime exponent override, e.g. --exp 2=1 (repeatable).
    #[arg(long = "exp", value_name = "ELL=E")]
    exponents: Vec<String>,
    /// Per-prime density override, e.g. --override 3=23/104 (repeatable).
    #[arg(long = "override", value_name = "ELL=NUM/DEN")]
    overrides: Vec<String>,
}

#[derive(Args)]
struct EmpiricalArgs {
    /// Curve/point JSON config.
    #[arg(long)]
    curve: PathBuf,
    #[arg(long)]
    m: u64,
    /// Point multiple k: the sweep runs on k·α.
    #[arg(long, default_value_t = 1)]
    mult: u64,
    /// Sweep all primes up to this bound.
    #[arg(long, default_value_t = 1_000_000)]
    limit: u64,
    /// Exact density to compare against, e.g. 253/2184.
    #[arg(long)]
    exact: Option<String>,
}

#[derive(Args)]
struct ArborealArgs {
    /// Group file (JSON element list or {"generators": [...]}).
    #[arg(long, conflicts_with_all = ["m", "level"])]
    group: Option<PathBuf>,
    /// Build the full group (ℤ/mⁿℤ)² ⋊ GL₂(ℤ/mⁿℤ) instead.
    #[arg(long)]
    m: Option<u64>,
    #[arg(long)]
    level: Option<u32>,
    /// Kummer torsion scale, e.g. --scale 2=1 (repeatable).
    #[arg(long = "scale", value_name = "ELL=K")]
    scales: Vec<String>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Skip the prime sweeps (exact checks only).
    #[arg(long)]
    skip_empirical: bool,
    /// Prime bound for the empirical checks.
    #[arg(long, default_value_t = 1_000_000)]
    limit: u64,
    /// Tolerance for empirical checks, in percentage points.
    #[arg(long, default_value = "0.03")]
    tolerance_pp: String,
    /// Alternate golden file (defaults to the embedded reference data).
    #[arg(long)]
    golden: Option<PathBuf>,
}

fn enum_bound() -> u64 {
    std::env::var(ENUM_BOUND_ENV)
        .ok()
        .and_then(|v| v.parse().ok())
        .unwrap_or(kummerdens_core::DEFAULT_ENUM_BOUND)
}

fn parse_sign(s: &str) -> Result<Sign> {
    Sign::parse(s).ok_or_else(|| anyhow!("expected +1 or -1, got {s:?}"))
}

fn parse_pair(s: &str) -> Result<(u64, &str)> {
    let (l, v) = s
        .split_once('=')
        .ok_or_else(|| anyhow!("expected ELL=VALUE, got {s:?}"))?;
    Ok((
        l.trim().parse().context("prime must be an integer")?,
        v.trim(),
    ))
}

fn constraint_from(args: &MeasureArgs) -> Result<Option<ClassConstraint>> {
    let mut out = None;
    let mut set = |c: ClassConstraint| -> Result<()> {
        if out.is_some() {
            bail!("at most one of --eps, --fixes, --psi may be given");
        }
        out = Some(c);
        Ok(())
    };
    if let Some(e) = &args.eps {
        set(ClassConstraint::Epsilon(parse_sign(e)?))?;
    }
    if let Some(z) = args.fixes {
        let z = ZClass::from_value(z).ok_or_else(|| anyhow!("--fixes expects -1, 2 or -2"))?;
        set(ClassConstraint::FixesSqrt { z, fixes: true })?;
    }
    if let Some(p) = &args.psi {
        set(ClassConstraint::Psi(parse_sign(p)?))?;
    }
    Ok(out)
}

fn cmd_measure(args: &MeasureArgs, format: Format) -> Result<()> {
    if !kummerdens_core::modmat::is_prime_u64(args.ell) {
        bail!("--ell must be prime, got {}", args.ell);
    }
    let constraint = constraint_from(args)?;
    if args.table {
        let table = match &constraint {
            None => ClassMeasureTable::build(args.ell, args.max_a, args.max_b),
            Some(c) => ClassMeasureTable::build_constrained(args.ell, args.max_a, args.max_b, c)?,
        };
        match format {
            Format::Json => println!("{}", table.to_json()),
            Format::Table => {
                for e in &table.entries {
                    let tag = e.constraint.as_deref().unwrap_or("");
                    println!(
                        "mu(M_{}({},{})) {}\t= {}/{}",
                        table.ell, e.a, e.b, tag, e.num, e.den
                    );
                }
            }
        }
        return Ok(());
    }
    let (a, b) = match (args.a, args.b) {
        (Some(a), Some(b)) => (a, b),
        _ => bail!("--a and --b are required unless --table is given"),
    };
    let class = measure_class(args.ell, a, b);
    let (value, ratio) = match &constraint {
        None => (class.clone(), None),
        Some(c) => {
            let v = measure_class_char(args.ell, a, b, c)?;
            let r = kummerdens_core::classmeasure::class_char_factor(args.ell, c, a, b)?;
            (v, Some(r))
        }
    };
    match format {
        Format::Table => {
            let tag = constraint
                .as_ref()
                .map(|c| format!(" ∩ {c}"))
                .unwrap_or_default();
            print!("mu(M_{}({a},{b}){tag}) = {value}", args.ell);
            if let Some(r) = &ratio {
                print!("  ({r} of class measure {class})");
            }
            println!();
        }
        Format::Json => {
            let j = serde_json::json!({
                "ell": args.ell,
                "a": a,
                "b": b,
                "constraint": constraint.as_ref().map(|c| c.to_string()),
                "num": value.numer().to_string(),
                "den": value.denom().to_string(),
                "decimal": decimal_string(&value, 10),
                "ratio": ratio.as_ref().map(RationalJson::from),
                "class": RationalJson::from(&class),
            });
            println!("{}", serde_json::to_string_pretty(&j)?);
        }
    }
    Ok(())
}

fn density_input(args: &DensityArgs) -> Result<(SerreDensityInput, Option<String>)> {
    let mut input = SerreDensityInput::new(args.m)
        .map_err(|e| anyhow!("{e}"))?
        .with_multiple(args.mult)
        .map_err(|e| anyhow!("{e}"))?;
    let mut label = None;
    if let Some(path) = &args.curve {
        let data =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = CurveConfig::from_json(&data).map_err(|e| anyhow!("{e}"))?;
        let (curve, _point) = cfg.build().map_err(|e| anyhow!("{e}"))?;
        label = cfg.label.clone();
        let disc = ExactRational::from_integer(curve.discriminant());
        let quadratic = QuadraticFieldData::new(&disc).map_err(|e| anyhow!("{e}"))?;
        input = input.with_quadratic(quadratic);
    }
    for e in &args.exponents {
        let (ell, v) = parse_pair(e)?;
        input = input.with_exponent(ell, v.parse().context("exponent must be an integer")?);
    }
    for o in &args.overrides {
        let (ell, v) = parse_pair(o)?;
        input = input.with_override(ell, parse_rational(v).map_err(|e| anyhow!("{e}"))?);
    }
    Ok((input, label))
}

fn cmd_density(args: &DensityArgs, format: Format) -> Result<()> {
    let (input, label) = density_input(args)?;
    let out = dens_serre_composite(&input).map_err(|e| anyhow!("{e}"))?;
    match format {
        Format::Json => println!("{}", out.to_json()),
        Format::Table => {
            if let Some(l) = label {
                println!("curve {l}");
            }
            println!(
                "density m={} mult={}{}",
                out.m,
                args.mult,
                if out.entangled { " (entangled)" } else { "" }
            );
            for c in &out.contributions {
                match c.sign {
                    Some(s) => println!(
                        "  ell={} [{}{s}]: {}",
                        c.ell,
                        sign_label(&out, c.ell),
                        c.value
                    ),
                    None => println!("  ell={}: {}", c.ell, c.value),
                }
            }
            println!(
                "density = {} = {} ({})",
                out.density,
                percent_string(&out.density, 3),
                out.decimal()
            );
        }
    }
    Ok(())
}

fn sign_label(out: &kummerdens_core::DensityBreakdown, ell: u64) -> &'static str {
    if ell == 2 && out.entangled {
        "psi*eps_z="
    } else {
        "eps="
    }
}

fn cmd_empirical(args: &EmpiricalArgs, format: Format) -> Result<()> {
    let data = std::fs::read_to_string(&args.curve)
        .with_context(|| format!("reading {}", args.curve.display()))?;
    let cfg = CurveConfig::from_json(&data).map_err(|e| anyhow!("{e}"))?;
    let (curve, base) = cfg.build().map_err(|e| anyhow!("{e}"))?;
    let point = q_scalar_mul(&curve, &QPoint::Affine(base), args.mult)
        .affine()
        .ok_or_else(|| anyhow!("{}·α is the identity; nothing to reduce", args.mult))?;
    let mut report =
        estimate_density(&curve, &point, args.m, args.limit).map_err(|e| anyhow!("{e}"))?;
    report.label = cfg.label.clone().map(|l| {
        if args.mult == 1 {
            l
        } else {
            format!("{l} ({}·α)", args.mult)
        }
    });
    if let Some(exact) = &args.exact {
        report = report.with_exact(parse_rational(exact).map_err(|e| anyhow!("{e}"))?);
    }
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Table => print!("{}", report.to_table()),
    }
    Ok(())
}

fn cmd_arboreal(args: &ArborealArgs, format: Format) -> Result<()> {
    let cap = enum_bound().min(kummerdens_core::arboreal::DEFAULT_GROUP_CAP);
    let (group, c_m) = if let Some(path) = &args.group {
        let data =
            std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        (
            ArborealLevelGroup::from_json(&data, cap).map_err(|e| anyhow!("{e}"))?,
            None,
        )
    } else {
        let (m, level) = match (args.m, args.level) {
            (Some(m), Some(l)) => (m, l),
            _ => bail!("either --group or both --m and --level are required"),
        };
        let mut kummer = KummerAssumptions::maximal();
        for s in &args.scales {
            let (ell, v) = parse_pair(s)?;
            kummer = kummer.with_scale(ell, v.parse().context("scale must be an integer")?);
        }
        let c_m = kummer.c_m(m).map_err(|e| anyhow!("{e}"))?;
        (
            ArborealLevelGroup::build_full_arboreal(m, level, MatrixPart::FullGl2, &kummer, cap)
                .map_err(|e| anyhow!("{e}"))?,
            Some(c_m),
        )
    };
    let density = group.finite_level_density();
    match format {
        Format::Json => {
            let j = serde_json::json!({
                "m": group.m(),
                "level": group.level(),
                "order": group.len(),
                "finite_level_density": RationalJson::from(&density),
                "decimal": decimal_string(&density, 10),
                "c_m": c_m.as_ref().map(RationalJson::from),
            });
            println!("{}", serde_json::to_string_pretty(&j)?);
        }
        Format::Table => {
            println!("m       {}", group.m());
            println!("level   {}", group.level());
            println!("order   {}", group.len());
            println!("density {} = {}", density, percent_string(&density, 3));
            if let Some(c) = c_m {
                println!("C_m     {c}");
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(workers) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
        {
            eprintln!("error: cannot configure {workers} workers: {e}");
            return ExitCode::from(1);
        }
    }
    let result: Result<bool> = match &cli.command {
        Command::Measure(a) => cmd_measure(a, cli.format).map(|_| true),
        Command::Density(a) => cmd_density(a, cli.format).map(|_| true),
        Command::Empirical(a) => cmd_empirical(a, cli.format).map(|_| true),
        Command::Arboreal(a) => cmd_arboreal(a, cli.format).map(|_| true),
        Command::VerifyPaper(a) => verify::run(a, cli.format, enum_bound()),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
