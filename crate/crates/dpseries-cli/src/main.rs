use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use dpseries::branch::{check_irreducible, Order, PointData, SaturationOptions};
use dpseries::charlat::{parse_character, parse_q, DpsPoint};
use dpseries::classify::{tadic_test, CandidateSpec, TadicOutcome};
use dpseries::error::{Error, Result};
use dpseries::rootsys::{parse_word, LeviSpec};
use dpseries_cli::config::RunConfig;
use dpseries_cli::data::ReferenceTables;
use dpseries_cli::pipeline::Engine;
use dpseries_cli::tables::{render_csv, render_json, render_markdown, sorted, to_rows};
use dpseries_cli::{exit_code, EXIT_OK};
use serde_json::json;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Markdown,
}

#[derive(Parser, Debug)]
#[command(
    name = "dpseries",
    version,
    about = "Degenerate principal series of split simply-laced groups"
)]
struct Cli {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true, env = "DPSERIES_CONFIG")]
    config: Option<PathBuf>,
    /// Root datum label such as E7 or D5.
    #[arg(long, global = true)]
    datum: Option<String>,
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    block_rows: Option<usize>,
    /// Residue field size for Hecke computations.
    #[arg(long, global = true)]
    q: Option<i64>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args, Debug, Clone)]
struct PointArgs {
    /// 1-based index of the simple root removed from the Levi.
    #[arg(long)]
    parabolic: usize,
    #[arg(long, allow_hyphen_values = true)]
    s: String,
    /// Order of the finite-order character.
    #[arg(long, default_value_t = 1)]
    chi_order: u32,
}

impl PointArgs {
    fn point(&self) -> Result<DpsPoint> {
        Ok(DpsPoint::new(
            self.parabolic,
            parse_q(&self.s)?,
            self.chi_order,
        ))
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Rank, Weyl group order and coset counts of the maximal parabolics.
    Datum,
    /// Exponents of the degenerate principal series with multiplicities.
    Exponents(PointArgs),
    /// Verdicts for the special points of a line, or for one point.
    Classify {
        #[arg(long)]
        parabolic: usize,
        #[arg(long, default_value_t = 1)]
        chi_order: u32,
        #[arg(long, allow_hyphen_values = true)]
        s: Option<String>,
    },
    /// Tadić's reducibility test against a candidate.
    Tadic {
        #[command(flatten)]
        point: PointArgs,
        /// `[j,t,k]` or `[(j1,j2),(s1,s2),(m1,m2)]`; the configured one by default.
        #[arg(long)]
        candidate: Option<String>,
    },
    /// Branching-rule saturation from anti-dominant seeds or from one seed.
    Branch {
        #[command(flatten)]
        point: PointArgs,
        /// Seed character such as `[0,0,0,-1,0,0,0]`.
        #[arg(long, allow_hyphen_values = true)]
        seed: Option<String>,
        #[arg(long, default_value_t = 1)]
        mult: u32,
        /// Pop the worklist in random order with this seed.
        #[arg(long)]
        random_order: Option<u64>,
        #[arg(long)]
        trace: bool,
    },
    /// Kernel of the normalized intertwiner on the Iwahori-fixed vectors.
    HeckeKernel {
        #[command(flatten)]
        point: PointArgs,
        /// Weyl word such as `s7s6s5s4s2`.
        #[arg(long)]
        word: String,
        /// Spill module rows under the cache directory before elimination.
        #[arg(long)]
        spill: bool,
        /// Spill size limit in bytes.
        #[arg(long)]
        spill_limit: Option<u64>,
    },
    /// Replays a proof script by name or path.
    Replay {
        script: String,
        /// Do not compute kernel steps; cached results are still checked.
        #[arg(long)]
        skip_kernels: bool,
    },
    /// Classification of every row of the reference tables.
    Tables {
        #[arg(long)]
        parabolic: Option<usize>,
        /// Fail with an assertion error where a verdict differs from the
        /// reference tables.
        #[arg(long)]
        check: bool,
    },
}

fn config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), std::env::vars())?;
    if let Some(v) = &cli.datum {
        cfg.datum = v.clone();
    }
    if let Some(v) = &cli.cache_dir {
        cfg.cache_dir = v.clone();
    }
    if let Some(v) = cli.workers {
        cfg.workers = v;
    }
    if let Some(v) = cli.block_rows {
        cfg.block_rows = v;
    }
    if let Some(v) = cli.q {
        cfg.q = v;
    }
    if let Command::HeckeKernel {
        spill, spill_limit, ..
    } = &cli.command
    {
        cfg.spill |= *spill || spill_limit.is_some();
        if spill_limit.is_some() {
            cfg.spill_limit = *spill_limit;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Error::Format(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn run(cli: &Cli) -> Result<String> {
    let cfg = config(cli)?;
    let engine = Engine::new(cfg.clone())?;
    let d = &engine.d;
    match &cli.command {
        Command::Datum => {
            let mut parabolics = Vec::new();
            for i in 1..=d.rank() {
                let theta = LeviSpec::maximal(d.rank(), i)?;
                let reps = d.min_double_coset_reps(theta, LeviSpec::empty())?.len();
                parabolics.push(
                    json!({"i": i, "levi_order": d.parabolic_order(theta), "coset_reps": reps}),
                );
            }
            to_json(&json!({
                "label": d.label.to_string(),
                "rank": d.rank(),
                "weyl_order": d.weyl_order(),
                "positive_roots": d.positive_roots.len(),
                "parabolics": parabolics,
            }))
        }
        Command::Exponents(pa) => {
            let p = pa.point()?;
            let pd = PointData::new(d, &p)?;
            match cli.format {
                Format::Csv => {
                    let mut s = String::from("lambda,mult\n");
                    for (c, m) in pd.f_pi.sorted_entries() {
                        s.push_str(&format!("\"{c}\",{m}\n"));
                    }
                    Ok(s)
                }
                _ => to_json(&json!({
                    "point": p,
                    "lambda0": pd.lambda0,
                    "lambda_ad": pd.lambda_ad,
                    "mass": pd.f_pi.total_mass(),
                    "support": pd.f_pi.support_len(),
                    "exponents": pd.f_pi.sorted_entries(),
                })),
            }
        }
        Command::Classify {
            parabolic,
            chi_order,
            s,
        } => {
            let v = match s {
                Some(s) => vec![engine.classify_point(&DpsPoint::new(
                    *parabolic,
                    parse_q(s)?,
                    *chi_order,
                ))?],
                None => engine.run_classification(*parabolic, *chi_order)?,
            };
            Ok(render(cli.format, &v))
        }
        Command::Tadic { point, candidate } => {
            let p = point.point()?;
            let spec: CandidateSpec = match candidate {
                Some(c) => c.parse()?,
                None => engine
                    .candidate(&p)
                    .map(|c| c.spec.clone())
                    .ok_or_else(|| Error::Config(format!("no candidate configured for {p}")))?,
            };
            let r = tadic_test(d, &p, &spec)?;
            to_json(&json!({
                "point": p,
                "candidate": spec.to_string(),
                "outcome": if r.outcome == TadicOutcome::ReducibleConfirmed { "reducible_confirmed" } else { "inconclusive" },
                "lambda_ad": r.lambda_ad,
                "stab_order": r.stab_order,
                "ad_mult_pi": r.ad_mult_pi,
                "ad_mult_sigma": r.ad_mult_sigma,
                "witness": r.witness,
            }))
        }
        Command::Branch {
            point,
            seed,
            mult,
            random_order,
            trace,
        } => {
            let p = point.point()?;
            let order = random_order.map(Order::Random).unwrap_or(Order::Fifo);
            let opts = SaturationOptions {
                order,
                trace: *trace,
            };
            match seed {
                None => to_json(&check_irreducible(d, &engine.lib, &p, opts)?),
                Some(seed) => {
                    let pd = PointData::new(d, &p)?;
                    let c = parse_character(seed)?;
                    let mut st = pd.seeded(&c, *mult)?;
                    st.saturate(d, &engine.lib, &pd.f_pi, opts)?;
                    to_json(&json!({
                        "point": p,
                        "seed": c,
                        "mult": mult,
                        "steps": st.steps,
                        "clamps": st.clamps,
                        "mass": st.f.total_mass(),
                        "pi_mass": pd.f_pi.total_mass(),
                        "lambda0_mult": st.f.multiplicity(&pd.lambda0),
                        "pi_lambda0_mult": pd.f_pi.multiplicity(&pd.lambda0),
                        "trace": st.trace,
                    }))
                }
            }
        }
        Command::HeckeKernel { point, word, .. } => {
            let p = point.point()?;
            let w = parse_word(word, d.rank())?;
            let r = engine.kernel(&p, &w, cfg.q)?;
            to_json(&json!({"point": p, "word": word, "q": cfg.q, "report": r}))
        }
        Command::Replay {
            script,
            skip_kernels,
        } => {
            let s = engine.script(script)?;
            let out = engine.replay(&s, !skip_kernels)?;
            match cli.format {
                Format::Json => to_json(&out),
                _ => {
                    let mut text = format!("{} at {}\n", out.report.name, out.report.point);
                    for row in &out.report.rows {
                        text.push_str(&format!("{row}\n"));
                    }
                    for k in &out.kernels {
                        text.push_str(&format!(
                            "kernel {} q={}: rank {} kernel {} ({:?})\n",
                            dpseries::rootsys::format_word(&k.request.word),
                            k.request.q,
                            k.report.rank,
                            k.report.kernel_dim,
                            k.report.certification
                        ));
                    }
                    if out.skipped_kernels > 0 {
                        text.push_str(&format!("{} kernel step(s) not run\n", out.skipped_kernels));
                    }
                    if out.report.unique_subrep {
                        text.push_str("unique irreducible subrepresentation\n");
                    }
                    Ok(text)
                }
            }
        }
        Command::Tables { parabolic, check } => {
            let reference = ReferenceTables::bundled();
            if reference.datum != d.label.to_string() {
                return Err(Error::Config(format!(
                    "reference tables are for {}",
                    reference.datum
                )));
            }
            let mut all = Vec::new();
            for row in reference
                .rows
                .iter()
                .filter(|r| parabolic.is_none_or(|i| r.i == i))
            {
                all.extend(engine.run_classification(row.i, row.k)?);
            }
            let all = sorted(all);
            if *check {
                let mut bad = Vec::new();
                let ours = to_rows(&all);
                for r in reference
                    .rows
                    .iter()
                    .filter(|r| parabolic.is_none_or(|i| r.i == i))
                {
                    let mine = ours.iter().find(|o| o.i == r.i && o.k == r.k);
                    if mine.map(|m| &m.cells) != Some(&r.cells) {
                        bad.push(format!("({}, {})", r.i, r.k));
                    }
                }
                if !bad.is_empty() {
                    return Err(Error::Assertion(format!(
                        "rows differ from the reference: {}",
                        bad.join(", ")
                    )));
                }
            }
            Ok(render(cli.format, &all))
        }
    }
}

fn render(format: Format, v: &[dpseries::classify::PointVerdict]) -> String {
    let v = sorted(v.to_vec());
    match format {
        Format::Json => render_json(&v),
        Format::Csv => render_csv(&v),
        Format::Markdown => render_markdown(&to_rows(&v)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::from(EXIT_OK as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
