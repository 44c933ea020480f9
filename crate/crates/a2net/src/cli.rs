use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use a2net_core::attention::double_attention_forward;
use a2net_core::backbone::{
    apply_insertions, build_preset, count, InsertionSpec, NetworkCount, NetworkDescriptor, Preset,
};
use a2net_core::cost::{a2_block_cost, choose_association};
use a2net_core::grad::check::{self, BlockCase};
use a2net_core::grad::GradReport;
use a2net_core::{
    AssociationOrder, CostConvention, DoubleAttentionParams, Init, Matrix, Scalar, Shape4,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::a2tn::{Payload, TensorFile};
use crate::error::CliError;
use crate::manifest;
use crate::report::{config_digest, RunReport, Timings};

#[derive(Debug, Parser)]
#[command(
    name = "a2net",
    version,
    about = "Double-attention block toolkit: counting, checks, benchmarks and forward runs"
)]
pub struct Cli {
    /// Worker threads for parallel gradient-check trials.
    #[arg(long, global = true, env = "A2NET_THREADS")]
    pub threads: Option<usize>,
    /// Omit wall-clock timings so repeated runs print identical bytes.
    #[arg(long, global = true)]
    pub no_timings: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "lowercase")]
pub enum Command {
    /// Parameters and multiply-adds of a backbone, optionally with blocks inserted.
    Count(CountArgs),
    /// Print a backbone descriptor as JSON (after any insertions).
    Arch(ArchArgs),
    /// Compare left and right association on seeded random data.
    Equiv(EquivArgs),
    /// Analytic gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Time both association orders next to the cost model's prediction.
    Bench(BenchArgs),
    /// Run one block on a tensor file or a seeded random input.
    Forward(ForwardArgs),
    /// Write freshly initialized block parameters to a directory.
    Init(InitArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
    Table,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Order {
    Left,
    Right,
    Auto,
}

impl From<Order> for AssociationOrder {
    fn from(o: Order) -> Self {
        match o {
            Order::Left => Self::Left,
            Order::Right => Self::Right,
            Order::Auto => Self::Auto,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchOrders {
    Both,
    Left,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Target {
    Primitives,
    Block,
    TinyNet,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("`{s}`: {e}"))?;
    match parts[..] {
        [d, h, w] if d > 0 && h > 0 && w > 0 => Ok([d, h, w]),
        _ => Err(format!("`{s}`: expected three positive extents d,h,w")),
    }
}

#[derive(Debug, Args, Serialize)]
pub struct CountArgs {
    /// Preset name (resnet26, resnet29, resnet50_video, resnet50_image) or a descriptor JSON file.
    #[arg(long)]
    pub arch: String,
    /// Block insertion `kind@stage×count`, e.g. `a2@conv4x1`. Repeatable.
    #[arg(long = "insert")]
    pub insert: Vec<InsertionSpec>,
    /// Counting convention as inline JSON or a path to a JSON file.
    #[arg(long)]
    pub convention: Option<String>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
}

#[derive(Debug, Args, Serialize)]
pub struct ArchArgs {
    #[arg(long)]
    pub arch: String,
    #[arg(long = "insert")]
    pub insert: Vec<InsertionSpec>,
    /// Write the descriptor here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
pub struct EquivArgs {
    #[arg(long, default_value_t = 16)]
    pub c: usize,
    /// Spatio-temporal extent `d,h,w`.
    #[arg(long, value_parser = parse_dims, default_value = "4,4,4")]
    pub shape: [usize; 3],
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    #[arg(long, default_value_t = 4)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Precision::Double)]
    pub precision: Precision,
    /// Maximum absolute divergence; defaults to 1e-4 (single) or 1e-10 (double).
    #[arg(long)]
    pub tolerance: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
pub struct GradcheckArgs {
    #[arg(long, value_enum)]
    pub target: Target,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Seeds `seed, seed+1, …, seed+trials-1`.
    #[arg(long, default_value_t = 1)]
    pub trials: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    pub c: usize,
    #[arg(long, value_parser = parse_dims, default_value = "8,14,14")]
    pub shape: [usize; 3],
    #[arg(long, default_value_t = 128)]
    pub m: usize,
    #[arg(long, default_value_t = 128)]
    pub n: usize,
    #[arg(long, value_enum, default_value_t = BenchOrders::Both)]
    pub orders: BenchOrders,
    #[arg(long, default_value_t = 5)]
    pub repeat: usize,
    #[arg(long, default_value_t = 1)]
    pub warmup: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args, Serialize)]
pub struct ForwardArgs {
    /// Parameter manifest, or the directory containing `manifest.json`.
    #[arg(long)]
    pub params: PathBuf,
    /// An A2TN file, or `random:SEED` for a standard-normal input.
    #[arg(long)]
    pub input: String,
    /// Extent `d,h,w` of a random input.
    #[arg(long, value_parser = parse_dims)]
    pub shape: Option<[usize; 3]>,
    #[arg(long, value_enum, default_value_t = Order::Auto)]
    pub order: Order,
    /// Precision of a random input. File inputs keep their own precision.
    #[arg(long, value_enum, default_value_t = Precision::Single)]
    pub precision: Precision,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args, Serialize)]
pub struct InitArgs {
    #[arg(long)]
    pub c: usize,
    /// Gathered feature width; defaults to c / reduction.
    #[arg(long)]
    pub m: Option<usize>,
    /// Bag size; defaults to c / reduction.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 4)]
    pub reduction: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Draw a random output map and random biases instead of the
    /// identity-preserving zero output map.
    #[arg(long)]
    pub dense: bool,
    #[arg(long, value_enum, default_value_t = Order::Auto)]
    pub order: Order,
    #[arg(long, value_enum, default_value_t = Precision::Single)]
    pub precision: Precision,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

/// What a command printed and whether its check passed.
#[derive(Debug)]
pub struct Outcome {
    pub stdout: String,
    pub pass: bool,
}

impl Outcome {
    fn ok(stdout: String) -> Self {
        Self { stdout, pass: true }
    }
}

pub fn run(cli: &Cli) -> Result<Outcome, CliError> {
    let digest = config_digest(&cli.command);
    let timings = !cli.no_timings;
    match &cli.command {
        Command::Count(a) => cmd_count(a, digest, timings),
        Command::Arch(a) => cmd_arch(a),
        Command::Equiv(a) => cmd_equiv(a, digest, timings),
        Command::Gradcheck(a) => cmd_gradcheck(a, digest, timings),
        Command::Bench(a) => cmd_bench(a, digest, timings),
        Command::Forward(a) => cmd_forward(a, digest, timings),
        Command::Init(a) => cmd_init(a, digest, timings),
    }
}

fn render(report: &RunReport) -> Result<String, CliError> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

fn resolve_arch(
    arch: &str,
    insert: &[InsertionSpec],
) -> Result<(NetworkDescriptor, NetworkDescriptor), CliError> {
    let base = if arch.parse::<Preset>().is_ok() {
        build_preset(arch)?
    } else {
        let path = Path::new(arch);
        if !path.is_file() {
            return Err(CliError::Usage(format!(
                "`{arch}` is neither a preset ({}) nor a descriptor file",
                Preset::ALL.map(Preset::name).join(", ")
            )));
        }
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{arch}: {e}")))?
    };
    let inserted = apply_insertions(&base, insert)?;
    Ok((base, inserted))
}

fn load_convention(spec: Option<&str>) -> Result<CostConvention, CliError> {
    let Some(spec) = spec else {
        return Ok(CostConvention::default());
    };
    let text = if spec.trim_start().starts_with('{') {
        spec.to_string()
    } else {
        fs::read_to_string(spec).map_err(|e| CliError::io(Path::new(spec), e))?
    };
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("convention: {e}")))
}

fn si(v: u64) -> String {
    let v = v as f64;
    match v {
        v if v >= 1e9 => format!("{:.2} G", v / 1e9),
        v if v >= 1e6 => format!("{:.2} M", v / 1e6),
        v if v >= 1e3 => format!("{:.2} K", v / 1e3),
        v => format!("{v}"),
    }
}

fn cmd_count(a: &CountArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    let mut t = Timings::default();
    let conv = load_convention(a.convention.as_deref())?;
    let (base, net) = resolve_arch(&a.arch, &a.insert)?;
    let (baseline, total) = t.time(
        "count",
        || -> Result<(NetworkCount, NetworkCount), CliError> {
            Ok((count(&base, &conv)?, count(&net, &conv)?))
        },
    )?;
    let d_params = total.params as i128 - baseline.params as i128;
    let d_flops = total.flops as i128 - baseline.flops as i128;

    let stdout = match a.format {
        Format::Json => render(&RunReport {
            command: "count".into(),
            config_digest: digest,
            seed: None,
            pass: None,
            outputs: json!({
                "network": total.name,
                "insertions": a.insert.iter().map(ToString::to_string).collect::<Vec<_>>(),
                "convention": conv,
                "baseline": {"params": baseline.params, "flops": baseline.flops},
                "total": {
                    "params": total.params,
                    "flops": total.flops,
                    "peak_intermediate_bytes": total.peak_intermediate_bytes,
                },
                "delta": {"params": d_params, "flops": d_flops},
                "output": total.output,
                "stages": total.stages,
                "layers": total.layers,
            }),
            timings_ms: t.finish(timings),
        })?,
        Format::Csv => {
            let mut s = String::from("stage,layer,output,params,flops,peak_intermediate_bytes\n");
            for r in &total.layers {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{}",
                    r.stage, r.label, r.output, r.params, r.flops, r.peak_intermediate_bytes
                );
            }
            let _ = writeln!(
                s,
                "total,,,{},{},{}",
                total.params, total.flops, total.peak_intermediate_bytes
            );
            let _ = writeln!(s, "delta,,,{d_params},{d_flops},");
            s
        }
        Format::Table => {
            let mut s = String::new();
            let _ = writeln!(
                s,
                "{:<8} {:<34} {:>16} {:>12} {:>12}",
                "stage", "layer", "output", "params", "flops"
            );
            for r in &total.layers {
                let _ = writeln!(
                    s,
                    "{:<8} {:<34} {:>16} {:>12} {:>12}",
                    r.stage,
                    r.label,
                    r.output.to_string(),
                    si(r.params),
                    si(r.flops)
                );
            }
            let _ = writeln!(s, "\n{:<8} {:>12} {:>12}", "", "params", "flops");
            for st in &total.stages {
                let _ = writeln!(
                    s,
                    "{:<8} {:>12} {:>12}",
                    st.name,
                    si(st.params),
                    si(st.flops)
                );
            }
            let _ = writeln!(
                s,
                "{:<8} {:>12} {:>12}",
                "total",
                si(total.params),
                si(total.flops)
            );
            let _ = writeln!(
                s,
                "{:<8} {:>12} {:>12}",
                "delta",
                format!("{d_params:+}"),
                format!("{d_flops:+}")
            );
            s
        }
    };
    Ok(Outcome::ok(stdout))
}

fn cmd_arch(a: &ArchArgs) -> Result<Outcome, CliError> {
    let (_, net) = resolve_arch(&a.arch, &a.insert)?;
    let json = serde_json::to_string_pretty(&net)? + "\n";
    match &a.out {
        Some(path) => {
            fs::write(path, &json).map_err(|e| CliError::io(path, e))?;
            Ok(Outcome::ok(String::new()))
        }
        None => Ok(Outcome::ok(json)),
    }
}

/// `(max |l − r|, max |l − r| / max(|r|, 1e-8))` between the two orders.
fn divergence<T: Scalar>(
    x: &Matrix<f64>,
    params: &DoubleAttentionParams<f64>,
) -> Result<(f64, f64), CliError> {
    let x: Matrix<T> = x.cast();
    let p: DoubleAttentionParams<T> = params.cast();
    let l = double_attention_forward(&x, &p, AssociationOrder::Left)?.output;
    let r = double_attention_forward(&x, &p, AssociationOrder::Right)?.output;
    let mut abs = 0.0f64;
    let mut rel = 0.0f64;
    for (a, b) in l.as_slice().iter().zip(r.as_slice()) {
        let d = (a.as_f64() - b.as_f64()).abs();
        abs = abs.max(d);
        rel = rel.max(d / b.as_f64().abs().max(1e-8));
    }
    Ok((abs, rel))
}

fn cmd_equiv(a: &EquivArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    let mut t = Timings::default();
    let shape = Shape4::new(a.c, a.shape[0], a.shape[1], a.shape[2])?;
    let l = shape.locations();
    let x = Init::Normal { std: 1.0 }.matrix(a.c, l, a.seed)?;
    let params =
        DoubleAttentionParams::<f64>::init_dense(a.c, a.m, a.n, a.seed.wrapping_add(1), true)?;
    let tolerance = a.tolerance.unwrap_or(match a.precision {
        Precision::Single => 1e-4,
        Precision::Double => 1e-10,
    });
    let (abs, rel) = t.time("forward_both", || match a.precision {
        Precision::Single => divergence::<f32>(&x, &params),
        Precision::Double => divergence::<f64>(&x, &params),
    })?;
    let pass = abs < tolerance;
    let stdout = render(&RunReport {
        command: "equiv".into(),
        config_digest: digest,
        seed: Some(a.seed),
        pass: Some(pass),
        outputs: json!({
            "c": a.c,
            "shape": shape,
            "m": a.m,
            "n": a.n,
            "precision": a.precision,
            "max_abs_divergence": abs,
            "max_rel_divergence": rel,
            "tolerance": tolerance,
            "auto_resolves_to": choose_association(a.m, a.n, l).to_string(),
        }),
        timings_ms: t.finish(timings),
    })?;
    Ok(Outcome { stdout, pass })
}

fn gradcheck_trial(target: Target, seed: u64) -> Result<Vec<GradReport>, CliError> {
    Ok(match target {
        Target::Primitives => check::primitives(seed)?,
        Target::Block => {
            let plain = BlockCase::default();
            let biased = BlockCase {
                biases: true,
                ..plain
            };
            let mut out = check::block(plain, AssociationOrder::Left, seed)?;
            out.extend(check::block(plain, AssociationOrder::Right, seed)?);
            out.extend(check::block(biased, AssociationOrder::Left, seed)?);
            out.extend(check::block_order_consistency(plain, seed)?);
            out
        }
        Target::TinyNet => check::tiny_net(seed)?,
    })
}

fn cmd_gradcheck(a: &GradcheckArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    if a.trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    let mut t = Timings::default();
    let trials: Vec<Vec<GradReport>> = t.time("checks", || {
        (0..a.trials)
            .into_par_iter()
            .map(|i| gradcheck_trial(a.target, a.seed.wrapping_add(i)))
            .collect::<Result<_, _>>()
    })?;
    let reports: Vec<GradReport> = trials.into_iter().flatten().collect();
    let failures = reports.iter().filter(|r| !r.pass).count();
    let worst = reports
        .iter()
        .filter(|r| r.floor != f64::MAX)
        .map(|r| r.max_rel_err)
        .fold(0.0, f64::max);
    let mut stdout = String::new();
    for r in &reports {
        stdout += &serde_json::to_string(r)?;
        stdout.push('\n');
    }
    let pass = failures == 0;
    let summary = RunReport {
        command: "gradcheck".into(),
        config_digest: digest,
        seed: Some(a.seed),
        pass: Some(pass),
        outputs: json!({
            "target": a.target,
            "trials": a.trials,
            "checks": reports.len(),
            "failures": failures,
            "worst_rel_err": worst,
        }),
        timings_ms: t.finish(timings),
    };
    stdout += &serde_json::to_string(&summary)?;
    stdout.push('\n');
    Ok(Outcome { stdout, pass })
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

fn cmd_bench(a: &BenchArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    if a.repeat == 0 {
        return Err(CliError::Usage("--repeat must be at least 1".into()));
    }
    let shape = Shape4::new(a.c, a.shape[0], a.shape[1], a.shape[2])?;
    let l = shape.locations();
    let conv = CostConvention::default();
    let left = a2_block_cost(shape, a.m, a.n, AssociationOrder::Left, &conv);
    let right = a2_block_cost(shape, a.m, a.n, AssociationOrder::Right, &conv);
    let predicted = choose_association(a.m, a.n, l);

    let x: Matrix<f32> = Init::Normal { std: 1.0 }.matrix(a.c, l, a.seed)?;
    let params =
        DoubleAttentionParams::<f32>::init_dense(a.c, a.m, a.n, a.seed.wrapping_add(1), false)?;
    let orders: &[AssociationOrder] = match a.orders {
        BenchOrders::Both => &[AssociationOrder::Left, AssociationOrder::Right],
        BenchOrders::Left => &[AssociationOrder::Left],
        BenchOrders::Right => &[AssociationOrder::Right],
    };
    let mut t = Timings::default();
    let mut measured = Vec::new();
    for &order in orders {
        for _ in 0..a.warmup {
            double_attention_forward(&x, &params, order)?;
        }
        let mut samples = Vec::with_capacity(a.repeat);
        for _ in 0..a.repeat {
            let start = Instant::now();
            let out = double_attention_forward(&x, &params, order)?;
            samples.push(start.elapsed().as_secs_f64() * 1e3);
            std::hint::black_box(out);
        }
        t.record(
            &format!("{order}.min"),
            samples.iter().copied().fold(f64::INFINITY, f64::min),
        );
        t.record(&format!("{order}.median"), median(samples));
        measured.push(order.to_string());
    }
    let model = |c: &a2net_core::BlockCost| json!({"flops": c.flops, "peak_intermediate_bytes": c.peak_intermediate_bytes});
    let stdout = render(&RunReport {
        command: "bench".into(),
        config_digest: digest,
        seed: Some(a.seed),
        pass: None,
        outputs: json!({
            "c": a.c,
            "shape": shape,
            "m": a.m,
            "n": a.n,
            "precision": "single",
            "repeat": a.repeat,
            "warmup": a.warmup,
            "measured_orders": measured,
            "model": {
                "left": model(&left),
                "right": model(&right),
                "predicted_cheaper": predicted.to_string(),
            },
        }),
        timings_ms: t.finish(timings),
    })?;
    Ok(Outcome::ok(stdout))
}

struct ForwardResult {
    payload: Payload,
    resolved: String,
    macs: u64,
}

fn forward_in<T: Scalar>(
    params_path: &Path,
    x: Matrix<T>,
    order: AssociationOrder,
) -> Result<ForwardResult, CliError> {
    let (_, params) = manifest::load::<T>(params_path)?;
    if x.rows() != params.c() {
        return Err(CliError::Usage(format!(
            "input has {} channels but the parameters expect {}",
            x.rows(),
            params.c()
        )));
    }
    let f = double_attention_forward(&x, &params, order)?;
    Ok(ForwardResult {
        payload: Payload::from_scalars(f.output.as_slice()),
        resolved: f.cache.order.to_string(),
        macs: f.macs,
    })
}

fn cmd_forward(a: &ForwardArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    let mut t = Timings::default();
    let (input, seed) = if let Some(seed) = a.input.strip_prefix("random:") {
        let seed: u64 = seed
            .parse()
            .map_err(|_| CliError::Usage(format!("bad random seed in `{}`", a.input)))?;
        let [d, h, w] = a.shape.ok_or_else(|| {
            CliError::Usage("--shape d,h,w is required with a random input".into())
        })?;
        let (c, _) = manifest::load::<f64>(&a.params).map(|(m, _)| (m.c, ()))?;
        let shape = Shape4::new(c, d, h, w)?;
        let x: Matrix<f64> = Init::Normal { std: 1.0 }.matrix(c, shape.locations(), seed)?;
        let file = match a.precision {
            Precision::Single => TensorFile::from_matrix(&x.cast::<f32>()),
            Precision::Double => TensorFile::from_matrix(&x),
        };
        (TensorFile::new(vec![c, d, h, w], file.payload)?, Some(seed))
    } else {
        let file = TensorFile::read(Path::new(&a.input))?;
        if file.shape4().is_none() {
            return Err(CliError::Usage(format!(
                "{}: expected a 4-D [c, d, h, w] tensor, found dims {:?}",
                a.input, file.dims
            )));
        }
        (file, None)
    };
    let order = AssociationOrder::from(a.order);
    let result = t.time("forward", || match input.payload {
        Payload::Single(_) => forward_in::<f32>(&a.params, input.to_matrix()?, order),
        Payload::Double(_) => forward_in::<f64>(&a.params, input.to_matrix()?, order),
    })?;
    let precision = match result.payload {
        Payload::Single(_) => "single",
        Payload::Double(_) => "double",
    };
    TensorFile::new(input.dims.clone(), result.payload)?.write(&a.out)?;
    let stdout = render(&RunReport {
        command: "forward".into(),
        config_digest: digest,
        seed,
        pass: None,
        outputs: json!({
            "input_shape": input.dims,
            "output_shape": input.dims,
            "precision": precision,
            "order_requested": a.order,
            "order_resolved": result.resolved,
            "macs": result.macs,
            "out": a.out.display().to_string(),
        }),
        timings_ms: t.finish(timings),
    })?;
    Ok(Outcome::ok(stdout))
}

fn init_params<T: Scalar>(a: &InitArgs, m: usize, n: usize) -> Result<(PathBuf, usize), CliError> {
    let params = if a.dense {
        DoubleAttentionParams::<T>::init_dense(a.c, m, n, a.seed, true)?
    } else {
        DoubleAttentionParams::<T>::init(a.c, m, n, a.seed)?
    };
    let path = manifest::save(&a.out, &params, a.order.into())?;
    Ok((path, params.param_count()))
}

fn cmd_init(a: &InitArgs, digest: String, timings: bool) -> Result<Outcome, CliError> {
    let reduced = || {
        if a.reduction == 0 || !a.c.is_multiple_of(a.reduction) || a.c < a.reduction {
            Err(CliError::Usage(format!(
                "{} channels are not divisible by reduction {}",
                a.c, a.reduction
            )))
        } else {
            Ok(a.c / a.reduction)
        }
    };
    let m = a.m.map_or_else(reduced, Ok)?;
    let n = a.n.map_or_else(reduced, Ok)?;
    let mut t = Timings::default();
    let (path, param_count) = t.time("init", || match a.precision {
        Precision::Single => init_params::<f32>(a, m, n),
        Precision::Double => init_params::<f64>(a, m, n),
    })?;
    let stdout = render(&RunReport {
        command: "init".into(),
        config_digest: digest,
        seed: Some(a.seed),
        pass: None,
        outputs: json!({
            "manifest": path.display().to_string(),
            "c": a.c,
            "m": m,
            "n": n,
            "biases": a.dense,
            "param_count": param_count,
        }),
        timings_ms: t.finish(timings),
    })?;
    Ok(Outcome::ok(stdout))
}
