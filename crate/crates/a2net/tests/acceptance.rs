//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.

use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use a2net_core::attention::{
    distribute, double_attention_core, double_attention_forward, gather, relation_matrix,
    Association,
};
use a2net_core::backbone::tiny::{materialize_tiny, tiny_descriptor, TinyInit};
use a2net_core::backbone::{apply_insertions, build_preset, count, InsertionSpec, NetworkCount};
use a2net_core::cost::{a2_block_cost, a2_matmul_flops, choose_association};
use a2net_core::grad::check::{self, BlockCase};
use a2net_core::grad::GradReport;
use a2net_core::tensor::{matmul, softmax_cols, softmax_rows, SeededStream};
use a2net_core::{AssociationOrder, CostConvention, DoubleAttentionParams, Init, Matrix, Shape4};

// Criterion 1
const TABLE1_REL: f64 = 0.03;
// Criterion 2
const A2_DELTA_REL: f64 = 0.01;
const A2_STAGE_SPREAD_REL: f64 = 0.005;
const NL_AND_MULTI_DELTA_REL: f64 = 0.02;
// Criterion 3
const LEFT_PEAK_BYTES: u64 = 1 << 20;
const RIGHT_PEAK_GIB: f64 = 2.34;
const RIGHT_PEAK_REL: f64 = 0.01;
// Criterion 4
const EQUIV_SINGLE: f64 = 1e-4;
const EQUIV_DOUBLE: f64 = 1e-10;
// Criterion 5
const GRAD_SEEDS: u64 = 20;
// Criteria 6 and 7
const EXACT_DOUBLE: f64 = 1e-12;
const COLUMN_SUM: f64 = 1e-6;
// Runtime bounds
const FAST: Duration = Duration::from_secs(1);

struct Verdict {
    pass: bool,
    detail: String,
}

fn rel(actual: f64, expected: f64) -> f64 {
    (actual / expected - 1.0).abs()
}

fn normal(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    Init::Normal { std: 1.0 }.matrix(rows, cols, seed).unwrap()
}

fn resnet(name: &str, inserts: &[&str]) -> NetworkCount {
    let specs: Vec<InsertionSpec> = inserts.iter().map(|s| s.parse().unwrap()).collect();
    let net = apply_insertions(&build_preset(name).unwrap(), &specs).unwrap();
    count(&net, &CostConvention::default()).unwrap()
}

fn baseline_totals() -> Verdict {
    let rows = [
        ("resnet26", 7.0e6, 8.3e9),
        ("resnet29", 7.6e6, 9.2e9),
        ("resnet50_video", 33.4e6, 31.3e9),
    ];
    let mut pass = true;
    let mut detail = Vec::new();
    for (name, params, flops) in rows {
        let c = resnet(name, &[]);
        let (ep, ef) = (rel(c.params as f64, params), rel(c.flops as f64, flops));
        pass &= ep < TABLE1_REL && ef < TABLE1_REL;
        detail.push(format!(
            "{name} {:.3}M/{:.2}G ({:.1}%/{:.1}%)",
            c.params as f64 / 1e6,
            c.flops as f64 / 1e9,
            ep * 100.0,
            ef * 100.0
        ));
    }
    Verdict {
        pass,
        detail: detail.join(", "),
    }
}

fn deltas() -> Verdict {
    let base = resnet("resnet26", &[]).flops as f64;
    let delta = |inserts: &[&str]| resnet("resnet26", inserts).flops as f64 - base;
    let a2: Vec<f64> = ["a2@conv2x1", "a2@conv3x1", "a2@conv4x1"]
        .iter()
        .map(|s| delta(&[s]))
        .collect();
    let spread = (a2.iter().copied().fold(f64::MIN, f64::max)
        - a2.iter().copied().fold(f64::MAX, f64::min))
        / a2[0];
    let mut pass = a2.iter().all(|&d| rel(d, 463e6) < A2_DELTA_REL) && spread < A2_STAGE_SPREAD_REL;
    let checks: [(&[&str], f64, &str); 6] = [
        (&["nl@conv4x1"], 1.04e9, "NL@conv4"),
        (&["nl@conv3x1"], 5.45e9, "NL@conv3"),
        (&["nl@conv2x1"], 40.69e9, "NL@conv2"),
        (&["a2@conv4x2"], 925e6, "2xA2@conv4"),
        (&["a2@conv3x2", "a2@conv4x2"], 1.85e9, "4xA2@conv3&4"),
        (&["nl@conv3x2", "nl@conv4x2"], 12.97e9, "4xNL@conv3&4"),
    ];
    let mut detail = vec![format!(
        "A2 {:.1}M at conv2/3/4 (spread {:.2}%)",
        a2[0] / 1e6,
        spread * 100.0
    )];
    for (inserts, expected, label) in checks {
        let d = delta(inserts);
        pass &= rel(d, expected) < NL_AND_MULTI_DELTA_REL;
        detail.push(format!(
            "{label} {:.3}G ({:.2}%)",
            d / 1e9,
            rel(d, expected) * 100.0
        ));
    }
    Verdict {
        pass,
        detail: detail.join(", "),
    }
}

fn memory() -> Verdict {
    let shape = Shape4::new(512, 32, 28, 28).unwrap();
    let conv = CostConvention::default();
    let right =
        a2_block_cost(shape, 512, 512, AssociationOrder::Right, &conv).peak_intermediate_bytes;
    let left =
        a2_block_cost(shape, 512, 512, AssociationOrder::Left, &conv).peak_intermediate_bytes;
    let gib = right as f64 / (1u64 << 30) as f64;
    Verdict {
        pass: left == LEFT_PEAK_BYTES
            && right > 2_000_000_000
            && rel(gib, RIGHT_PEAK_GIB) < RIGHT_PEAK_REL,
        detail: format!("right {right} B = {gib:.3} GiB, left {left} B"),
    }
}

fn equivalence() -> Verdict {
    let mut draws = 0;
    let (mut worst_single, mut worst_double) = (0.0f64, 0.0f64);
    for (i, c) in [8usize, 16, 32].into_iter().enumerate() {
        for (j, side) in [3usize, 4, 5].into_iter().enumerate() {
            for (k, w) in [2usize, 4, 8].into_iter().enumerate() {
                let seed = (i * 9 + j * 3 + k) as u64;
                let l = side * side * side;
                let x = normal(c, l, seed);
                let p =
                    DoubleAttentionParams::<f64>::init_dense(c, w, w, seed + 100, true).unwrap();
                let run = |order| double_attention_forward(&x, &p, order).unwrap().output;
                let d = run(AssociationOrder::Left)
                    .max_abs_diff(&run(AssociationOrder::Right))
                    .unwrap();
                let (xs, ps) = (x.cast::<f32>(), p.cast::<f32>());
                let run = |order| double_attention_forward(&xs, &ps, order).unwrap().output;
                let s = run(AssociationOrder::Left)
                    .max_abs_diff(&run(AssociationOrder::Right))
                    .unwrap();
                worst_double = worst_double.max(d);
                worst_single = worst_single.max(s as f64);
                draws += 1;
            }
        }
    }
    Verdict {
        pass: draws >= 20 && worst_single < EQUIV_SINGLE && worst_double < EQUIV_DOUBLE,
        detail: format!(
            "{draws} draws, max |L-R| single {worst_single:.2e}, double {worst_double:.2e}"
        ),
    }
}

fn gradients() -> Verdict {
    let mut reports: Vec<GradReport> = Vec::new();
    let plain = BlockCase::default();
    let biased = BlockCase {
        biases: true,
        ..plain
    };
    for seed in 0..GRAD_SEEDS {
        reports.extend(check::primitives(seed).unwrap());
        reports.extend(check::block(plain, AssociationOrder::Left, seed).unwrap());
        reports.extend(check::block(plain, AssociationOrder::Right, seed).unwrap());
        reports.extend(check::block(biased, AssociationOrder::Left, seed).unwrap());
        reports.extend(check::block_order_consistency(plain, seed).unwrap());
        reports.extend(check::tiny_net(seed).unwrap());
    }
    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.pass)
        .map(|r| format!("{}:{}@{}", r.op, r.slot, r.seed))
        .collect();
    let worst = |op: &str| {
        reports
            .iter()
            .filter(|r| r.op.starts_with(op))
            .map(|r| r.max_rel_err)
            .fold(0.0, f64::max)
    };
    let primitive_worst = ["matmul", "softmax_rows", "softmax_cols", "conv_pointwise"]
        .iter()
        .map(|op| worst(op))
        .fold(0.0, f64::max);
    let mut detail = format!(
        "{} checks over {GRAD_SEEDS} seeds, worst rel err: primitives {:.1e} (tol {:.0e}), block {:.1e}, tiny net {:.1e} (tol {:.0e}); order gap {:.1e} (tol {:.0e})",
        reports.len(),
        primitive_worst,
        check::PRIMITIVE_TOLERANCE,
        worst("block_left").max(worst("block_right")),
        worst("tiny_net"),
        check::COMPOSED_TOLERANCE,
        reports.iter().filter(|r| r.op == "block_order").map(|r| r.max_abs_err).fold(0.0, f64::max),
        check::ORDER_TOLERANCE,
    );
    if !failed.is_empty() {
        detail += &format!("; failed: {}", failed.join(" "));
    }
    Verdict {
        pass: failed.is_empty(),
        detail,
    }
}

fn degenerate() -> Verdict {
    let mut worst = 0.0f64;
    let mut exact = true;
    for seed in 0..10u64 {
        let (m, n, l) = (3, 4, 27);
        let a = normal(m, l, seed);
        // Constant logits: each descriptor is the spatial mean.
        let g = gather(&a, &Matrix::filled(n, l, 0.7)).unwrap();
        for i in 0..n {
            for (k, v) in g.descriptor(i).iter().enumerate() {
                let mean = a.row(k).iter().sum::<f64>() / l as f64;
                worst = worst.max((v - mean).abs());
            }
        }
        // A bag of one is broadcast to every location.
        let g1 = gather(&a, &normal(1, l, seed + 1)).unwrap();
        let z = distribute(&g1, &normal(1, l, seed + 2)).unwrap();
        for j in 0..l {
            exact &= z.column(j) == g1.descriptor(0);
        }
        // Zero output map: identity.
        let x = normal(8, l, seed + 3);
        let p = DoubleAttentionParams::<f64>::init(8, 2, 2, seed).unwrap();
        exact &= double_attention_forward(&x, &p, AssociationOrder::Auto)
            .unwrap()
            .output
            == x;
        // Shifting every logit along the normalized axis changes nothing.
        let logits = normal(5, 9, seed + 4).scale(3.0);
        let row_shift = Matrix::from_fn(5, 9, |r, c| logits.get(r, c) + (r as f64 - 2.0) * 4.5);
        let col_shift = Matrix::from_fn(5, 9, |r, c| logits.get(r, c) - (c as f64) * 1.75);
        worst = worst.max(
            softmax_rows(&logits)
                .unwrap()
                .max_abs_diff(&softmax_rows(&row_shift).unwrap())
                .unwrap(),
        );
        worst = worst.max(
            softmax_cols(&logits)
                .unwrap()
                .max_abs_diff(&softmax_cols(&col_shift).unwrap())
                .unwrap(),
        );
    }
    Verdict {
        pass: exact && worst <= EXACT_DOUBLE,
        detail: format!("GAP and shift max deviation {worst:.1e}, n=1 broadcast and W_out=0 identity exact: {exact}"),
    }
}

fn structural() -> Verdict {
    let (mut perm_gap, mut hull_gap, mut col_gap, mut core_gap) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
    let below = |v: f64, lo: f64, hi: f64| (lo - v).max(v - hi).max(0.0);
    for seed in 0..10u64 {
        let (c, l, m, n) = (8, 27, 3, 4);
        let x = normal(c, l, seed);
        let p = DoubleAttentionParams::<f64>::init_dense(c, m, n, seed + 50, true).unwrap();
        let perm = SeededStream::new(seed).permutation(l);
        let y = double_attention_forward(&x, &p, AssociationOrder::Auto)
            .unwrap()
            .output;
        let yp =
            double_attention_forward(&x.permute_cols(&perm).unwrap(), &p, AssociationOrder::Auto)
                .unwrap()
                .output;
        perm_gap = perm_gap.max(yp.max_abs_diff(&y.permute_cols(&perm).unwrap()).unwrap());

        let a = matmul(&p.w_phi, &x).unwrap();
        let b = matmul(&p.w_theta, &x).unwrap();
        let v = matmul(&p.w_rho, &x).unwrap();
        let g = gather(&a, &b).unwrap();
        let z = distribute(&g, &v).unwrap();
        for k in 0..m {
            let (alo, ahi) = a
                .row(k)
                .iter()
                .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            let (glo, ghi) = g
                .matrix()
                .row(k)
                .iter()
                .fold((f64::MAX, f64::MIN), |(lo, hi), &v| (lo.min(v), hi.max(v)));
            for &gv in g.matrix().row(k) {
                hull_gap = hull_gap.max(below(gv, alo, ahi));
            }
            for &zv in z.row(k) {
                hull_gap = hull_gap.max(below(zv, glo, ghi));
            }
        }

        let r = relation_matrix(&b, &v).unwrap();
        for j in 0..l {
            col_gap = col_gap.max((r.column(j).iter().sum::<f64>() - 1.0).abs());
        }
        // The plain core, with the same maps but no biases.
        let bare = DoubleAttentionParams::new(
            p.w_phi.clone(),
            p.w_theta.clone(),
            p.w_rho.clone(),
            p.w_out.clone(),
        )
        .unwrap();
        let core = double_attention_core(&x, &bare, AssociationOrder::Right).unwrap();
        core_gap = core_gap.max(matmul(&a, &r).unwrap().max_abs_diff(&core).unwrap());
    }
    Verdict {
        pass: perm_gap <= EXACT_DOUBLE && hull_gap == 0.0 && col_gap <= COLUMN_SUM && core_gap <= EXACT_DOUBLE,
        detail: format!(
            "permutation {perm_gap:.1e}, hull violation {hull_gap:.1e}, column sums {col_gap:.1e}, phi*R vs core {core_gap:.1e}"
        ),
    }
}

fn chooser() -> Verdict {
    let conv = CostConvention::default();
    let mut triples = 0u64;
    let mut wrong = 0u64;
    let mut flops_disagree_unequal = 0u64;
    for m in 1..=64usize {
        for n in 1..=64usize {
            for l in 1..=64usize {
                triples += 1;
                let shape = Shape4::new(1, 1, 1, l).unwrap();
                let left = a2_block_cost(shape, m, n, AssociationOrder::Left, &conv);
                let right = a2_block_cost(shape, m, n, AssociationOrder::Right, &conv);
                let memory_left = left.peak_intermediate_bytes < right.peak_intermediate_bytes;
                let chosen = choose_association(m, n, l);
                let auto = AssociationOrder::Auto.resolve(m, n, l);
                let rule_left = n * m <= l * l;
                wrong += u64::from(memory_left != (n * m < l * l));
                wrong += u64::from(auto != chosen || (chosen == Association::Left) != rule_left);
                let flops_left = a2_matmul_flops(m, n, l, Association::Left)
                    < a2_matmul_flops(m, n, l, Association::Right);
                if m == n {
                    wrong += u64::from(flops_left != (n * m < l * l));
                } else if flops_left != (n * m < l * l) {
                    flops_disagree_unequal += 1;
                }
            }
        }
    }
    Verdict {
        pass: wrong == 0,
        detail: format!(
            "{triples} triples; memory ordering and auto (ties left) match n*m vs L^2 everywhere, FLOPs ordering matches for m=n; \
             {flops_disagree_unequal} m!=n triples where FLOPs favour the other order (crossover L=2mn/(m+n))"
        ),
    }
}

fn tiny_accounting() -> Verdict {
    let mut checked = 0;
    let mut mismatches = Vec::new();
    let mut stream = SeededStream::new(9);
    for seed in 0..25u64 {
        let c = stream.next_range(1, 12);
        let shape = Shape4::new(
            c,
            stream.next_range(1, 3),
            stream.next_range(1, 4),
            stream.next_range(1, 5),
        )
        .unwrap();
        let (m, n) = (stream.next_range(1, 6), stream.next_range(1, 6));
        let net = tiny_descriptor(shape, m, n);
        let model = materialize_tiny::<f64>(&net, seed, TinyInit::Random).unwrap();
        let macs = model
            .forward(&normal(c, shape.locations(), seed))
            .unwrap()
            .macs;
        let predicted = count(&net, &CostConvention::default()).unwrap().flops;
        if macs != predicted {
            mismatches.push(format!("{shape} m={m} n={n}: {macs} vs {predicted}"));
        }
        checked += 1;
    }
    Verdict {
        pass: mismatches.is_empty(),
        detail: format!(
            "{checked} random tiny networks, executed multiply-adds equal the cost model {}",
            mismatches.join("; ")
        ),
    }
}

fn determinism() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let params = dir.path().join("params");
    let params = params.to_str().unwrap();
    let out = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let commands: Vec<Vec<String>> = [
        vec!["count", "--arch", "resnet26", "--insert", "a2@conv4x1"],
        vec![
            "count",
            "--arch",
            "resnet50_video",
            "--insert",
            "nl@conv3x2",
            "--format",
            "csv",
        ],
        vec![
            "equiv",
            "--c",
            "16",
            "--shape",
            "4,4,4",
            "--seed",
            "7",
            "--precision",
            "single",
        ],
        vec![
            "gradcheck",
            "--target",
            "block",
            "--seed",
            "3",
            "--trials",
            "2",
        ],
        vec![
            "bench", "--c", "16", "--shape", "2,3,3", "--m", "4", "--n", "4", "--repeat", "2",
            "--warmup", "0",
        ],
        vec![
            "init", "--c", "16", "--seed", "4", "--dense", "--out", params,
        ],
        vec!["arch", "--arch", "resnet29", "--insert", "a2@conv4x3"],
    ]
    .iter()
    .map(|v| v.iter().map(|s| s.to_string()).collect())
    .collect();
    let run = |args: &[String]| {
        let o = Command::new(env!("CARGO_BIN_EXE_a2net"))
            .args(args)
            .arg("--no-timings")
            .output()
            .unwrap();
        (o.status.code(), o.stdout)
    };
    let mut identical = 0;
    let mut differing = Vec::new();
    for args in &commands {
        let (a, b) = (run(args), run(args));
        if a == b && a.0 == Some(0) {
            identical += 1;
        } else {
            differing.push(args[0].clone());
        }
    }
    let y = out("y.a2tn");
    let forward = || {
        run(&[
            "forward",
            "--params",
            params,
            "--input",
            "random:11",
            "--shape",
            "2,2,3",
            "--out",
            &y,
        ]
        .map(String::from))
    };
    let f1 = forward();
    let first = std::fs::read(&y).unwrap_or_default();
    std::fs::remove_file(&y).ok();
    let f2 = forward();
    let second = std::fs::read(&y).unwrap_or_default();
    if f1.0 == Some(0) && f1 == f2 && !first.is_empty() && first == second {
        identical += 1;
    } else {
        differing.push("forward".into());
    }
    Verdict {
        pass: differing.is_empty(),
        detail: format!(
            "{identical}/{} commands byte-identical across two runs {}",
            commands.len() + 1,
            differing.join(" ")
        ),
    }
}

type Criterion = (&'static str, fn() -> Verdict, Duration);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("baseline totals", baseline_totals, FAST),
        ("block deltas", deltas, FAST),
        ("association memory", memory, FAST),
        (
            "left/right equivalence",
            equivalence,
            Duration::from_secs(30),
        ),
        ("gradient verification", gradients, Duration::from_secs(120)),
        ("degenerate reductions", degenerate, Duration::from_secs(10)),
        ("structural invariants", structural, Duration::from_secs(30)),
        ("chooser correctness", chooser, Duration::from_secs(5)),
        (
            "execution vs accounting",
            tiny_accounting,
            Duration::from_secs(10),
        ),
        ("CLI determinism", determinism, Duration::from_secs(120)),
    ];
    let mut failures = 0;
    for (i, (name, run, budget)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let verdict = run();
        let elapsed = start.elapsed();
        let pass = verdict.pass && elapsed < budget;
        failures += usize::from(!pass);
        println!(
            "criterion {:>2} {:<24} {} ({:.2} s, budget {} s): {}",
            i + 1,
            name,
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs_f64(),
            verdict.detail
        );
    }
    println!("acceptance: {}/10 criteria passed", 10 - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
