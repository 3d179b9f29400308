//! Acceptance gate: twelve end-to-end checks, one test per check.
//!
//! Every test prints exactly one `ACCEPTANCE NN <name>: PASS|FAIL` line
//! before asserting, so a plain run doubles as a checklist:
//!
//! ```text
//! cargo test -p rftlab --test acceptance -- --test-threads=1 --nocapture
//! ```
//!
//! The expensive training runs (pretraining plus the exact-gradient
//! finetuning pair on the controlled dataset) execute once and are shared
//! across checks 07-11 through a lazily initialized static.

use std::sync::LazyLock;
use std::time::Instant;

use rftlab_core::bounds::{run_sweep, SweepConfig};
use rftlab_core::diagnostics::{
    correlation_report, estimate_stats, pearson, InputStats, StatMethod, StatMode,
};
use rftlab_core::grad::{grad_ppo_clip, grad_ppo_kl, grad_value, oracle_suite, OracleSuiteConfig};
use rftlab_core::gradflow::{
    closed_form_crossing, conserved_quantity, crossing_time, integrate_mu, linear_fit,
    separation_sweep, sigma_from_mu, FlowKind, LinearSetting, SeparationConfig,
};
use rftlab_core::instances::{random_instance, GeneratorConfig};
use rftlab_core::policy::{Architecture, Input, SoftmaxPolicy, Vocabulary, DEFAULT_ENUM_CAP};
use rftlab_core::reward::{reward_stats, MatchRule, RewardSpec};
use rftlab_core::seeding::substream;
use rftlab_core::trainlab::{
    build_controlled_dataset, finetune_reward, mean_reward, partial_sft_then_rft, pretrain,
    rft_train, sample_metrics, sft_train, Batch, ControlledDataset, ControlledSpec, Group,
    MetricObjective, MitigationConfig, OptimizerConfig, SampleMetrics, TrainOptions,
    TrainingTrace,
};

/// Print the checklist line, then assert.
fn gate(num: u32, name: &str, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    println!("ACCEPTANCE {num:02} {name}: {verdict} ({detail})");
    assert!(ok, "acceptance {num:02} ({name}) failed: {detail}");
}

fn median(mut values: Vec<f64>) -> f64 {
    assert!(!values.is_empty(), "median of empty slice");
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn group_values(
    metrics: &[SampleMetrics],
    dataset: &ControlledDataset,
    group: Group,
    f: impl Fn(&SampleMetrics) -> f64,
) -> Vec<f64> {
    metrics
        .iter()
        .zip(&dataset.groups)
        .filter(|(_, g)| **g == group)
        .map(|(m, _)| f(m))
        .collect()
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn exact_stats(
    policy: &SoftmaxPolicy,
    dataset: &ControlledDataset,
    reward: &RewardSpec,
) -> Vec<InputStats> {
    sample_metrics(policy, dataset, reward, MetricObjective::Value)
        .expect("sample metrics")
        .iter()
        .enumerate()
        .map(|(i, m)| InputStats {
            input_id: i,
            reward_mean: m.reward_mean,
            reward_std: m.reward_std,
            method: StatMethod::Exact,
        })
        .collect()
}

/// Shared heavy runs: one pretraining pass plus the Adam reward/supervised
/// finetuning pair on the standard controlled dataset.
struct HeavyRuns {
    spec: ControlledSpec,
    dataset: ControlledDataset,
    reward: RewardSpec,
    pretrained: SoftmaxPolicy,
    /// Per-sample value-objective metrics at the pretrained policy
    /// ("epoch 0" of finetuning).
    pre_metrics: Vec<SampleMetrics>,
    rft_policy: SoftmaxPolicy,
    rft_trace: TrainingTrace,
    sft_policy: SoftmaxPolicy,
    sft_trace: TrainingTrace,
    elapsed_secs: f64,
}

fn finetune_opt() -> OptimizerConfig {
    OptimizerConfig::adam(1e-4, 5000)
}

static HEAVY: LazyLock<HeavyRuns> = LazyLock::new(|| {
    let start = Instant::now();
    let spec = ControlledSpec::default();
    let dataset = build_controlled_dataset(&spec).expect("controlled dataset");
    let reward = finetune_reward(&dataset, spec.incorrect_reward_flipped).expect("reward spec");

    let mut pre_opt = OptimizerConfig::adam(2e-3, 1000);
    pre_opt.batch = Batch::Size(100);
    let (pretrained, _pre_trace) = pretrain(&spec, &dataset, &pre_opt).expect("pretraining");
    let pre_metrics = sample_metrics(&pretrained, &dataset, &reward, MetricObjective::Value)
        .expect("pretrained metrics");

    let (rft_policy, rft_trace) =
        rft_train(&pretrained, &dataset, &reward, &finetune_opt(), &TrainOptions::default())
            .expect("reward finetuning");
    let (sft_policy, sft_trace) =
        sft_train(&pretrained, &dataset, &reward, None, &finetune_opt(), 50)
            .expect("supervised finetuning");

    HeavyRuns {
        spec,
        dataset,
        reward,
        pretrained,
        pre_metrics,
        rft_policy,
        rft_trace,
        sft_policy,
        sft_trace,
        elapsed_secs: start.elapsed().as_secs_f64(),
    }
});

#[test]
fn a01_gradient_oracles() {
    let start = Instant::now();
    let config = OracleSuiteConfig::default();
    assert!(config.count >= 100, "suite must cover at least 100 instances");
    assert!(config.generator.size_range.1 <= 6, "vocabulary cap");
    assert!(config.generator.l_out_range.1 <= 3, "output length cap");
    let report = oracle_suite(&config).expect("oracle suite");
    let elapsed = start.elapsed().as_secs_f64();

    let max_err = report.max_rel_err();
    let oversized = report.cases.iter().filter(|c| c.param_count > 2000).count();
    let ok = report.cases.len() >= 100
        && oversized == 0
        && report.failures() == 0
        && max_err <= 1e-4
        && elapsed <= 120.0;
    gate(
        1,
        "gradient_oracles",
        ok,
        &format!(
            "cases {}, failures {}, max rel err {:.3e}, params>2000 on {} cases, {:.1}s",
            report.cases.len(),
            report.failures(),
            max_err,
            oversized,
            elapsed
        ),
    );
}

#[test]
fn a02_bound_sweeps() {
    let start = Instant::now();
    let config = SweepConfig { count: 1000, ..SweepConfig::default() };
    let summary = run_sweep(&config).expect("bound sweep");
    let elapsed = start.elapsed().as_secs_f64();

    let violations = summary.total_violations();
    let thin = summary.kinds.iter().filter(|k| k.checked < 1000).count();
    let ok = violations == 0 && thin == 0 && elapsed <= 300.0;
    let per_kind: Vec<String> = summary
        .kinds
        .iter()
        .map(|k| format!("{} {}/{}", k.kind.name(), k.violations, k.checked))
        .collect();
    gate(
        2,
        "bound_sweeps",
        ok,
        &format!("violations/checked: {}; {:.1}s", per_kind.join(", "), elapsed),
    );
}

#[test]
fn a03_reference_coincidence() {
    let generator = GeneratorConfig::default();
    let mut max_clip = 0.0f64;
    let mut max_kl = 0.0f64;
    for index in 0..50 {
        let mut rng = substream(4242, index as u64);
        let mut inst = random_instance(&mut rng, &generator, index);
        inst.ref_policy = inst.policy.clone();

        let value = grad_value(&inst.policy, inst.input_id, &inst.x, &inst.reward, generator.cap)
            .expect("value gradient");
        let clip = grad_ppo_clip(
            &inst.policy,
            &inst.ref_policy,
            inst.input_id,
            &inst.x,
            &inst.reward,
            0.2,
            generator.cap,
        )
        .expect("clipped-surrogate gradient");
        let kl = grad_ppo_kl(
            &inst.policy,
            &inst.ref_policy,
            inst.input_id,
            &inst.x,
            &inst.reward,
            0.7,
            generator.cap,
        )
        .expect("kl-penalized gradient");

        max_clip = max_clip.max(inf_norm_diff(value.values(), clip.values()));
        max_kl = max_kl.max(inf_norm_diff(value.values(), kl.values()));
    }
    let ok = max_clip <= 1e-12 && max_kl <= 1e-12;
    gate(
        3,
        "reference_coincidence",
        ok,
        &format!("max inf-norm gap: clip {max_clip:.3e}, kl {max_kl:.3e} over 50 instances"),
    );
}

#[test]
fn a04_closed_form_crossings() {
    let start = Instant::now();
    let mut worst_rel = 0.0f64;
    let mut worst_cons = 0.0f64;
    for k in [2usize, 5, 10] {
        for n in [1usize, 10] {
            for mu0 in [-0.1, -0.5, -1.0, -2.0, -4.0, -6.0] {
                let setting = LinearSetting::new(k, n, mu0).expect("setting");
                for kind in [FlowKind::Reward, FlowKind::CrossEntropy] {
                    let closed = closed_form_crossing(kind, &setting);
                    let numeric = crossing_time(kind, &setting).expect("crossing").t;
                    worst_rel = worst_rel.max((numeric - closed).abs() / closed);

                    let horizon = 0.9 * closed;
                    let step = (horizon / 2000.0).min(0.01);
                    let traj =
                        integrate_mu(kind, &setting, horizon, step).expect("trajectory");
                    let q0 = conserved_quantity(kind, &setting, traj.mus[0], traj.ts[0]);
                    for (t, mu) in traj.ts.iter().zip(&traj.mus) {
                        let q = conserved_quantity(kind, &setting, *mu, *t);
                        worst_cons = worst_cons.max((q - q0).abs());
                    }
                }
            }
        }
    }
    let spot = LinearSetting::new(2, 1, -1.0).expect("spot setting");
    let spot_reward = closed_form_crossing(FlowKind::Reward, &spot);
    let spot_ce = closed_form_crossing(FlowKind::CrossEntropy, &spot);
    let elapsed = start.elapsed().as_secs_f64();

    let ok = worst_rel <= 1e-3
        && worst_cons <= 1e-6
        && (spot_reward - 1.08760).abs() <= 5e-6
        && (spot_ce - 0.81606).abs() <= 5e-6
        && elapsed <= 60.0;
    gate(
        4,
        "closed_form_crossings",
        ok,
        &format!(
            "max rel err {worst_rel:.3e}, max conservation drift {worst_cons:.3e}, \
             spot times {spot_reward:.6}/{spot_ce:.6}, {elapsed:.1}s"
        ),
    );
}

#[test]
fn a05_separation_scaling() {
    let report = separation_sweep(&SeparationConfig::default()).expect("separation sweep");
    let slope = report.reward_fit.slope;
    let ce_r2 = report.ce_fit.r2;

    let ratios = report.ratios();
    let tail = &ratios[ratios.len() - report.tail_rows..];
    let increasing = tail.windows(2).all(|w| w[1] > w[0]);

    let ok = report.tail_rows >= 2
        && (1.8..=2.2).contains(&slope)
        && ce_r2 >= 0.99
        && increasing;
    gate(
        5,
        "separation_scaling",
        ok,
        &format!(
            "reward log-log slope {slope:.4}, ce fit r2 {ce_r2:.6}, \
             {} tail rows, ratio strictly increasing: {increasing}",
            report.tail_rows
        ),
    );
}

#[test]
fn a06_initial_std_identity() {
    let mut worst = 0.0f64;
    for k in [2usize, 3, 5, 10] {
        for mu0 in [-0.1, -0.5, -1.0, -2.0, -4.0, -6.0] {
            let sigma = sigma_from_mu(k, mu0);

            let vocab = Vocabulary::new(k, 1, 1).expect("vocabulary");
            let arch = Architecture::Linear { input_dim: 1 };
            let mut weights = vec![0.0; k];
            weights[0] = mu0;
            let policy = SoftmaxPolicy::new(vocab, arch, weights).expect("policy");
            let x = Input::Features(vec![1.0]);
            let reward = RewardSpec::label_match(vec![MatchRule::standard(vec![0])])
                .expect("reward");
            let stats =
                reward_stats(&policy, 0, &x, &reward, DEFAULT_ENUM_CAP).expect("stats");

            worst = worst.max((sigma - stats.std).abs());
        }
    }
    let ok = worst <= 1e-10;
    gate(6, "initial_std_identity", ok, &format!("max |closed-form - enumerated| {worst:.3e}"));
}

#[test]
fn a07_controlled_experiment() {
    let h = &*HEAVY;
    assert_eq!(h.spec.input_dim, 32);
    assert_eq!(h.spec.n_samples, 1000);
    assert_eq!(h.spec.n_labels, 10);
    assert_eq!(h.spec.n_pretrain_labels, 5);
    assert!((h.spec.flip_fraction - 0.1).abs() < 1e-12);

    let flipped_std =
        median(group_values(&h.pre_metrics, &h.dataset, Group::SmallStd, |m| m.reward_std));
    let kept_std =
        median(group_values(&h.pre_metrics, &h.dataset, Group::LargeStd, |m| m.reward_std));
    let flipped_grad =
        median(group_values(&h.pre_metrics, &h.dataset, Group::SmallStd, |m| m.grad_norm));
    let kept_grad =
        median(group_values(&h.pre_metrics, &h.dataset, Group::LargeStd, |m| m.grad_norm));

    let rft_kept = h.rft_trace.last_row(Group::LargeStd).expect("rft trace").reward_mean;
    let rft_flipped = h.rft_trace.last_row(Group::SmallStd).expect("rft trace").reward_mean;
    let sft_acc_flipped = h.sft_trace.last_row(Group::SmallStd).expect("sft trace").accuracy;
    let sft_acc_kept = h.sft_trace.last_row(Group::LargeStd).expect("sft trace").accuracy;

    let ok = flipped_std < 0.2
        && kept_std > 0.6
        && rft_kept > 0.9
        && rft_flipped < -0.5
        && flipped_grad * 10.0 <= kept_grad
        && sft_acc_flipped > 0.99
        && sft_acc_kept > 0.99
        && h.elapsed_secs <= 900.0;
    gate(
        7,
        "controlled_experiment",
        ok,
        &format!(
            "pretrain std medians flipped {flipped_std:.4}/kept {kept_std:.4}, \
             reward-finetune finals flipped {rft_flipped:.4}/kept {rft_kept:.4}, \
             grad-norm medians flipped {flipped_grad:.3e}/kept {kept_grad:.3e}, \
             supervised accuracy flipped {sft_acc_flipped:.4}/kept {sft_acc_kept:.4}, \
             {:.0}s",
            h.elapsed_secs
        ),
    );
}

#[test]
fn a08_sgd_stays_stalled() {
    let h = &*HEAVY;
    let opt = OptimizerConfig::sgd(1e-2, 5000);
    let (_policy, trace) =
        rft_train(&h.pretrained, &h.dataset, &h.reward, &opt, &TrainOptions::default())
            .expect("sgd reward finetuning");

    let sgd_flipped = trace.last_row(Group::SmallStd).expect("sgd trace").reward_mean;
    let adam_flipped = h.rft_trace.last_row(Group::SmallStd).expect("adam trace").reward_mean;

    let ok = sgd_flipped <= adam_flipped + 0.05;
    gate(
        8,
        "sgd_stays_stalled",
        ok,
        &format!("flipped-group final reward: sgd {sgd_flipped:.4} vs adam {adam_flipped:.4}"),
    );
}

#[test]
fn a09_mild_penalty_freezes() {
    let h = &*HEAVY;
    let mild = finetune_reward(&h.dataset, 0.5).expect("mild reward");
    let (_policy, trace) =
        rft_train(&h.pretrained, &h.dataset, &mild, &finetune_opt(), &TrainOptions::default())
            .expect("mild-penalty reward finetuning");

    let first = trace.first_row(Group::SmallStd).expect("trace start").reward_mean;
    let last = trace.last_row(Group::SmallStd).expect("trace end").reward_mean;
    let change = (last - first).abs();

    let ok = change <= 0.1;
    gate(
        9,
        "mild_penalty_freezes",
        ok,
        &format!("flipped-group reward moved {change:.4} ({first:.4} -> {last:.4})"),
    );
}

#[test]
fn a10_partial_sft_mitigation() {
    let h = &*HEAVY;
    let config = MitigationConfig::new(finetune_opt(), finetune_opt());
    let (_trace, report) = partial_sft_then_rft(&h.pretrained, &h.dataset, &h.reward, &config)
        .expect("mitigation run");

    // Reference pipeline: the full supervised run followed by the same
    // reward-finetuning budget.
    let (ref_policy, _ref_trace) =
        rft_train(&h.sft_policy, &h.dataset, &h.reward, &finetune_opt(), &TrainOptions::default())
            .expect("reference finetuning");
    let reference = mean_reward(&ref_policy, &h.dataset, &h.reward).expect("reference reward");

    let reward_ok = report.final_reward >= 0.9 * reference;
    let count_ok = 2 * report.count_after <= report.count_before;
    let ok = reward_ok && count_ok;
    gate(
        10,
        "partial_sft_mitigation",
        ok,
        &format!(
            "final reward {:.4} vs 0.9 x reference {:.4} (no-sft baseline {:.4}); \
             stalled count {} -> {} across the sft phase (need at least a 50% drop); \
             sft steps run {}, subset size {}",
            report.final_reward,
            reference,
            report.baseline_final_reward,
            report.count_before,
            report.count_after,
            report.sft_steps_run,
            report.sft_subset_size
        ),
    );
}

#[test]
fn a11_diagnostics_protocol() {
    // Affine series must give exactly +/-1 up to rounding.
    let xs: Vec<f64> = (0..40).map(|i| 0.37 * i as f64 + ((i * i) % 7) as f64).collect();
    let up: Vec<f64> = xs.iter().map(|x| 3.5 * x - 2.0).collect();
    let down: Vec<f64> = xs.iter().map(|x| -0.25 * x + 4.0).collect();
    let r_up = pearson(&xs, &up).expect("pearson");
    let r_down = pearson(&xs, &down).expect("pearson");
    let affine_ok = (r_up - 1.0).abs() <= 1e-12 && (r_down + 1.0).abs() <= 1e-12;

    // Monte-Carlo stats must converge to the enumerated ones at the
    // square-root rate: fit |error| against n on log-log axes.
    let vocab = Vocabulary::new(3, 2, 1).expect("vocabulary");
    let arch = Architecture::TabularAr { n_inputs: 1 };
    let logits = vec![0.3, -0.4, 0.8, 0.1, 0.5, -0.2, -0.6, 0.2, 0.4, 0.7, -0.3, 0.0];
    let policy = SoftmaxPolicy::new(vocab, arch, logits).expect("policy");
    let x = Input::Id(0);
    let reward =
        RewardSpec::label_match(vec![MatchRule::standard(vec![1, 2])]).expect("reward");
    let exact = reward_stats(&policy, 0, &x, &reward, DEFAULT_ENUM_CAP).expect("exact stats");

    let ns = [100usize, 1_000, 10_000, 100_000];
    let streams = 128u64;
    let mut log_n = Vec::new();
    let mut log_mean_err = Vec::new();
    let mut log_std_err = Vec::new();
    for (i, &n) in ns.iter().enumerate() {
        let mut mean_err = 0.0;
        let mut std_err = 0.0;
        for j in 0..streams {
            let seed = 1_000 + (i as u64) * streams + j;
            let sampled = estimate_stats(&policy, 0, &x, &reward, StatMode::Sampled { n, seed })
                .expect("sampled stats");
            mean_err += (sampled.reward_mean - exact.mean).abs();
            std_err += (sampled.reward_std - exact.std).abs();
        }
        log_n.push((n as f64).ln());
        log_mean_err.push((mean_err / streams as f64).ln());
        log_std_err.push((std_err / streams as f64).ln());
    }
    let mean_fit = linear_fit(&log_n, &log_mean_err).expect("mean fit");
    let std_fit = linear_fit(&log_n, &log_std_err).expect("std fit");
    let rate_ok = (-0.65..=-0.35).contains(&mean_fit.slope)
        && (-0.65..=-0.35).contains(&std_fit.slope);

    // Pretraining reward std must predict the reward-finetuning improvement
    // better than it predicts the supervised one.
    let h = &*HEAVY;
    let pre: Vec<InputStats> = h
        .pre_metrics
        .iter()
        .enumerate()
        .map(|(i, m)| InputStats {
            input_id: i,
            reward_mean: m.reward_mean,
            reward_std: m.reward_std,
            method: StatMethod::Exact,
        })
        .collect();
    let post_rft = exact_stats(&h.rft_policy, &h.dataset, &h.reward);
    let post_sft = exact_stats(&h.sft_policy, &h.dataset, &h.reward);
    let rft_corr = correlation_report(&pre, &post_rft).expect("rft correlation");
    let sft_corr = correlation_report(&pre, &post_sft).expect("sft correlation");
    let corr_ok = rft_corr > sft_corr;

    let ok = affine_ok && rate_ok && corr_ok;
    gate(
        11,
        "diagnostics_protocol",
        ok,
        &format!(
            "affine pearson {r_up:.15}/{r_down:.15}, convergence slopes \
             mean {:.3}/std {:.3}, improvement correlation rft {rft_corr:.4} vs sft {sft_corr:.4}",
            mean_fit.slope, std_fit.slope
        ),
    );
}

#[test]
fn a12_byte_identical_reruns() {
    use std::fs;
    use std::path::{Path, PathBuf};
    use std::process::Command;

    let bin = env!("CARGO_BIN_EXE_rftlab");
    let root = tempfile::tempdir().expect("tempdir");
    let dir_a = root.path().join("a");
    let dir_b = root.path().join("b");

    // plot-data reads the first run's trace in both reruns; identical input
    // paths keep the comparison about the command's own determinism.
    let trace_path = dir_a.join("controlled").join("rft_trace.csv");
    let config_path = root.path().join("config.toml");
    let config = format!(
        r#"
seed = 5

[bounds]
instances = 30
probe_instances = 10

[gradflow]
mu0_start = -1.0
mu0_end = -12.0
mu0_step = -1.0

[controlled]
n_samples = 48
input_dim = 8
n_labels = 4
n_pretrain_labels = 3
flip_fraction = 0.125
hidden = [24]
log_every = 10
export_dataset = true

[controlled.pretrain]
algo = "adam"
learning_rate = 5e-3
epochs = 300
batch = 12

[controlled.finetune]
algo = "adam"
learning_rate = 1e-3
epochs = 40
batch = 0

[mitigate]
step_fractions = [0.25]
sample_fractions = [0.5]

[plot_data]
traces = [{trace:?}]
"#,
        trace = trace_path
    );
    fs::write(&config_path, config).expect("write config");

    let commands =
        ["verify-bounds", "gradflow", "controlled", "mitigate", "diagnose", "plot-data"];
    let run_all = |out_dir: &Path| {
        for sub in commands {
            let status = Command::new(bin)
                .arg(sub)
                .arg("--config")
                .arg(&config_path)
                .arg("--out")
                .arg(out_dir)
                .status()
                .expect("spawn rftlab");
            assert!(status.success(), "{sub} exited with {status}");
        }
    };
    run_all(&dir_a);
    run_all(&dir_b);

    fn collect(dir: &Path, base: &Path, out: &mut Vec<PathBuf>) {
        for entry in fs::read_dir(dir).expect("read_dir") {
            let path = entry.expect("dir entry").path();
            if path.is_dir() {
                collect(&path, base, out);
            } else {
                out.push(path.strip_prefix(base).expect("relative path").to_path_buf());
            }
        }
    }

    let mut files_a = Vec::new();
    let mut files_b = Vec::new();
    collect(&dir_a, &dir_a, &mut files_a);
    collect(&dir_b, &dir_b, &mut files_b);
    files_a.sort();
    files_b.sort();
    assert_eq!(files_a, files_b, "rerun produced a different artifact set");

    let mut compared = 0usize;
    let mut mismatched = Vec::new();
    for rel in &files_a {
        if rel.file_name().is_some_and(|n| n == "manifest.json") {
            // Manifests carry wall-clock timestamps by design.
            continue;
        }
        let bytes_a = fs::read(dir_a.join(rel)).expect("read first run");
        let bytes_b = fs::read(dir_b.join(rel)).expect("read rerun");
        compared += 1;
        if bytes_a != bytes_b {
            mismatched.push(rel.display().to_string());
        }
    }

    let ok = compared > 0 && mismatched.is_empty();
    gate(
        12,
        "byte_identical_reruns",
        ok,
        &format!(
            "{} files compared across {} commands, mismatches: [{}]",
            compared,
            commands.len(),
            mismatched.join(", ")
        ),
    );
}
