"""Command-line front door.

Subcommands:

* ``run``        -- simulate one configured scenario under one policy and
                    write the event trace (CSV) plus run metrics.
* ``reproduce``  -- sweep the arrival-rate grid of the two load studies over
                    several seeds; write per-cell and summary tables and the
                    matching figures.
* ``verify``     -- run a named property suite; exit 0 only if nothing fails.
* ``oracle``     -- solve a small instance file offline.

Exit codes: 0 success, 1 property failure, 2 configuration/usage error,
3 policy-contract violation.
"""

from __future__ import annotations

import argparse
import bisect
import csv
import dataclasses
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np
from scipy import stats as scipy_stats

from . import report
from .core import PolicyContractError, SimulationError
from .engine import SimulationTrace, compare_traces, run_simulation, write_trace_csv
from .oracle import (
    load_instance,
    optimal_offline,
    verify_dual_reward_optimality,
    verify_dual_service_optimality,
    verify_queue_size_equality,
)
from .policies import POLICY_NAMES, REGISTRY, CmuThetaPolicy, EdfPolicy, MudPolicy
from .workload import (
    STUDY_LAMBDAS,
    ConfigError,
    DistSpec,
    ScenarioSpec,
    adversarial_bounds,
    adversarial_mud_stream,
    dual_reward_instance,
    dual_service_instance,
    generate_stream,
    load_config,
    mmb_scenario,
    mmm_scenario,
)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_CONTRACT = 3

# Reward classes used by the cmu/theta policies when the reward distribution
# is continuous: equal-mass quantile buckets.
CONTINUOUS_REWARD_CLASSES = 16

REPRODUCE_POLICIES = ("edf", "mud", "medf", "cmutheta", "cmutheta_edf", "greedy")

# Test/plugin hook: extra zero-argument policy factories selectable by name.
EXTRA_POLICIES: dict = {}


class _BucketClassifier:
    """Maps a job to its reward-quantile bucket (picklable for worker pools)."""

    def __init__(self, edges: tuple[float, ...]):
        self.edges = edges

    def __call__(self, job):
        return bisect.bisect_right(self.edges, job.reward)


def cmu_theta_config(scenario: ScenarioSpec):
    """Class coefficients for the cmu/theta policies under a scenario.

    Finite reward supports get one class per reward value with the reward as
    its cost weight; continuous rewards are split into equal-mass quantile
    buckets whose weight is the bucket's median reward.  The service and
    abandonment rates are the reciprocals of the mean service time and mean
    deadline.
    """
    mu = 1.0 / scenario.service.mean()
    theta = 1.0 / scenario.deadline.mean()
    points = scenario.reward.support_points()
    if points is not None:
        coefficients = {w: (w, mu, theta) for w in points}
        return coefficients, _reward_as_class
    k = CONTINUOUS_REWARD_CLASSES
    edges = tuple(scenario.reward.quantile(i / k) for i in range(1, k))
    reps = [scenario.reward.quantile((i + 0.5) / k) for i in range(k)]
    coefficients = {i: (reps[i], mu, theta) for i in range(k)}
    return coefficients, _BucketClassifier(edges)


def _reward_as_class(job):
    return job.reward


def make_policy(name: str, scenario: ScenarioSpec | None = None):
    """Instantiate a policy by its public name."""
    if name in EXTRA_POLICIES:
        return EXTRA_POLICIES[name]()
    if name in REGISTRY:
        return REGISTRY[name]()
    if name in ("cmutheta", "cmutheta_edf"):
        if scenario is None:
            raise ConfigError(
                f"policy {name!r} needs a scenario to derive its class coefficients")
        coefficients, classify = cmu_theta_config(scenario)
        intra = "edf" if name.endswith("_edf") else "fcfs"
        return CmuThetaPolicy(coefficients, classify, intra_order=intra)
    raise KeyError(name)


def _known_policy_names() -> list[str]:
    return sorted(set(POLICY_NAMES) | set(EXTRA_POLICIES))


# ---------------------------------------------------------------------------
# run


def _write_metrics(trace: SimulationTrace, path: str, fmt: str) -> None:
    data = trace.metrics()
    if fmt == "json":
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(data, fh, indent=2)
            fh.write("\n")
    else:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["key", "value"])
            for key, value in data.items():
                writer.writerow([key, json.dumps(value)])


def cmd_run(args) -> int:
    try:
        spec = load_config(args.config)
    except (ConfigError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        spec = dataclasses.replace(spec, seed=args.seed)
    if args.jobs is not None:
        spec = dataclasses.replace(spec, n_jobs=args.jobs)
    name = args.policy
    if name not in _known_policy_names():
        print(f"error: unknown policy {name!r}; valid names: "
              f"{', '.join(_known_policy_names())}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        policy = make_policy(name, spec)
        jobs = generate_stream(spec)
    except (ConfigError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        trace = run_simulation(jobs, policy, record_events=not args.no_trace)
    except PolicyContractError as err:
        print(f"policy contract violation: {err}", file=sys.stderr)
        return EXIT_CONTRACT
    os.makedirs(args.out, exist_ok=True)
    metrics_path = os.path.join(args.out, f"{name}_metrics.{args.format}")
    _write_metrics(trace, metrics_path, args.format)
    written = [metrics_path]
    if trace.records is not None:
        trace_path = os.path.join(args.out, f"{name}_trace.csv")
        write_trace_csv(trace, trace_path)
        written.append(trace_path)
    print(f"{name}: served={trace.served_count} dropped={trace.dropped_count} "
          f"reward={trace.total_reward:g} (wrote {', '.join(written)})")
    return EXIT_OK


# ---------------------------------------------------------------------------
# reproduce


def _study_scenario(study: str, lambda_a: float, n_jobs: int, seed: int) -> ScenarioSpec:
    if study == "mmb":
        return mmb_scenario(lambda_a, n_jobs, seed)
    if study == "mmm":
        return mmm_scenario(lambda_a, n_jobs, seed)
    raise ConfigError(f"unknown study {study!r}; expected 'mmb' or 'mmm'")


def _reproduce_cell(task: tuple[str, float, int, int]) -> list[dict]:
    """One (arrival rate, seed) cell: all policies on one identical stream."""
    study, lambda_a, seed, n_jobs = task
    spec = _study_scenario(study, lambda_a, n_jobs, seed)
    jobs = generate_stream(spec)
    baseline = run_simulation(jobs, EdfPolicy(), record_events=False)
    rows = []
    for name in REPRODUCE_POLICIES:
        if name == "edf":
            trace = baseline
        else:
            trace = run_simulation(jobs, make_policy(name, spec), record_events=False)
        if trace.stream_checksum != baseline.stream_checksum:
            raise SimulationError("relative metrics computed against a different stream")
        if not trace.bound_satisfied:
            raise SimulationError(
                f"queue bound violated by {name} at lambda_a={lambda_a} seed={seed}")
        rows.append({
            "lambda_a": lambda_a,
            "policy": name,
            "seed": seed,
            "served": trace.served_count,
            "dropped": trace.dropped_count,
            "reward": trace.total_reward,
            "rel_reward": trace.total_reward / baseline.total_reward,
            "rel_jobs": trace.served_count / baseline.served_count,
            "stream_checksum": trace.stream_checksum,
        })
    return rows


def _confidence_half_width(samples: np.ndarray) -> float:
    """Half width of the two-sided 95% t-interval for the mean."""
    n = len(samples)
    if n < 2:
        return 0.0
    sd = float(np.std(samples, ddof=1))
    return float(scipy_stats.t.ppf(0.975, n - 1)) * sd / math.sqrt(n)


def run_reproduce(study: str, *, n_jobs: int = 100_000, seeds: int = 10,
                  workers: int | None = None,
                  lambdas: tuple[float, ...] = STUDY_LAMBDAS):
    """Run the full (arrival rate x policy x seed) grid; returns (rows, summary)."""
    tasks = [(study, la, seed, n_jobs) for la in lambdas for seed in range(seeds)]
    if workers is None:
        workers = min(os.cpu_count() or 1, len(tasks))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_reproduce_cell, tasks))
    else:
        results = [_reproduce_cell(task) for task in tasks]
    rows = [row for cell in results for row in cell]
    summary = []
    for la in lambdas:
        for policy in REPRODUCE_POLICIES:
            rr = np.array([r["rel_reward"] for r in rows
                           if r["lambda_a"] == la and r["policy"] == policy])
            rj = np.array([r["rel_jobs"] for r in rows
                           if r["lambda_a"] == la and r["policy"] == policy])
            summary.append({
                "lambda_a": la,
                "policy": policy,
                "seeds": len(rr),
                "mean_rel_reward": float(rr.mean()),
                "ci_rel_reward": _confidence_half_width(rr),
                "mean_rel_jobs": float(rj.mean()),
                "ci_rel_jobs": _confidence_half_width(rj),
            })
    return rows, summary


def write_reproduce_outputs(study: str, rows, summary, out_dir: str,
                            figures: bool = True, meta: dict | None = None) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    written = []
    table_path = os.path.join(out_dir, f"{study}_table.csv")
    with open(table_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda_a", "policy", "seed", "served", "dropped",
                         "reward", "rel_reward", "rel_jobs"])
        for r in rows:
            writer.writerow([r["lambda_a"], r["policy"], r["seed"], r["served"],
                             r["dropped"], repr(r["reward"]),
                             repr(r["rel_reward"]), repr(r["rel_jobs"])])
    written.append(table_path)
    summary_path = os.path.join(out_dir, f"{study}_summary.csv")
    with open(summary_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lambda_a", "policy", "seeds", "mean_rel_reward",
                         "ci_rel_reward", "mean_rel_jobs", "ci_rel_jobs"])
        for r in summary:
            writer.writerow([r["lambda_a"], r["policy"], r["seeds"],
                             repr(r["mean_rel_reward"]), repr(r["ci_rel_reward"]),
                             repr(r["mean_rel_jobs"]), repr(r["ci_rel_jobs"])])
    written.append(summary_path)
    meta_path = os.path.join(out_dir, f"{study}_meta.json")
    payload = {
        "study": study,
        "policies": list(REPRODUCE_POLICIES),
        "note": "relative metrics use the EDF run on the identical stream; "
                "cost-based-scheduling baselines are not included",
        "stream_checksums": sorted({f'{r["lambda_a"]}/{r["seed"]}:'
                                    f'{r["stream_checksum"]}' for r in rows}),
    }
    if meta:
        payload.update(meta)
    with open(meta_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    written.append(meta_path)
    if figures:
        for mean_key, ci_key, ylabel, suffix in (
            ("mean_rel_reward", "ci_rel_reward", "total reward relative to EDF",
             "rel_reward"),
            ("mean_rel_jobs", "ci_rel_jobs", "served jobs relative to EDF",
             "rel_jobs"),
        ):
            fig_path = os.path.join(out_dir, f"{study}_{suffix}.png")
            report.render_relative_metric(
                summary, mean_key, ci_key, ylabel,
                f"{study}: {ylabel} (mean over seeds, 95% CI)", fig_path)
            written.append(fig_path)
    return written


def cmd_reproduce(args) -> int:
    try:
        rows, summary = run_reproduce(args.study, n_jobs=args.jobs,
                                      seeds=args.seeds, workers=args.workers)
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    written = write_reproduce_outputs(
        args.study, rows, summary, args.out, figures=not args.no_figures,
        meta={"n_jobs": args.jobs, "seeds": args.seeds})
    print(f"{'lambda_a':>8} {'policy':>14} {'rel_reward':>12} {'rel_jobs':>10}")
    for r in summary:
        print(f"{r['lambda_a']:>8.2f} {r['policy']:>14} "
              f"{r['mean_rel_reward']:>12.4f} {r['mean_rel_jobs']:>10.4f}")
    print("wrote: " + ", ".join(written))
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


@dataclasses.dataclass
class SuiteResult:
    name: str
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    messages: list = dataclasses.field(default_factory=list)

    def record(self, outcome) -> None:
        if outcome.status == "pass":
            self.passed += 1
        elif outcome.status == "skip":
            self.skipped += 1
            if outcome.reason:
                self.messages.append(f"skip: {outcome.reason}")
        else:
            self.failed += 1
            self.messages.append(f"fail: {outcome.reason}")

    def fail(self, message: str) -> None:
        self.failed += 1
        self.messages.append(f"fail: {message}")

    def ok(self) -> None:
        self.passed += 1


def _lemma1_scenario(jobs: int, seed: int) -> ScenarioSpec:
    return ScenarioSpec(
        arrival=DistSpec.exponential(1.5),
        service=DistSpec.deterministic(1.0),
        deadline=DistSpec.exponential(0.1),
        reward=DistSpec.deterministic(1.0),
        n_jobs=jobs,
        seed=seed,
    )


def _asgood_scenario(jobs: int, seed: int) -> ScenarioSpec:
    return dataclasses.replace(_lemma1_scenario(jobs, seed),
                               reward=DistSpec.two_point(4.0, 10.0, 0.5))


def verify_suite_lemma1(runs: int = 100, jobs: int = 1000, seed: int = 0) -> SuiteResult:
    """Equal queue-potential sizes and begin instants for MUD vs EDF under
    constant service."""
    result = SuiteResult("lemma1")
    for k in range(runs):
        stream = generate_stream(_lemma1_scenario(jobs, seed + k))
        result.record(verify_queue_size_equality(stream))
    return result

def verify_suite_asgood(runs: int = 100, jobs: int = 1000, seed: int = 0) -> SuiteResult:
    """MUD's cumulative reward is never behind EDF's at any common empty-queue
    epoch, and strictly ahead on at least one stream."""
    result = SuiteResult("asgood")
    strict = 0
    for k in range(runs):
        stream = generate_stream(_asgood_scenario(jobs, seed + k))
        mud = run_simulation(stream, MudPolicy(), record_events=False)
        edf = run_simulation(stream, EdfPolicy(), record_events=False)
        cmp = compare_traces(mud, edf)
        if not cmp.as_good_as:
            result.fail(f"stream seed={seed + k}: reward gap {cmp.min_delta} < 0")
        else:
            result.ok()
            if cmp.final_delta > 0.0:
                strict += 1
    if strict == 0 and result.failed == 0:
        result.fail("no stream showed a strict reward advantage")
    result.messages.append(f"info: strict advantage on {strict}/{runs} streams")
    return result


def verify_suite_better(repeats: int = 50) -> SuiteResult:
    """On the adversarial stream the reward gap grows by exactly the reward
    spread per repeat."""
    result = SuiteResult("better")
    bounds = adversarial_bounds()
    delta_w = bounds.delta_w
    stream = adversarial_mud_stream(bounds, delta=bounds.b_min - bounds.a_delta,
                                    repeats=repeats)
    if repeats == 0:
        result.ok()
        return result
    mud = run_simulation(stream, MudPolicy(), record_events=False)
    edf = run_simulation(stream, EdfPolicy(), record_events=False)
    cmp = compare_traces(mud, edf)
    expected = repeats * delta_w
    if cmp.final_delta != expected:
        result.fail(f"final reward gap {cmp.final_delta} != {expected}")
    else:
        result.ok()
    staircase = [(i + 1) * delta_w for i in range(len(cmp.deltas))]
    if cmp.deltas != staircase[: len(cmp.deltas)] or len(cmp.deltas) != repeats:
        result.fail(
            f"per-repeat gaps {cmp.deltas[:5]}... are not the expected staircase")
    else:
        result.ok()
    result.messages.append(f"info: final gap {cmp.final_delta} over {repeats} repeats")
    return result


def verify_suite_t4(instances: int = 500, jobs: int = 10, seed: int = 0) -> SuiteResult:
    """MUD matches the offline optimum (reward and top-reward count) on
    constant-service, two-point-reward instances with long deadlines."""
    result = SuiteResult("t4")
    for k in range(instances):
        rng = np.random.default_rng([seed, k])
        result.record(verify_dual_reward_optimality(dual_reward_instance(rng, jobs)))
    return result


def verify_suite_t5(instances: int = 500, jobs: int = 10, seed: int = 0) -> SuiteResult:
    """MUD serves the offline-optimal number of jobs on two-point-service,
    constant-reward instances with long deadlines."""
    result = SuiteResult("t5")
    for k in range(instances):
        rng = np.random.default_rng([seed, k])
        result.record(verify_dual_service_optimality(dual_service_instance(rng, jobs)))
    return result


def verify_suite_bounds(runs: int = 20, jobs: int = 2000, seed: int = 0) -> SuiteResult:
    """Queue bound, conservation, and fixed-seed determinism across policies."""
    result = SuiteResult("bounds")
    for k in range(runs):
        if k % 2 == 0:
            spec = dataclasses.replace(_asgood_scenario(jobs, seed + k))
        else:
            spec = _study_scenario("mmb", 1.8, jobs, seed + k)
        stream = generate_stream(spec)
        for name in POLICY_NAMES:
            policy = make_policy(name, spec)
            trace = run_simulation(stream, policy, record_events=False)
            if not trace.bound_satisfied:
                result.fail(f"{name} seed={seed + k}: queue bound violated")
                continue
            again = run_simulation(stream, make_policy(name, spec),
                                   record_events=False)
            if trace.metrics() != again.metrics():
                result.fail(f"{name} seed={seed + k}: rerun diverged")
                continue
            result.ok()
    return result


def _opt(value, default):
    return default if value is None else value


_SUITES = {
    "lemma1": lambda a: verify_suite_lemma1(_opt(a.runs, 100), _opt(a.jobs, 1000),
                                            a.seed),
    "asgood": lambda a: verify_suite_asgood(_opt(a.runs, 100), _opt(a.jobs, 1000),
                                            a.seed),
    "better": lambda a: verify_suite_better(_opt(a.repeats, 50)),
    "t4": lambda a: verify_suite_t4(_opt(a.instances, 500), _opt(a.jobs, 10), a.seed),
    "t5": lambda a: verify_suite_t5(_opt(a.instances, 500), _opt(a.jobs, 10), a.seed),
    "bounds": lambda a: verify_suite_bounds(_opt(a.runs, 20), _opt(a.jobs, 2000),
                                            a.seed),
}


def cmd_verify(args) -> int:
    result = _SUITES[args.suite](args)
    for message in result.messages:
        print(f"  {message}")
    print(f"suite {result.name}: {result.passed} passed, {result.failed} failed, "
          f"{result.skipped} skipped")
    return EXIT_OK if result.failed == 0 else EXIT_FAILURE


# ---------------------------------------------------------------------------
# oracle


def cmd_oracle(args) -> int:
    try:
        jobs = load_instance(args.instance)
        best = optimal_offline(jobs, limit=args.limit)
    except (OSError, ValueError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    payload = {
        "max_total_reward": best.max_total_reward,
        "max_topclass_count": best.max_topclass_count,
        "witness": [[jid, start] for jid, start in best.witness],
    }
    text = json.dumps(payload, indent=2)
    print(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text + "\n")
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="deadlineq",
        description="Simulate single-server queues with deadlines and rewards.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="simulate one scenario under one policy")
    p_run.add_argument("--config", required=True, help="scenario config file")
    p_run.add_argument("--policy", required=True,
                       help=f"one of: {', '.join(POLICY_NAMES)}")
    p_run.add_argument("--out", default="results", help="output directory")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--jobs", type=int, default=None, help="override n_jobs")
    p_run.add_argument("--format", choices=("csv", "json"), default="json",
                       help="metrics file format")
    p_run.add_argument("--no-trace", action="store_true",
                       help="skip the per-event trace CSV (faster)")
    p_run.set_defaults(func=cmd_run)

    p_rep = sub.add_parser("reproduce", help="rerun a load study over the rate grid")
    p_rep.add_argument("study", choices=("mmb", "mmm"))
    p_rep.add_argument("--out", default="results", help="output directory")
    p_rep.add_argument("--jobs", type=int, default=100_000,
                       help="arrivals per run (default 100000)")
    p_rep.add_argument("--seeds", type=int, default=10,
                       help="replications per cell (default 10)")
    p_rep.add_argument("--workers", type=int, default=None,
                       help="parallel worker processes (default: cpu count)")
    p_rep.add_argument("--no-figures", action="store_true",
                       help="skip figure rendering")
    p_rep.set_defaults(func=cmd_reproduce)

    p_ver = sub.add_parser("verify", help="run a property suite")
    p_ver.add_argument("suite", choices=sorted(_SUITES))
    p_ver.add_argument("--runs", type=int, default=None, help="streams to check")
    p_ver.add_argument("--jobs", type=int, default=None, help="jobs per stream/instance")
    p_ver.add_argument("--instances", type=int, default=None,
                       help="instances to check (t4/t5)")
    p_ver.add_argument("--repeats", type=int, default=None,
                       help="adversarial repeats (better)")
    p_ver.add_argument("--seed", type=int, default=0, help="base seed")
    p_ver.set_defaults(func=cmd_verify)

    p_orc = sub.add_parser("oracle", help="solve a small instance offline")
    p_orc.add_argument("instance", help="instance CSV (id,arrival,service,deadline,reward)")
    p_orc.add_argument("--out", default=None, help="also write the result JSON here")
    p_orc.add_argument("--limit", type=int, default=14,
                       help="maximum instance size (default 14)")
    p_orc.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PolicyContractError as err:
        print(f"policy contract violation: {err}", file=sys.stderr)
        return EXIT_CONTRACT
    except ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
