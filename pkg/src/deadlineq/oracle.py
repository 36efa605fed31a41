"""Exhaustive offline scheduling oracle and policy-verification checks.

The oracle searches every non-preemptive, non-idling schedule of a small
instance: whenever the server is free and unexpired jobs are queued it must
serve one of them (idling is allowed only when nothing eligible is queued),
which is exactly the policy class the simulator admits.  Expired jobs are
discarded at no cost.  Memoization keys quantize decision times to 1e-9,
far below any meaningful scenario scale.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import Job, PolicyContractError, SimulationError, validate_stream
from .engine import (
    SimulationTrace,
    potential_size_series,
    run_simulation,
    step_values_at,
)
from .policies import (
    ArrivalDecision,
    EdfPolicy,
    IDLE_DECISION,
    MudPolicy,
    Policy,
    ServiceDecision,
)

DEFAULT_LIMIT = 14
_TIME_SCALE = 1e9  # memo keys quantize decision times to 1e-9

REWARD_TOLERANCE = 1e-9  # absorbs summation-order rounding in reward totals


@dataclass(frozen=True)
class OracleResult:
    """Offline optimum for one instance.

    ``max_topclass_count`` is the unconditional maximum number of servable
    top-reward jobs (it may exceed the top-reward count of the reward-optimal
    witness on instances where the two objectives conflict).
    """

    max_total_reward: float
    max_topclass_count: int
    witness: tuple[tuple[int, float], ...]


def _solve(jobs: list[Job], values: list[tuple], memoize: bool):
    """Maximize the sum of per-job value tuples over feasible schedules.

    Value tuples compare lexicographically.  Returns (best value, witness) where
    the witness lists (job_id, start_time) choices achieving it, picking the
    lowest-index maximizer at each branch for determinism.
    """
    n = len(jobs)
    width = len(values[0]) if n else 1
    zero = (0.0,) * width
    if n == 0:
        return zero, ()
    arrivals = [j.arrival for j in jobs]
    expiries = [j.expiry for j in jobs]
    services = [j.service for j in jobs]
    memo: dict | None = {} if memoize else None

    def normalize(t: float, mask: int) -> int:
        for j in range(n):
            bit = 1 << j
            if mask & bit and arrivals[j] <= t and expiries[j] < t:
                mask &= ~bit
        return mask

    def dfs(t: float, mask: int) -> tuple:
        mask = normalize(t, mask)
        if mask == 0:
            return zero
        if memo is not None:
            key = (int(round(t * _TIME_SCALE)), mask)
            hit = memo.get(key)
            if hit is not None:
                return hit
        available = [j for j in range(n) if mask >> j & 1 and arrivals[j] <= t]
        if available:
            best = None
            for j in available:
                sub = dfs(t + services[j], mask & ~(1 << j))
                cand = tuple(v + s for v, s in zip(values[j], sub))
                if best is None or cand > best:
                    best = cand
        else:
            best = dfs(min(arrivals[j] for j in range(n) if mask >> j & 1), mask)
        if memo is not None:
            memo[key] = best
        return best

    t = 0.0
    mask = (1 << n) - 1
    witness: list[tuple[int, float]] = []
    total = dfs(t, mask)
    while True:
        mask = normalize(t, mask)
        if mask == 0:
            break
        available = [j for j in range(n) if mask >> j & 1 and arrivals[j] <= t]
        if not available:
            t = min(arrivals[j] for j in range(n) if mask >> j & 1)
            continue
        target = dfs(t, mask)
        chosen = None
        for j in available:
            sub = dfs(t + services[j], mask & ~(1 << j))
            if tuple(v + s for v, s in zip(values[j], sub)) == target:
                chosen = j
                break
        if chosen is None:  # unreachable: some branch attains the maximum
            raise SimulationError("oracle reconstruction lost the optimum")
        witness.append((jobs[chosen].id, t))
        t += services[chosen]
        mask &= ~(1 << chosen)
    return total, tuple(witness)


def _check_size(jobs, limit: int) -> None:
    if len(jobs) > limit:
        raise ValueError(
            f"instance has {len(jobs)} jobs; exhaustive search is limited to {limit}")


def optimal_offline(jobs, *, limit: int = DEFAULT_LIMIT,
                    memoize: bool = True) -> OracleResult:
    """Best achievable total reward, with one witness schedule.

    The reward search breaks ties toward schedules serving more top-reward
    jobs; ``max_topclass_count`` is computed by its own unconditional search.
    """
    jobs = list(jobs)
    _check_size(jobs, limit)
    validate_stream(jobs, strict=False)
    if not jobs:
        return OracleResult(0.0, 0, ())
    w_max = max(j.reward for j in jobs)
    values = [(j.reward, 1.0 if j.reward == w_max else 0.0) for j in jobs]
    best, witness = _solve(jobs, values, memoize)
    top = optimal_topclass_count(jobs, w_max=w_max, limit=limit, memoize=memoize)
    return OracleResult(best[0], top, witness)


def optimal_topclass_count(jobs, w_max: float | None = None, *,
                           limit: int = DEFAULT_LIMIT, memoize: bool = True) -> int:
    """Maximum number of jobs with reward ``w_max`` any schedule can serve."""
    jobs = list(jobs)
    _check_size(jobs, limit)
    if not jobs:
        return 0
    if w_max is None:
        w_max = max(j.reward for j in jobs)
    values = [(1.0,) if j.reward == w_max else (0.0,) for j in jobs]
    best, _ = _solve(jobs, values, memoize)
    return int(round(best[0]))


class ScriptedPolicy(Policy):
    """Replays a fixed (job_id, start_time) schedule through the engine.

    Deviations mean the schedule is infeasible for a non-idling server and
    raise :class:`~deadlineq.core.PolicyContractError`.
    """

    name = "scripted"

    def __init__(self, script) -> None:
        self._script = [(int(j), float(t)) for j, t in script]
        self.reset()

    def reset(self) -> None:
        self._i = 0
        self._waiting: dict[int, Job] = {}

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        self._waiting[job.id] = job
        return ArrivalDecision.accept_positioned(None)

    def select(self, now: float) -> ServiceDecision:
        expired = next(
            (jid for jid, job in self._waiting.items() if job.expiry < now), None)
        if expired is not None:
            return ServiceDecision.drop(self._waiting.pop(expired))
        if self._i < len(self._script):
            jid, start = self._script[self._i]
            if start == now and jid in self._waiting:
                self._i += 1
                return ServiceDecision.serve(self._waiting.pop(jid))
            if self._waiting:
                raise PolicyContractError(
                    f"scripted schedule idles at t={now} while jobs "
                    f"{sorted(self._waiting)} wait (next start {start})")
            return IDLE_DECISION
        if self._waiting:
            raise PolicyContractError(
                f"scripted schedule ended with unexpired jobs {sorted(self._waiting)}")
        return IDLE_DECISION

    def ordered_jobs(self) -> list[Job]:
        return sorted(self._waiting.values(), key=lambda j: (j.expiry, j.id))

    def waiting_count(self) -> int:
        return len(self._waiting)


def replay_witness(jobs, result: OracleResult) -> SimulationTrace:
    """Replays a witness through the engine and checks it reproduces itself.

    Returns the trace; raises if the engine's begin events differ from the
    witness or the served reward differs from the claimed optimum.
    """
    trace = run_simulation(jobs, ScriptedPolicy(result.witness), record_events=False)
    begins = list(zip(trace.served_ids, trace.begin_times))
    if begins != list(result.witness):
        raise SimulationError(
            f"witness replay diverged: engine began {begins}, witness says "
            f"{list(result.witness)}")
    if abs(trace.total_reward - result.max_total_reward) > REWARD_TOLERANCE:
        raise SimulationError(
            f"witness reward {trace.total_reward} != claimed optimum "
            f"{result.max_total_reward}")
    return trace


@dataclass(frozen=True)
class VerifyOutcome:
    status: str  # "pass" | "fail" | "skip"
    reason: str | None = None


_PASS = VerifyOutcome("pass")


def verify_queue_size_equality(jobs) -> VerifyOutcome:
    """Under constant service times, ratio-based dropping keeps the queue
    potential exactly as large as EDF's at every event time, with identical
    service-begin instants.

    The property belongs to the dropping mechanism, so the check runs the
    no-head-swap variant; with constant rewards (where the claim's proof
    lives) the swap never fires and the default policy behaves identically.
    """
    jobs = list(jobs)
    if not jobs:
        return _PASS
    if len({j.service for j in jobs}) != 1:
        return VerifyOutcome("skip", "service times are not constant")
    mud = run_simulation(jobs, MudPolicy(head_swap=False), record_events=True)
    edf = run_simulation(jobs, EdfPolicy(), record_events=True)
    if mud.begin_times != edf.begin_times:
        return VerifyOutcome("fail", "service-begin instants diverge")
    ta, sa = potential_size_series(mud)
    tb, sb = potential_size_series(edf)
    union = sorted(set(ta) | set(tb))
    va = step_values_at(ta, sa, union)
    vb = step_values_at(tb, sb, union)
    mismatch = np.nonzero(va != vb)[0]
    if mismatch.size:
        t = union[int(mismatch[0])]
        return VerifyOutcome(
            "fail",
            f"potential sizes diverge at t={t}: {int(va[mismatch[0]])} vs "
            f"{int(vb[mismatch[0]])}")
    return _PASS


def verify_dual_reward_optimality(jobs, *, limit: int = DEFAULT_LIMIT) -> VerifyOutcome:
    """With constant service, two-point rewards, and deadlines longer than
    twice the service time, the ratio-dropping policy must match the offline
    optimum in both total reward and servable top-reward count."""
    jobs = list(jobs)
    if not jobs:
        return _PASS
    if len(jobs) > limit:
        return VerifyOutcome("skip", f"instance larger than oracle limit {limit}")
    if len({j.service for j in jobs}) != 1:
        return VerifyOutcome("skip", "service times are not constant")
    rewards = sorted({j.reward for j in jobs})
    if len(rewards) > 2:
        return VerifyOutcome("skip", "rewards are not two-point")
    b_max = max(j.service for j in jobs)
    d_min = min(j.deadline for j in jobs)
    if not d_min > 2.0 * b_max:
        return VerifyOutcome("skip",
                             f"deadline guard violated: d_min={d_min} <= 2*b_max={2*b_max}")
    best = optimal_offline(jobs, limit=limit)
    trace = run_simulation(jobs, MudPolicy(), record_events=False)
    if abs(trace.total_reward - best.max_total_reward) > REWARD_TOLERANCE:
        return VerifyOutcome(
            "fail",
            f"policy reward {trace.total_reward} != optimum {best.max_total_reward}")
    w_max = rewards[-1]
    by_id = {j.id: j for j in jobs}
    top_served = sum(1 for jid in trace.served_ids if by_id[jid].reward == w_max)
    if top_served != best.max_topclass_count:
        return VerifyOutcome(
            "fail",
            f"policy served {top_served} top-reward jobs, optimum is "
            f"{best.max_topclass_count}")
    return _PASS


def verify_dual_service_optimality(jobs, *, limit: int = DEFAULT_LIMIT) -> VerifyOutcome:
    """With two-point service times, constant rewards, and deadlines longer
    than twice the longest service, the ratio-dropping policy must serve as
    many jobs as the offline optimum."""
    jobs = list(jobs)
    if not jobs:
        return _PASS
    if len(jobs) > limit:
        return VerifyOutcome("skip", f"instance larger than oracle limit {limit}")
    if len({j.service for j in jobs}) > 2:
        return VerifyOutcome("skip", "service times are not two-point")
    if len({j.reward for j in jobs}) != 1:
        return VerifyOutcome("skip", "rewards are not constant")
    b_max = max(j.service for j in jobs)
    d_min = min(j.deadline for j in jobs)
    if not d_min > 2.0 * b_max:
        return VerifyOutcome("skip",
                             f"deadline guard violated: d_min={d_min} <= 2*b_max={2*b_max}")
    values = [(1.0,) for _ in jobs]
    best, _ = _solve(jobs, values, True)
    optimum = int(round(best[0]))
    trace = run_simulation(jobs, MudPolicy(), record_events=False)
    if trace.served_count != optimum:
        return VerifyOutcome(
            "fail", f"policy served {trace.served_count} jobs, optimum is {optimum}")
    return _PASS


@dataclass(frozen=True)
class MonitorReport:
    """Outcome of the queue/served-set monotonicity monitor."""

    premise_held: bool       # |Q_a| >= |Q_b| at every sampled event time
    checked_until: float     # last time the conclusion was asserted
    ok: bool                 # |served_a| >= |served_b| wherever the premise held


def _served_count_series(trace: SimulationTrace) -> tuple[list[float], list[int]]:
    if trace.records is None:
        raise ValueError("trace was run without event records")
    times: list[float] = []
    counts: list[int] = []
    count = 0
    for r in trace.records:
        if r.kind == "service_begin":
            count += 1
        if times and times[-1] == r.time:
            counts[-1] = count
        else:
            times.append(r.time)
            counts.append(count)
    return times, counts


def monotonicity_monitor(trace_a: SimulationTrace,
                         trace_b: SimulationTrace) -> MonitorReport:
    """While one run's queue potential stays at least as large as the other's,
    its served count must too.  Monitoring stops at the first time the size
    premise fails; the conclusion is only asserted up to that point."""
    if trace_a.stream_checksum != trace_b.stream_checksum:
        raise ValueError("traces come from different job streams")
    ta, qa = potential_size_series(trace_a)
    tb, qb = potential_size_series(trace_b)
    sa_t, sa_c = _served_count_series(trace_a)
    sb_t, sb_c = _served_count_series(trace_b)
    union = sorted(set(ta) | set(tb))
    if not union:
        return MonitorReport(True, 0.0, True)
    q_a = step_values_at(ta, qa, union)
    q_b = step_values_at(tb, qb, union)
    s_a = step_values_at(sa_t, sa_c, union)
    s_b = step_values_at(sb_t, sb_c, union)
    checked_until = union[0]
    for i, t in enumerate(union):
        if q_a[i] < q_b[i]:
            return MonitorReport(False, checked_until, True)
        if s_a[i] < s_b[i]:
            return MonitorReport(True, t, False)
        checked_until = t
    return MonitorReport(True, checked_until, True)


INSTANCE_HEADER = ["id", "arrival", "service", "deadline", "reward"]


def load_instance(path) -> list[Job]:
    """Read a job instance CSV (header ``id,arrival,service,deadline,reward``)."""
    with open(path, "r", newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != INSTANCE_HEADER:
            raise ValueError(
                f"instance file must start with header {','.join(INSTANCE_HEADER)}")
        jobs = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 5:
                raise ValueError(f"line {lineno}: expected 5 fields, got {len(row)}")
            try:
                jobs.append(Job.make(int(row[0]), float(row[1]), float(row[2]),
                                     float(row[3]), float(row[4])))
            except ValueError as err:
                raise ValueError(f"line {lineno}: {err}") from err
    jobs.sort(key=lambda j: (j.arrival, j.id))
    validate_stream(jobs, strict=False)
    return jobs


def save_instance(jobs, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(INSTANCE_HEADER)
        for j in jobs:
            writer.writerow([j.id, repr(j.arrival), repr(j.service),
                             repr(j.deadline), repr(j.reward)])
