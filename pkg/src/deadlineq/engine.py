"""Discrete-event simulator for a single non-preemptive server.

The engine owns the clock and the server; the policy owns its queue order.
There are only two event sources (the next arrival and the pending service
completion), so the loop needs no event calendar.  Simultaneous events
resolve deterministically: a completion fires before an arrival at the same
instant, and simultaneous arrivals are handled in id order.

Two run modes share one code path: with ``record_events`` every event
produces an :class:`~deadlineq.core.EventRecord` with the queue-potential
size and the potential-inclusive cumulative reward recomputed after the
event; without it the engine keeps only counters, epochs, and contract
monitors, and computes the queue potential lazily (only when the waiting-set
size alone cannot witness the queue bound).
"""

from __future__ import annotations

import csv
import hashlib
import math
import struct
from dataclasses import dataclass

import numpy as np

from .core import (
    ARRIVAL,
    DROP,
    EXPIRY_PASSED,
    SERVICE_BEGIN,
    SERVICE_COMPLETE,
    QE1,
    QE5,
    QE6,
    QE7,
    EventRecord,
    Job,
    PolicyContractError,
    SimulationError,
    classify_arrival,
    validate_stream,
)
from .policies import DROP as D_DROP
from .policies import IDLE as D_IDLE
from .policies import SERVE as D_SERVE
from .policies import Policy

_INF = math.inf


@dataclass(frozen=True, slots=True)
class Epoch:
    """A maximal interval during which the queue is empty and the server idle.

    ``end`` is the next arrival time (``inf`` after the final drain);
    ``reward`` and ``served`` are the cumulative served totals, constant over
    the interval.
    """

    start: float
    end: float
    reward: float
    served: int


@dataclass
class SimulationTrace:
    """Everything one run produced."""

    policy: str
    n_jobs: int
    stream_checksum: str
    served_count: int
    dropped_count: int
    total_reward: float
    epochs: list[Epoch]
    begin_times: list[float]
    served_ids: list[int]
    records: list[EventRecord] | None
    max_potential_size: int | None
    max_waiting_size: int
    queue_bound: int | None
    bound_satisfied: bool
    deterministic_service: bool
    final_time: float

    @property
    def epoch_times(self) -> list[float]:
        return [e.start for e in self.epochs]

    @property
    def epoch_rewards(self) -> list[float]:
        return [e.reward for e in self.epochs]

    def metrics(self) -> dict:
        """JSON-serializable run summary."""
        return {
            "policy": self.policy,
            "n_jobs": self.n_jobs,
            "stream_checksum": self.stream_checksum,
            "served": self.served_count,
            "dropped": self.dropped_count,
            "total_reward": self.total_reward,
            "epoch_times": [e.start for e in self.epochs],
            "epoch_rewards": [e.reward for e in self.epochs],
            "epoch_served_counts": [e.served for e in self.epochs],
            "max_potential_size": self.max_potential_size,
            "max_waiting_size": self.max_waiting_size,
            "queue_bound": self.queue_bound,
            "bound_satisfied": self.bound_satisfied,
            "deterministic_service": self.deterministic_service,
            "final_time": self.final_time,
        }


def stream_checksum(jobs) -> str:
    """Digest of the full job stream; relative metrics require equal digests."""
    h = hashlib.sha256()
    for job in jobs:
        h.update(struct.pack("<qddddd", job.id, job.arrival, job.service,
                             job.deadline, job.reward, job.expiry))
    return h.hexdigest()[:16]


def compute_queue_potential(ordered_jobs, now: float, residual: float) -> list[int]:
    """Ids of the waiting jobs that would all start on time with no arrivals.

    Greedy forward scan in service order: the simulated start begins at
    ``now + residual``; an included job advances it by its service time,
    an excluded job does not.
    """
    start = now + residual
    out: list[int] = []
    for job in ordered_jobs:
        if job.expiry >= start:
            out.append(job.id)
            start += job.service
    return out


def _potential_stats(ordered_jobs, now: float, residual: float) -> tuple[int, float]:
    """(size, reward sum) of the queue potential."""
    start = now + residual
    size = 0
    wsum = 0.0
    for job in ordered_jobs:
        if job.expiry >= start:
            size += 1
            wsum += job.reward
            start += job.service
    return size, wsum


def run_simulation(jobs, policy: Policy, *, record_events: bool = True) -> SimulationTrace:
    """Run one policy over one job stream until the system drains.

    The policy contract is validated, not trusted: idling with work queued,
    overlapping service, serving an expired job, or losing track of jobs all
    abort with :class:`~deadlineq.core.PolicyContractError` (or
    :class:`~deadlineq.core.SimulationError` for bookkeeping breaks).
    """
    jobs = list(jobs)
    validate_stream(jobs, strict=False)
    policy.reset()
    n = len(jobs)
    checksum = stream_checksum(jobs)
    deterministic = n > 0 and all(j.service == jobs[0].service for j in jobs)
    bound = None
    if n:
        bound = math.ceil(max(j.deadline for j in jobs) / min(j.service for j in jobs))

    records: list[EventRecord] | None = [] if record_events else None
    epochs: list[Epoch] = []
    begin_times: list[float] = []
    served_ids: list[int] = []

    busy = False
    completion = _INF
    current: Job | None = None
    arrived = 0
    served = 0
    dropped = 0
    served_reward = 0.0
    last_pot = 0
    max_pot = 0 if record_events else None
    max_waiting = 0
    bound_ok = True
    open_epoch: tuple[float, float, int] | None = None
    final_time = 0.0

    def emit(time: float, kind: str, job_id: int, qe: str | None) -> int:
        nonlocal last_pot, max_pot, bound_ok
        size, wsum = _potential_stats(policy.ordered_jobs(), time,
                                      completion - time if busy else 0.0)
        records.append(EventRecord(time, kind, job_id, qe, size, served_reward + wsum))
        last_pot = size
        if size > max_pot:
            max_pot = size
        if bound is not None and size > bound:
            bound_ok = False
        return size

    def check_waiting(time: float) -> None:
        """Queue-bound monitor for the unrecorded mode.

        The potential is a subset of the waiting set, so a small waiting set
        witnesses the bound for free; only when it exceeds the bound is the
        actual potential computed.
        """
        nonlocal max_waiting, max_pot, bound_ok
        w = policy.waiting_count()
        if w > max_waiting:
            max_waiting = w
        if not record_events and bound is not None and w > bound:
            size, _ = _potential_stats(policy.ordered_jobs(), time,
                                       completion - time if busy else 0.0)
            if max_pot is None or size > max_pot:
                max_pot = size
            if size > bound:
                bound_ok = False

    def begin_service(job: Job, now: float) -> None:
        nonlocal busy, completion, current, served, served_reward
        if busy:
            raise PolicyContractError(
                f"{policy.name}: overlapping service of job {job.id} at t={now}")
        if job.expiry < now:
            raise PolicyContractError(
                f"{policy.name}: served job {job.id} after its expiry "
                f"({job.expiry} < {now})")
        busy = True
        completion = now + job.service
        current = job
        served += 1
        served_reward += job.reward
        served_ids.append(job.id)
        begin_times.append(now)

    def dispatch(now: float) -> bool:
        """Drive the free server; returns True when a service began."""
        nonlocal dropped, open_epoch
        while True:
            sel = policy.select(now)
            if sel.kind == D_DROP:
                job = sel.job
                dropped += 1
                if records is not None:
                    if job.expiry < now:
                        emit(now, EXPIRY_PASSED, job.id, QE6)
                    emit(now, DROP, job.id, QE7)
                continue
            if sel.kind == D_SERVE:
                begin_service(sel.job, now)
                if records is not None:
                    emit(now, SERVICE_BEGIN, sel.job.id, QE5)
                return True
            if sel.kind != D_IDLE:
                raise PolicyContractError(f"{policy.name}: unknown decision {sel.kind!r}")
            remaining = policy.waiting_count()
            if remaining != 0:
                raise PolicyContractError(
                    f"{policy.name}: idled with {remaining} jobs waiting at t={now}")
            open_epoch = (now, served_reward, served)
            return False

    i = 0
    while True:
        t_arr = jobs[i].arrival if i < n else _INF
        if busy and completion <= t_arr:
            now = completion
            finished = current
            busy = False
            completion = _INF
            current = None
            if records is not None:
                emit(now, SERVICE_COMPLETE, finished.id, None)
            dispatch(now)
        elif i < n:
            job = jobs[i]
            i += 1
            now = job.arrival
            arrived += 1
            if open_epoch is not None:
                epochs.append(Epoch(open_epoch[0], now, open_epoch[1], open_epoch[2]))
                open_epoch = None
            if busy:
                pot_before = last_pot
                decision = policy.on_arrival(job, now, completion - now)
                if records is not None:
                    size_after, wsum_after = _potential_stats(
                        policy.ordered_jobs(), now, completion - now)
                    qe = classify_arrival(False, False, pot_before, size_after,
                                          deterministic)
                    records.append(EventRecord(now, ARRIVAL, job.id, qe, size_after,
                                               served_reward + wsum_after))
                    last_pot = size_after
                    if size_after > max_pot:
                        max_pot = size_after
                    if bound is not None and size_after > bound:
                        bound_ok = False
                if decision.dropped is not None:
                    dropped += 1
                    loser = decision.dropped
                    if records is not None:
                        if loser.expiry < now:
                            emit(now, EXPIRY_PASSED, loser.id, QE6)
                        emit(now, DROP, loser.id, QE7)
            else:
                if policy.waiting_count() != 0:
                    raise SimulationError(
                        f"internal: idle server with {policy.waiting_count()} queued "
                        f"jobs at arrival t={now}")
                decision = policy.on_arrival(job, now, 0.0)
                if decision.dropped is not None:
                    raise PolicyContractError(
                        f"{policy.name}: dropped job {job.id} arriving to an idle "
                        f"empty system")
                if records is not None:
                    # Served at once: the queue potential stays empty and the
                    # cumulative reward anticipates the immediate begin.
                    records.append(EventRecord(now, ARRIVAL, job.id, QE1, 0,
                                               served_reward + job.reward))
                    last_pot = 0
                if not dispatch(now) or current is not job:
                    raise PolicyContractError(
                        f"{policy.name}: job {job.id} arriving to an idle empty "
                        f"system was not served immediately")
        else:
            break
        final_time = now
        check_waiting(now)
        if arrived != served + dropped + policy.waiting_count():
            raise SimulationError(
                f"conservation violated at t={now}: arrived={arrived}, "
                f"served={served}, dropped={dropped}, "
                f"waiting={policy.waiting_count()}")

    if open_epoch is not None:
        epochs.append(Epoch(open_epoch[0], _INF, open_epoch[1], open_epoch[2]))
    if policy.waiting_count() != 0 or busy:
        raise SimulationError("system failed to drain")
    if arrived != n or served + dropped != n:
        raise SimulationError(
            f"conservation violated at drain: n={n}, served={served}, dropped={dropped}")

    return SimulationTrace(
        policy=policy.name,
        n_jobs=n,
        stream_checksum=checksum,
        served_count=served,
        dropped_count=dropped,
        total_reward=served_reward,
        epochs=epochs,
        begin_times=begin_times,
        served_ids=served_ids,
        records=records,
        max_potential_size=max_pot,
        max_waiting_size=max_waiting,
        queue_bound=bound,
        bound_satisfied=bound_ok,
        deterministic_service=deterministic,
        final_time=final_time,
    )


def empty_queue_epochs(trace: SimulationTrace) -> list[float]:
    """Times at which the queue became empty with the server idle."""
    return [e.start for e in trace.epochs]


def potential_size_series(trace: SimulationTrace) -> tuple[list[float], list[int]]:
    """Right-continuous (times, sizes) steps; the last record at a time wins."""
    if trace.records is None:
        raise ValueError("trace was run without event records")
    times: list[float] = []
    sizes: list[int] = []
    for r in trace.records:
        if times and times[-1] == r.time:
            sizes[-1] = r.queue_potential_size
        else:
            times.append(r.time)
            sizes.append(r.queue_potential_size)
    return times, sizes


def step_values_at(times: list[float], values, query_times) -> np.ndarray:
    """Sample a right-continuous step function (0 before the first step)."""
    query = np.asarray(query_times)
    if len(times) == 0:
        return np.zeros(query.shape, dtype=np.int64)
    idx = np.searchsorted(np.asarray(times), query, side="right") - 1
    vals = np.asarray(values)
    return np.where(idx >= 0, vals[np.maximum(idx, 0)], 0)


@dataclass
class TraceComparison:
    """Per-common-epoch reward differences between two runs of one stream."""

    times: list[float]
    deltas: list[float]
    min_delta: float
    mean_delta: float
    final_delta: float
    slope: float
    equivalent: bool
    as_good_as: bool
    better_evidence: bool


def compare_traces(a: SimulationTrace, b: SimulationTrace) -> TraceComparison:
    """Compare cumulative served rewards at epochs where both systems are empty.

    Each trace's empty intervals are intersected; the reward difference is
    constant over an intersection, evaluated at its start.  ``better_evidence``
    reports a finite-run trend (positive final gap and positive slope), not a
    limit statement.
    """
    if a.stream_checksum != b.stream_checksum:
        raise ValueError(
            f"traces come from different job streams "
            f"({a.stream_checksum} != {b.stream_checksum})")
    times: list[float] = []
    deltas: list[float] = []
    ia = ib = 0
    while ia < len(a.epochs) and ib < len(b.epochs):
        ea, eb = a.epochs[ia], b.epochs[ib]
        lo = max(ea.start, eb.start)
        hi = min(ea.end, eb.end)
        if lo < hi or (lo == hi == _INF):
            times.append(lo)
            deltas.append(ea.reward - eb.reward)
        if ea.end <= eb.end:
            ia += 1
        else:
            ib += 1
    if deltas:
        arr = np.asarray(deltas)
        min_d = float(arr.min())
        mean_d = float(arr.mean())
        final_d = float(arr[-1])
        if len(arr) >= 2:
            x = np.arange(len(arr), dtype=np.float64)
            xc = x - x.mean()
            denom = float(np.dot(xc, xc))
            slope = float(np.dot(xc, arr - arr.mean()) / denom) if denom else 0.0
        else:
            slope = 0.0
    else:
        min_d = mean_d = final_d = slope = 0.0
    equivalent = all(d == 0.0 for d in deltas)
    as_good_as = all(d >= 0.0 for d in deltas)
    better = final_d > 0.0 and slope > 0.0
    return TraceComparison(times, deltas, min_d, mean_d, final_d, slope,
                           equivalent, as_good_as, better)


def write_trace_csv(trace: SimulationTrace, path) -> None:
    """Event log as CSV: time,kind,job_id,qe_class,queue_potential,cum_reward."""
    if trace.records is None:
        raise ValueError("trace was run without event records")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "kind", "job_id", "qe_class",
                         "queue_potential", "cum_reward"])
        for r in trace.records:
            writer.writerow([repr(r.time), r.kind, r.job_id, r.qe_class or "",
                             r.queue_potential_size, repr(r.cumulative_reward)])
