"""Scheduling policies for the single-server queue.

All policies are non-preemptive and never idle while an unexpired job waits.
Each policy owns its queue order; the engine owns the clock and the server.
Decisions are deterministic functions of the visible queue state.

Deadline-ordered policies (EDF, MEDF, MUD) share one total order: expiry
ascending, ties by reward descending, then id ascending.
"""

from __future__ import annotations

import bisect
import heapq
from collections import deque
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping

import numpy as np

from .core import Job, PolicyContractError

ACCEPT = "accept"
ACCEPT_AND_DROP = "accept_and_drop"
REJECT = "reject"

SERVE = "serve"
DROP = "drop"
IDLE = "idle"


@dataclass(frozen=True, slots=True)
class ArrivalDecision:
    """Outcome of offering an arriving job to a policy.

    ``index`` is the 1-based rank the job took in the policy's service order
    (None for policies without a cheap explicit order, e.g. heap-backed
    ones).  ``dropped`` names the job the policy sacrificed, which is the
    arriving job itself for a rejection.
    """

    kind: str
    index: int | None = None
    dropped: Job | None = None

    @classmethod
    def accept_positioned(cls, index: int | None) -> "ArrivalDecision":
        return cls(ACCEPT, index=index)

    @classmethod
    def accept_and_drop(cls, index: int | None, dropped: Job) -> "ArrivalDecision":
        return cls(ACCEPT_AND_DROP, index=index, dropped=dropped)

    @classmethod
    def reject_arrival(cls, job: Job) -> "ArrivalDecision":
        return cls(REJECT, dropped=job)


@dataclass(frozen=True, slots=True)
class ServiceDecision:
    """Outcome of asking a policy for work while the server is free."""

    kind: str
    job: Job | None = None

    @classmethod
    def serve(cls, job: Job) -> "ServiceDecision":
        return cls(SERVE, job=job)

    @classmethod
    def drop(cls, job: Job) -> "ServiceDecision":
        return cls(DROP, job=job)


IDLE_DECISION = ServiceDecision(IDLE)


def queue_offsets(jobs: Iterable[Job]) -> dict[int, tuple[int, float]]:
    """Per-job (rank, waiting work) for a queue in service order.

    Rank is 1-based; the second component is the summed service time of all
    jobs ranked strictly ahead.
    """
    out: dict[int, tuple[int, float]] = {}
    ahead = 0.0
    for rank, job in enumerate(jobs, start=1):
        out[job.id] = (rank, ahead)
        ahead += job.service
    return out


class Policy:
    """Interface the engine drives.

    ``on_arrival`` must enqueue (or sacrifice) the job; ``select`` is called
    repeatedly while the server is free and must eventually serve or report
    an empty queue.  ``select`` mutates the queue: a returned job is already
    removed.
    """

    name = "abstract"

    def reset(self) -> None:
        raise NotImplementedError

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        raise NotImplementedError

    def select(self, now: float) -> ServiceDecision:
        raise NotImplementedError

    def ordered_jobs(self) -> list[Job]:
        """Waiting jobs in the order they would be served absent new arrivals."""
        raise NotImplementedError

    def waiting_count(self) -> int:
        raise NotImplementedError


def _deadline_key(job: Job) -> tuple[float, float, int]:
    return (job.expiry, -job.reward, job.id)


class EdfPolicy(Policy):
    """Serve the unexpired job with the smallest expiry; drop expired heads."""

    name = "edf"

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._keys: list[tuple[float, float, int]] = []
        self._jobs: list[Job] = []

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        pos = bisect.bisect_left(self._keys, _deadline_key(job))
        self._keys.insert(pos, _deadline_key(job))
        self._jobs.insert(pos, job)
        return ArrivalDecision.accept_positioned(pos + 1)

    def _pop(self, pos: int) -> Job:
        del self._keys[pos]
        return self._jobs.pop(pos)

    def select(self, now: float) -> ServiceDecision:
        if not self._jobs:
            return IDLE_DECISION
        if self._jobs[0].expiry < now:
            return ServiceDecision.drop(self._pop(0))
        return ServiceDecision.serve(self._pop(0))

    def ordered_jobs(self) -> list[Job]:
        return list(self._jobs)

    def waiting_count(self) -> int:
        return len(self._jobs)


class MedfPolicy(EdfPolicy):
    """EDF plus a conditional swap of the two head jobs.

    When the head can still start on time after the second job runs, but the
    second job cannot survive the head running first, serving the second job
    saves it without losing the head.
    """

    name = "medf"

    def select(self, now: float) -> ServiceDecision:
        if not self._jobs:
            return IDLE_DECISION
        head = self._jobs[0]
        if head.expiry < now:
            return ServiceDecision.drop(self._pop(0))
        if len(self._jobs) >= 2:
            second = self._jobs[1]
            if head.expiry >= now + second.service and second.expiry < now + head.service:
                return ServiceDecision.serve(self._pop(1))
        return ServiceDecision.serve(self._pop(0))


class MudPolicy(Policy):
    """Deadline-ordered queue with ratio-based dropping at arrival.

    On arrival the job is inserted in deadline order.  If the insertion makes
    some job miss its predicted start (its expiry falls before the current
    time plus the residual service plus the work queued ahead of it), the job
    with the smallest reward-per-service ratio among all jobs up to and
    including the first such miss is dropped; ties prefer the shortest time
    to expiry, then the lowest id.  Dropping one job restores feasibility for
    the whole queue whenever the dropped service time is at least the
    inserted one's (always true under constant service times, or constant
    rewards); with mixed rewards and service times a residual infeasibility
    can persist, in which case the affected job simply stays queued and is
    only lost if it actually expires.

    With ``head_swap`` enabled, service selection may swap the two head jobs,
    like MEDF but gated on the reward ratio: the second job runs first when
    the head can wait for it and the second job pays strictly more per unit
    of service.  The swap is myopically safe (nobody queued right now is lost
    by it) but not robust to what arrives next: serving the later-expiry job
    early leaves the earlier expiry in the queue, and a subsequent burst can
    then force a displacement that plain deadline order would have avoided.
    Measurably, the swap loses a little throughput at light load and breaks
    queue-size parity with EDF, so it is off by default; the default variant
    serves strictly in deadline order and draws its whole advantage from the
    arrival-time drop rule.

    Queue state lives in parallel numpy columns so the arrival-time
    feasibility scan is a constant number of vector passes over the queue.
    """

    name = "mud"

    _INITIAL_CAPACITY = 64

    def __init__(self, head_swap: bool = False) -> None:
        self.head_swap = head_swap
        self.reset()

    def reset(self) -> None:
        cap = self._INITIAL_CAPACITY
        self._e = np.empty(cap, dtype=np.float64)
        self._b = np.empty(cap, dtype=np.float64)
        self._r = np.empty(cap, dtype=np.float64)
        self._jobs: list[Job] = []
        self._n = 0

    def waiting_count(self) -> int:
        return self._n

    def ordered_jobs(self) -> list[Job]:
        return list(self._jobs)

    def _grow(self) -> None:
        cap = len(self._e) * 2
        for name in ("_e", "_b", "_r"):
            old = getattr(self, name)
            new = np.empty(cap, dtype=np.float64)
            new[: self._n] = old[: self._n]
            setattr(self, name, new)

    def _insert(self, pos: int, job: Job) -> None:
        if self._n == len(self._e):
            self._grow()
        n = self._n
        for arr, value in ((self._e, job.expiry), (self._b, job.service),
                           (self._r, job.reward / job.service)):
            arr[pos + 1 : n + 1] = arr[pos:n]
            arr[pos] = value
        self._jobs.insert(pos, job)
        self._n = n + 1

    def _remove(self, pos: int) -> Job:
        n = self._n
        for arr in (self._e, self._b, self._r):
            arr[pos : n - 1] = arr[pos + 1 : n]
        self._n = n - 1
        return self._jobs.pop(pos)

    def _insertion_point(self, job: Job) -> int:
        n = self._n
        e = self._e[:n]
        lo = int(np.searchsorted(e, job.expiry, side="left"))
        hi = int(np.searchsorted(e, job.expiry, side="right"))
        for pos in range(lo, hi):  # ties: reward descending, then id ascending
            other = self._jobs[pos]
            if (-job.reward, job.id) < (-other.reward, other.id):
                return pos
        return hi

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        pos = self._insertion_point(job)
        self._insert(pos, job)
        n = self._n
        base = now + residual
        starts = np.empty(n, dtype=np.float64)
        starts[0] = base
        if n > 1:
            np.cumsum(self._b[: n - 1], out=starts[1:])
            starts[1:] += base
        infeasible = self._e[:n] < starts
        if not infeasible.any():
            return ArrivalDecision.accept_positioned(pos + 1)
        first_miss = int(infeasible.argmax())
        ratios = self._r[: first_miss + 1]
        best = ratios.min()
        candidates = np.flatnonzero(ratios == best)
        if len(candidates) > 1:
            exp = self._e[candidates]
            candidates = candidates[exp == exp.min()]
            if len(candidates) > 1:
                ids = [self._jobs[int(c)].id for c in candidates]
                candidates = candidates[int(np.argmin(ids)) :]
        drop_pos = int(candidates[0])
        dropped = self._remove(drop_pos)
        if dropped is job:
            return ArrivalDecision.reject_arrival(job)
        rank = pos + 1 - (1 if drop_pos < pos else 0)
        return ArrivalDecision.accept_and_drop(rank, dropped)

    def select(self, now: float) -> ServiceDecision:
        n = self._n
        if n == 0:
            return IDLE_DECISION
        if self._e[0] < now:
            return ServiceDecision.drop(self._remove(0))
        if (self.head_swap and n >= 2 and self._e[0] >= now + self._b[1]
                and self._r[0] < self._r[1]):
            return ServiceDecision.serve(self._remove(1))
        return ServiceDecision.serve(self._remove(0))


class GreedyPolicy(Policy):
    """Serve the highest-reward unexpired job.

    Ties prefer the earliest expiry, then the lowest id.  Expired jobs are
    dropped as the selection reaches them; lower-reward expired jobs linger
    until they surface, which never affects who gets served.
    """

    name = "greedy"

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._heap: list[tuple[float, float, int, Job]] = []

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        heapq.heappush(self._heap, (-job.reward, job.expiry, job.id, job))
        return ArrivalDecision.accept_positioned(None)

    def select(self, now: float) -> ServiceDecision:
        if not self._heap:
            return IDLE_DECISION
        job = heapq.heappop(self._heap)[3]
        if job.expiry < now:
            return ServiceDecision.drop(job)
        return ServiceDecision.serve(job)

    def ordered_jobs(self) -> list[Job]:
        return [entry[3] for entry in sorted(self._heap)]

    def waiting_count(self) -> int:
        return len(self._heap)


class FcfsPolicy(Policy):
    """Serve in arrival order; drop expired heads."""

    name = "fcfs"

    def __init__(self) -> None:
        self.reset()

    def reset(self) -> None:
        self._queue: deque[Job] = deque()

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        self._queue.append(job)
        return ArrivalDecision.accept_positioned(len(self._queue))

    def select(self, now: float) -> ServiceDecision:
        if not self._queue:
            return IDLE_DECISION
        job = self._queue.popleft()
        if job.expiry < now:
            return ServiceDecision.drop(job)
        return ServiceDecision.serve(job)

    def ordered_jobs(self) -> list[Job]:
        return list(self._queue)

    def waiting_count(self) -> int:
        return len(self._queue)


class CmuThetaPolicy(Policy):
    """Serve the class with the highest priority index, one queue per class.

    Each class k carries coefficients (c_k, mu_k, theta_k): a holding-cost
    weight, a service rate, and an abandonment rate.  A free server picks the
    nonempty class maximizing c*mu/theta (ties: higher c, then lower class
    key) and takes that queue's head; expired heads are dropped and the
    choice repeats.  Within a class, jobs are kept in arrival order, or in
    deadline order for the EDF variant.
    """

    name = "cmutheta"

    def __init__(self, coefficients: Mapping[object, tuple[float, float, float]],
                 classify: Callable[[Job], object] | None = None,
                 intra_order: str = "fcfs", name: str | None = None) -> None:
        if intra_order not in ("fcfs", "edf"):
            raise ValueError(f"intra_order must be 'fcfs' or 'edf', got {intra_order!r}")
        if not coefficients:
            raise ValueError("need at least one class with coefficients")
        for key, (c, mu, theta) in coefficients.items():
            if c <= 0 or mu <= 0 or theta <= 0:
                raise ValueError(f"class {key!r}: coefficients must be > 0")
        self._coefficients = dict(coefficients)
        self._classify = classify if classify is not None else (lambda job: job.reward)
        self._intra_order = intra_order
        if name is not None:
            self.name = name
        elif intra_order == "edf":
            self.name = "cmutheta_edf"
        # Static service priority: index descending, then c descending, then key.
        self._class_order = sorted(
            self._coefficients,
            key=lambda k: (-self._index(k), -self._coefficients[k][0], k),
        )
        self.reset()

    def _index(self, key) -> float:
        c, mu, theta = self._coefficients[key]
        return c * mu / theta

    def class_index(self, key) -> float:
        """Priority index c*mu/theta of a class."""
        return self._index(key)

    def reset(self) -> None:
        self._queues: dict[object, list[Job]] = {k: [] for k in self._class_order}
        # Parallel sort keys, maintained only for the EDF intra-order.
        self._keys: dict[object, list[tuple[float, float, int]]] = {
            k: [] for k in self._class_order
        }
        self._count = 0

    def on_arrival(self, job: Job, now: float, residual: float) -> ArrivalDecision:
        key = self._classify(job)
        queue = self._queues.get(key)
        if queue is None:
            raise PolicyContractError(
                f"{self.name}: no coefficients for class {key!r} (job {job.id})"
            )
        if self._intra_order == "fcfs":
            queue.append(job)
        else:
            keys = self._keys[key]
            pos = bisect.bisect_left(keys, _deadline_key(job))
            keys.insert(pos, _deadline_key(job))
            queue.insert(pos, job)
        self._count += 1
        return ArrivalDecision.accept_positioned(None)

    def select(self, now: float) -> ServiceDecision:
        if self._count == 0:
            return IDLE_DECISION
        for key in self._class_order:
            queue = self._queues[key]
            if not queue:
                continue
            job = queue.pop(0)
            if self._intra_order == "edf":
                del self._keys[key][0]
            self._count -= 1
            if job.expiry < now:
                return ServiceDecision.drop(job)
            return ServiceDecision.serve(job)
        raise PolicyContractError(f"{self.name}: queue accounting out of sync")

    def ordered_jobs(self) -> list[Job]:
        out: list[Job] = []
        for key in self._class_order:
            out.extend(self._queues[key])
        return out

    def waiting_count(self) -> int:
        return self._count


# Zero-argument policies selectable by name.  The cmu/theta variants need
# per-scenario coefficients and are wired up by the CLI.
REGISTRY: dict[str, type[Policy]] = {
    "edf": EdfPolicy,
    "medf": MedfPolicy,
    "mud": MudPolicy,
    "greedy": GreedyPolicy,
    "fcfs": FcfsPolicy,
}

POLICY_NAMES = ("edf", "medf", "mud", "cmutheta", "cmutheta_edf", "greedy", "fcfs")
