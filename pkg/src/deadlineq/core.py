"""Core domain types for a single-server queue with deadlines and rewards.

A job carries a service time, a relative deadline, and a reward.  Deadlines
use begin-of-service semantics: a job meets its deadline iff its service
*begins* no later than its expiry time; completion may happen after expiry.
A job counts as expired only when the clock is strictly past its expiry, so
starting service at exactly the expiry instant is allowed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

# Event kinds recorded in a simulation trace.
ARRIVAL = "arrival"
SERVICE_BEGIN = "service_begin"
SERVICE_COMPLETE = "service_complete"
DROP = "drop"
EXPIRY_PASSED = "expiry_passed"

EVENT_KINDS = (ARRIVAL, SERVICE_BEGIN, SERVICE_COMPLETE, DROP, EXPIRY_PASSED)

# Queue-event classes.  Every arrival is exactly one of QE1/QE3/QE4; QE2 is
# the "arrival while the server is busy" union tag used when queue-potential
# sizes are not known.  Service begins are QE5, lazily detected in-queue
# expiries QE6, drops QE7.
QE1 = "QE1"  # arrival to an idle server with an empty queue; served at once
QE2 = "QE2"  # arrival while busy (union of QE3/QE4)
QE3 = "QE3"  # arrival while busy; queue potential grows by one
QE4 = "QE4"  # arrival while busy; queue potential size unchanged (displacement)
QE5 = "QE5"  # service begins
QE6 = "QE6"  # deadline passed while waiting (detected at the next decision)
QE7 = "QE7"  # job dropped

QE_CLASSES = (QE1, QE2, QE3, QE4, QE5, QE6, QE7)


class SimulationError(Exception):
    """Base class for simulation failures."""


class PolicyContractError(SimulationError):
    """A policy broke the scheduling contract (forced idle, overlapping
    service, or serving an expired job)."""


class ClassificationError(SimulationError):
    """An event is inconsistent with its surrounding queue states."""


@dataclass(frozen=True, slots=True)
class Job:
    """One unit of work.

    ``expiry`` is the absolute instant by which service must begin; it always
    equals ``arrival + deadline`` (same float operations, checked exactly).
    """

    id: int
    arrival: float
    service: float
    deadline: float
    reward: float
    expiry: float

    def __post_init__(self) -> None:
        if self.service <= 0.0:
            raise ValueError(f"job {self.id}: service must be > 0, got {self.service}")
        if self.deadline <= 0.0:
            raise ValueError(f"job {self.id}: deadline must be > 0, got {self.deadline}")
        if self.reward <= 0.0:
            raise ValueError(f"job {self.id}: reward must be > 0, got {self.reward}")
        if self.expiry != self.arrival + self.deadline:
            raise ValueError(
                f"job {self.id}: expiry {self.expiry!r} != arrival + deadline "
                f"{self.arrival + self.deadline!r}"
            )

    @classmethod
    def make(cls, id: int, arrival: float, service: float, deadline: float,
             reward: float) -> "Job":
        return cls(id, arrival, service, deadline, reward, arrival + deadline)

    @property
    def ratio(self) -> float:
        """Reward per unit of service time."""
        return self.reward / self.service


def expiry(job: Job) -> float:
    """Absolute time by which service must begin: ``arrival + deadline``."""
    return job.arrival + job.deadline


@dataclass(frozen=True, slots=True)
class ScenarioBounds:
    """Attribute bounds of a scenario.

    ``delta_w`` is the minimal gap between two distinct reward values (absent
    for continuous reward distributions).  ``a_delta`` is the short
    inter-arrival ``b_min - delta`` used by the adversarial stream generator.
    """

    b_min: float
    b_max: float
    d_min: float
    d_max: float
    w_min: float
    w_max: float
    delta_w: float | None = None
    a_delta: float | None = None

    def __post_init__(self) -> None:
        if not (0.0 < self.b_min <= self.b_max):
            raise ValueError(f"need 0 < b_min <= b_max, got [{self.b_min}, {self.b_max}]")
        if not (0.0 < self.d_min <= self.d_max):
            raise ValueError(f"need 0 < d_min <= d_max, got [{self.d_min}, {self.d_max}]")
        if not (0.0 < self.w_min <= self.w_max):
            raise ValueError(f"need 0 < w_min <= w_max, got [{self.w_min}, {self.w_max}]")
        if self.delta_w is not None and self.delta_w <= 0.0:
            raise ValueError(f"delta_w must be > 0 when set, got {self.delta_w}")
        if self.a_delta is not None and not (0.0 < self.a_delta < self.b_min):
            raise ValueError(f"a_delta must lie in (0, b_min), got {self.a_delta}")


def queue_length_bound(bounds: ScenarioBounds) -> int:
    """Upper bound on the queue-potential size: ``ceil(d_max / b_min)``.

    Holds for every policy because a job only belongs to the potential while
    its predicted start is at most ``d_max`` away, and each predecessor
    contributes at least ``b_min`` of service.
    """
    if bounds.b_min <= 0.0:
        raise ValueError(f"b_min must be > 0, got {bounds.b_min}")
    if not math.isfinite(bounds.d_max):
        raise ValueError("d_max must be finite for the queue bound")
    return math.ceil(bounds.d_max / bounds.b_min)


@dataclass(frozen=True, slots=True)
class EventRecord:
    """One trace entry.

    ``queue_potential_size`` and ``cumulative_reward`` describe the state
    right after the event; ``cumulative_reward`` sums rewards over served,
    in-service, and queue-potential jobs.  ``qe_class`` is set on every
    arrival, service-begin, drop, and expiry record.
    """

    time: float
    kind: str
    job_id: int
    qe_class: str | None
    queue_potential_size: int
    cumulative_reward: float


@dataclass(frozen=True)
class QueueState:
    """Snapshot of the system around one event."""

    clock: float
    in_service: tuple[int, float] | None  # (job_id, completion_time)
    waiting_ids: tuple[int, ...]
    potential_size: int | None
    served_ids: frozenset[int]
    dropped_ids: frozenset[int]


def classify_arrival(server_idle: bool, queue_empty: bool,
                     potential_before: int | None = None,
                     potential_after: int | None = None,
                     deterministic_service: bool = False) -> str:
    """Classify an arrival into QE1/QE2/QE3/QE4.

    Under constant service times an arrival can never shrink the queue
    potential (one insertion displaces at most one job), so a negative size
    change in that regime is an internal error.  With mixed service times a
    single long insertion may displace several shorter jobs; that still
    reports as QE4 (no growth).
    """
    if server_idle and queue_empty:
        return QE1
    if server_idle and not queue_empty:
        raise ClassificationError("arrival to an idle server with a non-empty queue")
    if potential_before is None or potential_after is None:
        return QE2
    delta = potential_after - potential_before
    if deterministic_service and delta not in (0, 1):
        # One insertion shifts every later start by the same constant service
        # time, so it can neither shrink the potential nor grow it by more
        # than the job itself.
        raise ClassificationError(
            f"queue potential changed by {delta} on one arrival under constant "
            f"service; only 0 or +1 are possible in that regime"
        )
    # With mixed service times one arrival can displace a long job whose
    # removal frees runway for several short ones (delta > 1), or push several
    # short jobs out at once (delta < 0); growth is QE3, the rest QE4.
    return QE3 if delta >= 1 else QE4


def classify_event(before: QueueState, event: EventRecord, after: QueueState,
                   deterministic_service: bool = False) -> str | None:
    """Classify ``event`` into a QE class from its surrounding snapshots.

    Returns ``None`` for service completions (they carry no QE class).
    """
    if not (before.clock <= event.time <= after.clock):
        raise ClassificationError(
            f"event at t={event.time} outside state clocks "
            f"[{before.clock}, {after.clock}]"
        )
    kind = event.kind
    if kind == ARRIVAL:
        return classify_arrival(
            server_idle=before.in_service is None,
            queue_empty=not before.waiting_ids,
            potential_before=before.potential_size,
            potential_after=after.potential_size,
            deterministic_service=deterministic_service,
        )
    if kind == SERVICE_BEGIN:
        return QE5
    if kind == EXPIRY_PASSED:
        return QE6
    if kind == DROP:
        return QE7
    if kind == SERVICE_COMPLETE:
        return None
    raise ClassificationError(f"unknown event kind {kind!r}")


def validate_stream(jobs, strict: bool = True) -> None:
    """Check id and arrival-time ordering of a job stream.

    With ``strict`` arrivals must strictly increase (the renewal model);
    without it ties are allowed (hand-written instances), and the engine
    orders simultaneous arrivals by id.
    """
    last_id = None
    last_t = None
    for job in jobs:
        if last_id is not None:
            if job.id <= last_id:
                raise ValueError(f"job ids must strictly increase ({last_id} -> {job.id})")
            if job.arrival < last_t:
                raise ValueError(
                    f"arrivals must be time-ordered ({last_t} -> {job.arrival})"
                )
            if strict and job.arrival <= last_t:
                raise ValueError(
                    f"arrivals must strictly increase ({last_t} -> {job.arrival})"
                )
        last_id = job.id
        last_t = job.arrival


def realized_bounds(jobs) -> ScenarioBounds:
    """Attribute bounds realized by a concrete stream.

    ``delta_w`` is the minimal gap between distinct realized rewards (absent
    when all rewards are equal).
    """
    if not jobs:
        raise ValueError("cannot derive bounds from an empty stream")
    bs = [j.service for j in jobs]
    ds = [j.deadline for j in jobs]
    ws = sorted({j.reward for j in jobs})
    delta_w = None
    if len(ws) > 1:
        delta_w = min(b - a for a, b in zip(ws, ws[1:]))
    return ScenarioBounds(
        b_min=min(bs), b_max=max(bs),
        d_min=min(ds), d_max=max(ds),
        w_min=ws[0], w_max=ws[-1],
        delta_w=delta_w,
    )
