"""Seeded workload generation.

Streams are pure functions of (scenario, seed): the same inputs produce a
bit-identical job sequence.  Each job attribute draws from its own child
generator so inter-arrivals, service times, deadlines, and rewards are
mutually independent.  Exponential draws use the inverse CDF on top of the
core generator's uniforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Job, ScenarioBounds

DIST_KINDS = ("deterministic", "exponential", "two_point", "discrete")


class ConfigError(ValueError):
    """Malformed distribution or scenario configuration."""


@dataclass(frozen=True)
class DistSpec:
    """One attribute distribution.

    kinds: ``deterministic(value)``, ``exponential(rate)``,
    ``two_point(lo, hi, p_hi)``, ``discrete(values, probs)``.
    All supports are strictly positive.
    """

    kind: str
    value: float | None = None
    rate: float | None = None
    lo: float | None = None
    hi: float | None = None
    p_hi: float | None = None
    values: tuple[float, ...] | None = None
    probs: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        k = self.kind
        if k == "deterministic":
            if self.value is None or self.value <= 0.0:
                raise ConfigError(f"deterministic value must be > 0, got {self.value}")
        elif k == "exponential":
            if self.rate is None or self.rate <= 0.0:
                raise ConfigError(f"exponential rate must be > 0, got {self.rate}")
        elif k == "two_point":
            if self.lo is None or self.hi is None or self.p_hi is None:
                raise ConfigError("two_point needs lo, hi, p_hi")
            if not (0.0 < self.lo < self.hi):
                raise ConfigError(f"need 0 < lo < hi, got ({self.lo}, {self.hi})")
            if not (0.0 < self.p_hi < 1.0):
                raise ConfigError(f"p_hi must lie in (0, 1), got {self.p_hi}")
        elif k == "discrete":
            if not self.values or not self.probs or len(self.values) != len(self.probs):
                raise ConfigError("discrete needs matching values and probs")
            if any(v <= 0.0 for v in self.values):
                raise ConfigError("discrete values must be > 0")
            if len(self.probs) > 1 and any(not (0.0 < p < 1.0) for p in self.probs):
                raise ConfigError("discrete probs must lie in (0, 1)")
            if abs(sum(self.probs) - 1.0) > 1e-9:
                raise ConfigError(f"discrete probs must sum to 1, got {sum(self.probs)}")
        else:
            raise ConfigError(f"unknown distribution kind {k!r}; expected one of {DIST_KINDS}")

    # -- factories ---------------------------------------------------------
    @classmethod
    def deterministic(cls, value: float) -> "DistSpec":
        return cls(kind="deterministic", value=value)

    @classmethod
    def exponential(cls, rate: float) -> "DistSpec":
        return cls(kind="exponential", rate=rate)

    @classmethod
    def two_point(cls, lo: float, hi: float, p_hi: float) -> "DistSpec":
        return cls(kind="two_point", lo=lo, hi=hi, p_hi=p_hi)

    @classmethod
    def discrete(cls, values, probs) -> "DistSpec":
        return cls(kind="discrete", values=tuple(values), probs=tuple(probs))

    # -- summary helpers ---------------------------------------------------
    def mean(self) -> float:
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            return 1.0 / self.rate
        if self.kind == "two_point":
            return self.lo * (1.0 - self.p_hi) + self.hi * self.p_hi
        return sum(v * p for v, p in zip(self.values, self.probs))

    def support(self) -> tuple[float, float]:
        """(min, max) of the support; max is ``inf`` for exponential."""
        if self.kind == "deterministic":
            return (self.value, self.value)
        if self.kind == "exponential":
            return (0.0, math.inf)
        if self.kind == "two_point":
            return (self.lo, self.hi)
        return (min(self.values), max(self.values))

    def support_points(self) -> tuple[float, ...] | None:
        """Sorted distinct support points, or None for continuous kinds."""
        if self.kind == "deterministic":
            return (self.value,)
        if self.kind == "two_point":
            return (self.lo, self.hi)
        if self.kind == "discrete":
            return tuple(sorted(set(self.values)))
        return None

    def min_gap(self) -> float | None:
        """Minimal difference between two distinct support points."""
        pts = self.support_points()
        if pts is None or len(pts) < 2:
            return None
        return min(b - a for a, b in zip(pts, pts[1:]))

    def quantile(self, q: float) -> float:
        if not (0.0 <= q <= 1.0):
            raise ValueError(f"quantile level must lie in [0, 1], got {q}")
        if self.kind == "deterministic":
            return self.value
        if self.kind == "exponential":
            if q == 1.0:
                return math.inf
            return -math.log1p(-q) / self.rate
        if self.kind == "two_point":
            return self.lo if q <= 1.0 - self.p_hi else self.hi
        acc = 0.0
        pairs = sorted(zip(self.values, self.probs))
        for v, p in pairs:
            acc += p
            if q <= acc:
                return v
        return pairs[-1][0]


def sample_array(spec: DistSpec, rng: np.random.Generator, n: int) -> np.ndarray:
    """Draw ``n`` values from ``spec``, advancing ``rng`` deterministically.

    Constant distributions consume no randomness.  Exponential uses the
    inverse CDF on uniforms from ``rng``; the rare exact-zero uniform is
    nudged up half an ulp to keep draws strictly positive.
    """
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    if spec.kind == "deterministic":
        return np.full(n, spec.value, dtype=np.float64)
    u = rng.random(n)
    if spec.kind == "exponential":
        u = np.where(u > 0.0, u, 2.0 ** -53)
        return -np.log1p(-u) / spec.rate
    if spec.kind == "two_point":
        return np.where(u < spec.p_hi, spec.hi, spec.lo).astype(np.float64)
    cum = np.cumsum(np.asarray(spec.probs, dtype=np.float64))
    idx = np.searchsorted(cum, u, side="right")
    idx = np.minimum(idx, len(spec.probs) - 1)
    return np.asarray(spec.values, dtype=np.float64)[idx]


def sample(spec: DistSpec, rng: np.random.Generator) -> float:
    """One draw from ``spec``."""
    return float(sample_array(spec, rng, 1)[0])


@dataclass(frozen=True)
class ScenarioSpec:
    """A full random scenario: per-attribute distributions, length, and seed."""

    arrival: DistSpec
    service: DistSpec
    deadline: DistSpec
    reward: DistSpec
    n_jobs: int
    seed: int
    bounds: ScenarioBounds | None = None

    def __post_init__(self) -> None:
        if self.n_jobs < 1:
            raise ConfigError(f"n_jobs must be >= 1, got {self.n_jobs}")

    def derived_bounds(self) -> ScenarioBounds:
        """Declared bounds if present, else bounds from the distribution supports."""
        if self.bounds is not None:
            return self.bounds
        b = self.service.support()
        d = self.deadline.support()
        w = self.reward.support()
        return ScenarioBounds(
            b_min=max(b[0], 1e-300), b_max=b[1],
            d_min=max(d[0], 1e-300), d_max=d[1],
            w_min=max(w[0], 1e-300), w_max=w[1],
            delta_w=self.reward.min_gap(),
        )


def attribute_generators(seed: int) -> tuple[np.random.Generator, ...]:
    """Four independent child generators: arrival, service, deadline, reward."""
    children = np.random.SeedSequence(seed).spawn(4)
    return tuple(np.random.Generator(np.random.PCG64(c)) for c in children)


def generate_stream(spec: ScenarioSpec) -> list[Job]:
    """Materialize the job stream for a scenario.

    Arrival times accumulate the inter-arrival draws (``t_i = sum of a_j``);
    ids run 1..n in arrival order.
    """
    rng_a, rng_b, rng_d, rng_w = attribute_generators(spec.seed)
    n = spec.n_jobs
    a = sample_array(spec.arrival, rng_a, n)
    b = sample_array(spec.service, rng_b, n)
    d = sample_array(spec.deadline, rng_d, n)
    w = sample_array(spec.reward, rng_w, n)
    t = np.cumsum(a)
    e = t + d
    return [
        Job(i + 1, float(t[i]), float(b[i]), float(d[i]), float(w[i]), float(e[i]))
        for i in range(n)
    ]


def adversarial_mud_stream(bounds: ScenarioBounds, delta: float,
                           repeats: int) -> list[Job]:
    """Deterministic stream on which ratio-aware dropping beats plain EDF.

    Each repeat is: one flush job after a gap long enough to drain any
    policy's queue (> d_max), then ``n = ceil(d_max / delta)`` filler jobs at
    inter-arrival ``b_min - delta`` with minimal reward, then one final job at
    the same inter-arrival carrying the maximal reward.  The fillers overload
    the queue just enough that the final arrival must displace some job; a
    policy dropping by reward/service ratio sacrifices a filler and keeps the
    valuable final job, while EDF-style ordering loses the final job instead.
    All jobs use service time ``b_min`` and deadline ``d_max``.
    """
    if delta <= 0.0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if delta >= bounds.b_min:
        raise ValueError(f"delta must be < b_min ({bounds.b_min}), got {delta}")
    if repeats < 0:
        raise ValueError(f"repeats must be >= 0, got {repeats}")
    if not math.isfinite(bounds.d_max):
        raise ValueError("d_max must be finite")
    n = math.ceil(bounds.d_max / delta)
    a_delta = bounds.b_min - delta
    gap = bounds.d_max + 2.0 * bounds.b_min  # strictly past any drain point
    jobs: list[Job] = []
    t = 0.0
    jid = 1
    for _ in range(repeats):
        t += gap
        jobs.append(Job.make(jid, t, bounds.b_min, bounds.d_max, bounds.w_min))
        jid += 1
        for _ in range(n):
            t += a_delta
            jobs.append(Job.make(jid, t, bounds.b_min, bounds.d_max, bounds.w_min))
            jid += 1
        t += a_delta
        jobs.append(Job.make(jid, t, bounds.b_min, bounds.d_max, bounds.w_max))
        jid += 1
    return jobs


def adversarial_bounds(b_min: float = 1.0, d_max: float = 4.0,
                       w_min: float = 4.0, w_max: float = 10.0,
                       delta: float = 0.5) -> ScenarioBounds:
    """Bounds for the adversarial stream with its standard parameters."""
    return ScenarioBounds(
        b_min=b_min, b_max=b_min, d_min=d_max, d_max=d_max,
        w_min=w_min, w_max=w_max,
        delta_w=(w_max - w_min) if w_max > w_min else None,
        a_delta=b_min - delta,
    )


# -- experiment presets ----------------------------------------------------

STUDY_LAMBDAS = (0.9, 1.2, 1.5, 1.8, 2.1)
STUDY_SERVICE_RATE = 1.0
STUDY_DEADLINE_RATE = 0.005
STUDY_REWARD_LO = 4.0
STUDY_REWARD_HI = 10.0
STUDY_REWARD_P = 0.5
STUDY_REWARD_RATE = 0.1


def mmb_scenario(lambda_a: float, n_jobs: int = 100_000, seed: int = 0) -> ScenarioSpec:
    """Exponential arrivals/service/deadlines with two-point rewards {4, 10}."""
    return ScenarioSpec(
        arrival=DistSpec.exponential(lambda_a),
        service=DistSpec.exponential(STUDY_SERVICE_RATE),
        deadline=DistSpec.exponential(STUDY_DEADLINE_RATE),
        reward=DistSpec.two_point(STUDY_REWARD_LO, STUDY_REWARD_HI, STUDY_REWARD_P),
        n_jobs=n_jobs,
        seed=seed,
    )


def mmm_scenario(lambda_a: float, n_jobs: int = 100_000, seed: int = 0) -> ScenarioSpec:
    """Exponential arrivals/service/deadlines with exponential rewards."""
    return ScenarioSpec(
        arrival=DistSpec.exponential(lambda_a),
        service=DistSpec.exponential(STUDY_SERVICE_RATE),
        deadline=DistSpec.exponential(STUDY_DEADLINE_RATE),
        reward=DistSpec.exponential(STUDY_REWARD_RATE),
        n_jobs=n_jobs,
        seed=seed,
    )


# -- oracle-suite instance generators ---------------------------------------

def dual_reward_instance(rng: np.random.Generator, n_jobs: int = 10) -> list[Job]:
    """Small instance with unit service, rewards {4, 10}, and deadlines > 2.

    Inter-arrivals are exponential at rate 1.3, overloading the unit-rate
    server so displacements actually occur.
    """
    a = -np.log1p(-rng.random(n_jobs)) / 1.3
    t = np.cumsum(a)
    d = rng.uniform(2.5, 6.0, n_jobs)
    w = np.where(rng.random(n_jobs) < 0.5, 10.0, 4.0)
    return [
        Job.make(i + 1, float(t[i]), 1.0, float(d[i]), float(w[i]))
        for i in range(n_jobs)
    ]


def dual_service_instance(rng: np.random.Generator, n_jobs: int = 10) -> list[Job]:
    """Small instance with services {1, 3}, unit rewards, deadlines > 6."""
    a = -np.log1p(-rng.random(n_jobs)) / 0.7
    t = np.cumsum(a)
    b = np.where(rng.random(n_jobs) < 0.5, 3.0, 1.0)
    d = rng.uniform(6.5, 14.0, n_jobs)
    return [
        Job.make(i + 1, float(t[i]), float(b[i]), float(d[i]), 1.0)
        for i in range(n_jobs)
    ]


# -- flat key/value config format -------------------------------------------

_ATTRS = ("arrival", "service", "deadline", "reward")
_PARAM_KEYS = {
    "deterministic": ("value",),
    "exponential": ("rate",),
    "two_point": ("lo", "hi", "p_hi"),
    "discrete": ("values", "probs"),
}
_BOUND_KEYS = ("b_min", "b_max", "d_min", "d_max", "w_min", "w_max", "delta_w", "a_delta")


def _parse_floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(tok) for tok in text.split(",") if tok.strip())
    except ValueError as err:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") from err


def parse_config(text: str) -> ScenarioSpec:
    """Parse the flat ``key = value`` scenario format.

    Distributions are spelled ``attr.kind`` plus ``attr.param.<name>``
    entries; list parameters are comma separated.  ``bounds.*`` keys are
    optional declared bounds.  ``#`` starts a comment line.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value

    def take(key: str) -> str:
        if key not in entries:
            raise ConfigError(f"missing required key {key!r}")
        return entries.pop(key)

    try:
        n_jobs = int(take("n_jobs"))
        seed = int(take("seed"))
    except ValueError as err:
        raise ConfigError(str(err)) from err

    dists = {}
    for attr in _ATTRS:
        kind = take(f"{attr}.kind")
        if kind not in _PARAM_KEYS:
            raise ConfigError(f"{attr}.kind: unknown kind {kind!r}")
        params = {}
        for pname in _PARAM_KEYS[kind]:
            raw = take(f"{attr}.param.{pname}")
            if pname in ("values", "probs"):
                params[pname] = _parse_floats(raw)
            else:
                try:
                    params[pname] = float(raw)
                except ValueError as err:
                    raise ConfigError(f"{attr}.param.{pname}: {raw!r} is not a number") from err
        dists[attr] = DistSpec(kind=kind, **params)

    bounds = None
    bound_entries = {k: v for k, v in entries.items() if k.startswith("bounds.")}
    if bound_entries:
        kwargs = {}
        for key, raw in bound_entries.items():
            name = key[len("bounds."):]
            if name not in _BOUND_KEYS:
                raise ConfigError(f"unknown bounds key {key!r}")
            try:
                kwargs[name] = float(raw)
            except ValueError as err:
                raise ConfigError(f"{key}: {raw!r} is not a number") from err
            del entries[key]
        try:
            bounds = ScenarioBounds(**kwargs)
        except (TypeError, ValueError) as err:
            raise ConfigError(f"invalid bounds: {err}") from err

    if entries:
        raise ConfigError(f"unknown keys: {', '.join(sorted(entries))}")

    return ScenarioSpec(n_jobs=n_jobs, seed=seed, bounds=bounds, **dists)


def dump_config(spec: ScenarioSpec) -> str:
    """Serialize a scenario back to the flat key/value format."""
    lines = [f"n_jobs = {spec.n_jobs}", f"seed = {spec.seed}"]
    for attr in _ATTRS:
        dist: DistSpec = getattr(spec, attr)
        lines.append(f"{attr}.kind = {dist.kind}")
        for pname in _PARAM_KEYS[dist.kind]:
            value = getattr(dist, pname)
            if isinstance(value, tuple):
                value = ", ".join(repr(v) for v in value)
            lines.append(f"{attr}.param.{pname} = {value}")
    if spec.bounds is not None:
        for name in _BOUND_KEYS:
            value = getattr(spec.bounds, name)
            if value is not None:
                lines.append(f"bounds.{name} = {value}")
    return "\n".join(lines) + "\n"


def load_config(path) -> ScenarioSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def save_config(spec: ScenarioSpec, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(dump_config(spec))
