import math

import numpy as np
import pytest

from deadlineq.core import QE4
from deadlineq.engine import run_simulation
from deadlineq.policies import EdfPolicy
from deadlineq.workload import (
    ConfigError,
    DistSpec,
    ScenarioSpec,
    adversarial_bounds,
    adversarial_mud_stream,
    attribute_generators,
    dump_config,
    generate_stream,
    mmb_scenario,
    parse_config,
    sample,
    sample_array,
)


def _rng(seed=0):
    return np.random.default_rng(seed)


def test_deterministic_sample_consumes_no_randomness():
    rng = _rng(7)
    before = rng.bit_generator.state["state"]["state"]
    assert sample(DistSpec.deterministic(1.0), rng) == 1.0
    assert rng.bit_generator.state["state"]["state"] == before


def test_two_point_mean():
    rng = _rng(1)
    vals = sample_array(DistSpec.two_point(4.0, 10.0, 0.5), rng, 100_000)
    assert set(np.unique(vals)) == {4.0, 10.0}
    assert abs(vals.mean() - 7.0) < 0.1


def test_exponential_mean_and_positivity():
    rng = _rng(2)
    vals = sample_array(DistSpec.exponential(0.005), rng, 100_000)
    assert (vals > 0).all()
    assert abs(vals.mean() - 200.0) < 5.0


def test_discrete_sampling_frequencies():
    rng = _rng(3)
    spec = DistSpec.discrete([1.0, 2.0, 5.0], [0.2, 0.5, 0.3])
    vals = sample_array(spec, rng, 50_000)
    freq = {v: np.mean(vals == v) for v in (1.0, 2.0, 5.0)}
    assert abs(freq[1.0] - 0.2) < 0.01
    assert abs(freq[2.0] - 0.5) < 0.01
    assert abs(freq[5.0] - 0.3) < 0.01


def test_dist_validation():
    with pytest.raises(ConfigError):
        DistSpec.exponential(0.0)
    with pytest.raises(ConfigError):
        DistSpec.two_point(5.0, 4.0, 0.5)
    with pytest.raises(ConfigError):
        DistSpec.two_point(4.0, 10.0, 1.0)
    with pytest.raises(ConfigError):
        DistSpec.discrete([1.0, 2.0], [0.6, 0.6])
    with pytest.raises(ConfigError):
        DistSpec(kind="uniform", lo=0.0, hi=1.0)


def test_dist_summaries():
    two = DistSpec.two_point(4.0, 10.0, 0.5)
    assert two.mean() == 7.0
    assert two.support() == (4.0, 10.0)
    assert two.min_gap() == 6.0
    exp = DistSpec.exponential(0.1)
    assert exp.mean() == 10.0
    assert exp.min_gap() is None
    assert abs(exp.quantile(0.5) - math.log(2) / 0.1) < 1e-12
    disc = DistSpec.discrete([2.0, 8.0, 5.0], [0.25, 0.25, 0.5])
    assert disc.support_points() == (2.0, 5.0, 8.0)
    assert disc.min_gap() == 3.0
    assert disc.quantile(0.2) == 2.0 and disc.quantile(0.9) == 8.0


def test_single_deterministic_job_stream():
    spec = ScenarioSpec(
        arrival=DistSpec.deterministic(1.0),
        service=DistSpec.deterministic(1.0),
        deadline=DistSpec.deterministic(1.0),
        reward=DistSpec.deterministic(1.0),
        n_jobs=1,
        seed=0,
    )
    (job,) = generate_stream(spec)
    assert (job.id, job.arrival, job.service, job.deadline, job.reward, job.expiry) \
        == (1, 1.0, 1.0, 1.0, 1.0, 2.0)


def test_stream_determinism_and_monotonicity():
    spec = mmb_scenario(0.9, n_jobs=5000, seed=42)
    a = generate_stream(spec)
    b = generate_stream(spec)
    assert a == b
    arrivals = [j.arrival for j in a]
    assert all(t1 < t2 for t1, t2 in zip(arrivals, arrivals[1:]))
    assert all(j.service > 0 and j.deadline > 0 and j.reward > 0 for j in a)
    assert generate_stream(mmb_scenario(0.9, n_jobs=5000, seed=43)) != a


def test_mmb_interarrival_mean():
    jobs = generate_stream(mmb_scenario(0.9, n_jobs=100_000, seed=7))
    gaps = np.diff([0.0] + [j.arrival for j in jobs])
    assert abs(gaps.mean() - 1.0 / 0.9) < 0.02 * (1.0 / 0.9)


def test_attribute_independence():
    jobs = generate_stream(mmb_scenario(1.5, n_jobs=100_000, seed=11))
    d = np.array([j.deadline for j in jobs])
    w = np.array([j.reward for j in jobs])
    corr = np.corrcoef(d, w)[0, 1]
    assert abs(corr) < 0.02


def test_adversarial_stream_structure():
    bounds = adversarial_bounds(b_min=2.0, d_max=4.0, delta=1.0)
    jobs = adversarial_mud_stream(bounds, delta=1.0, repeats=2)
    n = math.ceil(4.0 / 1.0)
    assert n == 4
    assert len(jobs) == 2 * (n + 2)
    first, fillers, final = jobs[0], jobs[1:n + 1], jobs[n + 1]
    assert first.reward == bounds.w_min
    assert all(f.reward == bounds.w_min for f in fillers)
    assert final.reward == bounds.w_max
    assert all(j.service == bounds.b_min and j.deadline == bounds.d_max for j in jobs)
    # short inter-arrival is b_min - delta inside a repeat
    assert fillers[0].arrival - first.arrival == bounds.b_min - 1.0
    # flush gap drains any queue: strictly more than d_max
    assert jobs[n + 2].arrival - final.arrival > bounds.d_max


def test_adversarial_stream_edge_cases():
    bounds = adversarial_bounds()
    assert adversarial_mud_stream(bounds, 0.5, 0) == []
    with pytest.raises(ValueError):
        adversarial_mud_stream(bounds, 1.0, 1)  # delta == b_min
    with pytest.raises(ValueError):
        adversarial_mud_stream(bounds, 0.0, 1)


def test_adversarial_final_arrival_displaces_under_edf():
    bounds = adversarial_bounds()
    repeats = 3
    jobs = adversarial_mud_stream(bounds, 0.5, repeats)
    trace = run_simulation(jobs, EdfPolicy(), record_events=True)
    per_repeat = len(jobs) // repeats
    final_ids = {per_repeat * (k + 1) for k in range(repeats)}
    finals = [r for r in trace.records if r.kind == "arrival" and r.job_id in final_ids]
    assert len(finals) == repeats
    assert all(r.qe_class == QE4 for r in finals)


def test_spawned_generators_are_independent_streams():
    g1 = attribute_generators(123)
    g2 = attribute_generators(123)
    assert [g.random() for g in g1] == [g.random() for g in g2]
    assert len({round(g.random(), 12) for g in g1}) == 4


CONFIG_TEXT = """\
# comment line
n_jobs = 100
seed = 9

arrival.kind = exponential
arrival.param.rate = 0.9
service.kind = deterministic
service.param.value = 1.0
deadline.kind = exponential
deadline.param.rate = 0.005
reward.kind = two_point
reward.param.lo = 4
reward.param.hi = 10
reward.param.p_hi = 0.5
"""


def test_parse_config_and_round_trip():
    spec = parse_config(CONFIG_TEXT)
    assert spec.n_jobs == 100 and spec.seed == 9
    assert spec.arrival.rate == 0.9
    assert spec.reward.hi == 10.0
    assert parse_config(dump_config(spec)) == spec


def test_parse_config_discrete_lists_and_bounds():
    text = CONFIG_TEXT.replace(
        "reward.kind = two_point\nreward.param.lo = 4\nreward.param.hi = 10\n"
        "reward.param.p_hi = 0.5",
        "reward.kind = discrete\nreward.param.values = 1, 2, 5\n"
        "reward.param.probs = 0.25, 0.25, 0.5",
    ) + "bounds.b_min = 1\nbounds.b_max = 1\nbounds.d_min = 1\nbounds.d_max = 50\n" \
        "bounds.w_min = 1\nbounds.w_max = 5\n"
    spec = parse_config(text)
    assert spec.reward.values == (1.0, 2.0, 5.0)
    assert spec.bounds is not None and spec.bounds.d_max == 50.0
    assert parse_config(dump_config(spec)) == spec


@pytest.mark.parametrize("mutation", [
    lambda t: t.replace("n_jobs = 100\n", ""),                 # missing key
    lambda t: t.replace("0.9", "fast"),                        # bad number
    lambda t: t + "mystery.key = 1\n",                         # unknown key
    lambda t: t.replace("two_point", "zipf"),                  # unknown kind
    lambda t: t + "bounds.b_min = -1\nbounds.b_max = 1\nbounds.d_min = 1\n"
                  "bounds.d_max = 1\nbounds.w_min = 1\nbounds.w_max = 1\n",
    lambda t: t.replace("seed = 9", "seed = 9\nseed = 10"),    # duplicate
])
def test_parse_config_errors(mutation):
    with pytest.raises(ConfigError):
        parse_config(mutation(CONFIG_TEXT))
