"""Single-server queue simulation with deadlines, rewards, and dropping policies."""

from .core import (
    EventRecord,
    Job,
    PolicyContractError,
    QueueState,
    ScenarioBounds,
    SimulationError,
    classify_event,
    expiry,
    queue_length_bound,
)
from .engine import (
    Epoch,
    SimulationTrace,
    TraceComparison,
    compare_traces,
    compute_queue_potential,
    empty_queue_epochs,
    run_simulation,
)
from .oracle import (
    OracleResult,
    optimal_offline,
    optimal_topclass_count,
    replay_witness,
)
from .policies import (
    CmuThetaPolicy,
    EdfPolicy,
    FcfsPolicy,
    GreedyPolicy,
    MedfPolicy,
    MudPolicy,
    queue_offsets,
)
from .workload import (
    DistSpec,
    ScenarioSpec,
    adversarial_mud_stream,
    generate_stream,
    sample,
)

__version__ = "0.1.0"
