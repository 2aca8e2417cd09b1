"""Desk-scale laboratory for reinforcement-learned DVFS governors on periodic
multi-task, multi-deadline workloads: a multi-core CPU simulator, temporal
state encoders, a from-scratch GRU+MLP Q-network with double Q-learning, the
classic utilization-driven baseline governors, and an experiment harness."""

__version__ = "0.1.0"

from .taskmodel import (  # noqa: F401
    BenchmarkProfile,
    TaskSpec,
    TaskSetSpec,
    WorkloadError,
    baseline_time,
    builtin_taskset,
    generate_random_taskset,
    load_taskset,
    save_taskset,
)
from .simcore import (  # noqa: F401
    EpisodeSummary,
    PeriodObservation,
    SimConfig,
    SimConfigError,
    SimState,
    new_simulation,
    power,
    run_episode,
)
from .governors import BaselineGovernor, GovernorKind, decide  # noqa: F401
from .encoders import (  # noqa: F401
    EncoderConfig,
    TegmState,
    TemState,
    tegm_network_inputs,
    tegm_update,
    tem_network_inputs,
    tem_update,
)
from .network import (  # noqa: F401
    ArchDescriptor,
    QNetworkParams,
    apply_update,
    backward,
    deserialize,
    gru_forward,
    init_params,
    q_forward,
    serialize,
)
from .rl import (  # noqa: F401
    ReplayPool,
    TrainConfig,
    Transition,
    bucket_index,
    compute_reward,
    ddqn_targets,
    rl_decide,
    train,
)
