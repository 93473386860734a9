"""Federation engine: partitioning, local training, aggregation, round loop."""
from .aggregate import (
    ClientUpdate,
    GlobalModel,
    aggregate_fedadam,
    aggregate_fedavg,
    aggregate_fedfisher,
    client_retention,
    client_weights,
)
from .optim import Adam
from .partition import InsufficientDataError, apportion, dirichlet_partition, sample_clients
from .rounds import (
    STRATEGIES,
    ClientRecord,
    Evaluation,
    LocalResult,
    RoundConfig,
    RoundReport,
    evaluate,
    init_params,
    local_train,
    run_round,
)
