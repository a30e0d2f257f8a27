"""Structure learning of Gaussian Bayesian networks.

Learners (a greedy equivalence search and PC-Stable), accuracy metrics,
a synthetic problem generator, automatic learning of structure learning
ensembles, and a partition-estimation-fusion pipeline for large graphs.
"""

from .errors import (
    ConditioningError,
    CycleError,
    DegenerateColumnError,
    ExtensionError,
    GenerationError,
    InferenceError,
    InsufficientSamplesError,
    OrientationConflictError,
    SlearnError,
)
from .graphs import (
    Cpdag,
    Dag,
    apply_meek_rules,
    consistent_extension,
    dag_to_cpdag,
    read_graph,
    topological_sort,
    would_create_cycle,
    write_graph,
)

__version__ = "0.1.0"
