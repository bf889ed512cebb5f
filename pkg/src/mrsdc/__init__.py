"""Multi-rate spectral deferred corrections for split heat-transfer problems."""

from .errors import InvalidArgumentError, SolverError, StepError
from .quadrature import (
    CollocationTableau,
    MultiRateTableau,
    collocation_weights,
    make_collocation,
    make_multirate,
    make_nodes_equidistant_noleft,
    node_to_node_weights,
)
from .system import CountingSystem, LinearSplitSystem, ScalarSplitSystem, SplitSystem
from .steppers import (
    NodeStates,
    StepperConfig,
    choose_embedded_count,
    imex_euler_step,
    implicit_euler_step,
    integrate,
    mrsdc_predictor,
    mrsdc_sweep,
    sdc_residual,
    sisdc_predictor,
    sisdc_sweep,
)

__version__ = "0.1.0"
