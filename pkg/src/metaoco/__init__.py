"""Meta-learning of tuning parameters for online learners.

A within-task learner (projected gradient descent or exponentially
weighted aggregation) runs over a stream of tasks; between tasks a
meta-strategy updates its tuning parameter — starting point and step
size, learning rate, or prior — by gradient or proximal steps on a
per-task regret criterion.
"""

from .errors import (
    ConstraintActive,
    ContractViolation,
    DegeneratePrior,
    DivergenceError,
    InfeasibleSet,
    UnsupportedOperation,
)
from .losses import (
    Bounds,
    EwaPrior,
    EwaRate,
    ExpertLoss,
    HingeLoss,
    OgaParam,
    SquaredLoss,
    Task,
    eval_loss,
    grad_loss,
)
from .projections import (
    project_ball,
    project_interval,
    project_oga_param,
    project_simplex_floor,
)
from .within_task import TaskTrace, ewa_weights, run_ewa, run_oga
from .meta_loss import (
    MetaLossResult,
    best_expert,
    meta_loss_ewa_eta,
    meta_loss_ewa_prior,
    meta_loss_oga,
    meta_loss_oga_general,
    meta_loss_oga_quadratic,
    ridge_estimator,
)
from .solvers import InnerSolverCfg
from .meta_strategy import (
    MetaState,
    alpha_eta,
    alpha_oga,
    alpha_prior,
    lipschitz_eta,
    lipschitz_oga,
    ogms_eta_step,
    ogms_step,
    opms_step,
)
from .generators import (
    ExpertStreamCfg,
    StreamCfg,
    gen_classification_stream,
    gen_expert_stream,
    gen_regression_stream,
    regression_lipschitz,
)
from .experiments import (
    Method,
    MethodSpec,
    RunRecord,
    aggregate,
    mse_end_of_task,
    read_csv,
    regret_curve,
    run_stream,
    summary_table,
    write_csv,
)

__version__ = "0.1.0"
