"""Brenier isotonic regression: multivariate monotone regression through optimal transport."""

from .calibration import (
    CalibrationSet,
    SimplexBinning,
    accuracy,
    all_metrics,
    calibration_map_grid,
    classwise_ce,
    confidence_ce,
    fit_recalibrator,
    l1_calibration_error,
    recalibrate,
    simplex_grid,
)
from .core import (
    BrenierModel,
    FitConfig,
    LabeledDataset,
    QuantileSet,
    analytic_gradient,
    barycentric_predict_train,
    brenier_potential,
    fd_gradient,
    fit,
    laguerre_predict,
    outer_objective,
)
from .io import load_dataset, load_model, save_model
from .monotone import check_cyclic_monotone, check_weak_iop
from .pav import isotonic_mse, pav_fit
from .sim import SimModel, fit_sim, sim_objective, sim_predict
from .simplex import project_row_to_simplex, project_rows_to_simplex
from .transport import (
    DualPotentials,
    OtSolution,
    TransportPlan,
    brute_force_monge,
    recover_vertex_plan,
    solve_discrete_ot,
    squared_l2_cost,
)

__version__ = "0.1.0"
