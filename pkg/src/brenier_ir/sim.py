"""Brenier single-index model.

Labels are modelled as ``y | x ~ Categorical(phi(W x))`` with a cyclically
monotone link ``phi`` realised as the Laguerre map of fitted quantiles. The
index ``W`` and the quantiles ``U`` are updated alternately; each update is a
bounded run of the same monotone finite-difference descent used by
:func:`brenier_ir.core.fit`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    FitConfig,
    LabeledDataset,
    QuantileSet,
    initial_quantiles,
    laguerre_scores,
    projected_descent,
    regression_objective,
)
from .simplex import project_rows_to_simplex
from .transport import OtSolution, max_margin_potential

__all__ = ["SimModel", "sim_objective", "fit_sim", "sim_predict"]

W_INITS = ("least_squares", "gaussian")


@dataclass(frozen=True)
class SimModel:
    """Fitted index ``W`` (d x D), quantiles and target potential.

    ``history`` holds the penalised objective ``J + lambda_W/2 ||W||^2``
    after the start and after every accepted W- or U-step; ``j_history``
    holds ``J`` alone at the same points.
    """

    W: np.ndarray
    quantiles: QuantileSet
    dual_g: np.ndarray
    lambda_W: float
    history: tuple[float, ...]
    j_history: tuple[float, ...]
    config: FitConfig
    T_max: int
    rounds_used: int = 0

    def __post_init__(self):
        W = np.array(self.W, dtype=np.float64)
        g = np.array(self.dual_g, dtype=np.float64).ravel()
        if W.ndim != 2 or W.shape[0] != self.quantiles.d:
            raise ValueError(f"W must be d x D with d={self.quantiles.d}, got {W.shape}")
        if g.shape != (self.quantiles.k,):
            raise ValueError(f"dual_g must have length k={self.quantiles.k}")
        W.setflags(write=False)
        g.setflags(write=False)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "dual_g", g)
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))
        object.__setattr__(self, "j_history", tuple(float(h) for h in self.j_history))

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def D(self) -> int:
        return self.W.shape[1]

    @property
    def train_objective(self) -> float:
        return self.j_history[-1]


def _check_xy(X, Y) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0] or X.shape[0] == 0:
        raise ValueError(f"X and Y must be non-empty 2-D arrays with equal rows, got {X.shape} and {Y.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ValueError("X and Y must be finite")
    return X, Y


def _objective(W: np.ndarray, U: np.ndarray, X: np.ndarray, Y: np.ndarray) -> tuple[float, OtSolution]:
    return regression_objective(U, X @ W.T, Y)


def sim_objective(W, U, X, Y) -> float:
    """``J(W, U)``: the bi-level regression objective with inputs ``W x_i``."""
    X, Y = _check_xy(X, Y)
    W = np.asarray(W, dtype=np.float64)
    U = U.points if isinstance(U, QuantileSet) else np.asarray(U, dtype=np.float64)
    if W.shape != (Y.shape[1], X.shape[1]):
        raise ValueError(f"W must have shape ({Y.shape[1]}, {X.shape[1]}), got {W.shape}")
    if U.ndim != 2 or U.shape[1] != Y.shape[1]:
        raise ValueError(f"U must have {Y.shape[1]} columns")
    return _objective(W, U, X, Y)[0]


def fit_sim(
    X,
    Y,
    config: FitConfig | None = None,
    lambda_W: float = 1e-3,
    T_max: int = 100,
    inner_iters: int = 25,
    w_init: str = "least_squares",
    w_init_scale: float = 0.1,
) -> SimModel:
    """Alternate ridge-penalised W-steps and quantile U-steps.

    Each round runs at most ``inner_iters`` accepted descent steps on ``W``
    (objective ``J + lambda_W/2 ||W||^2``) and then on ``U`` (objective ``J``,
    rows projected to the simplex when ``config.simplex_constrained``).
    Rounds stop early when neither step makes progress.
    """
    config = FitConfig() if config is None else config
    X, Y = _check_xy(X, Y)
    n, D = X.shape
    d = Y.shape[1]
    if config.k > n:
        raise ValueError(f"k={config.k} exceeds the number of samples n={n}")
    if not (np.isfinite(lambda_W) and lambda_W >= 0):
        raise ValueError(f"lambda_W must be nonnegative, got {lambda_W}")
    if int(T_max) != T_max or T_max < 1:
        raise ValueError(f"T_max must be a positive integer, got {T_max}")

    if w_init not in W_INITS:
        raise ValueError(f"w_init must be one of {W_INITS}, got {w_init!r}")

    rng = np.random.default_rng(config.seed)
    W = w_init_scale * rng.standard_normal((d, D))
    if w_init == "least_squares":
        W = _least_squares_index(X, Y, W)
    U = initial_quantiles(LabeledDataset(X @ W.T, Y), config)
    project_u = project_rows_to_simplex if config.simplex_constrained else (lambda v: v)

    def ridge(Wm: np.ndarray) -> float:
        return 0.5 * lambda_W * float(np.sum(Wm * Wm))

    j, sol = _objective(W, U, X, Y)
    history = [j + ridge(W)]
    j_history = [j]
    w_step = 1.0
    u_step = config.initial_step if config.initial_step is not None else config.k / 2.0
    common = dict(
        eps=config.fd_epsilon,
        max_iters=inner_iters,
        min_step=config.min_step,
        step_tolerance=config.step_tolerance,
        objective_tolerance=config.objective_tolerance,
    )
    rounds = 0
    for _ in range(T_max):
        U_fixed = U

        def w_obj(Wm: np.ndarray):
            jj, ss = _objective(Wm, U_fixed, X, Y)
            return jj + ridge(Wm), (jj, ss)

        def record_w(value: float, aux) -> None:
            history.append(value)
            j_history.append(aux[0])

        w_res = projected_descent(
            w_obj, W, lambda v: v, step=w_step, start=(j + ridge(W), (j, sol)), on_accept=record_w, **common
        )
        W, (j, sol) = w_res.x, w_res.aux
        w_step = w_res.step

        W_fixed = W
        u_res = projected_descent(
            lambda Um: _objective(W_fixed, Um, X, Y), U, project_u, step=u_step, start=(j, sol), **common
        )
        U, j, sol = u_res.x, u_res.value, u_res.aux
        u_step = u_res.step
        r = ridge(W)
        for jj in u_res.history[1:]:
            history.append(jj + r)
            j_history.append(jj)

        rounds += 1
        if w_res.iterations == 0 and u_res.iterations == 0:
            break

    return SimModel(
        W=W,
        quantiles=QuantileSet(U, config.simplex_constrained),
        dual_g=max_margin_potential(sol)[0],
        lambda_W=lambda_W,
        history=tuple(history),
        j_history=tuple(j_history),
        config=config,
        T_max=T_max,
        rounds_used=rounds,
    )


def _least_squares_index(X: np.ndarray, Y: np.ndarray, noise: np.ndarray) -> np.ndarray:
    # The transport plan is invariant to translating all W x_i, so centred
    # least squares gives an index whose geometry already follows the labels.
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    coef, *_ = np.linalg.lstsq(Xc, Yc, rcond=None)
    W = coef.T
    scale = np.linalg.norm(W)
    if not np.isfinite(scale) or scale == 0:
        return noise
    # Seeded jitter keeps the start generic without changing its direction.
    return W + 1e-3 * scale * noise / max(np.linalg.norm(noise), 1e-300)


def sim_predict(model: SimModel, x):
    """Laguerre prediction at ``z = W x``; accepts one point or a batch."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    Xq = x[None, :] if single else x
    if Xq.ndim != 2 or Xq.shape[1] != model.D:
        raise ValueError(f"covariates must have dimension D={model.D}, got shape {x.shape}")
    Zq = Xq @ model.W.T
    idx = np.argmin(laguerre_scores(model.quantiles.points, model.dual_g, Zq), axis=1)
    out = model.quantiles.points[idx]
    return out[0].copy() if single else out.copy()
