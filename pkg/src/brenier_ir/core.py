"""Brenier isotonic regression.

The regression function is parametrised by ``k`` target points ("vector
quantiles") ``U``. For a given ``U`` the inputs are transported onto the
uniform measure on ``U`` by exact discrete OT, and training predictions are
the barycentric projections ``n P U``. The outer problem

    min_U (1/n) ||Y - n P(U) U||_F^2,    P(U) in argmin_{P in B(n,k)} <C(U), P>

is minimised by projected gradient descent with central finite-difference
gradients and a monotone backtracking rule. Out-of-sample predictions use the
Laguerre map induced by the target dual potential of the final inner solve.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .simplex import on_simplex, project_rows_to_simplex
from .transport import OtSolution, max_margin_potential, solve_pooled_ot, squared_l2_cost

__all__ = [
    "QuantileSet",
    "FitConfig",
    "LabeledDataset",
    "BrenierModel",
    "outer_objective",
    "fd_gradient",
    "analytic_gradient",
    "fit",
    "initial_quantiles",
    "barycentric_predict_train",
    "laguerre_predict",
    "laguerre_scores",
    "brenier_potential",
]

logger = logging.getLogger(__name__)

INIT_STRATEGIES = ("response_subsample", "random_simplex", "provided")
SIMPLEX_TOL = 1e-9
_INIT_JITTER = 0.1
_MAX_STEP_GROWTH = 1e6


@dataclass(frozen=True)
class QuantileSet:
    """Target support points, one per row."""

    points: np.ndarray
    simplex_constrained: bool = True

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError(f"quantiles must be a non-empty k x d array, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("quantiles contain non-finite values")
        if self.simplex_constrained and not on_simplex(pts, SIMPLEX_TOL):
            raise ValueError("simplex-constrained quantile rows must be nonnegative and sum to 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def k(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]


@dataclass(frozen=True)
class FitConfig:
    """Hyperparameters of the outer descent loop."""

    k: int = 15
    max_outer_iters: int = 200
    fd_epsilon: float = 1e-6
    step_tolerance: float = 1e-10
    objective_tolerance: float = 1e-8
    seed: int = 0
    simplex_constrained: bool = True
    init_strategy: str = "response_subsample"
    initial_quantiles: np.ndarray | None = field(default=None, compare=False, repr=False)
    initial_step: float | None = None
    min_step: float = 1e-8

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ValueError(f"k must be a positive integer, got {self.k}")
        if int(self.max_outer_iters) != self.max_outer_iters or self.max_outer_iters < 0:
            raise ValueError(f"max_outer_iters must be a nonnegative integer, got {self.max_outer_iters}")
        for name in ("fd_epsilon", "step_tolerance", "objective_tolerance", "min_step"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        if self.initial_step is not None and not (np.isfinite(self.initial_step) and self.initial_step > 0):
            raise ValueError(f"initial_step must be positive, got {self.initial_step}")
        if self.init_strategy not in INIT_STRATEGIES:
            raise ValueError(f"init_strategy must be one of {INIT_STRATEGIES}, got {self.init_strategy!r}")
        if self.init_strategy == "provided" and self.initial_quantiles is None:
            raise ValueError("init_strategy='provided' requires initial_quantiles")

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("initial_quantiles")
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "FitConfig":
        data = dict(data)
        if data.get("init_strategy") == "provided":
            # The provided start is not persisted; the fitted quantiles are.
            data["init_strategy"] = "response_subsample"
        return cls(**data)


@dataclass(frozen=True)
class LabeledDataset:
    """Paired inputs ``Z`` (n x d) and responses ``Y`` (n x d)."""

    Z: np.ndarray
    Y: np.ndarray
    response_kind: str = "real"

    def __post_init__(self):
        Z = _matrix(self.Z, "Z")
        Y = _matrix(self.Y, "Y")
        if Z.shape[0] != Y.shape[0]:
            raise ValueError(f"Z has {Z.shape[0]} rows but Y has {Y.shape[0]}")
        if Z.shape[1] != Y.shape[1]:
            raise ValueError(f"Z and Y must share the dimension d, got {Z.shape[1]} and {Y.shape[1]}")
        if self.response_kind not in ("one_hot", "real"):
            raise ValueError(f"response_kind must be 'one_hot' or 'real', got {self.response_kind!r}")
        if self.response_kind == "one_hot":
            ok = np.all((Y == 0) | (Y == 1)) and np.all(Y.sum(axis=1) == 1)
            if not ok:
                bad = int(np.flatnonzero(~(np.all((Y == 0) | (Y == 1), axis=1) & (Y.sum(axis=1) == 1)))[0])
                raise ValueError(f"row {bad} of Y is not one-hot")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "Y", Y)

    @classmethod
    def from_labels(cls, Z, labels, n_classes: int | None = None) -> "LabeledDataset":
        labels = np.asarray(labels)
        if labels.ndim != 1 or not np.issubdtype(labels.dtype, np.integer):
            raise ValueError("labels must be a 1-D integer array")
        d = int(labels.max()) + 1 if n_classes is None else int(n_classes)
        if labels.min() < 0 or labels.max() >= d:
            raise ValueError(f"labels must lie in [0, {d - 1}]")
        return cls(Z, np.eye(d)[labels], "one_hot")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    @property
    def d(self) -> int:
        return self.Z.shape[1]


@dataclass(frozen=True)
class BrenierModel:
    """Fitted quantiles with the target potential of their inner OT solve."""

    quantiles: QuantileSet
    dual_g: np.ndarray
    train_objective: float
    iterations_used: int
    config: FitConfig
    input_dim: int
    status: str = "fitted"
    history: tuple[float, ...] = ()

    def __post_init__(self):
        g = np.array(self.dual_g, dtype=np.float64).ravel()
        if g.shape != (self.quantiles.k,):
            raise ValueError(f"dual_g must have length k={self.quantiles.k}, got {g.shape}")
        if self.input_dim != self.quantiles.d:
            raise ValueError("input_dim must match the quantile dimension")
        if self.train_objective < 0:
            raise ValueError("train_objective must be nonnegative")
        g.setflags(write=False)
        object.__setattr__(self, "dual_g", g)
        object.__setattr__(self, "history", tuple(float(h) for h in self.history))

    @property
    def k(self) -> int:
        return self.quantiles.k

    @property
    def d(self) -> int:
        return self.quantiles.d


# ---------------------------------------------------------------------------
# objective and gradients


def _points_of(U) -> np.ndarray:
    if isinstance(U, QuantileSet):
        return U.points
    U = np.asarray(U, dtype=np.float64)
    return U[:, None] if U.ndim == 1 else U


def regression_objective(U: np.ndarray, Z: np.ndarray, Y: np.ndarray) -> tuple[float, OtSolution]:
    """``(1/n) ||Y - n P U||_F^2`` with ``P`` the exact OT plan from Z to U.

    Identical rows of ``Z`` share one pooled plan row, which keeps the value
    independent of how the solver orders interchangeable sources.
    """
    n = Z.shape[0]
    sol = solve_pooled_ot(Z, U)
    resid = Y - n * (sol.plan.weights @ U)
    return float(np.sum(resid * resid) / n), sol


def outer_objective(U, data: LabeledDataset) -> tuple[float, OtSolution]:
    """Evaluate the bi-level objective at ``U`` and return the inner solution."""
    U = _points_of(U)
    if U.shape[1] != data.d:
        raise ValueError(f"quantiles have {U.shape[1]} columns, data has d={data.d}")
    return regression_objective(U, data.Z, data.Y)


def central_difference(func: Callable[[np.ndarray], float], x: np.ndarray, eps: float) -> np.ndarray:
    """Entrywise central differences of a scalar function of an array."""
    if not eps > 0:
        raise ValueError(f"finite-difference step must be positive, got {eps}")
    x = np.array(x, dtype=np.float64)
    grad = np.empty_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for idx in range(flat.size):
        orig = flat[idx]
        flat[idx] = orig + eps
        up = func(x)
        flat[idx] = orig - eps
        down = func(x)
        flat[idx] = orig
        gflat[idx] = (up - down) / (2.0 * eps)
    return grad


def fd_gradient(data: LabeledDataset, U, eps: float = 1e-6) -> np.ndarray:
    """Central finite-difference gradient of :func:`outer_objective` in ``U``.

    Every perturbed evaluation re-solves the inner transport problem, so the
    estimate stays meaningful where the plan changes with ``U``.
    """
    U = _points_of(U)
    return central_difference(lambda V: outer_objective(V, data)[0], U, eps)


def analytic_gradient(U, data: LabeledDataset, plan: np.ndarray) -> np.ndarray:
    """Gradient of the objective with the plan held fixed: ``2 P^T (n P U - Y)``."""
    U = _points_of(U)
    n = data.n
    return 2.0 * plan.T @ (n * plan @ U - data.Y)


# ---------------------------------------------------------------------------
# outer descent


@dataclass
class DescentResult:
    x: np.ndarray
    value: float
    aux: object
    history: list[float]
    iterations: int
    status: str
    step: float


def projected_descent(
    func: Callable[[np.ndarray], tuple[float, object]],
    x0: np.ndarray,
    project: Callable[[np.ndarray], np.ndarray],
    *,
    eps: float,
    max_iters: int,
    step: float,
    min_step: float = 1e-8,
    step_tolerance: float = 1e-10,
    objective_tolerance: float = 1e-8,
    start: tuple[float, object] | None = None,
    window: int = 10,
    on_accept: Callable[[float, object], None] | None = None,
) -> DescentResult:
    """Monotone projected gradient descent with finite-difference gradients.

    A trial point ``project(x - t * grad)`` is accepted only if it strictly
    lowers ``func``; otherwise ``t`` is halved down to ``min_step``. After an
    accepted step ``t`` doubles. Descent stops once the objective dropped by
    at most ``objective_tolerance`` over the last ``window`` accepted steps.
    The iterate returned is the last accepted, which is also the best seen.
    """
    x = project(np.array(x0, dtype=np.float64))
    value, aux = func(x) if start is None else start
    history = [value]
    status = "max-iters"
    iterations = 0
    step_cap = step * _MAX_STEP_GROWTH
    for _ in range(max_iters):
        if value == 0.0:
            status = "converged-objective"
            break
        grad = central_difference(lambda v: func(v)[0], x, eps)
        accepted = None
        first_trial = True
        while step >= min_step:
            x_new = project(x - step * grad)
            if np.max(np.abs(x_new - x)) <= step_tolerance:
                status = "converged-step" if first_trial else "stalled-at-kink"
                break
            v_new, aux_new = func(x_new)
            if v_new < value:
                accepted = (x_new, v_new, aux_new)
                break
            step *= 0.5
            first_trial = False
        else:
            status = "stalled-at-kink"
        if accepted is None:
            break
        x, value, aux = accepted
        history.append(value)
        if on_accept is not None:
            on_accept(value, aux)
        iterations += 1
        step = min(2.0 * step, step_cap)
        if len(history) > window and history[-window - 1] - value <= objective_tolerance:
            status = "converged-objective"
            break
    return DescentResult(x=x, value=value, aux=aux, history=history, iterations=iterations, status=status, step=step)


def initial_quantiles(data: LabeledDataset, config: FitConfig) -> np.ndarray:
    """Starting quantiles according to ``config.init_strategy``.

    ``response_subsample`` draws distinct rows of ``Y`` without replacement,
    cycling through fresh permutations when there are fewer than ``k``, and
    jitters them: toward a Dirichlet(1) draw when simplex-constrained, with
    small Gaussian noise otherwise.
    """
    rng = np.random.default_rng(config.seed)
    k, d = config.k, data.d
    Y = data.Y
    if config.init_strategy == "provided":
        U = np.array(config.initial_quantiles, dtype=np.float64)
        if U.ndim == 1:
            U = U[:, None]
        if U.shape != (k, d):
            raise ValueError(f"initial_quantiles must have shape ({k}, {d}), got {U.shape}")
    elif config.init_strategy == "random_simplex":
        if config.simplex_constrained:
            U = rng.dirichlet(np.ones(d), size=k)
        else:
            U = Y.mean(axis=0) + _spread(Y) * rng.standard_normal((k, d))
    else:
        distinct = np.unique(Y, axis=0)
        m = distinct.shape[0]
        if m >= k:
            idx = rng.choice(m, size=k, replace=False)
        else:
            reps = -(-k // m)
            idx = np.concatenate([rng.permutation(m) for _ in range(reps)])[:k]
        U = distinct[idx]
        if config.simplex_constrained:
            U = (1.0 - _INIT_JITTER) * U + _INIT_JITTER * rng.dirichlet(np.ones(d), size=k)
        else:
            U = U + 1e-3 * _spread(Y) * rng.standard_normal((k, d))
    if config.simplex_constrained:
        U = project_rows_to_simplex(U)
    return U


def _spread(Y: np.ndarray) -> np.ndarray:
    s = Y.std(axis=0)
    return np.where(s > 0, s, 1.0)


def _identity(x: np.ndarray) -> np.ndarray:
    return x


def fit(data: LabeledDataset, config: FitConfig | None = None) -> BrenierModel:
    """Fit ``k`` quantiles by minimising the bi-level regression objective.

    Parameters
    ----------
    data : LabeledDataset
    config : FitConfig, optional
        Defaults to ``FitConfig()``.

    Returns
    -------
    BrenierModel
        Best quantiles found, the target potential ``g`` of their inner OT
        solve (``g[0] == 0``), the objective history of accepted steps and a
        termination status (``converged-objective``, ``converged-step``,
        ``stalled-at-kink`` or ``max-iters``).
    """
    config = FitConfig() if config is None else config
    if data.n == 0:
        raise ValueError("cannot fit on an empty dataset")
    if config.k > data.n:
        raise ValueError(f"k={config.k} exceeds the number of samples n={data.n}")
    if config.simplex_constrained and config.k < data.d:
        warnings.warn(
            f"k={config.k} is smaller than the number of classes d={data.d}; "
            "some classes cannot receive their own bin",
            stacklevel=2,
        )

    U0 = initial_quantiles(data, config)
    project = project_rows_to_simplex if config.simplex_constrained else _identity
    step = config.initial_step if config.initial_step is not None else config.k / 2.0
    result = projected_descent(
        lambda U: regression_objective(U, data.Z, data.Y),
        U0,
        project,
        eps=config.fd_epsilon,
        max_iters=config.max_outer_iters,
        step=step,
        min_step=config.min_step,
        step_tolerance=config.step_tolerance,
        objective_tolerance=config.objective_tolerance,
    )
    logger.debug("fit finished: %s after %d steps, objective %.6g", result.status, result.iterations, result.value)
    sol: OtSolution = result.aux
    g, _ = max_margin_potential(sol)
    return BrenierModel(
        quantiles=QuantileSet(result.x, config.simplex_constrained),
        dual_g=g,
        train_objective=result.value,
        iterations_used=result.iterations,
        config=config,
        input_dim=data.d,
        status=result.status,
        history=tuple(result.history),
    )


# ---------------------------------------------------------------------------
# prediction


def inner_solution(model: BrenierModel, data: LabeledDataset) -> OtSolution:
    """Re-solve the inner transport problem at the model's quantiles."""
    if data.d != model.d:
        raise ValueError(f"data dimension {data.d} does not match model dimension {model.d}")
    return solve_pooled_ot(data.Z, model.quantiles.points)


def barycentric_predict_train(model: BrenierModel, data: LabeledDataset) -> np.ndarray:
    """Training predictions ``n P* U``: each row a convex combination of quantiles."""
    sol = inner_solution(model, data)
    return data.n * (sol.plan.weights @ model.quantiles.points)


def laguerre_scores(U, g, Z) -> np.ndarray:
    """``||z - u_j||^2 - g_j`` for every query row and quantile."""
    return squared_l2_cost(Z, U) - np.asarray(g, dtype=np.float64)[None, :]


def laguerre_predict(model: BrenierModel, z):
    """Laguerre-map prediction.

    Returns ``(u_j, j)`` with ``j = argmin_j ||z - u_j||^2 - g_j`` (lowest
    index on ties). A 1-D ``z`` is one point of dimension ``d``; a 2-D ``z``
    is a batch and yields an ``(m, d)`` array and an index array.
    """
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Zq = z[None, :] if single else z
    if Zq.ndim != 2 or Zq.shape[1] != model.d:
        raise ValueError(f"query points must have dimension d={model.d}, got shape {z.shape}")
    if not np.all(np.isfinite(Zq)):
        raise ValueError("query points contain non-finite values")
    idx = np.argmin(laguerre_scores(model.quantiles.points, model.dual_g, Zq), axis=1)
    out = model.quantiles.points[idx]
    if single:
        return out[0].copy(), int(idx[0])
    return out.copy(), idx


def brenier_potential(U, g, Z) -> np.ndarray:
    """Convex potential ``max_j <z, u_j> - ||u_j||^2 / 2 + g_j / 2``.

    ``g`` is the target potential for the unscaled squared cost; halving it
    gives the potential for the cost ``||z - u||^2 / 2``. Laguerre outputs
    and barycentric training outputs are subgradients of this function.
    """
    U = _points_of(U)
    Z = np.asarray(Z, dtype=np.float64)
    Z = Z[None, :] if Z.ndim == 1 else Z
    g = np.asarray(g, dtype=np.float64)
    affine = Z @ U.T - 0.5 * np.sum(U * U, axis=1)[None, :] + 0.5 * g[None, :]
    return affine.max(axis=1)


def _matrix(X, name: str) -> np.ndarray:
    X = np.array(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array, got ndim={X.ndim}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains NaN or infinite values")
    return X
