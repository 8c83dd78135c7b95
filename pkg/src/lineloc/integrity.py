"""Chi-squared fault exclusion and per-axis protection levels.

After a weighted least-squares solve, the weighted sum of squared
residuals (WSSE) follows a central chi-squared distribution with
``n - 6`` degrees of freedom when every measurement carries only
zero-mean Gaussian noise. A WSSE exceeding the ``1 - alpha`` quantile
flags outliers; the line whose endpoint pair holds the largest weighted
squared residual is excluded and the pose re-solved until the test
passes or too few lines remain.

After the test passes, the protection level of each pose axis bounds the
residual error as the sum of two terms:

* a worst-case bias term: the largest per-axis state deviation any
  undetected fault on ``r`` lines could produce while keeping the test
  statistic at the decision threshold, found as the top generalized
  eigenvalue over all endpoint-paired fault hypotheses; and
* a noise term: ``k`` standard deviations of the axis from the state
  covariance.

Faults are always hypothesised per line correspondence: the two
endpoint rows of a line enter and leave hypotheses together.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.special import gammaincinv

from .errors import (
    InsufficientObservationsError,
    IntegrityUnavailableError,
    SingularNormalEquationsError,
)
from .estimator import LinearizedSystem, SolveReport, SolverOptions, gauss_newton_solve
from .geometry import CameraIntrinsics, Pose
from .matching import Correspondence

AXES = ("x", "y", "z", "roll", "pitch", "yaw")
"""State-axis order: translation ``rho`` first, then rotation ``phi``."""

STATE_DIM = 6

_SUBSET_CONDITION_MAX = 1e12
_NORMAL_CONDITION_MAX = 1e14


@dataclass(frozen=True)
class IntegrityConfig:
    """Knobs of the fault-exclusion test and the protection-level bound."""

    alpha: float = 0.05
    k_sigma: float = 3.0
    r_max: int = 2
    min_lines: int = 4

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must be in (0, 1)")
        if self.k_sigma <= 0:
            raise ValueError("k_sigma must be positive")
        if self.r_max < 1:
            raise ValueError("r_max must be at least 1")
        if self.min_lines < 4:
            raise ValueError("min_lines must be at least 4")


@dataclass(frozen=True)
class ExclusionRound:
    """One iteration of the chi-squared test during fault exclusion."""

    wsse: float
    threshold: float
    n_rows: int
    dof: int
    excluded_line_id: int | None  # None on the round that passed / gave up


@dataclass
class FdeReport:
    excluded_line_ids: list[int]
    rounds: list[ExclusionRound]
    passed: bool
    system: LinearizedSystem
    pose: Pose
    solve: SolveReport


@dataclass(frozen=True)
class FaultHypothesis:
    """Selection of ``r`` faulty lines, expanded to their 2r paired rows."""

    line_ids: tuple[int, ...]
    row_indices: np.ndarray

    @classmethod
    def from_lines(cls, system: LinearizedSystem, line_ids) -> "FaultHypothesis":
        ids = tuple(int(i) for i in line_ids)
        rows = np.concatenate([system.rows_of(i) for i in ids])
        if any(r.size != 2 for r in (system.rows_of(i) for i in ids)):
            raise ValueError("each hypothesised line must own exactly two rows")
        return cls(ids, rows)

    def selection_matrix(self, n_rows: int) -> np.ndarray:
        """The 0/1 matrix with one unit column per selected row."""
        a = np.zeros((n_rows, self.row_indices.size))
        a[self.row_indices, np.arange(self.row_indices.size)] = 1.0
        return a


@dataclass
class BiasTermResult:
    value: float
    worst_subset: tuple[int, ...]
    skipped_subsets: list[tuple[int, ...]] = field(default_factory=list)


@dataclass
class PlReport:
    """Per-axis protection levels in the order of :data:`AXES`.

    Translation entries are meters, rotation entries radians on the
    tangent space of the estimate.
    """

    bias: np.ndarray  # (6,) worst undetected-fault term
    noise: np.ndarray  # (6,) k-sigma term
    pl: np.ndarray  # (6,) bias + noise
    worst_subsets: list[tuple[int, ...]]
    skipped_subsets: list[tuple[int, ...]]
    icn: float
    gamma: float
    dof: int


def wsse(system: LinearizedSystem) -> float:
    """Weighted sum of squared residuals of a converged system."""
    return float(np.sum(system.weights * system.residuals**2))


def chi2_quantile(p: float, dof: int) -> float:
    """Quantile of the central chi-squared distribution.

    Computed by inverting the regularized incomplete gamma function.
    """
    if not 0.0 < p < 1.0:
        raise ValueError("p must be in (0, 1)")
    if dof < 1:
        raise ValueError("dof must be at least 1")
    return float(2.0 * gammaincinv(dof / 2.0, p))


def _information(system: LinearizedSystem):
    jw = system.jacobian * system.weights[:, None]
    h = system.jacobian.T @ jw
    if np.linalg.cond(h) > _NORMAL_CONDITION_MAX:
        raise SingularNormalEquationsError("information matrix is rank deficient")
    return h, jw


def state_covariance(system: LinearizedSystem) -> np.ndarray:
    """Covariance of the 6-DoF state estimate, ``(J^T W J)^-1``."""
    h, _ = _information(system)
    return np.linalg.inv(h)


def s_matrix(system: LinearizedSystem) -> np.ndarray:
    """Residual-weighting matrix ``S = W (I - J (J^T W J)^-1 J^T W)``.

    Symmetric positive semidefinite with rank ``n - 6``; its quadratic
    form on the shifted measurements gives the WSSE.
    """
    h, jw = _information(system)
    n = system.n_rows
    return np.diag(system.weights) - jw @ np.linalg.solve(h, jw.T)


def d_matrix(system: LinearizedSystem, axis: int) -> np.ndarray:
    """Rank-one mapping from measurement bias to squared bias on one axis."""
    u = _axis_influence(system)[:, axis]
    return np.outer(u, u)


def _axis_influence(system: LinearizedSystem) -> np.ndarray:
    """Columns ``u_i = W J (J^T W J)^-1 e_i``; bias on axis i is ``u_i^T b``."""
    h, jw = _information(system)
    return np.linalg.solve(h, jw.T).T  # (n, 6)


def noise_term(system: LinearizedSystem, axis: int, k_sigma: float) -> float:
    """``k_sigma`` standard deviations of one state axis."""
    cov = state_covariance(system)
    return float(k_sigma * np.sqrt(cov[axis, axis]))


def bias_term(
    system: LinearizedSystem, axis: int, r: int, gamma: float
) -> BiasTermResult:
    """Worst per-axis bias over all size-``r`` fault hypotheses.

    For each hypothesis the bias magnitude is maximized subject to the
    test statistic sitting on the decision threshold ``gamma``, which
    reduces to the largest generalized eigenvalue of the projected pair
    ``(A^T D A, A^T S A)``. Hypotheses whose residual-space block is
    ill-conditioned are unobservable by the test and recorded as skipped
    rather than inverted.
    """
    if r < 1:
        raise ValueError("r must be at least 1")
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    s = s_matrix(system)
    u = _axis_influence(system)[:, axis]
    return _bias_term_from_parts(system, s, u, r, gamma)


def _bias_term_from_parts(
    system: LinearizedSystem, s: np.ndarray, u: np.ndarray, r: int, gamma: float
) -> BiasTermResult:
    ids = system.line_ids
    if r > len(ids):
        raise ValueError(f"cannot hypothesise {r} faults among {len(ids)} lines")
    best = 0.0
    best_subset: tuple[int, ...] = ()
    skipped: list[tuple[int, ...]] = []
    for subset in itertools.combinations(ids, r):
        hyp = FaultHypothesis.from_lines(system, subset)
        rows = hyp.row_indices
        s_block = s[np.ix_(rows, rows)]
        if np.linalg.cond(s_block) > _SUBSET_CONDITION_MAX:
            skipped.append(subset)
            continue
        v = u[rows]
        try:
            eigenvalues = scipy.linalg.eigh(
                np.outer(v, v), s_block, eigvals_only=True, check_finite=False
            )
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgError):
            skipped.append(subset)
            continue
        value = float(np.sqrt(max(eigenvalues[-1], 0.0) * gamma))
        if value > best:
            best = value
            best_subset = subset
    return BiasTermResult(best, best_subset, skipped)


def protection_level(system: LinearizedSystem, cfg: IntegrityConfig) -> PlReport:
    """Per-axis protection levels of a system that passed fault exclusion.

    The bias term maximizes over every hypothesis of size 1..``r_max``;
    the constraint radius is the chi-squared threshold at the system's
    own (post-exclusion) degrees of freedom.
    """
    n = system.n_rows
    dof = n - STATE_DIM
    if dof < 1:
        raise InsufficientObservationsError(f"{n} rows leave no redundancy for integrity")
    gamma = chi2_quantile(1.0 - cfg.alpha, dof)
    cov = state_covariance(system)
    s = s_matrix(system)
    influence = _axis_influence(system)

    bias = np.zeros(STATE_DIM)
    worst: list[tuple[int, ...]] = [() for _ in range(STATE_DIM)]
    skipped: list[tuple[int, ...]] = []
    n_lines = len(system.line_ids)
    evaluated_any = False
    for r in range(1, min(cfg.r_max, n_lines) + 1):
        skipped_r: set[tuple[int, ...]] = set()
        for axis in range(STATE_DIM):
            result = _bias_term_from_parts(system, s, influence[:, axis], r, gamma)
            skipped_r.update(result.skipped_subsets)
            if result.worst_subset:
                evaluated_any = True
            if result.value > bias[axis]:
                bias[axis] = result.value
                worst[axis] = result.worst_subset
        skipped.extend(sorted(skipped_r))
    if not evaluated_any:
        raise IntegrityUnavailableError("every fault hypothesis is unobservable")

    noise = cfg.k_sigma * np.sqrt(np.diag(cov))
    return PlReport(
        bias=bias,
        noise=noise,
        pl=bias + noise,
        worst_subsets=worst,
        skipped_subsets=skipped,
        icn=icn(system),
        gamma=gamma,
        dof=dof,
    )


def icn(system: LinearizedSystem) -> float:
    """Inverse condition number of ``J^T J``; small values flag degeneracy."""
    eigenvalues = np.linalg.eigvalsh(system.jacobian.T @ system.jacobian)
    largest = float(eigenvalues[-1])
    if largest <= 0.0:
        return 0.0
    return float(np.clip(eigenvalues[0] / largest, 0.0, 1.0))


def fde(
    correspondences: list[Correspondence],
    initial: Pose,
    k: CameraIntrinsics,
    sigma_px: float,
    cfg: IntegrityConfig,
    options: SolverOptions | None = None,
) -> FdeReport:
    """Greedy fault detection and exclusion on the chi-squared statistic.

    Solves the pose, tests the WSSE against the threshold at the current
    degrees of freedom, and while the test fails removes the line whose
    two endpoint rows carry the largest summed weighted squared residual,
    then re-solves. Stops with ``passed=False`` when an exclusion would
    leave fewer than ``min_lines`` correspondences.
    """
    working = list(correspondences)
    if len(working) < cfg.min_lines:
        raise InsufficientObservationsError(
            f"{len(working)} correspondences below the minimum of {cfg.min_lines}"
        )
    excluded: list[int] = []
    rounds: list[ExclusionRound] = []
    pose = initial
    while True:
        report = gauss_newton_solve(working, pose, k, sigma_px, options)
        pose = report.pose
        system = report.final_system
        dof = system.n_rows - STATE_DIM
        statistic = wsse(system)
        threshold = chi2_quantile(1.0 - cfg.alpha, dof)
        if statistic <= threshold:
            rounds.append(ExclusionRound(statistic, threshold, system.n_rows, dof, None))
            return FdeReport(excluded, rounds, True, system, pose, report)
        if len(working) - 1 < cfg.min_lines:
            rounds.append(ExclusionRound(statistic, threshold, system.n_rows, dof, None))
            return FdeReport(excluded, rounds, False, system, pose, report)
        per_line = {}
        for line_id in system.line_ids:
            rows = system.rows_of(line_id)
            per_line[line_id] = float(np.sum(system.weights[rows] * system.residuals[rows] ** 2))
        worst_id = max(sorted(per_line), key=per_line.get)  # ties go to the smallest id
        rounds.append(ExclusionRound(statistic, threshold, system.n_rows, dof, worst_id))
        excluded.append(worst_id)
        working = [c for c in working if c.map_line_id != worst_id]


def monitor_frame(
    correspondences: list[Correspondence],
    initial: Pose,
    k: CameraIntrinsics,
    sigma_px: float,
    cfg: IntegrityConfig,
    options: SolverOptions | None = None,
) -> tuple[FdeReport, PlReport]:
    """Run fault exclusion then protection levels for one frame.

    Raises
    ------
    IntegrityUnavailableError
        When exclusion cannot restore consistency (the report rides on
        the exception) or the surviving solve did not converge.
    """
    fde_report = fde(correspondences, initial, k, sigma_px, cfg, options)
    if not fde_report.passed:
        raise IntegrityUnavailableError(
            "chi-squared test still failing at the minimum line count", fde_report
        )
    if not fde_report.solve.converged:
        raise IntegrityUnavailableError("pose solve did not converge", fde_report)
    return fde_report, protection_level(fde_report.system, cfg)


def noncentrality_gap(
    system: LinearizedSystem, bias: np.ndarray, trials: int = 2000, seed: int = 0
) -> tuple[float, float]:
    """Monte Carlo check of the noncentral WSSE mean shift.

    Draws measurement noise around the injected bias in the linear model
    of the given system and returns ``(empirical, predicted)`` where
    ``empirical = mean(WSSE) - dof`` and ``predicted = b^T S b``.
    """
    bias = np.asarray(bias, dtype=float).reshape(system.n_rows)
    s = s_matrix(system)
    predicted = float(bias @ s @ bias)
    rng = np.random.default_rng(seed)
    sigma = 1.0 / np.sqrt(system.weights)
    samples = bias + rng.normal(size=(trials, system.n_rows)) * sigma
    statistics = np.einsum("ti,ij,tj->t", samples, s, samples)
    empirical = float(np.mean(statistics) - (system.n_rows - STATE_DIM))
    return empirical, predicted


def bound_rate(bounds, errors) -> float:
    """Fraction of entries where the bound covers the absolute error."""
    bounds = np.asarray(bounds, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if bounds.size == 0:
        raise ValueError("bound rate of an empty series is undefined")
    if bounds.shape != errors.shape:
        raise ValueError("bounds and errors must have matching shapes")
    return float(np.mean(bounds >= np.abs(errors)))
