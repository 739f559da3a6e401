"""Regret accounting and empirical checks of the estimation and perception bounds.

Losses follow the offset convention of :mod:`specgain.estimator`: a cell's
prediction of the discrepancy ``r - r_star`` is ``-offset`` and the loss of
one update is ``|delta_r - prediction| = |f - r_star|``.

The module also hosts a synthetic adversary game: every round offers ``N``
candidate bursts of ``horizon`` measurements with expected gains chosen by the
game and specific gains chosen by an adversary.  It exercises the estimator
under full-information and bandit feedback without any ray casting.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .estimator import DomainError, ImprovementFunction, randomization_level

__all__ = [
    "ConsistencyError",
    "RegretLedger",
    "BoundCheck",
    "BanditBoundCheck",
    "BurstOutcome",
    "PerceptionRegretReport",
    "SlopeFit",
    "GameResult",
    "ADVERSARIES",
    "best_fixed_delta",
    "estimation_regret",
    "ftrl_regret_bound",
    "full_info_bound",
    "bandit_bounds",
    "check_full_info_bound",
    "check_bandit_bound",
    "perception_regret",
    "fit_loglog_slope",
    "mean_and_se",
    "play_game",
]


class ConsistencyError(RuntimeError):
    """Ledger and estimator disagree about how often a cell was updated."""


def best_fixed_delta(seq) -> tuple[float, float]:
    """Best constant prediction of ``seq`` under absolute loss.

    Returns the lower median and the total absolute deviation from it.
    """
    x = np.sort(np.asarray(seq, dtype=np.float64).ravel())
    if x.size == 0:
        raise DomainError("best fixed offset of an empty sequence")
    delta = float(x[(x.size - 1) // 2])
    return delta, float(np.abs(x - delta).sum())


class RegretLedger:
    """Per-cell discrepancy and prediction history.

    Cells are keyed ``(s, k)`` with ``s`` the 0-based burst position and
    ``k`` the 1-based bin.  Each entry stores the discrepancy ``r - r_star``
    the cell faced and the discrepancy it predicted before updating, plus the
    execution probability and flag so hallucinated losses can be rebuilt.
    """

    def __init__(self):
        self._dr: dict[tuple, list] = defaultdict(list)
        self._pred: dict[tuple, list] = defaultdict(list)
        self._p: dict[tuple, list] = defaultdict(list)
        self._exec: dict[tuple, list] = defaultdict(list)

    def record(self, s: int, k: int, delta_r: float, prediction: float, p: float = 1.0, executed: bool = True):
        key = (int(s), int(k))
        self._dr[key].append(float(delta_r))
        self._pred[key].append(float(prediction))
        self._p[key].append(float(p))
        self._exec[key].append(bool(executed))

    def cells(self) -> list[tuple]:
        return sorted(self._dr)

    def __len__(self) -> int:
        return sum(len(v) for v in self._dr.values())

    def discrepancies(self, cell) -> np.ndarray:
        return np.asarray(self._dr.get(cell, ()), dtype=np.float64)

    def predictions(self, cell) -> np.ndarray:
        return np.asarray(self._pred.get(cell, ()), dtype=np.float64)

    def losses(self, cell) -> np.ndarray:
        return np.abs(self.discrepancies(cell) - self.predictions(cell))

    def hallucinated_losses(self, cell) -> np.ndarray:
        p = np.asarray(self._p.get(cell, ()), dtype=np.float64)
        e = np.asarray(self._exec.get(cell, ()), dtype=bool)
        return np.where(e, self.losses(cell) / p, 0.0)

    def counts(self) -> dict:
        return {c: len(v) for c, v in self._dr.items()}

    def hindsight(self, cell) -> tuple[float, float]:
        return best_fixed_delta(self.discrepancies(cell))

    def cell_regret(self, cell) -> float:
        _, loss_star = self.hindsight(cell)
        return float(self.losses(cell).sum() - loss_star)

    @property
    def rho(self) -> float:
        return float(sum(self.cell_regret(c) for c in self._dr))

    @property
    def rho_prime(self) -> float:
        return float(sum(self.hindsight(c)[1] for c in self._dr))

    @property
    def total_loss(self) -> float:
        return float(sum(self.losses(c).sum() for c in self._dr))

    @property
    def lam(self) -> float:
        """Largest deviation of a discrepancy from its cell's hindsight offset."""
        out = 0.0
        for c in self._dr:
            d, _ = self.hindsight(c)
            out = max(out, float(np.abs(self.discrepancies(c) - d).max()))
        return out

    def check_counts(self, counts: np.ndarray) -> None:
        """Raise :class:`ConsistencyError` unless entry counts equal ``counts[s, k-1]``."""
        counts = np.asarray(counts)
        mine = np.zeros_like(counts)
        for (s, k), v in self._dr.items():
            if not (0 <= s < counts.shape[0] and 1 <= k <= counts.shape[1]):
                raise ConsistencyError(f"ledger cell {(s, k)} outside table of shape {counts.shape}")
            mine[s, k - 1] = len(v)
        if not np.array_equal(mine, counts):
            bad = np.argwhere(mine != counts)[0]
            raise ConsistencyError(
                f"cell ({bad[0]}, {bad[1] + 1}): ledger has {mine[tuple(bad)]} entries, "
                f"estimator counted {counts[tuple(bad)]}"
            )


def estimation_regret(ledger: RegretLedger, counts: np.ndarray | None = None) -> tuple[dict, float]:
    """Per-cell regret map and overall regret; optionally cross-checks counts."""
    if counts is not None:
        ledger.check_counts(counts)
    per_cell = {c: ledger.cell_regret(c) for c in ledger.cells()}
    return per_cell, float(sum(per_cell.values()))


# ---------------------------------------------------------------------------
# bounds


def ftrl_regret_bound(alpha: int, gain_cap: float, candidate_count: int) -> float:
    """``sum_a N*eta_a/2 + beta**2/eta_1`` with ``eta_a = beta/sqrt(a)``; 0 if never updated."""
    if alpha <= 0:
        return 0.0
    eta = gain_cap / np.sqrt(np.arange(1, alpha + 1))
    return float(candidate_count * eta.sum() / 2 + gain_cap**2 / eta[0])


def full_info_bound(alpha: int, gain_cap: float, candidate_count: int) -> float:
    return gain_cap * (candidate_count * math.sqrt(max(alpha, 0)) + 1)


def bandit_bounds(gain_cap: float, candidate_count: int, T: int, tau: float, horizon: int) -> tuple[float, float]:
    """Appendix bandit bound with the ``N`` factor and with the ``N**horizon`` factor."""
    core = gain_cap * (candidate_count * math.sqrt(T) + 1) / tau
    tail = tau * gain_cap * T
    return candidate_count * core + tail, float(candidate_count) ** horizon * core + tail


@dataclass
class BoundCheck:
    passed: bool
    margin: float
    worst_cell: tuple | None = None
    bounds: dict = field(default_factory=dict)

    def __bool__(self) -> bool:
        return self.passed


def check_full_info_bound(rho_cells: dict, gain_cap: float, candidate_count: int, alpha: dict) -> BoundCheck:
    """Check ``rho[s,i] <= beta*(N*sqrt(alpha[s,i]) + 1)`` for every cell.

    ``margin`` is the smallest ``bound - rho`` over the cells (``gain_cap``
    when no cell was updated).
    """
    margin, worst, bounds = gain_cap, None, {}
    for cell, rho in rho_cells.items():
        b = full_info_bound(int(alpha.get(cell, 0)), gain_cap, candidate_count)
        bounds[cell] = b
        if b - rho < margin or worst is None:
            margin, worst = b - rho, cell
    return BoundCheck(margin >= 0, float(margin), worst, bounds)


@dataclass
class BanditBoundCheck:
    passed: bool
    passed_power: bool
    mean: float
    se: float
    bound: float
    bound_power: float
    tau: float

    @property
    def margin(self) -> float:
        return self.bound - (self.mean + 2 * self.se)

    @property
    def margin_power(self) -> float:
        return self.bound_power - (self.mean + 2 * self.se)

    def __bool__(self) -> bool:
        return self.passed


def check_bandit_bound(
    mean: float,
    se: float,
    gain_cap: float,
    candidate_count: int,
    T: int,
    tau: float | None = None,
    horizon: int = 1,
    cells: int = 1,
) -> BanditBoundCheck:
    """Compare a seed-mean regret (plus two standard errors) with both bandit bounds.

    ``passed`` refers to the lemma as stated (factor ``N``), ``passed_power``
    to the ``N**horizon`` form; ``cells`` multiplies the per-cell bound when
    ``mean`` is an overall regret.
    """
    tau = randomization_level(T) if tau is None else tau
    bn, bp = bandit_bounds(gain_cap, candidate_count, T, tau, horizon)
    bn, bp = bn * cells, bp * cells
    top = mean + 2 * se
    return BanditBoundCheck(top <= bn, top <= bp, float(mean), float(se), bn, bp, float(tau))


def mean_and_se(values) -> tuple[float, float]:
    x = np.asarray(values, dtype=np.float64)
    if x.size == 0:
        raise DomainError("no values")
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


@dataclass
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    ci_low: float
    ci_high: float
    points: int


def fit_loglog_slope(T_values, means, level: float = 0.95) -> SlopeFit:
    """Least-squares slope of ``log(mean)`` on ``log(T)`` with a t-interval."""
    T = np.asarray(T_values, dtype=np.float64)
    y = np.asarray(means, dtype=np.float64)
    if len(np.unique(T)) < 3:
        raise DomainError("slope fit needs at least 3 distinct T values")
    if (y <= 0).any():
        raise DomainError("slope fit needs positive mean regrets")
    fit = stats.linregress(np.log(T), np.log(y))
    q = stats.t.ppf(0.5 + level / 2, len(T) - 2)
    return SlopeFit(
        float(fit.slope), float(fit.intercept), float(fit.stderr),
        float(fit.slope - q * fit.stderr), float(fit.slope + q * fit.stderr), len(T),
    )


# ---------------------------------------------------------------------------
# perception regret


@dataclass(frozen=True)
class BurstOutcome:
    """Comparator data for one planning burst.

    ``best`` is the specific gain of the hindsight-optimal path and
    ``chosen`` that of the executed path, both on the same evaluator;
    ``score`` and ``best_score`` are the planner's objective for the chosen
    path and its maximum over every feasible path.
    """

    t: int
    best: float
    chosen: float
    score: float
    best_score: float


@dataclass
class PerceptionRegretReport:
    varrho: float
    best: np.ndarray
    chosen: np.ndarray
    gamma: float
    delta: float
    rho: float
    rho_prime: float
    bound: float
    lam: float
    remark_bound: float

    @property
    def holds(self) -> bool:
        return self.varrho <= self.bound + 1e-9


def _gamma(bursts) -> float:
    num = sum(b.score for b in bursts)
    den = sum(b.best_score for b in bursts)
    if den <= 0:
        return 1.0
    return float(min(max(num / den, 0.0), 1.0))


def perception_regret(bursts, ledger: RegretLedger, horizon: int, bin_count: int, T: int) -> PerceptionRegretReport:
    """Perception regret of a run and the right-hand side ``4(rho + rho') + Delta``."""
    bursts = list(bursts)
    best = np.array([b.best for b in bursts], dtype=np.float64)
    chosen = np.array([b.chosen for b in bursts], dtype=np.float64)
    gamma = _gamma(bursts)
    delta = (1.0 - gamma) * float(best.sum())
    rho, rho_prime = ledger.rho, ledger.rho_prime
    lam = ledger.lam if len(ledger) else 0.0
    return PerceptionRegretReport(
        varrho=float((best - chosen).sum()),
        best=best,
        chosen=chosen,
        gamma=gamma,
        delta=delta,
        rho=rho,
        rho_prime=rho_prime,
        bound=4.0 * (rho + rho_prime) + delta,
        lam=lam,
        remark_bound=float(horizon * bin_count * T * lam),
    )


# ---------------------------------------------------------------------------
# synthetic adversary game

ADVERSARIES = ("alternating", "random_sign", "biased", "switching")


@dataclass
class GameResult:
    f: ImprovementFunction
    ledger: RegretLedger
    bursts: list
    tau: float
    feedback: str

    @property
    def rho(self) -> float:
        return self.ledger.rho


class _Adversary:
    """Draws ``(r, r_star)`` for every candidate measurement of a round."""

    def __init__(self, kind, horizon, bin_count, gain_cap, rounds, rng):
        if kind not in ADVERSARIES:
            raise DomainError(f"unknown adversary {kind!r}")
        self.kind = kind
        self.cap = gain_cap
        self.rounds = rounds
        self.rng = rng
        self.flip = 0
        # per-cell systematic discrepancy for the learnable adversaries
        self.bias = rng.uniform(-0.4, 0.4, size=(horizon, bin_count)) * gain_cap
        self.bin_count = bin_count

    def draw(self, t, n, horizon):
        cap = self.cap
        if self.kind in ("alternating", "random_sign"):
            if self.kind == "alternating":
                signs = np.empty(n * horizon)
                signs[:] = [1 - 2 * ((self.flip + j) % 2) for j in range(n * horizon)]
                self.flip += n * horizon
            else:
                signs = self.rng.choice((-1.0, 1.0), size=n * horizon)
            # discrepancy of exactly +cap (r = cap, r* = 0) or -cap (r = 0, r* = cap)
            r = np.where(signs > 0, cap, 0.0).reshape(n, horizon)
            return r, cap - r
        r = self.rng.uniform(0.0, cap, size=(n, horizon))
        k = np.minimum((r * self.bin_count / cap).astype(int), self.bin_count - 1)
        bias = self.bias[np.arange(horizon)[None, :], k]
        if self.kind == "switching" and t >= self.rounds // 2:
            bias = -bias
        noise = self.rng.uniform(-0.2, 0.2, size=(n, horizon)) * cap
        return r, np.clip(r - bias + noise, 0.0, cap)


def play_game(
    rounds: int,
    candidate_count: int,
    horizon: int = 1,
    bin_count: int = 1,
    adversary: str = "random_sign",
    feedback: str = "full",
    seed: int = 0,
    tau: float | None = None,
    gain_cap: float = 1.0,
    coefficient: float = 4.0,
) -> GameResult:
    """Play ``rounds`` rounds of the estimation game.

    Each round the learner scores ``candidate_count`` bursts with the current
    improvement function and picks one (argmax, or uniform with probability
    ``tau`` under bandit feedback).  Every measurement of every candidate
    then updates its cell: with weight 1 under ``"full"`` feedback, with
    weight ``1{executed}/p`` under ``"bandit"`` feedback.  The ledger records
    the true loss of every update.
    """
    if rounds < 0 or candidate_count < 1:
        raise DomainError("rounds must be >= 0 and candidate_count >= 1")
    if feedback not in ("full", "bandit"):
        raise DomainError(f"unknown feedback mode {feedback!r}")
    rng = np.random.default_rng(seed)
    adv = _Adversary(adversary, horizon, bin_count, gain_cap, rounds, rng)
    if feedback == "bandit":
        tau = randomization_level(max(rounds, 1)) if tau is None else tau
        if not 0 < tau < 0.5:
            raise DomainError("tau must lie in (0, 0.5)")
    else:
        tau = 0.0 if tau is None else tau
    f = ImprovementFunction(horizon, bin_count, gain_cap, coefficient)
    ledger = RegretLedger()
    bursts = []
    n = candidate_count
    for t in range(rounds):
        r, r_star = adv.draw(t, n, horizon)
        est = np.array([[f.query(s, r[i, s]) for s in range(horizon)] for i in range(n)])
        scores = est.sum(axis=1)
        best = int(np.argmax(scores))
        probs = np.full(n, tau / n)
        probs[best] += 1.0 - tau
        if feedback == "bandit" and rng.random() < tau:
            chosen = int(rng.integers(n))
        else:
            chosen = best
        truth = r_star.sum(axis=1)
        bursts.append(BurstOutcome(t, float(truth.max()), float(truth[chosen]), float(scores[chosen]),
                                   float(scores.max())))
        for i in range(n):
            executed = i == chosen
            w = 1.0 if feedback == "full" else (1.0 / probs[i] if executed else 0.0)
            for s in range(horizon):
                k = f.bin(r[i, s])
                prediction = -float(f.offsets[s, k - 1])
                f.update(s, r[i, s], r_star[i, s], weight=w)
                ledger.record(s, k, r[i, s] - r_star[i, s], prediction, float(probs[i]), executed)
    return GameResult(f, ledger, bursts, float(tau), feedback)
