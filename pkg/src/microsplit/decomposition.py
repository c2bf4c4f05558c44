"""Monolith vs. n-microservice comparison scenarios.

A monolith with mean service time ``1/M`` is split into ``n`` stages whose
mean service times add back up to ``1/M``. Two fixed splits are provided:

* worst case: one hot stage at rate ``lam + eps``, the remaining ``n - 1``
  stages at ``(n - 1) mu`` each, monolith rate ``mu (lam + eps) / (mu + lam + eps)``;
* best case: every stage at ``n mu``, monolith rate ``mu``.

Every stage is assumed to see Poisson(``lam``) arrivals, so the chain total is
the sum of single-queue sojourn times.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence, Union

import numpy as np

from .queueing import Discipline, StageMetrics, UnstableQueue, as_rate, sojourn

MAX_STAGES = 10_000
DEFAULT_GRID_POINTS = 64
DEFAULT_GRID_LOW = 0.02
DEFAULT_GRID_HIGH = 0.95
CONSERVATION_RTOL = 1e-9


class InvalidN(ValueError):
    pass


class UnstableMonolith(UnstableQueue):
    """The worst-case monolith rate does not exceed the arrival rate."""

    def __init__(self, lam: float, monolith_rate: float):
        super().__init__(lam, monolith_rate, where="monolith")


class InfeasibleGridPoint(ValueError):
    def __init__(self, points: Sequence[float]):
        self.points = tuple(points)
        listed = ", ".join(repr(p) for p in self.points)
        super().__init__(f"{len(self.points)} infeasible arrival rate(s): {listed}")


@dataclass(frozen=True)
class Worst:
    label = "worst"
    epsilon: float

    def __post_init__(self):
        object.__setattr__(self, "epsilon", as_rate(self.epsilon, "epsilon"))


@dataclass(frozen=True)
class Best:
    label = "best"


@dataclass(frozen=True)
class Custom:
    label = "custom"


SplitCase = Union[Worst, Best]


@dataclass(frozen=True)
class ChainSpec:
    discipline: Discipline
    lam: float
    stage_rates: tuple[float, ...]
    monolith_rate: float
    case: Union[Worst, Best, Custom] = field(default_factory=Custom)
    mu: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "discipline", Discipline.parse(self.discipline))
        object.__setattr__(self, "lam", as_rate(self.lam, "lambda"))
        rates = tuple(as_rate(r, f"stage {i + 1} rate") for i, r in enumerate(self.stage_rates))
        if not 1 <= len(rates) <= MAX_STAGES:
            raise InvalidN(f"number of stages must be in [1, {MAX_STAGES}], got {len(rates)}")
        object.__setattr__(self, "stage_rates", rates)
        object.__setattr__(self, "monolith_rate", as_rate(self.monolith_rate, "monolith rate"))

    @property
    def n(self) -> int:
        return len(self.stage_rates)

    @property
    def conserves_work(self) -> bool:
        """True when the stage service times add up to the monolith's."""
        total = math.fsum(1.0 / r for r in self.stage_rates)
        return math.isclose(total, 1.0 / self.monolith_rate, rel_tol=CONSERVATION_RTOL)

    def check_stability(self) -> None:
        for i, rate in enumerate(self.stage_rates):
            if self.lam >= rate:
                raise UnstableQueue(self.lam, rate, where=i)
        if self.lam >= self.monolith_rate:
            raise UnstableQueue(self.lam, self.monolith_rate, where="monolith")


@dataclass(frozen=True)
class ComparisonResult:
    per_stage: tuple[StageMetrics, ...]
    micro_total_time: float
    monolith: StageMetrics

    @property
    def monolith_time(self) -> float:
        return self.monolith.sojourn_time

    @property
    def absolute_improvement(self) -> float:
        return self.monolith_time - self.micro_total_time

    @property
    def speedup(self) -> float:
        return self.monolith_time / self.micro_total_time

    @property
    def near_saturation(self) -> bool:
        return self.monolith.near_saturation or any(m.near_saturation for m in self.per_stage)


def _check_n(n: int, minimum: int) -> int:
    if isinstance(n, bool) or int(n) != n:
        raise InvalidN(f"n must be an integer, got {n!r}")
    n = int(n)
    if not minimum <= n <= MAX_STAGES:
        raise InvalidN(f"n must be in [{minimum}, {MAX_STAGES}], got {n}")
    return n


def worst_case_monolith_rate(lam: float, epsilon: float, mu: float) -> float:
    lam = as_rate(lam, "lambda")
    epsilon = as_rate(epsilon, "epsilon")
    mu = as_rate(mu, "mu")
    if lam >= mu:
        raise UnstableQueue(lam, mu, where="cold stages (mu must exceed lambda)")
    rate = mu * (lam + epsilon) / (mu + lam + epsilon)
    if rate <= lam:
        raise UnstableMonolith(lam, rate)
    return rate


def build_worst_case(
    n: int, lam: float, mu: float, epsilon: float, discipline: Discipline | str
) -> ChainSpec:
    n = _check_n(n, 2)
    monolith = worst_case_monolith_rate(lam, epsilon, mu)
    lam = float(lam)
    hot = lam + float(epsilon)
    cold = (n - 1) * float(mu)
    spec = ChainSpec(
        discipline=discipline,
        lam=lam,
        stage_rates=(hot,) + (cold,) * (n - 1),
        monolith_rate=monolith,
        case=Worst(epsilon),
        mu=float(mu),
    )
    spec.check_stability()
    return spec


def build_best_case(n: int, lam: float, mu: float, discipline: Discipline | str) -> ChainSpec:
    n = _check_n(n, 1)
    lam = as_rate(lam, "lambda")
    mu = as_rate(mu, "mu")
    if lam >= mu:
        raise UnstableQueue(lam, mu, where="monolith")
    spec = ChainSpec(
        discipline=discipline,
        lam=lam,
        stage_rates=(n * mu,) * n,
        monolith_rate=mu,
        case=Best(),
        mu=mu,
    )
    spec.check_stability()
    return spec


def custom_chain(
    lam: float,
    stage_rates: Sequence[float],
    monolith_rate: float,
    discipline: Discipline | str,
) -> ChainSpec:
    """User-defined split. Non-conserving splits are allowed but warned about."""
    spec = ChainSpec(discipline, lam, tuple(stage_rates), monolith_rate, case=Custom())
    spec.check_stability()
    if not spec.conserves_work:
        warnings.warn(
            "stage service times do not sum to the monolith service time",
            RuntimeWarning,
            stacklevel=2,
        )
    return spec


def build_chain(
    case: Union[Worst, Best], n: int, lam: float, mu: float, discipline: Discipline | str
) -> ChainSpec:
    if isinstance(case, Worst):
        return build_worst_case(n, lam, mu, case.epsilon, discipline)
    if isinstance(case, Best):
        return build_best_case(n, lam, mu, discipline)
    raise TypeError(f"expected Worst or Best, got {case!r}")


def analyze(spec: ChainSpec) -> ComparisonResult:
    per_stage = []
    for i, rate in enumerate(spec.stage_rates):
        try:
            per_stage.append(sojourn(spec.discipline, spec.lam, rate))
        except UnstableQueue as exc:
            raise UnstableQueue(exc.lam, exc.mu, where=i) from None
    try:
        monolith = sojourn(spec.discipline, spec.lam, spec.monolith_rate)
    except UnstableQueue as exc:
        raise UnstableQueue(exc.lam, exc.mu, where="monolith") from None
    total = math.fsum(m.sojourn_time for m in per_stage)
    return ComparisonResult(per_stage=tuple(per_stage), micro_total_time=total, monolith=monolith)


def verify_improvement(result: ComparisonResult) -> bool:
    # Strict on purpose: an identity split (n=1) must report False.
    return result.micro_total_time < result.monolith_time


def is_feasible(case: Union[Worst, Best], n: int, lam: float, mu: float) -> bool:
    if lam <= 0.0 or lam >= mu:
        return False
    if isinstance(case, Worst):
        rate = mu * (lam + case.epsilon) / (mu + lam + case.epsilon)
        return rate > lam and (n - 1) * mu > lam
    return n * mu > lam


def lambda_max(case: Union[Worst, Best], n: int, mu: float, iterations: int = 200) -> float:
    """Supremum of arrival rates for which every queue of the scenario is stable.

    Found by bisection on the feasibility predicate; the feasible set is the
    open interval ``(0, lambda_max)``.
    """
    mu = as_rate(mu, "mu")
    lo, hi = 0.0, mu
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if is_feasible(case, n, mid, mu):
            lo = mid
        else:
            hi = mid
    return hi


def default_grid(case: Union[Worst, Best], n: int, mu: float) -> np.ndarray:
    top = lambda_max(case, n, mu)
    return np.linspace(DEFAULT_GRID_LOW * top, DEFAULT_GRID_HIGH * top, DEFAULT_GRID_POINTS)


@dataclass(frozen=True)
class SweepRow:
    lam: float
    stage_times: tuple[float, ...]
    micro_total: float
    monolith: float

    @property
    def improvement(self) -> float:
        return self.monolith - self.micro_total

    @property
    def speedup(self) -> float:
        return self.monolith / self.micro_total


@dataclass(frozen=True)
class SweepTable:
    case: Union[Worst, Best]
    n: int
    mu: float
    discipline: Discipline
    rows: tuple[SweepRow, ...]
    skipped: tuple[float, ...] = ()

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows])


def sweep(
    case: Union[Worst, Best],
    n: int,
    mu: float,
    discipline: Discipline | str,
    lambda_grid: Iterable[float] | None = None,
    strict: bool = True,
) -> SweepTable:
    """Evaluate the scenario at each arrival rate of an increasing grid.

    In strict mode any infeasible grid point aborts with InfeasibleGridPoint
    listing all of them; otherwise those points are skipped and reported in
    ``SweepTable.skipped``.
    """
    discipline = Discipline.parse(discipline)
    mu = as_rate(mu, "mu")
    n = _check_n(n, 2 if isinstance(case, Worst) else 1)
    grid = default_grid(case, n, mu) if lambda_grid is None else lambda_grid
    grid = [float(x) for x in grid]
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("lambda grid must be strictly increasing")

    bad = [lam for lam in grid if not is_feasible(case, n, lam, mu)]
    if bad and strict:
        raise InfeasibleGridPoint(bad)
    rows = []
    for lam in grid:
        if not is_feasible(case, n, lam, mu):
            continue
        result = analyze(build_chain(case, n, lam, mu, discipline))
        rows.append(
            SweepRow(
                lam=lam,
                stage_times=tuple(m.sojourn_time for m in result.per_stage),
                micro_total=result.micro_total_time,
                monolith=result.monolith_time,
            )
        )
    return SweepTable(case, n, mu, discipline, tuple(rows), tuple(bad))


# --- randomized theorem checking ------------------------------------------

RHO_RANGE = (0.05, 0.95)
N_RANGE = (2, 16)
EPSILON_RANGE = (1e-3, 1e2)
MU_RANGE = (1e-1, 1e2)


@dataclass(frozen=True)
class Draw:
    case: Union[Worst, Best]
    discipline: Discipline
    n: int
    lam: float
    mu: float
    rho: float


def _log_uniform(rng: np.random.Generator, low: float, high: float) -> float:
    return float(math.exp(rng.uniform(math.log(low), math.log(high))))


def draw_scenario(rng: np.random.Generator, case_label: str, discipline: Discipline) -> Draw:
    """Draw a random feasible scenario.

    The monolith utilization ``rho`` is drawn uniformly and ``lam`` is solved
    from it, so every draw is stable by construction. For the worst case
    ``lam`` is the positive root of ``lam^2 + lam (mu (1 - rho) + eps) - rho mu eps = 0``.
    """
    rho = float(rng.uniform(*RHO_RANGE))
    n = int(rng.integers(N_RANGE[0], N_RANGE[1] + 1))
    mu = _log_uniform(rng, *MU_RANGE)
    if case_label == "best":
        return Draw(Best(), discipline, n, rho * mu, mu, rho)
    eps = _log_uniform(rng, *EPSILON_RANGE)
    b = mu * (1.0 - rho) + eps
    c = rho * mu * eps
    lam = 2.0 * c / (b + math.sqrt(b * b + 4.0 * c))
    return Draw(Worst(eps), discipline, n, lam, mu, rho)


@dataclass
class CellReport:
    case: str
    discipline: Discipline
    trials: int = 0
    passed: int = 0
    counterexample: Draw | None = None

    @property
    def failed(self) -> int:
        return self.trials - self.passed


def check_theorems(
    trials: int,
    seed: int,
    check: Callable[[ComparisonResult], bool] = verify_improvement,
) -> list[CellReport]:
    """Run ``trials`` random feasible draws in each case x discipline cell."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    reports = []
    cells = [(c, d) for c in ("worst", "best") for d in Discipline]
    for index, (case_label, discipline) in enumerate(cells):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,)))
        )
        report = CellReport(case_label, discipline)
        for _ in range(trials):
            draw = draw_scenario(rng, case_label, discipline)
            result = analyze(build_chain(draw.case, draw.n, draw.lam, draw.mu, discipline))
            report.trials += 1
            if check(result):
                report.passed += 1
            elif report.counterexample is None:
                report.counterexample = draw
        reports.append(report)
    return reports
