"""Discrete-event simulation of FIFO single-server queues and serial chains.

This is the ground truth the closed forms are checked against. Each server is
FIFO with an unbounded buffer, so job k of a queue departs at

    departure[k] = max(arrival[k], departure[k-1]) + service[k]

The recursion is evaluated for a whole replication at once: with
``C[k] = service[0] + ... + service[k]``,

    departure[k] = C[k] + max_{j<=k} (arrival[j] - C[j-1])

which is a cumulative maximum, so no per-event Python loop is needed. A job
arriving at the exact instant the previous one departs starts service
immediately, i.e. departures are processed before arrivals on ties.

Random numbers come from numpy's Philox4x64 counter-based generator. Every
(replication, stage, stream) triple gets its own key derived from the master
seed with ``SeedSequence(seed, spawn_key=...)``, so results do not depend on
the order in which replications run.
"""
from __future__ import annotations

import csv
import enum
import math
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .decomposition import ChainSpec
from .queueing import Discipline, UnstableQueue, as_rate

ARRIVAL_STREAM = 0
SERVICE_STREAM = 1
CI95_Z = 1.96

TRACE_HEADER = ("job_id", "stage", "arrival", "service_start", "departure")


class InvalidConfig(ValueError):
    pass


class FeedMode(str, enum.Enum):
    INDEPENDENT = "independent"
    TANDEM = "tandem"


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    jobs_per_replication: int = 200_000
    warmup_fraction: float = 0.1
    replications: int = 10
    feed_mode: FeedMode = FeedMode.INDEPENDENT
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, "feed_mode", FeedMode(self.feed_mode))
        if not 0 <= int(self.seed) < 2**64:
            raise InvalidConfig(f"seed must be a 64-bit unsigned integer, got {self.seed!r}")
        if self.jobs_per_replication < 1:
            raise InvalidConfig("jobs_per_replication must be positive")
        if self.replications < 1:
            raise InvalidConfig("replications must be positive")
        if not 0.0 <= self.warmup_fraction <= 0.5:
            raise InvalidConfig("warmup_fraction must lie in [0, 0.5]")
        if self.workers < 1:
            raise InvalidConfig("workers must be positive")
        if self.retained_jobs < 1:
            raise InvalidConfig("warmup discards every job")

    @property
    def warmup_jobs(self) -> int:
        return int(self.warmup_fraction * self.jobs_per_replication)

    @property
    def retained_jobs(self) -> int:
        return self.jobs_per_replication - self.warmup_jobs


@dataclass(frozen=True)
class SimEstimate:
    mean_sojourn: float
    std_error: float
    ci95_half_width: float
    samples: int
    per_stage_means: tuple[float, ...]
    replication_means: tuple[float, ...]

    def half_width(self, level: float = 0.95) -> float:
        """Normal-approximation CI half width at an arbitrary confidence level."""
        z = statistics.NormalDist().inv_cdf(0.5 + level / 2.0)
        return z * self.std_error

    def contains(self, value: float, level: float = 0.95) -> bool:
        return abs(value - self.mean_sojourn) <= self.half_width(level)


def substream(seed: int, replication: int, stage: int, stream: int) -> np.random.Generator:
    key = np.random.SeedSequence(int(seed), spawn_key=(replication, stage, stream))
    return np.random.Generator(np.random.Philox(key))


def exponential_from_uniform(u, rate: float):
    """Inverse-CDF exponential variate for ``u`` in (0, 1]."""
    return -np.log(u) / rate


def exponential_sample(rng: np.random.Generator, rate: float, size=None):
    # rng.random() is in [0, 1); flip it so u is in (0, 1] and log(u) is finite.
    u = 1.0 - rng.random(size)
    return exponential_from_uniform(u, as_rate(rate, "rate"))


def service_times(
    rng: np.random.Generator, rate: float, discipline: Discipline, size: int
) -> np.ndarray:
    if discipline is Discipline.EXPONENTIAL:
        return exponential_sample(rng, rate, size)
    return np.full(size, 1.0 / rate)


def poisson_arrivals(rng: np.random.Generator, rate: float, size: int) -> np.ndarray:
    return np.cumsum(exponential_sample(rng, rate, size))


def fifo_queue(arrivals: np.ndarray, services: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(service_start, departure)`` for a FIFO single-server queue."""
    work = np.cumsum(services)
    before = np.concatenate(([0.0], work[:-1]))
    departures = work + np.maximum.accumulate(arrivals - before)
    starts = np.maximum(arrivals, np.concatenate(([-np.inf], departures[:-1])))
    return starts, departures


@dataclass
class _StageTrace:
    arrivals: np.ndarray
    starts: np.ndarray
    departures: np.ndarray


def _run_replication(
    lam: float,
    rates: Sequence[float],
    discipline: Discipline,
    config: SimConfig,
    replication: int,
    keep_trace: bool = False,
) -> tuple[float, list[float], list[_StageTrace]]:
    n_jobs = config.jobs_per_replication
    skip = config.warmup_jobs
    stage_means: list[float] = []
    traces: list[_StageTrace] = []
    arrivals = None
    entry = None
    for stage, rate in enumerate(rates):
        if config.feed_mode is FeedMode.INDEPENDENT or stage == 0:
            rng = substream(config.seed, replication, stage, ARRIVAL_STREAM)
            arrivals = poisson_arrivals(rng, lam, n_jobs)
            if stage == 0:
                entry = arrivals
        rng = substream(config.seed, replication, stage, SERVICE_STREAM)
        starts, departures = fifo_queue(arrivals, service_times(rng, rate, discipline, n_jobs))
        stage_means.append(float(np.mean(departures[skip:] - arrivals[skip:])))
        if keep_trace:
            traces.append(_StageTrace(arrivals, starts, departures))
        if config.feed_mode is FeedMode.TANDEM:
            arrivals = departures

    if config.feed_mode is FeedMode.TANDEM:
        total = float(np.mean(arrivals[skip:] - entry[skip:]))
    else:
        total = math.fsum(stage_means)
    return total, stage_means, traces


def _simulate(
    lam: float,
    rates: Sequence[float],
    discipline: Discipline,
    config: SimConfig,
    trace: IO[str] | None = None,
) -> SimEstimate:
    reps = range(config.replications)

    def run(rep: int):
        return _run_replication(lam, rates, discipline, config, rep, keep_trace=trace is not None and rep == 0)

    if config.workers > 1 and config.replications > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            outcomes = list(pool.map(run, reps))
    else:
        outcomes = [run(rep) for rep in reps]

    if trace is not None:
        write_trace(trace, outcomes[0][2])

    # outcomes are in replication order regardless of completion order
    rep_means = tuple(o[0] for o in outcomes)
    count = len(rep_means)
    mean = math.fsum(rep_means) / count
    std_error = statistics.stdev(rep_means) / math.sqrt(count) if count > 1 else 0.0
    per_stage = tuple(
        math.fsum(o[1][s] for o in outcomes) / count for s in range(len(rates))
    )
    return SimEstimate(
        mean_sojourn=mean,
        std_error=std_error,
        ci95_half_width=CI95_Z * std_error,
        samples=count * config.retained_jobs,
        per_stage_means=per_stage,
        replication_means=rep_means,
    )


def simulate_single_queue(
    lam: float,
    mu: float,
    discipline: Discipline | str,
    config: SimConfig = SimConfig(),
    trace: IO[str] | None = None,
) -> SimEstimate:
    lam = as_rate(lam, "lambda")
    mu = as_rate(mu, "mu")
    if lam >= mu:
        raise UnstableQueue(lam, mu)
    return _simulate(lam, [mu], Discipline.parse(discipline), config, trace)


def simulate_chain(
    spec: ChainSpec, config: SimConfig = SimConfig(), trace: IO[str] | None = None
) -> SimEstimate:
    """Simulate the microservice chain of ``spec`` (not its monolith).

    In independent mode every stage gets a fresh Poisson stream and the total
    is the sum of per-stage mean sojourns; in tandem mode jobs flow through the
    stages in order and the total is the mean end-to-end sojourn.
    """
    for i, rate in enumerate(spec.stage_rates):
        if spec.lam >= rate:
            raise UnstableQueue(spec.lam, rate, where=i)
    return _simulate(spec.lam, spec.stage_rates, spec.discipline, config, trace)


def write_trace(handle: IO[str], stages: Sequence[_StageTrace]) -> None:
    writer = csv.writer(handle, lineterminator="\n")
    writer.writerow(TRACE_HEADER)
    if not stages:
        return
    for job in range(len(stages[0].arrivals)):
        for s, st in enumerate(stages):
            writer.writerow(
                (job, s + 1, repr(float(st.arrivals[job])), repr(float(st.starts[job])),
                 repr(float(st.departures[job])))
            )
