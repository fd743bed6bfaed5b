"""Event-driven simulation of the M/G/1 egalitarian processor-sharing queue.

With n ordinary jobs and K permanent jobs present, every job is served at
rate 1/(n + K).  All ordinary jobs therefore accumulate service at the same
pace, so the simulator keeps one clock of attained service per job
(``attained``) and stores for each job the clock value at which it
completes.  The next departure is the smallest such value; the time until
it is (completion - attained) * (n + K).  This is the exact dynamics, with
no time discretisation.

Size-conditional statistics are collected for jobs whose size equals the
probe atom of a :class:`~psq.service.ProbeMixture`.  Confidence intervals
use batch means over the measured departures.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
from scipy import stats

from .errors import InvalidConfig
from .model import ModelParams
from .service import ProbeMixture

Z99 = float(stats.norm.ppf(0.995))
_CHUNK = 1 << 16


@dataclass(frozen=True)
class SimConfig:
    params: ModelParams
    warmup_departures: int = 10_000
    measured_departures: int = 100_000
    batches: int = 20
    seed: int = 0
    replications: int = 1
    r_values: tuple[float, ...] = ()
    moment_orders: tuple[int, ...] = (1, 2)

    def validate(self) -> None:
        if self.warmup_departures < 0:
            raise InvalidConfig("warmup_departures must be >= 0")
        if self.batches < 2 or self.measured_departures < self.batches:
            raise InvalidConfig("need measured_departures >= batches >= 2")
        if self.replications < 1:
            raise InvalidConfig("replications must be >= 1")
        if any(not r >= 0 for r in self.r_values):
            raise InvalidConfig("LST arguments must be >= 0")
        if any(n < 1 for n in self.moment_orders):
            raise InvalidConfig("moment orders must be >= 1")

    @property
    def probe_size(self) -> float | None:
        d = self.params.service
        return d.probe_size if isinstance(d, ProbeMixture) else None


@dataclass(frozen=True)
class Estimate:
    value: float
    ci_halfwidth: float


@dataclass
class SimResult:
    probe_size: float | None
    probe_moment_estimates: list[tuple[int, float, float]]
    probe_variance: Estimate | None
    qlen_histogram: np.ndarray
    qlen_ci: np.ndarray
    arrival_histogram: np.ndarray
    mean_number: Estimate
    lst_estimates: list[tuple[float, float, float]]
    replication_count: int
    total_events: int
    probe_count: int
    work_balance_error: float = 0.0
    event_digest: int = 0

    def to_dict(self) -> dict:
        return {
            "probe_size": self.probe_size,
            "probe_moment_estimates": [list(t) for t in self.probe_moment_estimates],
            "probe_variance": None if self.probe_variance is None else
            [self.probe_variance.value, self.probe_variance.ci_halfwidth],
            "qlen_histogram": self.qlen_histogram.tolist(),
            "qlen_ci": self.qlen_ci.tolist(),
            "arrival_histogram": self.arrival_histogram.tolist(),
            "mean_number": [self.mean_number.value, self.mean_number.ci_halfwidth],
            "lst_estimates": [list(t) for t in self.lst_estimates],
            "replication_count": self.replication_count,
            "total_events": self.total_events,
            "probe_count": self.probe_count,
            "work_balance_error": self.work_balance_error,
        }


@dataclass
class _Replication:
    """Raw per-batch accumulators of one replication."""

    batch_time: np.ndarray
    batch_area: np.ndarray                 # integral of n dt per batch
    batch_occupancy: list[np.ndarray]      # time spent at each n, per batch
    probe_sojourn: np.ndarray
    probe_batch: np.ndarray
    arrival_counts: np.ndarray
    events: int
    work_delivered: float
    work_accounted: float
    digest: int = 0


def _pad_sum(arrays: Sequence[np.ndarray]) -> np.ndarray:
    size = max(a.size for a in arrays)
    out = np.zeros(size)
    for a in arrays:
        out[: a.size] += a
    return out


def _simulate(cfg: SimConfig, seed_seq: np.random.SeedSequence) -> _Replication:
    params = cfg.params
    lam, K = params.lam, params.K
    d = params.service
    probe = cfg.probe_size
    B = cfg.batches
    warm, meas = cfg.warmup_departures, cfg.measured_departures
    arr_ss, size_ss = seed_seq.spawn(2)
    arr_rng = np.random.default_rng(arr_ss)
    size_rng = np.random.default_rng(size_ss)

    if lam == 0.0:
        # No arrivals: each job finds an empty system and is served at 1/(1+K).
        sizes = d.sample_many(size_rng, meas)
        sojourn = sizes * (1 + K)
        batch = (np.arange(meas) * B) // meas
        mask = sizes == probe if probe is not None else np.zeros(meas, bool)
        return _Replication(
            batch_time=np.ones(B), batch_area=np.zeros(B),
            batch_occupancy=[np.array([1.0]) for _ in range(B)],
            probe_sojourn=sojourn[mask], probe_batch=batch[mask],
            arrival_counts=np.array([0.0]), events=meas,
            work_delivered=float(sizes.sum()), work_accounted=float(sizes.sum()))

    gaps = arr_rng.exponential(1.0 / lam, _CHUNK).tolist()
    sizes = d.sample_many(size_rng, _CHUNK).tolist()
    si = 0

    t = 0.0
    attained = 0.0
    heap: list = []                 # (completion clock, seq, arrival time, size)
    n = 0
    seq = 0
    next_arrival = gaps[0]
    gi = 1

    departures = 0
    total = warm + meas
    measuring = warm == 0
    batch = 0
    occ = [0.0] * 8
    batch_occ: list[np.ndarray] = []
    batch_time = np.zeros(B)
    batch_area = np.zeros(B)
    area = 0.0
    btime = 0.0
    arrivals_seen = [0] * 8
    probe_times: list[float] = []
    probe_batches: list[int] = []
    delivered = 0.0
    departed_work = 0.0
    events = 0
    digest = 0
    inf = math.inf

    while departures < total:
        if n:
            c = n + K
            t_dep = t + (heap[0][0] - attained) * c
        else:
            c = K
            t_dep = inf
        events += 1
        if next_arrival <= t_dep:
            dt = next_arrival - t
            if n:
                attained += dt / c
                if measuring:
                    delivered += n * dt / c
            if measuring:
                if n >= len(occ):
                    occ.extend([0.0] * len(occ))
                    arrivals_seen.extend([0] * len(arrivals_seen))
                occ[n] += dt
                area += n * dt
                btime += dt
                arrivals_seen[n] += 1
            t = next_arrival
            if si == _CHUNK:
                sizes = d.sample_many(size_rng, _CHUNK).tolist()
                si = 0
            x = sizes[si]
            si += 1
            heapq.heappush(heap, (attained + x, seq, t, x))
            seq += 1
            n += 1
            if gi == _CHUNK:
                gaps = arr_rng.exponential(1.0 / lam, _CHUNK).tolist()
                gi = 0
            next_arrival = t + gaps[gi]
            gi += 1
        else:
            dt = t_dep - t
            if measuring:
                if n >= len(occ):
                    occ.extend([0.0] * len(occ))
                    arrivals_seen.extend([0] * len(arrivals_seen))
                occ[n] += dt
                area += n * dt
                btime += dt
                delivered += n * dt / c
            done, _, t_arr, x = heapq.heappop(heap)
            t = t_dep
            n -= 1
            attained = done if n else 0.0
            departures += 1
            digest = (digest * 1_000_003 + hash(t)) & 0xFFFFFFFFFFFF
            if measuring:
                departed_work += x
                if x == probe:
                    probe_times.append(t - t_arr)
                    probe_batches.append(batch)
                k = departures - warm
                if k * B >= (batch + 1) * meas:
                    batch_occ.append(np.array(occ))
                    batch_time[batch] = btime
                    batch_area[batch] = area
                    occ = [0.0] * len(occ)
                    area = btime = 0.0
                    batch += 1
            elif departures == warm:
                measuring = True
                # in-progress work was partly delivered before measuring began
                departed_work -= sum(attained - (key - xx) for key, _, _, xx in heap)

    in_progress = sum(attained - (key - xx) for key, _, _, xx in heap)
    return _Replication(
        batch_time=batch_time, batch_area=batch_area, batch_occupancy=batch_occ,
        probe_sojourn=np.array(probe_times), probe_batch=np.array(probe_batches, dtype=int),
        arrival_counts=np.trim_zeros(np.array(arrivals_seen, dtype=float), "b"),
        events=events, work_delivered=delivered,
        work_accounted=departed_work + in_progress, digest=digest)


def _ci(samples: np.ndarray) -> Estimate:
    """Mean of batch statistics with a 99% normal-quantile half-width."""
    m = samples.size
    sd = float(np.std(samples, ddof=1)) if m > 1 else 0.0
    return Estimate(float(np.mean(samples)), Z99 * sd / math.sqrt(m))


def run(config: SimConfig) -> SimResult:
    config.validate()
    config.params.require_stable()
    root = np.random.SeedSequence(config.seed)
    reps = [_simulate(config, ss) for ss in root.spawn(config.replications)]
    return _summarise(config, reps)


def estimate_lst(config: SimConfig, r_values: Sequence[float]) -> SimResult:
    return run(replace(config, r_values=tuple(float(r) for r in r_values)))


def _summarise(cfg: SimConfig, reps: list[_Replication]) -> SimResult:
    B = cfg.batches
    probe_size = cfg.probe_size

    # pooled batch statistics (every replication contributes B batches)
    occ = [o for rep in reps for o in rep.batch_occupancy]
    width = max(o.size for o in occ)
    occ_mat = np.array([np.pad(o, (0, width - o.size)) for o in occ])
    times = np.concatenate([rep.batch_time for rep in reps])
    fractions = occ_mat / times[:, None]
    hist = occ_mat.sum(axis=0) / times.sum()
    last = int(np.max(np.nonzero(hist)[0])) + 1 if np.any(hist) else 1
    hist = hist[:last]
    qlen_ci = np.array([_ci(fractions[:, j]).ci_halfwidth for j in range(last)])
    areas = np.concatenate([rep.batch_area for rep in reps])
    mean_number = _ci(areas / times)

    arrivals = _pad_sum([rep.arrival_counts for rep in reps])
    arrival_hist = arrivals / arrivals.sum() if arrivals.sum() else arrivals

    moment_est: list[tuple[int, float, float]] = []
    lst_est: list[tuple[float, float, float]] = []
    variance = None
    probe_count = sum(rep.probe_sojourn.size for rep in reps)
    if probe_size is not None and probe_count:
        per_batch = []
        for rep in reps:
            for b in range(B):
                per_batch.append(rep.probe_sojourn[rep.probe_batch == b])
        per_batch = [s for s in per_batch if s.size >= 2]
        if len(per_batch) < 2:
            raise InvalidConfig("too few probe jobs per batch; increase measured_departures")
        for order in cfg.moment_orders:
            e = _ci(np.array([np.mean(s**order) for s in per_batch]))
            moment_est.append((order, e.value, e.ci_halfwidth))
        variance = _ci(np.array([np.var(s, ddof=1) for s in per_batch]))
        for r in cfg.r_values:
            e = _ci(np.array([np.mean(np.exp(-r * s)) for s in per_batch]))
            lst_est.append((r, e.value, e.ci_halfwidth))

    delivered = sum(rep.work_delivered for rep in reps)
    accounted = sum(rep.work_accounted for rep in reps)
    balance = abs(delivered - accounted) / max(delivered, 1e-300)
    digest = 0
    for rep in reps:
        digest = (digest * 1_000_003 + rep.digest) & 0xFFFFFFFFFFFF
    return SimResult(
        probe_size=probe_size,
        probe_moment_estimates=moment_est,
        probe_variance=variance,
        qlen_histogram=hist,
        qlen_ci=qlen_ci,
        arrival_histogram=arrival_hist,
        mean_number=mean_number,
        lst_estimates=lst_est,
        replication_count=len(reps),
        total_events=sum(rep.events for rep in reps),
        probe_count=probe_count,
        work_balance_error=balance,
        event_digest=digest,
    )
