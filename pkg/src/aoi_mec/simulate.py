"""Discrete-event simulation of the three-stage tandem FCFS system.

Engine design: because every stage is a single FCFS server (the local stage
is per-UE but each UE's packets traverse it in order), completion order
equals arrival order at every stage, so each stage reduces to a Lindley
recursion over the merged arrival sequence. That recursion vectorizes:
with c the cumulative service times, the departure times are
c + running-max of (arrival - preceding cumulative service). The whole run
is a handful of numpy passes instead of an event heap.

A consequence used for run truncation: a packet generated after packet j
can never delay packet j at any stage, so simulating every UE's generation
process up to a common horizon (the latest counted generation time across
UEs) makes the waits of all counted packets exact, with no end-of-run
truncation bias. UEs whose counted packets end before the horizon get
extra "padding" packets that are fully simulated but never counted.

Randomness: one dedicated stream per UE for generation and one per server
for services, each spawned from the master seed by a fixed key. Stream
consumption per run depends only on the generation randomness, so fixed
seeds give common random numbers across offloading ratios and schemes
(Partial(0) and Local produce bit-identical paths).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import stats

from .model import (
    InsufficientData,
    InvalidParams,
    SystemConfig,
    check_stability,
    derive_rates,
)


class DivergenceWarning(RuntimeWarning):
    """A queue grew past the configured cap (expected for unstable runs)."""


PACKET_DTYPE = np.dtype([
    ("ue", np.int32),
    ("seq", np.int64),          # per-UE generation index (0-based)
    ("counted", np.bool_),      # False only for horizon-padding packets
    ("gen", np.float64),
    ("edge_done", np.float64),
    ("tx_done", np.float64),
    ("local_done", np.float64),
    ("wait_edge", np.float64),
    ("serv_edge", np.float64),
    ("wait_tx", np.float64),
    ("serv_tx", np.float64),
    ("wait_local", np.float64),
    ("serv_local", np.float64),
])


@dataclass(frozen=True)
class SimParams:
    """Simulation controls.

    warmup_packets_per_ue=None discards the first 10% of each UE's packets.
    record_correlations additionally estimates the E[Y W] terms, their
    event-conditioned splits, and the queue-occupancy statistics used by
    the geometric-distribution check. keep_records retains the raw packet
    arrays (one per replication) -- sized for small runs only.
    """

    seed: int
    packets_per_ue: int
    warmup_packets_per_ue: Optional[int] = None
    replications: int = 10
    record_correlations: bool = False
    keep_records: bool = False
    queue_cap: int = 100_000

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise InvalidParams(f"seed must fit in 64 bits, got {self.seed}")
        if self.packets_per_ue < 1:
            raise InvalidParams("packets_per_ue must be >= 1")
        w = self.warmup()
        if not 0 <= w < self.packets_per_ue:
            raise InvalidParams(
                f"need packets_per_ue > warmup >= 0, got {self.packets_per_ue}"
                f" and {w}")
        if self.replications < 1:
            raise InvalidParams("replications must be >= 1")
        if self.queue_cap < 1:
            raise InvalidParams("queue_cap must be >= 1")

    def warmup(self) -> int:
        if self.warmup_packets_per_ue is None:
            return self.packets_per_ue // 10
        return int(self.warmup_packets_per_ue)


@dataclass(frozen=True)
class Estimate:
    """A point estimate with its replication-based uncertainty.

    se and ci95 are NaN when there is a single replication.
    """

    value: float
    se: float
    ci95: float


@dataclass(frozen=True)
class CorrelationEstimates:
    """Per-UE Monte-Carlo estimates of the correlation terms.

    yw_* estimate E[Y_j W_j] per stage. phi_* split the transmission- and
    local-stage products by whether the packet finished its edge service
    before the predecessor left the transmission server (the catch-up
    event); the two splits sum to the corresponding yw_* estimate.
    cov_* are sample covariances cov(Y_j, W_j) per stage (expected <= 0).

    edge_others_hist_own0[n][m] counts retained generation instants of UE n
    that found m other-UE packets and none of its own at the edge node;
    edge_own0_samples[n] is the row sum (histograms pool replications).
    """

    yw_edge: tuple[Estimate, ...]
    yw_tx: tuple[Estimate, ...]
    yw_local: tuple[Estimate, ...]
    phi_bjd: tuple[Estimate, ...]
    phi_ljd: tuple[Estimate, ...]
    phi_bju: tuple[Estimate, ...]
    phi_lju: tuple[Estimate, ...]
    cov_y_wedge: tuple[Estimate, ...]
    cov_y_wtx: tuple[Estimate, ...]
    cov_y_wlocal: tuple[Estimate, ...]
    edge_others_hist_own0: tuple[tuple[int, ...], ...]
    edge_own0_samples: tuple[int, ...]


@dataclass(frozen=True)
class Diagnostics:
    """Run health: queue extremes, horizon, delivery accounting."""

    max_edge_queue: int
    max_tx_queue: int
    max_local_queues: tuple[int, ...]
    sim_time: float
    delivered: tuple[int, ...]
    diverged: bool
    near_unstable: bool
    replications: int


@dataclass(frozen=True)
class SimResult:
    per_ue_aoi: tuple[Estimate, ...]
    per_ue_paoi: tuple[Estimate, ...]
    system_aoi: Estimate
    system_paoi: Estimate
    correlations: Optional[CorrelationEstimates]
    diagnostics: Diagnostics
    records: Optional[tuple[np.ndarray, ...]]


@dataclass(frozen=True)
class CorrelationTerms:
    """Sample means of Y_j * W_j per stage with within-path standard errors."""

    yw_edge: float
    yw_edge_se: float
    yw_tx: float
    yw_tx_se: float
    yw_local: float
    yw_local_se: float


def _lindley(arrivals: np.ndarray, services: np.ndarray):
    """Departure times and waits of a FCFS single server, vectorized.

    arrivals must be non-decreasing (guaranteed stage to stage because FCFS
    preserves order). d_k = max_{i<=k}(t_i + sum services i..k) unrolls to
    cumulative services plus a running maximum.
    """
    c = np.cumsum(services)
    boundary = arrivals - (c - services)
    done = c + np.maximum.accumulate(boundary)
    # cancellation in the cumulative sums leaves residue of order
    # eps * horizon on waits that are exactly zero, on either side of 0;
    # snap the window to hard zeros (a true wait falls inside it with
    # probability ~1e-8 and the error is then below the window width)
    waits = done - services - arrivals
    if waits.size:
        tol = 64.0 * np.finfo(np.float64).eps * (abs(float(arrivals[-1]))
                                                 + float(c[-1]))
        snapped = waits <= tol
        waits[snapped] = 0.0
        done[snapped] = arrivals[snapped] + services[snapped]
        np.maximum.accumulate(done, out=done)
    return done, waits


def _stream(seed: int, rep: int, stream_id: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(rep, stream_id)))


def _generate_arrivals(cfg: SystemConfig, seed: int, rep: int, M: int):
    """Per-UE generation times padded to a common horizon.

    Returns a list of per-UE time arrays; entries past index M-1 are
    padding (simulated for cross-UE contention, never counted).
    """
    times = []
    gens = []
    for n in range(cfg.num_ues):
        g = _stream(seed, rep, n)
        t = np.cumsum(g.standard_exponential(M) / cfg.gen_rates[n])
        times.append(t)
        gens.append(g)
    horizon = max(t[M - 1] for t in times)
    for n in range(cfg.num_ues):
        t = times[n]
        while t[-1] < horizon:
            gap = horizon - t[-1]
            k = int(gap * cfg.gen_rates[n] * 1.25) + 16
            extra = t[-1] + np.cumsum(gens[n].standard_exponential(k)
                                      / cfg.gen_rates[n])
            t = np.concatenate([t, extra])
        # keep one packet past the horizon; later ones cannot affect
        # anything counted (FCFS never lets a later generation overtake)
        cut = max(int(np.searchsorted(t, horizon, side="left")) + 1, M)
        times[n] = t[:min(cut, len(t))]
    return times


def _run_replication(cfg: SystemConfig, params: SimParams, rep: int):
    """Simulate one replication; returns the merged packet table."""
    rates = derive_rates(cfg)
    N = cfg.num_ues
    M = params.packets_per_ue
    per_ue_times = _generate_arrivals(cfg, params.seed, rep, M)

    ue = np.concatenate([np.full(len(t), n, dtype=np.int32)
                         for n, t in enumerate(per_ue_times)])
    seq = np.concatenate([np.arange(len(t), dtype=np.int64)
                          for t in per_ue_times])
    gen = np.concatenate(per_ue_times)
    # deterministic merge: time, then UE id, then sequence number
    order = np.lexsort((seq, ue, gen))
    ue, seq, gen = ue[order], seq[order], gen[order]
    K = len(gen)

    rows = np.zeros(K, dtype=PACKET_DTYPE)
    rows["ue"] = ue
    rows["seq"] = seq
    rows["counted"] = seq < M
    rows["gen"] = gen

    # Stage 1: shared edge computation server at the effective rate.
    if math.isinf(rates.eff_edge):
        edge_done = gen.copy()
    else:
        s_edge = _stream(params.seed, rep, N).standard_exponential(K) / rates.eff_edge
        edge_done, w_edge = _lindley(gen, s_edge)
        rows["serv_edge"] = s_edge
        rows["wait_edge"] = w_edge
    rows["edge_done"] = edge_done

    # Stage 2: shared transmission server (always a real stage).
    s_tx = _stream(params.seed, rep, N + 1).standard_exponential(K) / cfg.tx_rate
    tx_done, w_tx = _lindley(edge_done, s_tx)
    rows["serv_tx"] = s_tx
    rows["wait_tx"] = w_tx
    rows["tx_done"] = tx_done

    # Stage 3: one local computation server per UE.
    local_done = np.empty(K)
    for n in range(N):
        mask = ue == n
        arr = tx_done[mask]
        u = rates.eff_local[n]
        if math.isinf(u):
            local_done[mask] = arr
        else:
            s_loc = (_stream(params.seed, rep, N + 2 + n)
                     .standard_exponential(len(arr)) / u)
            ld, wl = _lindley(arr, s_loc)
            local_done[mask] = ld
            rows["serv_local"][mask] = s_loc
            rows["wait_local"][mask] = wl
    rows["local_done"] = local_done
    return rows


def _max_in_system(arrivals: np.ndarray, departures: np.ndarray) -> int:
    """Peak number in system, sampled just after each arrival."""
    if len(arrivals) == 0:
        return 0
    present = np.arange(1, len(arrivals) + 1) - np.searchsorted(
        departures, arrivals, side="right")
    return int(present.max())


def _mean_se(products: np.ndarray):
    n = len(products)
    m = float(np.mean(products))
    se = float(np.std(products, ddof=1) / math.sqrt(n)) if n > 1 else math.nan
    return m, se


def _estimate_ue(rows_ue: np.ndarray, M: int, W: int, want_corr: bool):
    """Point estimates for one UE from one replication.

    Uses generation pairs (j-1, j) with both packets inside the retained
    window [W, M); the first retained packet only anchors its successor's
    inter-generation gap.
    """
    gen = rows_ue["gen"]
    j = np.arange(W + 1, M)
    y = gen[j] - gen[j - 1]
    t_sys = rows_ue["local_done"][j] - gen[j]
    q = 0.5 * y * y + y * t_sys
    aoi = float(np.sum(q) / np.sum(y))
    paoi = float(np.mean(y + t_sys))
    out = {"aoi": aoi, "paoi": paoi}
    if want_corr:
        w_e = rows_ue["wait_edge"][j]
        w_d = rows_ue["wait_tx"][j]
        w_u = rows_ue["wait_local"][j]
        # catch-up event: packet j clears the edge stage before packet j-1
        # clears the transmission server
        caught = rows_ue["edge_done"][j] < rows_ue["tx_done"][j - 1]
        out["yw_edge"] = float(np.mean(y * w_e))
        out["yw_tx"] = float(np.mean(y * w_d))
        out["yw_local"] = float(np.mean(y * w_u))
        out["phi_bjd"] = float(np.mean(y * w_d * caught))
        out["phi_ljd"] = float(np.mean(y * w_d * ~caught))
        out["phi_bju"] = float(np.mean(y * w_u * caught))
        out["phi_lju"] = float(np.mean(y * w_u * ~caught))
        for name, w in (("cov_y_wedge", w_e), ("cov_y_wtx", w_d),
                        ("cov_y_wlocal", w_u)):
            out[name] = float(np.mean(y * w) - np.mean(y) * np.mean(w))
    return out


def _edge_occupancy_own0(rows: np.ndarray, rows_ue: np.ndarray,
                         M: int, W: int) -> np.ndarray:
    """Other-UE edge-node occupancy at retained generation instants that
    found no own packet there (the conditioning of the geometric law).

    Completions tie-break before generations: a packet completing exactly
    at the observation instant has left, the observed packet itself has
    not yet arrived.
    """
    t_obs = rows_ue["gen"][W:M]
    all_gen = rows["gen"]          # merged order: non-decreasing
    all_done = rows["edge_done"]   # FCFS: non-decreasing too
    total = (np.searchsorted(all_gen, t_obs, side="left")
             - np.searchsorted(all_done, t_obs, side="right"))
    own_gen = rows_ue["gen"]
    own_done = rows_ue["edge_done"]
    own = (np.searchsorted(own_gen, t_obs, side="left")
           - np.searchsorted(own_done, t_obs, side="right"))
    others = total - own
    return others[own == 0]


def _aggregate(values: np.ndarray) -> Estimate:
    """Pool replication-level estimates into value / SE / 95% CI."""
    r = len(values)
    mean = float(np.mean(values))
    if r < 2:
        return Estimate(mean, math.nan, math.nan)
    se = float(np.std(values, ddof=1) / math.sqrt(r))
    ci = float(stats.t.ppf(0.975, r - 1) * se)
    return Estimate(mean, se, ci)


def simulate_mec(cfg: SystemConfig, params: SimParams) -> SimResult:
    """Simulate the tandem system and estimate AoI / peak AoI per UE.

    Stability is not required: unstable systems simulate fine, their
    estimates just grow with run length, and the divergence flag trips
    when a queue exceeds params.queue_cap.
    """
    N = cfg.num_ues
    M = params.packets_per_ue
    W = params.warmup()
    if M - W < 2:
        raise InvalidParams(
            "need at least 2 retained packets per UE to form generation "
            f"pairs; got packets_per_ue={M}, warmup={W}")
    R = params.replications
    want_corr = params.record_correlations
    rates = derive_rates(cfg)

    scalar_keys = ["aoi", "paoi"]
    if want_corr:
        scalar_keys += ["yw_edge", "yw_tx", "yw_local",
                        "phi_bjd", "phi_ljd", "phi_bju", "phi_lju",
                        "cov_y_wedge", "cov_y_wtx", "cov_y_wlocal"]
    acc = {k: np.zeros((R, N)) for k in scalar_keys}
    hists = [np.zeros(0, dtype=np.int64) for _ in range(N)]
    max_edge = max_tx = 0
    max_local = [0] * N
    sim_time = 0.0
    diverged = False
    kept = []

    for rep in range(R):
        rows = _run_replication(cfg, params, rep)
        sim_time = max(sim_time, float(rows["local_done"].max()))
        if math.isfinite(rates.eff_edge):
            max_edge = max(max_edge, _max_in_system(rows["gen"], rows["edge_done"]))
        max_tx = max(max_tx, _max_in_system(rows["edge_done"], rows["tx_done"]))
        for n in range(N):
            rows_ue = rows[rows["ue"] == n]
            if math.isfinite(rates.eff_local[n]):
                max_local[n] = max(max_local[n], _max_in_system(
                    rows_ue["tx_done"], rows_ue["local_done"]))
            est = _estimate_ue(rows_ue, M, W, want_corr)
            for k, v in est.items():
                acc[k][rep, n] = v
            if want_corr and math.isfinite(rates.eff_edge):
                counts = _edge_occupancy_own0(rows, rows_ue, M, W)
                h = np.bincount(counts)
                if len(h) > len(hists[n]):
                    h, hists[n] = hists[n], h.astype(np.int64)
                hists[n][:len(h)] += h
        if params.keep_records:
            kept.append(rows)
        del rows

    cap = params.queue_cap
    if max(max_edge, max_tx, *max_local, 0) > cap:
        diverged = True
        warnings.warn(
            f"a queue exceeded {cap} packets; the system is likely unstable "
            "and the estimates will grow with run length", DivergenceWarning,
            stacklevel=2)

    per_ue = {k: tuple(_aggregate(acc[k][:, n]) for n in range(N))
              for k in scalar_keys}
    system_aoi = _aggregate(acc["aoi"].mean(axis=1))
    system_paoi = _aggregate(acc["paoi"].mean(axis=1))

    correlations = None
    if want_corr:
        correlations = CorrelationEstimates(
            yw_edge=per_ue["yw_edge"],
            yw_tx=per_ue["yw_tx"],
            yw_local=per_ue["yw_local"],
            phi_bjd=per_ue["phi_bjd"],
            phi_ljd=per_ue["phi_ljd"],
            phi_bju=per_ue["phi_bju"],
            phi_lju=per_ue["phi_lju"],
            cov_y_wedge=per_ue["cov_y_wedge"],
            cov_y_wtx=per_ue["cov_y_wtx"],
            cov_y_wlocal=per_ue["cov_y_wlocal"],
            edge_others_hist_own0=tuple(tuple(int(c) for c in h) for h in hists),
            edge_own0_samples=tuple(int(h.sum()) for h in hists),
        )

    diag = Diagnostics(
        max_edge_queue=max_edge,
        max_tx_queue=max_tx,
        max_local_queues=tuple(max_local),
        sim_time=sim_time,
        delivered=(M,) * N,
        diverged=diverged,
        near_unstable=check_stability(cfg).near_unstable,
        replications=R,
    )
    return SimResult(
        per_ue_aoi=per_ue["aoi"],
        per_ue_paoi=per_ue["paoi"],
        system_aoi=system_aoi,
        system_paoi=system_paoi,
        correlations=correlations,
        diagnostics=diag,
        records=tuple(kept) if params.keep_records else None,
    )


# ---------------------------------------------------------------------------
# Path estimators over one UE's records (public, also usable on exported
# traces). records must be sorted by generation time.
# ---------------------------------------------------------------------------


def _check_one_ue(records: np.ndarray) -> None:
    if len(records) and len(np.unique(records["ue"])) > 1:
        raise ValueError("path estimators take the records of a single UE")
    ld = records["local_done"]
    if len(ld) > 1 and np.any(np.diff(ld) < 0):
        raise AssertionError(
            "deliveries out of generation order; FCFS stages cannot do that, "
            "this indicates an engine bug")


def aoi_from_path(records: np.ndarray):
    """Time-average AoI of one UE's delivery path.

    Returns (estimate, per-packet contribution array). Each generation gap
    Y_j together with the system time T_j contributes Y_j^2/2 + Y_j T_j of
    integrated age; the estimate is total contribution over total time.
    Needs >= 2 records (the first only opens the first gap).
    """
    if len(records) < 2:
        raise InsufficientData("need at least 2 delivered packets")
    _check_one_ue(records)
    gen = records["gen"]
    y = np.diff(gen)
    t_sys = records["local_done"][1:] - gen[1:]
    if np.any(y < 0):
        raise ValueError("records must be sorted by generation time")
    q = 0.5 * y * y + y * t_sys
    total_y = float(np.sum(y))
    if total_y == 0.0:
        raise InsufficientData("all generation times coincide")
    return float(np.sum(q) / total_y), q


def paoi_from_path(records: np.ndarray, anchor_time: float = 0.0) -> float:
    """Mean peak AoI of one UE's delivery path.

    The age peaks just before each delivery at Y_j + T_j. The gap of the
    first record is measured from anchor_time (default: the time origin,
    treating the path start as the previous update).
    """
    if len(records) < 1:
        raise InsufficientData("need at least 1 delivered packet")
    _check_one_ue(records)
    gen = records["gen"]
    prev = np.concatenate(([anchor_time], gen[:-1]))
    y = gen - prev
    if np.any(y < 0):
        raise ValueError("records must be sorted by generation time "
                         "and start after anchor_time")
    t_sys = records["local_done"] - gen
    return float(np.mean(y + t_sys))


def estimate_correlation_terms(records: np.ndarray) -> CorrelationTerms:
    """Sample means of Y_j W_j per stage, with standard errors.

    These are the Monte-Carlo oracles for the closed-form correlation
    terms. Needs >= 100 retained packets for the errors to mean anything.
    """
    if len(records) < 100:
        raise InsufficientData(
            f"need >= 100 retained packets, got {len(records)}")
    _check_one_ue(records)
    gen = records["gen"]
    y = np.diff(gen)
    e, e_se = _mean_se(y * records["wait_edge"][1:])
    d, d_se = _mean_se(y * records["wait_tx"][1:])
    u, u_se = _mean_se(y * records["wait_local"][1:])
    return CorrelationTerms(e, e_se, d, d_se, u, u_se)
