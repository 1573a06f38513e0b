"""Closed-form average AoI and peak AoI for the three computing schemes.

The average peak AoI of a UE decomposes into the mean inter-generation gap
plus the mean per-stage system times, which for stable M/M/1 stages gives
the short formula 1/lambda_n + 1/(mu_B'-lambda) + 1/(mu_D-lambda)
+ 1/(mu_n'-lambda_n). The average AoI additionally carries correlation terms
lambda_n * E[Y_j W] between the inter-generation gap Y_j and the per-stage
waiting times W; those expectations split, per stage, into two
contributions conditioned on whether the packet catches up with its
predecessor (phi_bjd / phi_bju) or finds it already gone (phi_ljd /
phi_lju). The split terms are rational functions of the rates with three
removable singularities, handled by a two-sided perturbation policy.

All functions are pure; heterogeneous per-UE rates are supported wherever
the underlying formula is stated per UE.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    EDGE,
    LOCAL,
    PARTIAL,
    DerivedRates,
    NotHomogeneous,
    Scheme,
    SingularityUnresolved,
    SystemConfig,
    UnstableConfig,
    check_stability,
    derive_rates,
    is_homogeneous,
    normalize_scheme,
    require_stable,
)

# Two-sided perturbation policy for the removable singularities in the
# correlation terms: trigger threshold (relative), perturbation size
# (relative), and the max allowed disagreement between the two sides.
SINGULARITY_TRIGGER = 1e-9
SINGULARITY_EPS = 1e-6
SINGULARITY_TOL = 1e-3


@dataclass(frozen=True)
class AoiMetrics:
    """Per-UE and system-averaged AoI / peak AoI (time units)."""

    per_ue_aoi: tuple[float, ...]
    per_ue_paoi: tuple[float, ...]
    system_aoi: float
    system_paoi: float


@dataclass(frozen=True)
class PhiTerms:
    """The four correlation-term contributions (time^2 units).

    phi_bjd + phi_ljd = E[Y_j W_tx]; phi_bju + phi_lju = E[Y_j W_local].
    For the edge scheme the local stage is a pass-through, so phi_bju and
    phi_lju are zero.
    """

    phi_bjd: float
    phi_ljd: float
    phi_bju: float
    phi_lju: float

    def total(self) -> float:
        return self.phi_bjd + self.phi_ljd + self.phi_bju + self.phi_lju


@dataclass(frozen=True)
class AoiBounds:
    """Closed-form bracket on the system average AoI (homogeneous UEs).

    upper is the system average peak AoI (including the 1/lambda_h term);
    lower = upper - gap exactly; gap_ratio = gap / upper.
    upper_excl_gen is a diagnostic variant of the upper bound without the
    1/lambda_h term (the two conventions differ in the literature; the
    inclusive one is what the waiting-time correlation argument proves).
    """

    lower: float
    upper: float
    gap: float
    gap_ratio: float
    upper_excl_gen: float


@dataclass(frozen=True)
class POptResult:
    """Closed-form peak-AoI-minimizing offloading ratio.

    branch: which case fired ("local" for p=0, "edge" for p=1, "interior").
    condition: human-readable inequality that selected the branch.
    stable: whether the system is stable at the returned p.
    """

    p: float
    branch: str
    condition: str
    stable: bool


# ---------------------------------------------------------------------------
# Correlation terms.
#
# Rate symbols used throughout the raw formulas:
#   lam - total generation rate, ln - tagged UE's generation rate,
#   lo  - combined rate of the other UEs (lam - ln),
#   a   - effective edge computation rate, d - transmission rate,
#   u   - tagged UE's effective local computation rate.
# ---------------------------------------------------------------------------


def _phi_bjd_raw(ln, lo, lam, a, d):
    # Transmission-queue contribution when the packet arrives there before
    # its predecessor has left for the local queue: residual-delay part
    # (t1, t2) plus the backlog generated during the gap (t3, t4).
    t1 = ln * (a + d - lam) / (a * (d - lam) * (a + d - lam - lo) ** 2)
    t2 = (ln * (a - lam) * (a - lo)
          * (1.0 / (d - lo) ** 2 - 1.0 / (a - lo) ** 2)
          / ((a - d) * (d - lam) * (a + d - lam - lo)))
    t3 = (ln * lo * (a - lam) * (a - lo)
          * (2.0 / (d - lo) ** 3 - 2.0 / (a - lo) ** 3)
          / (d * (a - d) * (a + d - lam - lo)))
    t4 = 2.0 * ln * lo * (a + d - lam) / (a * d * (a + d - lam - lo) ** 3)
    return t1 + t2 + t3 + t4


def _phi_ljd_raw(ln, lo, lam, a, d):
    # Transmission-queue contribution when the predecessor is already gone:
    # only the stationary backlog left by the other UEs matters.
    inner = (1.0 / ln
             - ln * (a + d - lam) / (a * (a + d - lam - lo) ** 2)
             - ln * (a - lam)
             * (1.0 / (a - lo) - (a - lo) / (d - lo) ** 2)
             / ((d - a) * (a + d - lam - lo)))
    return lo / (d * (d - lo)) * inner


def _phi_bju_raw(ln, lo, lam, a, d, u):
    # Local-queue contribution when the packet reaches the transmission
    # queue before its predecessor reaches the local queue.
    t1 = (ln * (a - lam) * (a - lo) * (d + u - ln)
          / (d * (d - lam + u) ** 2 * (u - ln) * (a - d) * (a + d - lam - lo)))
    t2 = (ln * d * (a - lam) * (a - lo) * (d + u - ln)
          / ((u - ln) * (a - d) * (a + d - lam - lo)
             * ((d + u) * a - lam * d + (d - a) * ln) ** 2))
    big = ((a + d - lam) * (d + u - ln) * (a - lo)
           + lo * (d * d + (2.0 * u - 2.0 * ln - lam) * d + (a - 2.0 * lam) * (u - ln)))
    t3 = ln * a * d * (d + u - ln) * (a + d - lam) / ((u - ln) * big ** 2)
    return t1 - t2 + t3


def _phi_lju_raw(ln, lo, lam, a, d, u):
    # Local-queue contribution when the predecessor already reached the
    # local queue. The third term shares the (d + u - lam) factor of the
    # first two in its denominator; dropping it breaks dimensional
    # consistency and the local-scheme limit.
    t1 = (ln * (d - lam) * (d - lo)
          / (a * (u - ln) * (d - u - lo) * (d + u - lam))
          * ((a + u - ln) / (a + u - lam) ** 2
             - (a + d - lam) / (a + d - lam - lo) ** 2))
    t2 = (ln * (a - lam) * (a - lo) * (d - lam) * (d - lo)
          * (1.0 / u ** 2 - 1.0 / (a - lo) ** 2)
          / ((u - ln) * (d - u - lo) * (d + u - lam)
             * (a + u - lam) * (a - u - lo)))
    t3 = (ln * (a - lam) * (a - lo) * (d - lam) * (d - lo)
          * (1.0 / (d - lo) ** 2 - 1.0 / (a - lo) ** 2)
          / ((u - ln) * (d - u - lo) * (d + u - lam)
             * (a - d) * (a + d - lam - lo)))
    return t1 + t2 - t3


def _near_singular(a: float, d: float, u: float, lo: float) -> bool:
    """True if any of the three removable denominators is relatively tiny.

    The critical differences are a - d, a - (u + lo), d - (u + lo); u may be
    +inf (edge scheme), in which case none of the u-differences can vanish.
    """
    if abs(a - d) < SINGULARITY_TRIGGER * max(a, d):
        return True
    if math.isfinite(u):
        if abs(a - u - lo) < SINGULARITY_TRIGGER * max(a, u + lo):
            return True
        if abs(d - u - lo) < SINGULARITY_TRIGGER * max(d, u + lo):
            return True
    return False


def _phi_eval(ln, lo, lam, a, d, u, with_local: bool):
    """Evaluate the (up to) four phi terms, applying the singularity policy.

    with_local=False evaluates only the transmission-queue pair (edge
    scheme / u = +inf), where the local stage is a pass-through.
    """

    def raw(a_, d_, u_):
        bjd = _phi_bjd_raw(ln, lo, lam, a_, d_)
        ljd = _phi_ljd_raw(ln, lo, lam, a_, d_)
        if with_local:
            bju = _phi_bju_raw(ln, lo, lam, a_, d_, u_)
            lju = _phi_lju_raw(ln, lo, lam, a_, d_, u_)
        else:
            bju = 0.0
            lju = 0.0
        return (bjd, ljd, bju, lju)

    if not _near_singular(a, d, u, lo):
        return PhiTerms(*raw(a, d, u))

    # Perturb the edge and transmission rates in opposite directions; this
    # strictly moves all three critical differences. If a perturbed point is
    # itself near-singular (double-degenerate input), escalate epsilon.
    eps = SINGULARITY_EPS
    for _ in range(3):
        hi = (a * (1.0 + eps), d * (1.0 - eps))
        lo_ = (a * (1.0 - eps), d * (1.0 + eps))
        if not _near_singular(hi[0], hi[1], u, lo) and not _near_singular(lo_[0], lo_[1], u, lo):
            break
        eps *= 1.618
    else:
        raise SingularityUnresolved(
            "could not step away from the removable singularity "
            f"(a = {a:g}, d = {d:g}, u = {u:g}, others = {lo:g})"
        )

    plus = raw(hi[0], hi[1], u)
    minus = raw(lo_[0], lo_[1], u)
    names = ("phi_bjd", "phi_ljd", "phi_bju", "phi_lju")
    out = []
    for name, vp, vm in zip(names, plus, minus):
        scale = max(abs(vp), abs(vm), 1e-30)
        if abs(vp - vm) > SINGULARITY_TOL * scale:
            raise SingularityUnresolved(
                f"{name}: two-sided evaluations disagree "
                f"({vp:.12g} vs {vm:.12g}) near the removable singularity"
            )
        out.append(0.5 * (vp + vm))
    return PhiTerms(*out)


def phi_terms_partial(rates: DerivedRates, ue_index: int) -> PhiTerms:
    """Correlation-term contributions for the partial scheme (0 < p < 1)."""
    a = rates.eff_edge
    u = rates.eff_local[ue_index]
    if not (math.isfinite(a) and math.isfinite(u)):
        raise ValueError("partial-scheme correlation terms need 0 < p < 1")
    return _phi_eval(rates.gen_rate(ue_index), rates.others_gen[ue_index],
                     rates.total_gen, a, rates.tx_rate, u, with_local=True)


def phi_terms_edge(rates: DerivedRates, ue_index: int) -> PhiTerms:
    """Correlation-term contributions for the edge scheme (local pass-through)."""
    a = rates.eff_edge
    if not math.isfinite(a):
        raise ValueError("edge-scheme correlation terms need a finite edge rate")
    return _phi_eval(rates.gen_rate(ue_index), rates.others_gen[ue_index],
                     rates.total_gen, a, rates.tx_rate, math.inf,
                     with_local=False)


# ---------------------------------------------------------------------------
# Per-UE closed forms.
# ---------------------------------------------------------------------------


def _require_scheme(cfg: SystemConfig, kind: str, op: str) -> None:
    if cfg.scheme.kind != kind:
        raise ValueError(f"{op} applies to the {kind} scheme, got {cfg.scheme.kind}")


def avg_paoi_partial(cfg: SystemConfig, ue_index: int) -> float:
    """Average peak AoI of one UE under partial offloading."""
    _require_scheme(cfg, PARTIAL, "avg_paoi_partial")
    require_stable(cfg)
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lam = rates.total_gen
    return (1.0 / ln
            + 1.0 / (rates.eff_edge - lam)
            + 1.0 / (cfg.tx_rate - lam)
            + 1.0 / (rates.eff_local[ue_index] - ln))


def avg_aoi_partial(cfg: SystemConfig, ue_index: int) -> float:
    """Average AoI of one UE under partial offloading (0 < p < 1)."""
    _require_scheme(cfg, PARTIAL, "avg_aoi_partial")
    if not 0.0 < cfg.scheme.p < 1.0:
        raise ValueError("avg_aoi_partial needs 0 < p < 1; "
                         "boundary ratios dispatch to the local/edge forms")
    require_stable(cfg)
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lo = rates.others_gen[ue_index]
    lam = rates.total_gen
    a = rates.eff_edge
    d = cfg.tx_rate
    u = rates.eff_local[ue_index]
    phi = phi_terms_partial(rates, ue_index)
    return (1.0 / ln + 1.0 / a + 1.0 / d + 1.0 / u
            + lo / (a * (a - lo))
            + ln ** 2 * lo / (a * (a - lo) ** 3)
            + ln ** 2 / ((a - lam) * (a - lo) ** 2)
            + ln * phi.total())


def avg_paoi_local(cfg: SystemConfig, ue_index: int) -> float:
    """Average peak AoI of one UE with all computation done locally."""
    _require_scheme(cfg, LOCAL, "avg_paoi_local")
    require_stable(cfg)
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    return (1.0 / ln
            + 1.0 / (cfg.tx_rate - rates.total_gen)
            + 1.0 / (cfg.local_rates[ue_index] - ln))


def avg_aoi_local(cfg: SystemConfig, ue_index: int) -> float:
    """Average AoI of one UE with all computation done locally."""
    _require_scheme(cfg, LOCAL, "avg_aoi_local")
    require_stable(cfg)
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lo = rates.others_gen[ue_index]
    lam = rates.total_gen
    d = cfg.tx_rate
    u = cfg.local_rates[ue_index]
    return (1.0 / ln + 1.0 / d + 1.0 / u
            + lo / (d * (d - lo))
            + ln ** 2 * lo / (d * (d - lo) ** 3)
            + ln ** 2 / ((d - lam) * (d - lo) ** 2)
            + ln ** 2 * (d + u - ln) / (d * (u - ln) * (d + u - lam) ** 2)
            + ln ** 2 * (d - lam) * (d + u - lo)
            / (u ** 2 * (d - lo) * (u - ln) * (d + u - lam)))


def avg_paoi_edge(cfg: SystemConfig, ue_index: int) -> float:
    """Average peak AoI of one UE with all computation at the edge server."""
    _require_scheme(cfg, EDGE, "avg_paoi_edge")
    require_stable(cfg)
    lam = derive_rates(cfg).total_gen
    return (1.0 / cfg.gen_rates[ue_index]
            + 1.0 / (cfg.edge_rate - lam)
            + 1.0 / (cfg.tx_rate - lam))


def avg_aoi_edge(cfg: SystemConfig, ue_index: int) -> float:
    """Average AoI of one UE with all computation at the edge server."""
    _require_scheme(cfg, EDGE, "avg_aoi_edge")
    require_stable(cfg)
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lo = rates.others_gen[ue_index]
    lam = rates.total_gen
    a = cfg.edge_rate
    d = cfg.tx_rate
    phi = phi_terms_edge(rates, ue_index)
    return (1.0 / ln + 1.0 / a + 1.0 / d
            + lo / (a * (a - lo))
            + ln ** 2 * lo / (a * (a - lo) ** 3)
            + ln ** 2 / ((a - lam) * (a - lo) ** 2)
            + ln * (phi.phi_bjd + phi.phi_ljd))


def system_metrics(cfg: SystemConfig) -> AoiMetrics:
    """Per-UE and system-averaged AoI / peak AoI for any scheme."""
    cfg = normalize_scheme(cfg)
    require_stable(cfg)
    kind = cfg.scheme.kind
    if kind == LOCAL:
        aoi_fn, paoi_fn = avg_aoi_local, avg_paoi_local
    elif kind == EDGE:
        aoi_fn, paoi_fn = avg_aoi_edge, avg_paoi_edge
    else:
        aoi_fn, paoi_fn = avg_aoi_partial, avg_paoi_partial
    aoi = tuple(aoi_fn(cfg, n) for n in range(cfg.num_ues))
    paoi = tuple(paoi_fn(cfg, n) for n in range(cfg.num_ues))
    return AoiMetrics(
        per_ue_aoi=aoi,
        per_ue_paoi=paoi,
        system_aoi=math.fsum(aoi) / cfg.num_ues,
        system_paoi=math.fsum(paoi) / cfg.num_ues,
    )


# ---------------------------------------------------------------------------
# Exact correlation expectations E[Y_j W] per stage. These are the targets
# the simulator's estimators are validated against; the transmission- and
# local-stage ones are just the phi sums, the edge-stage one has its own
# compact form (exact, not a bound).
# ---------------------------------------------------------------------------


def e_yw_edge(cfg: SystemConfig, ue_index: int) -> float:
    """E[Y_j W_edge] for one UE (0 for the local scheme's pass-through)."""
    cfg = normalize_scheme(cfg)
    if cfg.scheme.kind == LOCAL:
        return 0.0
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lo = rates.others_gen[ue_index]
    lam = rates.total_gen
    a = rates.eff_edge
    return (lam / (ln * a * (a - lam))
            + ln * lo / (a * (a - lo) ** 3)
            - 1.0 / (a - lo) ** 2)


def e_yw_tx(cfg: SystemConfig, ue_index: int) -> float:
    """E[Y_j W_tx] for one UE, any scheme."""
    cfg = normalize_scheme(cfg)
    rates = derive_rates(cfg)
    if cfg.scheme.kind == LOCAL:
        # The transmission queue is the first stage; same structure as the
        # edge-stage expectation with the transmission rate in its place.
        ln = cfg.gen_rates[ue_index]
        lo = rates.others_gen[ue_index]
        lam = rates.total_gen
        d = cfg.tx_rate
        return (lam / (ln * d * (d - lam))
                + ln * lo / (d * (d - lo) ** 3)
                - 1.0 / (d - lo) ** 2)
    if cfg.scheme.kind == EDGE:
        phi = phi_terms_edge(rates, ue_index)
    else:
        phi = phi_terms_partial(rates, ue_index)
    return phi.phi_bjd + phi.phi_ljd


def e_yw_local(cfg: SystemConfig, ue_index: int) -> float:
    """E[Y_j W_local] for one UE (0 for the edge scheme's pass-through)."""
    cfg = normalize_scheme(cfg)
    if cfg.scheme.kind == EDGE:
        return 0.0
    rates = derive_rates(cfg)
    if cfg.scheme.kind == LOCAL:
        ln = cfg.gen_rates[ue_index]
        lo = rates.others_gen[ue_index]
        lam = rates.total_gen
        d = cfg.tx_rate
        u = cfg.local_rates[ue_index]
        return (ln * (d + u - ln) / (d * (u - ln) * (d + u - lam) ** 2)
                + ln * (d - lam) * (d + u - lo)
                / (u ** 2 * (d - lo) * (u - ln) * (d + u - lam)))
    phi = phi_terms_partial(rates, ue_index)
    return phi.phi_bju + phi.phi_lju


def e_yw_lower_bounds(cfg: SystemConfig, ue_index: int) -> tuple[float, float, float]:
    """Component lower bounds on (E[Y W_edge], E[Y W_tx], E[Y W_local]).

    The edge-stage expectation is exact; the other two are bounded from
    below by letting the upstream stages become instantaneous.
    """
    rates = derive_rates(cfg)
    ln = cfg.gen_rates[ue_index]
    lo = rates.others_gen[ue_index]
    lam = rates.total_gen
    d = cfg.tx_rate
    u = rates.eff_local[ue_index]
    b_edge = e_yw_edge(cfg, ue_index)
    b_tx = (lam / (ln * d * (d - lam))
            + ln * lo / (d * (d - lo) ** 3)
            - 1.0 / (d - lo) ** 2)
    b_local = 0.0 if math.isinf(u) else 1.0 / (u * (u - ln)) - 1.0 / u ** 2
    return (b_edge, b_tx, b_local)


# ---------------------------------------------------------------------------
# Bounds and the closed-form optimal offloading ratio (homogeneous UEs).
# ---------------------------------------------------------------------------


def aoi_bounds(cfg: SystemConfig) -> AoiBounds:
    """Bracket the system average AoI between PAoI and PAoI minus a gap."""
    if not is_homogeneous(cfg):
        raise NotHomogeneous("AoI bounds are defined for homogeneous UEs only")
    require_stable(cfg)
    rates = derive_rates(cfg)
    lh = cfg.gen_rates[0]
    lo = rates.others_gen[0]
    lam = rates.total_gen
    a = rates.eff_edge
    d = cfg.tx_rate
    u = rates.eff_local[0]
    # Effective-rate limits make the corresponding terms vanish at p = 0 / 1.
    omega = 1.0 / lh + 1.0 / (a - lam) + 1.0 / (d - lam) + 1.0 / (u - lh)
    gap = (lh / (a - lo) ** 2
           + lh / (d - lo) ** 2
           + lh / u ** 2
           - lh ** 2 * lo / (a * (a - lo) ** 3)
           - lh ** 2 * lo / (d * (d - lo) ** 3))
    return AoiBounds(
        lower=omega - gap,
        upper=omega,
        gap=gap,
        gap_ratio=gap / omega,
        upper_excl_gen=omega - 1.0 / lh,
    )


def p_opt_paoi(cfg: SystemConfig) -> POptResult:
    """Closed-form offloading ratio minimizing the system average peak AoI."""
    if not is_homogeneous(cfg):
        raise NotHomogeneous("the closed-form optimal ratio assumes homogeneous UEs")
    lh = cfg.gen_rates[0]
    mh = cfg.local_rates[0]
    mb = cfg.edge_rate
    lam = cfg.num_ues * lh

    if mb <= (mh - lh) ** 2 / mh:
        p, branch = 0.0, "local"
        condition = f"mu_B = {mb:g} <= (mu_h - lambda_h)^2 / mu_h = {(mh - lh) ** 2 / mh:g}"
    elif mh <= (mb - lam) ** 2 / mb:
        p, branch = 1.0, "edge"
        condition = f"mu_h = {mh:g} <= (mu_B - lambda)^2 / mu_B = {(mb - lam) ** 2 / mb:g}"
    else:
        p = (math.sqrt(mb * mh) + lh - mh) / ((1.0 + cfg.num_ues * math.sqrt(mh / mb)) * lh)
        p = min(1.0, max(0.0, p))
        branch = "interior"
        condition = "stationary point of the peak-AoI curve, clamped to [0, 1]"

    at_p = normalize_scheme(cfg.with_scheme(Scheme.partial(p)))
    return POptResult(p=p, branch=branch, condition=condition,
                      stable=check_stability(at_p).stable)
