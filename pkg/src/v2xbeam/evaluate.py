"""Selection ATRR, BCT prediction accuracy, the BCT alignment policy and sweeps.

Rate sums are accumulated as exact rationals so that identities such as
"oracle ranking gives exactly 1" or "aligning at every step gives exactly
1 - T_b/T_d" hold bit for bit.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .features import group_bct

SUBSETS = ("all", "los", "nlos")


@dataclass(frozen=True)
class MetricReport:
    metric: str
    split: str
    subset: str
    value: float
    n: int
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError(f"{self.metric} value {self.value} outside [0, 1]")


def _subset_mask(los: np.ndarray, subset: str) -> np.ndarray:
    los = np.asarray(los, dtype=bool)
    if subset == "all":
        return np.ones(len(los), dtype=bool)
    if subset == "los":
        return los
    if subset == "nlos":
        return ~los
    raise ValueError(f"unknown subset {subset!r}")


def _exact_sum(values) -> Fraction:
    total = Fraction(0)
    for v in values:
        total += Fraction(float(v))
    return total


def _ratio(num: Fraction, den: Fraction, what: str) -> float:
    if den == 0:
        raise ValueError(f"{what}: optimal-rate sum is zero")
    return float(num / den)


def achieved_top_b(rates: np.ndarray, ranked: np.ndarray, B: int) -> np.ndarray:
    """Per record, best tabulated rate among the first ``B`` ranked pairs."""
    if B < 1:
        raise ValueError("B must be >= 1")
    rates = np.asarray(rates)
    ranked = np.asarray(ranked)
    if ranked.ndim != 2 or len(ranked) != len(rates):
        raise ValueError("need one ranking row per record")
    cand = ranked[:, :B]
    if cand.size and (cand.min() < 0 or cand.max() >= rates.shape[1]):
        raise ValueError("ranking refers to a pair without a rate entry")
    return np.take_along_axis(rates, cand, axis=1).max(axis=1)


def atrr_selection(rates, optimal, ranked, B: int, los=None, subset: str = "all",
                   split: str = "test") -> MetricReport:
    """Sum of Top-B achieved rates over the sum of optimal rates."""
    rates = np.asarray(rates)
    optimal = np.asarray(optimal)
    los = np.ones(len(rates), dtype=bool) if los is None else np.asarray(los, dtype=bool)
    mask = _subset_mask(los, subset)
    if not mask.any():
        raise ValueError(f"subset {subset!r} is empty")
    ranked = np.asarray(ranked)
    achieved = achieved_top_b(rates[mask], ranked[mask], B)
    value = _ratio(_exact_sum(achieved), _exact_sum(optimal[mask]), "ATRR")
    return MetricReport("atrr_s", split, subset, value, int(mask.sum()), {"B": int(B)})


def bctpa(true_bct, predicted_groups, r=None, S: int = 1, split: str = "test") -> MetricReport:
    """Share of eligible records (``r >= S``) whose predicted group holds the true BCT."""
    true_bct = np.asarray(true_bct)
    pred = np.asarray(predicted_groups)
    eligible = np.ones(len(true_bct), dtype=bool) if r is None else np.asarray(r) >= S
    if not eligible.any():
        raise ValueError("no record is eligible for BCT prediction (every S_q < S)")
    if len(pred) != len(true_bct):
        raise ValueError("need one predicted group per record")
    hits = group_bct(true_bct[eligible]) == pred[eligible]
    return MetricReport("bctpa", split, "all", float(Fraction(int(hits.sum()), int(eligible.sum()))),
                        int(eligible.sum()))


@dataclass(frozen=True)
class ScenarioTrace:
    """Per-scenario sequences used by the policy simulation (0-based positions)."""

    rates: np.ndarray  # (S_q, n_pairs)
    labels: np.ndarray  # optimal pair per snapshot, index into the rate rows
    optimal: np.ndarray  # (S_q,)
    bct: np.ndarray  # true M per snapshot
    los: np.ndarray | None = None


def simulate_policy(trace: ScenarioTrace, predict_m: Callable[[int], int], t_b_over_t_d: float,
                    S: int = 3, aligned_beam: Callable[[int], int] | None = None):
    """Achieved and optimal rate sums (exact) over r = S..S_q for one scenario.

    At an alignment position ``i`` the beam pair becomes ``aligned_beam(i)``
    (the optimum by default) and is held for ``predict_m(i)`` intervals. The
    alignment interval itself is scaled by ``1 - T_b/T_d``.
    """
    if not 0.0 <= t_b_over_t_d < 1.0:
        raise ValueError("T_b/T_d must lie in [0, 1)")
    n = len(trace.optimal)
    charge = Fraction(1) - Fraction(t_b_over_t_d)
    achieved = Fraction(0)
    optimal = _exact_sum(trace.optimal[S - 1:])
    alignments = 0
    i = S - 1
    while i < n:
        m = int(predict_m(i))
        if m < 1:
            raise ValueError("predicted BCT must be >= 1")
        beam = trace.labels[i] if aligned_beam is None else aligned_beam(i)
        alignments += 1
        for j in range(i, min(i + m, n)):
            r = Fraction(float(trace.rates[j, beam]))
            achieved += r * charge if j == i else r
        i += m
    return achieved, optimal, alignments


def atrr_policy(traces: Sequence[ScenarioTrace], policy: Callable[[int, int], int],
                t_b_over_t_d: float, S: int = 3, split: str = "test", name: str = "atrr_p",
                params: dict | None = None) -> MetricReport:
    """Policy ATRR over scenarios; ``policy(q_pos, i)`` gives the held length M."""
    num, den, used = Fraction(0), Fraction(0), 0
    for qi, tr in enumerate(traces):
        if len(tr.optimal) < S:
            continue
        a, o, _ = simulate_policy(tr, lambda i, qi=qi: policy(qi, i), t_b_over_t_d, S)
        num += a
        den += o
        used += len(tr.optimal) - S + 1
    if used == 0:
        raise ValueError("no scenario has S or more snapshots")
    p = {"tb_over_td": float(t_b_over_t_d)}
    p.update(params or {})
    return MetricReport(name, split, "all", _ratio(num, den, "ATRR_p"), used, p)


def fixed_policy(m: int):
    return lambda q, i: m


def perfect_policy(traces: Sequence[ScenarioTrace]):
    return lambda q, i: int(traces[q].bct[i])


def robustness_sweep(base_vdf, locations, los, rates, optimal, rank_fn: Callable,
                     rebuild_vdf: Callable, sigmas: Sequence[float], seeds: Sequence[int],
                     B: int = 5, split: str = "test") -> list[MetricReport]:
    """Top-B ATRR on LOS and NLOS records with Gaussian noise on the MS location.

    ``rebuild_vdf(k, noisy_location)`` regenerates record ``k``'s VDF around a
    perturbed location; ``rank_fn(vdf, loc)`` returns rankings. ``seeds[i]``
    drives the noise for ``sigmas[i]``.
    """
    out = []
    locations = np.asarray(locations, dtype=float)
    for sigma, seed in zip(sigmas, seeds):
        if sigma < 0:
            raise ValueError("location noise must be >= 0")
        if sigma == 0:
            loc, vdf = locations, base_vdf
        else:
            rng = np.random.default_rng(seed)
            loc = locations + rng.normal(0.0, sigma, locations.shape)
            vdf = np.stack([rebuild_vdf(k, loc[k]) for k in range(len(loc))])
        ranked = rank_fn(vdf, loc)
        for subset in ("los", "nlos"):
            if not _subset_mask(los, subset).any():
                continue
            rep = atrr_selection(rates, optimal, ranked, B, los, subset, split)
            out.append(MetricReport(rep.metric, split, subset, rep.value, rep.n,
                                    {"B": int(B), "sigma_c": float(sigma)}))
    return out
