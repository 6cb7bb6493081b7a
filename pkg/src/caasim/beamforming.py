"""Beam pointing and interference-aware transmit power allocation.

The allocator runs deterministic best-response coordinate ascent on the
proportional-fair utility sum(log(rate_u + eps)): beams are visited in column
order and each picks the best level from a logarithmic power grid within its
satellite's residual budget, holding all other beams fixed. Keeping the
current level is always a candidate, so the objective never decreases.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np

from .channel import LinkParams
from .constellation import GroundPoint
from .prediction import InterferenceMatrix

try:  # numba shrinks the allocation cost by roughly an order of magnitude
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False

UTILITY_RATE_EPS = 1.0  # bps; keeps the log utility finite at zero rate
POWER_GRID_POINTS = 32
POWER_GRID_SPAN_DB = 60.0


@dataclass(frozen=True)
class BeamAssignment:
    ue_id: str
    satellite_id: str
    boresight: GroundPoint
    bandwidth_share: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.bandwidth_share <= 1.0:
            raise ValueError("bandwidth_share must be in (0, 1]")


@dataclass(frozen=True)
class PowerAllocation:
    """Per-transmitter powers in watts, aligned with matrix columns."""

    tx_ids: tuple[tuple[str, str], ...]
    powers_w: np.ndarray

    def __post_init__(self):
        if len(self.powers_w) != len(self.tx_ids):
            raise ValueError("power vector length does not match transmitter list")
        if np.any(self.powers_w < 0) or not np.all(np.isfinite(self.powers_w)):
            raise ValueError("powers must be finite and non-negative")


def point_beams(
    assignments: Sequence[tuple[str, str]], ue_positions: Mapping[str, GroundPoint]
) -> list[BeamAssignment]:
    """One full-band beam per assignment, boresight on the served UE."""
    beams = []
    for ue_id, sat_id in assignments:
        if ue_id not in ue_positions:
            raise KeyError(f"unknown UE id {ue_id!r}")
        beams.append(BeamAssignment(ue_id, sat_id, ue_positions[ue_id]))
    return beams


def _power_grid(budget: float, points: int, span_db: float) -> np.ndarray:
    lo = budget * 10.0 ** (-span_db / 10.0)
    return np.concatenate([[0.0], np.geomspace(lo, budget, points)])


def _candidate_utilities_numpy(
    cand, p_j, col_j, interference, num1, num2, uj, own_other_uj, noise, bw, cap, eps
):
    """Global utility for each candidate power of one beam.

    ``interference``/``num1``/``num2`` describe the current operating point;
    for the beam's own UE (row ``uj``) the beam is a serving link, not an
    interferer, so its numerator varies with the candidate instead.
    """
    inter = interference[None, :] + np.outer(cand - p_j, col_j)
    inter[:, uj] = interference[uj]
    denom = noise + inter
    n1 = np.tile(num1, (len(cand), 1))
    n2 = np.tile(num2, (len(cand), 1))
    n1[:, uj] = cand * col_j[uj]
    n2[:, uj] = own_other_uj
    rate = bw * (
        np.minimum(np.log2(1.0 + n1 / denom), cap)
        + np.minimum(np.log2(1.0 + n2 / denom), cap)
    )
    return np.log(rate + eps).sum(axis=1)


if _HAVE_NUMBA:

    @njit(cache=True)
    def _utility_of_state(num1, num2, interference, noise, bw, cap, eps):  # pragma: no cover
        inv_ln2 = 1.4426950408889634
        total = 0.0
        for u in range(num1.shape[0]):
            denom = noise + interference[u]
            rate = 0.0
            se = math.log1p(num1[u] / denom) * inv_ln2
            rate += bw * (se if se < cap else cap)
            se = math.log1p(num2[u] / denom) * inv_ln2
            rate += bw * (se if se < cap else cap)
            total += math.log(rate + eps)
        return total

    @njit(cache=True)
    def _candidate_utilities_grid(
        powers, p_j, col, interference, num1, num2, uj, own_other, grid, residual,
        noise, bw, cap, eps,
    ):  # pragma: no cover - jitted
        """Utility of every candidate level for one beam (index 0 = keep).

        One log per UE-link plus one per candidate: the per-UE factors
        (rate + eps) accumulate as a renormalised product.
        """
        inv_ln2 = 1.4426950408889634
        ln2 = 0.6931471805599453
        x_cap = 2.0**cap - 1.0
        n_ue = interference.shape[0]
        n_cand = grid.shape[0] + 1
        out = np.full(n_cand, -1e300)
        for g in range(n_cand):
            p = p_j if g == 0 else grid[g - 1]
            if g > 0 and p > residual * (1.0 + 1e-12):
                continue
            delta = p - p_j
            prod = 1.0
            exp_acc = 0
            for u in range(n_ue):
                if u == uj:
                    denom = noise + interference[u]
                    a = p * col[u]
                    b = own_other
                else:
                    denom = noise + interference[u] + delta * col[u]
                    a = num1[u]
                    b = num2[u]
                x = a / denom
                rate = bw * (cap if x >= x_cap else math.log1p(x) * inv_ln2)
                if b > 0.0:
                    x = b / denom
                    rate += bw * (cap if x >= x_cap else math.log1p(x) * inv_ln2)
                prod *= rate + eps
                if prod > 1e280:
                    m, e = math.frexp(prod)
                    prod = m
                    exp_acc += e
            out[g] = math.log(prod) + exp_acc * ln2
        return out

    @njit(cache=True)
    def _best_response_sweeps(
        coeff, coeff_t, powers, sat_idx, budgets, grids, target_row, link1, link2,
        noise, bw, cap, eps, rel_tol, max_sweeps,
    ):  # pragma: no cover - jitted twin of the pure-python sweep loop
        n_beam = powers.shape[0]
        n_ue = coeff.shape[0]
        sweep_powers = np.empty((max_sweeps, n_beam))
        sweep_utils = np.empty(max_sweeps)

        num1 = np.zeros(n_ue)
        num2 = np.zeros(n_ue)
        for u in range(n_ue):
            if link1[u] >= 0:
                num1[u] = powers[link1[u]] * coeff[u, link1[u]]
            if link2[u] >= 0:
                num2[u] = powers[link2[u]] * coeff[u, link2[u]]
        interference = np.zeros(n_ue)
        for u in range(n_ue):
            acc = 0.0
            for b in range(n_beam):
                acc += coeff[u, b] * powers[b]
            interference[u] = acc - num1[u] - num2[u]

        utility = _utility_of_state(num1, num2, interference, noise, bw, cap, eps)
        n_sweeps = 0
        for sweep in range(max_sweeps):
            for j in range(n_beam):
                s = sat_idx[j]
                residual = budgets[s]
                for b2 in range(n_beam):
                    if sat_idx[b2] == s and b2 != j:
                        residual -= powers[b2]
                uj = target_row[j]
                own_other = num2[uj] if link1[uj] == j else num1[uj]
                col = coeff_t[j]

                utils = _candidate_utilities_grid(
                    powers, powers[j], col, interference, num1, num2, uj, own_other,
                    grids[s], residual, noise, bw, cap, eps,
                )
                best = 0
                best_util = utils[0]
                for g in range(1, utils.shape[0]):
                    if utils[g] > best_util:
                        best_util = utils[g]
                        best = g

                if best != 0:
                    best_p = grids[s, best - 1]
                    delta = best_p - powers[j]
                    for u in range(n_ue):
                        if u != uj:
                            interference[u] += delta * col[u]
                    powers[j] = best_p
                    if link1[uj] == j:
                        num1[uj] = best_p * col[uj]
                    else:
                        num2[uj] = best_p * col[uj]

            new_utility = _utility_of_state(num1, num2, interference, noise, bw, cap, eps)
            sweep_powers[sweep] = powers
            sweep_utils[sweep] = new_utility
            n_sweeps = sweep + 1
            improved = new_utility - utility
            utility = new_utility
            if improved < rel_tol * max(abs(utility), 1.0):
                break
        return powers, sweep_powers, sweep_utils, n_sweeps


def allocate_power(
    m: InterferenceMatrix,
    budgets: Mapping[str, float],
    demands: Mapping[str, float] | None,
    params: LinkParams,
    *,
    grid_points: int = POWER_GRID_POINTS,
    grid_span_db: float = POWER_GRID_SPAN_DB,
    rel_tol: float = 1e-6,
    max_sweeps: int = 100,
    on_sweep: Callable[[int, np.ndarray, float], None] | None = None,
) -> PowerAllocation:
    """Best-response power allocation under per-satellite budgets.

    Starts from an equal split of each satellite's budget over its beams and
    returns an allocation whose utility is at least the equal-split utility.
    ``demands`` is carried for scheduler-interface symmetry and does not
    enter the utility. ``on_sweep(sweep_index, powers, utility)`` runs after
    every sweep so callers can audit budget feasibility and monotonicity.
    """
    del demands
    n_beam = len(m.tx_ids)
    if n_beam == 0:
        return PowerAllocation((), np.zeros(0))
    for sat, b in budgets.items():
        if b <= 0:
            raise ValueError(f"budget for {sat} must be positive")

    sat_of = [sat for sat, _ in m.tx_ids]
    beams_per_sat: dict[str, list[int]] = {}
    for j, sat in enumerate(sat_of):
        beams_per_sat.setdefault(sat, []).append(j)

    powers = np.zeros(n_beam)
    for sat, cols in beams_per_sat.items():
        powers[cols] = budgets[sat] / len(cols)

    grids = {sat: _power_grid(budgets[sat], grid_points, grid_span_db) for sat in beams_per_sat}
    coeff = np.ascontiguousarray(m.coefficients)
    coeff_t = np.ascontiguousarray(coeff.T)  # contiguous columns for the kernel
    noise = params.noise_power_w
    bw = params.bandwidth_hz
    cap = params.spectral_efficiency_cap
    n_ue = len(m.ue_ids)
    row = {u: i for i, u in enumerate(m.ue_ids)}
    target_row = np.array([row[t] for t in m.tx_targets])

    link1 = np.full(n_ue, -1)
    link2 = np.full(n_ue, -1)
    for j, u in enumerate(target_row):
        if link1[u] < 0:
            link1[u] = j
        elif link2[u] < 0:
            link2[u] = j
        else:
            raise ValueError(f"more than two serving beams for UE {m.ue_ids[u]!r}")

    def operating_point(p: np.ndarray):
        num1 = np.where(link1 >= 0, p[link1] * coeff[np.arange(n_ue), link1], 0.0)
        num2 = np.where(link2 >= 0, p[link2] * coeff[np.arange(n_ue), link2], 0.0)
        interference = coeff @ p - num1 - num2
        return num1, num2, interference

    def utility_of(p: np.ndarray) -> float:
        num1, num2, interference = operating_point(p)
        denom = noise + interference
        rate = bw * (
            np.minimum(np.log2(1.0 + num1 / denom), cap)
            + np.minimum(np.log2(1.0 + num2 / denom), cap)
        )
        return float(np.log(rate + UTILITY_RATE_EPS).sum())

    if _HAVE_NUMBA:
        sat_names = sorted(beams_per_sat)
        sat_pos = {s: i for i, s in enumerate(sat_names)}
        sat_idx = np.array([sat_pos[s] for s in sat_of], dtype=np.int64)
        budgets_arr = np.array([budgets[s] for s in sat_names])
        grids_arr = np.stack([grids[s] for s in sat_names])
        powers, sweep_powers, sweep_utils, n_sweeps = _best_response_sweeps(
            coeff, coeff_t, powers, sat_idx, budgets_arr, grids_arr, target_row,
            link1, link2, noise, bw, cap, UTILITY_RATE_EPS, rel_tol, max_sweeps,
        )
        if on_sweep is not None:
            for i in range(n_sweeps):
                on_sweep(i, sweep_powers[i].copy(), float(sweep_utils[i]))
        return PowerAllocation(m.tx_ids, powers)

    utility = utility_of(powers)
    for sweep in range(max_sweeps):
        num1, num2, interference = operating_point(powers)
        for j in range(n_beam):
            sat = sat_of[j]
            residual = budgets[sat] - (powers[beams_per_sat[sat]].sum() - powers[j])
            grid = grids[sat]
            cand = np.concatenate([[powers[j]], grid[grid <= residual * (1 + 1e-12)]])
            uj = int(target_row[j])
            col_j = coeff_t[j]
            own_other_uj = float(num2[uj]) if link1[uj] == j else float(num1[uj])
            utils = _candidate_utilities_numpy(
                cand, powers[j], col_j, interference, num1, num2, uj, own_other_uj,
                noise, bw, cap, UTILITY_RATE_EPS,
            )
            best = int(np.argmax(utils))
            if best != 0:
                delta = cand[best] - powers[j]
                interference += delta * col_j
                interference[uj] -= delta * col_j[uj]
                powers[j] = cand[best]
                if link1[uj] == j:
                    num1[uj] = powers[j] * col_j[uj]
                else:
                    num2[uj] = powers[j] * col_j[uj]

        new_utility = utility_of(powers)
        if on_sweep is not None:
            on_sweep(sweep, powers.copy(), new_utility)
        improved = new_utility - utility
        utility = new_utility
        if improved < rel_tol * max(abs(utility), 1.0):
            break

    return PowerAllocation(m.tx_ids, powers)


def evaluate_links(
    alloc: PowerAllocation,
    m: InterferenceMatrix,
    params: LinkParams,
    extra_interference_w: np.ndarray | None = None,
) -> list[tuple[float, float]]:
    """Per-beam (sinr_db, rate_bps) under an allocation.

    A UE's own serving beams never appear in its interference term; every
    other transmitter does. ``extra_interference_w`` adds a fixed per-UE
    received interference floor (e.g. background beams of a conventional
    payload).
    """
    if alloc.tx_ids != m.tx_ids:
        raise ValueError("allocation transmitters do not match matrix columns")
    p = alloc.powers_w
    coeff = m.coefficients
    row = {u: i for i, u in enumerate(m.ue_ids)}
    rx = coeff * p[None, :]
    total = rx.sum(axis=1)
    own = np.zeros(len(m.ue_ids))
    for b, target in enumerate(m.tx_targets):
        own[row[target]] += rx[row[target], b]
    noise = params.noise_power_w
    extra = extra_interference_w if extra_interference_w is not None else np.zeros(len(m.ue_ids))

    out = []
    for b, target in enumerate(m.tx_targets):
        u = row[target]
        signal = rx[u, b]
        interference = total[u] - own[u] + extra[u]
        gamma = signal / (noise + interference)
        sinr_db = 10.0 * math.log10(gamma) if gamma > 0 else -math.inf
        rate = params.bandwidth_hz * min(math.log2(1.0 + gamma), params.spectral_efficiency_cap)
        out.append((sinr_db, rate))
    return out


def evaluate_rates(
    alloc: PowerAllocation,
    m: InterferenceMatrix,
    params: LinkParams,
    extra_interference_w: np.ndarray | None = None,
) -> dict[str, float]:
    """Achievable rate per UE; a dual-connected UE aggregates both links."""
    rates = {u: 0.0 for u in m.ue_ids}
    detail = evaluate_links(alloc, m, params, extra_interference_w)
    for target, (_, rate) in zip(m.tx_targets, detail):
        rates[target] += rate
    return rates
