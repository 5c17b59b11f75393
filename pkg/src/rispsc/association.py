"""Many-to-many RIS-user matching.

An association is a ``K x L`` 0/1 integer array ``x`` with ``x[k, l] = 1``
when user ``k`` is served through RIS ``l``.
"""

from __future__ import annotations

import io
from typing import Callable, Sequence

import numpy as np

from .channel import ChannelSet

__all__ = [
    "preference_metric",
    "build_preference_lists",
    "match",
    "match_preferences",
    "is_feasible",
    "association_csv",
]

ObjectiveFn = Callable[[np.ndarray], float]


def preference_metric(channels: ChannelSet) -> np.ndarray:
    """``K x L`` cascaded strength ``gain * ||h_kl||^2 * sigma_1(G_l)^2``."""
    sigma1 = np.linalg.norm(channels.G, ord=2, axis=(1, 2))
    h_norm2 = np.sum(np.abs(channels.h) ** 2, axis=-1)
    return (channels.gain * h_norm2 * sigma1[:, None] ** 2).T


def build_preference_lists(channels: ChannelSet) -> list[list[int]]:
    """Per-user RIS indices by descending metric; ties go to the lower index."""
    metric = preference_metric(channels)
    return [sorted(range(metric.shape[1]), key=lambda l: (-metric[k, l], l))
            for k in range(metric.shape[0])]


def is_feasible(x: np.ndarray, max_users_per_ris: int, max_ris_per_user: int) -> bool:
    x = np.asarray(x)
    return bool(np.all((x == 0) | (x == 1))
                and np.all(x.sum(axis=0) <= max_users_per_ris)
                and np.all(x.sum(axis=1) <= max_ris_per_user))


def match(scenario, channels: ChannelSet, objective: ObjectiveFn,
          rng: np.random.Generator | None = None, trace: list | None = None) -> np.ndarray:
    """Associate users with RISs under the scenario's cardinality caps.

    Users take turns in ascending index order, or in an order shuffled by
    ``rng`` when one is given.
    """
    order = None if rng is None else rng.permutation(channels.n_users)
    return match_preferences(build_preference_lists(channels), channels.n_ris,
                             scenario.max_users_per_ris, scenario.max_ris_per_user,
                             objective, order=order, trace=trace)


def match_preferences(preferences: Sequence[Sequence[int]], n_ris: int,
                      max_users_per_ris: int, max_ris_per_user: int,
                      objective: ObjectiveFn, order: Sequence[int] | None = None,
                      trace: list | None = None) -> np.ndarray:
    """Run the matching over precomputed preference lists.

    Users propose round-robin to the head of their list.  A proposal is
    accepted outright while the RIS has a free slot; at a full RIS the
    incumbent whose replacement by the proposer raises ``objective`` the most
    is swapped out, provided the increase is strict.  Every proposal consumes
    one list entry, so at most ``K*L`` proposals are made.

    ``trace``, when given, receives ``(kind, k, l, value, replaced)`` tuples
    for each accepted change.  ``kind`` is ``"admit"`` or ``"swap"``; for a
    swap, ``value`` is the objective after the swap and ``replaced`` the user
    that lost the slot (both ``None`` for an admission).
    """
    K0, L0 = max_users_per_ris, max_ris_per_user
    lists = [list(s) for s in preferences]
    K = len(lists)
    x = np.zeros((K, n_ris), dtype=np.int8)
    order = list(range(K)) if order is None else list(order)

    while any(lists):
        for k in order:
            if not lists[k]:
                continue
            l = lists[k][0]
            if x[k].sum() < L0:
                occupants = np.flatnonzero(x[:, l])
                if len(occupants) < K0:
                    x[k, l] = 1
                    if trace is not None:
                        trace.append(("admit", k, l, None, None))
                else:
                    best_value = objective(x)
                    best = loser = None
                    for i in occupants:
                        cand = x.copy()
                        cand[i, l] = 0
                        cand[k, l] = 1
                        value = objective(cand)
                        if value > best_value:
                            best_value, best, loser = value, cand, int(i)
                    if best is not None:
                        x = best
                        if trace is not None:
                            trace.append(("swap", k, l, best_value, loser))
            lists[k].pop(0)
    return x


def association_csv(x: np.ndarray) -> str:
    """``K x L`` 0/1 matrix as CSV with a ``user`` column and ``ris<l>`` headers."""
    x = np.asarray(x, dtype=int)
    buf = io.StringIO()
    buf.write("user," + ",".join(f"ris{l}" for l in range(x.shape[1])) + "\n")
    for k, row in enumerate(x):
        buf.write(f"{k}," + ",".join(str(v) for v in row) + "\n")
    return buf.getvalue()
