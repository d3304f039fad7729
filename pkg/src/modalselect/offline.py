"""Prophet (off-line) oracles for monotone, unimodal and d-modal subsequences.

A d-modal subsequence is a concatenation of at most ``d + 1`` monotone
blocks alternating in direction, the first one increasing.  For distinct
values this is the same as asking that the sign pattern of consecutive
differences, read with a leading ``+``, changes at most ``d`` times.
"""

from __future__ import annotations

import math
from bisect import bisect_left
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import DomainError, SizeError

BRUTEFORCE_LIMIT = 20


def as_sequence(xs) -> list[float]:
    seq = [float(v) for v in xs]
    if len(set(seq)) != len(seq):
        raise DomainError("sequence values must be pairwise distinct")
    return seq


def _lis_ending(seq) -> list[int]:
    """Length of the longest increasing subsequence ending at each position."""
    tails: list[float] = []
    out = []
    for x in seq:
        pos = bisect_left(tails, x)
        if pos == len(tails):
            tails.append(x)
        else:
            tails[pos] = x
        out.append(pos + 1)
    return out


def lis_length(seq) -> int:
    """Patience sorting; an empty sequence gives 0."""
    seq = as_sequence(seq)
    return max(_lis_ending(seq), default=0)


def lds_length(seq) -> int:
    return lis_length([-x for x in seq])


def _up_down(seq) -> int:
    if not seq:
        return 0
    inc = _lis_ending(seq)
    # longest decreasing run starting at j = longest increasing one ending at j read backwards
    dec = _lis_ending(seq[::-1])[::-1]
    return max(u + v - 1 for u, v in zip(inc, dec))


def lus_length(seq) -> tuple[int, int, int]:
    """``(u_n, d_n, l_n)``: longest up-then-down, down-then-up, and their max."""
    seq = as_sequence(seq)
    u = _up_down(seq)
    d = _up_down([-x for x in seq])
    return u, d, max(u, d)


class _MaxFenwick:
    """Prefix maxima over ranks ``1..size`` with increase-only point updates."""

    def __init__(self, size: int):
        self.size = size
        self.tree = [0] * (size + 1)

    def update(self, idx: int, value: int) -> None:
        tree = self.tree
        while idx <= self.size:
            if tree[idx] < value:
                tree[idx] = value
            idx += idx & -idx

    def query(self, idx: int) -> int:
        best = 0
        tree = self.tree
        while idx > 0:
            if tree[idx] > best:
                best = tree[idx]
            idx -= idx & -idx
        return best


def dmodal_offline_length(seq, d: int) -> int:
    """Longest up-first d-modal subsequence in ``O(n (d + 1) log n)``.

    ``best[b]`` for the element at hand is the longest such subsequence
    ending there while inside block ``b``.  Increasing blocks extend from
    smaller values, decreasing blocks from larger ones, each either staying
    in the same block or turning from ``b - 1``.
    """
    if d < 0:
        raise DomainError(f"d must be >= 0, got {d}")
    seq = as_sequence(seq)
    n = len(seq)
    if n == 0:
        return 0
    order = sorted(range(n), key=seq.__getitem__)
    rank = [0] * n
    for r, idx in enumerate(order, start=1):
        rank[idx] = r
    blocks = min(d, n - 1) + 1
    # smaller[b] answers "best in block b among smaller values", larger[b] the mirror
    smaller = [_MaxFenwick(n) for _ in range(blocks)]
    larger = [_MaxFenwick(n) for _ in range(blocks)]
    best_overall = 0
    for j in range(n):
        r = rank[j]
        row = []
        for b in range(blocks):
            # entering an even block is an up-step, an odd block a down-step,
            # whether staying in b or turning from b - 1
            trees = smaller if b % 2 == 0 else larger
            key = r - 1 if b % 2 == 0 else n - r
            cand = trees[b].query(key)
            if b > 0:
                cand = max(cand, trees[b - 1].query(key))
            row.append(cand + 1)
        for b, val in enumerate(row):
            smaller[b].update(r, val)
            larger[b].update(n - r + 1, val)
        best_overall = max(best_overall, max(row))
    return best_overall


def _blocks_needed(values) -> int:
    """Alternating monotone blocks, first increasing, needed to cover ``values`` in order."""
    blocks = 1
    direction = 1
    for prev, cur in zip(values, values[1:]):
        sign = 1 if cur > prev else -1
        if sign != direction:
            blocks += 1
            direction = sign
    return blocks


def dmodal_offline_bruteforce(seq, d: int) -> int:
    """Exhaustive search over subsequences, largest first."""
    seq = as_sequence(seq)
    if len(seq) > BRUTEFORCE_LIMIT:
        raise SizeError(f"brute force limited to {BRUTEFORCE_LIMIT} values, got {len(seq)}")
    if d < 0:
        raise DomainError(f"d must be >= 0, got {d}")
    for size in range(len(seq), 0, -1):
        for idx in combinations(range(len(seq)), size):
            if _blocks_needed([seq[i] for i in idx]) <= d + 1:
                return size
    return 0


def dmodal_best_orientation(seq, d: int) -> int:
    """Max over starting increasing and starting decreasing."""
    return max(dmodal_offline_length(seq, d), dmodal_offline_length([-x for x in seq], d))


def chung_guaranteed_length(n: int) -> int:
    """Smallest ``k`` with ``k >= sqrt(3 n - 3/4) - 1/2``, i.e. ``k^2 + k + 1 >= 3 n``."""
    if n < 1:
        raise DomainError(f"n must be >= 1, got {n}")
    k = max(math.isqrt(3 * n) - 1, 0)
    while k * k + k + 1 < 3 * n:
        k += 1
    return k


@dataclass(frozen=True)
class OfflineResult:
    lis: int
    lds: int
    u_n: int
    d_n: int
    l_n: int
    dmodal: dict


def offline_summary(seq, max_d: int = 2) -> OfflineResult:
    seq = as_sequence(seq)
    u, dn, l = lus_length(seq)
    return OfflineResult(
        lis=lis_length(seq),
        lds=lds_length(seq),
        u_n=u,
        d_n=dn,
        l_n=l,
        dmodal={d: dmodal_offline_length(seq, d) for d in range(max_d + 1)},
    )


def offline_replications(n: int, reps: int, base_seed: int, d: int = 1,
                         orientation: str = "best-of-both") -> np.ndarray:
    """Prophet lengths on ``reps`` seeded uniform streams (same streams as the simulator)."""
    from .simulate import derive_seed, uniform_stream

    out = np.empty(reps, dtype=np.int64)
    for j in range(reps):
        xs = uniform_stream(derive_seed(base_seed, j), n).tolist()
        if d == 1 and orientation == "best-of-both":
            out[j] = lus_length(xs)[2]
        elif orientation == "best-of-both":
            out[j] = dmodal_best_orientation(xs, d)
        else:
            out[j] = dmodal_offline_length(xs, d)
    return out


def read_sequence_csv(path) -> list[float]:
    """One value per line; blank lines and ``#`` comments are skipped."""
    values = []
    with open(path) as fh:
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                values.append(float(line.split(",")[0]))
    return as_sequence(values)
