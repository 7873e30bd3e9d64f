"""Hybrid time domains and the sequences defined on them.

A hybrid sequence is a function on pairs (k, j) of nonnegative integers:
k counts iteration steps, j counts jumps.  Its domain is a union of
integer intervals, one per jump level j, where consecutive levels share
the step index at which the jump happened.  A compact representation is
the nondecreasing list of those shared step indices plus the final step
of the last level.

Successor lookups answer "which jump level is active when stepping past
k" (jbar) and "at which step does jump j happen" (kbar), with an
infinite sentinel when the domain ends first.
"""

from __future__ import annotations

import csv
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterator, Mapping, Sequence

import numpy as np

__all__ = [
    "HybridIndex",
    "HybridSequenceDomain",
    "HybridSequence",
    "jbar",
    "kbar",
    "omega_limit_estimate",
    "write_sequence_csv",
    "read_sequence_csv",
]


@total_ordering
@dataclass(frozen=True)
class HybridIndex:
    """A point (k, j) in hybrid time, ordered by total length k+j, then j."""

    k: int
    j: int

    def __post_init__(self):
        if self.k < 0 or self.j < 0:
            raise ValueError("hybrid index components must be nonnegative")

    @property
    def total(self) -> int:
        return self.k + self.j

    def __lt__(self, other: "HybridIndex") -> bool:
        return (self.total, self.j) < (other.total, other.j)


@dataclass(frozen=True)
class HybridSequenceDomain:
    """Compact description of a hybrid time domain.

    jump_indices[j] is the step index at which jump j occurs, so level j
    spans steps [jump_indices[j-1], jump_indices[j]] (level 0 starts at
    step 0).  The last level runs up to k_end, or on forever when
    complete_in_k is set.  complete_in_j declares an unbounded jump
    continuation beyond the stored data; lookups past the stored jumps
    then return the infinite sentinel because their step index is not
    determined by the representation.
    """

    jump_indices: tuple[int, ...]
    k_end: int
    complete_in_k: bool = False
    complete_in_j: bool = False

    def __post_init__(self):
        object.__setattr__(self, "jump_indices", tuple(int(k) for k in self.jump_indices))
        prev = 0
        for k in self.jump_indices:
            if k < prev:
                raise ValueError("jump step indices must be nondecreasing and nonnegative")
            prev = k
        if self.k_end < prev:
            raise ValueError("k_end must not precede the last jump")

    @property
    def num_jumps(self) -> int:
        return len(self.jump_indices)

    def level_span(self, j: int) -> tuple[int, int | float]:
        """Step range [start, end] of jump level j (end may be inf)."""
        J = self.num_jumps
        if j < 0 or j > J:
            raise ValueError(f"jump level {j} outside domain")
        start = 0 if j == 0 else self.jump_indices[j - 1]
        if j < J:
            return start, self.jump_indices[j]
        return start, (math.inf if self.complete_in_k else self.k_end)

    def contains(self, k: int, j: int) -> bool:
        if k < 0 or j < 0 or j > self.num_jumps:
            return False
        start, end = self.level_span(j)
        return start <= k <= end

    def indices(self) -> Iterator[tuple[int, int]]:
        """Enumerate stored indices in hybrid-time order (bounded part only)."""
        J = self.num_jumps
        for j in range(J + 1):
            start = 0 if j == 0 else self.jump_indices[j - 1]
            end = self.jump_indices[j] if j < J else self.k_end
            for k in range(start, end + 1):
                yield (k, j)

    def size(self) -> int:
        """Number of stored indices."""
        J = self.num_jumps
        total = 0
        for j in range(J + 1):
            start = 0 if j == 0 else self.jump_indices[j - 1]
            end = self.jump_indices[j] if j < J else self.k_end
            total += end - start + 1
        return total


class HybridSequence:
    """Values attached to every stored index of a hybrid time domain."""

    def __init__(self, domain: HybridSequenceDomain, values: Mapping[tuple[int, int], np.ndarray]):
        self.domain = domain
        vals: dict[tuple[int, int], np.ndarray] = {}
        dim: int | None = None
        for idx in domain.indices():
            if idx not in values:
                raise ValueError(f"missing value at index {idx}")
            v = np.asarray(values[idx], dtype=float)
            if v.ndim != 1:
                raise ValueError("sequence values must be 1-d vectors")
            if dim is None:
                dim = v.shape[0]
            elif v.shape[0] != dim:
                raise ValueError("sequence values must share one dimension")
            vals[idx] = v
        if len(values) != len(vals):
            extra = set(values) - set(vals)
            raise ValueError(f"values defined outside the domain: {sorted(extra)[:3]}")
        if dim is None:
            raise ValueError("empty sequence")
        self.values = vals
        self.dim = dim

    def __getitem__(self, idx: tuple[int, int]) -> np.ndarray:
        return self.values[idx]

    def __len__(self) -> int:
        return len(self.values)

    def norm_bound(self) -> float:
        """Largest Euclidean norm over all stored values."""
        return max(float(np.linalg.norm(v)) for v in self.values.values())

    def project(self, idx: slice | Sequence[int]) -> "HybridSequence":
        """New sequence keeping only the selected state components."""
        return HybridSequence(self.domain, {key: v[idx] for key, v in self.values.items()})


def _domain_of(seq: HybridSequence | HybridSequenceDomain) -> HybridSequenceDomain:
    return seq.domain if isinstance(seq, HybridSequence) else seq


def jbar(seq: HybridSequence | HybridSequenceDomain, k: int) -> int | float:
    """Smallest jump level j such that (k+1, j) is in the domain, else inf.

    This is the level a solution flows at when stepping from k to k+1;
    finite for every k when the domain is complete in the k direction.
    """
    dom = _domain_of(seq)
    if k < 0:
        raise ValueError("k must be nonnegative")
    target = k + 1
    j = bisect_left(dom.jump_indices, target)
    start, end = dom.level_span(j)
    if start <= target <= end:
        return j
    return math.inf


def kbar(seq: HybridSequence | HybridSequenceDomain, j: int) -> int | float:
    """Step index at which jump j occurs, else inf when never stored."""
    dom = _domain_of(seq)
    if j < 0:
        raise ValueError("j must be nonnegative")
    if j < dom.num_jumps:
        return dom.jump_indices[j]
    return math.inf


def omega_limit_estimate(
    seq: HybridSequence,
    tail_fraction: float = 0.1,
    cluster_tol: float = 1e-3,
    max_points: int = 2000,
) -> np.ndarray:
    """Cluster centroids of the tail of a hybrid sequence.

    Keeps the values whose hybrid time k+j falls in the trailing
    tail_fraction of the sequence, then merges points closer than
    cluster_tol by single linkage.  Returns the cluster centroids as an
    array of shape (m, dim), sorted lexicographically; a surrogate for
    the accumulation set of the sequence.

    Tails longer than max_points are thinned to an evenly spaced
    subsample first; pair enumeration on a dense tail is quadratic, and
    the centroids barely move under thinning.
    """
    if len(seq) == 0:
        raise ValueError("empty sequence")
    if not (0.0 < tail_fraction <= 1.0):
        raise ValueError("tail_fraction must lie in (0, 1]")
    max_total = max(k + j for (k, j) in seq.values)
    cutoff = (1.0 - tail_fraction) * max_total
    keys = sorted((k + j, j, k) for (k, j) in seq.values if k + j >= cutoff)
    if len(keys) > max_points:
        idx = np.unique(np.linspace(0, len(keys) - 1, max_points).astype(int))
        keys = [keys[i] for i in idx]
    pts = np.array([seq.values[(k, j)] for (_, j, k) in keys])
    # sort rows lexicographically so the result ignores storage order
    order = np.lexsort(pts.T[::-1])
    pts = pts[order]
    m = pts.shape[0]
    labels = np.arange(m)
    if cluster_tol > 0 and m > 1:
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components
        from scipy.spatial import cKDTree

        pairs = cKDTree(pts).query_pairs(cluster_tol, output_type="ndarray")
        adj = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                         shape=(m, m))
        _, labels = connected_components(adj, directed=False)
    reps = np.array([pts[labels == g].mean(axis=0) for g in np.unique(labels)])
    order = np.lexsort(reps.T[::-1])
    return reps[order]


def write_sequence_csv(seq: HybridSequence, path: str) -> None:
    """Write a sequence as CSV with columns k, j, x_0..x_{n-1}.

    Floats use shortest round-trip formatting, so write/read/write
    produces identical bytes.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["k", "j"] + [f"x_{i}" for i in range(seq.dim)])
        for (k, j) in seq.domain.indices():
            v = seq.values[(k, j)]
            writer.writerow([k, j] + [repr(float(c)) for c in v])


def read_sequence_csv(path: str) -> HybridSequence:
    """Read a sequence written by write_sequence_csv."""
    values: dict[tuple[int, int], np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header[:2] != ["k", "j"]:
            raise ValueError("expected header starting with k, j")
        for row in reader:
            k, j = int(row[0]), int(row[1])
            values[(k, j)] = np.array([float(c) for c in row[2:]])
    if not values:
        raise ValueError("empty sequence")
    # reconstruct the compact domain: jump j starts at the smallest k of level j
    max_j = max(j for (_, j) in values)
    jump_indices = []
    for j in range(1, max_j + 1):
        ks = [k for (k, jj) in values if jj == j]
        if not ks:
            raise ValueError(f"no rows at jump level {j}")
        jump_indices.append(min(ks))
    k_end = max(k for (k, j) in values if j == max_j)
    dom = HybridSequenceDomain(tuple(jump_indices), k_end)
    return HybridSequence(dom, values)
