"""Weighted undirected graphs, their Laplacians, and spectral helpers.

Agents are 0-indexed in memory and 1-indexed in the plain-text edge-list
format read and written by :func:`read_edge_list` / :func:`write_edge_list`.
"""
from __future__ import annotations

import functools
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import DisconnectedGraphError, ValidationError


def _components(num_agents, edges):
    adj = [[] for _ in range(num_agents)]
    for k, l, _ in edges:
        adj[k].append(l)
        adj[l].append(k)
    seen = [False] * num_agents
    comps = []
    for root in range(num_agents):
        if seen[root]:
            continue
        comp, queue = [], deque([root])
        seen[root] = True
        while queue:
            k = queue.popleft()
            comp.append(k)
            for l in adj[k]:
                if not seen[l]:
                    seen[l] = True
                    queue.append(l)
        comps.append(comp)
    return comps


@dataclass(frozen=True)
class GraphTopology:
    """Connected weighted undirected graph over ``num_agents`` agents.

    ``edges`` holds ``(k, l, weight)`` triples with ``k < l`` after
    normalisation. Zero-weight edges are dropped.
    """

    num_agents: int
    edges: tuple

    def __post_init__(self):
        K = self.num_agents
        if not isinstance(K, (int, np.integer)) or K < 1:
            raise ValidationError(f"num_agents must be a positive integer, got {K!r}")
        seen = set()
        norm = []
        for e in self.edges:
            k, l, w = int(e[0]), int(e[1]), float(e[2])
            if not (0 <= k < K and 0 <= l < K):
                raise ValidationError(f"edge ({k}, {l}) references an agent outside 0..{K - 1}")
            if k == l:
                raise ValidationError(f"self-loop on agent {k}")
            if not np.isfinite(w) or w < 0:
                raise ValidationError(f"edge ({k}, {l}) has invalid weight {w}")
            key = (min(k, l), max(k, l))
            if key in seen:
                raise ValidationError(f"duplicate edge {key}")
            seen.add(key)
            if w > 0:
                norm.append((key[0], key[1], w))
        norm.sort()
        object.__setattr__(self, "num_agents", int(K))
        object.__setattr__(self, "edges", tuple(norm))
        comps = _components(self.num_agents, self.edges)
        if len(comps) > 1:
            raise DisconnectedGraphError(comps)

    def adjacency(self):
        A = np.zeros((self.num_agents, self.num_agents))
        for k, l, w in self.edges:
            A[k, l] = A[l, k] = w
        return A

    def degrees(self):
        """Unweighted node degrees."""
        deg = np.zeros(self.num_agents, dtype=int)
        for k, l, _ in self.edges:
            deg[k] += 1
            deg[l] += 1
        return deg

    def neighbors(self, k):
        out = []
        for a, b, _ in self.edges:
            if a == k:
                out.append(b)
            elif b == k:
                out.append(a)
        return sorted(out)


@dataclass(frozen=True)
class LaplacianMatrix:
    """Symmetric graph Laplacian with its eigendecomposition.

    Attributes
    ----------
    entries : ndarray, shape (K, K)
    eigenvalues : ndarray, shape (K,)
        Ascending; the first one is exactly zero.
    eigenvectors : ndarray, shape (K, K)
        Orthonormal columns matching ``eigenvalues``; column 0 is the
        normalised all-ones vector.
    """

    entries: np.ndarray
    eigenvalues: np.ndarray = field(repr=False)
    eigenvectors: np.ndarray = field(repr=False)

    @classmethod
    def from_matrix(cls, L, atol=1e-9):
        """Validate a dense Laplacian and compute its spectral cache."""
        L = np.array(L, dtype=float)
        if L.ndim != 2 or L.shape[0] != L.shape[1]:
            raise ValidationError(f"Laplacian must be square, got shape {L.shape}")
        K = L.shape[0]
        scale = max(1.0, np.abs(L).max())
        if not np.allclose(L, L.T, atol=atol * scale, rtol=0):
            raise ValidationError("Laplacian must be symmetric")
        if np.abs(L.sum(axis=1)).max() > atol * scale:
            raise ValidationError("Laplacian rows must sum to zero")
        off = L - np.diag(np.diag(L))
        if off.max() > atol * scale:
            raise ValidationError("Laplacian off-diagonal entries must be nonpositive")
        L = 0.5 * (L + L.T)
        lam, V = np.linalg.eigh(L)
        # null space is span{1} by construction; pin it exactly
        ones = np.full(K, 1.0 / np.sqrt(K))
        V = V.copy()
        V[:, 0] = ones
        if K > 1:
            rest = V[:, 1:] - np.outer(ones, ones @ V[:, 1:])
            V[:, 1:], _ = np.linalg.qr(rest)
            # qr may flip signs; keep eigen-equation consistent by re-deriving eigenvalues
            lam = np.concatenate([[0.0], np.einsum("ij,ik,kj->j", V[:, 1:], L, V[:, 1:])])
        else:
            lam = np.array([0.0])
        entries = L
        obj = cls(entries=entries, eigenvalues=lam, eigenvectors=V)
        return obj

    @property
    def num_agents(self):
        return self.entries.shape[0]

    @property
    def algebraic_connectivity(self):
        return float(self.eigenvalues[1]) if self.num_agents > 1 else 0.0

    @functools.cached_property
    def pinv(self):
        return laplacian_pseudoinverse(self)

    def spectral_norm(self):
        return float(self.eigenvalues[-1])


def build_laplacian(topology: GraphTopology) -> LaplacianMatrix:
    """Return ``L = D - A`` for a validated topology."""
    A = topology.adjacency()
    L = np.diag(A.sum(axis=1)) - A
    lap = LaplacianMatrix.from_matrix(L)
    if topology.num_agents > 1 and lap.eigenvalues[1] <= 0:
        raise ValidationError("Laplacian has a repeated zero eigenvalue")
    return lap


def laplacian_pseudoinverse(L: LaplacianMatrix) -> np.ndarray:
    """Moore-Penrose pseudo-inverse of a connected Laplacian.

    The zero eigenvalue (on span{1}) is dropped structurally; the remaining
    ``K - 1`` eigenvalues are inverted.
    """
    lam = L.eigenvalues[1:]
    V = L.eigenvectors[:, 1:]
    if np.any(lam <= 0):
        raise ValidationError("pseudo-inverse requires a connected Laplacian (rank K-1)")
    P = (V / lam) @ V.T
    P = 0.5 * (P + P.T)
    # re-centre to kill round-off along 1
    return P - P.mean(axis=0, keepdims=True) - P.mean(axis=1, keepdims=True) + P.mean()


def centering_projector(K: int) -> np.ndarray:
    """``Q = I - 11^T / K``."""
    if int(K) != K or K < 2:
        raise ValidationError(f"centering projector needs K >= 2, got {K}")
    K = int(K)
    return np.eye(K) - np.full((K, K), 1.0 / K)


@dataclass(frozen=True)
class WeightMixture:
    """Two-component uniform mixture used to draw edge weights."""

    p_high: float = 0.3
    high: tuple = (1.0, 20.0)
    low: tuple = (0.0, 0.5)

    def __post_init__(self):
        if not 0.0 <= self.p_high <= 1.0:
            raise ValidationError(f"p_high must lie in [0, 1], got {self.p_high}")
        for lo, hi in (self.high, self.low):
            if lo < 0 or hi < lo:
                raise ValidationError(f"invalid uniform range ({lo}, {hi})")
        if self.high[1] <= 0 and self.low[1] <= 0:
            raise ValidationError("mixture can only produce zero weights")

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        out = np.empty(n)
        for i in range(n):
            w = 0.0
            while w <= 0.0:
                lo, hi = self.high if rng.random() < self.p_high else self.low
                w = rng.uniform(lo, hi)
            out[i] = w
        return out[0] if size is None else out


def _prufer_to_edges(seq, K):
    degree = np.ones(K, dtype=int)
    for s in seq:
        degree[s] += 1
    edges = []
    for s in seq:
        leaf = int(np.flatnonzero(degree == 1)[0])
        edges.append((leaf, int(s)))
        degree[leaf] -= 1
        degree[s] -= 1
    u, v = np.flatnonzero(degree == 1)
    edges.append((int(u), int(v)))
    return edges


def _spanning_tree(K, max_degree, rng, attempts=200):
    if K == 2:
        return [(0, 1)]
    # uniform labelled tree via a random Pruefer sequence; degree = multiplicity + 1
    for _ in range(attempts):
        seq = rng.integers(0, K, size=K - 2)
        if np.bincount(seq, minlength=K).max() + 1 <= max_degree:
            return _prufer_to_edges(seq, K)
    # tight caps make rejection hopeless: grow a capped random recursive tree
    order = rng.permutation(K)
    deg = np.zeros(K, dtype=int)
    edges = []
    for i in range(1, K):
        cands = [int(order[j]) for j in range(i) if deg[order[j]] < max_degree]
        parent = cands[rng.integers(len(cands))]
        child = int(order[i])
        edges.append((parent, child))
        deg[parent] += 1
        deg[child] += 1
    return edges


def random_topology(K, max_degree, mixture=None, rng=None) -> GraphTopology:
    """Draw a connected weighted topology with node degrees capped.

    A random spanning tree gives connectivity; extra edges are then added in
    random order (skipping any that would push an endpoint past the cap)
    until a target edge count, drawn uniformly from
    ``[K - 1, K * max_degree // 2]``, is reached.
    """
    mixture = mixture or WeightMixture()
    rng = np.random.default_rng(rng)
    if K < 2:
        raise ValidationError(f"need K >= 2 agents, got {K}")
    if max_degree < 1 or (K > 2 and max_degree < 2):
        raise ValidationError(f"max_degree={max_degree} cannot connect {K} agents")
    tree = _spanning_tree(K, max_degree, rng)
    present = {(min(a, b), max(a, b)) for a, b in tree}
    deg = np.zeros(K, dtype=int)
    for a, b in present:
        deg[a] += 1
        deg[b] += 1
    max_edges = min(K * max_degree // 2, K * (K - 1) // 2)
    target = int(rng.integers(K - 1, max(K - 1, max_edges) + 1))
    candidates = [(a, b) for a in range(K) for b in range(a + 1, K) if (a, b) not in present]
    for idx in rng.permutation(len(candidates)):
        if len(present) >= target:
            break
        a, b = candidates[idx]
        if deg[a] < max_degree and deg[b] < max_degree:
            present.add((a, b))
            deg[a] += 1
            deg[b] += 1
    pairs = sorted(present)
    weights = mixture.sample(rng, size=len(pairs))
    return GraphTopology(K, tuple((a, b, float(w)) for (a, b), w in zip(pairs, weights)))


def format_edge_list(topology: GraphTopology) -> str:
    lines = [f"K {topology.num_agents}"]
    lines += [f"{k + 1} {l + 1} {w!r}" for k, l, w in topology.edges]
    return "\n".join(lines) + "\n"


def parse_edge_list(text: str) -> GraphTopology:
    """Parse the ``K <int>`` + ``k l weight`` edge-list format (1-indexed)."""
    K = None
    edges = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if K is None:
            if len(parts) != 2 or parts[0] != "K":
                raise ValidationError(f"line {lineno}: expected header 'K <int>', got {raw!r}")
            try:
                K = int(parts[1])
            except ValueError:
                raise ValidationError(f"line {lineno}: bad agent count {parts[1]!r}") from None
            continue
        if len(parts) != 3:
            raise ValidationError(f"line {lineno}: expected 'k l weight', got {raw!r}")
        try:
            k, l, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ValidationError(f"line {lineno}: cannot parse {raw!r}") from None
        if k < 1 or l < 1:
            raise ValidationError(f"line {lineno}: agents are 1-indexed")
        edges.append((k - 1, l - 1, w))
    if K is None:
        raise ValidationError("empty edge list: missing 'K <int>' header")
    return GraphTopology(K, tuple(edges))


def write_edge_list(topology: GraphTopology, path) -> None:
    Path(path).write_text(format_edge_list(topology))


def read_edge_list(path) -> GraphTopology:
    return parse_edge_list(Path(path).read_text())
