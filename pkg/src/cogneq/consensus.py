"""Linear consensus iterates on a directed graph with finite-time exact
average extraction from each node's own observation sequence."""

import warnings
from dataclasses import dataclass, field

import numpy as np

RANK_TOL = 1e-10


class ExtractionInfeasible(RuntimeError):
    """Average not recoverable from a node's observations for this (graph, F)."""

    def __init__(self, node, detail=""):
        self.node = node
        super().__init__(f"finite-time average extraction infeasible at node "
                         f"{node}{': ' + detail if detail else ''}")


@dataclass
class ConsensusParams:
    A: np.ndarray                    # iteration weights a_qr
    F: int
    graph: np.ndarray                # boolean in-neighbor adjacency
    L: np.ndarray = field(default=None)    # per-node horizon
    m: list = field(default=None)          # per-node extraction coefficients

    @property
    def Q(self):
        return self.A.shape[0]

    @property
    def deg_in(self):
        return self.graph.sum(axis=1)

    @property
    def deg_out(self):
        return self.graph.sum(axis=0)

    @property
    def iteration_matrix(self):
        """One synchronous step as a matrix: z+ = W z."""
        W = np.where(self.graph, self.A, 0.0)
        np.fill_diagonal(W, np.diag(self.A) - self.deg_in)
        return W

    @property
    def complete(self):
        return self.L is not None and self.m is not None


def build_weights(graph, F):
    """Iteration weights: 1 on in-edges, F - in-degree on the diagonal."""
    graph = np.asarray(graph, dtype=bool)
    Q = graph.shape[0]
    if graph.shape != (Q, Q):
        raise ValueError("graph must be a square adjacency matrix")
    graph = graph & ~np.eye(Q, dtype=bool)
    A = graph.astype(float)
    np.fill_diagonal(A, F - graph.sum(axis=1))
    return ConsensusParams(A=A, F=int(F), graph=graph)


def iterate(z, params):
    """One synchronous consensus step on the node values."""
    z = np.asarray(z, dtype=float)
    return params.iteration_matrix @ z


def _extraction_for_node(W, q, Q):
    """Smallest horizon and coefficients reproducing the network average.

    Node q observes z_q^(i) = (W^i z)_q; the average functional is reachable
    once it enters the span of the Krylov rows e_q^T W^i.  Rows are
    normalized before the least-squares test: the powers of W grow fast and
    would otherwise swamp the rank tolerance.
    """
    target = np.full(Q, 1.0 / Q)
    row = np.zeros(Q)
    row[q] = 1.0
    rows = [row]
    for L in range(Q):
        R = np.stack(rows)          # (L+1, Q)
        norms = np.linalg.norm(R, axis=1)
        Rn = R / norms[:, None]
        m_scaled, *_ = np.linalg.lstsq(Rn.T, target, rcond=None)
        resid = np.linalg.norm(Rn.T @ m_scaled - target)
        if resid <= RANK_TOL:
            return L, m_scaled / norms
        rows.append(rows[-1] @ W)
    return None, None


def compute_finite_time_params(graph, F=None):
    """Fill the per-node horizons L_q and extraction coefficients m_q.

    Computed centrally from the known weight matrix (the cost is amortized
    over every consensus call on a fixed topology).  Raises
    ExtractionInfeasible naming the first blocked node; one retry with the
    self-weight offset bumped is attempted for rank-deficient spectra.
    """
    graph = np.asarray(graph, dtype=bool)
    Q = graph.shape[0]
    if F is None:
        F = Q
    last_err = None
    for F_try in (F, F + 1):
        params = build_weights(graph, F_try)
        W = params.iteration_matrix
        L = np.zeros(Q, dtype=int)
        m = []
        ok = True
        for q in range(Q):
            Lq, mq = _extraction_for_node(W, q, Q)
            if Lq is None:
                last_err = ExtractionInfeasible(
                    q, "average not in the node-observable span "
                       "(disconnected graph or defective weight matrix)")
                ok = False
                break
            if Lq > Q - params.deg_in[q]:
                warnings.warn(
                    f"node {q}: extraction horizon {Lq} exceeds Q - deg_q "
                    f"= {Q - params.deg_in[q]}")
            L[q] = Lq
            m.append(mq)
        if ok:
            params.L = L
            params.m = m
            return params
    raise last_err


@dataclass
class ConsensusResult:
    value: float
    per_node: np.ndarray
    iters_used: int
    messages_total: int


def finite_time_average(initial, params, early_broadcast=False):
    """Exact network average from finitely many synchronous rounds.

    Each node combines its own observed sequence with its extraction
    coefficients.  The message count follows broadcast counting: every node
    transmits once per round.  With early_broadcast, nodes that finish first
    flood the value, shaving at most one round off the total.
    """
    if not params.complete:
        raise ValueError("consensus params incomplete; run compute_finite_time_params")
    z = np.asarray(initial, dtype=float).copy()
    Q = params.Q
    Lmax = int(params.L.max())
    seq = [z.copy()]
    for _ in range(Lmax):
        z = iterate(z, params)
        seq.append(z.copy())
    Z = np.stack(seq)               # (Lmax+1, Q)
    per_node = np.array([params.m[q] @ Z[: params.L[q] + 1, q]
                         for q in range(Q)])
    iters = Lmax + 1
    if early_broadcast:
        finish = params.L + 1
        for q in range(Q):
            nbr = np.where(params.graph[q])[0]
            if nbr.size:
                finish[q] = min(finish[q], int(params.L[nbr].min()) + 2)
        iters = max(int(finish.max()), Lmax)
    messages = Q * iters
    return ConsensusResult(value=float(per_node.mean()), per_node=per_node,
                           iters_used=iters, messages_total=messages)


def random_strongly_connected(Q, rng, extra_edge_prob=0.3):
    """Random strongly-connected digraph: a directed cycle plus extra edges."""
    graph = np.zeros((Q, Q), dtype=bool)
    perm = rng.permutation(Q)
    for i in range(Q):
        graph[perm[(i + 1) % Q], perm[i]] = True   # edge perm[i] -> perm[i+1]
    extra = rng.random((Q, Q)) < extra_edge_prob
    np.fill_diagonal(extra, False)
    return graph | extra
