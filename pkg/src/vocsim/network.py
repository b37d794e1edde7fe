"""Resistive network assembly, Kron reduction and cycle-averaged power injections."""
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import DisconnectedNetwork, SingularInterior
from .oscillator import wrap_angle


@dataclass(frozen=True)
class NetworkSpec:
    """Full per-phase network over nodes ``0 .. n_nodes-1``.

    ``interior_sources`` maps an interior node to the phasor ``(amplitude, phase)``
    of a constant sinusoidal current injected into that node.
    """
    n_nodes: int
    inverter_nodes: tuple
    edges: tuple = ()
    shunts: tuple = ()
    interior_sources: dict = field(default_factory=dict)

    def __post_init__(self):
        inv = tuple(int(j) for j in self.inverter_nodes)
        object.__setattr__(self, "inverter_nodes", inv)
        if not inv:
            raise ValueError("at least one inverter node is required")
        if len(set(inv)) != len(inv) or min(inv) < 0 or max(inv) >= self.n_nodes:
            raise ValueError("inverter nodes must be distinct node indices")
        shunts = tuple(float(g) for g in self.shunts) or (0.0,) * self.n_nodes
        if len(shunts) != self.n_nodes:
            raise ValueError("one shunt conductance per node is required")
        if any(g < 0 for g in shunts):
            raise ValueError("shunt conductances must be nonnegative")
        object.__setattr__(self, "shunts", shunts)
        edges = tuple((int(j), int(l), float(g)) for j, l, g in self.edges)
        for j, l, g in edges:
            if g < 0:
                raise ValueError(f"edge ({j}, {l}) has negative conductance")
            if j == l or not (0 <= j < self.n_nodes and 0 <= l < self.n_nodes):
                raise ValueError(f"edge ({j}, {l}) is not a valid node pair")
        object.__setattr__(self, "edges", edges)
        for node in self.interior_sources:
            if node in inv:
                raise ValueError(f"current source at node {node} must sit on an interior node")

    @property
    def interior_nodes(self):
        inv = set(self.inverter_nodes)
        return tuple(j for j in range(self.n_nodes) if j not in inv)


@dataclass(frozen=True)
class KronNetwork:
    """Kron-reduced network seen by the N inverters.

    Attributes
    ----------
    Q : (N, N) reduced conductance matrix.
    sources : complex phasors ``iota * exp(1j * gamma)`` of the equivalent current
        sources, so the instantaneous term in ``i = Q v + s`` is
        ``iota cos(omega t + gamma)``.
    tracking_current, tracking_angle : optional local loads whose current has a
        fixed amplitude and lags the inverter's own terminal voltage by a fixed
        angle (constant-current load at constant power factor).
    """
    Q: np.ndarray
    sources: np.ndarray = None
    tracking_current: np.ndarray = None
    tracking_angle: np.ndarray = None

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
            raise ValueError("Q must be square")
        if not np.allclose(Q, Q.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise ValueError("Q must be symmetric")
        n = Q.shape[0]
        object.__setattr__(self, "Q", 0.5 * (Q + Q.T))
        for name, dtype in (("sources", complex), ("tracking_current", float), ("tracking_angle", float)):
            value = getattr(self, name)
            value = np.zeros(n, dtype=dtype) if value is None else np.array(value, dtype=dtype).reshape(-1)
            if value.shape != (n,):
                raise ValueError(f"{name} must have one entry per inverter")
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        self.Q.setflags(write=False)

    @property
    def n(self):
        return self.Q.shape[0]

    @property
    def iota(self):
        return np.abs(self.sources)

    @property
    def gamma(self):
        return np.angle(self.sources)

    @property
    def g_shunt(self):
        return self.Q.sum(axis=1)

    @property
    def g_line(self):
        G = -self.Q.copy()
        np.fill_diagonal(G, 0.0)
        return G

    @property
    def has_sources(self):
        return bool(np.any(self.sources != 0))

    @property
    def has_tracking_loads(self):
        return bool(np.any(self.tracking_current != 0))

    def scaled(self, factor):
        """Network with every conductance multiplied by ``factor``."""
        return KronNetwork(self.Q * factor, self.sources, self.tracking_current, self.tracking_angle)

    def with_sources(self, sources):
        return KronNetwork(self.Q, sources, self.tracking_current, self.tracking_angle)

    def with_tracking_loads(self, current, angle):
        return KronNetwork(self.Q, self.sources, current, angle)

    def source_current(self, t, omega):
        """Instantaneous equivalent source current at time ``t``."""
        return np.real(self.sources * np.exp(1j * omega * t))


@dataclass(frozen=True)
class PowerInjection:
    P: np.ndarray
    Q: np.ndarray


def _check_connected(n, edges):
    adj = [[] for _ in range(n)]
    for j, l, g in edges:
        if g > 0:
            adj[j].append(l)
            adj[l].append(j)
    seen = {0}
    queue = deque([0])
    while queue:
        j = queue.popleft()
        for l in adj[j]:
            if l not in seen:
                seen.add(l)
                queue.append(l)
    if len(seen) != n:
        missing = sorted(set(range(n)) - seen)
        raise DisconnectedNetwork(f"nodes {missing} are not connected to node 0")


def build_conductance(spec):
    """Full nodal conductance matrix of ``spec``."""
    n = spec.n_nodes
    _check_connected(n, spec.edges)
    Q = np.diag(np.array(spec.shunts, dtype=float))
    for j, l, g in spec.edges:
        Q[j, j] += g
        Q[l, l] += g
        Q[j, l] -= g
        Q[l, j] -= g
    return Q


def kron_reduce(Q_A, keep, interior_currents=None):
    """Eliminate every node not in ``keep``.

    ``interior_currents`` holds complex phasors for the eliminated nodes (in
    ascending node order); they appear at the kept nodes as the equivalent
    source vector ``Q_NI Q_II^-1 i_I``.
    """
    Q_A = np.asarray(Q_A, dtype=float)
    n = Q_A.shape[0]
    keep = [int(j) for j in keep]
    drop = [j for j in range(n) if j not in set(keep)]
    Q_NN = Q_A[np.ix_(keep, keep)]
    if not drop:
        return KronNetwork(Q_NN)
    Q_NI = Q_A[np.ix_(keep, drop)]
    Q_II = Q_A[np.ix_(drop, drop)]
    if interior_currents is None:
        i_I = np.zeros(len(drop), dtype=complex)
    else:
        i_I = np.asarray(interior_currents, dtype=complex)
        if i_I.shape != (len(drop),):
            raise ValueError("one interior current phasor per eliminated node is required")
    try:
        cond = np.linalg.cond(Q_II)
        if not np.isfinite(cond) or cond > 1e14:
            raise np.linalg.LinAlgError
        X = np.linalg.solve(Q_II, np.column_stack([Q_NI.T, i_I]))
    except np.linalg.LinAlgError:
        raise SingularInterior("interior block of the conductance matrix is singular") from None
    Q = Q_NN - Q_NI @ X[:, :-1].real
    sources = Q_NI @ X[:, -1]
    return KronNetwork(Q, sources)


def reduce_spec(spec):
    """Build and Kron-reduce ``spec`` onto its inverter nodes."""
    Q_A = build_conductance(spec)
    interior = spec.interior_nodes
    currents = np.zeros(len(interior), dtype=complex)
    for idx, node in enumerate(interior):
        if node in spec.interior_sources:
            amp, phase = spec.interior_sources[node]
            currents[idx] = amp * np.exp(1j * phase)
    return kron_reduce(Q_A, spec.inverter_nodes, currents)


def average_power(r, theta, net):
    """Cycle-averaged active and reactive power injected by each inverter.

    Exact for sinusoidal terminal voltages ``r_j cos(omega t + theta_j)``.
    """
    r = np.asarray(r, dtype=float)
    theta = np.asarray(theta, dtype=float)
    d = wrap_angle(theta[:, None] - theta[None, :])
    Q = net.Q
    src = theta - net.gamma
    P = (0.5 * r * net.iota * np.cos(src)
         + 0.5 * r * ((Q * np.cos(d)) @ r)
         + 0.5 * r * net.tracking_current * np.cos(net.tracking_angle))
    Qr = (0.5 * r * net.iota * np.sin(src)
          + 0.5 * r * ((Q * np.sin(d)) @ r)
          + 0.5 * r * net.tracking_current * np.sin(net.tracking_angle))
    return PowerInjection(P, Qr)


def total_balance(inj, r, theta, net):
    """Generated active power minus network dissipation and source/load absorption.

    Zero whenever ``inj`` was produced by the network at the phasor state
    ``(r, theta)``.
    """
    V = np.asarray(r, dtype=float) * np.exp(1j * np.asarray(theta, dtype=float))
    dissipated = 0.5 * np.real(np.conj(V) @ net.Q @ V)
    absorbed = 0.5 * np.sum(np.real(V * np.conj(net.sources)))
    absorbed += 0.5 * np.sum(np.abs(V) * net.tracking_current * np.cos(net.tracking_angle))
    return float(np.sum(inj.P) - dissipated - absorbed)
