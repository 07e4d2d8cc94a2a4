"""Ground-state spin Hamiltonian of the NV centre with a 14N nucleus.

Energies are linear frequencies in MHz and fields are in gauss.  The
product basis is ``|m_s, m_I>`` with ``m_s`` in (+1, 0, -1) as the outer
index and ``m_I`` in (+1, 0, -1) as the inner index, so basis index
``3 * i_s + i_I`` labels ``|MS[i_s], MI[i_I]>``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.constants import physical_constants
from scipy.optimize import linear_sum_assignment

MS = (1, 0, -1)
MI = (1, 0, -1)

# nuclear magneton over h, MHz/G
_MU_N_MHZ_PER_G = physical_constants["nuclear magneton in MHz/T"][0] * 1e-4


def basis_labels():
    """Return the nine ``(m_s, m_I)`` labels in basis order."""
    return [(ms, mi) for ms in MS for mi in MI]


def basis_index(m_s, m_i):
    """Index of ``|m_s, m_I>`` in the product basis."""
    return 3 * MS.index(m_s) + MI.index(m_i)


@dataclass(frozen=True)
class SpinParams:
    """Constants of the ground-state Hamiltonian.

    Parameters
    ----------
    d_gs : float
        Longitudinal zero-field splitting, MHz.
    e_strain : float
        Transverse zero-field splitting of one centre, MHz.
    a_par, a_perp : float
        Longitudinal and transverse hyperfine constants, MHz.
    p_quad : float
        Nuclear quadrupole constant, MHz.
    g_s, g_i : float
        Electron and nuclear g-factors.
    gamma_nv : float
        Electron gyromagnetic ratio, MHz/G.
    gamma_n : float, optional
        Nuclear gyromagnetic ratio, MHz/G.  Derived from ``g_i`` and the
        nuclear magneton when not given.
    """

    d_gs: float = 2870.0
    e_strain: float = 0.0
    a_par: float = -2.16
    a_perp: float = 2.7
    p_quad: float = 4.95
    g_s: float = 2.003
    g_i: float = 0.403
    gamma_nv: float = 2.8
    gamma_n: float | None = None

    def __post_init__(self):
        if self.gamma_n is None:
            object.__setattr__(self, "gamma_n", self.g_i * _MU_N_MHZ_PER_G)
        if not self.d_gs > 0:
            raise ValueError("d_gs must be positive")
        if not self.gamma_nv > 0:
            raise ValueError("gamma_nv must be positive")
        if abs(self.gamma_n) >= 1e-2 * self.gamma_nv:
            raise ValueError("|gamma_n| must be below 1e-2 * gamma_nv")

    def with_strain(self, e_strain):
        return replace(self, e_strain=float(e_strain))

    def b_center(self, m_i):
        """Axial field (G) where ``|+1, m_I>`` and ``|-1, m_I>`` cross."""
        return -self.a_par * m_i / self.gamma_nv


@dataclass(frozen=True)
class FieldVector:
    """Magnetic field in gauss, NV frame (z along the NV axis)."""

    bx: float = 0.0
    by: float = 0.0
    bz: float = 0.0

    @property
    def magnitude(self):
        return float(np.sqrt(self.bx**2 + self.by**2 + self.bz**2))

    @property
    def direction(self):
        m = self.magnitude
        if m == 0:
            raise ValueError("direction undefined for a zero field")
        return np.array([self.bx, self.by, self.bz]) / m

    def as_array(self):
        return np.array([self.bx, self.by, self.bz], dtype=float)

    @classmethod
    def along(cls, direction, magnitude):
        d = np.asarray(direction, dtype=float)
        d = d / np.linalg.norm(d)
        return cls(*(float(magnitude) * d))


def spin_operators(s=1):
    """Spin-1 matrices ``(Jx, Jy, Jz)`` in the (+1, 0, -1) ordering."""
    if s != 1:
        raise ValueError(f"only spin 1 is supported, got {s!r}")
    r = 1 / np.sqrt(2)
    jx = np.array([[0, r, 0], [r, 0, r], [0, r, 0]], dtype=complex)
    jy = np.array([[0, -1j * r, 0], [1j * r, 0, -1j * r], [0, 1j * r, 0]])
    jz = np.diag([1.0, 0.0, -1.0]).astype(complex)
    return jx, jy, jz


_S = spin_operators(1)
_ID3 = np.eye(3, dtype=complex)


def build_hamiltonian(params: SpinParams, field: FieldVector) -> np.ndarray:
    """Assemble the 9x9 Hamiltonian (MHz) for a field in the NV frame."""
    sx, sy, sz = _S
    b = field.as_array()
    p = params
    h_s = (
        p.d_gs * sz @ sz
        + p.e_strain * (sx @ sx - sy @ sy)
        + p.gamma_nv * (b[0] * sx + b[1] * sy + b[2] * sz)
    )
    h_i = p.p_quad * sz @ sz - p.gamma_n * (b[0] * sx + b[1] * sy + b[2] * sz)
    h_si = p.a_par * np.kron(sz, sz) + p.a_perp * (np.kron(sx, sx) + np.kron(sy, sy))
    return np.kron(h_s, _ID3) + h_si + np.kron(_ID3, h_i)


@dataclass(frozen=True)
class EigenSystem:
    """Ascending eigenvalues and phase-fixed eigenvectors (columns)."""

    values: np.ndarray
    vectors: np.ndarray


def eigensystem(h, atol=1e-10) -> EigenSystem:
    """Diagonalize a Hermitian matrix with a deterministic phase convention.

    Each eigenvector is rotated so that its largest-magnitude component is
    real and non-negative.
    """
    h = np.asarray(h, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError("matrix must be square")
    if np.max(np.abs(h - h.conj().T), initial=0.0) > atol * scale:
        raise ValueError("matrix is not Hermitian within tolerance")
    w, v = np.linalg.eigh(h)
    k = np.argmax(np.abs(v), axis=0)
    lead = v[k, np.arange(v.shape[1])]
    v = v * (np.abs(lead) / lead)[None, :]
    return EigenSystem(values=w, vectors=v)


@dataclass(frozen=True)
class LevelDiagram:
    """Energy tracks versus field magnitude.

    ``energies[k, j]`` and ``vectors[k, :, j]`` belong to track ``j`` at grid
    point ``k``.  Tracks are numbered by energy order at the first point.
    """

    b_grid: np.ndarray
    direction: np.ndarray
    energies: np.ndarray
    vectors: np.ndarray = field(repr=False)

    def labels(self, k=0):
        """Dominant ``(m_s, m_I)`` label of every track at grid point ``k``."""
        lab = basis_labels()
        return [lab[i] for i in np.argmax(np.abs(self.vectors[k]), axis=0)]


def _align_degenerate(v_prev, es, tol=1e-9):
    """Rotate degenerate eigenvector clusters onto the previous vectors.

    Inside an exactly degenerate cluster the solver's basis is arbitrary;
    choosing the unitary closest to the previous step keeps exact
    crossings from being tracked as avoided ones.
    """
    w, v = es.values, es.vectors.copy()
    scale = tol * max(1.0, float(np.max(np.abs(w))))
    start = 0
    while start < len(w):
        stop = start + 1
        while stop < len(w) and w[stop] - w[stop - 1] <= scale:
            stop += 1
        if stop - start > 1:
            vc = v[:, start:stop]
            weight = np.linalg.norm(vc.conj().T @ v_prev, axis=0)
            sel = np.sort(np.argsort(weight)[-(stop - start):])
            m = vc.conj().T @ v_prev[:, sel]
            u, _, wh = np.linalg.svd(m)
            v[:, start:stop] = vc @ (u @ wh)
        start = stop
    return EigenSystem(w, v)


def _match(v_prev, v_next, e_prev, e_next):
    ov = np.abs(v_prev.conj().T @ v_next) ** 2
    # energy proximity only breaks near-ties in overlap
    de = np.abs(e_prev[:, None] - e_next[None, :])
    cost = -ov + 1e-9 * de / (1.0 + de.max())
    _, cols = linear_sum_assignment(cost)
    return cols


def level_sweep(params: SpinParams, direction, b_range, n_points) -> LevelDiagram:
    """Diagonalize along a field line and connect levels by eigenvector overlap."""
    n_points = int(n_points)
    if n_points < 2:
        raise ValueError("n_points must be at least 2")
    b0, b1 = map(float, b_range)
    if b0 == b1:
        raise ValueError("b_range must not be degenerate")
    d = np.asarray(direction, dtype=float)
    d = d / np.linalg.norm(d)
    grid = np.linspace(b0, b1, n_points)
    energies = np.empty((n_points, 9))
    vectors = np.empty((n_points, 9, 9), dtype=complex)
    prev = None
    for k, b in enumerate(grid):
        es = eigensystem(build_hamiltonian(params, FieldVector(*(b * d))))
        if prev is None:
            order = np.arange(9)
        else:
            es = _align_degenerate(prev.vectors, es)
            order = _match(prev.vectors, es.vectors, prev.values, es.values)
        energies[k] = es.values[order]
        vectors[k] = es.vectors[:, order]
        prev = EigenSystem(energies[k], vectors[k])
    return LevelDiagram(b_grid=grid, direction=d, energies=energies, vectors=vectors)


@dataclass(frozen=True)
class AntiCrossing:
    b_center: float
    gap: float
    pair: tuple
    m_i_sector: int


def _local_two_level(values, vectors, m_i):
    """Diabatic detuning and coupling of the sector pair at one field point.

    The two eigenstates with the largest weight on ``|+1, m_I>`` and
    ``|-1, m_I>`` are projected onto that subspace and orthonormalized
    (polar factor), which reproduces their exact splitting as a 2x2
    effective Hamiltonian.
    """
    idx = [basis_index(1, m_i), basis_index(-1, m_i)]
    pop = np.sum(np.abs(vectors[idx, :]) ** 2, axis=0)
    pair = np.sort(np.argsort(pop)[-2:])
    q = vectors[np.ix_(idx, pair)]
    u, _, wh = np.linalg.svd(q)
    qo = u @ wh
    e = values[pair] - values[pair].mean()
    h = (qo * e[None, :]) @ qo.conj().T
    return float(np.real(h[0, 0] - h[1, 1])), float(abs(h[0, 1]))


def find_anticrossings(diagram: LevelDiagram, params: SpinParams | None = None):
    """Field of closest approach and gap of each ``|+1, m_I>``/``|-1, m_I>`` pair.

    The crossing field is the root of the local diabatic detuning
    (linear interpolation between grid points); the gap is twice the local
    coupling there.  Sectors whose detuning does not change sign inside the
    scanned range are omitted with a warning.
    """
    b = diagram.b_grid
    lab = basis_labels()
    order = np.argsort(b)
    out = []
    for m_i in (-1, 0, 1):
        det = np.empty(len(b))
        cpl = np.empty(len(b))
        for k in range(len(b)):
            det[k], cpl[k] = _local_two_level(diagram.energies[k], diagram.vectors[k], m_i)
        bs, ds, cs = b[order], det[order], cpl[order]
        hits = np.flatnonzero(ds == 0)
        if hits.size:
            j = int(hits[np.argmin(cs[hits])])
            bc, c = bs[j], cs[j]
        else:
            flips = np.flatnonzero(np.sign(ds[:-1]) * np.sign(ds[1:]) < 0)
            if not flips.size:
                warnings.warn(f"m_I={m_i} crossing lies outside the scanned range", stacklevel=2)
                continue
            j = int(flips[np.argmin(np.minimum(cs[flips], cs[flips + 1]))])
            t = ds[j] / (ds[j] - ds[j + 1])
            bc = bs[j] + t * (bs[j + 1] - bs[j])
            c = cs[j] + t * (cs[j + 1] - cs[j])
        pair = (lab[basis_index(1, m_i)], lab[basis_index(-1, m_i)])
        out.append(AntiCrossing(b_center=float(bc), gap=float(2 * c), pair=pair, m_i_sector=m_i))
    return out


def zero_field_pair_splitting(params: SpinParams, m_i=1):
    """Splitting (MHz) at B = 0 of the two levels carrying ``|+1, m_I>``/``|-1, m_I>``."""
    es = eigensystem(build_hamiltonian(params, FieldVector()))
    idx = [basis_index(1, m_i), basis_index(-1, m_i)]
    pop = np.sum(np.abs(es.vectors[idx, :]) ** 2, axis=0)
    a, b = np.argsort(pop)[-2:]
    return float(abs(es.values[a] - es.values[b]))


def flip_flop_floor(params: SpinParams, e_grid) -> float:
    """Smallest zero-field transition frequency of the hyperfine-split pair.

    For each strain value the splitting of the ``m_I = +1`` pair at B = 0
    is evaluated on the full Hamiltonian; the minimum over ``e_grid`` is
    returned (the ``m_I = -1`` pair is degenerate with it).
    """
    return min(zero_field_pair_splitting(params.with_strain(e), 1) for e in e_grid)
