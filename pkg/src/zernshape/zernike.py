"""Complex Zernike basis on the unit disk.

The basis is V_n^m(r, theta) = R_n^|m|(r) * exp(i m theta).  Everything here is
separable: a :class:`BasisTable` keeps the radial factor sampled on the radial
nodes of a :class:`PolarGrid` and applies the angular factor through an FFT,
so tables with thousands of modes stay small.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DomainError, FormatError, ShapeMismatchError

# Radial orders beyond this are rejected.  The Jacobi recurrence is stable far
# past it; the cap only guards against runaway memory in 1D tables.
MAX_ORDER = 2048
TABLE_FORMAT_VERSION = 1


class ZernikeIndex(NamedTuple):
    n: int
    m: int


def check_index(n: int, m: int) -> None:
    if n < 0 or abs(m) > n or (n - abs(m)) % 2:
        raise DomainError(f"invalid Zernike index (n={n}, m={m})")
    if n > MAX_ORDER:
        raise DomainError(f"radial order n={n} exceeds cap {MAX_ORDER} for (n={n}, m={m})")


def index_set(N: int, M: int) -> list[ZernikeIndex]:
    """All valid (n, m) with n <= N and |m| <= M, ascending n then ascending m."""
    if M < 0 or N < 0:
        raise DomainError(f"orders must be non-negative, got N={N}, M={M}")
    if M > N:
        raise DomainError(f"max angular frequency M={M} exceeds max radial order N={N}")
    if N > MAX_ORDER:
        raise DomainError(f"radial order N={N} exceeds cap {MAX_ORDER}")
    out = []
    for n in range(N + 1):
        for m in range(-min(n, M), min(n, M) + 1):
            if (n - abs(m)) % 2 == 0:
                out.append(ZernikeIndex(n, m))
    return out


def count_nonneg(N: int, M: int | None = None) -> int:
    """Number of indices with m >= 0 in ``index_set(N, M)``."""
    M = N if M is None else M
    return sum(1 for n in range(N + 1) for m in range(0, min(n, M) + 1) if (n - m) % 2 == 0)


def _jacobi_family(kmax: int, alpha: int, x: np.ndarray) -> np.ndarray:
    """P_k^(alpha, 0)(x) for k = 0..kmax by the three-term recurrence."""
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax == 0:
        return out
    a = float(alpha)
    out[1] = (a + 1.0) + (a + 2.0) * (x - 1.0) / 2.0
    for k in range(2, kmax + 1):
        c = 2 * k + a
        a1 = 2.0 * k * (k + a) * (c - 2.0)
        a2 = (c - 1.0) * a * a
        a3 = (c - 1.0) * c * (c - 2.0)
        a4 = 2.0 * (k + a - 1.0) * (k - 1.0) * c
        out[k] = ((a2 + a3 * x) * out[k - 1] - a4 * out[k - 2]) / a1
    return out


def radial_family(m: int, N: int, r) -> np.ndarray:
    """R_n^|m|(r) for n = |m|, |m|+2, ..., <= N stacked along axis 0.

    Uses R_n^m(r) = (-1)^k r^m P_k^(m,0)(1 - 2 r^2) with k = (n - m) / 2.
    """
    m = abs(int(m))
    if m > N:
        return np.empty((0,) + np.shape(r))
    check_index(N - (N - m) % 2, m)
    r = np.asarray(r, dtype=float)
    kmax = (N - m) // 2
    fam = _jacobi_family(kmax, m, 1.0 - 2.0 * r * r)
    signs = np.where(np.arange(kmax + 1) % 2 == 0, 1.0, -1.0)
    fam *= signs.reshape((-1,) + (1,) * r.ndim)
    if m:
        fam *= r**m
    return fam


def radial_poly(n: int, m: int, r):
    """Zernike radial polynomial R_n^|m|(r).

    Parameters
    ----------
    n : int
        Radial order.
    m : int
        Angular frequency; only its magnitude matters.
    r : float or ndarray
        Radius in [0, 1].

    Raises
    ------
    DomainError
        If ``(n, m)`` is not a valid Zernike index.
    """
    check_index(n, m)
    fam = radial_family(m, n, r)
    val = fam[-1]
    return float(val) if np.ndim(val) == 0 else val


def _angular(m: int, theta):
    t = abs(m) * np.asarray(theta, dtype=float)
    s = np.sin(t)
    return np.cos(t) + 1j * (s if m >= 0 else -s)


def basis_eval(idx, r, theta):
    """V_n^m(r, theta) = R_n^|m|(r) exp(i m theta)."""
    n, m = idx
    val = radial_poly(n, m, r) * _angular(m, theta)
    return complex(val) if np.ndim(val) == 0 else val


@dataclass(frozen=True, eq=False)
class PolarGrid:
    """Tensor quadrature grid on the unit disk for the measure r dr dtheta.

    ``radial_weights`` already include the factor r, so
    ``sum(radial_weights) * 2*pi`` approximates the disk area.
    """

    radial_nodes: np.ndarray
    angular_nodes: np.ndarray
    radial_weights: np.ndarray
    angular_weight: float
    rule: str
    angular_offset: float

    @property
    def n_radial(self) -> int:
        return len(self.radial_nodes)

    @property
    def n_angular(self) -> int:
        return len(self.angular_nodes)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_radial, self.n_angular)

    @property
    def key(self) -> str:
        return f"{self.rule}-{self.n_radial}x{self.n_angular}-o{self.angular_offset:g}"

    @property
    def area_tolerance(self) -> float:
        # midpoint sums of r carry an O(h^2) error; Gauss is exact.
        return 1e-12 if self.rule == "gauss" else 2.0 / self.n_radial**2

    def max_exact_order(self) -> int:
        """Largest n for which products R_n R_n' r integrate exactly."""
        if self.rule == "gauss":
            return self.n_radial - 1
        return 0

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        return np.meshgrid(self.radial_nodes, self.angular_nodes, indexing="ij")

    def cell_weights(self) -> np.ndarray:
        return np.broadcast_to(self.radial_weights[:, None] * self.angular_weight, self.shape)

    def to_dict(self) -> dict:
        return {"rule": self.rule, "n_radial": self.n_radial, "n_angular": self.n_angular,
                "angular_offset": self.angular_offset}


def polar_grid(n_radial: int = 256, n_angular: int = 512, rule: str = "gauss",
               angular_offset: float = 0.5) -> PolarGrid:
    """Build a disk quadrature grid.

    ``rule`` is ``"gauss"`` (Gauss-Legendre in r, exact for polynomials of
    degree < 2*n_radial) or ``"midpoint"`` (uniform midpoints with weights
    r_i * dr).  Angular nodes are uniform, shifted by ``angular_offset``
    cells from theta = 0.
    """
    if n_radial < 1 or n_angular < 1:
        raise DomainError("grid resolutions must be positive")
    if not 0.0 <= angular_offset < 1.0:
        raise DomainError("angular_offset must lie in [0, 1)")
    if rule == "gauss":
        x, w = np.polynomial.legendre.leggauss(n_radial)
        r = (x + 1.0) / 2.0
        wr = w / 2.0 * r
    elif rule == "midpoint":
        h = 1.0 / n_radial
        r = (np.arange(n_radial) + 0.5) * h
        wr = r * h
    else:
        raise DomainError(f"unknown radial rule {rule!r}")
    dt = 2.0 * np.pi / n_angular
    theta = (np.arange(n_angular) + angular_offset) * dt
    for a in (r, theta, wr):
        a.setflags(write=False)
    return PolarGrid(r, theta, wr, dt, rule, float(angular_offset))


def grid_from_dict(d: dict) -> PolarGrid:
    return polar_grid(int(d["n_radial"]), int(d["n_angular"]), d["rule"], float(d["angular_offset"]))


DEFAULT_GRID_SPEC = {"n_radial": 256, "n_angular": 512, "rule": "gauss", "angular_offset": 0.5}


def default_grid() -> PolarGrid:
    return polar_grid(**DEFAULT_GRID_SPEC)


def _same_grid(a: PolarGrid, b: PolarGrid) -> bool:
    return a is b or (a.key == b.key and np.array_equal(a.radial_nodes, b.radial_nodes))


def check_same_grid(a: PolarGrid, b: PolarGrid) -> None:
    if not _same_grid(a, b):
        raise ShapeMismatchError(f"grid mismatch: {a.key} vs {b.key}")


def disk_inner_product(f, g, grid: PolarGrid) -> complex:
    """Quadrature of f * conj(g) * r dr dtheta over the disk."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != grid.shape or g.shape != grid.shape:
        raise ShapeMismatchError(f"fields {f.shape} and {g.shape} do not match grid {grid.shape}")
    inner = (f * np.conj(g)).sum(axis=1) * grid.angular_weight
    return complex(np.dot(grid.radial_weights, inner))


@dataclass(frozen=True, eq=False)
class BasisTable:
    """Precomputed Zernike basis over a grid.

    ``radial[k]`` holds R_{n_k}^{|m_k|} at the grid's radial nodes; the full
    complex plane for index k is ``plane(k)``.  Planes are never stored in
    bulk because tables for long encodings would not fit in memory.
    """

    N: int
    M: int
    indices: tuple
    radial: np.ndarray
    grid: PolarGrid
    _pos: dict = field(repr=False)

    def __len__(self) -> int:
        return len(self.indices)

    def position(self, n: int, m: int) -> int:
        return self._pos[(n, m)]

    @cached_property
    def n_array(self) -> np.ndarray:
        return np.array([i.n for i in self.indices])

    @cached_property
    def m_array(self) -> np.ndarray:
        return np.array([i.m for i in self.indices])

    @cached_property
    def nonneg(self) -> np.ndarray:
        """Positions of the m >= 0 indices, in canonical order."""
        return np.flatnonzero(self.m_array >= 0)

    @cached_property
    def mirror(self) -> np.ndarray:
        """``mirror[k]`` is the position of (n_k, -m_k)."""
        return np.array([self._pos[(i.n, -i.m)] for i in self.indices])

    def plane(self, k: int) -> np.ndarray:
        m = self.indices[k].m
        return self.radial[k][:, None] * _angular(m, self.grid.angular_nodes)[None, :]

    @property
    def samples(self) -> np.ndarray:
        """All basis planes, shape (len, n_radial, n_angular).  Small tables only."""
        return np.stack([self.plane(k) for k in range(len(self))])

    def project(self, values: np.ndarray) -> np.ndarray:
        """Raw inner products <f, V_k> for a real field on the grid (no normalisation)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.grid.shape:
            raise ShapeMismatchError(f"field shape {values.shape} does not match grid {self.grid.shape}")
        spec = self._angular_spectrum(values)
        out = np.empty(len(self), dtype=complex)
        pos = self.nonneg
        cols = spec[:, self.m_array[pos]]
        out[pos] = np.einsum("i,ki,ik->k", self.grid.radial_weights, self.radial[pos], cols)
        neg = np.flatnonzero(self.m_array < 0)
        out[neg] = np.conj(out[self.mirror[neg]])
        return out

    def _angular_spectrum(self, values: np.ndarray) -> np.ndarray:
        """S[i, m] = sum_j f(r_i, theta_j) exp(-i m theta_j) dtheta for m >= 0."""
        g = self.grid
        if self.M >= g.n_angular:
            raise ShapeMismatchError(f"M={self.M} aliases on {g.n_angular} angular nodes")
        spec = np.fft.rfft(values, axis=1)[:, : self.M + 1]
        m = np.arange(self.M + 1)
        shift = np.exp(-1j * m * g.angular_nodes[0])
        return spec * shift[None, :] * g.angular_weight

    def synthesize(self, coeffs: np.ndarray) -> np.ndarray:
        """Complex field sum_k c_k V_k on the grid."""
        coeffs = np.asarray(coeffs, dtype=complex)
        if coeffs.shape != (len(self),):
            raise ShapeMismatchError(f"expected {len(self)} coefficients, got {coeffs.shape}")
        g = self.grid
        nt = g.n_angular
        if 2 * self.M >= nt:
            raise ShapeMismatchError(f"M={self.M} aliases on {nt} angular nodes")
        spec = np.zeros((g.n_radial, nt), dtype=complex)
        for m in range(-self.M, self.M + 1):
            sel = np.flatnonzero(self.m_array == m)
            if sel.size == 0:
                continue
            prof = coeffs[sel] @ self.radial[sel]
            spec[:, m % nt] = prof * np.exp(1j * m * g.angular_nodes[0])
        return np.fft.ifft(spec, axis=1) * nt

    def evaluate(self, coeffs: np.ndarray, r: np.ndarray, theta: np.ndarray) -> np.ndarray:
        """Complex sum_k c_k V_k at arbitrary points (not restricted to the grid)."""
        coeffs = np.asarray(coeffs, dtype=complex)
        r = np.asarray(r, dtype=float)
        theta = np.asarray(theta, dtype=float)
        # radial profiles only depend on r; pixel lattices repeat radii many times
        ru, inv = np.unique(r.ravel(), return_inverse=True)
        th = theta.ravel()
        out = np.zeros(th.shape, dtype=complex)
        for m in range(0, self.M + 1):
            fam = radial_family(m, self.N, ru)
            for mm in ((m, -m) if m else (0,)):
                ks = [self._pos.get((m + 2 * j, mm)) for j in range(fam.shape[0])]
                c = np.array([coeffs[k] if k is not None else 0.0 for k in ks], dtype=complex)
                if not np.any(c):
                    continue
                prof = c @ fam
                out += prof[inv] * _angular(mm, th)
        return out.reshape(r.shape)

    def header(self) -> dict:
        return {"format_version": TABLE_FORMAT_VERSION, "N": self.N, "M": self.M,
                "grid": self.grid.to_dict()}


def build_basis_table(N: int, M: int, grid: PolarGrid | None = None) -> BasisTable:
    """Tabulate the radial factors of ``index_set(N, M)`` on ``grid``."""
    grid = default_grid() if grid is None else grid
    idx = index_set(N, M)
    radial = np.empty((len(idx), grid.n_radial))
    pos = {(i.n, i.m): k for k, i in enumerate(idx)}
    for m in range(M + 1):
        fam = radial_family(m, N, grid.radial_nodes)
        for j in range(fam.shape[0]):
            n = m + 2 * j
            radial[pos[(n, m)]] = fam[j]
            if m:
                radial[pos[(n, -m)]] = fam[j]
    radial.setflags(write=False)
    return BasisTable(N, M, tuple(idx), radial, grid, pos)


_TABLE_CACHE: dict = {}


def cached_table(N: int, M: int, grid: PolarGrid | None = None) -> BasisTable:
    """Process-wide memo of :func:`build_basis_table`; tables are immutable."""
    grid = default_grid() if grid is None else grid
    key = (N, M, grid.key)
    tab = _TABLE_CACHE.get(key)
    if tab is None:
        tab = _TABLE_CACHE[key] = build_basis_table(N, M, grid)
    return tab


_MAGIC = b"ZSBT"


def save_table(table: BasisTable, path) -> None:
    """Write a table as magic + JSON header + raw float64 radial samples."""
    header = json.dumps(table.header()).encode()
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(4, "little"))
        fh.write(header)
        fh.write(np.ascontiguousarray(table.radial, dtype="<f8").tobytes())
    tmp.replace(path)


def load_table(path) -> BasisTable:
    """Read a cached table; the cache is re-validated against a fresh build of one plane."""
    raw = Path(path).read_bytes()
    if raw[:4] != _MAGIC:
        raise FormatError(f"{path}: not a basis table")
    hlen = int.from_bytes(raw[4:8], "little")
    header = json.loads(raw[8 : 8 + hlen])
    if header.get("format_version") != TABLE_FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported table version {header.get('format_version')}")
    grid = grid_from_dict(header["grid"])
    idx = index_set(header["N"], header["M"])
    radial = np.frombuffer(raw[8 + hlen :], dtype="<f8")
    if radial.size != len(idx) * grid.n_radial:
        raise FormatError(f"{path}: truncated table payload")
    radial = radial.reshape(len(idx), grid.n_radial).copy()
    radial.setflags(write=False)
    pos = {(i.n, i.m): k for k, i in enumerate(idx)}
    k = len(idx) - 1
    check = radial_poly(idx[k].n, idx[k].m, grid.radial_nodes)
    if not np.array_equal(check, radial[k]):
        raise FormatError(f"{path}: cached samples disagree with a fresh evaluation")
    return BasisTable(header["N"], header["M"], tuple(idx), radial, grid, pos)


def table_path(directory, N: int, M: int, grid: PolarGrid) -> Path:
    return Path(directory) / f"basis_N{N}_M{M}_{grid.key}.zsbt"


def disk_cached_table(N: int, M: int, grid: PolarGrid | None = None, directory=None) -> BasisTable:
    """Like :func:`cached_table`, but also reads from and writes to ``directory``."""
    grid = default_grid() if grid is None else grid
    key = (N, M, grid.key)
    if key in _TABLE_CACHE or directory is None:
        return cached_table(N, M, grid)
    path = table_path(directory, N, M, grid)
    if path.exists():
        tab = load_table(path)
    else:
        tab = build_basis_table(N, M, grid)
        Path(directory).mkdir(parents=True, exist_ok=True)
        save_table(tab, path)
    _TABLE_CACHE[key] = tab
    return tab


def gram_matrix(table: BasisTable, indices: Sequence[int] | None = None) -> np.ndarray:
    """Quadrature Gram matrix <V_a, V_b> over the table's grid (exploits separability)."""
    ks = np.arange(len(table)) if indices is None else np.asarray(indices)
    g = table.grid
    rad = table.radial[ks] * np.sqrt(g.radial_weights)[None, :]
    radial_part = rad @ rad.T
    ms = table.m_array[ks]
    dm = ms[:, None] - ms[None, :]
    theta = g.angular_nodes
    ang = np.exp(1j * dm[..., None] * theta[None, None, :]).sum(axis=-1) * g.angular_weight
    return radial_part * ang
