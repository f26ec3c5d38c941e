"""
Differential forms on the flat periodic grid and the Lie-derivative algebra
acting on them.

Grades and their component layout (``d`` is the spatial dimension):

==================  ==========================  =====================
grade               components                  meaning
==================  ==========================  =====================
``scalar``          1                           b
``one_form``        d                           A . dx
``two_form``        3 in 3D, 1 in 2D            B . dS, or B dx1^dx2
``density``         1                           D d^dx
``vector_density``  d                           L2-dual of a 1-form in 2D
``one_form_density`` d                          momentum m . dx (x) d^dx
==================  ==========================  =====================

In 2D a ``two_form`` is a top form and transforms like a density.  In 3D the
L2-dual of a ``one_form`` is the ``two_form`` (a vector density); in 2D it
is a ``vector_density``.  Pairings are the componentwise Euclidean L2 pairing.

Every product is followed by two-thirds dealiasing.  For inputs whose
combined band stays below ``n/3`` the dealiasing is exact projection of the
continuum product, so operator identities hold to round-off.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .grid import GridMismatchError, PeriodicGrid, SpectralInterpolator, SpectralScalarField, random_bandlimited

SCALAR = "scalar"
ONE_FORM = "one_form"
TWO_FORM = "two_form"
DENSITY = "density"
VECTOR_DENSITY = "vector_density"
ONE_FORM_DENSITY = "one_form_density"

GRADES = (SCALAR, ONE_FORM, TWO_FORM, DENSITY, VECTOR_DENSITY, ONE_FORM_DENSITY)


class GradeError(ValueError):
    """Raised when an operation is undefined for the grade it was given."""


def n_components(grade: str, dim: int) -> int:
    if grade in (SCALAR, DENSITY):
        return 1
    if grade in (ONE_FORM, VECTOR_DENSITY, ONE_FORM_DENSITY):
        return dim
    if grade == TWO_FORM:
        return 3 if dim == 3 else 1
    raise GradeError(f"unknown grade {grade!r}")


def is_top(grade: str, dim: int) -> bool:
    return grade == DENSITY or (grade == TWO_FORM and dim == 2)


def dual_grade(grade: str, dim: int) -> str:
    """Grade of the L2-dual of ``grade``."""
    table = {
        SCALAR: DENSITY,
        DENSITY: SCALAR,
        ONE_FORM: TWO_FORM if dim == 3 else VECTOR_DENSITY,
        TWO_FORM: ONE_FORM if dim == 3 else SCALAR,
    }
    if grade == VECTOR_DENSITY and dim == 2:
        return ONE_FORM
    if grade not in table:
        raise GradeError(f"grade {grade!r} has no dual in V")
    return table[grade]


# -- array helpers -----------------------------------------------------------

def _grad_values(grid: PeriodicGrid, coeffs: np.ndarray) -> np.ndarray:
    """(c, *spec) coefficients -> (c, d, *shape) values of d_j of each component."""
    stack = np.stack([coeffs * ik for ik in grid.ik], axis=1)
    return grid.ifft(stack)


def _project(grid: PeriodicGrid, values: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    c = grid.fft(values) * grid.dealias_mask
    return grid.ifft(c), c


def _stack(components, grid: PeriodicGrid | None):
    arrays = []
    for comp in components:
        if isinstance(comp, SpectralScalarField):
            if grid is None:
                grid = comp.grid
            elif comp.grid != grid:
                raise GridMismatchError("components live on different grids")
            arrays.append(comp.values)
        else:
            arrays.append(np.asarray(comp, dtype=float))
    if grid is None:
        raise ValueError("grid must be given when components are plain arrays")
    data = np.stack(arrays) if arrays else np.zeros((0,) + grid.shape)
    grid.check_values(data)
    return grid, data


class VectorFieldOnGrid:
    """Vector field with ``d`` components on a periodic grid.

    The Jacobian ``jacobian[i, j] = d_j X_i`` and the divergence are computed
    spectrally on first use and cached.  When ``divergence_free`` is set the
    field is checked: ``||div X|| <= 1e-10 ||X||``.
    """

    def __init__(self, components, divergence_free: bool = False, grid: PeriodicGrid | None = None,
                 *, _coeffs=None, _jacobian=None):
        grid, data = _stack(components, grid)
        if data.shape[0] != grid.dims:
            raise ValueError(f"expected {grid.dims} components, got {data.shape[0]}")
        data.setflags(write=False)
        self.grid = grid
        self.data = data
        self._coeffs = _coeffs
        self._jacobian = _jacobian
        self.divergence_free = bool(divergence_free)
        if divergence_free:
            res = self.divergence_residual()
            if res > 1e-10:
                raise ValueError(f"vector field flagged divergence-free has relative divergence {res:.2e}")

    @classmethod
    def from_arrays(cls, grid: PeriodicGrid, data, divergence_free: bool = False) -> "VectorFieldOnGrid":
        return cls(np.asarray(data, dtype=float), divergence_free, grid)

    @classmethod
    def constant(cls, grid: PeriodicGrid, vector: Sequence[float]) -> "VectorFieldOnGrid":
        vec = np.asarray(vector, dtype=float)
        data = vec.reshape((-1,) + (1,) * grid.dims) * np.ones((grid.dims,) + grid.shape)
        return cls(data, True, grid)

    @classmethod
    def from_streamfunction(cls, psi: SpectralScalarField) -> "VectorFieldOnGrid":
        """2D velocity ``z x grad psi = (-d2 psi, d1 psi)``."""
        g = psi.grid
        if g.dims != 2:
            raise ValueError("stream functions define velocities only in 2D")
        c = psi.coefficients
        coeffs = np.stack([-g.ik[1] * c, g.ik[0] * c])
        return cls(g.ifft(coeffs), True, g, _coeffs=coeffs)

    @classmethod
    def from_potential(cls, potential: "VectorFieldOnGrid") -> "VectorFieldOnGrid":
        """3D velocity ``curl A`` from a vector potential (divergence-free)."""
        g = potential.grid
        if g.dims != 3:
            raise ValueError("vector potentials are used in 3D only")
        coeffs = _curl3_coeffs(g, potential.coeffs)
        return cls(g.ifft(coeffs), True, g, _coeffs=coeffs)

    @property
    def dims(self) -> int:
        return self.grid.dims

    @property
    def components(self) -> tuple[SpectralScalarField, ...]:
        return tuple(SpectralScalarField(self.grid, c) for c in self.data)

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = self.grid.fft(self.data)
        return self._coeffs

    @property
    def jacobian(self) -> np.ndarray:
        if self._jacobian is None:
            self._jacobian = _grad_values(self.grid, self.coeffs)
        return self._jacobian

    @property
    def divergence(self) -> np.ndarray:
        return np.einsum("ii...->...", self.jacobian)

    def norm(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.data**2, axis=0)) * self.grid.volume))

    def divergence_residual(self) -> float:
        scale = self.norm()
        if scale == 0:
            return 0.0
        div = self.divergence
        return float(np.sqrt(np.mean(div**2) * self.grid.volume)) / scale

    def is_constant(self, tol: float = 1e-13) -> bool:
        spread = np.ptp(self.data.reshape(self.dims, -1), axis=1).max()
        return bool(spread <= tol * max(1.0, np.abs(self.data).max()))

    def mean_vector(self) -> np.ndarray:
        return self.data.reshape(self.dims, -1).mean(axis=1)

    def interpolator(self) -> SpectralInterpolator:
        return SpectralInterpolator(self.grid, self.coeffs)

    def __mul__(self, s: float) -> "VectorFieldOnGrid":
        return combine([self], [s])

    __rmul__ = __mul__

    def __add__(self, other: "VectorFieldOnGrid") -> "VectorFieldOnGrid":
        return combine([self, other], [1.0, 1.0])

    def __neg__(self):
        return combine([self], [-1.0])

    def __repr__(self):
        return f"VectorFieldOnGrid(grid={self.grid.n}, norm={self.norm():.3e})"


def combine(fields: Sequence[VectorFieldOnGrid], weights: Sequence[float]) -> VectorFieldOnGrid:
    """Linear combination reusing cached spectra and Jacobians (no transforms)."""
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatchError("vector fields live on different grids")
    data = sum(w * f.data for f, w in zip(fields, weights))
    coeffs = sum(w * f.coeffs for f, w in zip(fields, weights))
    jac = sum(w * f.jacobian for f, w in zip(fields, weights))
    out = VectorFieldOnGrid(data, False, grid, _coeffs=coeffs, _jacobian=jac)
    out.divergence_free = all(f.divergence_free for f in fields)
    return out


class DifferentialForm:
    """Graded geometric quantity built from scalar components on one grid."""

    def __init__(self, grade: str, components, grid: PeriodicGrid | None = None, *, _coeffs=None):
        grid, data = _stack(components, grid)
        expected = n_components(grade, grid.dims)
        if data.shape[0] != expected:
            raise GradeError(f"{grade} in {grid.dims}D needs {expected} components, got {data.shape[0]}")
        data.setflags(write=False)
        self.grid = grid
        self.grade = grade
        self.data = data
        self._coeffs = _coeffs
        self._grad = None

    @classmethod
    def from_arrays(cls, grid: PeriodicGrid, grade: str, data) -> "DifferentialForm":
        return cls(grade, np.asarray(data, dtype=float), grid)

    @classmethod
    def from_coeffs(cls, grid: PeriodicGrid, grade: str, coeffs: np.ndarray) -> "DifferentialForm":
        return cls(grade, grid.ifft(coeffs), grid, _coeffs=coeffs)

    @classmethod
    def zeros(cls, grid: PeriodicGrid, grade: str) -> "DifferentialForm":
        return cls(grade, np.zeros((n_components(grade, grid.dims),) + grid.shape), grid)

    @property
    def dims(self) -> int:
        return self.grid.dims

    @property
    def components(self) -> tuple[SpectralScalarField, ...]:
        return tuple(SpectralScalarField(self.grid, c) for c in self.data)

    @property
    def coeffs(self) -> np.ndarray:
        if self._coeffs is None:
            self._coeffs = self.grid.fft(self.data)
        return self._coeffs

    @property
    def grad(self) -> np.ndarray:
        """``grad[i, j] = d_j q_i`` on the grid."""
        if self._grad is None:
            self._grad = _grad_values(self.grid, self.coeffs)
        return self._grad

    def norm(self) -> float:
        return float(np.sqrt(np.mean(np.sum(self.data**2, axis=0)) * self.grid.volume))

    def vector_proxy(self) -> VectorFieldOnGrid:
        if self.data.shape[0] != self.dims:
            raise GradeError(f"{self.grade} has no vector proxy in {self.dims}D")
        return VectorFieldOnGrid(self.data, False, self.grid, _coeffs=self._coeffs)

    def with_grade(self, grade: str) -> "DifferentialForm":
        return DifferentialForm(grade, self.data, self.grid, _coeffs=self._coeffs)

    def _same(self, other: "DifferentialForm"):
        if other.grid != self.grid:
            raise GridMismatchError("forms live on different grids")
        if other.grade != self.grade:
            raise GradeError(f"cannot combine {self.grade} with {other.grade}")

    def __add__(self, other):
        self._same(other)
        return DifferentialForm(self.grade, self.data + other.data, self.grid)

    def __sub__(self, other):
        self._same(other)
        return DifferentialForm(self.grade, self.data - other.data, self.grid)

    def __neg__(self):
        return DifferentialForm(self.grade, -self.data, self.grid)

    def __mul__(self, s: float):
        return DifferentialForm(self.grade, s * self.data, self.grid)

    __rmul__ = __mul__

    def __repr__(self):
        return f"DifferentialForm({self.grade}, grid={self.grid.n}, norm={self.norm():.3e})"


def pair(p: DifferentialForm, q: DifferentialForm) -> float:
    """Componentwise L2 pairing of two quantities with equal component count."""
    if p.grid != q.grid:
        raise GridMismatchError("forms live on different grids")
    if p.data.shape != q.data.shape:
        raise GradeError(f"cannot pair {p.grade} with {q.grade}")
    return float(np.mean(np.sum(p.data * q.data, axis=0)) * p.grid.volume)


def pair_vector(m: DifferentialForm, X: VectorFieldOnGrid) -> float:
    """Pairing of a one-form density with a vector field."""
    if m.grid != X.grid:
        raise GridMismatchError("operands live on different grids")
    if m.data.shape != X.data.shape:
        raise GradeError(f"cannot pair {m.grade} with a vector field")
    return float(np.mean(np.sum(m.data * X.data, axis=0)) * m.grid.volume)


def _curl3_coeffs(grid: PeriodicGrid, c: np.ndarray) -> np.ndarray:
    ik = grid.ik
    return np.stack([ik[1] * c[2] - ik[2] * c[1],
                     ik[2] * c[0] - ik[0] * c[2],
                     ik[0] * c[1] - ik[1] * c[0]])


def _check_grid(X, q):
    if X.grid != q.grid:
        raise GridMismatchError("operands live on different grids")


# -- exterior calculus ---------------------------------------------------------

def exterior_derivative(q: DifferentialForm) -> DifferentialForm:
    """``d q``: gradient, curl and divergence in vector-proxy form."""
    g, c, dim = q.grid, q.coeffs, q.dims
    if q.grade == SCALAR:
        return DifferentialForm.from_coeffs(g, ONE_FORM, np.stack([ik * c[0] for ik in g.ik]))
    if q.grade == ONE_FORM:
        if dim == 3:
            return DifferentialForm.from_coeffs(g, TWO_FORM, _curl3_coeffs(g, c))
        return DifferentialForm.from_coeffs(g, TWO_FORM, (g.ik[0] * c[1] - g.ik[1] * c[0])[None])
    if q.grade == TWO_FORM and dim == 3:
        return DifferentialForm.from_coeffs(g, DENSITY, sum(g.ik[a] * c[a] for a in range(3))[None])
    raise GradeError(f"exterior derivative is undefined for {q.grade} in {dim}D")


def _perp(X: np.ndarray) -> np.ndarray:
    # i_X (dx1 ^ dx2) = X1 dx2 - X2 dx1
    return np.stack([-X[1], X[0]])


def interior_product(X: VectorFieldOnGrid, q: DifferentialForm) -> DifferentialForm:
    """Insertion ``i_X q`` of a vector field into a k-form, k >= 1."""
    _check_grid(X, q)
    g, dim, x, v = q.grid, q.dims, X.data, q.data
    if q.grade == ONE_FORM:
        grade, out = SCALAR, np.sum(x * v, axis=0)[None]
    elif q.grade == TWO_FORM and dim == 3:
        grade, out = ONE_FORM, np.cross(v, x, axis=0)
    elif is_top(q.grade, dim):
        if dim == 3:
            grade, out = TWO_FORM, v[0] * x
        else:
            grade, out = ONE_FORM, v[0] * _perp(x)
    else:
        raise GradeError(f"interior product is undefined for {q.grade}")
    values, coeffs = _project(g, out)
    return DifferentialForm(grade, values, g, _coeffs=coeffs)


def _lie_closed_values(grade: str, dim: int, X: np.ndarray, jac: np.ndarray, div: np.ndarray,
                       q: np.ndarray, dq: np.ndarray) -> np.ndarray:
    """Vector-calculus Lie derivative on raw arrays (not dealiased).

    ``jac[i, j] = d_j X_i`` and ``dq[i, j] = d_j q_i``.
    """
    adv = np.einsum("j...,ij...->i...", X, dq)
    if grade == SCALAR:
        return adv
    if grade == ONE_FORM:
        return adv + np.einsum("j...,ji...->i...", q, jac)
    if grade in (VECTOR_DENSITY,) or (grade == TWO_FORM and dim == 3):
        return adv - np.einsum("j...,ij...->i...", q, jac) + q * div
    if is_top(grade, dim):
        return adv + q * div
    if grade == ONE_FORM_DENSITY:
        return adv + np.einsum("j...,ji...->i...", q, jac) + q * div
    raise GradeError(f"no Lie derivative for {grade} in {dim}D")


def lie_derivative(X: VectorFieldOnGrid, q: DifferentialForm, method: str = "cartan") -> DifferentialForm:
    """Lie derivative of ``q`` along ``X``.

    ``method="cartan"`` evaluates ``d(i_X q) + i_X(dq)``; ``method="closed"``
    uses the vector-calculus formulas

    * scalar: ``X . grad b``
    * one-form: ``(X . grad) A + A_j grad X^j``
    * two-form (3D) / vector density: ``(X . grad) B - (B . grad) X + B div X``
    * top forms: ``div(D X)``
    * one-form density: ``(X . grad) m + m_j grad X^j + m div X``

    The last two rows of the grade table only have the closed form; the
    Cartan request falls back to it.
    """
    _check_grid(X, q)
    dim = q.dims
    if method == "cartan" and q.grade in (SCALAR, ONE_FORM, TWO_FORM, DENSITY):
        if q.grade == SCALAR:
            return interior_product(X, exterior_derivative(q))
        if is_top(q.grade, dim):
            return exterior_derivative(interior_product(X, q)).with_grade(q.grade)
        out = exterior_derivative(interior_product(X, q)) + interior_product(X, exterior_derivative(q))
        return out
    if method not in ("cartan", "closed"):
        raise ValueError(f"unknown method {method!r}")
    vals = _lie_closed_values(q.grade, dim, X.data, X.jacobian, X.divergence, q.data, q.grad)
    values, coeffs = _project(q.grid, vals)
    return DifferentialForm(q.grade, values, q.grid, _coeffs=coeffs)


def lie_derivative_transpose(X: VectorFieldOnGrid, p: DifferentialForm) -> DifferentialForm:
    """L2 transpose of the Lie derivative, acting on the dual element ``p``.

    Integrating the derivation property against the flat volume gives
    ``<p, L_X q> = -<L_X p, q>`` with ``p`` transforming by the dual law,
    so the transpose is minus the Lie derivative in the dual grade.
    """
    _check_grid(X, p)
    if p.grade == ONE_FORM_DENSITY:
        raise GradeError("one-form densities are not dual elements of V")
    return -lie_derivative(X, p, method="closed")


def diamond(p: DifferentialForm, q: DifferentialForm) -> DifferentialForm:
    """Momentum map ``p <> q`` defined by ``<p <> q, X> = -<p, L_X q>``.

    Returns a ``one_form_density``.  Closed forms per grade of ``q``:

    * scalar b: ``-p grad b``
    * density D (and 2D two-form): ``D grad p``
    * one-form A: ``p_i (d_i A_j - d_j A_i) + A_j div p`` (= ``-p x curl A + A div p`` in 3D)
    * two-form B (3D): ``B x curl p - p div B``
    """
    _check_grid(p, q)
    dim, g = q.dims, q.grid
    if p.grade != dual_grade(q.grade, dim):
        raise GradeError(f"unsupported pairing {p.grade} <> {q.grade} in {dim}D")
    if q.grade == SCALAR:
        out = -p.data[0] * q.grad[0]
    elif is_top(q.grade, dim):
        out = q.data[0] * p.grad[0]
    elif q.grade == ONE_FORM:
        dA = q.grad  # dA[j, i] = d_i A_j
        divp = np.einsum("ii...->...", p.grad)
        out = np.einsum("i...,ji...->j...", p.data, dA) - np.einsum("i...,ij...->j...", p.data, dA)
        out = out + q.data * divp
    else:  # 3D two-form
        curl_p = g.ifft(_curl3_coeffs(g, p.coeffs))
        divB = np.einsum("ii...->...", q.grad)
        out = np.cross(q.data, curl_p, axis=0) - p.data * divB
    values, coeffs = _project(g, out)
    return DifferentialForm(ONE_FORM_DENSITY, values, g, _coeffs=coeffs)


def lie_dual(xi: VectorFieldOnGrid, q: DifferentialForm) -> DifferentialForm:
    """``i_xi d(i_xi q)``; defined as the zero scalar on 0-forms."""
    _check_grid(xi, q)
    if q.grade == SCALAR:
        return DifferentialForm.zeros(q.grid, SCALAR)
    return interior_product(xi, exterior_derivative(interior_product(xi, q)))


def _basis_fields(basis) -> list[VectorFieldOnGrid]:
    if hasattr(basis, "vector_fields"):
        return list(basis.vector_fields())
    return list(basis)


def lie_laplacian(basis, q: DifferentialForm, method: str = "double") -> DifferentialForm:
    """``sum_j L_{xi_j} L_{xi_j} q`` over the basis fields.

    ``method="dual"`` evaluates ``sum_j (delta_j d + d delta_j) q`` with
    ``delta_j = i_xi d i_xi`` instead; on 0-forms only the first term is kept.
    """
    fields = _basis_fields(basis)
    out = DifferentialForm.zeros(q.grid, q.grade)
    for xi in fields:
        _check_grid(xi, q)
        if method == "double":
            term = lie_derivative(xi, lie_derivative(xi, q))
        elif method == "dual":
            if q.grade == SCALAR:
                term = lie_dual(xi, exterior_derivative(q))
            elif is_top(q.grade, q.dims):
                term = exterior_derivative(lie_dual(xi, q)).with_grade(q.grade)
            else:
                term = lie_dual(xi, exterior_derivative(q)).with_grade(q.grade) + \
                    exterior_derivative(lie_dual(xi, q)).with_grade(q.grade)
        else:
            raise ValueError(f"unknown method {method!r}")
        out = out + term.with_grade(q.grade)
    return out


def helicity(v: DifferentialForm) -> float:
    """``integral v . curl v`` for a 3D one-form."""
    if v.dims != 3:
        raise GradeError("helicity is defined for 3D one-forms")
    if v.grade != ONE_FORM:
        raise GradeError(f"helicity needs a one-form, got {v.grade}")
    return pair(v, exterior_derivative(v).with_grade(ONE_FORM))


def pairing_identity_residual(p: DifferentialForm, q: DifferentialForm, X: VectorFieldOnGrid,
                              probes: Iterable[VectorFieldOnGrid] | None = None, n_probes: int = 10,
                              rng: np.random.Generator | None = None, probe_kmax: int = 2) -> float:
    """Relative residual of the momentum-map transport identity.

    Evaluates ``(L^T_X p) <> q - p <> (L_X q) + L_X (p <> q)`` paired with
    probe vector fields and returns the largest ratio of the pairing to the
    sum of the magnitudes of its three terms.
    """
    a = diamond(lie_derivative_transpose(X, p), q)
    b = diamond(p, lie_derivative(X, q))
    c = lie_derivative(X, diamond(p, q), method="closed")
    if probes is None:
        rng = rng if rng is not None else np.random.default_rng(0)
        probes = [random_vector_field(q.grid, probe_kmax, rng) for _ in range(n_probes)]
    worst = 0.0
    for eta in probes:
        ta, tb, tc = pair_vector(a, eta), pair_vector(b, eta), pair_vector(c, eta)
        scale = abs(ta) + abs(tb) + abs(tc)
        if scale == 0:
            continue
        worst = max(worst, abs(ta - tb + tc) / scale)
    return worst


# -- random inputs for property checks ---------------------------------------

def random_form(grid: PeriodicGrid, grade: str, kmax: int, rng: np.random.Generator) -> DifferentialForm:
    comps = [random_bandlimited(grid, kmax, rng).values for _ in range(n_components(grade, grid.dims))]
    return DifferentialForm(grade, np.stack(comps), grid)


def random_vector_field(grid: PeriodicGrid, kmax: int, rng: np.random.Generator,
                        divergence_free: bool = False) -> VectorFieldOnGrid:
    if not divergence_free:
        comps = [random_bandlimited(grid, kmax, rng).values for _ in range(grid.dims)]
        return VectorFieldOnGrid(np.stack(comps), False, grid)
    if grid.dims == 2:
        return VectorFieldOnGrid.from_streamfunction(random_bandlimited(grid, kmax, rng))
    pot = random_vector_field(grid, kmax, rng)
    return VectorFieldOnGrid.from_potential(pot)
