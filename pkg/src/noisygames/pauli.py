"""Matrix Fourier analysis over standard orthonormal bases.

Hermitian operators on n registers of local dimension m are expanded as
real coefficient vectors over a tensor-product basis whose first element
is the identity.  Depolarizing (and more general diagonal-correlation)
noise acts diagonally on these coefficients, which is what makes every
game-value and certificate computation in this package cheap: nothing
ever materializes a joint (m^n)^2 x (m^n)^2 operator.

Index convention: a multi-index x in [m^2]^n is serialized row-major with
register 1 as the most significant base-m^2 digit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

HERMITIAN_ATOL = 1e-10
COEFF_IMAG_ATOL = 1e-10


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


def _as_square(mat: np.ndarray) -> np.ndarray:
    mat = np.asarray(mat, dtype=complex)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {mat.shape}")
    return mat


def require_hermitian(mat: np.ndarray, atol: float = HERMITIAN_ATOL) -> np.ndarray:
    """Validate Hermiticity within `atol` and return the matrix as complex."""
    mat = _as_square(mat)
    dev = np.abs(mat - mat.conj().T).max()
    if dev > atol:
        raise ValidationError(f"matrix is not Hermitian (max deviation {dev:.3e})")
    return mat


def normalized_trace(mat: np.ndarray) -> float:
    """Trace divided by dimension, validated to be real for Hermitian input."""
    mat = require_hermitian(mat)
    return float(np.trace(mat).real) / mat.shape[0]


def hs_norm(mat: np.ndarray) -> float:
    """Dimension-normalized Frobenius norm, sqrt(normalized_trace(M M*))."""
    mat = np.asarray(mat, dtype=complex)
    return float(np.linalg.norm(mat)) / np.sqrt(mat.shape[0])


def hs_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Distance (1/sqrt(d))*||A - B||_F, the metric behind every closeness
    statement in this package."""
    a = _as_square(a)
    b = _as_square(b)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return hs_norm(a - b)


def hs_inner(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized Hilbert-Schmidt inner product Tr(A* B)/d (real part)."""
    a = _as_square(a)
    b = _as_square(b)
    if a.shape != b.shape:
        raise ValidationError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.tensordot(a.conj(), b, axes=2).real) / a.shape[0]


# ---------------------------------------------------------------------------
# standard orthonormal bases


@dataclass(frozen=True)
class StandardBasis:
    """An orthonormal Hermitian basis of m x m matrices with elements[0] = I.

    Orthonormality is with respect to the normalized Hilbert-Schmidt inner
    product, so every element except the identity is traceless.
    """

    m: int
    elements: np.ndarray  # (m*m, m, m) complex
    name: str = ""

    def __post_init__(self):
        elems = np.asarray(self.elements, dtype=complex)
        if elems.shape != (self.m * self.m, self.m, self.m):
            raise ValidationError(
                f"basis needs shape {(self.m**2, self.m, self.m)}, got {elems.shape}"
            )
        if np.abs(elems[0] - np.eye(self.m)).max() > HERMITIAN_ATOL:
            raise ValidationError("basis element 0 must be the identity")
        for e in elems:
            require_hermitian(e)
        gram = np.einsum("aij,bij->ab", elems.conj(), elems) / self.m
        if np.abs(gram - np.eye(self.m * self.m)).max() > HERMITIAN_ATOL:
            raise ValidationError("basis is not orthonormal under the normalized HS inner product")
        elems.setflags(write=False)
        object.__setattr__(self, "elements", elems)

    def transposed(self) -> "StandardBasis":
        """Element-wise transposed basis (used for the second player's side)."""
        return StandardBasis(self.m, self.elements.transpose(0, 2, 1).copy(),
                             name=self.name + "^T" if self.name else "")


_SIGMA = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=complex,
)

SIGMA_I, SIGMA_X, SIGMA_Y, SIGMA_Z = (_SIGMA[i].copy() for i in range(4))


def pauli_basis() -> StandardBasis:
    """The qubit basis (I, X, Y, Z)."""
    return StandardBasis(2, _SIGMA.copy(), name="pauli")


def two_qubit_pauli_basis() -> StandardBasis:
    """Sixteen products sigma_p (x) sigma_q, index 4*p + q, for 4-dim registers."""
    elems = np.stack([np.kron(_SIGMA[p], _SIGMA[q]) for p in range(4) for q in range(4)])
    return StandardBasis(4, elems, name="pauli2")


def default_basis(m: int) -> StandardBasis:
    if m == 2:
        return pauli_basis()
    if m == 4:
        return two_qubit_pauli_basis()
    raise ValidationError(f"no built-in basis for local dimension {m}")


# ---------------------------------------------------------------------------
# expansions


@dataclass
class PauliExpansion:
    """Real coefficient vector of a Hermitian operator over a tensor basis.

    coeffs is flat of length m^(2n), row-major in the multi-index x with
    register 1 as the most significant digit.  imag_residue records the
    largest imaginary part discarded when the coefficients were computed.
    """

    m: int
    n: int
    coeffs: np.ndarray
    basis: StandardBasis
    imag_residue: float = 0.0

    @property
    def dim(self) -> int:
        return self.m ** self.n

    def copy_with(self, coeffs: np.ndarray) -> "PauliExpansion":
        return PauliExpansion(self.m, self.n, coeffs, self.basis, self.imag_residue)

    def total_mass(self) -> float:
        """Sum of squared coefficients (equals normalized_trace(M^2))."""
        return float(self.coeffs @ self.coeffs)


@lru_cache(maxsize=64)
def _degree_vector(m2: int, n: int) -> np.ndarray:
    """degree[x] = number of nonzero base-m2 digits of x, for all m2^n indices."""
    deg = np.zeros(1, dtype=np.int64)
    nz = np.arange(m2) != 0
    for _ in range(n):
        deg = (deg[:, None] + nz[None, :]).reshape(-1)
    deg.setflags(write=False)
    return deg


def degree_vector(m: int, n: int) -> np.ndarray:
    return _degree_vector(m * m, n)


def index_digits(x: int, m: int, n: int) -> tuple[int, ...]:
    """Base-m^2 digits of a flat index, register 1 first."""
    m2 = m * m
    out = []
    for _ in range(n):
        out.append(x % m2)
        x //= m2
    return tuple(reversed(out))


def index_string(x: int, m: int, n: int) -> str:
    """Serialize a multi-index as base-m^2 digits, e.g. '301' for Z(x)I(x)X."""
    return "".join(f"{d:x}" if m > 2 else str(d) for d in index_digits(x, m, n))


def dominant_terms(exp: "PauliExpansion", count: int = 8) -> list:
    """Largest-magnitude coefficients as (base-m^2 digit string, value) pairs,
    the form coefficient data takes in reports."""
    order = np.argsort(np.abs(exp.coeffs))[::-1][:count]
    return [(index_string(int(x), exp.m, exp.n), float(exp.coeffs[x]))
            for x in order if abs(exp.coeffs[x]) > 0]


def infer_registers(dim: int, m: int) -> int:
    n = round(np.log(dim) / np.log(m))
    if m ** n != dim:
        raise ValidationError(f"dimension {dim} is not a power of the local dimension {m}")
    return n


def pauli_expand(mat: np.ndarray, basis: StandardBasis) -> PauliExpansion:
    """Expand a Hermitian matrix over the n-fold tensor power of `basis`.

    Uses a register-by-register tensor contraction, cost O(n m^2 m^(2n)),
    instead of the m^(4n) cost of taking m^(2n) individual traces.
    """
    mat = require_hermitian(mat)
    m = basis.m
    n = infer_registers(mat.shape[0], m)
    kern = basis.elements.conj() / m  # <B_k, .> per register
    t = mat.reshape((m,) * (2 * n))
    # interleave row/column axes: (i1..in, j1..jn) -> (i1, j1, i2, j2, ...)
    t = t.transpose([a for k in range(n) for a in (k, n + k)])
    for k in range(n):
        t = np.tensordot(kern, t, axes=([1, 2], [k, k + 1]))
    t = t.transpose(tuple(reversed(range(n))))
    flat = t.reshape(-1)
    residue = float(np.abs(flat.imag).max()) if flat.size else 0.0
    if residue > COEFF_IMAG_ATOL:
        raise ValidationError(f"coefficients have imaginary residue {residue:.3e}")
    return PauliExpansion(m, n, flat.real.copy(), basis, residue)


def pauli_expand_naive(mat: np.ndarray, basis: StandardBasis) -> PauliExpansion:
    """Per-coefficient trace oracle; O(m^(4n)), retained for cross-checks."""
    mat = require_hermitian(mat)
    m = basis.m
    n = infer_registers(mat.shape[0], m)
    d = mat.shape[0]
    m2 = m * m
    coeffs = np.empty(m2 ** n)
    for x in range(m2 ** n):
        bx = np.ones((1, 1), dtype=complex)
        for digit in index_digits(x, m, n):
            bx = np.kron(bx, basis.elements[digit])
        val = np.trace(bx.conj().T @ mat) / d
        coeffs[x] = val.real
    return PauliExpansion(m, n, coeffs, basis)


def pauli_reconstruct(exp: PauliExpansion) -> np.ndarray:
    """Rebuild the matrix sum_x coeffs(x) B_x; inverse of pauli_expand."""
    m, n = exp.m, exp.n
    m2 = m * m
    t = exp.coeffs.reshape((m2,) * n).astype(complex)
    for k in range(n):
        t = np.tensordot(t, exp.basis.elements, axes=([n - 1 - k], [0]))
    # axes are now (i_n, j_n, i_{n-1}, j_{n-1}, ..., i_1, j_1)
    perm = [2 * (n - 1 - k) for k in range(n)] + [2 * (n - 1 - k) + 1 for k in range(n)]
    d = m ** n
    return t.transpose(perm).reshape(d, d)


# ---------------------------------------------------------------------------
# noise action and degree manipulation in coefficient space


def apply_depolarizing_coeffs(exp: PauliExpansion, rho: float) -> PauliExpansion:
    """Scale each coefficient by rho^degree: the register-wise depolarizing
    channel in coefficient space."""
    if not 0.0 <= rho <= 1.0:
        raise ValidationError(f"fidelity parameter must lie in [0, 1], got {rho}")
    deg = degree_vector(exp.m, exp.n)
    return exp.copy_with(exp.coeffs * rho ** deg)


def register_weight_vector(per_index: np.ndarray, n: int) -> np.ndarray:
    """Flat weight vector w(x) = prod_k per_index[x_k] over all multi-indices."""
    per_index = np.asarray(per_index, dtype=float)
    w = np.ones(1)
    for _ in range(n):
        w = np.multiply.outer(w, per_index).reshape(-1)
    return w


def apply_spectrum_scaling(exp: PauliExpansion, per_index: np.ndarray) -> PauliExpansion:
    """Scale coefficients by prod_k per_index[x_k]; per_index[0] must be 1."""
    per_index = np.asarray(per_index, dtype=float)
    if per_index.shape != (exp.m ** 2,):
        raise ValidationError(
            f"need one weight per basis element ({exp.m ** 2}), got shape {per_index.shape}"
        )
    if abs(per_index[0] - 1.0) > 1e-12:
        raise ValidationError("identity component must carry weight 1")
    return exp.copy_with(exp.coeffs * register_weight_vector(per_index, exp.n))


def apply_general_scaling(exp: PauliExpansion, r: float, c: float) -> PauliExpansion:
    """Scale by r^(#digits in {1,2}) * c^(#digits >= 3) per multi-index.

    This is the coefficient action of diagonal-correlation noise whose two
    largest nontrivial singular values are r and whose remaining one is c.
    Requires a qubit-per-register basis.
    """
    if exp.m != 2:
        raise ValidationError("general two-class scaling is defined for m=2 registers")
    if not 0.0 < c <= r < 1.0:
        raise ValidationError(f"need 0 < c <= r < 1, got r={r}, c={c}")
    return apply_spectrum_scaling(exp, np.array([1.0, r, r, c]))


def degree_truncate(exp: PauliExpansion, keep_degrees) -> tuple[PauliExpansion, float]:
    """Zero out coefficients whose degree is not kept; returns the truncated
    expansion and the removed Parseval mass."""
    keep = set(int(k) for k in keep_degrees)
    deg = degree_vector(exp.m, exp.n)
    mask = np.isin(deg, sorted(keep))
    removed = float(exp.coeffs[~mask] @ exp.coeffs[~mask])
    out = exp.coeffs.copy()
    out[~mask] = 0.0
    return exp.copy_with(out), removed


@dataclass
class DegreeProfile:
    """Parseval mass per degree: weights[k] = sum over |x| = k of coeffs(x)^2."""

    weights: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def total(self) -> float:
        return float(self.weights.sum())


def degree_profile(exp: PauliExpansion) -> DegreeProfile:
    deg = degree_vector(exp.m, exp.n)
    weights = np.bincount(deg, weights=exp.coeffs ** 2, minlength=exp.n + 1)
    return DegreeProfile(weights)


def expansion_distance(a: PauliExpansion, b: PauliExpansion) -> float:
    """hs_distance of the reconstructed operators, computed in coefficient
    space (valid because the basis is orthonormal)."""
    if (a.m, a.n) != (b.m, b.n):
        raise ValidationError("expansions live on different register structures")
    diff = a.coeffs - b.coeffs
    return float(np.sqrt(diff @ diff))


def noisy_epr_expectation(exp_a: PauliExpansion, exp_b: PauliExpansion, noise) -> float:
    """Expectation of A (x) B on n shared noisy maximally-entangled registers.

    `exp_a` must be expanded in the first player's basis and `exp_b` in the
    second player's (transposed) basis; `noise` is either a fidelity
    parameter rho (depolarizing) or a length-m^2 per-index weight vector.
    The value is sum_x w(x) A_hat(x) B_hat(x).
    """
    if (exp_a.m, exp_a.n) != (exp_b.m, exp_b.n):
        raise ValidationError("operands live on different register structures")
    if np.isscalar(noise):
        w = float(noise) ** degree_vector(exp_a.m, exp_a.n)
    else:
        w = register_weight_vector(np.asarray(noise, dtype=float), exp_a.n)
    return float(np.sum(w * exp_a.coeffs * exp_b.coeffs))


# ---------------------------------------------------------------------------
# JSON forms (matrices as nested [re, im] pairs)


def matrix_to_json(mat: np.ndarray) -> list:
    mat = np.asarray(mat, dtype=complex)
    return [[[float(v.real), float(v.imag)] for v in row] for row in mat]


def matrix_from_json(data) -> np.ndarray:
    arr = np.asarray(data, dtype=float)
    if arr.ndim != 3 or arr.shape[2] != 2:
        raise ValidationError("matrix JSON must be a nested array of [re, im] pairs")
    return arr[..., 0] + 1j * arr[..., 1]


def expansion_to_json(exp: PauliExpansion) -> dict:
    return {"m": exp.m, "n": exp.n, "coeffs": [float(c) for c in exp.coeffs]}


def expansion_from_json(data, basis: StandardBasis | None = None) -> PauliExpansion:
    try:
        m, n = int(data["m"]), int(data["n"])
        coeffs = np.asarray(data["coeffs"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed expansion JSON: {exc}") from exc
    if coeffs.shape != ((m * m) ** n,):
        raise ValidationError("coefficient count does not match m, n")
    if basis is None:
        basis = default_basis(m)
    return PauliExpansion(m, n, coeffs, basis)
