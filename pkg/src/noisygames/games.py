"""Game definitions, strategy containers, canonical optima, and exact value
evaluation through the coefficient-space noise-transfer identity.

For players sharing n noisy maximally-entangled registers, the expectation of
A (x) B equals sum_x w(x) A_hat(x) B_hat(x), where A is expanded in the first
player's basis, B in the second player's transposed basis, and w(x) is the
per-index noise weight (rho^|x| for depolarizing).  All evaluations below use
this identity; dense joint-state evaluation is kept as a cross-check path.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .pauli import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    PauliExpansion,
    StandardBasis,
    ValidationError,
    default_basis,
    noisy_epr_expectation,
    normalized_trace,
    pauli_expand,
    require_hermitian,
)
from .states import (
    BipartiteState,
    CorrelationSpectrum,
    make_depolarized_epr,
)

SPECTRAL_NORM_SLACK = 1e-9
POVM_ATOL = 1e-9


# ---------------------------------------------------------------------------
# operator helpers


def embed_on_register(op: np.ndarray, n: int, register: int, m: int = 2) -> np.ndarray:
    """Place a single-register operator on register `register` (1-based) of n,
    identity elsewhere."""
    if not 1 <= register <= n:
        raise ValidationError(f"register {register} out of range 1..{n}")
    left = np.eye(m ** (register - 1))
    right = np.eye(m ** (n - register))
    return np.kron(np.kron(left, op), right)


def conjugate_on_register(op: np.ndarray, u: np.ndarray, n: int, register: int,
                          m: int = 2) -> np.ndarray:
    """Conjugate an n-register operator by a unitary acting on one register."""
    ufull = embed_on_register(u, n, register, m)
    return ufull @ op @ ufull.conj().T


def spectral_norm(op: np.ndarray) -> float:
    return float(np.linalg.norm(op, 2))


def require_observable(op: np.ndarray, dim: int, label: str = "observable") -> np.ndarray:
    op = require_hermitian(op)
    if op.shape[0] != dim:
        raise ValidationError(f"{label} has dimension {op.shape[0]}, expected {dim}")
    if spectral_norm(op) > 1.0 + SPECTRAL_NORM_SLACK:
        raise ValidationError(f"{label} has spectral norm {spectral_norm(op):.6f} > 1")
    return op


def require_povm(elements: np.ndarray, dim: int, label: str = "POVM") -> np.ndarray:
    elements = np.asarray(elements, dtype=complex)
    if elements.ndim != 3 or elements.shape[1:] != (dim, dim):
        raise ValidationError(f"{label} must be a stack of {dim}x{dim} matrices")
    total = np.zeros((dim, dim), dtype=complex)
    for e in elements:
        require_hermitian(e)
        if np.linalg.eigvalsh(e).min() < -POVM_ATOL:
            raise ValidationError(f"{label} element is not PSD")
        total += e
    if np.abs(total - np.eye(dim)).max() > POVM_ATOL:
        raise ValidationError(f"{label} does not sum to identity")
    return elements


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    q, r = np.linalg.qr(g)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def random_traceless_binary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-conjugated balanced sign observable: traceless, squares to I."""
    if d % 2:
        raise ValidationError("traceless binary observables need even dimension")
    signs = np.concatenate([np.ones(d // 2), -np.ones(d // 2)])
    u = haar_unitary(d, rng)
    return (u * signs) @ u.conj().T


def random_bounded_observable(d: int, rng: np.random.Generator) -> np.ndarray:
    """Random traceless Hermitian rescaled to unit spectral norm."""
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    h = (g + g.conj().T) / 2
    h -= np.trace(h).real / d * np.eye(d)
    return h / spectral_norm(h)


def add_trace_bias(op: np.ndarray, bias: float) -> np.ndarray:
    """Mix an identity component in: the result has normalized trace `bias`
    (for traceless input) and keeps spectral norm at most 1."""
    d = op.shape[0]
    return (1 - abs(bias)) * op + bias * np.eye(d)


# ---------------------------------------------------------------------------
# strategies


@dataclass
class ChshStrategy:
    """Two observables per player on n qubit registers per side."""

    n: int
    alice: tuple[np.ndarray, np.ndarray]
    bob: tuple[np.ndarray, np.ndarray]

    def __post_init__(self):
        d = 2 ** self.n
        self.alice = tuple(require_observable(a, d, f"P{i}") for i, a in enumerate(self.alice))
        self.bob = tuple(require_observable(b, d, f"Q{i}") for i, b in enumerate(self.bob))

    @property
    def dim(self) -> int:
        return 2 ** self.n

    def observables(self) -> dict:
        return {"P0": self.alice[0], "P1": self.alice[1],
                "Q0": self.bob[0], "Q1": self.bob[1]}


def canonical_chsh_observables() -> tuple:
    s2 = np.sqrt(2.0)
    return (SIGMA_Z, SIGMA_X, (SIGMA_Z + SIGMA_X) / s2, (SIGMA_Z - SIGMA_X) / s2)


def canonical_chsh_strategy(n: int, register: int = 1) -> ChshStrategy:
    """The optimal observables embedded on one register, identity elsewhere."""
    p0, p1, q0, q1 = canonical_chsh_observables()
    emb = lambda op: embed_on_register(op, n, register)
    return ChshStrategy(n, (emb(p0), emb(p1)), (emb(q0), emb(q1)))


def perturbed_chsh_strategy(n: int, register: int, theta: float) -> ChshStrategy:
    """Canonical strategy with both of the second player's observables rotated
    about the Bloch y-axis by theta on the active register."""
    base = canonical_chsh_strategy(n, register)
    w = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * SIGMA_Y
    bob = tuple(conjugate_on_register(q, w, n, register) for q in base.bob)
    return ChshStrategy(n, base.alice, bob)


def random_chsh_strategy(n: int, rng: np.random.Generator, kind: str = "binary",
                         trace_bias: float = 0.0) -> ChshStrategy:
    """Random strategy; kind 'binary' gives traceless binary observables,
    'bounded' general traceless contractions.  trace_bias mixes in identity
    components with random signs bounded by the given value."""
    d = 2 ** n
    maker = random_traceless_binary if kind == "binary" else random_bounded_observable
    ops = []
    for _ in range(4):
        op = maker(d, rng)
        if trace_bias:
            op = add_trace_bias(op, rng.uniform(-trace_bias, trace_bias))
        ops.append(op)
    return ChshStrategy(n, (ops[0], ops[1]), (ops[2], ops[3]))


MS_QUESTIONS = ("r1", "r2", "r3", "c1", "c2", "c3")

# optimal measurement table: entry (i, j) for rows i, columns j (1-based)
_MS_TABLE = None


def magic_square_table() -> np.ndarray:
    """3x3 array of commuting-structure two-qubit observables; rows multiply
    to +I, the first two columns to +I, the third column to -I."""
    global _MS_TABLE
    if _MS_TABLE is None:
        I2 = np.eye(2)
        X, Y, Z = SIGMA_X, SIGMA_Y, SIGMA_Z
        _MS_TABLE = np.array([
            [np.kron(X, I2), np.kron(I2, X), np.kron(X, X)],
            [np.kron(I2, Z), np.kron(Z, I2), np.kron(Z, Z)],
            [np.kron(X, Z), np.kron(Z, X), np.kron(Y, Y)],
        ])
    return _MS_TABLE


def ms_outcomes() -> list[tuple[int, int, int]]:
    """Outcome order for 8-element POVMs: index bits b1 b2 b3, answer 1-2b."""
    return [tuple(1 - 2 * b for b in bits)
            for bits in itertools.product((0, 1), repeat=3)]


def ms_question_variables(question: str) -> list[tuple[int, int]]:
    """Variables (i, j) covered by a question, in answer-slot order."""
    kind, idx = question[0], int(question[1])
    if kind == "r":
        return [(idx, j) for j in (1, 2, 3)]
    return [(i, idx) for i in (1, 2, 3)]


def ms_parity_target(question: str) -> int:
    return -1 if question == "c3" else 1


def variable_slot(question: str, i: int, j: int) -> int:
    """1-based answer slot of variable (i, j) within a question, or raise."""
    for slot, var in enumerate(ms_question_variables(question), start=1):
        if var == (i, j):
            return slot
    raise ValidationError(f"variable ({i},{j}) is not part of question {question}")


@dataclass
class MagicSquareStrategy:
    """Alice: one 8-outcome POVM per row/column question; Bob: nine observables
    on n four-dimensional registers per side."""

    n: int
    alice_povms: dict
    bob_observables: dict

    def __post_init__(self):
        d = 4 ** self.n
        for q in MS_QUESTIONS:
            if q not in self.alice_povms:
                raise ValidationError(f"missing POVM for question {q}")
            self.alice_povms[q] = require_povm(np.asarray(self.alice_povms[q]), d, f"POVM {q}")
            if self.alice_povms[q].shape[0] != 8:
                raise ValidationError(f"POVM {q} must have 8 outcomes")
        for i in (1, 2, 3):
            for j in (1, 2, 3):
                if (i, j) not in self.bob_observables:
                    raise ValidationError(f"missing observable for variable ({i},{j})")
                self.bob_observables[(i, j)] = require_observable(
                    self.bob_observables[(i, j)], d, f"Q{i}{j}")

    @property
    def dim(self) -> int:
        return 4 ** self.n


def derived_observable(povm: np.ndarray, slot: int) -> np.ndarray:
    """Signed sum over outcomes of an 8-outcome POVM for one answer slot."""
    povm = np.asarray(povm)
    if povm.shape[0] != 8:
        raise ValidationError("derived observables are defined for 8-outcome POVMs")
    if slot not in (1, 2, 3):
        raise ValidationError(f"slot must be 1, 2 or 3, got {slot}")
    signs = np.array([a[slot - 1] for a in ms_outcomes()], dtype=float)
    return np.tensordot(signs, povm, axes=1)


def parity_mass_operator(povm: np.ndarray, target: int) -> np.ndarray:
    """Sum of POVM elements whose outcome parity matches the target."""
    mask = np.array([np.prod(a) == target for a in ms_outcomes()], dtype=float)
    return np.tensordot(mask, np.asarray(povm), axes=1)


def parity_restricted_observable(povm: np.ndarray, slot: int, target: int) -> np.ndarray:
    signs = np.array([a[slot - 1] if np.prod(a) == target else 0.0 for a in ms_outcomes()])
    return np.tensordot(signs, np.asarray(povm), axes=1)


def _commuting_projector_povm(observables: list[np.ndarray]) -> np.ndarray:
    """8-outcome POVM from three commuting binary observables: products of
    their spectral projectors, in ms_outcomes order."""
    d = observables[0].shape[0]
    elems = []
    for a in ms_outcomes():
        e = np.eye(d, dtype=complex)
        for val, obs in zip(a, observables):
            e = e @ (np.eye(d) + val * obs) / 2
        elems.append((e + e.conj().T) / 2)
    return np.stack(elems)


def canonical_magic_square_strategy(n: int, register: int = 1) -> MagicSquareStrategy:
    """Table observables on one register; Alice POVMs are joint projectors of
    the three commuting observables per question, Bob uses transposes."""
    table = magic_square_table()
    povms = {}
    for q in MS_QUESTIONS:
        obs = [table[i - 1, j - 1] for (i, j) in ms_question_variables(q)]
        local = _commuting_projector_povm(obs)
        povms[q] = np.stack([embed_on_register(e, n, register, m=4) for e in local])
    bob = {(i, j): embed_on_register(table[i - 1, j - 1].T, n, register, m=4)
           for i in (1, 2, 3) for j in (1, 2, 3)}
    return MagicSquareStrategy(n, povms, bob)


def perturbed_magic_square_strategy(n: int, register: int, theta: float,
                                    only_variable: tuple | None = None) -> MagicSquareStrategy:
    """Canonical strategy with Bob observables conjugated by a first-qubit
    rotation on the active register (all nine, or a single variable)."""
    base = canonical_magic_square_strategy(n, register)
    w = np.kron(np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * SIGMA_Y,
                np.eye(2))
    bob = {}
    for key, q in base.bob_observables.items():
        if only_variable is None or key == only_variable:
            bob[key] = conjugate_on_register(q, w, n, register, m=4)
        else:
            bob[key] = q
    return MagicSquareStrategy(n, base.alice_povms, bob)


def random_magic_square_strategy(n: int, rng: np.random.Generator,
                                 kind: str = "projective",
                                 trace_bias: float = 0.0) -> MagicSquareStrategy:
    """Random strategies for bound probing.

    'projective': per question, a Haar-conjugated commuting triple of sign
    observables (traceless unless trace_bias skews the sign patterns);
    'mixed': projective smoothed toward the uniform POVM;
    'raw': Gaussian PSD elements renormalized into a POVM.
    """
    d = 4 ** n
    povms = {}
    for q in MS_QUESTIONS:
        if kind in ("projective", "mixed"):
            u = haar_unitary(d, rng)
            diags = []
            for _ in range(3):
                signs = np.concatenate([np.ones(d // 2), -np.ones(d // 2)])
                rng.shuffle(signs)
                if trace_bias:
                    flip = rng.random(d) < abs(trace_bias) / 2
                    signs[flip] = np.sign(trace_bias) or 1.0
                diags.append(signs)
            obs = [(u * dg) @ u.conj().T for dg in diags]
            povm = _commuting_projector_povm(obs)
            if kind == "mixed":
                lam = rng.uniform(0.0, 0.5)
                povm = (1 - lam) * povm + lam * np.eye(d) / 8
        else:
            gs = rng.normal(size=(8, d, d)) + 1j * rng.normal(size=(8, d, d))
            raw = np.stack([g @ g.conj().T for g in gs])
            total = raw.sum(axis=0)
            vals, vecs = np.linalg.eigh(total)
            inv_sqrt = (vecs * (1.0 / np.sqrt(vals))) @ vecs.conj().T
            povm = np.stack([inv_sqrt @ e @ inv_sqrt for e in raw])
        povms[q] = povm
    bob = {}
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            op = random_traceless_binary(d, rng)
            if trace_bias:
                op = add_trace_bias(op, rng.uniform(-trace_bias, trace_bias))
            bob[(i, j)] = op
    return MagicSquareStrategy(n, povms, bob)


def pair_key(i: int, y: int, j: int, z: int) -> tuple:
    """Canonical unordered key for the pair question {(i,y),(j,z)}."""
    if i == j:
        raise ValidationError("pair questions need distinct indices")
    return (i, y, j, z) if i < j else (j, z, i, y)


def pair_outcome_index(a_first: int, a_second: int) -> int:
    """Outcome index for answers (first-index, second-index) in {-1, 1}."""
    return 2 * ((1 - a_first) // 2) + (1 - a_second) // 2


def marginal_pair_observable(povm: np.ndarray, side: str) -> np.ndarray:
    """Signed marginal of a 4-outcome pair POVM over one index slot."""
    povm = np.asarray(povm)
    if povm.shape[0] != 4:
        raise ValidationError("pair marginals are defined for 4-outcome POVMs")
    if side == "first":
        signs = np.array([1.0, 1.0, -1.0, -1.0])
    elif side == "second":
        signs = np.array([1.0, -1.0, 1.0, -1.0])
    else:
        raise ValidationError("side must be 'first' or 'second'")
    return np.tensordot(signs, povm, axes=1)


@dataclass
class TwoOutOfNStrategy:
    """Per-index single observables plus pair POVMs for both players on
    n_prime qubit registers per side.  Pair POVMs are keyed by the canonical
    (i, y, j, z) form with i < j, outcomes ordered by pair_outcome_index."""

    n: int
    n_prime: int
    alice_singles: dict
    bob_singles: dict
    alice_pair_povms: dict
    bob_pair_povms: dict

    def __post_init__(self):
        if self.n_prime < self.n:
            raise ValidationError("need at least as many registers as indices")
        d = 2 ** self.n_prime
        for i in range(1, self.n + 1):
            for x in (0, 1):
                self.alice_singles[(i, x)] = require_observable(
                    self.alice_singles[(i, x)], d, f"P[{i},{x}]")
                self.bob_singles[(i, x)] = require_observable(
                    self.bob_singles[(i, x)], d, f"Q[{i},{x}]")
        for povms in (self.alice_pair_povms, self.bob_pair_povms):
            for i in range(1, self.n + 1):
                for j in range(i + 1, self.n + 1):
                    for y in (0, 1):
                        for z in (0, 1):
                            key = (i, y, j, z)
                            if key not in povms:
                                raise ValidationError(f"missing pair POVM {key}")
                            povms[key] = require_povm(np.asarray(povms[key]), d,
                                                      f"pair POVM {key}")

    @property
    def dim(self) -> int:
        return 2 ** self.n_prime

    def pair_povm(self, player: str, i: int, y: int, j: int, z: int) -> np.ndarray:
        povms = self.alice_pair_povms if player == "alice" else self.bob_pair_povms
        return povms[pair_key(i, y, j, z)]

    def pair_marginal(self, player: str, i: int, y: int, j: int, z: int) -> np.ndarray:
        """Signed marginal observable for index i of pair question {(i,y),(j,z)}."""
        key = pair_key(i, y, j, z)
        side = "first" if key[0] == i else "second"
        return marginal_pair_observable(self.pair_povm(player, i, y, j, z), side)


def _pair_basis_observable(y: int) -> np.ndarray:
    return (SIGMA_Z + (1 if y == 0 else -1) * SIGMA_X) / np.sqrt(2.0)


def canonical_two_out_of_n_strategy(n: int, n_prime: int | None = None,
                                    registers: list[int] | None = None) -> TwoOutOfNStrategy:
    """Index i plays the canonical qubit strategy on register registers[i-1]."""
    n_prime = n if n_prime is None else n_prime
    registers = list(range(1, n + 1)) if registers is None else list(registers)
    if len(registers) != n:
        raise ValidationError("need one register per index")
    singles = {}
    for i in range(1, n + 1):
        reg = registers[i - 1]
        singles[(i, 0)] = embed_on_register(SIGMA_Z, n_prime, reg)
        singles[(i, 1)] = embed_on_register(SIGMA_X, n_prime, reg)
    pair_povms = {}
    d = 2 ** n_prime
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for y in (0, 1):
                for z in (0, 1):
                    oi = embed_on_register(_pair_basis_observable(y), n_prime, registers[i - 1])
                    oj = embed_on_register(_pair_basis_observable(z), n_prime, registers[j - 1])
                    elems = []
                    for a in (1, -1):
                        for b in (1, -1):
                            e = (np.eye(d) + a * oi) / 2 @ (np.eye(d) + b * oj) / 2
                            elems.append((e + e.conj().T) / 2)
                    pair_povms[(i, y, j, z)] = np.stack(elems)
    return TwoOutOfNStrategy(n, n_prime, dict(singles), dict(singles),
                             {k: v.copy() for k, v in pair_povms.items()},
                             {k: v.copy() for k, v in pair_povms.items()})


def perturbed_two_out_of_n_strategy(n: int, theta: float,
                                    index: int = 1) -> TwoOutOfNStrategy:
    """Canonical strategy with everything the second player holds on the
    perturbed index's register conjugated by a y-axis rotation."""
    base = canonical_two_out_of_n_strategy(n)
    reg = index
    w = np.cos(theta / 2) * np.eye(2) - 1j * np.sin(theta / 2) * SIGMA_Y
    bob_singles = dict(base.bob_singles)
    for x in (0, 1):
        bob_singles[(index, x)] = conjugate_on_register(
            base.bob_singles[(index, x)], w, base.n_prime, reg)
    bob_pairs = {}
    for key, povm in base.bob_pair_povms.items():
        if key[0] == index or key[2] == index:
            bob_pairs[key] = np.stack([
                conjugate_on_register(e, w, base.n_prime, reg) for e in povm])
        else:
            bob_pairs[key] = povm
    return TwoOutOfNStrategy(n, base.n_prime, base.alice_singles, bob_singles,
                             base.alice_pair_povms, bob_pairs)


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class NoiseModel:
    """Per-index coefficient weights plus the bases they refer to."""

    basis_a: StandardBasis
    basis_b: StandardBasis
    weights: np.ndarray

    @classmethod
    def depolarizing(cls, rho: float, m: int = 2) -> "NoiseModel":
        if not 0.0 <= rho <= 1.0:
            raise ValidationError(f"fidelity parameter must lie in [0, 1], got {rho}")
        base = default_basis(m)
        w = np.full(m * m, rho)
        w[0] = 1.0
        return cls(base, base.transposed(), w)

    @classmethod
    def from_spectrum(cls, spectrum: CorrelationSpectrum) -> "NoiseModel":
        return cls(spectrum.basis_a, spectrum.basis_b, np.asarray(spectrum.values, dtype=float))


def resolve_noise(noise, m: int = 2) -> NoiseModel:
    if isinstance(noise, NoiseModel):
        return noise
    if isinstance(noise, CorrelationSpectrum):
        return NoiseModel.from_spectrum(noise)
    if np.isscalar(noise):
        return NoiseModel.depolarizing(float(noise), m)
    raise ValidationError(f"unsupported noise specification: {noise!r}")


class PairEvaluator:
    """Caches expansions so repeated pairings against the same operators are
    cheap; the workhorse behind every game value below."""

    def __init__(self, noise, m: int = 2):
        self.model = resolve_noise(noise, m)
        # keyed by id(); the cached entry keeps the array alive so ids are
        # never recycled under us
        self._cache_a: dict[int, tuple] = {}
        self._cache_b: dict[int, tuple] = {}

    def expand_a(self, op: np.ndarray) -> PauliExpansion:
        key = id(op)
        if key not in self._cache_a:
            self._cache_a[key] = (op, pauli_expand(op, self.model.basis_a))
        return self._cache_a[key][1]

    def expand_b(self, op: np.ndarray) -> PauliExpansion:
        key = id(op)
        if key not in self._cache_b:
            self._cache_b[key] = (op, pauli_expand(op, self.model.basis_b))
        return self._cache_b[key][1]

    def pair(self, op_a: np.ndarray, op_b: np.ndarray) -> float:
        """Expectation of op_a (x) op_b under the shared noisy state."""
        return noisy_epr_expectation(self.expand_a(op_a), self.expand_b(op_b),
                                     self.model.weights)


@dataclass
class GameValueReport:
    violation: float
    win_prob: float
    per_question: dict = field(default_factory=dict)


CHSH_SIGNS = {(0, 0): 1.0, (0, 1): 1.0, (1, 0): 1.0, (1, 1): -1.0}


def chsh_violation(strategy: ChshStrategy, noise) -> GameValueReport:
    """Value of the CHSH functional; win probability is 1/2 + violation/8."""
    if isinstance(noise, BipartiteState):
        return chsh_violation_dense(strategy, noise)
    ev = PairEvaluator(noise)
    per = {}
    total = 0.0
    for (x, y), sign in CHSH_SIGNS.items():
        corr = ev.pair(strategy.alice[x], strategy.bob[y])
        per[f"{x}{y}"] = corr
        total += sign * corr
    return GameValueReport(total, 0.5 + total / 8.0, per)


def chsh_violation_dense(strategy: ChshStrategy, state) -> GameValueReport:
    """Reference path: explicit joint-density-matrix evaluation."""
    if not isinstance(state, BipartiteState):
        state = make_depolarized_epr(float(state), strategy.n)
    per = {}
    total = 0.0
    for (x, y), sign in CHSH_SIGNS.items():
        joint = np.kron(strategy.alice[x], strategy.bob[y])
        corr = float(np.trace(joint @ state.density).real)
        per[f"{x}{y}"] = corr
        total += sign * corr
    return GameValueReport(total, 0.5 + total / 8.0, per)


@dataclass
class MagicSquareReport:
    overall: float
    parity_pass: float
    consistency_pass: float
    per_variable: dict = field(default_factory=dict)


def magic_square_value(strategy: MagicSquareStrategy, rho,
                       dense_state: BipartiteState | None = None) -> MagicSquareReport:
    """Winning probability of the noisy magic square game.

    The referee samples a row/column question uniformly, then one of its three
    variables; the players win if Alice's parity is correct and the shared
    variable's assignments agree.  With the first player's marginal maximally
    mixed, the joint pass probability per (question, variable) splits into a
    parity-mass term and a parity-restricted correlation term.
    """
    ev = None
    if dense_state is None:
        ev = PairEvaluator(rho, m=4)
    overall = 0.0
    parity = 0.0
    consistency = 0.0
    per_variable = {}

    def expect(op_a, op_b):
        if ev is not None:
            return ev.pair(op_a, op_b)
        return float(np.trace(np.kron(op_a, op_b) @ dense_state.density).real)

    for q in MS_QUESTIONS:
        povm = strategy.alice_povms[q]
        target = ms_parity_target(q)
        mass_op = parity_mass_operator(povm, target)
        mass = normalized_trace(mass_op)
        parity += mass / 6.0
        for slot, (i, j) in enumerate(ms_question_variables(q), start=1):
            bob = strategy.bob_observables[(i, j)]
            derived = derived_observable(povm, slot)
            cons = 0.5 + 0.5 * expect(derived, bob)
            consistency += cons / 18.0
            restricted = parity_restricted_observable(povm, slot, target)
            win = 0.5 * (mass + expect(restricted, bob))
            overall += win / 18.0
            per_variable[f"{q}:s{i}{j}"] = {"consistency": cons, "win": win}
    return MagicSquareReport(overall, parity, consistency, per_variable)


def magic_square_dense_state(rho: float, n: int) -> BipartiteState:
    """Joint state for the dense cross-check path (4-dim registers)."""
    return make_depolarized_epr(rho, n, pair_registers=True)


def two_out_of_n_value(strategy: TwoOutOfNStrategy, rho) -> GameValueReport:
    """Average CHSH pass probability over shared indices, role swap and
    questions; reported violation is 8 * (win - 1/2)."""
    ev = PairEvaluator(rho)
    n = strategy.n
    pair_totals = {}
    total = 0.0
    count = 0
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            acc = 0.0
            for y in (0, 1):
                for z in (0, 1):
                    r_bob = strategy.pair_marginal("bob", i, y, j, z)
                    t_alice = strategy.pair_marginal("alice", i, y, j, z)
                    for x in (0, 1):
                        sign = CHSH_SIGNS[(x, y)]
                        # single player Alice, pair player Bob
                        acc += 0.5 * (1 + sign * ev.pair(strategy.alice_singles[(i, x)], r_bob)) / 2
                        # roles exchanged
                        acc += 0.5 * (1 + sign * ev.pair(t_alice, strategy.bob_singles[(i, x)])) / 2
            value = acc / 8.0
            pair_totals[f"{i},{j}"] = value
            total += value
            count += 1
    win = total / count
    return GameValueReport(8 * (win - 0.5), win, pair_totals)


# ---------------------------------------------------------------------------
# trace error


def trace_error(strategy) -> float:
    """Largest absolute normalized trace over the game's observable list,
    including derived row/column and pair-marginal observables."""
    values = []
    if isinstance(strategy, ChshStrategy):
        values = [normalized_trace(o) for o in (*strategy.alice, *strategy.bob)]
    elif isinstance(strategy, MagicSquareStrategy):
        for q in MS_QUESTIONS:
            for slot in (1, 2, 3):
                values.append(normalized_trace(derived_observable(strategy.alice_povms[q], slot)))
        for obs in strategy.bob_observables.values():
            values.append(normalized_trace(obs))
    elif isinstance(strategy, TwoOutOfNStrategy):
        for ops in (strategy.alice_singles, strategy.bob_singles):
            values.extend(normalized_trace(o) for o in ops.values())
        for player in ("alice", "bob"):
            povms = strategy.alice_pair_povms if player == "alice" else strategy.bob_pair_povms
            for povm in povms.values():
                for side in ("first", "second"):
                    values.append(normalized_trace(marginal_pair_observable(povm, side)))
    else:
        raise ValidationError(f"unknown strategy type {type(strategy).__name__}")
    return float(np.abs(values).max())
