"""Self-testing engine: diagnostic distances, register-concentration
detection, and constructive unitary extraction for all three games, plus the
small matrix utilities the analysis rests on.

No pass/fail thresholds are hard-coded here: every function reports raw
distances (in the dimension-normalized Frobenius metric) and leaves
interpretation to the caller.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog

from .games import (
    ChshStrategy,
    MagicSquareStrategy,
    TwoOutOfNStrategy,
    chsh_violation,
    derived_observable,
    magic_square_table,
    magic_square_value,
    ms_parity_target,
    trace_error,
    two_out_of_n_value,
    variable_slot,
)
from .pauli import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ValidationError,
    apply_depolarizing_coeffs,
    apply_spectrum_scaling,
    default_basis,
    expansion_distance,
    hs_distance,
    hs_norm,
    normalized_trace,
    pauli_expand,
    require_hermitian,
)
from .states import CorrelationSpectrum, EprCanonicalization, canonicalize_to_epr

CONCENTRATION_FLOOR = 1e-12


# ---------------------------------------------------------------------------
# elementary diagnostics


def observable_scaling_residual(op: np.ndarray, rho: float, m: int = 2,
                                weights: np.ndarray | None = None,
                                basis=None) -> float:
    """Distance between the noise-scaled operator and rho times the operator.

    Zero exactly for traceless degree-one operators; grows with the Parseval
    mass the operator carries outside degree one.  `weights` switches from
    depolarizing to per-index diagonal-correlation scaling and then `rho`
    is the target multiplier.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError("scaling residual is defined for rho in (0, 1)")
    exp = pauli_expand(op, basis if basis is not None else default_basis(m))
    if weights is None:
        scaled = apply_depolarizing_coeffs(exp, rho)
    else:
        scaled = apply_spectrum_scaling(exp, weights)
    return expansion_distance(scaled, exp.copy_with(rho * exp.coeffs))


def anticommutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """(1/sqrt(d)) ||AB + BA||_F."""
    a, b = require_hermitian(a), require_hermitian(b)
    if a.shape != b.shape:
        raise ValidationError("dimension mismatch")
    return hs_norm(a @ b + b @ a)


def commutator_norm(a: np.ndarray, b: np.ndarray) -> float:
    """(1/sqrt(d)) ||AB - BA||_F."""
    a, b = require_hermitian(a), require_hermitian(b)
    if a.shape != b.shape:
        raise ValidationError("dimension mismatch")
    return hs_norm(a @ b - b @ a)


def bloch_vector(op: np.ndarray) -> np.ndarray:
    """Components of a traceless 2x2 Hermitian over (X, Y, Z)."""
    op = require_hermitian(op)
    if op.shape != (2, 2):
        raise ValidationError("Bloch vectors are defined for 2x2 operators")
    return np.array([
        float(np.trace(op @ SIGMA_X).real) / 2,
        float(np.trace(op @ SIGMA_Y).real) / 2,
        float(np.trace(op @ SIGMA_Z).real) / 2,
    ])


def bloch_relation(a: np.ndarray, b: np.ndarray) -> dict:
    """Anticommutation witness (dot product) and commutation witness (cross
    product norm) of the two Bloch vectors."""
    va, vb = bloch_vector(a), bloch_vector(b)
    return {"dot": float(va @ vb), "cross_norm": float(np.linalg.norm(np.cross(va, vb)))}


@dataclass
class BinaryApproximation:
    observable: np.ndarray
    distance: float


def nearest_binary_observable(op: np.ndarray) -> BinaryApproximation:
    """Spectral-sign rounding: eigenvalues >= 0 map to +1 (zero joins the
    positive projector), the rest to -1."""
    op = require_hermitian(op)
    vals, vecs = np.linalg.eigh(op)
    signs = np.where(vals >= 0, 1.0, -1.0)
    binary = (vecs * signs) @ vecs.conj().T
    return BinaryApproximation(binary, hs_distance(op, binary))


# ---------------------------------------------------------------------------
# register concentration


@dataclass
class RegisterConcentration:
    """Degree-one coefficient mass per register and the winning register.

    weights[j] is the root of the degree-one mass supported on register j+1;
    local_operators[j] is that register's normalized local part (unit
    normalized-HS norm) or None when the mass is negligible.  residual is the
    distance from the operator to its best single-register degree-one part,
    sqrt(total mass - weights[k]^2).
    """

    weights: np.ndarray
    register: int | None
    margin: float
    tie: bool
    local_operators: list
    residual: float
    total_mass: float


def register_concentration(op: np.ndarray, m: int = 2, basis=None) -> RegisterConcentration:
    exp = pauli_expand(op, basis if basis is not None else default_basis(m))
    n, m2 = exp.n, m * m
    coeffs = exp.coeffs.reshape((m2,) * n)
    weights = np.zeros(n)
    locals_: list = [None] * n
    base = exp.basis.elements
    selectors = []
    for j in range(n):
        sel = tuple(slice(1, m2) if k == j else 0 for k in range(n))
        selectors.append(sel)
        cvec = coeffs[sel]
        a_j = float(np.linalg.norm(cvec))
        weights[j] = a_j
        if a_j > CONCENTRATION_FLOOR:
            local = np.tensordot(cvec, base[1:], axes=1) / a_j
            locals_[j] = local
    total = exp.total_mass()
    if weights.max() <= CONCENTRATION_FLOOR:
        return RegisterConcentration(weights, None, 0.0, False, locals_,
                                     float(np.linalg.norm(coeffs)), total)
    order = np.argsort(weights)[::-1]
    k = int(order[0])
    runner = weights[order[1]] if n > 1 else 0.0
    margin = float(weights[k] - runner)
    tie = margin <= 1e-12
    # residual taken over the complementary coefficients directly; the
    # subtraction total - a_k^2 would turn 1e-16 dust into sqrt-scale noise
    complement = coeffs.copy()
    complement[selectors[k]] = 0.0
    residual = float(np.linalg.norm(complement))
    return RegisterConcentration(weights, k + 1, margin, tie, locals_, residual, total)


def _register_consensus(concs: dict) -> tuple[int | None, dict, bool]:
    """Each observable votes for its own winning register, weighted by the
    degree-one mass it holds there; disagreement is flagged."""
    votes = {}
    scores: dict[int, float] = {}
    for label, rc in concs.items():
        votes[label] = rc.register
        if rc.register is not None:
            scores[rc.register] = scores.get(rc.register, 0.0) + rc.weights[rc.register - 1] ** 2
    if not scores:
        return None, votes, False
    consensus = max(scores, key=scores.get)
    ambiguous = any(v is not None and v != consensus for v in votes.values())
    return consensus, votes, ambiguous


def _local_on_register(rc: RegisterConcentration, register: int | None):
    if register is None:
        return None
    return rc.local_operators[register - 1]


# ---------------------------------------------------------------------------
# constructive unitaries


@dataclass
class PauliPairExtraction:
    unitary: np.ndarray
    dist_z: float
    dist_x: float
    theta: float
    degenerate: bool = False


def pauli_pair_unitary(a: np.ndarray, b: np.ndarray) -> PauliPairExtraction:
    """Unitary conjugating a near-anticommuting traceless pair to (Z, X).

    The first operator is diagonalized onto Z; the second is then rotated
    about the z-axis to kill its y-component.  theta reports the rotation
    magnitude; the degenerate flag is raised when the second operator has no
    equatorial component to align.
    """
    a, b = require_hermitian(a), require_hermitian(b)
    if a.shape != (2, 2) or b.shape != (2, 2):
        raise ValidationError("pair extraction works on 2x2 observables")
    vals, vecs = np.linalg.eigh(a)
    u1 = vecs[:, ::-1].conj().T
    c = u1 @ b @ u1.conj().T
    c1, c2 = float(c[0, 1].real), float(-c[0, 1].imag)
    s = float(np.hypot(c1, c2))
    if s < 1e-9:
        u = u1
        theta, degenerate = 0.0, True
    else:
        phi = np.arctan2(c2, c1)
        u2 = np.cos(phi / 2) * np.eye(2) + 1j * np.sin(phi / 2) * SIGMA_Z
        u = u2 @ u1
        theta, degenerate = float(np.arccos(np.clip(c1 / s, -1, 1))), False
    return PauliPairExtraction(
        u,
        hs_distance(u @ a @ u.conj().T, SIGMA_Z),
        hs_distance(u @ b @ u.conj().T, SIGMA_X),
        theta,
        degenerate,
    )


@dataclass
class LocalUnitaryExtraction:
    unitary: np.ndarray
    dist_zi: float
    dist_xi: float
    dist_ix: float
    singular_values: np.ndarray
    near_singular: bool


def ms_local_unitary(a: np.ndarray, b: np.ndarray, c: np.ndarray) -> LocalUnitaryExtraction:
    """Unitary mapping a 4-dim triple (anticommuting pair plus an element
    commuting with both) near (Z(x)I, X(x)I, I(x)X).

    Construction: diagonalize the first operator into +-blocks, align the
    second's off-diagonal block by SVD, then rotate the common 2x2 block of
    the third onto X.
    """
    for op in (a, b, c):
        op = require_hermitian(op)
        if op.shape != (4, 4):
            raise ValidationError("this extraction works on 4x4 observables")
    vals, vecs = np.linalg.eigh(a)
    w = vecs[:, ::-1].conj().T  # a -> diag(desc) ~ Z (x) I
    bm = w @ b @ w.conj().T
    b12 = bm[:2, 2:]
    v, sing, wr = np.linalg.svd(b12)
    near_singular = bool(sing.min() < 1e-6)
    u1 = np.block([
        [v.conj().T, np.zeros((2, 2))],
        [np.zeros((2, 2)), wr],
    ]) @ w
    cm = u1 @ c @ u1.conj().T
    c1 = (cm[:2, :2] + cm[2:, 2:]) / 2
    c1 = c1 - np.trace(c1) / 2 * np.eye(2)
    cvals, cvecs = np.linalg.eigh(c1)
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    v1 = np.outer(plus, cvecs[:, 1].conj()) + np.outer(minus, cvecs[:, 0].conj())
    u = np.kron(np.eye(2), v1) @ u1
    i2 = np.eye(2)
    return LocalUnitaryExtraction(
        u,
        hs_distance(u @ a @ u.conj().T, np.kron(SIGMA_Z, i2)),
        hs_distance(u @ b @ u.conj().T, np.kron(SIGMA_X, i2)),
        hs_distance(u @ c @ u.conj().T, np.kron(i2, SIGMA_X)),
        sing,
        near_singular,
    )


# ---------------------------------------------------------------------------
# small closed forms and their oracles


def lp_min_closed_form(a, t1: float, t2: float) -> float:
    """Minimum of sum a_i x_i over x >= 0 with sum x_i = t1 and
    sum a_i^2 x_i = t2: (t2 + a_1 a_n t1) / (a_1 + a_n)."""
    a = np.asarray(a, dtype=float)
    if a.size < 1 or np.any(np.diff(a) > 1e-12):
        raise ValidationError("coefficients must be sorted in decreasing order")
    if a[-1] <= 0:
        raise ValidationError("coefficients must be positive")
    lo, hi = a[-1] ** 2 * t1, a[0] ** 2 * t1
    if not (lo - 1e-9 <= t2 <= hi + 1e-9):
        raise ValidationError(f"infeasible: t2={t2} outside [{lo}, {hi}]")
    return float((t2 + a[0] * a[-1] * t1) / (a[0] + a[-1]))


def lp_min_bruteforce(a, t1: float, t2: float) -> float:
    """Independent oracle: solve the same LP numerically."""
    a = np.asarray(a, dtype=float)
    res = linprog(c=a, A_eq=np.vstack([np.ones_like(a), a ** 2]),
                  b_eq=[t1, t2], bounds=[(0, None)] * a.size, method="highs")
    if not res.success:
        raise ValidationError(f"LP oracle failed: {res.message}")
    return float(res.fun)


@dataclass
class PovmProjectivityReport:
    pairwise_product_norms: dict
    idempotency_gaps: list
    wrong_parity_mass: float | None = None


def povm_projectivity_report(povm: np.ndarray, parity_target: int | None = None,
                             outcome_parities=None) -> PovmProjectivityReport:
    """How far the POVM is from a projective measurement: cross products
    (1/sqrt(d))||E_i E_j||_F and idempotency gaps (1/sqrt(d))||E_i^2 - E_i||_F.

    For parity-structured 8-outcome POVMs the normalized-trace mass on
    wrong-parity outcomes is reported as well.
    """
    povm = np.asarray(povm, dtype=complex)
    k = povm.shape[0]
    pairwise = {}
    for i in range(k):
        for j in range(i + 1, k):
            pairwise[f"{i},{j}"] = hs_norm(povm[i] @ povm[j])
    gaps = [hs_norm(e @ e - e) for e in povm]
    wrong = None
    if parity_target is not None:
        if outcome_parities is None:
            from .games import ms_outcomes
            outcome_parities = [int(np.prod(a)) for a in ms_outcomes()]
        wrong_ops = [e for e, p in zip(povm, outcome_parities) if p != parity_target]
        wrong = float(sum(normalized_trace(e) for e in wrong_ops)) if wrong_ops else 0.0
    return PovmProjectivityReport(pairwise, gaps, wrong)


# ---------------------------------------------------------------------------
# game self-tests


def _report_max(*groups) -> float:
    vals = []
    for g in groups:
        if g is None:
            continue
        if isinstance(g, dict):
            vals.extend(v for v in g.values() if np.isscalar(v))
        elif np.isscalar(g):
            vals.append(g)
        else:
            vals.extend(g)
    return float(max(vals)) if vals else 0.0


@dataclass
class ChshSelfTestReport:
    rho: float
    violation: float
    eps_v: float
    eps_tr: float
    scaling_residuals: dict
    anticommutators: dict
    relation_distances: dict
    concentration: dict
    register: int | None
    register_votes: dict
    register_ambiguous: bool
    extraction: dict
    max_distance: float


def _extract_pair(concs: dict, labels: tuple, register: int | None):
    if register is None:
        return None
    l0 = _local_on_register(concs[labels[0]], register)
    l1 = _local_on_register(concs[labels[1]], register)
    if l0 is None or l1 is None:
        return None
    return pauli_pair_unitary(l0, l1)


def chsh_selftest(strategy: ChshStrategy, rho: float) -> ChshSelfTestReport:
    """Full diagnostic report for a CHSH strategy on depolarized pairs.

    Distances other than the scaling residuals do not depend on rho; rho
    enters the gap eps_v and the scaling diagnostics.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError("self-testing is defined for rho in (0, 1)")
    report = chsh_violation(strategy, rho)
    eps_v = 2 * np.sqrt(2) * rho - report.violation
    obs = strategy.observables()
    scaling = {k: observable_scaling_residual(v, rho) for k, v in obs.items()}
    anti = {
        "alice": anticommutator_norm(*strategy.alice),
        "bob": anticommutator_norm(*strategy.bob),
    }
    s2 = np.sqrt(2.0)
    relations = {}
    for i in (0, 1):
        target = (strategy.bob[0] + (-1) ** i * strategy.bob[1]).T / s2
        relations[f"P{i}_vs_QT"] = hs_distance(strategy.alice[i], target)
    concs = {k: register_concentration(v, m=2) for k, v in obs.items()}
    register, votes, ambiguous = _register_consensus(concs)
    extraction = {
        "alice": _extract_pair(concs, ("P0", "P1"), register),
        "bob": _extract_pair(concs, ("Q0", "Q1"), register),
    }
    ext_d = [d for e in extraction.values() if e is not None for d in (e.dist_z, e.dist_x)]
    max_distance = _report_max(scaling, anti, relations,
                               [c.residual for c in concs.values()], ext_d)
    return ChshSelfTestReport(rho, report.violation, eps_v, trace_error(strategy),
                              scaling, anti, relations, concs, register, votes,
                              ambiguous, extraction, max_distance)


@dataclass
class MsSelfTestReport:
    rho: float
    overall: float
    eps_win: float
    eps_tr: float
    row_col_distances: dict
    p_vs_qt_distances: dict
    scaling_residuals: dict
    same_line_commutators: dict
    cross_anticommutators: dict
    product_distances: dict
    wrong_parity_mass: dict
    concentration: dict
    register: int | None
    register_votes: dict
    register_ambiguous: bool
    local_unitary: np.ndarray | None
    anchor_distances: dict
    pauli_distances: dict
    max_distance: float


def _ms_row_observable(strategy: MagicSquareStrategy, i: int, j: int) -> np.ndarray:
    return derived_observable(strategy.alice_povms[f"r{i}"], variable_slot(f"r{i}", i, j))


def _ms_col_observable(strategy: MagicSquareStrategy, i: int, j: int) -> np.ndarray:
    return derived_observable(strategy.alice_povms[f"c{j}"], variable_slot(f"c{j}", i, j))


def ms_selftest(strategy: MagicSquareStrategy, rho: float) -> MsSelfTestReport:
    """Full diagnostic report for a magic-square strategy.

    The extraction unitary is anchored on four observables: the (2,2), (1,1)
    and (1,2) locals fix the two-qubit frame up to a rotation about the
    second qubit's x-axis, which the (2,1) local then resolves; canonical
    strategies map onto the measurement table exactly.
    """
    if not 0.0 < rho < 1.0:
        raise ValidationError("self-testing is defined for rho in (0, 1)")
    value = magic_square_value(strategy, rho)
    eps_win = (1 + rho) / 2 - value.overall
    idx = [(i, j) for i in (1, 2, 3) for j in (1, 2, 3)]
    p_row = {(i, j): _ms_row_observable(strategy, i, j) for i, j in idx}
    p_col = {(i, j): _ms_col_observable(strategy, i, j) for i, j in idx}
    q_obs = strategy.bob_observables
    row_col = {f"s{i}{j}": hs_distance(p_row[(i, j)], p_col[(i, j)]) for i, j in idx}
    p_vs_qt = {f"s{i}{j}": hs_distance(p_row[(i, j)], q_obs[(i, j)].T) for i, j in idx}
    scaling = {}
    for i, j in idx:
        scaling[f"P{i}{j}"] = observable_scaling_residual(p_row[(i, j)], rho, m=4)
        scaling[f"Q{i}{j}"] = observable_scaling_residual(q_obs[(i, j)], rho, m=4)

    same_line = {}
    for i in (1, 2, 3):
        for j in (1, 2, 3):
            for j2 in range(j + 1, 4):
                same_line[f"row{i}:{j},{j2}"] = commutator_norm(p_row[(i, j)], p_row[(i, j2)])
                same_line[f"col{i}:{j},{j2}"] = commutator_norm(p_col[(j, i)], p_col[(j2, i)])
    cross = {}
    for (i, j) in idx:
        for (i2, j2) in idx:
            if (i, j) < (i2, j2) and i != i2 and j != j2:
                cross[f"s{i}{j},s{i2}{j2}"] = anticommutator_norm(p_row[(i, j)], p_row[(i2, j2)])

    d = strategy.dim
    eye = np.eye(d)
    products = {}
    for i in (1, 2, 3):
        products[f"row{i}"] = hs_norm(
            p_row[(i, 1)] @ p_row[(i, 2)] @ p_row[(i, 3)] - eye)
    for j in (1, 2):
        products[f"col{j}"] = hs_norm(
            p_col[(1, j)] @ p_col[(2, j)] @ p_col[(3, j)] - eye)
    products["col3"] = hs_norm(
        p_col[(1, 3)] @ p_col[(2, 3)] @ p_col[(3, 3)] + eye)

    wrong_parity = {}
    for q in strategy.alice_povms:
        rep = povm_projectivity_report(strategy.alice_povms[q], ms_parity_target(q))
        wrong_parity[q] = rep.wrong_parity_mass

    concs = {}
    for i, j in idx:
        concs[f"P{i}{j}"] = register_concentration(p_row[(i, j)], m=4)
        concs[f"Q{i}{j}"] = register_concentration(q_obs[(i, j)], m=4)
    register, votes, ambiguous = _register_consensus(concs)

    local_unitary = None
    anchor = {}
    pauli_distances = {}
    if register is not None:
        locp = {key: _local_on_register(concs[f"P{key[0]}{key[1]}"], register) for key in idx}
        locq = {key: _local_on_register(concs[f"Q{key[0]}{key[1]}"], register) for key in idx}
        if all(locp[k] is not None for k in ((2, 2), (1, 1), (1, 2), (2, 1))):
            ext = ms_local_unitary(locp[(2, 2)], locp[(1, 1)], locp[(1, 2)])
            anchor = {"P22_to_ZI": ext.dist_zi, "P11_to_XI": ext.dist_xi,
                      "P12_to_IX": ext.dist_ix}
            # resolve the residual rotation about the second qubit's x-axis
            # using the (2,1) local, whose target is I (x) Z
            m21 = ext.unitary @ locp[(2, 1)] @ ext.unitary.conj().T
            m2 = (m21[:2, :2] + m21[2:, 2:]) / 2
            m2 = m2 - np.trace(m2) / 2 * np.eye(2)
            my = float(np.trace(m2 @ SIGMA_Y).real) / 2
            mz = float(np.trace(m2 @ SIGMA_Z).real) / 2
            if np.hypot(my, mz) > 1e-9:
                alpha = np.arctan2(my, mz)
                u3 = np.kron(np.eye(2),
                             np.cos(alpha / 2) * np.eye(2) - 1j * np.sin(alpha / 2) * SIGMA_X)
                local_unitary = u3 @ ext.unitary
            else:
                local_unitary = ext.unitary
            table = magic_square_table()
            for i, j in idx:
                target = table[i - 1, j - 1]
                if locp[(i, j)] is not None:
                    img = local_unitary @ locp[(i, j)] @ local_unitary.conj().T
                    pauli_distances[f"P{i}{j}"] = hs_distance(img, target)
                if locq[(i, j)] is not None:
                    imgq = local_unitary.conj() @ locq[(i, j)] @ local_unitary.T
                    pauli_distances[f"Q{i}{j}"] = hs_distance(imgq, target.T)

    max_distance = _report_max(row_col, p_vs_qt, scaling, same_line, cross, products,
                               [c.residual for c in concs.values()],
                               anchor, pauli_distances)
    return MsSelfTestReport(rho, value.overall, eps_win, trace_error(strategy),
                            row_col, p_vs_qt, scaling, same_line, cross, products,
                            wrong_parity, concs, register, votes, ambiguous,
                            local_unitary, anchor, pauli_distances, max_distance)


@dataclass
class RegisterCollision:
    index_a: int
    index_b: int
    register: int
    contradiction: float


@dataclass
class TwoOutOfNSelfTestReport:
    rho: float
    win_prob: float
    eps_v: float
    eps_tr: float
    index_anticommutators: dict
    cross_commutators: dict
    marginal_relation_distances: dict
    registers: dict
    distinct: bool
    collisions: list
    extraction: dict
    max_distance: float


def two_out_of_n_selftest(strategy: TwoOutOfNStrategy, rho: float) -> TwoOutOfNSelfTestReport:
    """Per-index anticommutation, cross-index commutation, marginal-vs-single
    relation distances, register assignment with distinctness verdict, and
    per-index qubit extraction for both players."""
    if not 0.0 < rho < 1.0:
        raise ValidationError("self-testing is defined for rho in (0, 1)")
    value = two_out_of_n_value(strategy, rho)
    eps_v = 2 * np.sqrt(2) * rho - value.violation
    n = strategy.n
    s2 = np.sqrt(2.0)

    anti = {}
    for i in range(1, n + 1):
        anti[f"P{i}"] = anticommutator_norm(strategy.alice_singles[(i, 0)],
                                            strategy.alice_singles[(i, 1)])
        anti[f"Q{i}"] = anticommutator_norm(strategy.bob_singles[(i, 0)],
                                            strategy.bob_singles[(i, 1)])
    cross = {}
    for i in range(1, n + 1):
        for j in range(i + 1, n + 1):
            for u in (0, 1):
                for v in (0, 1):
                    cross[f"P{i}{u},P{j}{v}"] = commutator_norm(
                        strategy.alice_singles[(i, u)], strategy.alice_singles[(j, v)])
                    cross[f"Q{i}{u},Q{j}{v}"] = commutator_norm(
                        strategy.bob_singles[(i, u)], strategy.bob_singles[(j, v)])

    relations = {}
    for i in range(1, n + 1):
        for j in range(1, n + 1):
            if i == j:
                continue
            for y in (0, 1):
                for z in (0, 1):
                    r_bob = strategy.pair_marginal("bob", i, y, j, z)
                    target = (strategy.alice_singles[(i, 0)]
                              + (-1) ** y * strategy.alice_singles[(i, 1)]).T / s2
                    relations[f"R[{i}{y}|{i}{y},{j}{z}]"] = hs_distance(r_bob, target)
                    t_alice = strategy.pair_marginal("alice", i, y, j, z)
                    target_b = (strategy.bob_singles[(i, 0)]
                                + (-1) ** y * strategy.bob_singles[(i, 1)]).T / s2
                    relations[f"T[{i}{y}|{i}{y},{j}{z}]"] = hs_distance(t_alice, target_b)

    registers = {}
    all_concs = {}
    extraction = {}
    for i in range(1, n + 1):
        concs = {}
        for x in (0, 1):
            concs[f"P{i}{x}"] = register_concentration(strategy.alice_singles[(i, x)], m=2)
            concs[f"Q{i}{x}"] = register_concentration(strategy.bob_singles[(i, x)], m=2)
        reg, votes, ambiguous = _register_consensus(concs)
        registers[i] = reg
        all_concs[i] = concs
        extraction[f"alice_{i}"] = _extract_pair(concs, (f"P{i}0", f"P{i}1"), reg)
        extraction[f"bob_{i}"] = _extract_pair(concs, (f"Q{i}0", f"Q{i}1"), reg)

    collisions = []
    assigned = [i for i in registers if registers[i] is not None]
    for ai in range(len(assigned)):
        for bi in range(ai + 1, len(assigned)):
            i, j = assigned[ai], assigned[bi]
            if registers[i] != registers[j]:
                continue
            reg = registers[i]
            worst = 0.0
            for u in (0, 1):
                for v in (0, 1):
                    li = _local_on_register(all_concs[i][f"P{i}{u}"], reg)
                    lj = _local_on_register(all_concs[j][f"P{j}{v}"], reg)
                    if li is None or lj is None:
                        continue
                    rel = bloch_relation(li, lj)
                    worst = max(worst, rel["cross_norm"])
            collisions.append(RegisterCollision(i, j, reg, worst))
    distinct = not collisions and all(registers[i] is not None for i in registers)

    ext_d = [d for e in extraction.values() if e is not None for d in (e.dist_z, e.dist_x)]
    max_distance = _report_max(
        anti, cross, relations,
        [c.residual for per in all_concs.values() for c in per.values()], ext_d)
    return TwoOutOfNSelfTestReport(rho, value.win_prob, eps_v, trace_error(strategy),
                                   anti, cross, relations, registers, distinct,
                                   collisions, extraction, max_distance)


@dataclass
class GeneralNoiseSelfTestReport:
    r: float
    c: float
    violation: float
    eps_v: float
    eps_tr: float
    nonlocality_warning: bool
    canonicalization: EprCanonicalization
    scaling_residuals: dict
    anticommutators: dict
    register_alice: int | None
    register_bob: int | None
    concentration: dict
    extraction: dict
    max_distance: float


def general_noise_selftest(strategy: ChshStrategy,
                           spectrum: CorrelationSpectrum) -> GeneralNoiseSelfTestReport:
    """CHSH self-test under diagonal-correlation noise with the two leading
    nontrivial singular values equal.

    The diagonalizing bases are canonicalized onto the Pauli frame, the
    observables transported, and the per-player register concentration and
    qubit extraction run in that frame.  The two players' registers are
    reported separately and never asserted equal.
    """
    values = np.asarray(spectrum.values, dtype=float)
    if values.shape != (4,):
        raise ValidationError("expected a qubit-register correlation spectrum")
    c2, c3, c4 = values[1], values[2], values[3]
    if abs(c2 - c3) > 1e-8:
        raise ValidationError(
            f"unsupported noise: the two leading correlations differ ({c2} vs {c3})")
    r = float((c2 + c3) / 2)
    c = float(c4)
    if not 0.0 < r < 1.0:
        raise ValidationError("self-testing needs 0 < r < 1")

    report = chsh_violation(strategy, spectrum)
    violation = report.violation
    eps_v = 2 * np.sqrt(2) * r - violation
    warning = violation <= 2.0

    canon = canonicalize_to_epr(spectrum.basis_a, spectrum.basis_b)
    n = strategy.n
    ua = canon.u
    ub = canon.v
    ua_full = ua
    ub_full = ub
    for _ in range(n - 1):
        ua_full = np.kron(ua_full, ua)
        ub_full = np.kron(ub_full, ub)
    transported = {
        "P0": ua_full @ strategy.alice[0] @ ua_full.conj().T,
        "P1": ua_full @ strategy.alice[1] @ ua_full.conj().T,
        "Q0": ub_full @ strategy.bob[0] @ ub_full.conj().T,
        "Q1": ub_full @ strategy.bob[1] @ ub_full.conj().T,
    }
    # after canonicalization indices 1, 2 carry weight r and index 3 carries c
    weights = np.array([1.0, r, r, c])
    scaling = {k: observable_scaling_residual(v, r, m=2, weights=weights)
               for k, v in transported.items()}
    anti = {
        "alice": anticommutator_norm(transported["P0"], transported["P1"]),
        "bob": anticommutator_norm(transported["Q0"], transported["Q1"]),
    }
    concs = {k: register_concentration(v, m=2) for k, v in transported.items()}
    reg_a, _, _ = _register_consensus({k: concs[k] for k in ("P0", "P1")})
    reg_b, _, _ = _register_consensus({k: concs[k] for k in ("Q0", "Q1")})
    extraction = {
        "alice": _extract_pair(concs, ("P0", "P1"), reg_a),
        "bob": _extract_pair(concs, ("Q0", "Q1"), reg_b),
    }
    ext_d = [d for e in extraction.values() if e is not None for d in (e.dist_z, e.dist_x)]
    max_distance = _report_max(scaling, anti, [cc.residual for cc in concs.values()], ext_d)
    return GeneralNoiseSelfTestReport(r, c, violation, eps_v, trace_error(strategy),
                                      warning, canon, scaling, anti, reg_a, reg_b,
                                      concs, extraction, max_distance)


def selftest(strategy, rho: float):
    if isinstance(strategy, ChshStrategy):
        return chsh_selftest(strategy, rho)
    if isinstance(strategy, MagicSquareStrategy):
        return ms_selftest(strategy, rho)
    if isinstance(strategy, TwoOutOfNStrategy):
        return two_out_of_n_selftest(strategy, rho)
    raise ValidationError(f"no self-test for strategy type {type(strategy).__name__}")


def loglog_slope(eps_values, distances) -> float:
    """Least-squares slope of log(distance) against log(eps)."""
    x = np.log(np.asarray(eps_values, dtype=float))
    y = np.log(np.asarray(distances, dtype=float))
    return float(np.polyfit(x, y, 1)[0])
