"""JSON schemas for strategies, states, reports and transcripts.

All documents carry schemaVersion; loaders reject unknown fields so typos
fail loudly instead of being silently ignored.
"""

from __future__ import annotations

import numpy as np

from .certificates import SoSCertificate
from .extraction import (
    ChshSelfTestReport,
    GeneralNoiseSelfTestReport,
    MsSelfTestReport,
    TwoOutOfNSelfTestReport,
)
from .games import (
    ChshStrategy,
    GameValueReport,
    MS_QUESTIONS,
    MagicSquareReport,
    MagicSquareStrategy,
    TwoOutOfNStrategy,
    canonical_chsh_strategy,
    canonical_magic_square_strategy,
    canonical_two_out_of_n_strategy,
    perturbed_chsh_strategy,
    perturbed_magic_square_strategy,
    perturbed_two_out_of_n_strategy,
    random_chsh_strategy,
    random_magic_square_strategy,
)
from .pauli import ValidationError, matrix_from_json, matrix_to_json
from .protocols import NoiseEstimate, ProtocolTranscript
from .states import BipartiteState, make_depolarized_epr, make_epr_power

SCHEMA_VERSION = 1


def _require_keys(data: dict, required: set, optional: set, what: str):
    if not isinstance(data, dict):
        raise ValidationError(f"{what} must be a JSON object")
    keys = set(data)
    missing = required - keys
    unknown = keys - required - optional - {"schemaVersion"}
    if missing:
        raise ValidationError(f"{what} is missing fields: {sorted(missing)}")
    if unknown:
        raise ValidationError(f"{what} has unknown fields: {sorted(unknown)}")


# ---------------------------------------------------------------------------
# states


def state_to_json(state: BipartiteState) -> dict:
    return {"schemaVersion": SCHEMA_VERSION, "dimA": state.dim_a, "dimB": state.dim_b,
            "density": matrix_to_json(state.density)}


def state_from_json(data: dict) -> BipartiteState:
    if isinstance(data, dict) and data.get("kind") == "depolarized_epr":
        _require_keys(data, {"kind", "rho", "n"}, {"pairRegisters"}, "symbolic state")
        return make_depolarized_epr(float(data["rho"]), int(data["n"]),
                                    bool(data.get("pairRegisters", False)))
    if isinstance(data, dict) and data.get("kind") == "epr_power":
        _require_keys(data, {"kind", "n"}, set(), "symbolic state")
        return make_epr_power(int(data["n"]))
    _require_keys(data, {"dimA", "dimB", "density"}, set(), "state")
    return BipartiteState(int(data["dimA"]), int(data["dimB"]),
                          matrix_from_json(data["density"]))


# ---------------------------------------------------------------------------
# strategies


def strategy_to_json(strategy) -> dict:
    if isinstance(strategy, ChshStrategy):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "chsh", "n": strategy.n,
            "observables": {
                "P0": matrix_to_json(strategy.alice[0]),
                "P1": matrix_to_json(strategy.alice[1]),
                "Q0": matrix_to_json(strategy.bob[0]),
                "Q1": matrix_to_json(strategy.bob[1]),
            },
        }
    if isinstance(strategy, MagicSquareStrategy):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "magic_square", "n": strategy.n,
            "alicePovms": {q: [matrix_to_json(e) for e in strategy.alice_povms[q]]
                           for q in MS_QUESTIONS},
            "bobObservables": {f"s{i}{j}": matrix_to_json(strategy.bob_observables[(i, j)])
                               for i in (1, 2, 3) for j in (1, 2, 3)},
        }
    if isinstance(strategy, TwoOutOfNStrategy):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "two_out_of_n",
            "n": strategy.n, "nPrime": strategy.n_prime,
            "aliceSingles": {f"{i},{x}": matrix_to_json(op)
                             for (i, x), op in strategy.alice_singles.items()},
            "bobSingles": {f"{i},{x}": matrix_to_json(op)
                           for (i, x), op in strategy.bob_singles.items()},
            "alicePairPovms": {",".join(map(str, k)): [matrix_to_json(e) for e in v]
                               for k, v in strategy.alice_pair_povms.items()},
            "bobPairPovms": {",".join(map(str, k)): [matrix_to_json(e) for e in v]
                             for k, v in strategy.bob_pair_povms.items()},
        }
    raise ValidationError(f"cannot serialize strategy type {type(strategy).__name__}")


def _symbolic_strategy(data: dict):
    kind = data["kind"]
    game = data.get("game", "chsh")
    n = int(data.get("n", 1))
    register = int(data.get("register", 1))
    if kind == "canonical":
        if game == "chsh":
            return canonical_chsh_strategy(n, register)
        if game == "magic_square":
            return canonical_magic_square_strategy(n, register)
        if game == "two_out_of_n":
            return canonical_two_out_of_n_strategy(n, int(data.get("nPrime", n)))
        raise ValidationError(f"unknown game {game!r}")
    if kind == "canonical-perturbed":
        theta = float(data["theta"])
        if game == "chsh":
            return perturbed_chsh_strategy(n, register, theta)
        if game == "magic_square":
            return perturbed_magic_square_strategy(n, register, theta)
        if game == "two_out_of_n":
            return perturbed_two_out_of_n_strategy(n, theta)
        raise ValidationError(f"unknown game {game!r}")
    if kind == "random":
        seed = int(data.get("seed", 0))
        rng = np.random.default_rng(seed)
        variant = data.get("variant", "binary")
        bias = float(data.get("traceBias", 0.0))
        if game == "chsh":
            return random_chsh_strategy(n, rng, kind=variant, trace_bias=bias)
        if game == "magic_square":
            return random_magic_square_strategy(
                n, rng, kind=variant if variant != "binary" else "projective",
                trace_bias=bias)
        raise ValidationError(f"no random constructor for game {game!r}")
    raise ValidationError(f"unknown symbolic strategy kind {kind!r}")


def strategy_from_json(data: dict):
    if isinstance(data, dict) and "kind" in data:
        _require_keys(data, {"kind"},
                      {"game", "n", "nPrime", "register", "theta", "seed",
                       "variant", "traceBias"}, "symbolic strategy")
        return _symbolic_strategy(data)
    _require_keys(data, {"game", "n"},
                  {"observables", "alicePovms", "bobObservables", "nPrime",
                   "aliceSingles", "bobSingles", "alicePairPovms", "bobPairPovms"},
                  "strategy")
    game = data["game"]
    n = int(data["n"])
    if game == "chsh":
        obs = data["observables"]
        _require_keys(obs, {"P0", "P1", "Q0", "Q1"}, set(), "chsh observables")
        return ChshStrategy(
            n,
            (matrix_from_json(obs["P0"]), matrix_from_json(obs["P1"])),
            (matrix_from_json(obs["Q0"]), matrix_from_json(obs["Q1"])),
        )
    if game == "magic_square":
        povms = {q: np.stack([matrix_from_json(e) for e in data["alicePovms"][q]])
                 for q in MS_QUESTIONS}
        bob = {}
        for key, mat in data["bobObservables"].items():
            if len(key) != 3 or not key.startswith("s"):
                raise ValidationError(f"bad variable key {key!r}; expected e.g. 's12'")
            bob[(int(key[1]), int(key[2]))] = matrix_from_json(mat)
        return MagicSquareStrategy(n, povms, bob)
    if game == "two_out_of_n":
        n_prime = int(data.get("nPrime", n))

        def parse_ops(block):
            return {tuple(int(v) for v in key.split(",")): matrix_from_json(mat)
                    for key, mat in block.items()}

        def parse_povms(block):
            return {tuple(int(v) for v in key.split(",")):
                    np.stack([matrix_from_json(e) for e in v])
                    for key, v in block.items()}

        return TwoOutOfNStrategy(
            n, n_prime,
            parse_ops(data["aliceSingles"]), parse_ops(data["bobSingles"]),
            parse_povms(data["alicePairPovms"]), parse_povms(data["bobPairPovms"]))
    raise ValidationError(f"unknown game {game!r}")


# ---------------------------------------------------------------------------
# reports


def game_value_to_json(report) -> dict:
    if isinstance(report, GameValueReport):
        return {"schemaVersion": SCHEMA_VERSION, "violation": report.violation,
                "winProb": report.win_prob, "perQuestion": report.per_question}
    if isinstance(report, MagicSquareReport):
        return {"schemaVersion": SCHEMA_VERSION, "overall": report.overall,
                "parityPass": report.parity_pass,
                "consistencyPass": report.consistency_pass,
                "perVariable": report.per_variable}
    raise ValidationError(f"cannot serialize report type {type(report).__name__}")


def certificate_to_json(cert: SoSCertificate, eps_tr: float | None = None) -> dict:
    out = {
        "schemaVersion": SCHEMA_VERSION, "game": cert.game, "rho": cert.rho,
        "bound": cert.bound, "value": cert.value, "gap": cert.gap_expectation,
        "terms": [{"label": k, "expectation": float(v)} for k, v in cert.terms],
        "residual": cert.residual,
    }
    if eps_tr is not None:
        out["epsTr"] = eps_tr
    return out


def _concentration_json(concs: dict) -> dict:
    return {
        label: {
            "register": rc.register,
            "weights": [float(w) for w in rc.weights],
            "margin": rc.margin,
            "tie": rc.tie,
            "residual": rc.residual,
        }
        for label, rc in concs.items()
    }


def _extraction_json(extraction: dict) -> dict:
    out = {}
    for label, ext in extraction.items():
        if ext is None:
            out[label] = None
        else:
            out[label] = {"unitary": matrix_to_json(ext.unitary),
                          "distZ": ext.dist_z, "distX": ext.dist_x,
                          "theta": ext.theta, "degenerate": ext.degenerate}
    return out


def selftest_to_json(report) -> dict:
    if isinstance(report, ChshSelfTestReport):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "chsh", "rho": report.rho,
            "violation": report.violation, "epsV": report.eps_v, "epsTr": report.eps_tr,
            "scalingResiduals": report.scaling_residuals,
            "antiCommutators": report.anticommutators,
            "relationDistances": report.relation_distances,
            "register": report.register, "registerVotes": report.register_votes,
            "registerAmbiguous": report.register_ambiguous,
            "concentration": _concentration_json(report.concentration),
            "extractionUnitaries": _extraction_json(report.extraction),
            "maxDistance": report.max_distance,
        }
    if isinstance(report, MsSelfTestReport):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "magic_square", "rho": report.rho,
            "overall": report.overall, "epsWin": report.eps_win, "epsTr": report.eps_tr,
            "rowColDistances": report.row_col_distances,
            "pVsQtDistances": report.p_vs_qt_distances,
            "scalingResiduals": report.scaling_residuals,
            "sameLineCommutators": report.same_line_commutators,
            "crossAntiCommutators": report.cross_anticommutators,
            "productDistances": report.product_distances,
            "wrongParityMass": report.wrong_parity_mass,
            "register": report.register, "registerVotes": report.register_votes,
            "registerAmbiguous": report.register_ambiguous,
            "concentration": _concentration_json(report.concentration),
            "localUnitary": (None if report.local_unitary is None
                             else matrix_to_json(report.local_unitary)),
            "anchorDistances": report.anchor_distances,
            "pauliDistances": report.pauli_distances,
            "maxDistance": report.max_distance,
        }
    if isinstance(report, TwoOutOfNSelfTestReport):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "two_out_of_n", "rho": report.rho,
            "winProb": report.win_prob, "epsV": report.eps_v, "epsTr": report.eps_tr,
            "indexAntiCommutators": report.index_anticommutators,
            "crossCommutators": report.cross_commutators,
            "marginalRelationDistances": report.marginal_relation_distances,
            "registers": {str(k): v for k, v in report.registers.items()},
            "distinct": report.distinct,
            "collisions": [{"indexA": c.index_a, "indexB": c.index_b,
                            "register": c.register, "contradiction": c.contradiction}
                           for c in report.collisions],
            "extractionUnitaries": _extraction_json(report.extraction),
            "maxDistance": report.max_distance,
        }
    if isinstance(report, GeneralNoiseSelfTestReport):
        return {
            "schemaVersion": SCHEMA_VERSION, "game": "chsh_general_noise",
            "r": report.r, "c": report.c, "violation": report.violation,
            "epsV": report.eps_v, "epsTr": report.eps_tr,
            "nonlocalityWarning": report.nonlocality_warning,
            "ySignA": report.canonicalization.y_sign_a,
            "ySignB": report.canonicalization.y_sign_b,
            "eprDistance": report.canonicalization.epr_distance,
            "scalingResiduals": report.scaling_residuals,
            "antiCommutators": report.anticommutators,
            "registerAlice": report.register_alice, "registerBob": report.register_bob,
            "concentration": _concentration_json(report.concentration),
            "extractionUnitaries": _extraction_json(report.extraction),
            "maxDistance": report.max_distance,
        }
    raise ValidationError(f"cannot serialize report type {type(report).__name__}")


def transcript_to_json(transcript: ProtocolTranscript, include_rounds: bool = False) -> dict:
    out = {
        "schemaVersion": SCHEMA_VERSION, "game": transcript.game,
        "params": {"t": transcript.params.t, "p": transcript.params.p,
                   "delta": transcript.params.delta, "seed": transcript.params.seed,
                   "rho": transcript.params.rho},
        "tPrime": transcript.t_prime,
        "counts": transcript.counts,
        "traceFrequencies": transcript.trace_frequencies,
        "verdict": {"accept": transcript.accept, "reasons": transcript.reject_reasons},
        "empiricalWinRate": transcript.empirical_win_rate,
        "note": transcript.note,
    }
    if transcript.empirical_consistency_rate is not None:
        out["empiricalConsistencyRate"] = transcript.empirical_consistency_rate
    if include_rounds:
        out["rounds"] = {k: np.asarray(v).tolist() for k, v in transcript.rounds.items()}
    return out


def estimate_to_json(est: NoiseEstimate) -> dict:
    return {"schemaVersion": SCHEMA_VERSION, "rhoHat": est.rho_hat,
            "interval": list(est.interval), "statistic": est.statistic,
            "nRounds": est.n_rounds, "confidence": est.confidence,
            "clamped": est.clamped}
