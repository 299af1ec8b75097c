"""Greedy information-driven atom selection.

Atoms are picked one at a time from an initial dictionary by maximizing a
weighted sum of three marginal gains: compactness (GP mutual information
against the unselected pool), discrimination (KDE mutual information
between restricted codes and labels) and reconstruction (residual
log-likelihood drop). Weight estimation uses only the best single-atom
gain of each criterion, so it costs one extra scoring round.

Two variants exist: one shared support for all classes, or a dedicated
support per class where discrimination uses one-vs-rest labels over all
samples and reconstruction sees only that class's signals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .info_measures import (
    GpModel,
    KdeConfig,
    ResidualModel,
    build_gp_model,
    gp_compact_gains,
    mi_codes_labels,
    recon_gain,
)
from .sparse_coding import Dictionary, Selection, SparseCodes, code_ls, omp_codes

TERMS = ("compact", "discriminative", "reconstructive")


class WeightsError(RuntimeError):
    """Raised when weight estimation hits a degenerate covariance."""


@dataclass(frozen=True)
class SelectionWeights:
    """Balance between the compactness, discrimination and reconstruction terms."""

    lambda1: float = 1.0
    lambda2: float = 0.0
    lambda3: float = 0.0

    def __post_init__(self):
        if self.lambda1 != 1.0:
            raise ValueError("lambda1 is fixed at 1")
        for name in ("lambda2", "lambda3"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValueError(f"{name} must be finite and non-negative")


@dataclass(frozen=True)
class SelectionMode:
    """Selection variant plus the subset of active objective terms."""

    variant: str = "shared"
    ablation: frozenset = frozenset(TERMS)

    def __post_init__(self):
        if self.variant not in ("shared", "dedicated"):
            raise ValueError("variant must be 'shared' or 'dedicated'")
        ablation = frozenset(self.ablation)
        object.__setattr__(self, "ablation", ablation)
        if not ablation or not ablation <= set(TERMS):
            raise ValueError(f"ablation must be a nonempty subset of {TERMS}")


@dataclass(frozen=True)
class RoundRecord:
    """Chosen atom and its raw/weighted gains for one greedy round."""

    round: int
    index: int
    gain_compact: float
    gain_discrim: float
    gain_recon: float
    gain_total: float


@dataclass(frozen=True)
class SelectionResult:
    selection: Selection
    codes: SparseCodes
    reconstruction: np.ndarray
    rounds: tuple[RoundRecord, ...]
    weights: SelectionWeights
    class_id: int | None = None


def estimate_lambdas(
    dictionary: Dictionary,
    codes: SparseCodes,
    labels: np.ndarray,
    signals: np.ndarray,
    gp_model: GpModel | None = None,
    residual_model: ResidualModel | None = None,
    kde_cfg: KdeConfig = KdeConfig(),
) -> SelectionWeights:
    """Data-driven weights: best single-atom gain ratios.

    lambda2 and lambda3 are the maxima of the single-atom discrimination
    and reconstruction gains divided by the maximal single-atom
    compactness gain (the first greedy step of each criterion).
    """
    if gp_model is None:
        gp_model = build_gp_model(dictionary.atoms)
    if residual_model is None:
        residual_model = ResidualModel.from_signals(signals)
    labels = np.asarray(labels, dtype=np.int64)
    K = dictionary.K
    if codes.coeffs.shape[0] != K:
        raise ValueError("weight estimation needs codes over the full initial dictionary")
    compact = gp_compact_gains(gp_model, Selection(), list(range(K)))
    denom = float(np.max(compact))
    if not math.isfinite(denom) or denom <= 1e-12:
        raise WeightsError("degenerate atom covariance: no compactness gain to normalize by")
    X = codes.coeffs
    discrim = max(mi_codes_labels(X[i : i + 1, :], labels, kde_cfg) for i in range(K))
    recon = max(
        recon_gain(dictionary, Selection(), i, signals, residual_model) for i in range(K)
    )
    return SelectionWeights(lambda1=1.0, lambda2=discrim / denom, lambda3=recon / denom)


def _greedy_select(
    dictionary: Dictionary,
    init_coeffs: np.ndarray,
    discrim_labels: np.ndarray,
    recon_signals: np.ndarray,
    T: int,
    ablation: frozenset,
    weights: SelectionWeights,
    gp_model: GpModel,
    residual_model: ResidualModel,
    kde_cfg: KdeConfig,
) -> tuple[Selection, tuple[RoundRecord, ...]]:
    use_c = "compact" in ablation
    use_d = "discriminative" in ablation
    use_r = "reconstructive" in ablation
    K = dictionary.K
    chosen: list[int] = []
    excluded: set[int] = set()
    records: list[RoundRecord] = []
    mi_base = 0.0
    for t in range(T):
        taken = set(chosen)
        cands = [k for k in range(K) if k not in taken and k not in excluded]
        if not cands:
            raise RuntimeError("all remaining atoms are excluded as duplicates")
        sel = Selection(indices=tuple(chosen))
        if use_c:
            compact = gp_compact_gains(gp_model, sel, cands)
        else:
            compact = np.zeros(len(cands))
        best_j = -1
        best_total = -math.inf
        best_gains = (0.0, 0.0, 0.0)
        for j, k in enumerate(cands):
            gc = float(compact[j])
            if gc == -math.inf:
                excluded.add(k)
                continue
            gd = (
                mi_codes_labels(init_coeffs[chosen + [k], :], discrim_labels, kde_cfg) - mi_base
                if use_d
                else 0.0
            )
            gr = (
                recon_gain(dictionary, sel, k, recon_signals, residual_model) if use_r else 0.0
            )
            total = weights.lambda1 * gc + weights.lambda2 * gd + weights.lambda3 * gr
            if total > best_total:
                best_total = total
                best_j = j
                best_gains = (gc, gd, gr)
        if best_j < 0:
            raise RuntimeError("all remaining atoms are excluded as duplicates")
        pick = cands[best_j]
        chosen.append(pick)
        if use_d:
            mi_base += best_gains[1]
        records.append(
            RoundRecord(
                round=t + 1,
                index=pick,
                gain_compact=best_gains[0],
                gain_discrim=best_gains[1],
                gain_recon=best_gains[2],
                gain_total=best_total,
            )
        )
    return Selection(indices=tuple(chosen)), tuple(records)


def _check_select_args(dictionary: Dictionary, T: int) -> None:
    if T < 1:
        raise ValueError("sparsity T must be at least 1")
    if T >= dictionary.K:
        raise ValueError(f"sparsity T={T} must be smaller than the atom count K={dictionary.K}")
    if T > dictionary.n:
        raise ValueError(f"sparsity T={T} must not exceed the signal dimension n={dictionary.n}")


def select_shared(
    dictionary: Dictionary,
    signals: np.ndarray,
    labels: np.ndarray,
    T: int,
    mode: SelectionMode,
    weights: SelectionWeights,
    *,
    initial_codes: SparseCodes | None = None,
    gp_model: GpModel | None = None,
    residual_model: ResidualModel | None = None,
    kde_cfg: KdeConfig = KdeConfig(),
) -> SelectionResult:
    """One common support of T atoms for all classes."""
    _check_select_args(dictionary, T)
    Y = np.asarray(signals, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if initial_codes is None:
        initial_codes = omp_codes(dictionary, Y, T)
    if gp_model is None:
        gp_model = build_gp_model(dictionary.atoms)
    if residual_model is None:
        residual_model = ResidualModel.from_signals(Y)
    selection, records = _greedy_select(
        dictionary,
        initial_codes.coeffs,
        labels,
        Y,
        T,
        mode.ablation,
        weights,
        gp_model,
        residual_model,
        kde_cfg,
    )
    codes = code_ls(dictionary, selection, Y)
    recon = dictionary.atoms[:, list(selection.indices)] @ codes.coeffs
    return SelectionResult(
        selection=selection,
        codes=codes,
        reconstruction=recon,
        rounds=records,
        weights=weights,
    )


def select_dedicated(
    dictionary: Dictionary,
    signals: np.ndarray,
    labels: np.ndarray,
    T: int,
    mode: SelectionMode,
    weights_per_class: list[SelectionWeights] | None = None,
    *,
    initial_codes: SparseCodes | None = None,
    gp_model: GpModel | None = None,
    residual_model: ResidualModel | None = None,
    kde_cfg: KdeConfig = KdeConfig(),
) -> list[SelectionResult]:
    """An independent support of T atoms per class.

    Discrimination is scored with one-vs-rest labels over every sample's
    codes; reconstruction and the final least-squares coding see only the
    class's own signals. Weights default to per-class estimates.
    """
    _check_select_args(dictionary, T)
    Y = np.asarray(signals, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    p = int(labels.max()) + 1
    counts = np.bincount(labels, minlength=p)
    if (counts < 2).any():
        bad = int(np.argmin(counts))
        raise ValueError(f"class {bad} has fewer than 2 samples")
    if initial_codes is None:
        initial_codes = omp_codes(dictionary, Y, T)
    if gp_model is None:
        gp_model = build_gp_model(dictionary.atoms)
    if weights_per_class is not None and len(weights_per_class) != p:
        raise ValueError("need one SelectionWeights per class")
    results: list[SelectionResult] = []
    for c in range(p):
        labels01 = (labels == c).astype(np.int64)
        Yc = Y[:, labels == c]
        res_model_c = residual_model or ResidualModel.from_signals(Yc)
        if weights_per_class is None:
            w = estimate_lambdas(
                dictionary, initial_codes, labels01, Yc, gp_model, res_model_c, kde_cfg
            )
        else:
            w = weights_per_class[c]
        selection, records = _greedy_select(
            dictionary,
            initial_codes.coeffs,
            labels01,
            Yc,
            T,
            mode.ablation,
            w,
            gp_model,
            res_model_c,
            kde_cfg,
        )
        codes = code_ls(dictionary, selection, Yc)
        recon = dictionary.atoms[:, list(selection.indices)] @ codes.coeffs
        results.append(
            SelectionResult(
                selection=selection,
                codes=codes,
                reconstruction=recon,
                rounds=records,
                weights=w,
                class_id=c,
            )
        )
    return results


def selection_report(results: list[SelectionResult], sigma: float | None = None) -> dict:
    """JSON-ready report: per-round chosen index, raw gains, weighted total, weights."""
    entries = []
    for res in results:
        entries.append(
            {
                "class": res.class_id,
                "lambda1": res.weights.lambda1,
                "lambda2": res.weights.lambda2,
                "lambda3": res.weights.lambda3,
                "indices": list(res.selection.indices),
                "rounds": [
                    {
                        "round": r.round,
                        "index": r.index,
                        "gain_compact": r.gain_compact,
                        "gain_discrim": r.gain_discrim,
                        "gain_recon": r.gain_recon,
                        "weighted_discrim": res.weights.lambda2 * r.gain_discrim,
                        "weighted_recon": res.weights.lambda3 * r.gain_recon,
                        "gain_total": r.gain_total,
                    }
                    for r in res.rounds
                ],
            }
        )
    report = {"selections": entries}
    if sigma is not None:
        report["sigma"] = sigma
    return report
