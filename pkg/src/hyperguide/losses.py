"""InfoNCE-style contrast and link losses over smoothed attention maps.

Each contrast term is a softmax cross-entropy over cosine similarities:
the anchor's similarity to one positive in the numerator, that positive
plus all negatives in the denominator, everything smoothed with the small
kernel first.  Link terms invert the roles: the hyperedge-linked
*negative* sits in the numerator against the anchor's same-group
positives, and the big smoothing kernel spreads region borders so that
minimizing the term pulls linked regions toward each other.

All evaluation happens on autodiff tensors so gradients flow to whatever
produced the maps (the toy attention model, in-tree); references marked
detached contribute values but no gradient paths.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from . import autodiff as ad
from .maps import AttentionMap, SmoothingKernel
from .pairs import LinkPairSet, MapRef, PairBundle, PairSet

OBJECTIVES = ("vertex_contrast", "action_contrast", "link")


class UnresolvedMapError(KeyError):
    """A pair set references a token with no attention map."""

    def __init__(self, ref: MapRef):
        step = "previous" if ref.previous_step else "current"
        super().__init__(f"no {step}-step attention map for token {ref.token_index}")
        self.ref = ref


class NoActiveObjectiveError(ValueError):
    """Mask and weights leave nothing to average."""


@dataclass(frozen=True)
class Temperatures:
    """Softmax temperatures: ``tau1`` for contrast terms, ``tau2`` for link."""

    tau1: float = 0.1
    tau2: float = 0.1

    def __post_init__(self):
        if not (self.tau1 > 0 and self.tau2 > 0):
            raise ValueError("temperatures must be positive")


@dataclass
class LossBreakdown:
    """Per-objective means; an objective with no terms is None (absent)."""

    vertex_contrast: float | None
    action_contrast: float | None
    link: float | None
    total: float | None
    active_mask: dict[str, bool]
    term_counts: dict[str, int]
    dropped_empty: int = 0

    def to_dict(self) -> dict:
        return {
            "vertex_contrast": self.vertex_contrast,
            "action_contrast": self.action_contrast,
            "link": self.link,
            "total": self.total,
            "active_mask": {k: bool(v) for k, v in self.active_mask.items()},
            "term_counts": dict(self.term_counts),
            "dropped_empty": self.dropped_empty,
        }


class MapStore:
    """Resolves map references to tensors and caches smoothed variants.

    ``current`` maps may be live graph tensors (gradients flow), plain
    arrays, or :class:`AttentionMap`; ``previous`` maps are stale values
    and always enter as constants.  ``detached_overrides`` substitutes
    fixed values for *detached current-step* references; the
    finite-difference oracle uses this to probe the frozen function that
    detachment implies.
    """

    def __init__(
        self,
        current: Mapping[int, "ad.Tensor | np.ndarray | AttentionMap"],
        previous: Mapping[int, np.ndarray] | None = None,
        detached_overrides: Mapping[int, np.ndarray] | None = None,
    ):
        self._current: dict[int, ad.Tensor] = {}
        for j, m in current.items():
            if isinstance(m, ad.Tensor):
                self._current[j] = m
            elif isinstance(m, AttentionMap):
                self._current[j] = ad.Tensor(m.values)
            else:
                self._current[j] = ad.Tensor(np.asarray(m, dtype=np.float64))
        self._previous: dict[int, ad.Tensor] = {}
        if previous is not None:
            for j, m in previous.items():
                values = m.values if isinstance(m, AttentionMap) else np.asarray(m)
                self._previous[j] = ad.Tensor(values)
        self._overrides = (
            {j: ad.Tensor(np.asarray(v)) for j, v in detached_overrides.items()}
            if detached_overrides
            else {}
        )
        self._smooth_cache: dict[tuple, ad.Tensor] = {}

    @property
    def has_previous(self) -> bool:
        return bool(self._previous)

    def base(self, ref: MapRef) -> ad.Tensor:
        if ref.previous_step:
            if ref.token_index not in self._previous:
                raise UnresolvedMapError(ref)
            return self._previous[ref.token_index]
        if ref.detached and ref.token_index in self._overrides:
            return self._overrides[ref.token_index]
        if ref.token_index not in self._current:
            raise UnresolvedMapError(ref)
        return self._current[ref.token_index]

    def smoothed(self, ref: MapRef, kernel: SmoothingKernel) -> ad.Tensor:
        """Smoothed map for ``ref``; detached references come back severed."""
        overridden = ref.detached and not ref.previous_step and ref.token_index in self._overrides
        key = (ref.token_index, ref.previous_step, overridden, kernel.size, kernel.sigma)
        if key not in self._smooth_cache:
            self._smooth_cache[key] = ad.smooth2d(self.base(ref), kernel.weights)
        smoothed = self._smooth_cache[key]
        return smoothed.detach() if ref.detached else smoothed


def _softmax_ce(anchor: ad.Tensor, numerator: ad.Tensor, others: Iterable[ad.Tensor], tau: float) -> ad.Tensor:
    """-log softmax with the numerator's logit as the target class."""
    target = ad.cosine(anchor, numerator) / tau
    logits = [target] + [ad.cosine(anchor, other) / tau for other in others]
    shift = max(float(l.value) for l in logits)
    total = None
    for l in logits:
        e = ad.exp(l - shift)
        total = e if total is None else total + e
    return ad.log(total) + shift - target


def contrast_term_tensors(
    pair: PairSet, store: MapStore, tau1: float, small_kernel: SmoothingKernel
) -> list[ad.Tensor]:
    """One tensor per positive in the pair set.

    Each positive gets its own softmax: that positive's similarity in the
    numerator, the positive plus every negative in the denominator.
    """
    anchor = store.smoothed(pair.anchor, small_kernel)
    negatives = [store.smoothed(r, small_kernel) for r in pair.negatives]
    terms = []
    for pos_ref in pair.positives:
        positive = store.smoothed(pos_ref, small_kernel)
        terms.append(_softmax_ce(anchor, positive, negatives, tau1))
    return terms


def link_term_tensor(
    pair: LinkPairSet, store: MapStore, tau2: float, big_kernel: SmoothingKernel
) -> ad.Tensor:
    """Single link term: linked negative in the numerator."""
    anchor = store.smoothed(pair.anchor, big_kernel)
    numerator = store.smoothed(pair.linked_negative, big_kernel)
    positives = [store.smoothed(r, big_kernel) for r in pair.denominator_positives]
    return _softmax_ce(anchor, numerator, positives, tau2)


def contrast_term(
    pair: PairSet, maps, tau1: float, small_kernel: SmoothingKernel, previous=None
) -> float:
    """Scalar contrast term; mean over the pair set's positives."""
    store = maps if isinstance(maps, MapStore) else MapStore(maps, previous)
    terms = contrast_term_tensors(pair, store, tau1, small_kernel)
    return float(sum(float(t.value) for t in terms) / len(terms))


def link_term(
    pair: LinkPairSet, maps, tau2: float, big_kernel: SmoothingKernel, previous=None
) -> float:
    store = maps if isinstance(maps, MapStore) else MapStore(maps, previous)
    return float(link_term_tensor(pair, store, tau2, big_kernel).value)


def evaluate_objectives(
    bundle: PairBundle,
    store: MapStore,
    temperatures: Temperatures,
    small_kernel: SmoothingKernel,
    big_kernel: SmoothingKernel,
) -> tuple[dict[str, "ad.Tensor | None"], dict[str, int]]:
    """Mean tensor per objective plus term counts.

    Means weight every expanded (anchor, positive) term equally within an
    objective; objectives with zero terms come back as None, never 0.
    """
    vertex_terms: list[ad.Tensor] = []
    for ps in bundle.vertex_contrast:
        vertex_terms.extend(contrast_term_tensors(ps, store, temperatures.tau1, small_kernel))
    action_terms: list[ad.Tensor] = []
    for ps in bundle.action_contrast:
        action_terms.extend(contrast_term_tensors(ps, store, temperatures.tau1, small_kernel))
    link_terms = [
        link_term_tensor(ls, store, temperatures.tau2, big_kernel) for ls in bundle.link
    ]

    def mean(terms: list[ad.Tensor]) -> "ad.Tensor | None":
        if not terms:
            return None
        total = terms[0]
        for t in terms[1:]:
            total = total + t
        return total / float(len(terms))

    objectives = {
        "vertex_contrast": mean(vertex_terms),
        "action_contrast": mean(action_terms),
        "link": mean(link_terms),
    }
    counts = {
        "vertex_contrast": len(vertex_terms),
        "action_contrast": len(action_terms),
        "link": len(link_terms),
    }
    return objectives, counts


def total_loss(
    objectives: Mapping[str, "ad.Tensor | None"],
    weights: Mapping[str, float],
    active_mask: Mapping[str, bool],
) -> ad.Tensor:
    """Weighted average of the masked, present objectives.

    Absent objectives (no terms) are excluded from both sums; if nothing
    is active, present, and positively weighted, there is no average to
    take and :class:`NoActiveObjectiveError` is raised.
    """
    for name, w in weights.items():
        if w < 0:
            raise ValueError(f"negative weight for {name}")
    acc = None
    weight_sum = 0.0
    for name in OBJECTIVES:
        if not active_mask.get(name, False):
            continue
        w = float(weights.get(name, 0.0))
        if w == 0.0:
            continue
        obj = objectives.get(name)
        if obj is None:
            continue
        contrib = obj * w
        acc = contrib if acc is None else acc + contrib
        weight_sum += w
    if acc is None:
        raise NoActiveObjectiveError("no active objective with terms and positive weight")
    return acc / weight_sum


def mean_losses(
    bundle: PairBundle,
    store: MapStore,
    temperatures: Temperatures,
    small_kernel: SmoothingKernel,
    big_kernel: SmoothingKernel,
    weights: Mapping[str, float] | None = None,
    active_mask: Mapping[str, bool] | None = None,
) -> LossBreakdown:
    """Float breakdown of all objectives, with the masked weighted total."""
    mask = dict(active_mask) if active_mask is not None else {name: True for name in OBJECTIVES}
    w = dict(weights) if weights is not None else {name: 1.0 for name in OBJECTIVES}
    objectives, counts = evaluate_objectives(
        bundle, store, temperatures, small_kernel, big_kernel
    )
    try:
        total = float(total_loss(objectives, w, mask).value)
    except NoActiveObjectiveError:
        total = None
    to_float = lambda t: None if t is None else float(t.value)
    return LossBreakdown(
        vertex_contrast=to_float(objectives["vertex_contrast"]),
        action_contrast=to_float(objectives["action_contrast"]),
        link=to_float(objectives["link"]),
        total=total,
        active_mask=mask,
        term_counts=counts,
        dropped_empty=bundle.dropped_empty,
    )
