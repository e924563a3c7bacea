"""Positive/negative pair construction over a prompt hypergraph.

Three families of pair sets drive the losses:

* vertex contrast: tokens of one noun group attract, tokens of different
  noun groups repel, so attention regions separate;
* action contrast: an action token is pulled onto its parties' tokens and
  pushed away from other actions, non-party groups, and the environment.
  Every comparand is detached so only the action's own map moves;
* link: for two noun groups joined by a hyperedge, the cross-group pair
  sits in the numerator, so minimizing the loss pulls the smoothed region
  borders together.

Every anchor also pairs positively with its own map from the previous
denoising step, which is how singleton groups get a learning signal at
all.  Builders emit those previous-step references unconditionally;
:func:`inject_previous_step` strips them on the first step (when no
previous maps exist) and drops any pair set left without positives.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from itertools import combinations

from .hypergraph import SemanticHypergraph


@dataclass(frozen=True)
class MapRef:
    """Reference to one token's attention map at the current or previous step.

    Previous-step maps are stale constants, so they are always detached.
    """

    token_index: int
    previous_step: bool = False
    detached: bool = False

    def __post_init__(self):
        if self.token_index < 0:
            raise ValueError("negative token index")
        if self.previous_step and not self.detached:
            raise ValueError("previous-step references must be detached")


def current(token_index: int, detached: bool = False) -> MapRef:
    return MapRef(token_index, previous_step=False, detached=detached)


def previous(token_index: int) -> MapRef:
    return MapRef(token_index, previous_step=True, detached=True)


@dataclass(frozen=True)
class PairSet:
    """One anchor with its positive candidates and shared negatives."""

    anchor: MapRef
    positives: tuple[MapRef, ...]
    negatives: tuple[MapRef, ...]

    def __post_init__(self):
        if not self.positives:
            raise ValueError("pair set needs at least one positive")
        members = self.positives + self.negatives
        if self.anchor in members:
            raise ValueError("anchor may not appear among positives or negatives")
        if len(set(members)) != len(members):
            raise ValueError("duplicate reference in pair set")


@dataclass(frozen=True)
class LinkPairSet:
    """Anchor vs. hyperedge-linked negative, with same-group denominators."""

    anchor: MapRef
    linked_negative: MapRef
    denominator_positives: tuple[MapRef, ...]

    def __post_init__(self):
        if self.anchor == self.linked_negative:
            raise ValueError("anchor may not be its own linked negative")
        members = (self.linked_negative,) + self.denominator_positives
        if self.anchor in self.denominator_positives:
            raise ValueError("anchor may not appear among denominator positives")
        if len(set(members)) != len(members):
            raise ValueError("duplicate reference in link pair set")


@dataclass(frozen=True)
class PairBundle:
    """All pair sets for one graph, grouped by objective."""

    vertex_contrast: tuple[PairSet, ...]
    action_contrast: tuple[PairSet, ...]
    link: tuple[LinkPairSet, ...]
    dropped_empty: int = 0


# -- builders -------------------------------------------------------------------


def build_vertex_contrast(graph: SemanticHypergraph) -> list[PairSet]:
    """One pair set per ordered same-group token pair, plus singletons.

    Negatives are every token of every other noun group.  A singleton
    group has no in-group partner, so its only positive is its own
    previous-step map.
    """
    out: list[PairSet] = []
    for v in graph.vertices:
        negatives = tuple(
            current(t) for u in graph.vertices if u.id != v.id for t in u.token_indices
        )
        if len(v.token_indices) == 1:
            j = v.token_indices[0]
            out.append(PairSet(anchor=current(j), positives=(previous(j),), negatives=negatives))
            continue
        for j in v.token_indices:
            for jp in v.token_indices:
                if jp == j:
                    continue
                out.append(
                    PairSet(
                        anchor=current(j),
                        positives=(current(jp), previous(j)),
                        negatives=negatives,
                    )
                )
    return out


def build_action_contrast(graph: SemanticHypergraph) -> list[PairSet]:
    """One pair set per (action token, party token) pair, all comparands detached.

    Detaching the party and negative maps leaves gradient only on the
    anchor, so the action's attention is drawn toward its parties rather
    than dragging the parties around.  Negatives are other actions'
    tokens, non-party groups' tokens, and the environment.
    """
    out: list[PairSet] = []
    for e in graph.edges:
        party_tokens = [
            t for pid in e.party_ids for t in graph.vertex(pid).token_indices
        ]
        party_set = set(e.party_ids)
        negatives = []
        for other in graph.edges:
            if other.id != e.id:
                negatives.extend(current(t, detached=True) for t in other.action_token_indices)
        for v in graph.vertices:
            if v.id not in party_set:
                negatives.extend(current(t, detached=True) for t in v.token_indices)
        negatives.extend(current(t, detached=True) for t in sorted(graph.environment_token_indices))
        for a in e.action_token_indices:
            for p in party_tokens:
                out.append(
                    PairSet(
                        anchor=current(a),
                        positives=(current(p, detached=True), previous(a)),
                        negatives=tuple(negatives),
                    )
                )
    return out


def build_link(graph: SemanticHypergraph) -> list[LinkPairSet]:
    """Link sets for every token pair across hyperedge-joined groups.

    Generated in both directions for each unordered party pair, so the
    loss is insensitive to party order.  Denominator positives are the
    anchor's remaining in-group tokens plus its previous-step map.
    """
    out: list[LinkPairSet] = []
    for e in graph.edges:
        for u_id, v_id in combinations(e.party_ids, 2):
            for a_id, b_id in ((u_id, v_id), (v_id, u_id)):
                side_a = graph.vertex(a_id)
                side_b = graph.vertex(b_id)
                for j in side_a.token_indices:
                    denom = tuple(
                        current(t) for t in side_a.token_indices if t != j
                    ) + (previous(j),)
                    for jm in side_b.token_indices:
                        out.append(
                            LinkPairSet(
                                anchor=current(j),
                                linked_negative=current(jm),
                                denominator_positives=denom,
                            )
                        )
    return out


def build_pairs(graph: SemanticHypergraph) -> PairBundle:
    return PairBundle(
        vertex_contrast=tuple(build_vertex_contrast(graph)),
        action_contrast=tuple(build_action_contrast(graph)),
        link=tuple(build_link(graph)),
    )


# -- previous-step handling -------------------------------------------------------


def inject_previous_step(bundle: PairBundle, previous_maps_available: bool) -> PairBundle:
    """Resolve previous-step references against availability.

    With previous maps available the bundle already carries them and is
    returned unchanged.  On the first step every previous-step reference
    is removed; pair sets left with no positives (and link sets left with
    no denominator) are dropped and counted in ``dropped_empty``.
    """
    if previous_maps_available:
        return bundle

    dropped = 0
    pair_groups: dict[str, tuple[PairSet, ...]] = {}
    for name in ("vertex_contrast", "action_contrast"):
        kept: list[PairSet] = []
        for ps in getattr(bundle, name):
            positives = tuple(r for r in ps.positives if not r.previous_step)
            negatives = tuple(r for r in ps.negatives if not r.previous_step)
            if not positives:
                dropped += 1
                continue
            kept.append(PairSet(anchor=ps.anchor, positives=positives, negatives=negatives))
        pair_groups[name] = tuple(kept)

    links: list[LinkPairSet] = []
    for ls in bundle.link:
        denom = tuple(r for r in ls.denominator_positives if not r.previous_step)
        if not denom:
            dropped += 1
            continue
        links.append(replace(ls, denominator_positives=denom))

    return PairBundle(
        vertex_contrast=pair_groups["vertex_contrast"],
        action_contrast=pair_groups["action_contrast"],
        link=tuple(links),
        dropped_empty=dropped,
    )


# -- JSON interchange --------------------------------------------------------------


def _ref_to_dict(r: MapRef) -> dict:
    return {
        "token_index": r.token_index,
        "step": "previous" if r.previous_step else "current",
        "detached": r.detached,
    }


def _ref_from_dict(d: dict) -> MapRef:
    return MapRef(
        token_index=int(d["token_index"]),
        previous_step=d["step"] == "previous",
        detached=bool(d["detached"]),
    )


def serialize_bundle(bundle: PairBundle) -> str:
    doc = {
        "vertex_contrast": [
            {
                "anchor": _ref_to_dict(p.anchor),
                "positives": [_ref_to_dict(r) for r in p.positives],
                "negatives": [_ref_to_dict(r) for r in p.negatives],
            }
            for p in bundle.vertex_contrast
        ],
        "action_contrast": [
            {
                "anchor": _ref_to_dict(p.anchor),
                "positives": [_ref_to_dict(r) for r in p.positives],
                "negatives": [_ref_to_dict(r) for r in p.negatives],
            }
            for p in bundle.action_contrast
        ],
        "link": [
            {
                "anchor": _ref_to_dict(p.anchor),
                "linked_negative": _ref_to_dict(p.linked_negative),
                "denominator_positives": [_ref_to_dict(r) for r in p.denominator_positives],
            }
            for p in bundle.link
        ],
        "dropped_empty": bundle.dropped_empty,
    }
    return json.dumps(doc, indent=2) + "\n"


def deserialize_bundle(text: str) -> PairBundle:
    doc = json.loads(text)
    return PairBundle(
        vertex_contrast=tuple(
            PairSet(
                anchor=_ref_from_dict(p["anchor"]),
                positives=tuple(_ref_from_dict(r) for r in p["positives"]),
                negatives=tuple(_ref_from_dict(r) for r in p["negatives"]),
            )
            for p in doc["vertex_contrast"]
        ),
        action_contrast=tuple(
            PairSet(
                anchor=_ref_from_dict(p["anchor"]),
                positives=tuple(_ref_from_dict(r) for r in p["positives"]),
                negatives=tuple(_ref_from_dict(r) for r in p["negatives"]),
            )
            for p in doc["action_contrast"]
        ),
        link=tuple(
            LinkPairSet(
                anchor=_ref_from_dict(p["anchor"]),
                linked_negative=_ref_from_dict(p["linked_negative"]),
                denominator_positives=tuple(
                    _ref_from_dict(r) for r in p["denominator_positives"]
                ),
            )
            for p in doc["link"]
        ),
        dropped_empty=int(doc.get("dropped_empty", 0)),
    )
