"""Prompt structure: noun-group vertices joined by action hyperedges.

A prompt is modeled as a hypergraph over its tokens.  Adjective+noun
groups become vertices, each action word becomes a hyperedge over two or
more participating vertices, and every remaining token is environment.

Two parsers produce these graphs:

* :func:`parse_annotated` reads an explicit inline markup::

      [white dog]{d} <plays>{d,c} with [ginger cat]{c} in a forest

  Square brackets delimit a noun group and angle brackets an action; the
  ``{...}`` block carries the group id, or the comma-separated ids of the
  action's parties.  Everything unmarked is environment.

* :func:`parse_template` handles plain ``NP1 VERB NP2 [PREP NP3]``
  prompts ("Cat chasing mouse under tree") given explicit verb and
  preposition word lists, so no NLP model is involved.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

_PUNCT_EDGES = ".,;:!?'\"()"


class PromptParseError(ValueError):
    """Malformed prompt text; carries 1-based line/column of the fault."""

    def __init__(self, message: str, line: int = 1, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class GraphValidationError(ValueError):
    """A structurally invalid hypergraph (bad ids, broken partition, ...)."""


@dataclass(frozen=True)
class Token:
    index: int
    text: str


@dataclass(frozen=True)
class NounGroup:
    id: str
    token_indices: tuple[int, ...]


@dataclass(frozen=True)
class ActionEdge:
    id: str
    action_token_indices: tuple[int, ...]
    party_ids: tuple[str, ...]


@dataclass(frozen=True)
class SemanticHypergraph:
    tokens: tuple[Token, ...]
    vertices: tuple[NounGroup, ...]
    edges: tuple[ActionEdge, ...]
    environment_token_indices: frozenset[int]

    def __post_init__(self):
        validate(self)

    # convenience lookups used throughout pairing and metrics

    def vertex(self, vertex_id: str) -> NounGroup:
        for v in self.vertices:
            if v.id == vertex_id:
                return v
        raise KeyError(f"unknown vertex id {vertex_id!r}")

    def vertex_of_token(self, index: int) -> NounGroup | None:
        for v in self.vertices:
            if index in v.token_indices:
                return v
        return None

    @property
    def n_tokens(self) -> int:
        return len(self.tokens)


def validate(graph: SemanticHypergraph) -> None:
    """Check every structural invariant; raise GraphValidationError if broken."""
    tokens = graph.tokens
    if not tokens:
        raise GraphValidationError("graph has no tokens")
    for i, tok in enumerate(tokens):
        if tok.index != i:
            raise GraphValidationError(f"token indices not contiguous at position {i}")
        if not tok.text:
            raise GraphValidationError(f"token {i} has empty text")
    n = len(tokens)

    if not graph.vertices:
        raise GraphValidationError("graph has no vertices")
    seen_vertex_ids = set()
    claimed: dict[int, str] = {}
    for v in graph.vertices:
        if not v.id:
            raise GraphValidationError("vertex with empty id")
        if v.id in seen_vertex_ids:
            raise GraphValidationError(f"duplicate vertex id {v.id!r}")
        seen_vertex_ids.add(v.id)
        if not v.token_indices:
            raise GraphValidationError(f"vertex {v.id!r} has no tokens")
        for idx in v.token_indices:
            if not 0 <= idx < n:
                raise GraphValidationError(f"vertex {v.id!r} references bad token {idx}")
            if idx in claimed:
                raise GraphValidationError(
                    f"token {idx} claimed by both {claimed[idx]!r} and vertex {v.id!r}"
                )
            claimed[idx] = f"vertex {v.id}"

    seen_edge_ids = set()
    for e in graph.edges:
        if not e.id:
            raise GraphValidationError("edge with empty id")
        if e.id in seen_edge_ids:
            raise GraphValidationError(f"duplicate edge id {e.id!r}")
        seen_edge_ids.add(e.id)
        if not e.action_token_indices:
            raise GraphValidationError(f"edge {e.id!r} has no action tokens")
        if len(e.party_ids) < 2:
            raise GraphValidationError(
                f"edge {e.id!r} has {len(e.party_ids)} party, need at least 2"
            )
        if len(set(e.party_ids)) != len(e.party_ids):
            raise GraphValidationError(f"edge {e.id!r} repeats a party")
        for pid in e.party_ids:
            if pid not in seen_vertex_ids:
                raise GraphValidationError(f"edge {e.id!r} references unknown vertex {pid!r}")
        for idx in e.action_token_indices:
            if not 0 <= idx < n:
                raise GraphValidationError(f"edge {e.id!r} references bad token {idx}")
            if idx in claimed:
                raise GraphValidationError(
                    f"token {idx} claimed by both {claimed[idx]!r} and edge {e.id!r}"
                )
            claimed[idx] = f"edge {e.id}"

    for idx in graph.environment_token_indices:
        if not 0 <= idx < n:
            raise GraphValidationError(f"environment references bad token {idx}")
        if idx in claimed:
            raise GraphValidationError(
                f"token {idx} claimed by both {claimed[idx]!r} and environment"
            )
        claimed[idx] = "environment"

    missing = [i for i in range(n) if i not in claimed]
    if missing:
        raise GraphValidationError(f"tokens {missing} belong to no vertex, edge, or environment")


def _strip_word(word: str) -> str:
    return word.strip(_PUNCT_EDGES)


# -- annotated markup parser ----------------------------------------------------


class _Scanner:
    """Character cursor with 1-based line/column tracking."""

    def __init__(self, text: str):
        self.text = text
        self.pos = 0
        self.line = 1
        self.column = 1

    def at_end(self) -> bool:
        return self.pos >= len(self.text)

    def peek(self) -> str:
        return self.text[self.pos]

    def advance(self) -> str:
        ch = self.text[self.pos]
        self.pos += 1
        if ch == "\n":
            self.line += 1
            self.column = 1
        else:
            self.column += 1
        return ch

    def location(self) -> tuple[int, int]:
        return self.line, self.column

    def skip_space(self) -> None:
        while not self.at_end() and self.peek().isspace():
            self.advance()

    def read_until(self, closer: str, opener: str, opened_at: tuple[int, int]) -> str:
        start = self.pos
        while not self.at_end():
            if self.peek() == closer:
                body = self.text[start : self.pos]
                self.advance()
                return body
            if self.peek() in "[]<>{}" and self.peek() != closer:
                line, col = self.location()
                raise PromptParseError(
                    f"unexpected {self.peek()!r} inside {opener!r} block", line, col
                )
            self.advance()
        raise PromptParseError(f"unclosed {opener!r}", *opened_at)

    def read_id_block(self, owner: str, owner_at: tuple[int, int]) -> list[str]:
        if self.at_end() or self.peek() != "{":
            raise PromptParseError(f"expected '{{id}}' after {owner!r}", *owner_at)
        opened_at = self.location()
        self.advance()
        body = self.read_until("}", "{", opened_at)
        ids = [part.strip() for part in body.split(",")]
        if any(not i for i in ids):
            raise PromptParseError("empty id in '{...}' block", *opened_at)
        for i in ids:
            if not all(c.isalnum() or c == "_" for c in i):
                raise PromptParseError(f"invalid id {i!r}", *opened_at)
        return ids

    def read_word(self) -> str:
        start = self.pos
        while not self.at_end() and not self.peek().isspace() and self.peek() not in "[]<>{}":
            self.advance()
        return self.text[start : self.pos]


def parse_annotated(text: str) -> SemanticHypergraph:
    """Parse inline-markup prompt text into a hypergraph.

    Token indices count words in reading order with all markup stripped,
    so the annotated prompt and its plain-text rendering agree on
    positions.  Unmarked words become environment tokens.
    """
    sc = _Scanner(text)
    tokens: list[Token] = []
    vertices: list[NounGroup] = []
    group_positions: dict[str, tuple[int, int]] = {}
    # (words joined, action indices, party ids, location) until groups are known
    pending_edges: list[tuple[str, tuple[int, ...], list[str], tuple[int, int]]] = []
    environment: list[int] = []

    def push_words(raw: str, where: tuple[int, int]) -> list[int]:
        indices = []
        for w in raw.split():
            word = _strip_word(w)
            if not word:
                continue
            indices.append(len(tokens))
            tokens.append(Token(index=len(tokens), text=word))
        if not indices:
            raise PromptParseError("block contains no words", *where)
        return indices

    while True:
        sc.skip_space()
        if sc.at_end():
            break
        here = sc.location()
        ch = sc.peek()
        if ch == "[":
            sc.advance()
            body = sc.read_until("]", "[", here)
            ids = sc.read_id_block("]", here)
            if len(ids) != 1:
                raise PromptParseError("noun group takes exactly one id", *here)
            if ids[0] in group_positions:
                raise PromptParseError(f"duplicate id {ids[0]!r}", *here)
            indices = push_words(body, here)
            group_positions[ids[0]] = here
            vertices.append(NounGroup(id=ids[0], token_indices=tuple(indices)))
        elif ch == "<":
            sc.advance()
            body = sc.read_until(">", "<", here)
            ids = sc.read_id_block(">", here)
            if len(ids) < 2:
                raise PromptParseError(
                    f"action lists {len(ids)} party, need at least 2", *here
                )
            indices = push_words(body, here)
            pending_edges.append(("_".join(tokens[i].text for i in indices), tuple(indices), ids, here))
        elif ch in "]>}{":
            raise PromptParseError(f"unmatched {ch!r}", *here)
        else:
            raw = sc.read_word()
            word = _strip_word(raw)
            if word:
                environment.append(len(tokens))
                tokens.append(Token(index=len(tokens), text=word))

    edges: list[ActionEdge] = []
    used_edge_ids: set[str] = set()
    for base_id, indices, party_ids, where in pending_edges:
        for pid in party_ids:
            if pid not in group_positions:
                raise PromptParseError(f"action references unknown group {pid!r}", *where)
        edge_id = base_id
        bump = 2
        while edge_id in used_edge_ids:
            edge_id = f"{base_id}_{bump}"
            bump += 1
        used_edge_ids.add(edge_id)
        edges.append(
            ActionEdge(id=edge_id, action_token_indices=indices, party_ids=tuple(party_ids))
        )

    if not vertices:
        raise PromptParseError("prompt contains no noun groups")
    try:
        return SemanticHypergraph(
            tokens=tuple(tokens),
            vertices=tuple(vertices),
            edges=tuple(edges),
            environment_token_indices=frozenset(environment),
        )
    except GraphValidationError as err:
        raise PromptParseError(str(err)) from err


# -- template parser --------------------------------------------------------------


def parse_template(
    text: str,
    verb_lexicon: set[str] | None = None,
    preposition_lexicon: set[str] | None = None,
) -> SemanticHypergraph:
    """Parse a plain ``NP1 VERB NP2 [PREP NP3]`` prompt.

    The verb is the first token found in ``verb_lexicon`` (case folded);
    the environment starts at the first later token found in
    ``preposition_lexicon``.  Both lexicons default to the word lists
    shipped with the package.
    """
    verbs = verb_lexicon if verb_lexicon is not None else default_verbs()
    preps = preposition_lexicon if preposition_lexicon is not None else default_prepositions()
    words = [w for w in (_strip_word(raw) for raw in text.split()) if w]
    if not words:
        raise PromptParseError("empty prompt")

    verb_at = next((i for i, w in enumerate(words) if w.lower() in verbs), None)
    if verb_at is None:
        raise PromptParseError("no verb found")
    if verb_at == 0:
        raise PromptParseError("verb is the first token, leaving no subject")
    if verb_at == len(words) - 1:
        raise PromptParseError("verb is the last token, leaving no object")

    prep_at = next(
        (i for i in range(verb_at + 1, len(words)) if words[i].lower() in preps), None
    )
    object_end = prep_at if prep_at is not None else len(words)
    if object_end == verb_at + 1:
        raise PromptParseError("empty noun phrase after the verb")

    tokens = tuple(Token(index=i, text=w) for i, w in enumerate(words))
    subject = NounGroup(id="v1", token_indices=tuple(range(0, verb_at)))
    obj = NounGroup(id="v2", token_indices=tuple(range(verb_at + 1, object_end)))
    edge = ActionEdge(
        id=words[verb_at], action_token_indices=(verb_at,), party_ids=("v1", "v2")
    )
    environment = frozenset(range(object_end, len(words))) if prep_at is not None else frozenset()
    return SemanticHypergraph(
        tokens=tokens,
        vertices=(subject, obj),
        edges=(edge,),
        environment_token_indices=environment,
    )


def _load_lexicon(name: str) -> set[str]:
    data = resources.files("hyperguide.data").joinpath(name).read_text()
    return {line.strip().lower() for line in data.splitlines() if line.strip()}


def default_verbs() -> set[str]:
    return _load_lexicon("verbs.txt")


def default_prepositions() -> set[str]:
    return _load_lexicon("prepositions.txt")


# -- JSON interchange ---------------------------------------------------------------


def serialize(graph: SemanticHypergraph) -> str:
    """Stable JSON rendering; inverse of :func:`deserialize`."""
    doc = {
        "tokens": [t.text for t in graph.tokens],
        "vertices": [
            {"id": v.id, "token_indices": list(v.token_indices)} for v in graph.vertices
        ],
        "edges": [
            {
                "id": e.id,
                "action_token_indices": list(e.action_token_indices),
                "party_ids": list(e.party_ids),
            }
            for e in graph.edges
        ],
        "environment": sorted(graph.environment_token_indices),
    }
    return json.dumps(doc, indent=2) + "\n"


def deserialize(text: str) -> SemanticHypergraph:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise GraphValidationError(f"not valid JSON: {err}") from err
    if not isinstance(doc, dict):
        raise GraphValidationError("graph document must be a JSON object")
    for key in ("tokens", "vertices", "edges", "environment"):
        if key not in doc:
            raise GraphValidationError(f"missing field {key!r}")
    try:
        tokens = tuple(Token(index=i, text=str(t)) for i, t in enumerate(doc["tokens"]))
        vertices = tuple(
            NounGroup(id=str(v["id"]), token_indices=tuple(int(i) for i in v["token_indices"]))
            for v in doc["vertices"]
        )
        edges = tuple(
            ActionEdge(
                id=str(e["id"]),
                action_token_indices=tuple(int(i) for i in e["action_token_indices"]),
                party_ids=tuple(str(p) for p in e["party_ids"]),
            )
            for e in doc["edges"]
        )
        environment = frozenset(int(i) for i in doc["environment"])
    except (KeyError, TypeError, ValueError) as err:
        raise GraphValidationError(f"malformed graph document: {err}") from err
    return SemanticHypergraph(
        tokens=tokens, vertices=vertices, edges=edges, environment_token_indices=environment
    )


def load(path: str | Path) -> SemanticHypergraph:
    return deserialize(Path(path).read_text())


def save(graph: SemanticHypergraph, path: str | Path) -> None:
    Path(path).write_text(serialize(graph))
