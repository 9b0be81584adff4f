"""Pairwise causal queries against a pluggable answer backend.

Each candidate pair becomes a three-option question asked from the
perspective agent's point of view.  Queries repeat with rotated option order
until a strict majority of rounds agrees; verdicts are canonicalized to
{a_causes_b, b_causes_a, none} and cached by query semantics so identical
component/metric kinds are resolved once.
"""
from __future__ import annotations

import hashlib
import json
import logging
import random
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .agents import Agent, CandidatePair, SAME_COMPONENT
from .errors import QueryError
from .graphbuild import A_CAUSES_B, B_CAUSES_A, NONE, ConfounderGraph

log = logging.getLogger(__name__)

CANONICAL_ORDER = (A_CAUSES_B, NONE, B_CAUSES_A)
LETTERS = ("A", "B", "C")

DEFAULT_MAX_ROUNDS = 3

_THINK = "Please think step by step to make sure that you have the right answer."
_FINAL = (
    "Please select from one of the following options: [A, B, C] as the final answer. "
    "Put it as the only content in the last line."
)


@dataclass(frozen=True)
class SemanticKey:
    """Instance-free identity of a causal query."""

    perspective_kind: str
    perspective_description: str
    interaction_kind: str  # same_component or the interaction kind
    other_kind: str
    other_description: str
    metric_a: tuple[str, str, str, str]  # (component kind, level, name, description)
    metric_b: tuple[str, str, str, str]

    def digest(self) -> str:
        payload = json.dumps(
            [
                self.perspective_kind, self.perspective_description,
                self.interaction_kind, self.other_kind, self.other_description,
                list(self.metric_a), list(self.metric_b),
            ],
            separators=(",", ":"),
        )
        return hashlib.sha256(payload.encode()).hexdigest()


@dataclass
class CausalQuery:
    system_preamble: str
    question: str
    options: dict[str, str]  # letter -> canonical meaning
    option_texts: dict[str, str]  # letter -> rendered option text
    pair_key: SemanticKey
    permutation_index: int
    a_id: str = ""
    b_id: str = ""

    def messages(self) -> list[dict]:
        return [
            {"role": "system", "content": self.system_preamble},
            {"role": "user", "content": self.question},
        ]


@dataclass
class CausalVerdict:
    relation: str
    votes: dict[str, int] = field(default_factory=dict)
    rounds: int = 0
    low_confidence: bool = False
    transcript: list[str] = field(default_factory=list)

    def to_obj(self) -> dict:
        return {
            "relation": self.relation,
            "votes": dict(self.votes),
            "rounds": self.rounds,
            "low_confidence": self.low_confidence,
        }

    @classmethod
    def from_obj(cls, obj: dict) -> "CausalVerdict":
        return cls(
            relation=obj["relation"],
            votes=dict(obj.get("votes", {})),
            rounds=int(obj.get("rounds", 0)),
            low_confidence=bool(obj.get("low_confidence", False)),
        )


def semantic_key(pair: CandidatePair, agents_by_id: dict[str, Agent]) -> SemanticKey:
    perspective = agents_by_id[pair.perspective].component
    if pair.locality == SAME_COMPONENT:
        interaction_kind = SAME_COMPONENT
        other = perspective
    else:
        interaction_kind = pair.interaction.kind
        other_id = (
            pair.interaction.callee_id
            if pair.interaction.caller_id == pair.perspective
            else pair.interaction.caller_id
        )
        other = agents_by_id[other_id].component
    mk = lambda node, comp: (comp.kind, node.level, node.metric_name, node.description)
    a_comp = perspective if pair.a.instance_id == perspective.instance_id else other
    b_comp = perspective if pair.b.instance_id == perspective.instance_id else other
    return SemanticKey(
        perspective_kind=perspective.kind,
        perspective_description=perspective.description,
        interaction_kind=interaction_kind,
        other_kind=other.kind,
        other_description=other.description,
        metric_a=mk(pair.a, a_comp),
        metric_b=mk(pair.b, b_comp),
    )


def build_prompt(
    pair: CandidatePair,
    permutation_index: int,
    agents_by_id: dict[str, Agent],
) -> CausalQuery:
    """Render the three-option question with options rotated by
    ``permutation_index``."""
    perspective = agents_by_id[pair.perspective].component
    key = semantic_key(pair, agents_by_id)

    preamble = (
        f"You are a service named {perspective.kind} in a software system and your "
        f"job is: {perspective.description}. You are about to figure out the causal "
        "relationship between a metric of you and a metric of another system component."
    )

    a, b = pair.a, pair.b
    own_of = lambda node: node.instance_id == perspective.instance_id
    lines = []
    if pair.locality != SAME_COMPONENT:
        other_id = a.instance_id if not own_of(a) else b.instance_id
        other = agents_by_id[other_id].component
        lines.append(
            f"{other.instance_id} is a system component that directly interacts with "
            f"you, whose job is: {other.description}."
        )

    def describe(node, first):
        owner = "you" if own_of(node) else node.instance_id
        opener = "is a metric of" if first else "is another metric of"
        return f"{node.metric_name} {opener} {owner} and it means the {node.description}."

    lines.append(describe(a, True))
    lines.append(describe(b, False))
    lines.append(
        "If we can only choose one, which of the following cause-and-effect "
        "relationship is more likely?"
    )

    def holder(node):
        return "you" if own_of(node) else node.instance_id

    option_text = {
        A_CAUSES_B: (
            f'A change in "{a.metric_name}" of {holder(a)} directly causes a change '
            f'in "{b.metric_name}" of {holder(b)}.'
        ),
        NONE: (
            "These two metrics do not directly influence each other, even if they "
            "might be correlated through other components in the system."
        ),
        B_CAUSES_A: (
            f'A change in "{b.metric_name}" of {holder(b)} directly causes a change '
            f'in "{a.metric_name}" of {holder(a)}.'
        ),
    }
    rotation = permutation_index % 3
    meanings = CANONICAL_ORDER[rotation:] + CANONICAL_ORDER[:rotation]
    options = dict(zip(LETTERS, meanings))
    option_texts = {letter: option_text[m] for letter, m in options.items()}
    for letter in LETTERS:
        lines.append(f"{letter}. {option_texts[letter]}")
    lines.append(_THINK)
    lines.append(_FINAL)

    return CausalQuery(
        system_preamble=preamble,
        question="\n\n".join(lines),
        options=options,
        option_texts=option_texts,
        pair_key=key,
        permutation_index=permutation_index,
        a_id=a.id,
        b_id=b.id,
    )


def extract_letter(reply: str) -> str | None:
    """Last non-empty line must equal A, B, or C after trimming."""
    for line in reversed(reply.splitlines()):
        line = line.strip().rstrip(".")
        if line:
            return line if line in LETTERS else None
    return None


def resolve(
    pair: CandidatePair,
    backend,
    agents_by_id: dict[str, Agent],
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> CausalVerdict:
    """Query with rotated options until a strict majority (>= 2 votes) of the
    rounds issued agrees; exhaustion gives a low-confidence ``none``."""
    if max_rounds < 3 or max_rounds % 2 == 0:
        raise ValueError("max_rounds must be odd and >= 3")
    votes = {m: 0 for m in CANONICAL_ORDER}
    transcript: list[str] = []
    rounds = 0
    for i in range(max_rounds):
        query = build_prompt(pair, i, agents_by_id)
        reply = _answer_with_retry(backend, query, pair)
        letter = extract_letter(reply)
        if letter is None:
            reply = _answer_with_retry(backend, query, pair)
            letter = extract_letter(reply)
        transcript.append(reply)
        rounds += 1
        if letter is None:
            log.warning("discarding unparseable round for pair %s/%s", pair.a.id, pair.b.id)
            continue
        meaning = query.options[letter]
        votes[meaning] += 1
        top = max(votes.values())
        if top >= 2 and 2 * top > rounds:
            return CausalVerdict(
                relation=max(CANONICAL_ORDER, key=lambda m: votes[m]),
                votes=votes, rounds=rounds, transcript=transcript,
            )
    return CausalVerdict(
        relation=NONE, votes=votes, rounds=rounds,
        low_confidence=True, transcript=transcript,
    )


def _answer_with_retry(backend, query, pair, retries: int = 2) -> str:
    last = None
    for _ in range(retries + 1):
        try:
            return backend.answer(query)
        except QueryError:
            raise
        except Exception as e:  # transport-level failure
            last = e
    raise QueryError(
        f"backend failed after {retries + 1} attempts: {last}",
        pair_id=f"{pair.a.id}~{pair.b.id}",
    )


class SemanticCache:
    """Verdict cache keyed by SemanticKey digest; optional JSON persistence.

    Safe for concurrent use; concurrent misses on one key resolve once.
    """

    def __init__(self, path=None):
        self.path = path
        self._store: dict[str, CausalVerdict] = {}
        self._lock = threading.Lock()
        self._inflight: dict[str, threading.Event] = {}
        if path is not None:
            try:
                with open(path) as f:
                    for digest, obj in json.load(f).items():
                        self._store[digest] = CausalVerdict.from_obj(obj)
            except FileNotFoundError:
                pass

    def __len__(self):
        return len(self._store)

    def get(self, digest: str) -> CausalVerdict | None:
        with self._lock:
            return self._store.get(digest)

    def save(self) -> None:
        if self.path is None:
            return
        with self._lock:
            obj = {d: v.to_obj() for d, v in self._store.items()}
        with open(self.path, "w") as f:
            json.dump(obj, f, indent=2, sort_keys=True)

    def resolve(self, digest: str, compute) -> CausalVerdict:
        while True:
            with self._lock:
                if digest in self._store:
                    return self._store[digest]
                event = self._inflight.get(digest)
                if event is None:
                    event = threading.Event()
                    self._inflight[digest] = event
                    owner = True
                else:
                    owner = False
            if owner:
                try:
                    verdict = compute()
                    with self._lock:
                        self._store[digest] = verdict
                    return verdict
                finally:
                    with self._lock:
                        del self._inflight[digest]
                    event.set()
            else:
                event.wait()


def cached_resolve(
    pair: CandidatePair,
    backend,
    cache: SemanticCache,
    agents_by_id: dict[str, Agent],
    max_rounds: int = DEFAULT_MAX_ROUNDS,
) -> CausalVerdict:
    digest = semantic_key(pair, agents_by_id).digest()
    return cache.resolve(
        digest, lambda: resolve(pair, backend, agents_by_id, max_rounds)
    )


def resolve_all(
    pairs: list[CandidatePair],
    backend,
    agents_by_id: dict[str, Agent],
    cache: SemanticCache | None = None,
    max_rounds: int = DEFAULT_MAX_ROUNDS,
    parallelism: int = 8,
) -> list[tuple[CandidatePair, CausalVerdict]]:
    """Resolve every pair (concurrently, single-flight per semantic key);
    output order matches input order."""
    cache = cache if cache is not None else SemanticCache()
    with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
        verdicts = list(
            pool.map(
                lambda p: cached_resolve(p, backend, cache, agents_by_id, max_rounds),
                pairs,
            )
        )
    cache.save()
    return list(zip(pairs, verdicts))


# ---------------------------------------------------------------------------
# Answer backends


class GroundTruthBackend:
    """Answers from a reference confounder graph; deterministic."""

    def __init__(self, reference: ConfounderGraph):
        self.reference = reference
        self.calls = 0

    def answer(self, query: CausalQuery) -> str:
        self.calls += 1
        relation = self._truth(query)
        for letter, meaning in query.options.items():
            if meaning == relation:
                return letter
        raise QueryError("reference relation missing from options")

    def _truth(self, query: CausalQuery) -> str:
        a, b = query.a_id, query.b_id
        if (a, b) in self.reference.edges:
            return A_CAUSES_B
        if (b, a) in self.reference.edges:
            return B_CAUSES_A
        return NONE


class NoisyBackend(GroundTruthBackend):
    """Ground truth with a seeded per-round flip probability."""

    def __init__(self, reference: ConfounderGraph, flip_p: float, seed: int = 0):
        super().__init__(reference)
        self.flip_p = flip_p
        self.seed = seed

    def _truth(self, query: CausalQuery) -> str:
        truth = super()._truth(query)
        rng = random.Random(
            f"{self.seed}:{query.pair_key.digest()}:{query.permutation_index}"
        )
        if rng.random() < self.flip_p:
            wrong = [m for m in CANONICAL_ORDER if m != truth]
            return rng.choice(wrong)
        return truth


class HttpChatBackend:
    """Chat-completion endpoint speaking the common /chat/completions shape."""

    def __init__(self, url, model, token=None, temperature=0.0, timeout=60.0,
                 transport=None):
        import httpx

        self.url = url
        self.model = model
        self.temperature = temperature
        headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(headers=headers, timeout=timeout,
                                    transport=transport)

    def answer(self, query: CausalQuery) -> str:
        resp = self._client.post(
            self.url,
            json={
                "model": self.model,
                "messages": query.messages(),
                "temperature": self.temperature,
            },
        )
        resp.raise_for_status()
        return resp.json()["choices"][0]["message"]["content"]
