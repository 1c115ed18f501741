"""Retrieval-augmented prompting on top of the TF-IDF index.

A query is scored against every document; hits at or above the score
threshold (and strictly above zero, so pure non-overlap never counts as
a hit even with the threshold at zero) are ranked, truncated to the hit
limit, and excerpted from the start of each document. The excerpts are
stitched under the question with a fixed preamble, then the augmented
prompt goes to the model endpoint. A context budget prunes hits from the
tail when the assembled prompt would not fit.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .errors import UserInputError
from .gateway import (
    ChatRequest,
    ChatResponse,
    GatewayError,
    ModelVariant,
    chat_complete,
    DEFAULT_MAX_TOKENS,
    DEFAULT_RETRY_MAX,
    DEFAULT_TEMPERATURE,
    DEFAULT_TIMEOUT,
)
from .tfidf import TfidfIndex, cosine_scores, vectorize_query

logger = logging.getLogger(__name__)

DEFAULT_THRESHOLD = 0.1
DEFAULT_LIMIT = 3
DEFAULT_EXCERPT_CHARS = 1200
DEFAULT_TEMPLATE = "{query}\nKeep in mind this context:\n{context}"

_PLACEHOLDER_RE = re.compile(r"\{(query|context)\}")


class RagError(UserInputError):
    """Invalid retrieval parameters or missing document text."""


class RagEndpointError(GatewayError):
    """Endpoint failure after retrieval succeeded; keeps the retrieval."""

    def __init__(self, variant_name: str, message: str, retrieval: "RetrievalResult") -> None:
        super().__init__(variant_name, message)
        self.retrieval = retrieval


@dataclass(frozen=True)
class Hit:
    uri: str
    score: float
    excerpt: str


@dataclass
class RetrievalResult:
    query: str
    hits: list[Hit]
    threshold: float
    limit: int


def retrieve(
    index: TfidfIndex,
    texts: Mapping[str, str],
    query: str,
    threshold: float = DEFAULT_THRESHOLD,
    limit: int = DEFAULT_LIMIT,
    excerpt_chars: int = DEFAULT_EXCERPT_CHARS,
) -> RetrievalResult:
    """Rank documents against *query* and keep the qualifying few.

    Hits need a score at or above *threshold* and above zero, come back
    sorted by descending score (ties to the earlier index row), and are
    cut to *limit*. Each hit carries the first *excerpt_chars* characters
    of its document's text from *texts*.
    """
    if threshold < 0.0:
        raise RagError(f"threshold must be >= 0, got {threshold}")
    if limit < 0:
        raise RagError(f"limit must be >= 0, got {limit}")
    if excerpt_chars < 1:
        raise RagError(f"excerpt_chars must be >= 1, got {excerpt_chars}")

    scores = cosine_scores(index, vectorize_query(index, query))
    ranked = sorted(
        (row for row, s in enumerate(scores) if s >= threshold and s > 0.0),
        key=lambda row: (-scores[row], row),
    )[:limit]

    hits = []
    for row in ranked:
        uri = index.uris[row]
        try:
            text = texts[uri]
        except KeyError:
            raise RagError(f"index row {row} refers to {uri!r}, which has no text") from None
        hits.append(Hit(uri=uri, score=scores[row], excerpt=text[:excerpt_chars]))
    return RetrievalResult(query=query, hits=hits, threshold=threshold, limit=limit)


def augment_prompt(
    query: str,
    excerpts: list[str],
    template: str = DEFAULT_TEMPLATE,
) -> str:
    """Fill the prompt template; with no excerpts the query passes through.

    Placeholders are substituted in a single pass, so braces inside the
    query or the excerpts are never re-expanded.
    """
    if "{query}" not in template:
        raise RagError("prompt template must contain {query}")
    if not excerpts:
        return query
    context = "\n".join(excerpts)
    values = {"query": query, "context": context}
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def rag_answer(
    variant: ModelVariant,
    query: str,
    index: TfidfIndex,
    texts: Mapping[str, str],
    threshold: float = DEFAULT_THRESHOLD,
    limit: int = DEFAULT_LIMIT,
    excerpt_chars: int = DEFAULT_EXCERPT_CHARS,
    template: str = DEFAULT_TEMPLATE,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    timeout: float = DEFAULT_TIMEOUT,
    retry_max: int = DEFAULT_RETRY_MAX,
    chat: Callable[..., ChatResponse] = chat_complete,
) -> tuple[ChatResponse, RetrievalResult]:
    """Retrieve, fit the augmented prompt into the variant's budget, ask.

    Hits are dropped from the weakest end until the prompt fits
    ``variant.context_budget_chars``; each drop logs a warning. The
    returned retrieval reflects what was actually sent.
    """
    retrieval = retrieve(
        index,
        texts,
        query,
        threshold=threshold,
        limit=limit,
        excerpt_chars=excerpt_chars,
    )
    hits = list(retrieval.hits)
    text = augment_prompt(query, [h.excerpt for h in hits], template)
    while len(text) > variant.context_budget_chars and hits:
        dropped = hits.pop()
        logger.warning(
            "%s: dropping hit %s to fit context budget (%d > %d chars)",
            variant.name,
            dropped.uri,
            len(text),
            variant.context_budget_chars,
        )
        text = augment_prompt(query, [h.excerpt for h in hits], template)
    if len(text) > variant.context_budget_chars:
        logger.warning(
            "%s: bare query still exceeds context budget (%d > %d chars)",
            variant.name,
            len(text),
            variant.context_budget_chars,
        )
    retrieval.hits = hits

    request = ChatRequest(
        messages=[{"role": "user", "content": text}],
        temperature=temperature,
        max_tokens=max_tokens,
        timeout=timeout,
    )
    try:
        response = chat(variant, request, retry_max=retry_max)
    except GatewayError as exc:
        message = str(exc)
        prefix = f"{variant.name}: "
        if message.startswith(prefix):
            message = message[len(prefix):]
        raise RagEndpointError(variant.name, message, retrieval) from exc
    return response, retrieval
