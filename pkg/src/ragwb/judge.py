"""Blind-judged benchmark: collect answers, rank them, build leaderboards.

For every question each variant produces an answer; the answers are then
shown to a judge model under anonymous labels (A, B, C, ...) in an order
shuffled per question. The shuffle is seeded from the run seed and the
question id alone, so reruns and thread scheduling cannot move answers
around. The judge replies with a ``RANKING:`` line, which maps back to
variant names; per-variant positions are averaged into the leaderboard.

A question is excluded from aggregation when any of its answers fail,
when the judge call fails, or when the judge's reply stays unparseable
after the allowed re-asks. Exclusions are recorded, never silently
dropped.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import EndpointError, UserInputError, WorkbenchError
from .gateway import (
    ChatRequest,
    ChatResponse,
    ModelVariant,
    GatewayError,
    chat_complete,
    DEFAULT_MAX_TOKENS,
    DEFAULT_RETRY_MAX,
    DEFAULT_TEMPERATURE,
    DEFAULT_TIMEOUT,
)
from .prng import Xorshift64Star, derive_seed
from .rag import (
    DEFAULT_EXCERPT_CHARS,
    DEFAULT_LIMIT,
    DEFAULT_TEMPLATE,
    DEFAULT_THRESHOLD,
    rag_answer,
)
from .tfidf import TfidfIndex, load_index

logger = logging.getLogger(__name__)

LABELS = "ABCDEFGHIJKLMNOPQRSTUVWXYZ"
DEFAULT_PARALLELISM = 4
DEFAULT_JUDGE_REASKS = 1

CSV_HEADER = ["variant", "avg_position", "first_places", "questions"]


class BenchmarkError(EndpointError):
    """Run produced nothing to aggregate."""


class AggregationError(UserInputError):
    """Records disagree on the variant set or are unusable."""


class JudgeParseError(WorkbenchError):
    """Judge reply could not be turned into a ranking."""


class MissingRankingError(JudgeParseError):
    """No RANKING: line in the reply."""


class UnknownLabelError(JudgeParseError):
    """Ranking names a label that was never presented."""


class DuplicateLabelError(JudgeParseError):
    """Ranking repeats a label."""


class IncompleteRankingError(JudgeParseError):
    """Ranking does not cover every presented label."""


@dataclass(frozen=True)
class BenchmarkQuestion:
    id: str
    text: str
    reference: str | None = None


@dataclass
class AnswerRecord:
    content: str
    latency_ms: float
    attempts: int
    hits: list[dict] | None = None


@dataclass
class QuestionRecord:
    question_id: str
    question: str
    presentation_order: list[str]
    ranking: list[str]
    judge_attempts: int
    answers: dict[str, AnswerRecord] = field(default_factory=dict)

    def position_of(self, variant_name: str) -> int:
        """1-based rank of the variant in this question's judgement."""
        return self.ranking.index(variant_name) + 1


@dataclass
class ExcludedQuestion:
    question_id: str
    reason: str


@dataclass
class BenchmarkRun:
    seed: int
    variant_names: list[str]
    records: list[QuestionRecord]
    excluded: list[ExcludedQuestion]


@dataclass
class LeaderboardRow:
    variant: str
    avg_position: float
    first_places: int
    questions: int


@dataclass
class Leaderboard:
    rows: list[LeaderboardRow]


# --- questions ---------------------------------------------------------------

def load_questions(path: str | Path) -> list[BenchmarkQuestion]:
    """Read the question file: a JSON array of {id, text[, reference]}."""
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UserInputError(f"question file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise UserInputError(f"malformed question file {p}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise UserInputError(f"question file {p} must be a JSON array")
    questions = []
    seen = set()
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            raise UserInputError(f"{p}: entry {i} is not an object")
        qid = item.get("id")
        text = item.get("text")
        if not isinstance(qid, str) or not qid:
            raise UserInputError(f"{p}: entry {i} needs a non-empty string id")
        if not isinstance(text, str) or not text:
            raise UserInputError(f"{p}: entry {i} needs non-empty question text")
        if qid in seen:
            raise UserInputError(f"{p}: duplicate question id {qid!r}")
        seen.add(qid)
        reference = item.get("reference")
        if reference is not None and not isinstance(reference, str):
            raise UserInputError(f"{p}: entry {i} reference must be a string")
        questions.append(BenchmarkQuestion(id=qid, text=text, reference=reference))
    return questions


# --- judging -----------------------------------------------------------------

def build_judge_prompt(
    question_text: str,
    answers: Sequence[str],
    reference: str | None = None,
) -> str:
    """Prompt listing labeled answers and asking for a full ranking."""
    n = len(answers)
    if n == 0:
        raise UserInputError("cannot judge zero answers")
    if n > len(LABELS):
        raise UserInputError(f"at most {len(LABELS)} answers can be judged at once")
    labels = LABELS[:n]
    parts = [
        "You are ranking candidate answers to a question.",
        "",
        "Question:",
        question_text,
    ]
    if reference:
        parts += ["", "Reference answer:", reference]
    parts += ["", "Candidate answers:"]
    for label, answer in zip(labels, answers):
        parts += ["", f"Answer {label}:", answer]
    label_list = ",".join(labels)
    parts += [
        "",
        "Rank all candidates from best to worst by coherence (is the answer",
        "well-formed and self-consistent), relevance (does it address the",
        "question), and precision (is it specific and accurate rather than",
        "vague).",
        "You may explain your reasoning first, but the last line of your",
        "reply must be exactly of the form:",
        f"RANKING: {label_list}",
        f"with the labels {label_list} reordered so the best answer comes",
        "first. Use every label exactly once.",
    ]
    return "\n".join(parts)


def parse_judge_ranking(
    reply: str,
    presentation_order: Sequence[str],
) -> list[str]:
    """Map the reply's last RANKING: line back to variant names, best first.

    Label k refers to the k-th presented answer, so ``RANKING: B,A``
    over a presentation of (x, y) means y beat x.
    """
    labels = LABELS[: len(presentation_order)]
    ranking_lines = [
        line.strip() for line in reply.splitlines() if line.strip().upper().startswith("RANKING:")
    ]
    if not ranking_lines:
        raise MissingRankingError("no RANKING: line in judge reply")
    tail = ranking_lines[-1].split(":", 1)[1]
    tokens = [tok.strip().upper() for tok in tail.split(",")]
    tokens = [tok for tok in tokens if tok]
    seen = set()
    out = []
    for tok in tokens:
        if tok not in labels:
            raise UnknownLabelError(f"unknown label {tok!r} in ranking")
        if tok in seen:
            raise DuplicateLabelError(f"label {tok!r} ranked twice")
        seen.add(tok)
        out.append(presentation_order[labels.index(tok)])
    if len(out) != len(labels):
        raise IncompleteRankingError(
            f"ranking covers {len(out)} of {len(labels)} labels"
        )
    return out


# --- the run -----------------------------------------------------------------

def run_benchmark(
    questions: Sequence[BenchmarkQuestion],
    variants: Mapping[str, ModelVariant],
    judge: ModelVariant,
    seed: int,
    texts: Mapping[str, str] | None = None,
    index_root: str | Path | None = None,
    indexes: Mapping[str, TfidfIndex] | None = None,
    parallelism: int = DEFAULT_PARALLELISM,
    judge_reasks: int = DEFAULT_JUDGE_REASKS,
    temperature: float = DEFAULT_TEMPERATURE,
    max_tokens: int = DEFAULT_MAX_TOKENS,
    timeout: float = DEFAULT_TIMEOUT,
    retry_max: int = DEFAULT_RETRY_MAX,
    threshold: float = DEFAULT_THRESHOLD,
    limit: int = DEFAULT_LIMIT,
    excerpt_chars: int = DEFAULT_EXCERPT_CHARS,
    template: str = DEFAULT_TEMPLATE,
    chat: Callable[..., ChatResponse] = chat_complete,
) -> BenchmarkRun:
    """Answer and judge every question; failures exclude the question.

    The per-question shuffle seed depends only on the run seed and the
    question id, so results are stable under completion order and
    parallelism changes.
    """
    if not questions:
        raise UserInputError("no questions to benchmark")
    if not variants:
        raise UserInputError("no variants to benchmark")
    if len(variants) > len(LABELS):
        raise UserInputError(f"at most {len(LABELS)} variants can be benchmarked")
    if parallelism < 1:
        raise UserInputError("parallelism must be >= 1")
    if judge_reasks < 0:
        raise UserInputError("judge_reasks must be >= 0")
    if texts is None and any(v.uses_rag for v in variants.values()):
        raise UserInputError("retrieval variants need the document texts")

    names = list(variants)
    index_cache: dict[str, TfidfIndex] = dict(indexes or {})

    def index_for(variant: ModelVariant) -> TfidfIndex:
        key = variant.index_dir or ""
        if key not in index_cache:
            root = Path(index_root) if index_root is not None else Path(".")
            index_cache[key] = load_index(root / key)
        return index_cache[key]

    def answer_one(variant: ModelVariant, question: BenchmarkQuestion) -> AnswerRecord:
        if variant.uses_rag:
            if texts is None:
                raise UserInputError(
                    f"variant {variant.name!r} needs document texts for retrieval"
                )
            response, retrieval = rag_answer(
                variant,
                question.text,
                index_for(variant),
                texts,
                threshold=threshold,
                limit=limit,
                excerpt_chars=excerpt_chars,
                template=template,
                temperature=temperature,
                max_tokens=max_tokens,
                timeout=timeout,
                retry_max=retry_max,
                chat=chat,
            )
            hits = [{"uri": h.uri, "score": h.score} for h in retrieval.hits]
        else:
            request = ChatRequest(
                messages=[{"role": "user", "content": question.text}],
                temperature=temperature,
                max_tokens=max_tokens,
                timeout=timeout,
            )
            response = chat(variant, request, retry_max=retry_max)
            hits = None
        return AnswerRecord(
            content=response.content,
            latency_ms=response.latency_ms,
            attempts=response.attempts,
            hits=hits,
        )

    records: list[QuestionRecord] = []
    excluded: list[ExcludedQuestion] = []

    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        for question in questions:
            order = list(names)
            Xorshift64Star(derive_seed(seed, question.id)).shuffle(order)

            try:
                answer_list = list(
                    pool.map(lambda name: answer_one(variants[name], question), order)
                )
            except (GatewayError, UserInputError) as exc:
                logger.warning("question %s excluded: %s", question.id, exc)
                excluded.append(ExcludedQuestion(question.id, str(exc)))
                continue
            answers = dict(zip(order, answer_list))

            prompt = build_judge_prompt(
                question.text,
                [answers[name].content for name in order],
                reference=question.reference,
            )
            ranking: list[str] | None = None
            judge_attempts = 0
            failure: Exception | None = None
            for _ in range(1 + judge_reasks):
                judge_attempts += 1
                try:
                    reply = chat(
                        judge,
                        ChatRequest(
                            messages=[{"role": "user", "content": prompt}],
                            temperature=temperature,
                            max_tokens=max_tokens,
                            timeout=timeout,
                        ),
                        retry_max=retry_max,
                    )
                except GatewayError as exc:
                    failure = exc
                    break
                try:
                    ranking = parse_judge_ranking(reply.content, order)
                    break
                except JudgeParseError as exc:
                    failure = exc
            if ranking is None:
                assert failure is not None
                logger.warning("question %s excluded: %s", question.id, failure)
                excluded.append(ExcludedQuestion(question.id, str(failure)))
                continue

            records.append(
                QuestionRecord(
                    question_id=question.id,
                    question=question.text,
                    presentation_order=order,
                    ranking=ranking,
                    judge_attempts=judge_attempts,
                    answers=answers,
                )
            )

    if not records:
        raise BenchmarkError(
            f"all {len(questions)} questions were excluded, nothing to aggregate"
        )
    records.sort(key=lambda r: r.question_id)
    return BenchmarkRun(
        seed=seed, variant_names=names, records=records, excluded=excluded
    )


# --- aggregation -------------------------------------------------------------

def aggregate(
    records: Sequence[QuestionRecord], variant_names: Sequence[str]
) -> Leaderboard:
    """Average the per-question positions into a sorted leaderboard.

    Every record must rank exactly the given variants. Rows sort by
    average position, then name, ascending.
    """
    if not records:
        raise AggregationError("no records to aggregate")
    expected = set(variant_names)
    if len(expected) != len(variant_names):
        raise AggregationError("duplicate variant names")
    position_sum = {name: 0 for name in variant_names}
    first_places = {name: 0 for name in variant_names}
    for record in records:
        if set(record.ranking) != expected or len(record.ranking) != len(expected):
            raise AggregationError(
                f"record {record.question_id!r} ranks a different variant set"
            )
        for pos, name in enumerate(record.ranking, start=1):
            position_sum[name] += pos
        first_places[record.ranking[0]] += 1
    q = len(records)
    rows = [
        LeaderboardRow(
            variant=name,
            avg_position=position_sum[name] / q,
            first_places=first_places[name],
            questions=q,
        )
        for name in variant_names
    ]
    rows.sort(key=lambda r: (r.avg_position, r.variant))
    return Leaderboard(rows=rows)


# --- persistence and reports -------------------------------------------------

def records_to_json(run: BenchmarkRun) -> str:
    payload = {
        "seed": run.seed,
        "variants": run.variant_names,
        "records": [
            {
                "question_id": r.question_id,
                "question": r.question,
                "presentation_order": r.presentation_order,
                "ranking": r.ranking,
                "judge_attempts": r.judge_attempts,
                "answers": {
                    name: {
                        "content": a.content,
                        "latency_ms": a.latency_ms,
                        "attempts": a.attempts,
                        "hits": a.hits,
                    }
                    for name, a in r.answers.items()
                },
            }
            for r in run.records
        ],
        "excluded": [
            {"question_id": e.question_id, "reason": e.reason} for e in run.excluded
        ],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def load_records(path: str | Path) -> BenchmarkRun:
    """Read a records file back for offline re-aggregation."""
    p = Path(path)
    try:
        payload = json.loads(p.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise UserInputError(f"records file not found: {p}") from None
    except json.JSONDecodeError as exc:
        raise UserInputError(f"malformed records file {p}: {exc.msg}") from exc
    if not isinstance(payload, dict):
        raise UserInputError(f"records file {p} must be a JSON object")
    try:
        seed = payload["seed"]
        variant_names = payload["variants"]
        raw_records = payload["records"]
    except KeyError as exc:
        raise UserInputError(f"records file {p} is missing field {exc}") from None
    if not isinstance(raw_records, list) or not isinstance(variant_names, list):
        raise UserInputError(f"records file {p} has fields of the wrong type")
    records = []
    for i, raw in enumerate(raw_records):
        if not isinstance(raw, dict) or "ranking" not in raw:
            raise UserInputError(f"{p}: record {i} has no ranking")
        answers = {}
        for name, a in (raw.get("answers") or {}).items():
            answers[name] = AnswerRecord(
                content=a.get("content", ""),
                latency_ms=a.get("latency_ms", 0.0),
                attempts=a.get("attempts", 1),
                hits=a.get("hits"),
            )
        records.append(
            QuestionRecord(
                question_id=raw.get("question_id", str(i)),
                question=raw.get("question", ""),
                presentation_order=raw.get("presentation_order", []),
                ranking=list(raw["ranking"]),
                judge_attempts=raw.get("judge_attempts", 1),
                answers=answers,
            )
        )
    excluded = [
        ExcludedQuestion(e.get("question_id", ""), e.get("reason", ""))
        for e in payload.get("excluded", [])
    ]
    return BenchmarkRun(
        seed=seed, variant_names=variant_names, records=records, excluded=excluded
    )


def leaderboard_to_json(board: Leaderboard, seed: int) -> str:
    payload = {
        "seed": seed,
        "rows": [
            {
                "variant": r.variant,
                "avg_position": r.avg_position,
                "first_places": r.first_places,
                "questions": r.questions,
            }
            for r in board.rows
        ],
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def leaderboard_to_csv(board: Leaderboard) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_HEADER)
    for r in board.rows:
        writer.writerow([r.variant, repr(r.avg_position), r.first_places, r.questions])
    return buf.getvalue()


def leaderboard_to_series(board: Leaderboard) -> str:
    payload = {
        "average_position": {r.variant: r.avg_position for r in board.rows},
        "first_places": {r.variant: r.first_places for r in board.rows},
    }
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def format_leaderboard(board: Leaderboard) -> str:
    """Plain-text table for the terminal."""
    headers = ("Variant", "Avg position", "First places", "Questions")
    rows = [
        (r.variant, f"{r.avg_position:.2f}", str(r.first_places), str(r.questions))
        for r in board.rows
    ]
    widths = [
        max([len(headers[i])] + [len(row[i]) for row in rows]) for i in range(4)
    ]
    lines = [
        "  ".join(headers[i].ljust(widths[i]) for i in range(4)).rstrip(),
    ]
    for row in rows:
        lines.append("  ".join(row[i].ljust(widths[i]) for i in range(4)).rstrip())
    return "\n".join(lines) + "\n"


def emit_report(
    run: BenchmarkRun,
    board: Leaderboard,
    out_dir: str | Path,
    include_records: bool = True,
) -> dict[str, Path]:
    """Write leaderboard.json/csv, series.json, and optionally records.json.

    The three leaderboard files are pure functions of the rankings and
    the seed; records.json also carries answer text and latencies, so it
    varies between runs and is skipped when re-reporting.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "leaderboard_json": out / "leaderboard.json",
        "leaderboard_csv": out / "leaderboard.csv",
        "series_json": out / "series.json",
    }
    paths["leaderboard_json"].write_text(
        leaderboard_to_json(board, run.seed), encoding="utf-8"
    )
    paths["leaderboard_csv"].write_text(leaderboard_to_csv(board), encoding="utf-8")
    paths["series_json"].write_text(leaderboard_to_series(board), encoding="utf-8")
    if include_records:
        paths["records_json"] = out / "records.json"
        paths["records_json"].write_text(records_to_json(run), encoding="utf-8")
    return paths
