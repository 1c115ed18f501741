"""QA dataset curation: fragmenting theses, generating pairs, splitting.

Long extracted texts are cut into bounded fragments at natural boundaries
so each fits in a generation prompt. An instruction-following model turns
a fragment into tab-separated question/answer lines; parsed pairs carry
their source fragment. The train/test split shuffles with the portable
generator from :mod:`ragwb.prng`, so the same seed yields the same split
on any platform.
"""

from __future__ import annotations

import json
import logging
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

from .corpus import ThesisRecord
from .errors import UserInputError
from .prng import Xorshift64Star

logger = logging.getLogger(__name__)

MIN_FRAGMENT_CHARS = 200
DEFAULT_MAX_FRAGMENT_CHARS = 1500
DEFAULT_SPLIT_RATIO = 0.75

DEFAULT_QA_INSTRUCTION = (
    "Read the following thesis fragment and write question/answer pairs "
    "that it fully supports. Output one pair per line in the exact form "
    "Q: <question>\\tA: <answer> with a single tab between the two parts. "
    "Do not number the lines or add any other text.\n\n"
    "Fragment:\n{fragment}"
)

# end of a paragraph break: blank line plus any following indentation
_PARA_RE = re.compile(r"\n[ \t\r]*\n\s*")
# end of a sentence: terminal punctuation plus the whitespace after it
_SENT_RE = re.compile(r"[.!?]\s+")
_QA_LINE_RE = re.compile(r"^Q:\s*(.+?)\s*\tA:\s*(.+?)\s*$")


class QaError(UserInputError):
    """Invalid QA dataset operation or malformed dataset file."""


@dataclass(frozen=True)
class Fragment:
    """Contiguous slice of one document's text."""

    source_uri: str
    ordinal: int
    text: str


@dataclass(frozen=True)
class QaPair:
    prompt: str
    completion: str
    fragment: str


@dataclass
class QaGenerationResult:
    pairs: list[QaPair]
    skipped: int


@dataclass
class SplitDataset:
    train: list[QaPair]
    test: list[QaPair]
    seed: int
    ratio: float


def _cut_points(text: str, pattern: re.Pattern) -> list[int]:
    """Match end offsets strictly inside the text, ascending."""
    return [m.end() for m in pattern.finditer(text) if 0 < m.end() < len(text)]


def fragment_document(
    record: ThesisRecord,
    max_fragment_chars: int = DEFAULT_MAX_FRAGMENT_CHARS,
) -> list[Fragment]:
    """Split a document's text into fragments of at most *max_fragment_chars*.

    Cuts prefer paragraph breaks, then sentence ends, then a hard cut at
    the limit. Fragments partition the text exactly: concatenating them
    reproduces ``record.raw_content`` byte for byte, and every fragment is
    non-empty. Empty documents yield no fragments.
    """
    if max_fragment_chars < MIN_FRAGMENT_CHARS:
        raise ValueError(
            f"max_fragment_chars must be >= {MIN_FRAGMENT_CHARS}, "
            f"got {max_fragment_chars}"
        )
    text = record.raw_content
    if not text:
        return []

    para_points = _cut_points(text, _PARA_RE)
    sent_points = _cut_points(text, _SENT_RE)

    fragments: list[Fragment] = []
    start = 0
    while start < len(text):
        end = start + max_fragment_chars
        if end >= len(text):
            cut = len(text)
        else:
            # largest boundary that still fits; paragraph wins over sentence
            cut = max(
                (p for p in para_points if start < p <= end),
                default=0,
            ) or max(
                (p for p in sent_points if start < p <= end),
                default=0,
            ) or end
        fragments.append(
            Fragment(source_uri=record.uri, ordinal=len(fragments), text=text[start:cut])
        )
        start = cut
    return fragments


def fragment_corpus(
    corpus: Mapping[str, ThesisRecord],
    max_fragment_chars: int = DEFAULT_MAX_FRAGMENT_CHARS,
) -> list[Fragment]:
    """Fragment every document with extracted text, in uri order."""
    out: list[Fragment] = []
    for uri in sorted(corpus):
        out.extend(fragment_document(corpus[uri], max_fragment_chars))
    return out


# --- generation ------------------------------------------------------------

def build_generation_prompt(fragment: Fragment, instruction_template: str) -> str:
    if "{fragment}" not in instruction_template:
        raise QaError("instruction template must contain {fragment}")
    return instruction_template.replace("{fragment}", fragment.text)


def parse_qa_lines(raw: str, fragment: Fragment) -> QaGenerationResult:
    """Extract ``Q: ...<TAB>A: ...`` lines; count anything else as skipped."""
    pairs: list[QaPair] = []
    skipped = 0
    for line in raw.splitlines():
        if not line.strip():
            continue
        match = _QA_LINE_RE.match(line)
        if match is None:
            skipped += 1
            continue
        pairs.append(
            QaPair(prompt=match.group(1), completion=match.group(2), fragment=fragment.text)
        )
    return QaGenerationResult(pairs=pairs, skipped=skipped)


def generate_qa(
    fragment: Fragment,
    generator: Callable[[str], str],
    instruction_template: str = DEFAULT_QA_INSTRUCTION,
) -> QaGenerationResult:
    """Ask *generator* for pairs from one fragment and parse its reply."""
    raw = generator(build_generation_prompt(fragment, instruction_template))
    result = parse_qa_lines(raw, fragment)
    if result.skipped:
        logger.warning(
            "%s#%d: skipped %d malformed generation line(s)",
            fragment.source_uri,
            fragment.ordinal,
            result.skipped,
        )
    return result


def generate_qa_batch(
    fragments: Sequence[Fragment],
    generator: Callable[[str], str],
    instruction_template: str = DEFAULT_QA_INSTRUCTION,
    parallelism: int = 4,
) -> QaGenerationResult:
    """Generate pairs for many fragments concurrently.

    Output order is by (source uri, ordinal) regardless of completion
    order, so the dataset is stable under scheduling.
    """
    if parallelism < 1:
        raise ValueError("parallelism must be >= 1")
    indexed = sorted(fragments, key=lambda f: (f.source_uri, f.ordinal))
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        results = list(
            pool.map(
                lambda frag: generate_qa(frag, generator, instruction_template),
                indexed,
            )
        )
    pairs: list[QaPair] = []
    skipped = 0
    for result in results:
        pairs.extend(result.pairs)
        skipped += result.skipped
    return QaGenerationResult(pairs=pairs, skipped=skipped)


# --- split and statistics --------------------------------------------------

def split_dataset(
    pairs: Sequence[QaPair],
    seed: int,
    ratio: float = DEFAULT_SPLIT_RATIO,
) -> SplitDataset:
    """Shuffle deterministically and cut: first floor(ratio*N) go to train.

    Train and test are disjoint and together contain every input pair
    exactly once.
    """
    if not 0.0 <= ratio <= 1.0:
        raise QaError(f"split ratio must be within [0, 1], got {ratio}")
    shuffled = list(pairs)
    Xorshift64Star(seed).shuffle(shuffled)
    n_train = math.floor(ratio * len(shuffled))
    return SplitDataset(
        train=shuffled[:n_train],
        test=shuffled[n_train:],
        seed=seed,
        ratio=ratio,
    )


def _round_half_up(x: float) -> int:
    return math.floor(x + 0.5)


def qa_stats(pairs: Sequence[QaPair]) -> dict[str, int]:
    """Pair count and mean prompt/completion lengths (chars, half-up)."""
    if not pairs:
        raise QaError("cannot compute statistics of an empty dataset")
    n = len(pairs)
    return {
        "pairs": n,
        "avg_prompt_chars": _round_half_up(sum(len(p.prompt) for p in pairs) / n),
        "avg_completion_chars": _round_half_up(
            sum(len(p.completion) for p in pairs) / n
        ),
    }


# --- persistence -----------------------------------------------------------

def save_fragments(fragments: Iterable[Fragment], path: str | Path) -> None:
    payload = [
        {"source_uri": f.source_uri, "ordinal": f.ordinal, "text": f.text}
        for f in fragments
    ]
    Path(path).write_text(
        json.dumps(payload, ensure_ascii=False, indent=2) + "\n", encoding="utf-8"
    )


def load_fragments(path: str | Path) -> list[Fragment]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise QaError(f"malformed fragment file {path}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise QaError(f"fragment file {path} must contain a JSON array")
    fragments = []
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            raise QaError(f"{path}: entry {i} is not an object")
        try:
            fragments.append(
                Fragment(
                    source_uri=item["source_uri"],
                    ordinal=item["ordinal"],
                    text=item["text"],
                )
            )
        except KeyError as exc:
            raise QaError(f"{path}: entry {i} is missing field {exc}") from None
    return fragments


def serialize_pairs(pairs: Iterable[QaPair]) -> str:
    payload = [
        {"prompt": p.prompt, "completion": p.completion, "fragment": p.fragment}
        for p in pairs
    ]
    return json.dumps(payload, ensure_ascii=False, indent=2) + "\n"


def save_pairs(pairs: Iterable[QaPair], path: str | Path) -> None:
    Path(path).write_text(serialize_pairs(pairs), encoding="utf-8")


def load_pairs(path: str | Path) -> list[QaPair]:
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise QaError(f"malformed QA dataset file {path}: {exc.msg}") from exc
    if not isinstance(payload, list):
        raise QaError(f"QA dataset file {path} must contain a JSON array")
    pairs = []
    for i, item in enumerate(payload):
        if not isinstance(item, dict):
            raise QaError(f"{path}: entry {i} is not an object")
        try:
            pairs.append(
                QaPair(
                    prompt=item["prompt"],
                    completion=item["completion"],
                    fragment=item.get("fragment", ""),
                )
            )
        except KeyError as exc:
            raise QaError(f"{path}: entry {i} is missing field {exc}") from None
    return pairs


def save_split(split: SplitDataset, out_dir: str | Path) -> dict[str, Path]:
    """Write train.json, test.json, and split.meta.json into *out_dir*."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "train": out / "train.json",
        "test": out / "test.json",
        "meta": out / "split.meta.json",
    }
    save_pairs(split.train, paths["train"])
    save_pairs(split.test, paths["test"])
    meta = {
        "seed": split.seed,
        "ratio": split.ratio,
        "train_pairs": len(split.train),
        "test_pairs": len(split.test),
    }
    paths["meta"].write_text(
        json.dumps(meta, indent=2) + "\n", encoding="utf-8"
    )
    return paths
