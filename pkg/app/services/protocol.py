"""
Rollout protocol: parsing, serialization and validation of delimited trajectories.

Purpose:
- Turn assistant text into `Trajectory` segments and back without losing a byte.
- Parse `<search>` JSON payloads and `\\boxed{...}` answers.
- Decide format validity for the accuracy reward and build the training loss mask.

Delimiters are matched literally and case-sensitively. Inside a `<result>` block only
`<result>`/`</result>` are meaningful, since retrieved text is arbitrary.

Impact on SDLC:
- `serialize(parse(text)) == text` holds for every accepted input, so stored trajectories
  can be re-parsed and re-scored offline.
"""

import json
import logging
import re
from collections.abc import Callable, Sequence

# Parse, payload and answer errors
from app.core.exceptions import BoxedAnswerError, ProtocolParseError, SearchRequestError
from app.schemas.protocol import LossMask, SearchRequest, Segment, SegmentKind, StrayText, Trajectory

logger = logging.getLogger(__name__)

_TAG = re.compile(r"<(/?)(think|search|result|answer)>")
_GRAMMAR = re.compile(r"(?:TSR)*TA")
_KIND_LETTER = {
    SegmentKind.THINK: "T",
    SegmentKind.SEARCH: "S",
    SegmentKind.RESULT: "R",
    SegmentKind.ANSWER: "A",
}
_BOX_OPEN = "\\boxed{"

# Maps serialized text to unit spans in UTF-8 byte offsets, e.g. one span per token.
UnitBoundaries = Callable[[str], Sequence[tuple[int, int]]]


def _gap(text: str, start: int, end: int, stray: list[StrayText]) -> str:
    """Whitespace between segments is kept for round-trip; anything else is stray."""
    gap = text[start:end]
    if gap.strip():
        stray.append(StrayText(text=gap, offset=start))
        return ""
    return gap


def parse_trajectory(text: str) -> Trajectory:
    """
    Split assistant text into ordered delimited segments.

    Args:
        text (str): Serialized trajectory.

    Returns:
        Trajectory: Segments with character spans. Non-whitespace text outside every
        delimiter pair is reported in `stray`, whitespace is kept in `leading`/`trailing`.

    Raises:
        ProtocolParseError: Unbalanced, interleaved or nested delimiters, an unclosed
            segment, or a segment following the Answer.
    """
    segments: list[Segment] = []
    stray: list[StrayText] = []
    cursor = 0
    open_kind: SegmentKind | None = None
    open_at = 0
    content_at = 0
    leading = ""

    for match in _TAG.finditer(text):
        closing = match.group(1) == "/"
        kind = SegmentKind(match.group(2))

        if open_kind is None:
            if closing:
                raise ProtocolParseError(f"closing {kind.close_tag} without an opening tag", match.start())
            if segments and segments[-1].kind is SegmentKind.ANSWER:
                raise ProtocolParseError(f"{kind.open_tag} after the answer", match.start())
            leading = _gap(text, cursor, match.start(), stray)
            open_kind, open_at, content_at = kind, match.start(), match.end()
            continue

        if open_kind is SegmentKind.RESULT and kind is not SegmentKind.RESULT:
            continue
        if kind is open_kind and closing:
            segments.append(
                Segment(
                    kind=open_kind,
                    text=text[content_at:match.start()],
                    span=(open_at, match.end()),
                    leading=leading,
                )
            )
            cursor = match.end()
            open_kind = None
            continue
        if kind is open_kind:
            raise ProtocolParseError(f"nested {kind.open_tag} inside {open_kind.open_tag}", match.start())
        raise ProtocolParseError(f"{match.group(0)} interleaved with open {open_kind.open_tag}", match.start())

    if open_kind is not None:
        raise ProtocolParseError(f"unclosed {open_kind.open_tag}", open_at)

    trailing = _gap(text, cursor, len(text), stray)
    return Trajectory(segments=segments, stray=stray, trailing=trailing)


def _layout(trajectory: Trajectory) -> tuple[str, list[tuple[int, int]]]:
    """Serialized text plus the character span of every segment."""
    parts: list[str] = []
    spans: list[tuple[int, int]] = []
    position = 0
    for segment in trajectory.segments:
        parts.append(segment.leading)
        position += len(segment.leading)
        block = f"{segment.kind.open_tag}{segment.text}{segment.kind.close_tag}"
        parts.append(block)
        spans.append((position, position + len(block)))
        position += len(block)
    parts.append(trajectory.trailing)
    return "".join(parts), spans


def serialize_trajectory(trajectory: Trajectory) -> str:
    """Render segments with their delimiters; stray text is not reproduced."""
    text, _ = _layout(trajectory)
    return text


def parse_search_request(payload: str) -> SearchRequest:
    """
    Parse the JSON body of a `<search>` block.

    Args:
        payload (str): e.g. `{"query": "...", "entity": ["..."], "relation": ["..."]}`.

    Returns:
        SearchRequest: `entity` and `relation` default to empty lists; a bare string is
        accepted as a one-element list.

    Raises:
        SearchRequestError: Invalid JSON, a non-object body, a missing or blank query, or
            non-string list items.
    """
    try:
        body = json.loads(payload)
    except json.JSONDecodeError as exc:
        raise SearchRequestError(f"invalid JSON: {exc.msg}") from exc
    if not isinstance(body, dict):
        raise SearchRequestError("search payload must be a JSON object")

    query = body.get("query")
    if not isinstance(query, str) or not query.strip():
        raise SearchRequestError("missing or empty 'query'")

    lists: dict[str, list[str]] = {}
    for key in ("entity", "relation"):
        value = body.get(key, [])
        if value is None:
            value = []
        if isinstance(value, str):
            value = [value]
        if not isinstance(value, list) or not all(isinstance(item, str) for item in value):
            raise SearchRequestError(f"'{key}' must be a list of strings")
        lists[key] = [item for item in value if item.strip()]

    unknown = sorted(set(body) - {"query", "entity", "relation"})
    if unknown:
        logger.warning("Ignoring unknown search keys: %s", ", ".join(unknown))

    return SearchRequest(query=query.strip(), entity=lists["entity"], relation=lists["relation"])


def _match_brace(text: str, start: int) -> int | None:
    """Index of the `}` closing the `{` just before `start`, or None if unbalanced."""
    depth = 1
    for position in range(start, len(text)):
        char = text[position]
        if char == "{":
            depth += 1
        elif char == "}":
            depth -= 1
            if depth == 0:
                return position
    return None


def extract_boxed_answer(answer_text: str) -> str:
    """
    Return the trimmed contents of the last top-level balanced `\\boxed{...}` group.

    Raises:
        BoxedAnswerError: No balanced group exists.
    """
    found: str | None = None
    search_from = 0
    while True:
        start = answer_text.find(_BOX_OPEN, search_from)
        if start == -1:
            break
        body_start = start + len(_BOX_OPEN)
        end = _match_brace(answer_text, body_start)
        if end is None:
            search_from = start + 1
            continue
        found = answer_text[body_start:end].strip()
        search_from = end + 1
    if found is None:
        raise BoxedAnswerError("no balanced \\boxed{...} group")
    return found


def format_issues(trajectory: Trajectory) -> list[str]:
    """
    Reasons a trajectory fails the format check; empty when it passes.

    The grammar is `(Think Search Result)* Think Answer`.
    """
    issues = [f"stray text at offset {item.offset}: {item.text.strip()[:40]!r}" for item in trajectory.stray]

    shape = "".join(_KIND_LETTER[segment.kind] for segment in trajectory.segments)
    if not _GRAMMAR.fullmatch(shape):
        issues.append(f"segment order {shape or '(empty)'} does not match (TSR)*TA")

    for number, segment in enumerate(trajectory.of_kind(SegmentKind.SEARCH), start=1):
        try:
            parse_search_request(segment.text)
        except SearchRequestError as exc:
            issues.append(f"search {number}: {exc}")

    answer = trajectory.answer
    if answer is not None:
        try:
            extract_boxed_answer(answer.text)
        except BoxedAnswerError as exc:
            issues.append(f"answer: {exc}")
    return issues


def validate_format(trajectory: Trajectory) -> bool:
    return not format_issues(trajectory)


def compute_loss_mask(trajectory: Trajectory, unit_boundaries: UnitBoundaries | None = None) -> LossMask:
    """
    Build the loss mask of a trajectory: 0 over every Result block, tags included.

    Args:
        trajectory (Trajectory): Parsed trajectory.
        unit_boundaries (UnitBoundaries | None): Maps the serialized text to unit byte
            spans (e.g. tokenizer offsets). A unit is masked iff it overlaps a masked byte.

    Returns:
        LossMask: Byte-level flags, or one flag per unit when boundaries are supplied.
    """
    text, spans = _layout(trajectory)
    # Lone surrogates count 3 bytes, the width of the U+FFFD they are written as
    encoded_lengths = [len(char.encode("utf-8", "surrogatepass")) for char in text]
    byte_at = [0]
    for length in encoded_lengths:
        byte_at.append(byte_at[-1] + length)

    flags = [1] * byte_at[-1]
    for segment, (start, end) in zip(trajectory.segments, spans):
        if segment.kind is SegmentKind.RESULT:
            for position in range(byte_at[start], byte_at[end]):
                flags[position] = 0

    if unit_boundaries is None:
        return LossMask(unit="byte", flags=flags)

    unit_flags = []
    for start, end in unit_boundaries(text):
        masked = any(flag == 0 for flag in flags[max(start, 0):min(end, len(flags))])
        unit_flags.append(0 if masked else 1)
    return LossMask(unit="token", flags=unit_flags)
