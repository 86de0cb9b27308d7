"""Parsers for the structured output grammars the pipeline consumes.

Five grammars: ``<>``-delimited query lists, JSON strategy arrays,
tagged candidate blocks, judge verdict JSON, and sectioned evaluation
reports. Model output is noisy, so each parser recovers from the
enumerated noise classes (markdown code fences, surrounding prose,
stray whitespace) and reports every recovery as a warning instead of
failing; strictness is a per-call flag where the grammar has a count
contract. All parsers are pure functions and must never raise anything
but ParseError subclasses, whatever bytes they are fed.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Generic, Optional, TypeVar

T = TypeVar("T")


class ParseError(ValueError):
    pass


class EmptyOutput(ParseError):
    pass


class CountMismatch(ParseError):
    def __init__(self, found: int, expected: int):
        self.found = found
        self.expected = expected
        super().__init__(f"expected {expected} entries, found {found}")


class NoJsonArray(ParseError):
    pass


class NoJsonObject(ParseError):
    pass


class MissingKey(ParseError):
    def __init__(self, index: int, key: str):
        self.index = index
        self.key = key
        super().__init__(f"element {index} missing key {key!r}")


class UnterminatedBlock(ParseError):
    pass


class MissingHeader(ParseError):
    def __init__(self, block_index: int, header: str):
        self.block_index = block_index
        self.header = header
        super().__init__(f"block {block_index} missing header {header!r}")


class TupleSyntax(ParseError):
    def __init__(self, fieldname: str):
        self.field = fieldname
        super().__init__(f"field {fieldname!r} is not a (name, id) tuple")


class IdOutsidePair(ParseError):
    def __init__(self, id_: int):
        self.id = id_
        super().__init__(f"verdict names id {id_} outside the compared pair")


class WinnerEqualsLoser(ParseError):
    pass


@dataclass
class ParseOutcome(Generic[T]):
    value: T
    warnings: list[tuple[str, str]] = field(default_factory=list)

    def warn(self, code: str, message: str) -> None:
        self.warnings.append((code, message))


@dataclass(frozen=True)
class JudgeVerdict:
    analysis: str
    reasoning: str
    winner: tuple[str, int]
    loser: tuple[str, int]


_FENCE_RE = re.compile(r"^\s*```[a-zA-Z0-9_-]*\s*\n(.*?)\n?\s*```\s*$", re.DOTALL)


def _strip_fences(text: str, warnings: list[tuple[str, str]]) -> str:
    m = _FENCE_RE.match(text)
    if m:
        warnings.append(("fence_stripped", "markdown code fence removed"))
        return m.group(1)
    return text


def parse_query_list(
    text: str, expected_n: int, strict: bool = False
) -> ParseOutcome[list[str]]:
    """Split on the literal ``<>`` token. Segment content is preserved
    verbatim apart from surrounding whitespace."""
    warnings: list[tuple[str, str]] = []
    body = _strip_fences(text, warnings)
    raw_segments = body.split("<>")
    segments = []
    dropped = 0
    trimmed_any = False
    for seg in raw_segments:
        trimmed = seg.strip()
        if not trimmed:
            dropped += 1
            continue
        if trimmed != seg:
            trimmed_any = True
        segments.append(trimmed)
    if trimmed_any:
        warnings.append(("whitespace_trimmed", "segment whitespace trimmed"))
    if dropped:
        warnings.append(("empty_segment_dropped", f"{dropped} empty segment(s) dropped"))
    if not segments:
        raise EmptyOutput("no nonempty query segment")
    if len(segments) != expected_n:
        if strict:
            raise CountMismatch(len(segments), expected_n)
        warnings.append(
            ("count_mismatch", f"expected {expected_n} queries, found {len(segments)}")
        )
    return ParseOutcome(segments, warnings)


def _scan_balanced(text: str, start: int, open_ch: str, close_ch: str) -> Optional[int]:
    """Return the index one past the balanced close for the bracket at
    ``start``, honoring JSON string literals; None if unbalanced."""
    depth = 0
    i = start
    in_string = False
    escaped = False
    while i < len(text):
        c = text[i]
        if in_string:
            if escaped:
                escaped = False
            elif c == "\\":
                escaped = True
            elif c == '"':
                in_string = False
        else:
            if c == '"':
                in_string = True
            elif c == open_ch:
                depth += 1
            elif c == close_ch:
                depth -= 1
                if depth == 0:
                    return i + 1
        i += 1
    return None


def _extract_json(
    text: str, open_ch: str, close_ch: str, warnings: list[tuple[str, str]]
):
    """Locate the first balanced, loadable JSON value delimited by the
    given bracket pair; returns (value, had_surrounding_prose)."""
    pos = 0
    while True:
        start = text.find(open_ch, pos)
        if start < 0:
            return None
        end = _scan_balanced(text, start, open_ch, close_ch)
        if end is not None:
            candidate = text[start:end]
            try:
                value = json.loads(candidate)
            except (json.JSONDecodeError, RecursionError):
                value = None
            if value is not None:
                if text[:start].strip() or text[end:].strip():
                    warnings.append(
                        ("surrounding_prose", "text outside the JSON value ignored")
                    )
                return value
        pos = start + 1


def parse_strategy_array(
    text: str, expected_n: int
) -> ParseOutcome[list[tuple[str, str]]]:
    """Parse a root-level JSON array of {strategy_name, reasoning} objects."""
    warnings: list[tuple[str, str]] = []
    body = _strip_fences(text, warnings)
    array = _extract_json(body, "[", "]", warnings)
    if array is None or not isinstance(array, list):
        raise NoJsonArray("no top-level JSON array found")
    strategies: list[tuple[str, str]] = []
    for i, element in enumerate(array):
        if not isinstance(element, dict):
            raise MissingKey(i, "strategy_name")
        for key in ("strategy_name", "reasoning"):
            if key not in element or not isinstance(element[key], str):
                raise MissingKey(i, key)
        extras = set(element) - {"strategy_name", "reasoning"}
        if extras:
            warnings.append(
                ("extra_keys", f"element {i} carries extra keys {sorted(extras)}")
            )
        strategies.append((element["strategy_name"], element["reasoning"]))
    if len(strategies) != expected_n:
        raise CountMismatch(len(strategies), expected_n)
    return ParseOutcome(strategies, warnings)


_BLOCK_START = "<CANDIDATE START>"
_BLOCK_END = "<CANDIDATE END>"
_CANDIDATE_HEADERS = ("CANDIDATE:", "HYPOTHESIS:", "REASONING:")


def parse_candidate_blocks(
    text: str, expected_n: int
) -> ParseOutcome[list[tuple[str, str, str]]]:
    """Parse <CANDIDATE START>...<CANDIDATE END> blocks with ordered
    CANDIDATE:/HYPOTHESIS:/REASONING: headers, each line-initial."""
    warnings: list[tuple[str, str]] = []
    body = _strip_fences(text, warnings)
    blocks: list[tuple[str, str, str]] = []
    pos = 0
    outside: list[str] = []
    while True:
        start = body.find(_BLOCK_START, pos)
        if start < 0:
            outside.append(body[pos:])
            break
        outside.append(body[pos:start])
        end = body.find(_BLOCK_END, start)
        if end < 0:
            raise UnterminatedBlock(f"block {len(blocks)} has no {_BLOCK_END}")
        inner = body[start + len(_BLOCK_START) : end]
        blocks.append(_parse_one_block(inner, len(blocks)))
        pos = end + len(_BLOCK_END)
    if any(chunk.strip() for chunk in outside):
        warnings.append(("text_outside_blocks", "text outside candidate blocks ignored"))
    if not blocks:
        raise EmptyOutput("no candidate block found")
    if len(blocks) != expected_n:
        raise CountMismatch(len(blocks), expected_n)
    return ParseOutcome(blocks, warnings)


def _parse_one_block(inner: str, index: int) -> tuple[str, str, str]:
    lines = inner.splitlines()
    # position of each header line, honoring the written order
    positions: list[int] = []
    cursor = 0
    for header in _CANDIDATE_HEADERS:
        found = None
        for lineno in range(cursor, len(lines)):
            if lines[lineno].lstrip().startswith(header):
                found = lineno
                break
        if found is None:
            raise MissingHeader(index, header)
        positions.append(found)
        cursor = found + 1
    fields = []
    for k, header in enumerate(_CANDIDATE_HEADERS):
        start_line = positions[k]
        end_line = positions[k + 1] if k + 1 < len(positions) else len(lines)
        first = lines[start_line].lstrip()[len(header) :]
        content = "\n".join([first] + lines[start_line + 1 : end_line])
        fields.append(content.strip())
    return (fields[0], fields[1], fields[2])


_TUPLE_RE = re.compile(r"^\s*\(?\s*(.*?)\s*,\s*['\"]?\s*(\d+)\s*['\"]?\s*\)?\s*$", re.DOTALL)


def _parse_name_id(value, fieldname: str) -> tuple[str, int]:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        name, id_part = value
        try:
            return str(name).strip().strip("'\""), int(id_part)
        except (TypeError, ValueError):
            raise TupleSyntax(fieldname) from None
    if not isinstance(value, str):
        raise TupleSyntax(fieldname)
    m = _TUPLE_RE.match(value)
    if not m:
        raise TupleSyntax(fieldname)
    name = m.group(1).strip().strip("'\"").strip()
    return name, int(m.group(2))


def parse_judge_verdict(
    text: str, pair: frozenset[int] | set[int]
) -> ParseOutcome[JudgeVerdict]:
    """Extract and validate the judge's JSON verdict for one pair."""
    if len(set(pair)) != 2:
        raise ValueError("pair must hold two distinct ids")
    warnings: list[tuple[str, str]] = []
    body = _strip_fences(text, warnings)
    obj = _extract_json(body, "{", "}", warnings)
    if obj is None or not isinstance(obj, dict):
        raise NoJsonObject("no JSON object in verdict")
    lowered = {str(k).lower(): v for k, v in obj.items()}
    if "winner" not in lowered:
        raise TupleSyntax("Winner")
    if "loser" not in lowered:
        raise TupleSyntax("Loser")
    winner = _parse_name_id(lowered["winner"], "Winner")
    loser = _parse_name_id(lowered["loser"], "Loser")
    for _, id_ in (winner, loser):
        if id_ not in pair:
            raise IdOutsidePair(id_)
    if winner[1] == loser[1]:
        raise WinnerEqualsLoser("winner and loser ids coincide")
    analysis = lowered.get("analysis")
    reasoning = lowered.get("reasoning")
    if not isinstance(analysis, str):
        analysis = "" if analysis is None else json.dumps(analysis)
        warnings.append(("missing_analysis", "Analysis field absent or non-string"))
    if not isinstance(reasoning, str):
        reasoning = "" if reasoning is None else json.dumps(reasoning)
        warnings.append(("missing_reasoning", "Reasoning field absent or non-string"))
    return ParseOutcome(
        JudgeVerdict(analysis=analysis, reasoning=reasoning, winner=winner, loser=loser),
        warnings,
    )


def parse_report_sections(
    text: str, expected_titles: list[str]
) -> ParseOutcome[dict[str, str]]:
    """Split free-form report text at line-initial ``Title:`` markers.

    Never fatal: unmatched titles come back empty with a warning, and any
    preamble before the first title lands under ``_preamble``.
    """
    if not expected_titles:
        raise ValueError("expected_titles must be nonempty")
    warnings: list[tuple[str, str]] = []
    body = _strip_fences(text, warnings)
    lines = body.splitlines()
    markers: list[tuple[int, str, str]] = []  # (line, title, inline remainder)
    for lineno, line in enumerate(lines):
        stripped = line.lstrip()
        for title in expected_titles:
            if stripped.startswith(title) and stripped[len(title) :].lstrip().startswith(":"):
                remainder = stripped[len(title) :].lstrip()[1:]
                markers.append((lineno, title, remainder))
                break
    sections: dict[str, str] = {}
    preamble_end = markers[0][0] if markers else len(lines)
    preamble = "\n".join(lines[:preamble_end]).strip()
    if preamble:
        sections["_preamble"] = preamble
        warnings.append(("preamble", "text before the first section title preserved"))
    for k, (lineno, title, remainder) in enumerate(markers):
        end = markers[k + 1][0] if k + 1 < len(markers) else len(lines)
        content = "\n".join([remainder] + lines[lineno + 1 : end]).strip()
        if title in sections:
            warnings.append(("duplicate_title", f"section {title!r} repeated; later kept"))
        sections[title] = content
    matched = {title for _, title, _ in markers}
    for title in expected_titles:
        if title not in matched:
            sections[title] = ""
            warnings.append(("missing_section", f"section {title!r} not found"))
    return ParseOutcome(sections, warnings)


# --- emitters (canonical well-formed documents; round-trip partners) ---


def emit_query_list(queries: list[str]) -> str:
    return "<>".join(queries)


def emit_strategy_array(strategies: list[tuple[str, str]]) -> str:
    return json.dumps(
        [{"strategy_name": n, "reasoning": r} for n, r in strategies], indent=2
    )


def emit_candidate_blocks(blocks: list[tuple[str, str, str]]) -> str:
    out = []
    for candidate, hypothesis, reasoning in blocks:
        out.append(
            f"{_BLOCK_START}\nCANDIDATE: {candidate}\nHYPOTHESIS: {hypothesis}\n"
            f"REASONING: {reasoning}\n{_BLOCK_END}"
        )
    return "\n".join(out)


def emit_judge_verdict(verdict: JudgeVerdict) -> str:
    return json.dumps(
        {
            "Analysis": verdict.analysis,
            "Reasoning": verdict.reasoning,
            "Winner": f"({verdict.winner[0]}, {verdict.winner[1]})",
            "Loser": f"({verdict.loser[0]}, {verdict.loser[1]})",
        },
        indent=2,
    )
