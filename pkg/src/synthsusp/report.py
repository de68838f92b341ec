"""Rule-based radiology-report sectioning and MRI-negativity classification."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Tuple

from .errors import ReportError, UnclassifiableReport

HEADER_RE = re.compile(
    r"^\s*(FINDINGS?|IMPRESSION|INDICATION|TECHNIQUE|COMPARISON)\s*:",
    re.IGNORECASE | re.MULTILINE,
)
PREAMBLE = "PREAMBLE"
FINDINGS = "FINDINGS"
IMPRESSION = "IMPRESSION"

RULE_KEYS = ("findings_negative", "impression_negative", "positive_override")


@dataclass(frozen=True)
class ReportDocument:
    """Sectioned report text.

    ``sections`` maps canonical upper-case names to body text; ``spans``
    holds the (start, end) offsets of each body in ``raw_text``. A header
    repeated in one report contributes several spans, and their bodies are
    joined with a newline.
    """

    raw_text: str
    sections: Dict[str, str]
    spans: Dict[str, List[Tuple[int, int]]] = field(default_factory=dict)


class Evidence(NamedTuple):
    section: str
    start: int
    end: int
    rule: str  # which rule set matched: one of RULE_KEYS


@dataclass(frozen=True)
class NegativityVerdict:
    is_negative: bool
    criterion_findings: bool
    criterion_impression: bool
    evidence: Tuple[Evidence, ...] = ()

    def to_dict(self) -> dict:
        return {
            "is_negative": self.is_negative,
            "criterion_findings": self.criterion_findings,
            "criterion_impression": self.criterion_impression,
            "evidence": [e._asdict() for e in self.evidence],
        }


def _canonical(name: str) -> str:
    name = name.upper()
    return FINDINGS if name == "FINDING" else name


def _stripped(raw: str, start: int, end: int) -> Tuple[int, int]:
    body = raw[start:end]
    lead = len(body) - len(body.lstrip())
    trail = len(body) - len(body.rstrip())
    return start + lead, max(start + lead, end - trail)


def split_sections(raw: str) -> ReportDocument:
    headers = list(HEADER_RE.finditer(raw))
    spans: Dict[str, List[Tuple[int, int]]] = {}
    first = headers[0].start() if headers else len(raw)
    if raw[:first].strip():
        spans[PREAMBLE] = [_stripped(raw, 0, first)]
    for i, m in enumerate(headers):
        end = headers[i + 1].start() if i + 1 < len(headers) else len(raw)
        spans.setdefault(_canonical(m.group(1)), []).append(_stripped(raw, m.end(), end))
    sections = {name: "\n".join(raw[s:e] for s, e in ss) for name, ss in spans.items()}
    return ReportDocument(raw, sections, spans)


# ------------------------------------------------------------------------ rules


def _compile(pattern: str) -> re.Pattern:
    # literal spaces match any whitespace run, which normalizes line breaks
    # and repeated blanks without rewriting the text (offsets stay raw)
    body = pattern.replace(" ", r"\s+")
    return re.compile(rf"\b(?:{body})\b", re.IGNORECASE)


@dataclass(frozen=True)
class Rules:
    findings_negative: Tuple[re.Pattern, ...]
    impression_negative: Tuple[re.Pattern, ...]
    positive_override: Tuple[re.Pattern, ...]

    @classmethod
    def from_dict(cls, data) -> "Rules":
        if not isinstance(data, dict) or set(data) != set(RULE_KEYS):
            raise ReportError(f"rules must be an object with keys {list(RULE_KEYS)}")
        compiled = {}
        for key in RULE_KEYS:
            pats = data[key]
            if not isinstance(pats, list) or not all(isinstance(p, str) for p in pats):
                raise ReportError(f"rules[{key!r}] must be a list of regex strings")
            try:
                compiled[key] = tuple(_compile(p) for p in pats)
            except re.error as exc:
                raise ReportError(f"rules[{key!r}]: bad regex: {exc}") from None
        return cls(**compiled)


def default_rules() -> Rules:
    text = resources.files("synthsusp").joinpath("default_rules.json").read_text()
    return Rules.from_dict(json.loads(text))


def load_rules(path) -> Rules:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ReportError(f"{path}: not valid JSON: {exc}") from None
    return Rules.from_dict(data)


def _matches(doc: ReportDocument, section: str, patterns, rule: str) -> List[Evidence]:
    found = []
    for start, end in doc.spans.get(section, []):
        for pat in patterns:
            for m in pat.finditer(doc.raw_text, start, end):
                found.append(Evidence(section, m.start(), m.end(), rule))
    return found


def classify(doc: ReportDocument, rules: Optional[Rules] = None) -> NegativityVerdict:
    """Apply both negativity criteria to a sectioned report.

    Raises UnclassifiableReport when FINDINGS or IMPRESSION is absent, which
    is deliberately distinct from a not-negative verdict.
    """
    rules = rules or default_rules()
    missing = [s for s in (FINDINGS, IMPRESSION) if s not in doc.sections]
    if missing:
        raise UnclassifiableReport(f"report lacks section(s): {', '.join(missing)}")

    findings = _matches(doc, FINDINGS, rules.findings_negative, "findings_negative")
    impression = _matches(doc, IMPRESSION, rules.impression_negative, "impression_negative")
    override = _matches(doc, IMPRESSION, rules.positive_override, "positive_override")
    crit_f = bool(findings)
    crit_i = bool(impression) and not override
    evidence = tuple(sorted(findings + impression + override, key=lambda e: (e.start, e.end, e.rule)))
    return NegativityVerdict(crit_f and crit_i, crit_f, crit_i, evidence)


def classify_text(raw: str, rules: Optional[Rules] = None) -> NegativityVerdict:
    return classify(split_sections(raw), rules)
