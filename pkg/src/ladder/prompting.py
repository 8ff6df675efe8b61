"""Prompt rendering for direct translation and refinement, plus reply parsing.

Templates are plain UTF-8 text with named slots ``{src_name}``, ``{tgt_name}``,
``{source}`` and (refine only) ``{intermediate}``. Slot values are substituted
verbatim in a single pass, so braces or slot-like text inside the values are
never re-interpreted. Default templates ship with the package and can be
replaced per run.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

from .corpus import Direction

SLOT_NAMES = ("src_name", "tgt_name", "source", "intermediate")

_SLOT_RE = re.compile(r"\{(" + "|".join(SLOT_NAMES) + r")\}")
_UNKNOWN_SLOT_RE = re.compile(r"\{([a-z_]+)\}")

QUOTE_PAIRS = (('"', '"'), ("'", "'"), ("“", "”"), ("«", "»"), ("‘", "’"))


class TemplateError(ValueError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    """An instruction template of kind ``direct`` (translate a source) or
    ``refine`` (improve an existing translation of a source)."""

    kind: str
    template_text: str

    def __post_init__(self):
        if self.kind not in ("direct", "refine"):
            raise TemplateError(f"template kind must be 'direct' or 'refine', got {self.kind!r}")
        counts = {name: 0 for name in SLOT_NAMES}
        for match in _UNKNOWN_SLOT_RE.finditer(self.template_text):
            name = match.group(1)
            if name not in counts:
                raise TemplateError(f"unknown slot {{{name}}} in {self.kind} template")
            counts[name] += 1
        for name in ("src_name", "tgt_name"):
            if counts[name] == 0:
                raise TemplateError(f"{self.kind} template is missing the {{{name}}} slot")
        if counts["source"] != 1:
            raise TemplateError(
                f"{self.kind} template must contain {{source}} exactly once, found {counts['source']}"
            )
        if self.kind == "direct" and counts["intermediate"] != 0:
            raise TemplateError("direct template must not contain the {intermediate} slot")
        if self.kind == "refine" and counts["intermediate"] != 1:
            raise TemplateError(
                f"refine template must contain {{intermediate}} exactly once, found {counts['intermediate']}"
            )


@dataclass(frozen=True)
class TemplatePair:
    direct: PromptTemplate
    refine: PromptTemplate

    def __post_init__(self):
        if self.direct.kind != "direct" or self.refine.kind != "refine":
            raise TemplateError("TemplatePair requires a direct and a refine template, in that order")


def _render(template: PromptTemplate, values: dict[str, str]) -> tuple[str, dict[str, tuple[int, int]]]:
    """Substitute slots in one pass, recording the span of each filled slot."""
    out: list[str] = []
    spans: dict[str, tuple[int, int]] = {}
    pos = 0
    length = 0
    for match in _SLOT_RE.finditer(template.template_text):
        literal = template.template_text[pos : match.start()]
        out.append(literal)
        length += len(literal)
        value = values[match.group(1)]
        spans[match.group(1)] = (length, length + len(value))
        out.append(value)
        length += len(value)
        pos = match.end()
    out.append(template.template_text[pos:])
    return "".join(out), spans


def render_direct(template: PromptTemplate, source: str, direction: Direction) -> str:
    """Render the direct-translation prompt. The source text appears
    verbatim exactly once."""
    if template.kind != "direct":
        raise TemplateError(f"render_direct needs a direct template, got kind {template.kind!r}")
    text, _ = _render(
        template,
        {"src_name": direction.src_name, "tgt_name": direction.tgt_name, "source": source},
    )
    return text


def render_refine(
    template: PromptTemplate, source: str, intermediate: str, direction: Direction
) -> str:
    """Render the refinement prompt over a source and its candidate
    translation; both appear verbatim exactly once."""
    if template.kind != "refine":
        raise TemplateError(f"render_refine needs a refine template, got kind {template.kind!r}")
    if not intermediate.strip():
        raise ValueError("refinement needs a nonempty candidate translation")
    text, _ = _render(
        template,
        {
            "src_name": direction.src_name,
            "tgt_name": direction.tgt_name,
            "source": source,
            "intermediate": intermediate,
        },
    )
    return text


def render_with_spans(
    template: PromptTemplate, values: dict[str, str]
) -> tuple[str, dict[str, tuple[int, int]]]:
    """Render and return the (start, end) offsets of every filled slot,
    so inputs can be recovered positionally from the output."""
    return _render(template, values)


@dataclass(frozen=True)
class ExtractionPolicy:
    """How to turn a raw model reply into a bare translation.

    ``label_pattern`` is matched case-insensitively at the start of the reply
    and stripped together with any following whitespace; symmetric quotes
    enclosing the whole remaining reply are removed when ``strip_quotes``.
    """

    label_pattern: str = r"(?:refined\s+)?(?:final\s+)?translation\s*:"
    strip_quotes: bool = True

    _compiled: re.Pattern = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        object.__setattr__(self, "_compiled", re.compile(self.label_pattern, re.IGNORECASE))


DEFAULT_POLICY = ExtractionPolicy()


def parse_completion(raw_reply: str, policy: ExtractionPolicy = DEFAULT_POLICY) -> str:
    """Extract the translation from a model reply, stripping a leading label
    line and whole-reply quotes per the policy."""
    if not raw_reply:
        raise ValueError("raw reply is empty")
    text = raw_reply.strip()
    match = policy._compiled.match(text)
    if match:
        text = text[match.end() :].lstrip()
    if policy.strip_quotes and len(text) >= 2:
        for opener, closer in QUOTE_PAIRS:
            if text.startswith(opener) and text.endswith(closer):
                inner = text[len(opener) : -len(closer)]
                # only unwrap when the quotes enclose the whole reply
                if opener not in inner and closer not in inner:
                    text = inner.strip()
                break
    if not text:
        raise ValueError("reply is empty after stripping the label/quotes")
    return text


def load_template(path: str | Path, kind: str) -> PromptTemplate:
    return PromptTemplate(kind, Path(path).read_text(encoding="utf-8"))


def default_template(kind: str) -> PromptTemplate:
    name = {"direct": "direct.txt", "refine": "refine.txt"}[kind]
    text = resources.files("ladder").joinpath("templates", name).read_text(encoding="utf-8")
    return PromptTemplate(kind, text)


def default_templates() -> TemplatePair:
    return TemplatePair(default_template("direct"), default_template("refine"))
