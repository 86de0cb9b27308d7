"""Prompt template store and renderer.

Templates live as data files (``templates/*.prompt``) so operators can
revise wording without a rebuild; each file carries front-matter naming
the template and its placeholder set, then ``=== system ===`` and
``=== user ===`` sections. Rendering substitutes only at placeholder
sites and leaves every other byte untouched. The single supported
arithmetic form is ``{2*num_queries}``.
"""

from __future__ import annotations

import enum
import hashlib
import re
from dataclasses import dataclass
from importlib import resources

__all__ = [
    "TemplateName",
    "PromptTemplate",
    "RenderedPrompt",
    "MissingVariable",
    "UnknownPlaceholder",
    "TemplateFormatError",
    "load_template",
    "load_all_templates",
    "render",
]


class TemplateName(str, enum.Enum):
    ASSAY_QUERY_GEN = "assay_query_gen"
    ASSAY_HYP_GEN = "assay_hyp_gen"
    ASSAY_EVAL = "assay_eval"
    ASSAY_JUDGE = "assay_judge"
    GOAL_SYNTHESIS = "goal_synthesis"
    CANDIDATE_QUERY_GEN = "candidate_query_gen"
    CANDIDATE_HYP_GEN = "candidate_hyp_gen"
    CANDIDATE_EVAL = "candidate_eval"
    CANDIDATE_JUDGE = "candidate_judge"
    TRAJECTORY_ANALYSIS = "trajectory_analysis"


class TemplateFormatError(ValueError):
    pass


class MissingVariable(KeyError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"no value supplied for placeholder {name!r}")


class UnknownPlaceholder(ValueError):
    def __init__(self, name: str):
        self.name = name
        super().__init__(f"placeholder {name!r} is not declared by the template")


# Matches {name} and the one arithmetic form {2*name}. Literal braces in
# template bodies (JSON schema snippets) never match because they are not
# followed by an identifier.
_PLACEHOLDER_RE = re.compile(r"\{(2\*)?([A-Za-z_][A-Za-z0-9_]*)\}")


@dataclass(frozen=True)
class RenderedPrompt:
    system_text: str
    user_text: str

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(self.system_text.encode("utf-8"))
        h.update(b"\x00")
        h.update(self.user_text.encode("utf-8"))
        return h.hexdigest()


@dataclass(frozen=True)
class PromptTemplate:
    name: TemplateName
    system_text: str
    user_text: str
    placeholders: frozenset[str]

    def digest(self) -> str:
        return RenderedPrompt(self.system_text, self.user_text).digest()

    def sites(self) -> set[str]:
        """Placeholder names actually appearing in the template text."""
        return {
            m.group(2)
            for m in _PLACEHOLDER_RE.finditer(self.system_text + "\n" + self.user_text)
        }


def _parse_template_file(name: TemplateName, text: str) -> PromptTemplate:
    if not text.startswith("---\n"):
        raise TemplateFormatError(f"{name.value}: missing front-matter")
    try:
        header, body = text[4:].split("\n---\n", 1)
    except ValueError:
        raise TemplateFormatError(f"{name.value}: unterminated front-matter") from None
    meta: dict[str, str] = {}
    for line in header.splitlines():
        if not line.strip():
            continue
        key, _, value = line.partition(":")
        meta[key.strip()] = value.strip()
    if meta.get("name") != name.value:
        raise TemplateFormatError(f"{name.value}: front-matter name mismatch")
    placeholders = frozenset(
        p.strip() for p in meta.get("placeholders", "").split(",") if p.strip()
    )

    m = re.match(r"=== system ===\n(.*)=== user ===\n(.*)", body, re.DOTALL)
    if not m:
        raise TemplateFormatError(f"{name.value}: missing system/user sections")
    template = PromptTemplate(
        name=name,
        system_text=m.group(1).strip("\n"),
        user_text=m.group(2).strip("\n"),
        placeholders=placeholders,
    )
    undeclared = template.sites() - placeholders
    if undeclared:
        raise UnknownPlaceholder(sorted(undeclared)[0])
    return template


def load_template(name: TemplateName) -> PromptTemplate:
    text = (
        resources.files("robin.templates")
        .joinpath(f"{name.value}.prompt")
        .read_text(encoding="utf-8")
    )
    return _parse_template_file(name, text)


def load_all_templates() -> dict[TemplateName, PromptTemplate]:
    return {name: load_template(name) for name in TemplateName}


def _substitute(text: str, template: PromptTemplate, vars: dict) -> str:
    def repl(m: re.Match) -> str:
        doubled, name = m.group(1), m.group(2)
        if name not in template.placeholders:
            raise UnknownPlaceholder(name)
        if name not in vars:
            raise MissingVariable(name)
        value = vars[name]
        if doubled:
            return str(2 * int(value))
        return str(value)

    return _PLACEHOLDER_RE.sub(repl, text)


def render(template: PromptTemplate, vars: dict) -> RenderedPrompt:
    """Substitute variables into the template; extra vars are ignored,
    absent ones raise MissingVariable."""
    return RenderedPrompt(
        system_text=_substitute(template.system_text, template, vars),
        user_text=_substitute(template.user_text, template, vars),
    )
