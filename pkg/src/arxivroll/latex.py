"""Plain-text extraction from LaTeX or pre-cleaned sources.

Every math region collapses to the single placeholder token ``⟨MATH⟩`` so a
downstream density filter can count it; table and figure environments are
dropped whole. Unbalanced math delimiters never fail extraction: the rest of
the paragraph is treated as math and a warning is recorded.
"""

from __future__ import annotations

import re

from .corpus import Article, ArticleMeta

MATH_TOKEN = "⟨MATH⟩"

# Environments whose content is dropped entirely.
_DROP_ENVS = (
    "table", "table*", "figure", "figure*", "tabular", "tabular*",
    "longtable", "wraptable", "wrapfigure", "sidewaystable", "subfigure",
)
# Environments that collapse to one math token.
_MATH_ENVS = (
    "equation", "equation*", "align", "align*", "alignat", "alignat*",
    "eqnarray", "eqnarray*", "gather", "gather*", "multline", "multline*",
    "displaymath", "math", "array", "split", "cases", "aligned",
)

_COMMENT_RE = re.compile(r"(?<!\\)%[^\n]*")
_ESCAPES = {r"\%": "%", r"\&": "&", r"\_": "_", r"\#": "#", r"\$": "$", "~": " "}
_ARG_MACRO_DROP_RE = re.compile(
    r"\\(?:cite[tp]?\*?|citeauthor|citeyear|ref|eqref|autoref|cref|Cref|"
    r"label|footnote|footnotemark|url|href|includegraphics|bibliography|"
    r"bibliographystyle|input|include|vspace|hspace|pagestyle|thispagestyle)"
    r"(?:\[[^\]]*\])?\{[^{}]*\}"
)
_UNWRAP_RE = re.compile(r"\\[a-zA-Z@]+\*?(?:\[[^\]]*\])?\{([^{}]*)\}")
_BARE_MACRO_RE = re.compile(r"\\[a-zA-Z@]+\*?")
_PARA_SPLIT_RE = re.compile(r"\n\s*\n")


def extract_text(raw_source: bytes | str, fmt: str, meta: ArticleMeta) -> Article:
    """Clean one source document into an Article.

    fmt is "latex" or "plain". Bytes are decoded as UTF-8 with lossy
    replacement.
    """
    if isinstance(raw_source, bytes):
        text = raw_source.decode("utf-8", errors="replace")
    else:
        text = raw_source
    raw_char_count = len(text)
    text = text.replace("\r\n", "\n").replace("\r", "\n")
    warnings: list[str] = []
    if fmt == "latex":
        paragraphs = _extract_latex(text, warnings)
    elif fmt == "plain":
        paragraphs = _extract_plain(text)
    else:
        raise ValueError(f"unknown source format {fmt!r}")
    return Article(
        meta=meta,
        paragraphs=tuple(paragraphs),
        raw_char_count=raw_char_count,
        warnings=tuple(warnings),
    )


def _extract_plain(text: str) -> list[str]:
    # The source is already clean: every newline run is a paragraph break.
    paragraphs = [" ".join(chunk.split()) for chunk in re.split(r"\n+", text)]
    return [p for p in paragraphs if p]


def _extract_latex(text: str, warnings: list[str]) -> list[str]:
    body = _document_body(text)
    body = _COMMENT_RE.sub("", body)
    body = _replace_environments(body, _DROP_ENVS, " ", warnings)
    body = _replace_environments(body, _MATH_ENVS, f" {MATH_TOKEN} ", warnings)
    body = _replace_delimited(body, r"\[", r"\]", f" {MATH_TOKEN} ", warnings)
    body = _replace_delimited(body, "$$", "$$", f" {MATH_TOKEN} ", warnings)

    paragraphs = []
    for i, chunk in enumerate(_PARA_SPLIT_RE.split(body)):
        para = _replace_inline_math(chunk, i, warnings)
        para = _strip_macros(para)
        para = " ".join(para.split())
        if para:
            paragraphs.append(para)
    return paragraphs


def _document_body(text: str) -> str:
    start = text.find(r"\begin{document}")
    if start != -1:
        text = text[start + len(r"\begin{document}"):]
    end = text.find(r"\end{document}")
    if end != -1:
        text = text[:end]
    return text


def _replace_environments(
    text: str, names: tuple[str, ...], replacement: str, warnings: list[str]
) -> str:
    for name in names:
        begin = f"\\begin{{{name}}}"
        end = f"\\end{{{name}}}"
        while True:
            i = text.find(begin)
            if i == -1:
                break
            j = text.find(end, i)
            if j == -1:
                warnings.append(f"unterminated environment {name!r}; dropped to end")
                text = text[:i] + replacement
                break
            text = text[:i] + replacement + text[j + len(end):]
    return text


def _replace_delimited(
    text: str, opener: str, closer: str, replacement: str, warnings: list[str]
) -> str:
    out = []
    pos = 0
    while True:
        i = _find_unescaped(text, opener, pos)
        if i == -1:
            out.append(text[pos:])
            break
        j = _find_unescaped(text, closer, i + len(opener))
        if j == -1:
            # Leave the tail for the per-paragraph inline pass to flag.
            out.append(text[pos:])
            break
        out.append(text[pos:i])
        out.append(replacement)
        pos = j + len(closer)
    return "".join(out)


def _find_unescaped(text: str, needle: str, start: int) -> int:
    # A preceding backslash always disarms the delimiter: \$ is a literal
    # dollar and \\[2pt] is a spaced line break, not display math.
    pos = start
    while True:
        i = text.find(needle, pos)
        if i <= 0:
            return i
        if text[i - 1] == "\\":
            pos = i + 1
            continue
        return i


def _replace_inline_math(paragraph: str, index: int, warnings: list[str]) -> str:
    for opener, closer in ((r"\(", r"\)"), ("$", "$")):
        out = []
        pos = 0
        while True:
            i = _find_unescaped(paragraph, opener, pos)
            if i == -1:
                out.append(paragraph[pos:])
                break
            j = _find_unescaped(paragraph, closer, i + len(opener))
            if j == -1:
                # Unbalanced: the remainder of the paragraph counts as math.
                out.append(paragraph[pos:i])
                out.append(f" {MATH_TOKEN} ")
                warnings.append(
                    f"unbalanced math delimiter {opener!r} in paragraph {index}"
                )
                pos = len(paragraph)
                break
            out.append(paragraph[pos:i])
            out.append(f" {MATH_TOKEN} ")
            pos = j + len(closer)
        paragraph = "".join(out)
    return paragraph


_LINE_BREAK_RE = re.compile(r"\\\\(\[[^\]]*\])?")


def _strip_macros(paragraph: str) -> str:
    paragraph = _LINE_BREAK_RE.sub(" ", paragraph)
    paragraph = _ARG_MACRO_DROP_RE.sub(" ", paragraph)
    # Unwrap formatting macros from the inside out, e.g. \emph{\textbf{x}}.
    for _ in range(4):
        new = _UNWRAP_RE.sub(r"\1", paragraph)
        if new == paragraph:
            break
        paragraph = new
    paragraph = _BARE_MACRO_RE.sub(" ", paragraph)
    for src, dst in _ESCAPES.items():
        paragraph = paragraph.replace(src, dst)
    return paragraph.replace("{", " ").replace("}", " ")
