"""Restricted formatting markup for member-authored text.

The whole grammar: blank-line paragraph breaks, ```-fenced preformatted
blocks, **bold**, *italic*, and [label](http://...) links. Raw HTML is
rejected at save time and everything is entity-escaped at render time, so
authored text can never inject markup or scripts, and pages stay small.
"""

from __future__ import annotations

import html
import re
from urllib.parse import urlparse

_TAG_LIKE = re.compile(r"<[a-zA-Z/!?]")
_LINK = re.compile(r"\[([^\]\n]+)\]\(([^)\s]+)\)")
_INLINE = re.compile(
    r"\[([^\]\n]+)\]\(([^)\s]+)\)"  # label, url
    r"|\*\*([^*\n]+)\*\*"  # bold
    r"|\*([^*\n]+)\*"  # italic
)
FENCE = "```"


def is_safe_url(url: str) -> bool:
    try:
        parsed = urlparse(url)
    except ValueError:
        return False
    return parsed.scheme in ("http", "https") and bool(parsed.netloc)


def validate_markup(text: str) -> list[str]:
    """Problems that make the text unsaveable; empty list means valid."""
    problems = []
    if _TAG_LIKE.search(text):
        problems.append("raw HTML is not allowed")
    for match in _LINK.finditer(text):
        if not is_safe_url(match.group(2)):
            problems.append(f"link target must be an absolute http(s) URL: {match.group(2)}")
    return problems


def _render_inline(text: str) -> str:
    out = []
    pos = 0
    for match in _INLINE.finditer(text):
        out.append(html.escape(text[pos : match.start()]))
        label, url, bold, italic = match.groups()
        if label is not None:
            if is_safe_url(url):
                out.append(f'<a href="{html.escape(url, quote=True)}">{html.escape(label)}</a>')
            else:
                out.append(html.escape(match.group(0)))
        elif bold is not None:
            out.append(f"<strong>{html.escape(bold)}</strong>")
        else:
            out.append(f"<em>{html.escape(italic)}</em>")
        pos = match.end()
    out.append(html.escape(text[pos:]))
    return "".join(out)


def render_markup(text: str) -> str:
    """Render to HTML. Tolerant of any input: unknown syntax is escaped text."""
    blocks: list[str] = []
    paragraph: list[str] = []
    pre: list[str] | None = None

    def flush_paragraph():
        if paragraph:
            blocks.append("<p>" + "\n".join(_render_inline(l) for l in paragraph) + "</p>")
            paragraph.clear()

    for line in text.split("\n"):
        if line.strip() == FENCE:
            if pre is None:
                flush_paragraph()
                pre = []
            else:
                blocks.append("<pre>" + html.escape("\n".join(pre)) + "</pre>")
                pre = None
            continue
        if pre is not None:
            pre.append(line)
        elif not line.strip():
            flush_paragraph()
        else:
            paragraph.append(line)
    if pre is not None:  # unclosed fence: close it rather than lose content
        blocks.append("<pre>" + html.escape("\n".join(pre)) + "</pre>")
    flush_paragraph()
    return "\n".join(blocks)
