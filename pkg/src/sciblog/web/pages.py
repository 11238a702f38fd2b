"""HTML building blocks. Handlers compose these into whole pages.

Markup is deliberately terse: every byte of chrome is paid for on every
page view, so there is one stylesheet, no inline styles, and no
decoration that a 25 KiB budget would miss.
"""

from __future__ import annotations

from html import escape


def h(text) -> str:
    return escape(str(text), quote=True)


def chrome(title: str, nav_html: str, content_html: str, script_url: str | None = None) -> str:
    script = f'<script src="{h(script_url)}" defer></script>' if script_url else ""
    return (
        '<!doctype html>\n<html lang="en"><head><meta charset="utf-8">'
        '<meta name="viewport" content="width=device-width,initial-scale=1">'
        f"<title>{h(title)}</title>"
        '<link rel="stylesheet" href="/static/site.css"></head><body>'
        f"<header><nav>{nav_html}</nav></header><main>{content_html}</main>{script}</body></html>"
    )


def hidden(name: str, value: str) -> str:
    return f'<input type="hidden" name="{h(name)}" value="{h(value)}">'


def text_input(name: str, label: str, value: str = "", maxlen: int | None = None) -> str:
    attrs = f' maxlength="{maxlen}" data-maxlen="{maxlen}"' if maxlen else ""
    return (
        f'<label>{h(label)} <input name="{h(name)}" value="{h(value)}"{attrs}></label>'
    )


def password_input(name: str, label: str) -> str:
    return f'<label>{h(label)} <input type="password" name="{h(name)}"></label>'


def textarea(name: str, label: str, value: str = "", maxlen: int | None = None, rows: int = 6) -> str:
    attrs = f' maxlength="{maxlen}" data-maxlen="{maxlen}"' if maxlen else ""
    return (
        f'<label>{h(label)}<br><textarea name="{h(name)}" rows="{rows}"{attrs}>'
        f"{h(value)}</textarea></label>"
    )


def form(action: str, inner_html: str, submit_label: str, csrf_token: str, *, multipart: bool = False) -> str:
    enctype = ' enctype="multipart/form-data"' if multipart else ""
    return (
        f'<form method="post" action="{h(action)}"{enctype}>'
        + hidden("csrf", csrf_token)
        + inner_html
        + f"<button>{h(submit_label)}</button></form>"
    )


def inline_button(action: str, label: str, csrf_token: str) -> str:
    return (
        f'<form class="inline" method="post" action="{h(action)}">'
        + hidden("csrf", csrf_token)
        + f"<button>{h(label)}</button></form>"
    )


def next_page_link(base_path: str, cursor_token: str | None, extra_query: str = "") -> str:
    if cursor_token is None:
        return ""
    sep = "&" if extra_query else ""
    return f'<p class="pager"><a href="{h(base_path)}?{extra_query}{sep}after={h(cursor_token)}">more &raquo;</a></p>'


def error_page(title: str, message: str) -> str:
    content = f"<h1>{h(title)}</h1><p>{h(message)}</p>" '<p><a href="/">front page</a></p>'
    return chrome(title, '<a href="/">SciBlog</a>', content)
