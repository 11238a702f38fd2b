"""The HTTP surface: routes, sessions, privilege gating, page rendering.

Handlers are plain functions over a request context. The dispatcher owns
the cross-cutting rules: session resolution, the route table's access
declarations, CSRF on every POST, and the page byte budget on every 2xx
dynamic response. Pages are valid HTML that works with no client script;
the optional enhancement script is added only for signed-in users.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
import secrets
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from decimal import Decimal, InvalidOperation
from pathlib import Path
from typing import Callable

from .. import codec
from ..accounts import FEATURES, MANAGE, READ, ROLE_OWNER, WRITE, Group, User
from ..config import SiteConfig
from ..errors import (
    AuthenticationError,
    BudgetExceededError,
    IntegrityError,
    NotAuthorizedError,
    NotFoundError,
    RateLimitedError,
    SciBlogError,
    ValidationError,
)
from ..markup import render_markup
from ..site import Site
from .budget import PageBudget, check_budget, fit_page_size, fit_text_slice
from .http import HttpError, Request, Response
from .pages import (
    chrome,
    error_page,
    form,
    h,
    hidden,
    inline_button,
    next_page_link,
    password_input,
    text_input,
    textarea,
)
from .pagination import CURSOR_PARAM, after_cursor, decode_cursor, encode_cursor

log = logging.getLogger("sciblog.web")

SESSION_COOKIE = "sid"
ANON_CSRF_COOKIE = "acsrf"

ACCESS_PUBLIC = ("public",)
ACCESS_AUTH = ("auth",)


def ACCESS_FEATURE(feature: str, level: str) -> tuple:
    return ("feature", feature, level)


ACCESS_HOST = ("host",)


@dataclass
class Route:
    method: str
    pattern: re.Pattern
    handler: Callable
    access: tuple
    budget_exempt: bool = False
    name: str = ""


@dataclass
class Context:
    app: "Application"
    site: Site
    request: Request
    actor: User | None
    session_id: str | None
    group: Group | None = None
    params: dict = field(default_factory=dict)
    # cookies queued for the final response
    pending_cookies: list = field(default_factory=list)

    @property
    def config(self) -> SiteConfig:
        return self.site.config

    @property
    def budget(self) -> PageBudget:
        return self.app.budget

    def csrf_token(self) -> str:
        if self.session_id:
            return session_csrf_token(self.session_id)
        token = self.request.cookies.get(ANON_CSRF_COOKIE)
        if not token:
            token = secrets.token_urlsafe(16)
            self.pending_cookies.append((ANON_CSRF_COOKIE, token))
        return token

    def can(self, feature: str, level: str) -> bool:
        return self.site.accounts.check_privilege(self.actor, self.group, feature, level)


def session_csrf_token(session_id: str) -> str:
    # Derived, not stored: pages carry only this digest, never the cookie.
    return hashlib.sha256(b"csrf:" + session_id.encode("ascii")).hexdigest()[:32]


# ---------------------------------------------------------------------------
# rendering helpers


def nav_html(ctx: Context) -> str:
    parts = ['<a href="/">SciBlog</a>']
    group = ctx.group
    if group is not None:
        parts.append(f'<a href="/g/{group.slug}">{h(group.display_name)}</a>')
        parts.append(f'<a href="/g/{group.slug}/publications">Publications</a>')
        for feature, label in (
            ("forum", "Forum"),
            ("agenda", "Agenda"),
            ("ledger", "Ledger"),
            ("links", "Links"),
            ("files", "Files"),
        ):
            if ctx.actor is not None and ctx.can(feature, READ):
                parts.append(f'<a href="/g/{group.slug}/{feature}">{label}</a>')
        if ctx.actor is None:
            parts.append(f'<a href="/g/{group.slug}/contact">Contact</a>')
        if ctx.actor is not None and ctx.can("page", MANAGE):
            parts.append(f'<a href="/g/{group.slug}/admin/members">Members</a>')
            parts.append(f'<a href="/g/{group.slug}/admin/page">Edit page</a>')
    if ctx.actor is not None:
        parts.append('<a href="/messages">Messages</a>')
        parts.append(
            '<a href="/alerts">Alerts<span id="unread-badge" class="badge"'
            ' data-unread-url="/api/unread" hidden></span></a>'
        )
        if ctx.actor.is_host_admin:
            parts.append('<a href="/admin/groups">Groups</a>')
            parts.append('<a href="/admin/users">Users</a>')
        parts.append(
            '<a id="relogin-link" href="/login" hidden>session expired</a>'
        )
        parts.append(inline_button("/logout", "log out", ctx.csrf_token()))
    else:
        parts.append('<a href="/login">Log in</a>')
    return "".join(parts)


def page(ctx: Context, title: str, content_html: str, status: int = 200) -> Response:
    script = ctx.app.script_url if ctx.actor is not None else None
    return Response.html(chrome(title, nav_html(ctx), content_html, script), status)


def render_listing(
    ctx: Context,
    title: str,
    items: list,
    key_of: Callable,
    item_html: Callable,
    *,
    base_path: str,
    extra_query: str = "",
    lead_html: str = "",
    tail_html: str = "",
    empty_text: str = "Nothing here yet.",
) -> Response:
    """Cursor-paged list rendering that always fits the page budget.

    `key_of(item)` must be a tuple whose ascending order equals display
    order. The byte probe includes the lead/tail chrome and the next-page
    link, so the fitted page size is exact.
    """
    cursor_text = ctx.request.query_value(CURSOR_PARAM, "")
    cursor = decode_cursor(cursor_text) if cursor_text else None
    remaining = after_cursor(items, key_of, cursor)

    def build(selected: list, more: bool) -> str:
        token = encode_cursor(key_of(selected[-1])) if more and selected else None
        rows = "".join(item_html(it) for it in selected)
        body = lead_html + (rows if selected else f"<p>{h(empty_text)}</p>") + tail_html
        body += next_page_link(base_path, token, extra_query)
        return chrome(
            title,
            nav_html(ctx),
            f"<h1>{h(title)}</h1>" + body,
            ctx.app.script_url if ctx.actor is not None else None,
        )

    def probe(k: int) -> int:
        return len(build(remaining[:k], k < len(remaining)).encode("utf-8"))

    k = fit_page_size(len(remaining), probe, ctx.budget, ctx.config.page_hard_cap)
    html = build(remaining[:k], k < len(remaining))
    return Response.html(html)


def render_document(
    ctx: Context,
    title: str,
    body_text: str,
    *,
    continue_path: str,
    continue_query: str = "",
    lead_html: str = "",
    tail_html: str = "",
) -> Response:
    """One large authored body under the budget, sliced with continuation
    links (`from=` character offset) when it cannot fit on one page."""
    raw_from = ctx.request.query_value("from", "0")
    try:
        start = int(raw_from)
    except ValueError:
        raise HttpError(400, "malformed continuation offset")
    if start < 0 or start > len(body_text):
        raise HttpError(400, "continuation offset out of range")
    remainder = body_text[start:]

    def build(chars: int) -> str:
        shown = remainder[:chars]
        truncated = chars < len(remainder)
        inner = lead_html if start == 0 else f"<h1>{h(title)}</h1><p class=\"meta\">(continued)</p>"
        inner += render_markup(shown)
        if truncated:
            sep = "&" if continue_query else ""
            inner += (
                f'<p class="pager">&hellip; <a href="{h(continue_path)}?{continue_query}{sep}'
                f'from={start + chars}">view remainder &raquo;</a></p>'
            )
        else:
            inner += tail_html
        return chrome(
            title,
            nav_html(ctx),
            inner,
            ctx.app.script_url if ctx.actor is not None else None,
        )

    def probe(chars: int) -> int:
        return len(build(chars).encode("utf-8"))

    chars = fit_text_slice(probe, len(remainder), ctx.budget)
    return Response.html(build(chars))


def fmt_ts(dt: datetime) -> str:
    return dt.strftime("%Y-%m-%d %H:%M")


def fmt_amount(minor: int) -> str:
    sign = "-" if minor < 0 else ""
    a = abs(minor)
    return f"{sign}{a // 100}.{a % 100:02d}"


def parse_amount(text: str) -> int:
    try:
        value = Decimal(text.strip())
    except InvalidOperation:
        raise ValidationError("amount must be a decimal number like -123.45")
    minor = value.scaleb(2)
    if minor != minor.to_integral_value():
        raise ValidationError("amounts use at most two decimal places")
    return int(minor)


def parse_date(text: str, label: str) -> datetime.date:
    from datetime import date

    try:
        return date.fromisoformat(text.strip())
    except ValueError:
        raise ValidationError(f"{label} must be a date like 2004-09-01")


def parse_when(date_text: str, time_text: str, label: str) -> datetime:
    day = parse_date(date_text, label)
    hour = minute = 0
    time_text = time_text.strip()
    if time_text:
        try:
            hour, minute = (int(p) for p in time_text.split(":", 1))
        except ValueError:
            raise ValidationError(f"{label} time must look like 14:30")
    try:
        return datetime(day.year, day.month, day.day, hour, minute, tzinfo=timezone.utc)
    except ValueError:
        raise ValidationError(f"{label} time out of range")


# ---------------------------------------------------------------------------
# public handlers


def home(ctx: Context) -> Response:
    groups = ctx.site.accounts.list_groups()
    return render_listing(
        ctx,
        "Research groups",
        groups,
        key_of=lambda g: (g.slug,),
        item_html=lambda g: f'<li><a href="/g/{g.slug}">{h(g.display_name)}</a></li>',
        base_path="/",
        lead_html="<ul>",
        tail_html="</ul>",
        empty_text="No groups have been provisioned yet.",
    )


def group_page(ctx: Context) -> Response:
    group = ctx.group
    pubs = ctx.site.content.list_publications_public(group)[:5]
    pub_rows = "".join(
        f"<li>{h(p.title)} ({p.year}). {h(', '.join(p.authors))}</li>" for p in pubs
    )
    pubs_html = (
        "<h2>Recent publications</h2>"
        + (f"<ul>{pub_rows}</ul>" if pub_rows else "<p>None yet.</p>")
        + f'<p><a href="/g/{group.slug}/publications">All publications</a> &middot; '
        f'<a href="/g/{group.slug}/contact">Contact this group</a></p>'
    )
    return render_document(
        ctx,
        group.display_name,
        group.page_body,
        continue_path=f"/g/{group.slug}",
        lead_html=f"<h1>{h(group.display_name)}</h1>",
        tail_html=pubs_html,
    )


def publications_page(ctx: Context) -> Response:
    group = ctx.group
    pubs = ctx.site.content.list_publications_public(group)
    manage_form = ""
    if ctx.actor is not None and ctx.can("publications", MANAGE):
        manage_form = "<h2>Add publication</h2>" + form(
            f"/g/{group.slug}/admin/publications",
            text_input("title", "Title", maxlen=200)
            + text_input("authors", "Authors (semicolon separated)")
            + text_input("venue", "Venue")
            + text_input("year", "Year")
            + text_input("external_url", "External URL (optional)")
            + text_input("asset_id", "Attached file id (optional)"),
            "Add",
            ctx.csrf_token(),
        )

    def item_html(p) -> str:
        line = f"<li><strong>{h(p.title)}</strong> ({p.year})<br>{h(', '.join(p.authors))}"
        if p.venue:
            line += f". <em>{h(p.venue)}</em>"
        if p.external_url:
            line += f' &middot; <a href="{h(p.external_url)}">link</a>'
        if p.asset_id is not None:
            line += f' &middot; <a href="/g/{group.slug}/files/{p.asset_id}">file (members)</a>'
        return line + "</li>"

    return render_listing(
        ctx,
        f"Publications - {group.display_name}",
        pubs,
        key_of=lambda p: (-p.year, p.title, p.pub_id),
        item_html=item_html,
        base_path=f"/g/{group.slug}/publications",
        lead_html="<ol>",
        tail_html="</ol>" + manage_form,
        empty_text="No publications recorded.",
    )


def contact_form_page(ctx: Context, notice: str = "") -> Response:
    group = ctx.group
    notice_html = f'<p class="notice">{h(notice)}</p>' if notice else ""
    content = (
        f"<h1>Contact {h(group.display_name)}</h1>"
        + notice_html
        + form(
            f"/g/{group.slug}/contact",
            text_input("name", "Your name")
            + text_input("contact", "How to reach you (email etc.)")
            + text_input("subject", "Subject", maxlen=ctx.config.subject_max_chars)
            + textarea("body", "Message", maxlen=ctx.config.message_body_max_bytes),
            "Send",
            ctx.csrf_token(),
        )
    )
    return page(ctx, f"Contact - {group.display_name}", content)


def contact_submit(ctx: Context) -> Response:
    req = ctx.request
    ctx.site.messaging.send_external(
        ctx.group,
        name=req.form_value("name"),
        contact=req.form_value("contact"),
        subject=req.form_value("subject"),
        body=req.form_value("body"),
        throttle_key=req.remote_addr,
    )
    content = (
        f"<h1>Message sent</h1><p>The owners of {h(ctx.group.display_name)} will see "
        f'your message when they next sign in.</p><p><a href="/g/{ctx.group.slug}">Back</a></p>'
    )
    return page(ctx, "Message sent", content)


def login_form_page(ctx: Context, notice: str = "") -> Response:
    notice_html = f'<p class="notice">{h(notice)}</p>' if notice else ""
    content = (
        "<h1>Log in</h1>"
        + notice_html
        + form(
            "/login",
            text_input("login", "Login") + password_input("password", "Password"),
            "Log in",
            ctx.csrf_token(),
        )
    )
    return page(ctx, "Log in", content)


def login_submit(ctx: Context) -> Response:
    try:
        session = ctx.site.accounts.authenticate(
            ctx.request.form_value("login").strip().lower(),
            ctx.request.form_value("password"),
        )
    except AuthenticationError:
        return login_form_page(ctx, "Login failed. Check your login and password.")
    resp = Response.redirect("/")
    resp.set_cookie(
        SESSION_COOKIE,
        session.session_id,
        max_age=int(ctx.config.session_ttl_hours * 3600),
    )
    return resp


def logout_submit(ctx: Context) -> Response:
    if ctx.session_id:
        ctx.site.accounts.logout(ctx.session_id)
    resp = Response.redirect("/")
    resp.set_cookie(SESSION_COOKIE, "", max_age=0)
    return resp


def static_file(ctx: Context) -> Response:
    name = ctx.params["name"]
    data = ctx.app.static_bytes(name)
    if data is None:
        raise HttpError(404, "no such static asset")
    types = {".css": "text/css; charset=utf-8", ".js": "application/javascript; charset=utf-8"}
    suffix = Path(name).suffix
    resp = Response(status=200, body=data, content_type=types.get(suffix, "application/octet-stream"))
    resp.headers.append(("Cache-Control", "public, max-age=31536000, immutable"))
    return resp


# ---------------------------------------------------------------------------
# forum


def forum_list(ctx: Context) -> Response:
    group = ctx.group
    threads = ctx.site.content.list_threads(ctx.actor, group)
    lead = ""
    if ctx.can("forum", WRITE):
        lead = f'<p><a href="/g/{group.slug}/forum/new">Start a new thread</a></p>'

    def item_html(t) -> str:
        return (
            f'<tr><td><a href="/g/{group.slug}/forum/{t.thread_id}">{h(t.title)}</a></td>'
            f'<td class="num">{t.post_count}</td><td class="meta">{fmt_ts(t.last_post_at)}</td></tr>'
        )

    return render_listing(
        ctx,
        f"Forum - {group.display_name}",
        threads,
        key_of=lambda t: (-codec.ts_us(t.last_post_at), -t.thread_id),
        item_html=item_html,
        base_path=f"/g/{group.slug}/forum",
        lead_html=lead + "<table><tr><th>Thread</th><th>Posts</th><th>Last post</th></tr>",
        tail_html="</table>",
        empty_text="No threads yet.",
    )


def forum_new_form(ctx: Context) -> Response:
    group = ctx.group
    content = f"<h1>New thread</h1>" + form(
        f"/g/{group.slug}/forum/new",
        text_input("title", "Title", maxlen=ctx.config.title_max_chars)
        + textarea("body", "Opening post", maxlen=ctx.config.forum_body_max_bytes, rows=10),
        "Create thread",
        ctx.csrf_token(),
    )
    return page(ctx, f"New thread - {group.display_name}", content)


def forum_new_submit(ctx: Context) -> Response:
    thread = ctx.site.content.create_thread(
        ctx.actor, ctx.group, ctx.request.form_value("title"), ctx.request.form_value("body")
    )
    return Response.redirect(f"/g/{ctx.group.slug}/forum/{thread.thread_id}")


def _author_name(ctx: Context, user_id: int) -> str:
    user = ctx.site.accounts.user_by_id(user_id)
    return user.display_name if user else "(removed account)"


def forum_thread(ctx: Context) -> Response:
    group = ctx.group
    thread_id = int(ctx.params["tid"])
    thread = ctx.site.content.get_thread(ctx.actor, group, thread_id)
    posts = ctx.site.content.list_posts(ctx.actor, group, thread_id)
    base_path = f"/g/{group.slug}/forum/{thread_id}"

    single = ctx.request.query_value("post", "")
    if single:
        if not single.isdigit():
            raise HttpError(400, "malformed post reference")
        target = next((p for p in posts if p.post_id == int(single)), None)
        if target is None:
            raise HttpError(404, "no such post in this thread")
        return render_document(
            ctx,
            thread.title,
            target.body,
            continue_path=base_path,
            continue_query=f"post={target.post_id}",
            lead_html=(
                f"<h1>{h(thread.title)}</h1>"
                f'<p class="meta">post by {h(_author_name(ctx, target.author_user_id))} '
                f"on {fmt_ts(target.created_at)}</p>"
            ),
            tail_html=f'<p><a href="{base_path}">back to thread</a></p>',
        )

    cursor_text = ctx.request.query_value(CURSOR_PARAM, "")
    cursor = decode_cursor(cursor_text) if cursor_text else None
    key_of = lambda p: (codec.ts_us(p.created_at), p.post_id)
    remaining = after_cursor(posts, key_of, cursor)

    reply_form = ""
    if ctx.can("forum", WRITE):
        reply_form = "<h2>Reply</h2>" + form(
            base_path,
            textarea("body", "Your reply", maxlen=ctx.config.forum_body_max_bytes, rows=8),
            "Post reply",
            ctx.csrf_token(),
        )

    def post_html(p, body_html: str) -> str:
        return (
            f'<article><p class="meta">{h(_author_name(ctx, p.author_user_id))} '
            f"on {fmt_ts(p.created_at)}</p>{body_html}</article>"
        )

    def build(selected: list, more: bool, first_body_chars: int | None) -> str:
        token = encode_cursor(key_of(selected[-1])) if more and selected else None
        rows = []
        for i, p in enumerate(selected):
            if i == 0 and first_body_chars is not None and first_body_chars < len(p.body):
                body_html = render_markup(p.body[:first_body_chars]) + (
                    f'<p class="pager">&hellip; <a href="{base_path}?post={p.post_id}&amp;'
                    f'from={first_body_chars}">view remainder &raquo;</a></p>'
                )
            else:
                body_html = render_markup(p.body)
            rows.append(post_html(p, body_html))
        inner = f"<h1>{h(thread.title)}</h1>" + "".join(rows)
        if not selected:
            inner += "<p>No posts.</p>"
        inner += next_page_link(base_path, token)
        if not more:
            inner += reply_form
        return chrome(
            thread.title,
            nav_html(ctx),
            inner,
            ctx.app.script_url if ctx.actor is not None else None,
        )

    def probe(k: int) -> int:
        return len(build(remaining[:k], k < len(remaining), None).encode("utf-8"))

    k = fit_page_size(len(remaining), probe, ctx.budget, ctx.config.page_hard_cap)
    if k == 0:
        return Response.html(build([], False, None))
    if probe(1) > ctx.budget.max_bytes:
        # One post alone overflows the page: truncate its body to fit.
        first = remaining[0]

        def slice_probe(chars: int) -> int:
            return len(build([first], len(remaining) > 1, chars).encode("utf-8"))

        chars = fit_text_slice(slice_probe, len(first.body), ctx.budget)
        return Response.html(build([first], len(remaining) > 1, chars))
    return Response.html(build(remaining[:k], k < len(remaining), None))


def forum_reply_submit(ctx: Context) -> Response:
    thread_id = int(ctx.params["tid"])
    ctx.site.content.reply(ctx.actor, ctx.group, thread_id, ctx.request.form_value("body"))
    return Response.redirect(f"/g/{ctx.group.slug}/forum/{thread_id}")


# ---------------------------------------------------------------------------
# agenda


def agenda_page(ctx: Context) -> Response:
    group = ctx.group
    now = datetime.fromtimestamp(ctx.site.clock(), tz=timezone.utc)
    default_from = (now - timedelta(days=7)).date().isoformat()
    default_to = (now + timedelta(days=365)).date().isoformat()
    from_text = ctx.request.query_value("from", default_from)
    to_text = ctx.request.query_value("to", default_to)
    ws = parse_when(from_text, "", "window start")
    we = parse_when(to_text, "", "window end")
    items = ctx.site.content.list_agenda(ctx.actor, group, ws, we)

    add_form = ""
    if ctx.can("agenda", WRITE):
        add_form = "<h2>Add item</h2>" + form(
            f"/g/{group.slug}/agenda",
            text_input("title", "Title", maxlen=ctx.config.title_max_chars)
            + text_input("date", "Date (YYYY-MM-DD)")
            + text_input("time", "Time (HH:MM, optional)")
            + text_input("end_date", "End date (optional)")
            + text_input("end_time", "End time (optional)")
            + text_input("location", "Location")
            + textarea("notes", "Notes", maxlen=ctx.config.agenda_notes_max_bytes, rows=3),
            "Add to agenda",
            ctx.csrf_token(),
        )

    def item_html(item) -> str:
        when = fmt_ts(item.starts_at)
        if item.ends_at is not None:
            when += f" &ndash; {fmt_ts(item.ends_at)}"
        extra = f" at {h(item.location)}" if item.location else ""
        notes = f"<br>{render_markup(item.notes)}" if item.notes else ""
        return f'<li><strong>{h(item.title)}</strong><br><span class="meta">{when}{extra}</span>{notes}</li>'

    query = f"from={from_text}&to={to_text}"
    return render_listing(
        ctx,
        f"Agenda - {group.display_name}",
        items,
        key_of=lambda i: (codec.ts_us(i.starts_at), i.item_id),
        item_html=item_html,
        base_path=f"/g/{group.slug}/agenda",
        extra_query=query,
        lead_html=(
            f'<p class="meta">Window {h(from_text)} to {h(to_text)} (end exclusive)</p><ul>'
        ),
        tail_html="</ul>" + add_form,
        empty_text="Nothing scheduled in this window.",
    )


def agenda_add_submit(ctx: Context) -> Response:
    req = ctx.request
    starts_at = parse_when(req.form_value("date"), req.form_value("time"), "start")
    ends_at = None
    if req.form_value("end_date").strip():
        ends_at = parse_when(req.form_value("end_date"), req.form_value("end_time"), "end")
    ctx.site.content.add_agenda_item(
        ctx.actor,
        ctx.group,
        req.form_value("title"),
        starts_at=starts_at,
        ends_at=ends_at,
        location=req.form_value("location"),
        notes=req.form_value("notes"),
    )
    return Response.redirect(f"/g/{ctx.group.slug}/agenda")


# ---------------------------------------------------------------------------
# ledger


def ledger_page(ctx: Context) -> Response:
    group = ctx.group
    entries = ctx.site.content.list_ledger(ctx.actor, group)
    currency = ctx.site.content.group_currency(group)
    running = 0
    annotated = []
    for e in entries:
        running += e.amount_minor
        annotated.append((e, running))
    total = running

    add_form = ""
    if ctx.can("ledger", MANAGE):
        add_form = "<h2>Add entry</h2>" + form(
            f"/g/{group.slug}/ledger",
            text_input("date", "Date (YYYY-MM-DD)")
            + text_input("description", "Description", maxlen=ctx.config.ledger_description_max_chars)
            + text_input("amount", "Amount (credit positive, e.g. -125.00)"),
            "Record entry",
            ctx.csrf_token(),
        )

    def item_html(pair) -> str:
        e, bal = pair
        return (
            f"<tr><td>{e.entry_date.isoformat()}</td><td>{h(e.description)}</td>"
            f'<td class="num">{fmt_amount(e.amount_minor)}</td>'
            f'<td class="num">{fmt_amount(bal)}</td></tr>'
        )

    lead = (
        f"<p>Balance: <strong>{fmt_amount(total)} {h(currency)}</strong></p>"
        "<table><tr><th>Date</th><th>Description</th><th>Amount</th><th>Running</th></tr>"
    )
    return render_listing(
        ctx,
        f"Balance sheet - {group.display_name}",
        annotated,
        key_of=lambda pair: (pair[0].entry_date.toordinal(), pair[0].entry_id),
        item_html=item_html,
        base_path=f"/g/{group.slug}/ledger",
        lead_html=lead,
        tail_html="</table>" + add_form,
        empty_text="No entries recorded.",
    )


def ledger_add_submit(ctx: Context) -> Response:
    req = ctx.request
    ctx.site.content.add_ledger_entry(
        ctx.actor,
        ctx.group,
        entry_date=parse_date(req.form_value("date"), "entry date"),
        description=req.form_value("description"),
        amount_minor=parse_amount(req.form_value("amount")),
    )
    return Response.redirect(f"/g/{ctx.group.slug}/ledger")


# ---------------------------------------------------------------------------
# links


def links_page(ctx: Context) -> Response:
    group = ctx.group
    links = ctx.site.content.list_links(ctx.actor, group)
    add_form = ""
    if ctx.can("links", WRITE):
        add_form = "<h2>Add link</h2>" + form(
            f"/g/{group.slug}/links",
            text_input("url", "URL (http or https)", maxlen=ctx.config.url_max_chars)
            + text_input("label", "Label (optional)"),
            "Add link",
            ctx.csrf_token(),
        )
    return render_listing(
        ctx,
        f"Favourite links - {group.display_name}",
        links,
        key_of=lambda l: (-codec.ts_us(l.added_at), -l.link_id),
        item_html=lambda l: f'<li><a href="{h(l.url)}" rel="external">{h(l.label)}</a></li>',
        base_path=f"/g/{group.slug}/links",
        lead_html="<ul>",
        tail_html="</ul>" + add_form,
        empty_text="No links shared yet.",
    )


def links_add_submit(ctx: Context) -> Response:
    ctx.site.content.add_link(
        ctx.actor, ctx.group, ctx.request.form_value("url").strip(), ctx.request.form_value("label")
    )
    return Response.redirect(f"/g/{ctx.group.slug}/links")


# ---------------------------------------------------------------------------
# files


def files_page(ctx: Context) -> Response:
    group = ctx.group
    assets = ctx.site.content.list_assets(ctx.actor, group)
    upload_form = ""
    if ctx.can("files", WRITE):
        upload_form = "<h2>Upload</h2>" + form(
            f"/g/{group.slug}/files",
            '<label>File <input type="file" name="file"></label>',
            "Upload",
            ctx.csrf_token(),
            multipart=True,
        )

    def item_html(a) -> str:
        kb = (a.size_bytes + 1023) // 1024
        return (
            f'<tr><td><a href="/g/{group.slug}/files/{a.asset_id}">{h(a.filename)}</a></td>'
            f'<td>{h(a.media_type)}</td><td class="num">{kb} KB</td>'
            f'<td class="meta">{fmt_ts(a.uploaded_at)}</td></tr>'
        )

    return render_listing(
        ctx,
        f"Files - {group.display_name}",
        assets,
        key_of=lambda a: (-codec.ts_us(a.uploaded_at), -a.asset_id),
        item_html=item_html,
        base_path=f"/g/{group.slug}/files",
        lead_html="<table><tr><th>Name</th><th>Type</th><th>Size</th><th>Uploaded</th></tr>",
        tail_html="</table>" + upload_form,
        empty_text="No files shared yet.",
    )


def files_upload_submit(ctx: Context) -> Response:
    upload = ctx.request.files.get("file")
    if upload is None or not upload[0]:
        raise ValidationError("choose a file to upload")
    filename, media_type, payload = upload
    ctx.site.content.upload_asset(ctx.actor, ctx.group, filename, media_type, payload)
    return Response.redirect(f"/g/{ctx.group.slug}/files")


def file_download(ctx: Context) -> Response:
    asset_id = int(ctx.params["aid"])
    asset, blob = ctx.site.content.download_asset(ctx.actor, ctx.group, asset_id)
    resp = Response(status=200, body=blob, content_type=asset.media_type)
    safe_name = asset.filename.replace('"', "")
    resp.headers.append(("Content-Disposition", f'attachment; filename="{safe_name}"'))
    return resp


# ---------------------------------------------------------------------------
# messages and alerts


def _message_groups(ctx: Context) -> list[Group]:
    """Groups whose inbox this user may read."""
    return [
        g
        for g, _ in ctx.site.accounts.groups_for_user(ctx.actor.user_id)
        if ctx.site.accounts.check_privilege(ctx.actor, g, "messages", READ)
    ]


def messages_page(ctx: Context) -> Response:
    groups = _message_groups(ctx)
    if not groups:
        return page(
            ctx,
            "Messages",
            "<h1>Messages</h1><p>You are not in any group with message access.</p>",
        )
    slug = ctx.request.query_value("g", groups[0].slug)
    selected = next((g for g in groups if g.slug == slug), None)
    if selected is None:
        raise HttpError(404, "no such group in your inbox")
    summary = ctx.site.messaging.unread_summary(ctx.actor)
    tabs = " ".join(
        f'<a href="/messages?g={g.slug}">{h(g.display_name)}'
        + (
            f' <span class="badge">{summary.unread_by_group.get(g.group_id, 0)}</span>'
            if summary.unread_by_group.get(g.group_id)
            else ""
        )
        + "</a>"
        for g in groups
    )
    headers = ctx.site.messaging.list_inbox(ctx.actor, selected)
    lead = (
        f"<p>{tabs}</p>"
        f'<p><a href="/messages/new?g={selected.slug}">Write a message</a> &middot; '
        '<a href="/messages/sent">Sent</a></p>'
        "<table><tr><th>From</th><th>Subject</th><th>Sent</th></tr>"
    )

    def item_html(m) -> str:
        cls = "" if m.read else ' class="unread"'
        return (
            f"<tr{cls}><td>{h(m.sender_display)}</td>"
            f'<td><a href="/messages/{m.message_id}">{h(m.subject) or "(no subject)"}</a></td>'
            f'<td class="meta">{fmt_ts(m.sent_at)}</td></tr>'
        )

    return render_listing(
        ctx,
        f"Messages - {selected.display_name}",
        headers,
        key_of=lambda m: (-codec.ts_us(m.sent_at), -m.message_id),
        item_html=item_html,
        base_path="/messages",
        extra_query=f"g={selected.slug}",
        lead_html=lead,
        tail_html="</table>",
        empty_text="Inbox empty.",
    )


def messages_sent_page(ctx: Context) -> Response:
    sent = ctx.site.messaging.list_sent(ctx.actor)

    def item_html(pair) -> str:
        m, recipient = pair
        if m.first_read_at is not None:
            stamp = m.first_read_at.isoformat()
            glyph = f'<span class="receipt" data-read-at="{h(stamp)}">read {fmt_ts(m.first_read_at)}</span>'
        else:
            glyph = '<span class="receipt unread" data-read-at="">unread</span>'
        return (
            f"<tr><td>{h(recipient)}</td><td>{h(m.subject) or '(no subject)'}</td>"
            f'<td class="meta">{fmt_ts(m.sent_at)}</td><td>{glyph}</td></tr>'
        )

    return render_listing(
        ctx,
        "Sent messages",
        sent,
        key_of=lambda pair: (-codec.ts_us(pair[0].sent_at), -pair[0].message_id),
        item_html=item_html,
        base_path="/messages/sent",
        lead_html='<p><a href="/messages">Inbox</a></p>'
        "<table><tr><th>To</th><th>Subject</th><th>Sent</th><th>Status</th></tr>",
        tail_html="</table>",
        empty_text="No sent messages.",
    )


def message_view(ctx: Context) -> Response:
    message_id = int(ctx.params["mid"])
    message = ctx.site.messaging.read_message(ctx.actor, message_id)
    group = ctx.site.accounts.group_by_id(message.group_id)
    if message.is_internal:
        sender = ctx.site.accounts.user_by_id(message.sender)
        sender_line = h(sender.display_name if sender else "(removed account)")
    else:
        sender_line = f"{h(message.sender.name)} (visitor"
        if message.sender.contact:
            sender_line += f", {h(message.sender.contact)}"
        sender_line += ")"
    lead = (
        f"<h1>{h(message.subject) or '(no subject)'}</h1>"
        f'<p class="meta">From {sender_line} in {h(group.display_name if group else "?")} '
        f"on {fmt_ts(message.sent_at)}</p>"
    )
    back = f'<p><a href="/messages?g={group.slug}">back to inbox</a></p>' if group else ""
    return render_document(
        ctx,
        message.subject or "(no subject)",
        message.body,
        continue_path=f"/messages/{message_id}",
        lead_html=lead,
        tail_html=back,
    )


def message_new_form(ctx: Context) -> Response:
    groups = [
        g
        for g, _ in ctx.site.accounts.groups_for_user(ctx.actor.user_id)
        if ctx.site.accounts.check_privilege(ctx.actor, g, "messages", WRITE)
    ]
    if not groups:
        return page(
            ctx,
            "Write a message",
            "<h1>Write a message</h1><p>No group grants you message sending.</p>",
        )
    slug = ctx.request.query_value("g", groups[0].slug)
    selected = next((g for g in groups if g.slug == slug), None)
    if selected is None:
        raise HttpError(404, "you cannot send messages in that group")
    others = " ".join(
        f'<a href="/messages/new?g={g.slug}">{h(g.display_name)}</a>'
        for g in groups
        if g.group_id != selected.group_id
    )
    recipients = [
        u for u, _ in ctx.site.accounts.list_members(selected.group_id)
        if u.user_id != ctx.actor.user_id
    ]
    options = "".join(
        f'<option value="{h(u.login)}">{h(u.display_name)}</option>' for u in recipients
    )
    content = (
        f"<h1>Write a message - {h(selected.display_name)}</h1>"
        + (f'<p class="meta">Other groups: {others}</p>' if others else "")
        + form(
            "/messages/new",
            hidden("g", selected.slug)
            + f"<label>To <select name=\"to\">{options}</select></label>"
            + text_input("subject", "Subject", maxlen=ctx.config.subject_max_chars)
            + textarea("body", "Message", maxlen=ctx.config.message_body_max_bytes, rows=8),
            "Send",
            ctx.csrf_token(),
        )
    )
    return page(ctx, "Write a message", content)


def message_new_submit(ctx: Context) -> Response:
    req = ctx.request
    slug = req.form_value("g")
    group = ctx.site.accounts.group_by_slug(slug)
    if group is None:
        raise HttpError(404, "no such group")
    recipient = ctx.site.accounts.user_by_login(req.form_value("to").strip().lower())
    if recipient is None:
        raise ValidationError("unknown recipient")
    ctx.site.messaging.send_internal(
        ctx.actor, group, recipient, req.form_value("subject"), req.form_value("body")
    )
    return Response.redirect(f"/messages?g={group.slug}")


def alerts_page(ctx: Context) -> Response:
    views = ctx.site.messaging.list_alerts(ctx.actor)

    def item_html(v) -> str:
        read_at = fmt_ts(v.first_read_at) if v.first_read_at else "?"
        return (
            f"<li>Your message <strong>{h(v.subject) or '(no subject)'}</strong> "
            f"was read at {read_at} "
            + inline_button(f"/alerts/{v.alert.alert_id}/ack", "dismiss", ctx.csrf_token())
            + "</li>"
        )

    return render_listing(
        ctx,
        "Alerts",
        views,
        key_of=lambda v: (-codec.ts_us(v.alert.created_at), -v.alert.alert_id),
        item_html=item_html,
        base_path="/alerts",
        lead_html="<ul>",
        tail_html="</ul>",
        empty_text="No unacknowledged read receipts.",
    )


def alert_ack_submit(ctx: Context) -> Response:
    ctx.site.messaging.ack_alert(ctx.actor, int(ctx.params["aid"]))
    return Response.redirect("/alerts")


def api_unread(ctx: Context) -> Response:
    summary = ctx.site.messaging.unread_summary(ctx.actor)
    unread = {}
    for group_id, count in summary.unread_by_group.items():
        if count:
            group = ctx.site.accounts.group_by_id(group_id)
            if group is not None:
                unread[group.slug] = count
    body = json.dumps(
        {"unread": dict(sorted(unread.items())), "alerts": summary.alerts},
        separators=(",", ":"),
    )
    return Response.json(body)


# ---------------------------------------------------------------------------
# owner administration


def admin_members_page(ctx: Context, notice: str = "") -> Response:
    group = ctx.group
    members = ctx.site.accounts.list_members(group.group_id)
    token = ctx.csrf_token()
    rows = []
    for user, m in sorted(members, key=lambda um: um[0].login):
        grants = (
            "all (owner)"
            if m.role == ROLE_OWNER
            else "; ".join(
                f"{f}:{''.join(sorted(lv[0] for lv in m.privileges.get(f, ())))}"
                for f in FEATURES
                if m.privileges.get(f)
            )
            or "none"
        )
        remove = form(
            f"/g/{group.slug}/admin/members",
            hidden("action", "remove") + hidden("login", user.login),
            "remove",
            token,
        )
        rows.append(
            f"<tr><td>{h(user.login)}</td><td>{h(user.display_name)}</td>"
            f"<td>{h(m.role)}</td><td>{h(grants)}</td><td>{remove}</td></tr>"
        )
    feature_options = "".join(f'<option value="{f}">{f}</option>' for f in FEATURES)
    level_boxes = "".join(
        f'<label><input type="checkbox" name="level" value="{lv}"> {lv}</label>'
        for lv in ("read", "write", "manage")
    )
    content = (
        f"<h1>Members - {h(group.display_name)}</h1>"
        + (f'<p class="notice">{h(notice)}</p>' if notice else "")
        + "<table><tr><th>Login</th><th>Name</th><th>Role</th><th>Privileges</th><th></th></tr>"
        + "".join(rows)
        + "</table><h2>Add member</h2>"
        + form(
            f"/g/{group.slug}/admin/members",
            hidden("action", "add")
            + text_input("login", "Login of an existing account")
            + '<label>Role <select name="role"><option value="member">member</option>'
            '<option value="owner">owner</option></select></label>',
            "Add member",
            token,
        )
        + "<h2>Set a privilege</h2>"
        + form(
            f"/g/{group.slug}/admin/privileges",
            text_input("login", "Member login")
            + f'<label>Feature <select name="feature">{feature_options}</select></label>'
            + level_boxes,
            "Apply",
            token,
        )
    )
    return page(ctx, f"Members - {group.display_name}", content)


def admin_members_submit(ctx: Context) -> Response:
    req = ctx.request
    action = req.form_value("action")
    login = req.form_value("login").strip().lower()
    user = ctx.site.accounts.user_by_login(login)
    if user is None:
        raise ValidationError(f"no account with login {login!r}")
    if action == "add":
        role = req.form_value("role", "member")
        ctx.site.accounts.add_member(ctx.actor, ctx.group, user, role=role)
    elif action == "remove":
        ctx.site.accounts.remove_member(ctx.actor, ctx.group, user)
    else:
        raise ValidationError("unknown action")
    return Response.redirect(f"/g/{ctx.group.slug}/admin/members")


def admin_privileges_submit(ctx: Context) -> Response:
    req = ctx.request
    login = req.form_value("login").strip().lower()
    user = ctx.site.accounts.user_by_login(login)
    if user is None:
        raise ValidationError(f"no account with login {login!r}")
    levels = set(req.form.get("level", []))
    ctx.site.accounts.set_privilege(
        ctx.actor, ctx.group, user, req.form_value("feature"), levels
    )
    return Response.redirect(f"/g/{ctx.group.slug}/admin/members")


def admin_page_form(ctx: Context) -> Response:
    group = ctx.group
    alias = f'<p class="meta">Domain alias: {h(group.domain_alias)}</p>' if group.domain_alias else ""
    content = (
        f"<h1>Edit public page - {h(group.display_name)}</h1>"
        + alias
        + "<p class=\"meta\">Formatting: blank line for a new paragraph, **bold**, *italic*, "
        "[label](https://url), ``` fences for preformatted text. Raw HTML is rejected.</p>"
        + form(
            f"/g/{group.slug}/admin/page",
            textarea("page_body", "Page body", group.page_body, rows=14),
            "Save",
            ctx.csrf_token(),
        )
    )
    return page(ctx, f"Edit page - {group.display_name}", content)


def admin_page_submit(ctx: Context) -> Response:
    ctx.site.accounts.set_group_page(ctx.actor, ctx.group, ctx.request.form_value("page_body"))
    return Response.redirect(f"/g/{ctx.group.slug}")


def admin_publications_submit(ctx: Context) -> Response:
    req = ctx.request
    year_text = req.form_value("year").strip()
    try:
        year = int(year_text)
    except ValueError:
        raise ValidationError("year must be a number")
    asset_text = req.form_value("asset_id").strip()
    asset_id = None
    if asset_text:
        try:
            asset_id = int(asset_text)
        except ValueError:
            raise ValidationError("asset id must be a number")
    ctx.site.content.add_publication(
        ctx.actor,
        ctx.group,
        title=req.form_value("title"),
        authors=[a for a in req.form_value("authors").split(";")],
        venue=req.form_value("venue"),
        year=year,
        external_url=req.form_value("external_url").strip() or None,
        asset_id=asset_id,
    )
    return Response.redirect(f"/g/{ctx.group.slug}/publications")


# ---------------------------------------------------------------------------
# host administration


def admin_groups_page(ctx: Context) -> Response:
    groups = ctx.site.accounts.list_groups()
    token = ctx.csrf_token()
    rows = "".join(
        f'<tr><td><a href="/g/{g.slug}">{h(g.slug)}</a></td><td>{h(g.display_name)}</td>'
        f"<td>{h(g.domain_alias or '')}</td></tr>"
        for g in groups
    )
    content = (
        "<h1>Groups</h1><table><tr><th>Slug</th><th>Name</th><th>Domain alias</th></tr>"
        + rows
        + "</table><h2>Create group</h2>"
        + form(
            "/admin/groups",
            hidden("action", "create")
            + text_input("slug", "Slug ([a-z0-9-], up to 32)")
            + text_input("name", "Display name")
            + text_input("owner", "Initial owner login")
            + text_input("domain_alias", "Domain alias (optional)"),
            "Create",
            token,
        )
        + "<h2>Set a domain alias</h2>"
        + form(
            "/admin/groups",
            hidden("action", "alias")
            + text_input("slug", "Group slug")
            + text_input("domain_alias", "Hostname (empty to clear)"),
            "Set alias",
            token,
        )
    )
    return page(ctx, "Groups", content)


def admin_groups_submit(ctx: Context) -> Response:
    req = ctx.request
    action = req.form_value("action", "create")
    if action == "create":
        owner = ctx.site.accounts.user_by_login(req.form_value("owner").strip().lower())
        if owner is None:
            raise ValidationError("unknown owner login")
        ctx.site.accounts.create_group(
            ctx.actor,
            req.form_value("slug").strip(),
            req.form_value("name"),
            owner.user_id,
            domain_alias=req.form_value("domain_alias").strip() or None,
        )
    elif action == "alias":
        group = ctx.site.accounts.group_by_slug(req.form_value("slug").strip())
        if group is None:
            raise HttpError(404, "no such group")
        ctx.site.accounts.set_domain_alias(
            ctx.actor, group, req.form_value("domain_alias").strip() or None
        )
    else:
        raise ValidationError("unknown action")
    return Response.redirect("/admin/groups")


def admin_users_page(ctx: Context) -> Response:
    rows = "".join(
        f"<tr><td>{h(u.login)}</td><td>{h(u.display_name)}</td>"
        f"<td>{'host admin' if u.is_host_admin else ''}</td></tr>"
        for u in ctx.site.accounts.list_users()
    )
    content = (
        "<h1>User accounts</h1><table><tr><th>Login</th><th>Name</th><th></th></tr>"
        + rows
        + "</table><h2>Create account</h2>"
        + form(
            "/admin/users",
            text_input("login", "Login")
            + text_input("display_name", "Display name")
            + password_input("password", "Password (8+ characters)")
            + '<label><input type="checkbox" name="is_host_admin" value="1"> host admin</label>',
            "Create",
            ctx.csrf_token(),
        )
    )
    return page(ctx, "User accounts", content)


def admin_users_submit(ctx: Context) -> Response:
    req = ctx.request
    ctx.site.accounts.create_user(
        ctx.actor,
        req.form_value("login").strip().lower(),
        req.form_value("display_name"),
        req.form_value("password"),
        is_host_admin=req.form_value("is_host_admin") == "1",
    )
    return Response.redirect("/admin/users")


# ---------------------------------------------------------------------------
# the application
SLUG = r"(?P<slug>[a-z0-9-]{1,32})"


def _routes() -> list[Route]:
    def r(method, pattern, handler, access, *, exempt=False, name=""):
        return Route(
            method,
            re.compile(f"^{pattern}$"),
            handler,
            access,
            budget_exempt=exempt,
            name=name or handler.__name__,
        )

    return [
        r("GET", r"/", home, ACCESS_PUBLIC),
        r("GET", r"/static/(?P<name>[a-zA-Z0-9._-]+)", static_file, ACCESS_PUBLIC, exempt=True),
        r("GET", r"/login", login_form_page, ACCESS_PUBLIC),
        r("POST", r"/login", login_submit, ACCESS_PUBLIC),
        r("POST", r"/logout", logout_submit, ACCESS_PUBLIC),
        r("GET", rf"/g/{SLUG}", group_page, ACCESS_PUBLIC),
        r("GET", rf"/g/{SLUG}/publications", publications_page, ACCESS_PUBLIC),
        r("GET", rf"/g/{SLUG}/contact", contact_form_page, ACCESS_PUBLIC),
        r("POST", rf"/g/{SLUG}/contact", contact_submit, ACCESS_PUBLIC),
        # member features
        r("GET", rf"/g/{SLUG}/forum", forum_list, ACCESS_FEATURE("forum", READ)),
        r("GET", rf"/g/{SLUG}/forum/new", forum_new_form, ACCESS_FEATURE("forum", WRITE)),
        r("POST", rf"/g/{SLUG}/forum/new", forum_new_submit, ACCESS_FEATURE("forum", WRITE)),
        r("GET", rf"/g/{SLUG}/forum/(?P<tid>\d+)", forum_thread, ACCESS_FEATURE("forum", READ)),
        r("POST", rf"/g/{SLUG}/forum/(?P<tid>\d+)", forum_reply_submit, ACCESS_FEATURE("forum", WRITE)),
        r("GET", rf"/g/{SLUG}/agenda", agenda_page, ACCESS_FEATURE("agenda", READ)),
        r("POST", rf"/g/{SLUG}/agenda", agenda_add_submit, ACCESS_FEATURE("agenda", WRITE)),
        r("GET", rf"/g/{SLUG}/ledger", ledger_page, ACCESS_FEATURE("ledger", READ)),
        r("POST", rf"/g/{SLUG}/ledger", ledger_add_submit, ACCESS_FEATURE("ledger", MANAGE)),
        r("GET", rf"/g/{SLUG}/links", links_page, ACCESS_FEATURE("links", READ)),
        r("POST", rf"/g/{SLUG}/links", links_add_submit, ACCESS_FEATURE("links", WRITE)),
        r("GET", rf"/g/{SLUG}/files", files_page, ACCESS_FEATURE("files", READ)),
        r("POST", rf"/g/{SLUG}/files", files_upload_submit, ACCESS_FEATURE("files", WRITE)),
        r(
            "GET",
            rf"/g/{SLUG}/files/(?P<aid>\d+)",
            file_download,
            ACCESS_FEATURE("files", READ),
            exempt=True,  # stored data, not a dynamically generated page
        ),
        # messages / alerts
        r("GET", r"/messages", messages_page, ACCESS_AUTH),
        r("GET", r"/messages/sent", messages_sent_page, ACCESS_AUTH),
        r("GET", r"/messages/new", message_new_form, ACCESS_AUTH),
        r("POST", r"/messages/new", message_new_submit, ACCESS_AUTH),
        r("GET", r"/messages/(?P<mid>\d+)", message_view, ACCESS_AUTH),
        r("GET", r"/alerts", alerts_page, ACCESS_AUTH),
        r("POST", r"/alerts/(?P<aid>\d+)/ack", alert_ack_submit, ACCESS_AUTH),
        r("GET", r"/api/unread", api_unread, ACCESS_AUTH),
        # owner administration
        r("GET", rf"/g/{SLUG}/admin/members", admin_members_page, ACCESS_FEATURE("page", MANAGE)),
        r("POST", rf"/g/{SLUG}/admin/members", admin_members_submit, ACCESS_FEATURE("page", MANAGE)),
        r("POST", rf"/g/{SLUG}/admin/privileges", admin_privileges_submit, ACCESS_FEATURE("page", MANAGE)),
        r("GET", rf"/g/{SLUG}/admin/page", admin_page_form, ACCESS_FEATURE("page", MANAGE)),
        r("POST", rf"/g/{SLUG}/admin/page", admin_page_submit, ACCESS_FEATURE("page", MANAGE)),
        r(
            "POST",
            rf"/g/{SLUG}/admin/publications",
            admin_publications_submit,
            ACCESS_FEATURE("publications", MANAGE),
        ),
        # host administration
        r("GET", r"/admin/groups", admin_groups_page, ACCESS_HOST),
        r("POST", r"/admin/groups", admin_groups_submit, ACCESS_HOST),
        r("GET", r"/admin/users", admin_users_page, ACCESS_HOST),
        r("POST", r"/admin/users", admin_users_submit, ACCESS_HOST),
    ]


class Application:
    """Routes requests to handlers and enforces the cross-cutting rules."""

    def __init__(self, site: Site, extra_static_dir=None):
        self.site = site
        self.budget = PageBudget.from_config(site.config)
        self.routes = _routes()
        self.static_dirs = []
        if extra_static_dir is not None:
            self.static_dirs.append(Path(extra_static_dir))
        self.static_dirs.append(Path(__file__).parent / "static")
        self.script_url = "/static/app.js" if self.static_bytes("app.js") is not None else None

    def static_bytes(self, name: str) -> bytes | None:
        if "/" in name or "\\" in name or name.startswith("."):
            return None
        for directory in self.static_dirs:
            candidate = directory / name
            if candidate.is_file():
                return candidate.read_bytes()
        return None

    # -- dispatch ------------------------------------------------------------

    def dispatch(self, request: Request) -> Response:
        ctx = Context(
            app=self,
            site=self.site,
            request=request,
            actor=None,
            session_id=None,
        )
        try:
            session_id = request.cookies.get(SESSION_COOKIE)
            ctx.actor = self.site.accounts.resolve_session(session_id)
            ctx.session_id = session_id if ctx.actor is not None else None

            route, params = self._match(request)
            ctx.params = params

            if "slug" in params:
                ctx.group = self.site.accounts.group_by_slug(params["slug"])
                if ctx.group is None:
                    raise HttpError(404, "no such group")
            elif request.path == "/" and request.method == "GET":
                aliased = self.site.accounts.group_by_domain_alias(request.host)
                if aliased is not None:
                    ctx.group = aliased
                    self._check_access(ctx, ACCESS_PUBLIC)
                    resp = group_page(ctx)
                    return self._finish(ctx, resp, budget_exempt=False, route_name="group_page")

            self._check_access(ctx, route.access)
            if request.method == "POST":
                self._check_csrf(ctx)
            resp = route.handler(ctx)
            return self._finish(ctx, resp, route.budget_exempt, route.name)
        except HttpError as exc:
            return self._error_response(ctx, exc.status, exc.message)
        except ValidationError as exc:
            return self._error_response(ctx, 400, str(exc))
        except NotAuthorizedError:
            return self._error_response(ctx, 403, "You do not have access to this page.")
        except NotFoundError as exc:
            return self._error_response(ctx, 404, str(exc))
        except RateLimitedError as exc:
            return self._error_response(ctx, 429, str(exc))
        except BudgetExceededError:
            return self._error_response(
                ctx, 500, "This page exceeded its size budget; the fault is logged."
            )
        except (IntegrityError, SciBlogError) as exc:
            log.exception("internal error handling %s %s", request.method, request.path)
            return self._error_response(ctx, 500, "Internal error.")

    def _match(self, request: Request) -> tuple[Route, dict]:
        for route in self.routes:
            if route.method != request.method:
                continue
            m = route.pattern.match(request.path)
            if m:
                return route, m.groupdict()
        raise HttpError(404, "no such page")

    def _check_access(self, ctx: Context, access: tuple) -> None:
        kind = access[0]
        if kind == "public":
            return
        if ctx.actor is None and kind in ("auth", "host"):
            raise HttpError(403, "You must be signed in to see this page.")
        if kind == "auth":
            return
        if kind == "host":
            if not ctx.actor.is_host_admin:
                raise HttpError(403, "You do not have access to this page.")
            return
        if kind == "feature":
            _, feature, level = access
            if not ctx.site.accounts.check_privilege(ctx.actor, ctx.group, feature, level):
                raise HttpError(403, "You do not have access to this page.")
            return
        raise HttpError(500, "route misconfigured")

    def _check_csrf(self, ctx: Context) -> None:
        provided = ctx.request.form_value("csrf")
        if ctx.session_id:
            expected = session_csrf_token(ctx.session_id)
        else:
            expected = ctx.request.cookies.get(ANON_CSRF_COOKIE, "")
        if not expected or not secrets.compare_digest(provided, expected):
            raise HttpError(403, "The form token was missing or stale; go back and retry.")

    def _finish(
        self, ctx: Context, resp: Response, budget_exempt: bool, route_name: str
    ) -> Response:
        if (
            not budget_exempt
            and 200 <= resp.status < 300
            and resp.is_dynamic_document()
        ):
            check_budget(route_name, resp.byte_count, self.budget)
        if resp.is_dynamic_document():
            resp.headers.append(("Cache-Control", "no-store"))
        for name, value in ctx.pending_cookies:
            resp.set_cookie(name, value, http_only=True)
        resp.headers.append(("X-Page-Bytes", str(resp.byte_count)))
        return resp

    def _error_response(self, ctx: Context, status: int, message: str) -> Response:
        titles = {
            400: "Bad request",
            403: "Access denied",
            404: "Not found",
            413: "Too large",
            429: "Slow down",
            500: "Server error",
        }
        title = titles.get(status, "Error")
        resp = Response.html(error_page(title, message), status)
        resp.headers.append(("X-Page-Bytes", str(resp.byte_count)))
        return resp
