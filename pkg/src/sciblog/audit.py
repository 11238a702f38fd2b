"""Crawl a running instance and audit every page against the byte budget.

Breadth-first over same-origin links starting at `/`, GET requests only
(plus one login POST when credentials are supplied), each URL visited
once. Every response is measured and priced with the dial-up transfer
model: body_bytes * 8 / line_bps seconds. The model deliberately excludes
TCP and HTTP overhead and modem compression, so it is a lower bound on
real transfer time.
"""

from __future__ import annotations

import gzip
import json
import math
import re
import urllib.error
import urllib.parse
import urllib.request
from dataclasses import dataclass
from html.parser import HTMLParser
from http.cookiejar import CookieJar

from .errors import SciBlogError, ValidationError

DEFAULT_LINE_BPS = 33_000
DEFAULT_BUDGET_BYTES = 25 * 1024

ASSET_PATH_RE = re.compile(r"^/g/[^/]+/files/\d+$")
_CSRF_RE = re.compile(r'name="csrf" value="([^"]+)"')


class AuditError(SciBlogError):
    """Target unreachable or login failed: the crawl cannot proceed."""


def estimate_transfer(body_bytes: int, line_bps: int | float) -> float:
    """Seconds to move `body_bytes` over a `line_bps` link, overhead-free."""
    if line_bps <= 0:
        raise ValidationError("line rate must be positive")
    return body_bytes * 8 / line_bps


@dataclass(frozen=True)
class PageMeasurement:
    url: str
    status: int
    body_bytes: int
    content_type: str
    exempt: bool
    within_budget: bool
    est_transfer_seconds: float
    decoded_bytes: int | None = None  # set when gzip was negotiated

    @property
    def is_html(self) -> bool:
        return self.content_type.startswith("text/html")

    def counts_against_budget(self, budget_bytes: int) -> bool:
        return (
            200 <= self.status < 300
            and self.is_html
            and not self.exempt
            and self.body_bytes > budget_bytes
        )


@dataclass(frozen=True)
class AuditReport:
    base_url: str
    budget_bytes: int
    line_bps: int
    measurements: tuple[PageMeasurement, ...]
    pages_total: int
    pages_over_budget: int
    max_page: PageMeasurement | None
    p95_transfer_seconds: float


class _LinkParser(HTMLParser):
    def __init__(self):
        super().__init__()
        self.links: list[str] = []

    def handle_starttag(self, tag, attrs):
        attrs = dict(attrs)
        if tag in ("a", "link") and attrs.get("href"):
            self.links.append(attrs["href"])
        elif tag == "script" and attrs.get("src"):
            self.links.append(attrs["src"])


def _extract_links(body: bytes) -> list[str]:
    parser = _LinkParser()
    try:
        parser.feed(body.decode("utf-8", "replace"))
    except Exception:
        pass
    return parser.links


def crawl(
    base_url: str,
    login: str | None = None,
    password: str | None = None,
    max_pages: int = 500,
    line_bps: int = DEFAULT_LINE_BPS,
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    accept_gzip: bool = False,
) -> list[PageMeasurement]:
    base_url = base_url.rstrip("/")
    base = urllib.parse.urlsplit(base_url)
    if base.scheme not in ("http", "https") or not base.netloc:
        raise AuditError(f"not a crawlable base URL: {base_url}")

    opener = urllib.request.build_opener(urllib.request.HTTPCookieProcessor(CookieJar()))
    headers = [("User-Agent", "sciblog-audit")]
    if accept_gzip:
        headers.append(("Accept-Encoding", "gzip"))
    opener.addheaders = headers

    def fetch(url: str, data: bytes | None = None):
        try:
            with opener.open(url, data=data, timeout=30) as resp:
                return resp.status, resp.headers, resp.read()
        except urllib.error.HTTPError as exc:
            return exc.code, exc.headers, exc.read()
        except OSError as exc:
            raise AuditError(f"cannot reach {url}: {exc}") from exc

    if login is not None:
        status, _, body = fetch(base_url + "/login")
        if status != 200:
            raise AuditError(f"login page unavailable (status {status})")
        match = _CSRF_RE.search(body.decode("utf-8", "replace"))
        if not match:
            raise AuditError("login page carries no form token")
        form = urllib.parse.urlencode(
            {"login": login, "password": password or "", "csrf": match.group(1)}
        ).encode()
        status, _, body = fetch(base_url + "/login", data=form)
        if b"Login failed" in body:
            raise AuditError("login rejected for the audit account")

    queue = ["/"]
    seen = {"/"}
    measurements: list[PageMeasurement] = []
    while queue and len(measurements) < max_pages:
        target = queue.pop(0)
        status, resp_headers, body = fetch(base_url + target)
        content_type = (resp_headers.get("Content-Type") or "").split(";")[0].strip()
        decoded = None
        if resp_headers.get("Content-Encoding") == "gzip":
            decoded = len(gzip.decompress(body))
        path = urllib.parse.urlsplit(target).path
        exempt = bool(ASSET_PATH_RE.match(path))
        is_html = content_type.startswith("text/html")
        over = 200 <= status < 300 and is_html and len(body) > budget_bytes
        measurements.append(
            PageMeasurement(
                url=target,
                status=status,
                body_bytes=len(body),
                content_type=content_type,
                exempt=exempt,
                within_budget=not over,
                est_transfer_seconds=estimate_transfer(len(body), line_bps),
                decoded_bytes=decoded,
            )
        )
        if not (200 <= status < 300 and is_html):
            continue
        for href in _extract_links(body):
            absolute = urllib.parse.urljoin(base_url + target, href)
            split = urllib.parse.urlsplit(absolute)
            if (split.scheme, split.netloc) != (base.scheme, base.netloc):
                continue
            normalized = split.path or "/"
            if split.query:
                normalized += "?" + split.query
            if normalized not in seen:
                seen.add(normalized)
                queue.append(normalized)
    return measurements


def percentile_95(values: list[float]) -> float:
    """Nearest-rank 95th percentile; 0.0 for an empty list."""
    if not values:
        return 0.0
    ordered = sorted(values)
    rank = math.ceil(0.95 * len(ordered))
    return ordered[rank - 1]


def build_report(
    measurements: list[PageMeasurement],
    base_url: str = "",
    budget_bytes: int = DEFAULT_BUDGET_BYTES,
    line_bps: int = DEFAULT_LINE_BPS,
) -> AuditReport:
    ordered = tuple(sorted(measurements, key=lambda m: m.url))
    over = [m for m in ordered if m.counts_against_budget(budget_bytes)]
    subject = [
        m
        for m in ordered
        if 200 <= m.status < 300 and m.is_html and not m.exempt
    ]
    max_page = max(subject, key=lambda m: m.body_bytes, default=None)
    return AuditReport(
        base_url=base_url,
        budget_bytes=budget_bytes,
        line_bps=line_bps,
        measurements=ordered,
        pages_total=len(ordered),
        pages_over_budget=len(over),
        max_page=max_page,
        p95_transfer_seconds=percentile_95([m.est_transfer_seconds for m in ordered]),
    )


def _measurement_json(m: PageMeasurement) -> dict:
    out = {
        "url": m.url,
        "status": m.status,
        "body_bytes": m.body_bytes,
        "content_type": m.content_type,
        "exempt": m.exempt,
        "within_budget": m.within_budget,
        "est_transfer_seconds": round(m.est_transfer_seconds, 6),
    }
    if m.decoded_bytes is not None:
        out["decoded_bytes"] = m.decoded_bytes
    return out


def render_report(report: AuditReport, fmt: str = "text") -> str:
    if fmt == "json":
        payload = {
            "base_url": report.base_url,
            "budget_bytes": report.budget_bytes,
            "line_bps": report.line_bps,
            "pages_total": report.pages_total,
            "pages_over_budget": report.pages_over_budget,
            "max_page": _measurement_json(report.max_page) if report.max_page else None,
            "p95_transfer_seconds": round(report.p95_transfer_seconds, 6),
            "measurements": [_measurement_json(m) for m in report.measurements],
        }
        return json.dumps(payload, indent=2, sort_keys=True)
    if fmt != "text":
        raise ValidationError(f"unknown report format: {fmt}")

    lines = [
        f"page budget audit of {report.base_url or '(measurements)'}",
        f"transfer model: bytes*8/{report.line_bps} bps, protocol overhead excluded (lower bound)",
        f"budget: {report.budget_bytes} bytes per dynamic page",
        f"pages crawled: {report.pages_total}",
        f"pages over budget: {report.pages_over_budget}",
        f"p95 transfer: {report.p95_transfer_seconds:.3f} s",
    ]
    if report.max_page is not None:
        lines.append(
            f"heaviest page: {report.max_page.url} "
            f"({report.max_page.body_bytes} bytes, "
            f"{report.max_page.est_transfer_seconds:.3f} s)"
        )
    offenders = [
        m for m in report.measurements if m.counts_against_budget(report.budget_bytes)
    ]
    if offenders:
        lines.append("over budget:")
        for m in offenders:
            lines.append(f"  {m.url}  {m.body_bytes} bytes")
    return "\n".join(lines)
