"""Plain HTTP request/response types and form parsing.

The gateway is framework-free: the stdlib server hands us method, path,
headers, and body; everything else (cookies, query strings, urlencoded and
multipart forms) is parsed here. Handlers produce a Response; the server
layer serializes it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from urllib.parse import parse_qs, unquote, urlsplit

from ..errors import ValidationError


class HttpError(Exception):
    """Terminate handling with a status and a safe, public message."""

    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status
        self.message = message


@dataclass
class Request:
    method: str
    path: str
    query: dict[str, list[str]]
    headers: dict[str, str]  # keys lowercased
    body: bytes = b""
    remote_addr: str = ""

    @classmethod
    def make(
        cls,
        method: str,
        target: str,
        headers: dict[str, str] | None = None,
        body: bytes = b"",
        remote_addr: str = "127.0.0.1",
    ) -> "Request":
        split = urlsplit(target)
        return cls(
            method=method.upper(),
            path=unquote(split.path) or "/",
            query=parse_qs(split.query, keep_blank_values=True),
            headers={k.lower(): v for k, v in (headers or {}).items()},
            body=body,
            remote_addr=remote_addr,
        )

    @property
    def host(self) -> str:
        return self.headers.get("host", "").split(":")[0].lower()

    @property
    def cookies(self) -> dict[str, str]:
        out = {}
        raw = self.headers.get("cookie", "")
        for part in raw.split(";"):
            name, _, value = part.strip().partition("=")
            if name:
                out[name] = value
        return out

    def query_value(self, name: str, default: str = "") -> str:
        values = self.query.get(name)
        return values[0] if values else default

    @property
    def form(self) -> dict[str, list[str]]:
        ctype = self.headers.get("content-type", "")
        if ctype.startswith("application/x-www-form-urlencoded"):
            return parse_qs(self.body.decode("utf-8", "replace"), keep_blank_values=True)
        if ctype.startswith("multipart/form-data"):
            fields, _ = parse_multipart(self.body, ctype)
            return fields
        return {}

    def form_value(self, name: str, default: str = "") -> str:
        values = self.form.get(name)
        return values[0] if values else default

    @property
    def files(self) -> dict[str, tuple[str, str, bytes]]:
        ctype = self.headers.get("content-type", "")
        if ctype.startswith("multipart/form-data"):
            _, files = parse_multipart(self.body, ctype)
            return files
        return {}


@dataclass
class Response:
    status: int = 200
    body: bytes = b""
    content_type: str = "text/html; charset=utf-8"
    headers: list[tuple[str, str]] = field(default_factory=list)

    @property
    def byte_count(self) -> int:
        return len(self.body)

    @classmethod
    def html(cls, body: str | bytes, status: int = 200) -> "Response":
        if isinstance(body, str):
            body = body.encode("utf-8")
        return cls(status=status, body=body)

    @classmethod
    def json(cls, body: str | bytes, status: int = 200) -> "Response":
        if isinstance(body, str):
            body = body.encode("utf-8")
        return cls(status=status, body=body, content_type="application/json")

    @classmethod
    def redirect(cls, location: str) -> "Response":
        resp = cls(status=303, body=b"", content_type="text/plain; charset=utf-8")
        resp.headers.append(("Location", location))
        return resp

    def set_cookie(
        self, name: str, value: str, *, http_only: bool = True, max_age: int | None = None
    ) -> None:
        parts = [f"{name}={value}", "Path=/", "SameSite=Lax"]
        if http_only:
            parts.append("HttpOnly")
        if max_age is not None:
            parts.append(f"Max-Age={max_age}")
        self.headers.append(("Set-Cookie", "; ".join(parts)))

    def is_html(self) -> bool:
        return self.content_type.startswith("text/html")

    def is_dynamic_document(self) -> bool:
        return self.content_type.startswith(("text/html", "application/json"))


def parse_multipart(
    body: bytes, content_type: str
) -> tuple[dict[str, list[str]], dict[str, tuple[str, str, bytes]]]:
    """Minimal multipart/form-data parser for HTML file-upload forms.

    Returns (fields, files) where files maps field name to
    (filename, part content type, bytes).
    """
    boundary = None
    for param in content_type.split(";")[1:]:
        name, _, value = param.strip().partition("=")
        if name == "boundary":
            boundary = value.strip('"')
    if not boundary:
        raise ValidationError("multipart body without boundary")

    delimiter = b"--" + boundary.encode("ascii")
    fields: dict[str, list[str]] = {}
    files: dict[str, tuple[str, str, bytes]] = {}
    # Parts sit between boundary lines; the last boundary ends with "--".
    chunks = body.split(delimiter)
    for chunk in chunks[1:-1] if len(chunks) > 2 else []:
        part = chunk.removeprefix(b"\r\n")
        if part in (b"", b"--", b"--\r\n"):
            continue
        head, _, payload = part.partition(b"\r\n\r\n")
        payload = payload.removesuffix(b"\r\n")
        disposition = ""
        part_type = "application/octet-stream"
        for line in head.split(b"\r\n"):
            text = line.decode("utf-8", "replace")
            lower = text.lower()
            if lower.startswith("content-disposition:"):
                disposition = text.partition(":")[2]
            elif lower.startswith("content-type:"):
                part_type = text.partition(":")[2].strip()
        name = _disposition_param(disposition, "name")
        if name is None:
            continue
        filename = _disposition_param(disposition, "filename")
        if filename is not None:
            files[name] = (filename, part_type, payload)
        else:
            fields.setdefault(name, []).append(payload.decode("utf-8", "replace"))
    return fields, files


def _disposition_param(disposition: str, key: str) -> str | None:
    for param in disposition.split(";"):
        name, sep, value = param.strip().partition("=")
        if sep and name.strip().lower() == key:
            return value.strip().strip('"')
    return None
