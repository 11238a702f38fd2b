"""Shared group content: closed forum, agenda, balance sheet, favourite
links, publications database, and digital data assets.

Everything here is group-scoped and gated through the accounts privilege
check. Forum threads are flat, mailing-list style chronologies. The ledger
is append-only signed amounts: corrections are new reversing entries, so
the full history stays auditable. Asset bytes live outside the record
store, content-addressed by SHA-256; the store holds metadata only.
"""

from __future__ import annotations

import hashlib
import os
import re
import threading
import time
from dataclasses import dataclass, replace
from datetime import date, datetime, timezone
from pathlib import Path

from . import codec, markup
from .accounts import MANAGE, READ, WRITE, AccountsService, Group, User
from .config import SiteConfig
from .errors import (
    IntegrityError,
    NotAuthorizedError,
    NotFoundError,
    ValidationError,
)
from .ids import IdAllocator, format_id
from .store import RecordStore


@dataclass(frozen=True)
class ForumThread:
    thread_id: int
    group_id: int
    title: str
    created_by: int
    created_at: datetime
    post_count: int
    last_post_at: datetime


@dataclass(frozen=True)
class ForumPost:
    post_id: int
    thread_id: int
    group_id: int
    author_user_id: int
    body: str
    created_at: datetime


@dataclass(frozen=True)
class AgendaItem:
    item_id: int
    group_id: int
    title: str
    starts_at: datetime
    ends_at: datetime | None
    location: str
    notes: str
    created_by: int


@dataclass(frozen=True)
class LedgerEntry:
    entry_id: int
    group_id: int
    entry_date: date
    description: str
    amount_minor: int  # positive credit, negative debit
    currency: str
    entered_by: int
    entered_at: datetime


@dataclass(frozen=True)
class FavoriteLink:
    link_id: int
    group_id: int
    url: str
    label: str
    added_by: int
    added_at: datetime


@dataclass(frozen=True)
class Publication:
    pub_id: int
    group_id: int
    title: str
    authors: tuple[str, ...]
    venue: str
    year: int
    external_url: str | None
    asset_id: int | None
    added_by: int


@dataclass(frozen=True)
class DataAsset:
    asset_id: int
    group_id: int
    filename: str
    media_type: str
    size_bytes: int
    sha256: str
    uploaded_by: int
    uploaded_at: datetime


_CURRENCY_RE = re.compile(r"^[A-Z]{3}$")
_MEDIA_TYPE_RE = re.compile(r"^[\w.+-]+/[\w.+-]+$")


def thread_key(gid: int, tid: int) -> str:
    return f"thread/{format_id(gid)}/{format_id(tid)}"


def post_key(gid: int, tid: int, pid: int) -> str:
    return f"post/{format_id(gid)}/{format_id(tid)}/{format_id(pid)}"


def agenda_key(gid: int, iid: int) -> str:
    return f"agenda/{format_id(gid)}/{format_id(iid)}"


def ledger_key(gid: int, eid: int) -> str:
    return f"ledger/{format_id(gid)}/{format_id(eid)}"


def link_key(gid: int, lid: int) -> str:
    return f"link/{format_id(gid)}/{format_id(lid)}"


def pub_key(gid: int, pid: int) -> str:
    return f"pub/{format_id(gid)}/{format_id(pid)}"


def asset_key(gid: int, aid: int) -> str:
    return f"asset/{format_id(gid)}/{format_id(aid)}"


# Canonical field ids per entity.
_T_ID, _T_GID, _T_TITLE, _T_BY, _T_AT, _T_COUNT, _T_LAST = 1, 2, 3, 4, 5, 6, 7
_P_ID, _P_TID, _P_GID, _P_AUTHOR, _P_BODY, _P_AT = 1, 2, 3, 4, 5, 6
_AG_ID, _AG_GID, _AG_TITLE, _AG_START, _AG_END, _AG_LOC, _AG_NOTES, _AG_BY = (
    1, 2, 3, 4, 5, 6, 7, 8,
)
_L_ID, _L_GID, _L_DATE, _L_DESC, _L_AMOUNT, _L_CUR, _L_BY, _L_AT = (
    1, 2, 3, 4, 5, 6, 7, 8,
)
_FL_ID, _FL_GID, _FL_URL, _FL_LABEL, _FL_BY, _FL_AT = 1, 2, 3, 4, 5, 6
_PUB_ID, _PUB_GID, _PUB_TITLE, _PUB_AUTHORS, _PUB_VENUE, _PUB_YEAR = 1, 2, 3, 4, 5, 6
_PUB_URL, _PUB_ASSET, _PUB_BY = 7, 8, 9
_AS_ID, _AS_GID, _AS_NAME, _AS_TYPE, _AS_SIZE, _AS_SHA, _AS_BY, _AS_AT = (
    1, 2, 3, 4, 5, 6, 7, 8,
)


def _encode_thread(t: ForumThread) -> bytes:
    return codec.encode_fields(
        [
            (_T_ID, codec.enc_int(t.thread_id)),
            (_T_GID, codec.enc_int(t.group_id)),
            (_T_TITLE, codec.enc_str(t.title)),
            (_T_BY, codec.enc_int(t.created_by)),
            (_T_AT, codec.enc_ts(t.created_at)),
            (_T_COUNT, codec.enc_int(t.post_count)),
            (_T_LAST, codec.enc_ts(t.last_post_at)),
        ]
    )


def _decode_thread(data: bytes) -> ForumThread:
    f = codec.decode_fields(data)
    return ForumThread(
        thread_id=codec.dec_int(f[_T_ID]),
        group_id=codec.dec_int(f[_T_GID]),
        title=codec.dec_str(f[_T_TITLE]),
        created_by=codec.dec_int(f[_T_BY]),
        created_at=codec.dec_ts(f[_T_AT]),
        post_count=codec.dec_int(f[_T_COUNT]),
        last_post_at=codec.dec_ts(f[_T_LAST]),
    )


def _encode_post(p: ForumPost) -> bytes:
    return codec.encode_fields(
        [
            (_P_ID, codec.enc_int(p.post_id)),
            (_P_TID, codec.enc_int(p.thread_id)),
            (_P_GID, codec.enc_int(p.group_id)),
            (_P_AUTHOR, codec.enc_int(p.author_user_id)),
            (_P_BODY, codec.enc_str(p.body)),
            (_P_AT, codec.enc_ts(p.created_at)),
        ]
    )


def _decode_post(data: bytes) -> ForumPost:
    f = codec.decode_fields(data)
    return ForumPost(
        post_id=codec.dec_int(f[_P_ID]),
        thread_id=codec.dec_int(f[_P_TID]),
        group_id=codec.dec_int(f[_P_GID]),
        author_user_id=codec.dec_int(f[_P_AUTHOR]),
        body=codec.dec_str(f[_P_BODY]),
        created_at=codec.dec_ts(f[_P_AT]),
    )


def _encode_agenda(a: AgendaItem) -> bytes:
    fields = [
        (_AG_ID, codec.enc_int(a.item_id)),
        (_AG_GID, codec.enc_int(a.group_id)),
        (_AG_TITLE, codec.enc_str(a.title)),
        (_AG_START, codec.enc_ts(a.starts_at)),
    ]
    if a.ends_at is not None:
        fields.append((_AG_END, codec.enc_ts(a.ends_at)))
    fields += [
        (_AG_LOC, codec.enc_str(a.location)),
        (_AG_NOTES, codec.enc_str(a.notes)),
        (_AG_BY, codec.enc_int(a.created_by)),
    ]
    return codec.encode_fields(fields)


def _decode_agenda(data: bytes) -> AgendaItem:
    f = codec.decode_fields(data)
    return AgendaItem(
        item_id=codec.dec_int(f[_AG_ID]),
        group_id=codec.dec_int(f[_AG_GID]),
        title=codec.dec_str(f[_AG_TITLE]),
        starts_at=codec.dec_ts(f[_AG_START]),
        ends_at=codec.dec_ts(f[_AG_END]) if _AG_END in f else None,
        location=codec.dec_str(f[_AG_LOC]),
        notes=codec.dec_str(f[_AG_NOTES]),
        created_by=codec.dec_int(f[_AG_BY]),
    )


def _encode_ledger(e: LedgerEntry) -> bytes:
    return codec.encode_fields(
        [
            (_L_ID, codec.enc_int(e.entry_id)),
            (_L_GID, codec.enc_int(e.group_id)),
            (_L_DATE, codec.enc_date(e.entry_date)),
            (_L_DESC, codec.enc_str(e.description)),
            (_L_AMOUNT, codec.enc_int(e.amount_minor)),
            (_L_CUR, codec.enc_str(e.currency)),
            (_L_BY, codec.enc_int(e.entered_by)),
            (_L_AT, codec.enc_ts(e.entered_at)),
        ]
    )


def _decode_ledger(data: bytes) -> LedgerEntry:
    f = codec.decode_fields(data)
    return LedgerEntry(
        entry_id=codec.dec_int(f[_L_ID]),
        group_id=codec.dec_int(f[_L_GID]),
        entry_date=codec.dec_date(f[_L_DATE]),
        description=codec.dec_str(f[_L_DESC]),
        amount_minor=codec.dec_int(f[_L_AMOUNT]),
        currency=codec.dec_str(f[_L_CUR]),
        entered_by=codec.dec_int(f[_L_BY]),
        entered_at=codec.dec_ts(f[_L_AT]),
    )


def _encode_link(l: FavoriteLink) -> bytes:
    return codec.encode_fields(
        [
            (_FL_ID, codec.enc_int(l.link_id)),
            (_FL_GID, codec.enc_int(l.group_id)),
            (_FL_URL, codec.enc_str(l.url)),
            (_FL_LABEL, codec.enc_str(l.label)),
            (_FL_BY, codec.enc_int(l.added_by)),
            (_FL_AT, codec.enc_ts(l.added_at)),
        ]
    )


def _decode_link(data: bytes) -> FavoriteLink:
    f = codec.decode_fields(data)
    return FavoriteLink(
        link_id=codec.dec_int(f[_FL_ID]),
        group_id=codec.dec_int(f[_FL_GID]),
        url=codec.dec_str(f[_FL_URL]),
        label=codec.dec_str(f[_FL_LABEL]),
        added_by=codec.dec_int(f[_FL_BY]),
        added_at=codec.dec_ts(f[_FL_AT]),
    )


def _encode_publication(p: Publication) -> bytes:
    fields = [
        (_PUB_ID, codec.enc_int(p.pub_id)),
        (_PUB_GID, codec.enc_int(p.group_id)),
        (_PUB_TITLE, codec.enc_str(p.title)),
        (_PUB_AUTHORS, codec.enc_str("\x1f".join(p.authors))),
        (_PUB_VENUE, codec.enc_str(p.venue)),
        (_PUB_YEAR, codec.enc_int(p.year)),
    ]
    if p.external_url is not None:
        fields.append((_PUB_URL, codec.enc_str(p.external_url)))
    if p.asset_id is not None:
        fields.append((_PUB_ASSET, codec.enc_int(p.asset_id)))
    fields.append((_PUB_BY, codec.enc_int(p.added_by)))
    return codec.encode_fields(fields)


def _decode_publication(data: bytes) -> Publication:
    f = codec.decode_fields(data)
    return Publication(
        pub_id=codec.dec_int(f[_PUB_ID]),
        group_id=codec.dec_int(f[_PUB_GID]),
        title=codec.dec_str(f[_PUB_TITLE]),
        authors=tuple(codec.dec_str(f[_PUB_AUTHORS]).split("\x1f")),
        venue=codec.dec_str(f[_PUB_VENUE]),
        year=codec.dec_int(f[_PUB_YEAR]),
        external_url=codec.dec_str(f[_PUB_URL]) if _PUB_URL in f else None,
        asset_id=codec.dec_int(f[_PUB_ASSET]) if _PUB_ASSET in f else None,
        added_by=codec.dec_int(f[_PUB_BY]),
    )


def _encode_asset(a: DataAsset) -> bytes:
    return codec.encode_fields(
        [
            (_AS_ID, codec.enc_int(a.asset_id)),
            (_AS_GID, codec.enc_int(a.group_id)),
            (_AS_NAME, codec.enc_str(a.filename)),
            (_AS_TYPE, codec.enc_str(a.media_type)),
            (_AS_SIZE, codec.enc_int(a.size_bytes)),
            (_AS_SHA, codec.enc_str(a.sha256)),
            (_AS_BY, codec.enc_int(a.uploaded_by)),
            (_AS_AT, codec.enc_ts(a.uploaded_at)),
        ]
    )


def _decode_asset(data: bytes) -> DataAsset:
    f = codec.decode_fields(data)
    return DataAsset(
        asset_id=codec.dec_int(f[_AS_ID]),
        group_id=codec.dec_int(f[_AS_GID]),
        filename=codec.dec_str(f[_AS_NAME]),
        media_type=codec.dec_str(f[_AS_TYPE]),
        size_bytes=codec.dec_int(f[_AS_SIZE]),
        sha256=codec.dec_str(f[_AS_SHA]),
        uploaded_by=codec.dec_int(f[_AS_BY]),
        uploaded_at=codec.dec_ts(f[_AS_AT]),
    )


class ContentService:
    def __init__(
        self,
        store: RecordStore,
        accounts: AccountsService,
        config: SiteConfig | None = None,
        clock=time.time,
    ):
        self.store = store
        self.accounts = accounts
        self.config = config or SiteConfig()
        self.clock = clock
        self.assets_dir = Path(store.data_dir) / "assets"
        self._thread_ids = IdAllocator(store, "threads")
        self._post_ids = IdAllocator(store, "posts")
        self._agenda_ids = IdAllocator(store, "agenda")
        self._ledger_ids = IdAllocator(store, "ledger", "ledger/")
        self._link_ids = IdAllocator(store, "links")
        self._pub_ids = IdAllocator(store, "publications")
        self._asset_ids = IdAllocator(store, "assets")
        # Serializes thread counter updates with their post appends.
        self._forum_lock = threading.Lock()

    def _now(self) -> datetime:
        return datetime.fromtimestamp(self.clock(), tz=timezone.utc)

    def _require(self, actor: User | None, group: Group, feature: str, level: str):
        if not self.accounts.check_privilege(actor, group, feature, level):
            raise NotAuthorizedError(f"{feature} {level} privilege required")

    # -- forum -------------------------------------------------------------

    def _check_post_body(self, body: str) -> None:
        if not body.strip():
            raise ValidationError("post body is required")
        if len(body.encode("utf-8")) > self.config.forum_body_max_bytes:
            raise ValidationError("post body too long")
        problems = markup.validate_markup(body)
        if problems:
            raise ValidationError("; ".join(problems))

    def create_thread(
        self, actor: User, group: Group, title: str, first_post_body: str
    ) -> ForumThread:
        self._require(actor, group, "forum", WRITE)
        if not title.strip():
            raise ValidationError("thread title is required")
        if len(title) > self.config.title_max_chars:
            raise ValidationError("thread title too long")
        self._check_post_body(first_post_body)
        now = self._now()
        with self._forum_lock:
            thread = ForumThread(
                thread_id=self._thread_ids.allocate(),
                group_id=group.group_id,
                title=title.strip(),
                created_by=actor.user_id,
                created_at=now,
                post_count=1,
                last_post_at=now,
            )
            post = ForumPost(
                post_id=self._post_ids.allocate(),
                thread_id=thread.thread_id,
                group_id=group.group_id,
                author_user_id=actor.user_id,
                body=first_post_body,
                created_at=now,
            )
            # Post first: a crash in between leaves an orphan post that no
            # listing can reach, never a thread announcing a missing post.
            self.store.put(
                "posts",
                post_key(group.group_id, thread.thread_id, post.post_id),
                _encode_post(post),
            )
            self.store.put(
                "threads",
                thread_key(group.group_id, thread.thread_id),
                _encode_thread(thread),
            )
        return thread

    def reply(self, actor: User, group: Group, thread_id: int, body: str) -> ForumPost:
        self._require(actor, group, "forum", WRITE)
        self._check_post_body(body)
        with self._forum_lock:
            data = self.store.get("threads", thread_key(group.group_id, thread_id))
            if data is None:
                raise NotFoundError("no such thread in this group")
            thread = _decode_thread(data)
            now = self._now()
            post = ForumPost(
                post_id=self._post_ids.allocate(),
                thread_id=thread_id,
                group_id=group.group_id,
                author_user_id=actor.user_id,
                body=body,
                created_at=now,
            )
            self.store.put(
                "posts",
                post_key(group.group_id, thread_id, post.post_id),
                _encode_post(post),
            )
            updated = replace(thread, post_count=thread.post_count + 1, last_post_at=now)
            self.store.put(
                "threads", thread_key(group.group_id, thread_id), _encode_thread(updated)
            )
        return post

    def get_thread(self, actor: User | None, group: Group, thread_id: int) -> ForumThread:
        self._require(actor, group, "forum", READ)
        data = self.store.get("threads", thread_key(group.group_id, thread_id))
        if data is None:
            raise NotFoundError("no such thread in this group")
        return _decode_thread(data)

    def list_threads(self, actor: User | None, group: Group) -> list[ForumThread]:
        """Most recently active first."""
        self._require(actor, group, "forum", READ)
        prefix = f"thread/{format_id(group.group_id)}/"
        threads = [_decode_thread(d) for _, d in self.store.iter_prefix("threads", prefix)]
        threads.sort(key=lambda t: (-codec.ts_us(t.last_post_at), -t.thread_id))
        return threads

    def list_posts(self, actor: User | None, group: Group, thread_id: int) -> list[ForumPost]:
        """Flat chronology, oldest first."""
        self.get_thread(actor, group, thread_id)  # existence + privilege
        prefix = f"post/{format_id(group.group_id)}/{format_id(thread_id)}/"
        posts = [_decode_post(d) for _, d in self.store.iter_prefix("posts", prefix)]
        posts.sort(key=lambda p: (codec.ts_us(p.created_at), p.post_id))
        return posts

    # -- agenda ------------------------------------------------------------

    def add_agenda_item(
        self,
        actor: User,
        group: Group,
        title: str,
        starts_at: datetime,
        ends_at: datetime | None = None,
        location: str = "",
        notes: str = "",
    ) -> AgendaItem:
        self._require(actor, group, "agenda", WRITE)
        if not title.strip():
            raise ValidationError("agenda title is required")
        if ends_at is not None and ends_at < starts_at:
            raise ValidationError("item cannot end before it starts")
        if len(notes.encode("utf-8")) > self.config.agenda_notes_max_bytes:
            raise ValidationError("notes too long")
        item = AgendaItem(
            item_id=self._agenda_ids.allocate(),
            group_id=group.group_id,
            title=title.strip(),
            starts_at=starts_at,
            ends_at=ends_at,
            location=location,
            notes=notes,
            created_by=actor.user_id,
        )
        self.store.put("agenda", agenda_key(group.group_id, item.item_id), _encode_agenda(item))
        return item

    def list_agenda(
        self,
        actor: User | None,
        group: Group,
        window_start: datetime,
        window_end: datetime,
    ) -> list[AgendaItem]:
        """Items intersecting the half-open window [start, end), by starts_at.

        An item spans [starts_at, ends_at] (a point when ends_at is unset);
        it intersects iff starts_at < window_end and its end >= window_start.
        """
        self._require(actor, group, "agenda", READ)
        prefix = f"agenda/{format_id(group.group_id)}/"
        items = [_decode_agenda(d) for _, d in self.store.iter_prefix("agenda", prefix)]
        selected = [
            item
            for item in items
            if item.starts_at < window_end
            and (item.ends_at or item.starts_at) >= window_start
        ]
        selected.sort(key=lambda i: (codec.ts_us(i.starts_at), i.item_id))
        return selected

    # -- ledger ------------------------------------------------------------

    def _currency_key(self, group_id: int) -> str:
        return f"ledgercur/{format_id(group_id)}"

    def group_currency(self, group: Group) -> str:
        data = self.store.get("ledger", self._currency_key(group.group_id))
        return data.decode("ascii") if data else self.config.default_currency

    def add_ledger_entry(
        self,
        actor: User,
        group: Group,
        entry_date: date,
        description: str,
        amount_minor: int,
        currency: str | None = None,
    ) -> LedgerEntry:
        self._require(actor, group, "ledger", MANAGE)
        if amount_minor == 0:
            raise ValidationError("amount must be nonzero")
        if not description.strip():
            raise ValidationError("description is required")
        if len(description) > self.config.ledger_description_max_chars:
            raise ValidationError("description too long")
        pinned = self.store.get("ledger", self._currency_key(group.group_id))
        if pinned is None:
            currency = currency or self.config.default_currency
            if not _CURRENCY_RE.match(currency):
                raise ValidationError("currency must be a three-letter ISO code")
            self.store.put(
                "ledger", self._currency_key(group.group_id), currency.encode("ascii")
            )
        else:
            pinned_code = pinned.decode("ascii")
            if currency is not None and currency != pinned_code:
                raise ValidationError(
                    f"this group's ledger is kept in {pinned_code}"
                )
            currency = pinned_code
        entry = LedgerEntry(
            entry_id=self._ledger_ids.allocate(),
            group_id=group.group_id,
            entry_date=entry_date,
            description=description.strip(),
            amount_minor=amount_minor,
            currency=currency,
            entered_by=actor.user_id,
            entered_at=self._now(),
        )
        self.store.put("ledger", ledger_key(group.group_id, entry.entry_id), _encode_ledger(entry))
        return entry

    def list_ledger(self, actor: User | None, group: Group) -> list[LedgerEntry]:
        """Statement order: (entry_date, entry_id) ascending."""
        self._require(actor, group, "ledger", READ)
        prefix = f"ledger/{format_id(group.group_id)}/"
        entries = [_decode_ledger(d) for _, d in self.store.iter_prefix("ledger", prefix)]
        entries.sort(key=lambda e: (e.entry_date.toordinal(), e.entry_id))
        return entries

    def ledger_balance(self, actor: User | None, group: Group, as_of: date | None = None) -> int:
        self._require(actor, group, "ledger", READ)
        prefix = f"ledger/{format_id(group.group_id)}/"
        total = 0
        for _, data in self.store.iter_prefix("ledger", prefix):
            entry = _decode_ledger(data)
            if as_of is None or entry.entry_date <= as_of:
                total += entry.amount_minor
        return total

    # -- favourite links -----------------------------------------------------

    def add_link(self, actor: User, group: Group, url: str, label: str = "") -> FavoriteLink:
        self._require(actor, group, "links", WRITE)
        if len(url) > self.config.url_max_chars:
            raise ValidationError("URL too long")
        if not markup.is_safe_url(url):
            raise ValidationError("URL must be absolute http(s)")
        link = FavoriteLink(
            link_id=self._link_ids.allocate(),
            group_id=group.group_id,
            url=url,
            label=label.strip() or url,
            added_by=actor.user_id,
            added_at=self._now(),
        )
        self.store.put("links", link_key(group.group_id, link.link_id), _encode_link(link))
        return link

    def list_links(self, actor: User | None, group: Group) -> list[FavoriteLink]:
        """Newest first."""
        self._require(actor, group, "links", READ)
        prefix = f"link/{format_id(group.group_id)}/"
        links = [_decode_link(d) for _, d in self.store.iter_prefix("links", prefix)]
        links.sort(key=lambda l: (-codec.ts_us(l.added_at), -l.link_id))
        return links

    # -- publications ----------------------------------------------------------

    def add_publication(
        self,
        actor: User,
        group: Group,
        title: str,
        authors: list[str],
        venue: str = "",
        year: int = 0,
        external_url: str | None = None,
        asset_id: int | None = None,
    ) -> Publication:
        self._require(actor, group, "publications", MANAGE)
        if not title.strip():
            raise ValidationError("title is required")
        authors = tuple(a.strip() for a in authors if a.strip())
        if not authors:
            raise ValidationError("at least one author is required")
        if not 1900 <= year <= 2100:
            raise ValidationError("year out of range 1900-2100")
        if external_url is not None and not markup.is_safe_url(external_url):
            raise ValidationError("external URL must be absolute http(s)")
        if asset_id is not None:
            if self.store.get("assets", asset_key(group.group_id, asset_id)) is None:
                raise ValidationError("linked asset does not exist in this group")
        pub = Publication(
            pub_id=self._pub_ids.allocate(),
            group_id=group.group_id,
            title=title.strip(),
            authors=authors,
            venue=venue.strip(),
            year=year,
            external_url=external_url,
            asset_id=asset_id,
            added_by=actor.user_id,
        )
        self.store.put("publications", pub_key(group.group_id, pub.pub_id), _encode_publication(pub))
        return pub

    def list_publications_public(self, group: Group) -> list[Publication]:
        """The anonymous-visible publications database: (year desc, title asc)."""
        prefix = f"pub/{format_id(group.group_id)}/"
        pubs = [_decode_publication(d) for _, d in self.store.iter_prefix("publications", prefix)]
        pubs.sort(key=lambda p: (-p.year, p.title, p.pub_id))
        return pubs

    # -- data assets -------------------------------------------------------------

    def _check_filename(self, filename: str) -> str:
        filename = filename.strip()
        if not filename or filename in (".", ".."):
            raise ValidationError("a file name is required")
        if len(filename) > self.config.filename_max_chars:
            raise ValidationError("file name too long")
        if "/" in filename or "\\" in filename or "\x00" in filename:
            raise ValidationError("file name must not contain path separators")
        return filename

    def upload_asset(
        self,
        actor: User,
        group: Group,
        filename: str,
        media_type: str,
        content,
    ) -> DataAsset:
        """Store a blob content-addressed by its SHA-256.

        `content` is bytes or a readable binary stream. The blob is hashed
        while spooling to a temporary file and only renamed into place once
        complete, so no partial blob is ever visible; uploading identical
        content twice keeps one blob and two metadata records.
        """
        self._require(actor, group, "files", WRITE)
        filename = self._check_filename(filename)
        media_type = media_type.strip() or "application/octet-stream"
        if not _MEDIA_TYPE_RE.match(media_type):
            raise ValidationError(f"malformed media type: {media_type}")

        self.assets_dir.mkdir(parents=True, exist_ok=True)
        if isinstance(content, (bytes, bytearray)):
            import io

            content = io.BytesIO(content)
        digest = hashlib.sha256()
        size = 0
        tmp_path = self.assets_dir / f".upload-{os.getpid()}-{id(content):x}.tmp"
        try:
            with open(tmp_path, "wb") as tmp:
                while True:
                    chunk = content.read(256 * 1024)
                    if not chunk:
                        break
                    size += len(chunk)
                    if size > self.config.asset_max_bytes:
                        raise ValidationError(
                            f"file exceeds the {self.config.asset_max_bytes} byte limit"
                        )
                    digest.update(chunk)
                    tmp.write(chunk)
                tmp.flush()
                os.fsync(tmp.fileno())
            sha = digest.hexdigest()
            blob_path = self.assets_dir / sha
            if blob_path.exists():
                tmp_path.unlink()  # content-addressed: already stored
            else:
                os.replace(tmp_path, blob_path)
        except BaseException:
            tmp_path.unlink(missing_ok=True)
            raise

        asset = DataAsset(
            asset_id=self._asset_ids.allocate(),
            group_id=group.group_id,
            filename=filename,
            media_type=media_type,
            size_bytes=size,
            sha256=sha,
            uploaded_by=actor.user_id,
            uploaded_at=self._now(),
        )
        self.store.put("assets", asset_key(group.group_id, asset.asset_id), _encode_asset(asset))
        return asset

    def get_asset(self, actor: User | None, group: Group, asset_id: int) -> DataAsset:
        self._require(actor, group, "files", READ)
        data = self.store.get("assets", asset_key(group.group_id, asset_id))
        if data is None:
            raise NotFoundError("no such file")
        return _decode_asset(data)

    def list_assets(self, actor: User | None, group: Group) -> list[DataAsset]:
        """Newest first."""
        self._require(actor, group, "files", READ)
        prefix = f"asset/{format_id(group.group_id)}/"
        assets = [_decode_asset(d) for _, d in self.store.iter_prefix("assets", prefix)]
        assets.sort(key=lambda a: (-codec.ts_us(a.uploaded_at), -a.asset_id))
        return assets

    def download_asset(self, actor: User | None, group: Group, asset_id: int) -> tuple[DataAsset, bytes]:
        """Exact stored bytes, digest-verified before anything is returned."""
        asset = self.get_asset(actor, group, asset_id)
        blob_path = self.assets_dir / asset.sha256
        try:
            blob = blob_path.read_bytes()
        except FileNotFoundError:
            raise IntegrityError(f"blob missing for asset {asset_id}") from None
        if hashlib.sha256(blob).hexdigest() != asset.sha256 or len(blob) != asset.size_bytes:
            raise IntegrityError(f"stored blob fails digest check for asset {asset_id}")
        return asset, blob

    def audit_assets(self, group: Group | None = None) -> list[tuple[DataAsset, bool]]:
        """Full-store integrity pass: (asset, digest_ok) for every record."""
        prefix = "asset/" if group is None else f"asset/{format_id(group.group_id)}/"
        out = []
        for _, data in self.store.iter_prefix("assets", prefix):
            asset = _decode_asset(data)
            blob_path = self.assets_dir / asset.sha256
            ok = False
            if blob_path.is_file():
                blob = blob_path.read_bytes()
                ok = (
                    hashlib.sha256(blob).hexdigest() == asset.sha256
                    and len(blob) == asset.size_bytes
                )
            out.append((asset, ok))
        return out
