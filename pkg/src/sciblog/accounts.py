"""Users, groups, memberships, sessions, and the privilege system.

Three authenticated tiers plus the public. The host admin provisions user
accounts and groups; each group's owners manage their own members and set
per-feature privileges; members act within their grants; everyone else is
an anonymous visitor who can see exactly two things: a group's public page
and its publications list.
"""

from __future__ import annotations

import hashlib
import hmac
import re
import secrets
import time
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import codec, markup
from .config import SiteConfig
from .errors import (
    AuthenticationError,
    NotAuthorizedError,
    NotFoundError,
    ValidationError,
)
from .ids import IdAllocator, format_id
from .store import RecordStore

FEATURES = (
    "forum",
    "messages",
    "files",
    "publications",
    "ledger",
    "agenda",
    "links",
    "page",
)
READ = "read"
WRITE = "write"
MANAGE = "manage"
LEVELS = (READ, WRITE, MANAGE)

ROLE_OWNER = "owner"
ROLE_MEMBER = "member"

# Default grant for a plain member: the collaborative features are
# read-write, the ledger and publications are visible but curated by
# owners, and nobody below owner edits the public page.
DEFAULT_MEMBER_GRANTS: dict[str, frozenset[str]] = {
    "forum": frozenset({READ, WRITE}),
    "messages": frozenset({READ, WRITE}),
    "files": frozenset({READ, WRITE}),
    "agenda": frozenset({READ, WRITE}),
    "links": frozenset({READ, WRITE}),
    "ledger": frozenset({READ}),
    "publications": frozenset({READ}),
    "page": frozenset({READ}),
}

# What an anonymous visitor (or a logged-in non-member) may do. Nothing else.
PUBLIC_ALLOWED = frozenset({("page", READ), ("publications", READ)})

LOGIN_RE = re.compile(r"^[a-z0-9][a-z0-9._-]{0,63}$")
SLUG_RE = re.compile(r"^[a-z0-9-]{1,32}$")

_LEVEL_LETTERS = {READ: "r", WRITE: "w", MANAGE: "m"}
_LETTER_LEVELS = {v: k for k, v in _LEVEL_LETTERS.items()}


@dataclass(frozen=True)
class User:
    user_id: int
    login: str
    display_name: str
    password_hash: str
    is_host_admin: bool
    created_at: datetime


@dataclass(frozen=True)
class Group:
    group_id: int
    slug: str
    display_name: str
    page_body: str
    domain_alias: str | None
    created_by: int


@dataclass(frozen=True)
class Membership:
    group_id: int
    user_id: int
    role: str
    privileges: dict[str, frozenset[str]]


@dataclass(frozen=True)
class Session:
    session_id: str
    user_id: int
    created_at: datetime
    expires_at: datetime


def _now(clock) -> datetime:
    return datetime.fromtimestamp(clock(), tz=timezone.utc)


def hash_password(password: str, algorithm: str, iterations: int) -> str:
    if algorithm != "pbkdf2_sha256":
        raise ValidationError(f"unsupported password algorithm: {algorithm}")
    salt = secrets.token_bytes(16)
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return f"pbkdf2_sha256${iterations}${salt.hex()}${digest.hex()}"


def verify_password(password: str, stored: str) -> bool:
    try:
        algorithm, iterations, salt_hex, digest_hex = stored.split("$")
        iterations = int(iterations)
        salt = bytes.fromhex(salt_hex)
        expected = bytes.fromhex(digest_hex)
    except ValueError:
        return False
    if algorithm != "pbkdf2_sha256":
        return False
    digest = hashlib.pbkdf2_hmac("sha256", password.encode("utf-8"), salt, iterations)
    return hmac.compare_digest(digest, expected)


def encode_grants(grants: dict[str, frozenset[str]]) -> str:
    parts = []
    for feature in FEATURES:
        levels = grants.get(feature) or frozenset()
        letters = "".join(l for l in "rwm" if _LETTER_LEVELS[l] in levels)
        if letters:
            parts.append(f"{feature}:{letters}")
    return ";".join(parts)


def decode_grants(text: str) -> dict[str, frozenset[str]]:
    grants: dict[str, frozenset[str]] = {}
    for part in text.split(";"):
        if not part:
            continue
        feature, _, letters = part.partition(":")
        if feature in FEATURES:
            grants[feature] = frozenset(
                _LETTER_LEVELS[l] for l in letters if l in _LETTER_LEVELS
            )
    return grants


# Field ids for the canonical entity encodings.
_U_ID, _U_LOGIN, _U_NAME, _U_HASH, _U_ADMIN, _U_CREATED = 1, 2, 3, 4, 5, 6
_G_ID, _G_SLUG, _G_NAME, _G_BODY, _G_ALIAS, _G_CREATOR = 1, 2, 3, 4, 5, 6
_M_GID, _M_UID, _M_ROLE, _M_GRANTS = 1, 2, 3, 4
_S_ID, _S_UID, _S_CREATED, _S_EXPIRES = 1, 2, 3, 4


def _encode_user(u: User) -> bytes:
    return codec.encode_fields(
        [
            (_U_ID, codec.enc_int(u.user_id)),
            (_U_LOGIN, codec.enc_str(u.login)),
            (_U_NAME, codec.enc_str(u.display_name)),
            (_U_HASH, codec.enc_str(u.password_hash)),
            (_U_ADMIN, codec.enc_bool(u.is_host_admin)),
            (_U_CREATED, codec.enc_ts(u.created_at)),
        ]
    )


def _decode_user(data: bytes) -> User:
    f = codec.decode_fields(data)
    return User(
        user_id=codec.dec_int(f[_U_ID]),
        login=codec.dec_str(f[_U_LOGIN]),
        display_name=codec.dec_str(f[_U_NAME]),
        password_hash=codec.dec_str(f[_U_HASH]),
        is_host_admin=codec.dec_bool(f[_U_ADMIN]),
        created_at=codec.dec_ts(f[_U_CREATED]),
    )


def _encode_group(g: Group) -> bytes:
    fields = [
        (_G_ID, codec.enc_int(g.group_id)),
        (_G_SLUG, codec.enc_str(g.slug)),
        (_G_NAME, codec.enc_str(g.display_name)),
        (_G_BODY, codec.enc_str(g.page_body)),
        (_G_CREATOR, codec.enc_int(g.created_by)),
    ]
    if g.domain_alias is not None:
        fields.insert(4, (_G_ALIAS, codec.enc_str(g.domain_alias)))
    return codec.encode_fields(fields)


def _decode_group(data: bytes) -> Group:
    f = codec.decode_fields(data)
    return Group(
        group_id=codec.dec_int(f[_G_ID]),
        slug=codec.dec_str(f[_G_SLUG]),
        display_name=codec.dec_str(f[_G_NAME]),
        page_body=codec.dec_str(f[_G_BODY]),
        domain_alias=codec.dec_str(f[_G_ALIAS]) if _G_ALIAS in f else None,
        created_by=codec.dec_int(f[_G_CREATOR]),
    )


def _encode_membership(m: Membership) -> bytes:
    return codec.encode_fields(
        [
            (_M_GID, codec.enc_int(m.group_id)),
            (_M_UID, codec.enc_int(m.user_id)),
            (_M_ROLE, codec.enc_str(m.role)),
            (_M_GRANTS, codec.enc_str(encode_grants(m.privileges))),
        ]
    )


def _decode_membership(data: bytes) -> Membership:
    f = codec.decode_fields(data)
    return Membership(
        group_id=codec.dec_int(f[_M_GID]),
        user_id=codec.dec_int(f[_M_UID]),
        role=codec.dec_str(f[_M_ROLE]),
        privileges=decode_grants(codec.dec_str(f[_M_GRANTS])),
    )


def _encode_session(s: Session) -> bytes:
    return codec.encode_fields(
        [
            (_S_ID, codec.enc_str(s.session_id)),
            (_S_UID, codec.enc_int(s.user_id)),
            (_S_CREATED, codec.enc_ts(s.created_at)),
            (_S_EXPIRES, codec.enc_ts(s.expires_at)),
        ]
    )


def _decode_session(data: bytes) -> Session:
    f = codec.decode_fields(data)
    return Session(
        session_id=codec.dec_str(f[_S_ID]),
        user_id=codec.dec_int(f[_S_UID]),
        created_at=codec.dec_ts(f[_S_CREATED]),
        expires_at=codec.dec_ts(f[_S_EXPIRES]),
    )


def user_key(user_id: int) -> str:
    return f"user/{format_id(user_id)}"


def group_key(group_id: int) -> str:
    return f"group/{format_id(group_id)}"


def member_key(group_id: int, user_id: int) -> str:
    return f"member/{format_id(group_id)}/{format_id(user_id)}"


def session_key(token: str) -> str:
    return f"session/{token}"


class AccountsService:
    """All identity and privilege state, over the record store.

    `caller=None` on mutating calls means the local operator CLI, which is
    trusted as the host tier (it has the data directory). Web handlers
    always pass a resolved User.
    """

    def __init__(self, store: RecordStore, config: SiteConfig | None = None, clock=time.time):
        self.store = store
        self.config = config or SiteConfig()
        self.clock = clock
        self._user_ids = IdAllocator(store, "users", "user/")
        self._group_ids = IdAllocator(store, "groups", "group/")
        # Evaluated on unknown logins so rejection timing does not reveal
        # whether an account exists.
        self._decoy_hash = hash_password(
            secrets.token_hex(8), self.config.password_algorithm, self.config.password_iterations
        )

    # -- lookups -----------------------------------------------------------

    def user_by_id(self, user_id: int) -> User | None:
        data = self.store.get("users", user_key(user_id))
        return _decode_user(data) if data else None

    def user_by_login(self, login: str) -> User | None:
        for _, data in self.store.iter_prefix("users", "user/"):
            user = _decode_user(data)
            if user.login == login:
                return user
        return None

    def group_by_id(self, group_id: int) -> Group | None:
        data = self.store.get("groups", group_key(group_id))
        return _decode_group(data) if data else None

    def group_by_slug(self, slug: str) -> Group | None:
        for _, data in self.store.iter_prefix("groups", "group/"):
            group = _decode_group(data)
            if group.slug == slug:
                return group
        return None

    def group_by_domain_alias(self, host: str) -> Group | None:
        if not host:
            return None
        for _, data in self.store.iter_prefix("groups", "group/"):
            group = _decode_group(data)
            if group.domain_alias and group.domain_alias == host:
                return group
        return None

    def list_groups(self) -> list[Group]:
        groups = [_decode_group(d) for _, d in self.store.iter_prefix("groups", "group/")]
        return sorted(groups, key=lambda g: g.slug)

    def list_users(self) -> list[User]:
        users = [_decode_user(d) for _, d in self.store.iter_prefix("users", "user/")]
        return sorted(users, key=lambda u: u.login)

    def membership(self, group_id: int, user_id: int) -> Membership | None:
        data = self.store.get("memberships", member_key(group_id, user_id))
        return _decode_membership(data) if data else None

    def list_members(self, group_id: int) -> list[tuple[User, Membership]]:
        out = []
        prefix = f"member/{format_id(group_id)}/"
        for _, data in self.store.iter_prefix("memberships", prefix):
            m = _decode_membership(data)
            user = self.user_by_id(m.user_id)
            if user is not None:
                out.append((user, m))
        return out

    def groups_for_user(self, user_id: int) -> list[tuple[Group, Membership]]:
        out = []
        for _, data in self.store.iter_prefix("memberships", "member/"):
            m = _decode_membership(data)
            if m.user_id == user_id:
                group = self.group_by_id(m.group_id)
                if group is not None:
                    out.append((group, m))
        return sorted(out, key=lambda gm: gm[0].slug)

    def _owner_count(self, group_id: int) -> int:
        prefix = f"member/{format_id(group_id)}/"
        return sum(
            1
            for _, data in self.store.iter_prefix("memberships", prefix)
            if _decode_membership(data).role == ROLE_OWNER
        )

    # -- users and sessions --------------------------------------------------

    def create_user(
        self,
        caller: User | None,
        login: str,
        display_name: str,
        password: str,
        is_host_admin: bool = False,
    ) -> User:
        if caller is not None and not caller.is_host_admin:
            raise NotAuthorizedError("only the host admin creates accounts")
        if not LOGIN_RE.match(login):
            raise ValidationError("login must be lowercase letters, digits, . _ -")
        if len(password) < self.config.min_password_length:
            raise ValidationError(
                f"password must be at least {self.config.min_password_length} characters"
            )
        if self.user_by_login(login) is not None:
            raise ValidationError(f"login already taken: {login}")
        user = User(
            user_id=self._user_ids.allocate(),
            login=login,
            display_name=display_name or login,
            password_hash=hash_password(
                password, self.config.password_algorithm, self.config.password_iterations
            ),
            is_host_admin=is_host_admin,
            created_at=_now(self.clock),
        )
        self.store.put("users", user_key(user.user_id), _encode_user(user))
        return user

    def authenticate(self, login: str, password: str) -> Session:
        user = self.user_by_login(login)
        if user is None:
            verify_password(password, self._decoy_hash)
            raise AuthenticationError("login failed")
        if not verify_password(password, user.password_hash):
            raise AuthenticationError("login failed")
        now = _now(self.clock)
        ttl = self.config.session_ttl_hours * 3600
        session = Session(
            session_id=secrets.token_urlsafe(16),  # 128 bits
            user_id=user.user_id,
            created_at=now,
            expires_at=datetime.fromtimestamp(now.timestamp() + ttl, tz=timezone.utc),
        )
        self.store.put("sessions", session_key(session.session_id), _encode_session(session))
        return session

    def resolve_session(self, session_id: str | None) -> User | None:
        """Map a presented token to its user; anything stale is anonymous."""
        if not session_id or "/" in session_id:
            return None
        data = self.store.get("sessions", session_key(session_id))
        if data is None:
            return None
        session = _decode_session(data)
        if session.expires_at <= _now(self.clock):
            self.store.delete("sessions", session_key(session_id))
            return None
        return self.user_by_id(session.user_id)

    def logout(self, session_id: str) -> None:
        self.store.delete("sessions", session_key(session_id))

    # -- groups and memberships ----------------------------------------------

    def create_group(
        self,
        caller: User | None,
        slug: str,
        display_name: str,
        initial_owner: int,
        domain_alias: str | None = None,
    ) -> Group:
        if caller is not None and not caller.is_host_admin:
            raise NotAuthorizedError("only the host admin provisions groups")
        if not SLUG_RE.match(slug):
            raise ValidationError("slug must match [a-z0-9-]{1,32}")
        if self.group_by_slug(slug) is not None:
            raise ValidationError(f"slug already taken: {slug}")
        if domain_alias and self.group_by_domain_alias(domain_alias) is not None:
            raise ValidationError(f"domain alias already taken: {domain_alias}")
        owner = self.user_by_id(initial_owner)
        if owner is None:
            raise ValidationError(f"unknown initial owner id: {initial_owner}")
        group = Group(
            group_id=self._group_ids.allocate(),
            slug=slug,
            display_name=display_name or slug,
            page_body="",
            domain_alias=domain_alias,
            created_by=caller.user_id if caller else owner.user_id,
        )
        self.store.put("groups", group_key(group.group_id), _encode_group(group))
        membership = Membership(group.group_id, owner.user_id, ROLE_OWNER, {})
        self.store.put(
            "memberships",
            member_key(group.group_id, owner.user_id),
            _encode_membership(membership),
        )
        return group

    def set_group_page(self, caller: User | None, group: Group, page_body: str) -> Group:
        if caller is not None and not self.check_privilege(caller, group, "page", MANAGE):
            raise NotAuthorizedError("page management requires the page manage privilege")
        problems = markup.validate_markup(page_body)
        if problems:
            raise ValidationError("; ".join(problems))
        updated = replace(group, page_body=page_body)
        self.store.put("groups", group_key(group.group_id), _encode_group(updated))
        return updated

    def set_domain_alias(self, caller: User | None, group: Group, alias: str | None) -> Group:
        if caller is not None and not caller.is_host_admin:
            raise NotAuthorizedError("only the host admin maps domains")
        if alias:
            existing = self.group_by_domain_alias(alias)
            if existing is not None and existing.group_id != group.group_id:
                raise ValidationError(f"domain alias already taken: {alias}")
        updated = replace(group, domain_alias=alias)
        self.store.put("groups", group_key(group.group_id), _encode_group(updated))
        return updated

    def add_member(
        self,
        caller: User | None,
        group: Group,
        user: User,
        role: str = ROLE_MEMBER,
        privileges: dict[str, frozenset[str]] | None = None,
    ) -> Membership:
        if caller is not None and not self.check_privilege(caller, group, "page", MANAGE):
            raise NotAuthorizedError("adding members requires group management rights")
        if role not in (ROLE_OWNER, ROLE_MEMBER):
            raise ValidationError(f"unknown role: {role}")
        if self.membership(group.group_id, user.user_id) is not None:
            raise ValidationError(f"{user.login} is already a member")
        if privileges is None:
            privileges = dict(DEFAULT_MEMBER_GRANTS)
        else:
            privileges = self._validated_grants(privileges)
        if role == ROLE_OWNER:
            privileges = {}  # owner grants are implicit, stored grants ignored
        membership = Membership(group.group_id, user.user_id, role, privileges)
        self.store.put(
            "memberships",
            member_key(group.group_id, user.user_id),
            _encode_membership(membership),
        )
        return membership

    def remove_member(self, caller: User | None, group: Group, user: User) -> None:
        if caller is not None and not caller.is_host_admin:
            m = self.membership(group.group_id, caller.user_id)
            if m is None or m.role != ROLE_OWNER:
                raise NotAuthorizedError("removing members is owner work")
        target = self.membership(group.group_id, user.user_id)
        if target is None:
            raise NotFoundError(f"{user.login} is not a member of {group.slug}")
        if target.role == ROLE_OWNER and self._owner_count(group.group_id) <= 1:
            raise ValidationError("cannot remove the last owner of a group")
        self.store.delete("memberships", member_key(group.group_id, user.user_id))

    def set_privilege(
        self,
        caller: User | None,
        group: Group,
        user: User,
        feature: str,
        grants: frozenset[str] | set[str],
    ) -> Membership:
        if caller is not None and not caller.is_host_admin:
            m = self.membership(group.group_id, caller.user_id)
            if m is None or m.role != ROLE_OWNER:
                raise NotAuthorizedError("setting privileges is owner work")
        if feature not in FEATURES:
            raise ValidationError(f"unknown feature: {feature}")
        grants = frozenset(grants)
        if not grants <= set(LEVELS):
            raise ValidationError(f"unknown privilege level in {sorted(grants)}")
        target = self.membership(group.group_id, user.user_id)
        if target is None:
            raise NotFoundError(f"{user.login} is not a member of {group.slug}")
        if target.role == ROLE_OWNER:
            raise ValidationError("owner privileges are implicit and immutable")
        privileges = dict(target.privileges)
        privileges[feature] = grants
        updated = replace(target, privileges=privileges)
        self.store.put(
            "memberships",
            member_key(group.group_id, user.user_id),
            _encode_membership(updated),
        )
        return updated

    def _validated_grants(self, privileges: dict) -> dict[str, frozenset[str]]:
        out = {}
        for feature, levels in privileges.items():
            if feature not in FEATURES:
                raise ValidationError(f"unknown feature: {feature}")
            levels = frozenset(levels)
            if not levels <= set(LEVELS):
                raise ValidationError(f"unknown privilege level in {sorted(levels)}")
            out[feature] = levels
        return out

    # -- the decision ---------------------------------------------------------

    def check_privilege(
        self, actor: User | None, group: Group | None, feature: str, level: str
    ) -> bool:
        """Pure allow/deny. Host admin everywhere; owners everywhere in their
        group; members by their grant map; everyone else only the public pair
        (page read, publications read)."""
        if feature not in FEATURES:
            raise ValidationError(f"unknown feature: {feature}")
        if level not in LEVELS:
            raise ValidationError(f"unknown privilege level: {level}")
        if actor is not None and actor.is_host_admin:
            return True
        if actor is not None and group is not None:
            m = self.membership(group.group_id, actor.user_id)
            if m is not None:
                if m.role == ROLE_OWNER:
                    return True
                return level in m.privileges.get(feature, frozenset())
        return (feature, level) in PUBLIC_ALLOWED
