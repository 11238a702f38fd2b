"""Internal message system with first-read receipts.

Members write to members; anonymous visitors reach a group through its
contact form, which fans out one copy per owner. When a recipient first
opens a message body the read timestamp is set once, forever, and - only
for internal senders - exactly one alert is queued for the sender to see.
Storage keys embed the recipient so an inbox is one prefix scan.
"""

from __future__ import annotations

import threading
import time
from collections import deque
from dataclasses import dataclass, replace
from datetime import datetime, timezone

from . import codec
from .accounts import READ, WRITE, AccountsService, Group, ROLE_OWNER, User
from .config import SiteConfig
from .errors import (
    NotAuthorizedError,
    NotFoundError,
    RateLimitedError,
    ValidationError,
)
from .ids import IdAllocator, format_id
from .store import RecordStore


@dataclass(frozen=True)
class ExternalSender:
    name: str
    contact: str


@dataclass(frozen=True)
class Message:
    message_id: int
    group_id: int
    sender: int | ExternalSender  # member user_id, or the visitor's details
    recipient_user_id: int
    subject: str
    body: str
    sent_at: datetime
    first_read_at: datetime | None

    @property
    def is_internal(self) -> bool:
        return isinstance(self.sender, int)


@dataclass(frozen=True)
class MessageHeader:
    message_id: int
    group_id: int
    sender_display: str
    subject: str
    sent_at: datetime
    read: bool


@dataclass(frozen=True)
class Alert:
    alert_id: int
    recipient_user_id: int  # the original internal sender
    message_id: int
    created_at: datetime
    acknowledged: bool
    # where the message lives, so views can show subject and read time
    message_group_id: int
    message_recipient_id: int


@dataclass(frozen=True)
class AlertView:
    alert: Alert
    subject: str
    first_read_at: datetime | None


@dataclass(frozen=True)
class UnreadSummary:
    unread_by_group: dict[int, int]
    alerts: int


_M_ID, _M_GID, _M_SENDER, _M_EXT_NAME, _M_EXT_CONTACT = 1, 2, 3, 4, 5
_M_RECIPIENT, _M_SUBJECT, _M_BODY, _M_SENT, _M_READ = 6, 7, 8, 9, 10
_A_ID, _A_RECIPIENT, _A_MSG, _A_CREATED, _A_ACKED, _A_MSG_GID, _A_MSG_UID = (
    1, 2, 3, 4, 5, 6, 7,
)


def message_key(group_id: int, recipient_id: int, message_id: int) -> str:
    return f"msg/{format_id(group_id)}/{format_id(recipient_id)}/{format_id(message_id)}"


def alert_key(recipient_id: int, alert_id: int) -> str:
    return f"alert/{format_id(recipient_id)}/{format_id(alert_id)}"


def _encode_message(m: Message) -> bytes:
    fields = [
        (_M_ID, codec.enc_int(m.message_id)),
        (_M_GID, codec.enc_int(m.group_id)),
    ]
    if isinstance(m.sender, int):
        fields.append((_M_SENDER, codec.enc_int(m.sender)))
    else:
        fields.append((_M_EXT_NAME, codec.enc_str(m.sender.name)))
        fields.append((_M_EXT_CONTACT, codec.enc_str(m.sender.contact)))
    fields += [
        (_M_RECIPIENT, codec.enc_int(m.recipient_user_id)),
        (_M_SUBJECT, codec.enc_str(m.subject)),
        (_M_BODY, codec.enc_str(m.body)),
        (_M_SENT, codec.enc_ts(m.sent_at)),
    ]
    if m.first_read_at is not None:
        fields.append((_M_READ, codec.enc_ts(m.first_read_at)))
    return codec.encode_fields(fields)


def _decode_message(data: bytes) -> Message:
    f = codec.decode_fields(data)
    sender: int | ExternalSender
    if _M_SENDER in f:
        sender = codec.dec_int(f[_M_SENDER])
    else:
        sender = ExternalSender(
            name=codec.dec_str(f[_M_EXT_NAME]),
            contact=codec.dec_str(f.get(_M_EXT_CONTACT, b"")),
        )
    return Message(
        message_id=codec.dec_int(f[_M_ID]),
        group_id=codec.dec_int(f[_M_GID]),
        sender=sender,
        recipient_user_id=codec.dec_int(f[_M_RECIPIENT]),
        subject=codec.dec_str(f[_M_SUBJECT]),
        body=codec.dec_str(f[_M_BODY]),
        sent_at=codec.dec_ts(f[_M_SENT]),
        first_read_at=codec.dec_ts(f[_M_READ]) if _M_READ in f else None,
    )


def _encode_alert(a: Alert) -> bytes:
    return codec.encode_fields(
        [
            (_A_ID, codec.enc_int(a.alert_id)),
            (_A_RECIPIENT, codec.enc_int(a.recipient_user_id)),
            (_A_MSG, codec.enc_int(a.message_id)),
            (_A_CREATED, codec.enc_ts(a.created_at)),
            (_A_ACKED, codec.enc_bool(a.acknowledged)),
            (_A_MSG_GID, codec.enc_int(a.message_group_id)),
            (_A_MSG_UID, codec.enc_int(a.message_recipient_id)),
        ]
    )


def _decode_alert(data: bytes) -> Alert:
    f = codec.decode_fields(data)
    return Alert(
        alert_id=codec.dec_int(f[_A_ID]),
        recipient_user_id=codec.dec_int(f[_A_RECIPIENT]),
        message_id=codec.dec_int(f[_A_MSG]),
        created_at=codec.dec_ts(f[_A_CREATED]),
        acknowledged=codec.dec_bool(f[_A_ACKED]),
        message_group_id=codec.dec_int(f[_A_MSG_GID]),
        message_recipient_id=codec.dec_int(f[_A_MSG_UID]),
    )


class MessagingService:
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
        self._msg_ids = IdAllocator(store, "messages")
        self._alert_ids = IdAllocator(store, "alerts")
        # Serializes the first-read check-and-set with its alert insert.
        self._receipt_lock = threading.Lock()
        self._contact_hits: dict[str, deque] = {}
        self._contact_lock = threading.Lock()

    def _now(self) -> datetime:
        return datetime.fromtimestamp(self.clock(), tz=timezone.utc)

    def _check_limits(self, subject: str, body: str) -> None:
        if len(subject) > self.config.subject_max_chars:
            raise ValidationError("subject too long")
        if len(body.encode("utf-8")) > self.config.message_body_max_bytes:
            raise ValidationError("message body too long")

    # -- sending ---------------------------------------------------------------

    def send_internal(
        self, sender: User, group: Group, recipient: User, subject: str, body: str
    ) -> Message:
        if not self.accounts.check_privilege(sender, group, "messages", WRITE):
            raise NotAuthorizedError("no message write privilege in this group")
        if self.accounts.membership(group.group_id, recipient.user_id) is None:
            raise ValidationError("recipient is not a member of this group")
        self._check_limits(subject, body)
        message = Message(
            message_id=self._msg_ids.allocate(),
            group_id=group.group_id,
            sender=sender.user_id,
            recipient_user_id=recipient.user_id,
            subject=subject,
            body=body,
            sent_at=self._now(),
            first_read_at=None,
        )
        self.store.put(
            "messages",
            message_key(group.group_id, recipient.user_id, message.message_id),
            _encode_message(message),
        )
        return message

    def send_external(
        self,
        group: Group,
        name: str,
        contact: str,
        subject: str,
        body: str,
        throttle_key: str,
    ) -> list[Message]:
        """Public contact form: one copy lands in every owner's inbox."""
        if not name.strip():
            raise ValidationError("name is required")
        if not body.strip():
            raise ValidationError("message text is required")
        self._check_limits(subject, body)
        self._throttle(throttle_key)
        sender = ExternalSender(name=name.strip(), contact=contact.strip())
        owners = [
            user
            for user, m in self.accounts.list_members(group.group_id)
            if m.role == ROLE_OWNER
        ]
        sent_at = self._now()
        copies = []
        for owner in owners:
            message = Message(
                message_id=self._msg_ids.allocate(),
                group_id=group.group_id,
                sender=sender,
                recipient_user_id=owner.user_id,
                subject=subject,
                body=body,
                sent_at=sent_at,
                first_read_at=None,
            )
            self.store.put(
                "messages",
                message_key(group.group_id, owner.user_id, message.message_id),
                _encode_message(message),
            )
            copies.append(message)
        return copies

    def _throttle(self, throttle_key: str) -> None:
        window = self.config.contact_rate_window_seconds
        limit = self.config.contact_rate_limit
        now = self.clock()
        with self._contact_lock:
            hits = self._contact_hits.setdefault(throttle_key, deque())
            while hits and hits[0] <= now - window:
                hits.popleft()
            if len(hits) >= limit:
                raise RateLimitedError("too many contact submissions, try again later")
            hits.append(now)

    # -- reading ----------------------------------------------------------------

    def _find_for_recipient(self, user: User, message_id: int) -> tuple[str, Message] | None:
        for group, _ in self.accounts.groups_for_user(user.user_id):
            key = message_key(group.group_id, user.user_id, message_id)
            data = self.store.get("messages", key)
            if data is not None:
                return key, _decode_message(data)
        return None

    def read_message(self, user: User, message_id: int) -> Message:
        """Fetch the full body. The first such call stamps the receipt and,
        for internal senders, files exactly one alert."""
        with self._receipt_lock:
            found = self._find_for_recipient(user, message_id)
            if found is None:
                # Indistinguishable from nonexistent: never confirm foreign mail.
                raise NotFoundError("no such message")
            key, message = found
            if message.first_read_at is not None:
                return message
            message = replace(message, first_read_at=self._now())
            self.store.put("messages", key, _encode_message(message))
            if message.is_internal:
                alert = Alert(
                    alert_id=self._alert_ids.allocate(),
                    recipient_user_id=message.sender,
                    message_id=message.message_id,
                    created_at=message.first_read_at,
                    acknowledged=False,
                    message_group_id=message.group_id,
                    message_recipient_id=message.recipient_user_id,
                )
                self.store.put(
                    "alerts",
                    alert_key(alert.recipient_user_id, alert.alert_id),
                    _encode_alert(alert),
                )
            return message

    # -- listing ----------------------------------------------------------------

    def _sender_display(self, message: Message) -> str:
        if message.is_internal:
            sender = self.accounts.user_by_id(message.sender)
            return sender.display_name if sender else "(removed account)"
        return f"{message.sender.name} (visitor)"

    def _header(self, message: Message) -> MessageHeader:
        return MessageHeader(
            message_id=message.message_id,
            group_id=message.group_id,
            sender_display=self._sender_display(message),
            subject=message.subject,
            sent_at=message.sent_at,
            read=message.first_read_at is not None,
        )

    def list_inbox(
        self,
        user: User,
        group: Group,
        after: tuple[int, int] | None = None,
        limit: int | None = None,
    ) -> list[MessageHeader]:
        """Headers newest first; bodies are never in the list (page budget).

        `after` is the (sent_at_us, message_id) of the last header of the
        previous page; results continue strictly after it in the
        (sent_at desc, id desc) order.
        """
        if not self.accounts.check_privilege(user, group, "messages", READ):
            raise NotAuthorizedError("no message read privilege in this group")
        prefix = f"msg/{format_id(group.group_id)}/{format_id(user.user_id)}/"
        messages = [_decode_message(d) for _, d in self.store.iter_prefix("messages", prefix)]
        messages.sort(key=lambda m: (-codec.ts_us(m.sent_at), -m.message_id))
        if after is not None:
            cutoff = (-after[0], -after[1])
            messages = [
                m
                for m in messages
                if (-codec.ts_us(m.sent_at), -m.message_id) > cutoff
            ]
        if limit is not None:
            messages = messages[:limit]
        return [self._header(m) for m in messages]

    def list_sent(self, user: User) -> list[tuple[Message, str]]:
        """This user's outgoing messages with recipient display names,
        newest first. Feeds the receipt-status view."""
        out = []
        for _, data in self.store.iter_prefix("messages", "msg/"):
            message = _decode_message(data)
            if message.is_internal and message.sender == user.user_id:
                recipient = self.accounts.user_by_id(message.recipient_user_id)
                display = recipient.display_name if recipient else "(removed account)"
                out.append((message, display))
        out.sort(key=lambda pair: (-codec.ts_us(pair[0].sent_at), -pair[0].message_id))
        return out

    def list_alerts(self, user: User) -> list[AlertView]:
        prefix = f"alert/{format_id(user.user_id)}/"
        views = []
        for _, data in self.store.iter_prefix("alerts", prefix):
            alert = _decode_alert(data)
            if alert.acknowledged:
                continue
            msg_data = self.store.get(
                "messages",
                message_key(alert.message_group_id, alert.message_recipient_id, alert.message_id),
            )
            if msg_data is None:
                continue
            message = _decode_message(msg_data)
            views.append(AlertView(alert, message.subject, message.first_read_at))
        views.sort(key=lambda v: (-codec.ts_us(v.alert.created_at), -v.alert.alert_id))
        return views

    def ack_alert(self, user: User, alert_id: int) -> None:
        key = alert_key(user.user_id, alert_id)
        data = self.store.get("alerts", key)
        if data is None:
            raise NotFoundError("no such alert")
        alert = _decode_alert(data)
        if alert.acknowledged:
            return  # idempotent
        self.store.put("alerts", key, _encode_alert(replace(alert, acknowledged=True)))

    def unread_summary(self, user: User) -> UnreadSummary:
        unread: dict[int, int] = {}
        for group, _ in self.accounts.groups_for_user(user.user_id):
            prefix = f"msg/{format_id(group.group_id)}/{format_id(user.user_id)}/"
            count = sum(
                1
                for _, data in self.store.iter_prefix("messages", prefix)
                if _decode_message(data).first_read_at is None
            )
            unread[group.group_id] = count
        alerts = len(self.list_alerts(user))
        return UnreadSummary(unread_by_group=unread, alerts=alerts)
