"""Deterministic demo fixture: two working research groups.

Seeds the full feature surface (forum incl. one far-over-budget post,
inboxes with read and unread mail, ledgers, agendas, links, publications,
file uploads) so a crawl of the running site exercises every page type.
All demo accounts share DEMO_PASSWORD.
"""

from __future__ import annotations

import random
from datetime import date, datetime, timedelta, timezone

from .config import SiteConfig
from .site import Site

DEMO_PASSWORD = "correct-horse-battery"

_LOREM = (
    "Measurement runs continue on the upgraded spectrometer. "
    "Calibration drift stays within tolerance and the background "
    "subtraction now uses the shared fitting code. "
)


def demo_config(**overrides) -> SiteConfig:
    """Demo needs one forum post of ~40 KB, above the default body cap."""
    params = dict(forum_body_max_bytes=64 * 1024)
    params.update(overrides)
    return SiteConfig(**params)


def build_demo(site: Site) -> dict:
    rng = random.Random(20040901)
    accounts, content, messaging = site.accounts, site.content, site.messaging
    now = datetime.fromtimestamp(site.clock(), tz=timezone.utc)

    host = accounts.create_user(None, "host", "Host Operator", DEMO_PASSWORD, is_host_admin=True)
    alice = accounts.create_user(host, "alice", "Alice Suryani", DEMO_PASSWORD)
    bob = accounts.create_user(host, "bob", "Bob Wijaya", DEMO_PASSWORD)
    carol = accounts.create_user(host, "carol", "Carol Tan", DEMO_PASSWORD)
    dave = accounts.create_user(host, "dave", "Dave Putra", DEMO_PASSWORD)
    erin = accounts.create_user(host, "erin", "Erin Lestari", DEMO_PASSWORD)
    members = [alice, bob, carol, dave, erin]

    plasma = accounts.create_group(
        host, "plasma-lab", "Plasma Physics Lab", alice.user_id,
        domain_alias="plasma.example.org",
    )
    neutrino = accounts.create_group(host, "neutrino-net", "Neutrino Network", bob.user_id)
    accounts.add_member(alice, plasma, carol)
    accounts.add_member(alice, plasma, erin)
    accounts.add_member(bob, neutrino, alice)
    accounts.add_member(bob, neutrino, dave)
    accounts.add_member(bob, neutrino, erin)

    accounts.set_group_page(
        alice,
        plasma,
        "The **Plasma Physics Lab** studies magnetically confined plasmas "
        "on a shoestring budget.\n\nVisitors are welcome to browse our "
        "[publications](https://example.org/archive) and contact us through "
        "this site.\n\n```\nseminar: tuesdays 10:00\n```",
    )
    accounts.set_group_page(
        bob,
        neutrino,
        "A distributed collaboration measuring atmospheric neutrino flux "
        "with *recycled* photomultiplier arrays.\n\nData notes are shared "
        "with members.",
    )

    # Forum: 40 posts in total (7 thread openers + 33 replies); one reply is
    # a ~40 KB body that must be truncated to fit any page.
    threads = []
    posters = {plasma.group_id: [alice, carol, erin], neutrino.group_id: [bob, alice, dave, erin]}
    topics = [
        (plasma, "Langmuir probe calibration"),
        (plasma, "Seminar schedule for the autumn term"),
        (plasma, "Vacuum chamber bake-out log"),
        (plasma, "Paper draft: edge turbulence"),
        (plasma, "Spectrometer upgrade discussion"),
        (neutrino, "Array deployment at site B"),
        (neutrino, "Shared fitting code release"),
    ]
    for group, title in topics:
        author = rng.choice(posters[group.group_id])
        threads.append(
            content.create_thread(author, group, title, _LOREM * rng.randint(1, 3))
        )
    big_thread = threads[3]
    big_body = ("Full turbulence scan appendix follows.\n\n" + _LOREM * 260)[: 40 * 1024]
    big_post = content.reply(alice, plasma, big_thread.thread_id, big_body)
    replies_left = 40 - len(topics) - 1
    for i in range(replies_left):
        thread = threads[i % len(threads)]
        group = plasma if thread.group_id == plasma.group_id else neutrino
        author = rng.choice(posters[group.group_id])
        content.reply(author, group, thread.thread_id, f"Re #{i}: " + _LOREM * rng.randint(1, 2))

    # Messages: 23 internal plus one external contact per group = 25 records.
    internal_pairs = [
        (alice, plasma, carol), (alice, plasma, erin), (carol, plasma, alice),
        (erin, plasma, alice), (carol, plasma, erin), (erin, plasma, carol),
        (bob, neutrino, alice), (bob, neutrino, dave), (bob, neutrino, erin),
        (alice, neutrino, bob), (dave, neutrino, bob), (erin, neutrino, dave),
    ]
    sent = []
    for i in range(23):
        sender, group, recipient = internal_pairs[i % len(internal_pairs)]
        sent.append(
            messaging.send_internal(
                sender, group, recipient,
                subject=f"Note {i + 1}",
                body=f"Message {i + 1}.\n\n" + _LOREM * rng.randint(1, 4),
            )
        )
    messaging.send_external(
        plasma, "Prof. Visitor", "visitor@example.org",
        "Collaboration enquiry", "We would like to compare probe data.",
        throttle_key="demo-seed",
    )
    messaging.send_external(
        neutrino, "Journalist", "press@example.net",
        "Interview request", "Writing a piece on low-cost detectors.",
        throttle_key="demo-seed",
    )
    # Some recipients have read their mail (creating alerts); one is dismissed.
    by_recipient: dict[int, list] = {}
    for m in sent:
        by_recipient.setdefault(m.recipient_user_id, []).append(m)
    users_by_id = {u.user_id: u for u in members}
    read_count = 0
    for uid, msgs in sorted(by_recipient.items()):
        for m in msgs[: len(msgs) // 2]:
            messaging.read_message(users_by_id[uid], m.message_id)
            read_count += 1
    first_alert = messaging.list_alerts(alice)
    if first_alert:
        messaging.ack_alert(alice, first_alert[-1].alert.alert_id)

    # Ledger: 200 entries across the two groups, in different currencies.
    for group, owner, count, currency in (
        (plasma, alice, 120, "IDR"),
        (neutrino, bob, 80, "USD"),
    ):
        for i in range(count):
            amount = rng.randint(-900_000, 1_200_000) or 1
            day = date(2004, 1, 1) + timedelta(days=rng.randint(0, 340))
            content.add_ledger_entry(
                owner, group, day,
                description=rng.choice(
                    ["grant instalment", "probe tips", "travel reimbursement",
                     "vacuum pump service", "page charges", "workshop fee"]
                ),
                amount_minor=amount,
                currency=currency,
            )

    # Publications: 100 total, some linked to uploaded data files.
    assets = {}
    for group, uploader, names in (
        (plasma, carol, ["probe-data.csv", "chamber-photo.txt"]),
        (neutrino, dave, ["flux-table.csv"]),
    ):
        for name in names:
            payload = (f"{name} demo content\n" * 40).encode()
            assets[name] = content.upload_asset(uploader, group, name, "text/plain", payload)
    venues = ["J. Plasma Phys.", "Nucl. Instrum. Meth.", "Proc. Nat. Workshop", "Preprint"]
    for group, owner, count in ((plasma, alice, 60), (neutrino, bob, 40)):
        for i in range(count):
            linked = None
            if group is plasma and i == 0:
                linked = assets["probe-data.csv"].asset_id
            content.add_publication(
                owner, group,
                title=f"{group.display_name.split()[0]} results {i + 1:03d}",
                authors=rng.sample(
                    ["A. Suryani", "B. Wijaya", "C. Tan", "D. Putra", "E. Lestari"],
                    k=rng.randint(1, 3),
                ),
                venue=rng.choice(venues),
                year=rng.randint(1998, 2004),
                asset_id=linked,
            )

    # Agenda: 30 items spread around the present so default windows show some.
    for group, writer, count in ((plasma, carol, 18), (neutrino, dave, 12)):
        for i in range(count):
            start = now + timedelta(days=rng.randint(-10, 120), hours=rng.randint(8, 17))
            ends = start + timedelta(hours=rng.choice([1, 2, 48])) if rng.random() < 0.6 else None
            content.add_agenda_item(
                writer, group,
                title=rng.choice(
                    ["Group meeting", "Detector shift", "Seminar", "Grant deadline", "Visitor talk"]
                ),
                starts_at=start,
                ends_at=ends,
                location=rng.choice(["room 12", "site B", "online", ""]),
                notes="",
            )

    for group, writer in ((plasma, erin), (neutrino, erin)):
        for i, (label, url) in enumerate(
            [
                ("arXiv", "https://arxiv.org"),
                ("CODATA", "https://codata.org"),
                ("Scipy", "https://scipy.org"),
                ("Beam schedule", "https://example.org/beam"),
            ]
        ):
            content.add_link(writer, group, url, label)

    return {
        "host": host,
        "members": {u.login: u for u in members},
        "groups": {"plasma-lab": plasma, "neutrino-net": neutrino},
        "threads": threads,
        "big_thread": big_thread,
        "big_post": big_post,
        "sent_messages": sent,
        "read_count": read_count,
    }
