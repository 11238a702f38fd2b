"""Command line entry points: serve, store maintenance, admin, audit, demo."""

from __future__ import annotations

import argparse
import getpass
import logging
import os
import sys
from pathlib import Path

from .audit import (
    DEFAULT_BUDGET_BYTES,
    DEFAULT_LINE_BPS,
    AuditError,
    build_report,
    crawl,
    render_report,
)
from .config import SiteConfig
from .demo import DEMO_PASSWORD, build_demo, demo_config
from .errors import SciBlogError
from .site import Site
from .store import RecordStore, verify_log


def _data_dir(args) -> Path:
    value = args.data_dir or os.environ.get("SCIBLOG_DATA_DIR")
    if not value:
        sys.exit("error: --data-dir or SCIBLOG_DATA_DIR is required")
    return Path(value)


def cmd_serve(args) -> int:
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(name)s %(message)s")
    host, _, port = args.listen.rpartition(":")
    config = SiteConfig(
        budget_bytes=args.budget_bytes,
        budget_mode=args.budget_mode,
        session_ttl_hours=args.session_ttl_hours,
    )
    from .web.app import Application
    from .web.server import SciBlogServer

    with Site(_data_dir(args), config) as site:
        app = Application(site, extra_static_dir=args.static_dir)
        server = SciBlogServer(app, host or "127.0.0.1", int(port))
        print(f"sciblog serving {site.data_dir} on {server.base_url}")
        try:
            server.serve_forever()
        except KeyboardInterrupt:
            pass
    return 0


def cmd_store_verify(args) -> int:
    data_dir = _data_dir(args)
    if args.collection:
        paths = [data_dir / f"{args.collection}.log"]
        if not paths[0].is_file():
            sys.exit(f"error: no such collection log: {paths[0]}")
    else:
        paths = sorted(data_dir.glob("*.log"))
    clean = True
    for path in paths:
        report = verify_log(path)
        if report.first_corrupt_offset is None:
            print(f"{path.name}: {report.valid_records} records, clean")
        else:
            clean = False
            print(
                f"{path.name}: {report.valid_records} valid records, "
                f"CORRUPT at byte offset {report.first_corrupt_offset}"
            )
    return 0 if clean else 1


def cmd_store_compact(args) -> int:
    with RecordStore(_data_dir(args)) as store:
        stats = store.compact(args.collection)
    print(
        f"{args.collection}: {stats.records_before} -> {stats.records_after} records, "
        f"{stats.bytes_reclaimed} bytes reclaimed"
    )
    return 0


def _password_from(args) -> str:
    if args.password_env:
        value = os.environ.get(args.password_env)
        if not value:
            sys.exit(f"error: environment variable {args.password_env} is empty")
        return value
    return getpass.getpass("password: ")


def cmd_admin_create_host_user(args) -> int:
    with Site(_data_dir(args)) as site:
        user = site.accounts.create_user(
            None,
            args.login,
            args.display_name or args.login,
            _password_from(args),
            is_host_admin=True,
        )
    print(f"created host admin {user.login} (id {user.user_id})")
    return 0


def cmd_admin_create_group(args) -> int:
    with Site(_data_dir(args)) as site:
        owner = site.accounts.user_by_login(args.owner)
        if owner is None:
            sys.exit(f"error: no account with login {args.owner!r}")
        group = site.accounts.create_group(
            None,
            args.slug,
            args.name or args.slug,
            owner.user_id,
            domain_alias=args.domain_alias,
        )
    print(f"created group /g/{group.slug} owned by {args.owner}")
    return 0


def cmd_audit(args) -> int:
    password = None
    if args.login:
        if not args.password_env:
            sys.exit("error: --password-env is required with --login")
        password = os.environ.get(args.password_env)
        if not password:
            sys.exit(f"error: environment variable {args.password_env} is empty")
    try:
        measurements = crawl(
            args.base_url,
            login=args.login,
            password=password,
            max_pages=args.max_pages,
            line_bps=args.line_bps,
            budget_bytes=args.budget_bytes,
            accept_gzip=args.accept_gzip,
        )
    except AuditError as exc:
        print(f"crawl error: {exc}", file=sys.stderr)
        return 2
    report = build_report(
        measurements,
        base_url=args.base_url,
        budget_bytes=args.budget_bytes,
        line_bps=args.line_bps,
    )
    print(render_report(report, args.format))
    return 0 if report.pages_over_budget == 0 else 1


def cmd_demo(args) -> int:
    data_dir = _data_dir(args)
    if data_dir.exists() and any(data_dir.glob("*.log")):
        sys.exit(f"error: {data_dir} already holds a store; demo wants a fresh directory")
    with Site(data_dir, demo_config()) as site:
        build_demo(site)
    print(f"demo data written to {data_dir}")
    print(f"accounts: host, alice, bob, carol, dave, erin  password: {DEMO_PASSWORD}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sciblog", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add_data_dir(p):
        p.add_argument("--data-dir", help="store directory (or SCIBLOG_DATA_DIR)")

    p = sub.add_parser("serve", help="run the web service")
    add_data_dir(p)
    p.add_argument("--listen", default="127.0.0.1:8080", metavar="HOST:PORT")
    p.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    p.add_argument("--budget-mode", choices=["enforce", "warn"], default="enforce")
    p.add_argument("--session-ttl-hours", type=float, default=12.0)
    p.add_argument("--static-dir", help="extra directory searched for static assets")
    p.set_defaults(func=cmd_serve)

    store = sub.add_parser("store", help="log file maintenance")
    store_sub = store.add_subparsers(dest="store_command", required=True)
    p = store_sub.add_parser("verify", help="CRC-check collection logs (read-only)")
    add_data_dir(p)
    p.add_argument("--collection")
    p.set_defaults(func=cmd_store_verify)
    p = store_sub.add_parser("compact", help="rewrite a collection keeping live records")
    add_data_dir(p)
    p.add_argument("--collection", required=True)
    p.set_defaults(func=cmd_store_compact)

    admin = sub.add_parser("admin", help="operator account management")
    admin_sub = admin.add_subparsers(dest="admin_command", required=True)
    p = admin_sub.add_parser("create-host-user", help="bootstrap a host admin account")
    add_data_dir(p)
    p.add_argument("--login", required=True)
    p.add_argument("--display-name")
    p.add_argument("--password-env", help="read the password from this variable")
    p.set_defaults(func=cmd_admin_create_host_user)
    p = admin_sub.add_parser("create-group", help="provision a group for an owner")
    add_data_dir(p)
    p.add_argument("--slug", required=True)
    p.add_argument("--owner", required=True, help="login of the initial owner")
    p.add_argument("--name")
    p.add_argument("--domain-alias")
    p.set_defaults(func=cmd_admin_create_group)

    p = sub.add_parser("audit", help="crawl a running instance and audit page weights")
    p.add_argument("--base-url", required=True)
    p.add_argument("--login")
    p.add_argument("--password-env")
    p.add_argument("--budget-bytes", type=int, default=DEFAULT_BUDGET_BYTES)
    p.add_argument("--line-bps", type=int, default=DEFAULT_LINE_BPS)
    p.add_argument("--max-pages", type=int, default=500)
    p.add_argument("--format", choices=["text", "json"], default="text")
    p.add_argument("--accept-gzip", action="store_true")
    p.set_defaults(func=cmd_audit)

    p = sub.add_parser("demo", help="seed a demonstration fixture")
    add_data_dir(p)
    p.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SciBlogError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
