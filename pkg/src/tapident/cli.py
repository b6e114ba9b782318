"""Headless command line for replay runs, audit verification, tap experiments.

Standard output carries only result data; diagnostics go to standard
error, so the commands compose in pipelines. Exit codes:

    0  success (verify: chain intact)
    1  verify: chain broken
    2  configuration / usage error
    3  capture source or log file unreadable
    4  runtime failure (audit storage, unexpected)
"""

from __future__ import annotations

import argparse
import json
import sys
from datetime import datetime
from pathlib import Path

from .audit import (MissingTimeAnchorError, StorageFailureError,
                    UnreadableLogError, verify_chain)
from .capture import DEFAULT_SNAP_LENGTH, CaptureError, CaptureSource, open_source
from .framework import FrameworkError
from .session import Session
from .tapmodel import TapLossProfile, apply_tap, icmp_experiment

EXIT_OK = 0
EXIT_BROKEN = 1
EXIT_CONFIG = 2
EXIT_SOURCE = 3
EXIT_RUNTIME = 4

TIME_ANCHOR_FORMAT = "%Y-%m-%d %H:%M"


def _fail(message: str, code: int) -> int:
    print(f"tapident: {message}", file=sys.stderr)
    return code


def _parse_params(args) -> dict[str, str]:
    params: dict[str, str] = {}
    if args.params_file:
        try:
            doc = json.loads(Path(args.params_file).read_text(encoding="utf-8"))
        except (OSError, ValueError) as exc:
            raise ValueError(f"cannot read params file: {exc}") from exc
        if not isinstance(doc, dict):
            raise ValueError("params file must hold a key-value object")
        params.update({str(k): str(v) for k, v in doc.items()})
    for item in args.param or []:
        if "=" not in item:
            raise ValueError(f"--param expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        params[key] = value
    return params


def _cmd_run(args) -> int:
    try:
        params = _parse_params(args)
        if args.replay:
            source = CaptureSource.replay(args.replay, snap_length=args.snap,
                                          realtime=args.realtime)
        else:
            source = CaptureSource.live(args.live, snap_length=args.snap)
        entered_now = None
        if args.now:
            entered_now = datetime.strptime(args.now, TIME_ANCHOR_FORMAT)
        stream_opener = open_source
        if args.tap_profile:
            profile_doc = json.loads(Path(args.tap_profile).read_text(encoding="utf-8"))
            profile = TapLossProfile.from_document(profile_doc)
            stream_opener = lambda src: apply_tap(open_source(src), profile)  # noqa: E731
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)

    logging_enabled = not args.no_log
    try:
        session = Session(
            source,
            logging_enabled=logging_enabled,
            entered_now=entered_now,
            audit_path=Path(args.audit_out) if args.audit_out else None,
            stream_opener=stream_opener,
        )
    except CaptureError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_SOURCE)
    except StorageFailureError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_RUNTIME)
    except MissingTimeAnchorError:
        return _fail("logging is enabled: pass --now 'YYYY-MM-DD HH:MM' or --no-log",
                     EXIT_CONFIG)

    try:
        run = session.start_run(args.plugin, params)
        try:
            run.wait()
        except KeyboardInterrupt:
            print("tapident: interrupted, stopping run", file=sys.stderr)
            result = session.stop_run(run.run_id)
            print(result.serialize())
            return 130
        result = session.stop_run(run.run_id)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)
    except CaptureError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_SOURCE)
    except FrameworkError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_CONFIG)
    except StorageFailureError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_RUNTIME)
    finally:
        session.close()

    serialized = result.serialize()
    if serialized:
        print(serialized)
    if session.audit.path is not None:
        print(f"audit log written to {session.audit.path}", file=sys.stderr)
    return EXIT_OK


def _cmd_verify(args) -> int:
    try:
        verdict = verify_chain(args.audit_path)
    except UnreadableLogError as exc:
        return _fail(f"{exc.code}: {exc}", EXIT_SOURCE)
    print(str(verdict))
    return EXIT_OK if verdict.intact else EXIT_BROKEN


def _cmd_tap_experiment(args) -> int:
    try:
        if args.profile:
            doc = json.loads(Path(args.profile).read_text(encoding="utf-8"))
            base = TapLossProfile.from_document(doc)
        else:
            base = TapLossProfile(link_loss_probability=args.loss, rng_seed=args.seed)
    except (OSError, ValueError) as exc:
        return _fail(str(exc), EXIT_CONFIG)

    received: list[int] = []
    for trial in range(args.trials):
        profile = TapLossProfile(
            link_loss_probability=base.link_loss_probability,
            observation_gaps=base.observation_gaps,
            rng_seed=base.rng_seed + trial,
        )
        got = icmp_experiment(args.sent, profile)
        received.append(got)
        print(f"{trial + 1}\t{args.sent}\t{got}")
    mean = sum(received) / len(received) if received else 0.0
    print(f"mean\t{args.sent}\t{mean:.2f}")

    if args.figures:
        from .report import ExperimentReport, render_experiment_figures
        report = ExperimentReport(sent=args.sent, received=tuple(received),
                                  loss_probability=base.link_loss_probability,
                                  base_seed=base.rng_seed)
        for path in render_experiment_figures(report, Path(args.figures)):
            print(f"figure written to {path}", file=sys.stderr)
    return EXIT_OK


def _cmd_serve(args) -> int:
    from .service import ControlService
    service = ControlService(host=args.host, port=args.port,
                             audit_dir=Path(args.audit_dir) if args.audit_dir else None)
    if args.host not in ("127.0.0.1", "localhost", "::1"):
        print("tapident: warning: binding beyond loopback is unsafe "
              "(no authentication)", file=sys.stderr)
    host, port = service.address
    print(f"control service on http://{host}:{port}", file=sys.stderr)
    try:
        service.serve_forever()
    except KeyboardInterrupt:
        service.shutdown()
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tapident",
        description="Passive-tap server identification toolkit.",
        epilog="Exit codes: 0 ok, 1 broken chain (verify), 2 config error, "
               "3 source/log unreadable, 4 runtime failure.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one identification plugin over a source")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--replay", metavar="PCAP", help="replay a classic pcap file")
    src.add_argument("--live", metavar="IFACE", help="capture from a receive-only interface")
    run.add_argument("--snap", type=int, default=DEFAULT_SNAP_LENGTH,
                     help="snap length in octets (default %(default)s: headers only)")
    run.add_argument("--plugin", required=True, help="plugin id (source_addr, known_ip)")
    run.add_argument("--param", action="append", metavar="KEY=VALUE",
                     help="plugin parameter; repeatable")
    run.add_argument("--params-file", metavar="FILE",
                     help="JSON key-value document of plugin parameters")
    run.add_argument("--log", dest="no_log", action="store_false", default=False,
                     help="keep the audit log (default)")
    run.add_argument("--no-log", dest="no_log", action="store_true",
                     help="bypass audit logging")
    run.add_argument("--now", metavar="'YYYY-MM-DD HH:MM'",
                     help="operator-entered current date and time (minute resolution)")
    run.add_argument("--audit-out", metavar="FILE", help="audit log destination")
    run.add_argument("--tap-profile", metavar="FILE",
                     help="apply a tap loss profile document to the stream")
    run.add_argument("--realtime", action="store_true",
                     help="pace replay by recorded inter-arrival times")
    run.set_defaults(fn=_cmd_run)

    verify = sub.add_parser("verify", help="verify an audit log's digest chain")
    verify.add_argument("audit_path", metavar="AUDIT_LOG")
    verify.set_defaults(fn=_cmd_verify)

    exp = sub.add_parser("tap-experiment",
                         help="seeded echo round-trip trials over the modelled tap")
    exp.add_argument("--sent", type=int, default=10_000, help="round trips per trial")
    exp.add_argument("--trials", type=int, default=2, help="number of trials")
    exp.add_argument("--loss", type=float, default=0.0,
                     help="per-packet link loss probability")
    exp.add_argument("--seed", type=int, default=0, help="base RNG seed")
    exp.add_argument("--profile", metavar="FILE", help="tap loss profile document")
    exp.add_argument("--figures", metavar="DIR",
                     help="also render report figures into DIR")
    exp.set_defaults(fn=_cmd_tap_experiment)

    serve = sub.add_parser("serve", help="start the local control service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8471)
    serve.add_argument("--audit-dir", metavar="DIR",
                       help="directory for session audit logs (default: cwd)")
    serve.set_defaults(fn=_cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
