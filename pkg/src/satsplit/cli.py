"""Command-line interface: scenario runs, knob sweeps, and the record codec.

Exit codes: 0 on success, 2 for configuration problems, 3 when an internal
invariant breaks.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path

from . import ece
from .errors import ConfigError, SatSplitError
from .scenarios import (
    PRESETS,
    reduction_vs_vanilla,
    resolve_scenario,
    rows_to_csv,
    run_scenario,
    sweep,
)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="satsplit",
        description="TLS-splitting latency simulator for satellite-terrestrial networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a preset or scenario file")
    run_p.add_argument("--scenario", required=True,
                       help=f"preset ({', '.join(sorted(PRESETS))}) or config file path")
    run_p.add_argument("--sat-rtt-ms", type=int, default=None)
    run_p.add_argument("--terr-rtt-ms", type=int, default=None)
    run_p.add_argument("--seed", type=int, default=None)
    run_p.add_argument("--out", required=True, help="CSV output path")
    run_p.add_argument("--json", dest="json_out", default=None,
                       help="optional JSON export path")

    sweep_p = sub.add_parser("sweep", help="run a scenario across knob values")
    sweep_p.add_argument("--scenario", default="fig4")
    sweep_p.add_argument("--param", required=True)
    sweep_p.add_argument("--values", required=True,
                         help="comma-separated values for the knob")
    sweep_p.add_argument("--seed", type=int, default=None)
    sweep_p.add_argument("--out", required=True)

    ece_p = sub.add_parser("ece", help="encrypted content-encoding codec")
    ece_sub = ece_p.add_subparsers(dest="ece_command", required=True)

    enc = ece_sub.add_parser("encrypt", help="seal a file into an aes128gcm body")
    enc.add_argument("--in", dest="infile", required=True)
    enc.add_argument("--out", dest="outfile", required=True)
    enc.add_argument("--key-hex", required=True, help="16-octet ikm, hex")
    enc.add_argument("--keyid", default="", help="key identifier (UTF-8)")
    enc.add_argument("--salt-hex", default=None,
                     help="16-octet salt, hex (default: fresh random)")
    enc.add_argument("--rs", type=int, default=ece.DEFAULT_RECORD_SIZE)

    dec = ece_sub.add_parser("decrypt", help="open an aes128gcm body")
    dec.add_argument("--in", dest="infile", required=True)
    dec.add_argument("--out", dest="outfile", required=True)
    dec.add_argument("--key-hex", required=True)
    dec.add_argument("--keyid", default=None,
                     help="require the body to name this key identifier")
    return parser


def _cmd_run(args) -> int:
    scenario = resolve_scenario(args.scenario, seed=args.seed)
    overrides = {}
    if args.sat_rtt_ms is not None:
        overrides["sat_rtt_ms"] = args.sat_rtt_ms
    if args.terr_rtt_ms is not None:
        overrides["terr_rtt_ms"] = args.terr_rtt_ms
    if overrides:
        scenario = replace(scenario, **overrides)
    rows = run_scenario(scenario)
    Path(args.out).write_text(rows_to_csv(rows))
    if args.json_out:
        Path(args.json_out).write_text(
            json.dumps([asdict(r) for r in rows], indent=2) + "\n")
    for row in rows:
        print(f"{row.variant:24s} handshake {row.handshake_ms:10.3f} ms   "
              f"page {row.page_load_ms:10.3f} ms   sat-rtts {row.satellite_round_trips}")
    if scenario.name == "fig4":
        reduction = reduction_vs_vanilla(rows)
        print(f"dane-cached vs vanilla handshake reduction: {reduction * 100:.1f}%")
    print(f"wrote {args.out}")
    return 0


def _cmd_sweep(args) -> int:
    scenario = resolve_scenario(args.scenario, seed=args.seed)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("sweep needs at least one value", field="values")
    rows = sweep(args.param, values, scenario)
    Path(args.out).write_text(rows_to_csv(rows))
    print(f"wrote {len(rows)} rows to {args.out}")
    return 0


def _parse_hex(value: str, expected_len: int, what: str) -> bytes:
    try:
        raw = bytes.fromhex(value)
    except ValueError:
        raise ConfigError(f"{what} is not valid hex", field=what)
    if len(raw) != expected_len:
        raise ConfigError(f"{what} must be {expected_len} octets", field=what)
    return raw


def _cmd_ece(args) -> int:
    ikm = _parse_hex(args.key_hex, 16, "key")
    data = Path(args.infile).read_bytes()
    if args.ece_command == "encrypt":
        salt = (os.urandom(16) if args.salt_hex is None
                else _parse_hex(args.salt_hex, 16, "salt"))
        key = ece.ContentKey(keyid=args.keyid.encode(), ikm=ikm)
        body = ece.ece_encrypt(data, key, rs=args.rs, salt=salt)
        Path(args.outfile).write_bytes(body.encode())
        print(f"sealed {len(data)} octets into {len(body)} "
              f"({len(body.records)} records) -> {args.outfile}")
    else:
        def lookup(keyid: bytes):
            if args.keyid is not None and keyid != args.keyid.encode():
                return None
            return ece.ContentKey(keyid=keyid, ikm=ikm)
        plaintext = ece.ece_decrypt(data, lookup)
        Path(args.outfile).write_bytes(plaintext)
        print(f"opened {len(data)} octets into {len(plaintext)} -> {args.outfile}")
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "ece":
            return _cmd_ece(args)
        parser.error(f"unknown command {args.command!r}")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (SatSplitError, OSError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
