"""Command-line entry point: ``tmss-crypto {keygen,message,sweep,validate}``.

Exit codes: 0 ok, 2 usage, 3 security alarm, 4 I/O failure, 5 validation failure.
"""

from __future__ import annotations

import argparse
import datetime
import json
import os
import secrets
import sys
from pathlib import Path

from . import __version__, experiments, protocol, validation
from .attacks import parse_attack
from .errors import TmssError

EXIT_OK, EXIT_USAGE, EXIT_ALARM, EXIT_IO, EXIT_VALIDATION = 0, 2, 3, 4, 5
OUT_DIR_ENV = "TMSS_CRYPTO_OUT_DIR"

ATTACK_HELP = (
    "eavesdropper: none | intercept-resend[:s_eve] | tap:eta | noise:epsilon[:phi] "
    "(default: none)"
)


class UsageError(Exception):
    pass


def _out_dir():
    return Path(os.environ.get(OUT_DIR_ENV, "."))


def read_config_file(path):
    """Flat ``key = value`` file; ``#`` starts a comment. Keys may use dashes or underscores."""
    values = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise UsageError(f"{path}:{lineno}: expected key=value")
            key, value = (part.strip() for part in line.split("=", 1))
            values[key.replace("-", "_")] = value
    return values


def _session_flags(p):
    p.add_argument("--s", type=float, default=1.0, help="squeezing magnitude s (default 1.0)")
    p.add_argument("--theta", type=float, default=0.0, help="squeezing phase in radians")
    p.add_argument("--eta", type=float, default=1.0, help="honest channel transmissivity")
    p.add_argument("--samples-per-slot", type=int, default=200)
    p.add_argument("--check-fraction", type=float, default=0.25,
                   help="fraction of all slots used as check bits, in (0, 1)")
    p.add_argument("--calibration-slots", type=int, default=200)
    p.add_argument("--tol-d", type=float, default=0.5, help="alarm tolerance on squeezing degree [dB]")
    p.add_argument("--tol-snr", type=float, default=0.5, help="alarm tolerance on SNR [dB]")
    p.add_argument("--threshold-mode", choices=protocol.THRESHOLD_MODES, default="geometric-mean")
    p.add_argument("--theta-modulation", action="store_true", help="hop the squeezing phase per slot")
    p.add_argument("--attack", default="none", help=ATTACK_HELP)
    p.add_argument("--seed", type=int, default=None, help="master seed (drawn and recorded if omitted)")
    p.add_argument("--out", default=None, help="transcript JSON path")
    p.add_argument("--include-private", action="store_true", help="add private fields to the transcript")
    p.add_argument("--config", default=None, help="key=value file supplying defaults")


def build_parser():
    parser = argparse.ArgumentParser(prog="tmss-crypto", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    keygen = sub.add_parser("keygen", help="distribute a key and verify the channel")
    _session_flags(keygen)
    group = keygen.add_mutually_exclusive_group()
    group.add_argument("--bits", default=None, help="explicit key bits, e.g. 0101")
    group.add_argument("--random-bits", type=int, default=None, help="number of random key bits")

    message = sub.add_parser("message", help="send a message directly, disclosed only if secure")
    _session_flags(message)
    message.add_argument("--message", required=True, help="message as hex, e.g. 48656c6c6f")

    sweep = sub.add_parser("sweep", help="write squeezing-degree / SNR loss sweeps as CSV")
    sweep.add_argument("--kind", choices=experiments.KINDS, default="both")
    sweep.add_argument("--s", type=float, nargs="*", default=list(experiments.DEFAULT_S_VALUES))
    sweep.add_argument("--loss-start", type=float, default=0.0)
    sweep.add_argument("--loss-stop", type=float, default=1.0)
    sweep.add_argument("--loss-step", type=float, default=0.01)
    sweep.add_argument("--outputs", choices=("analytic", "monte_carlo", "both"), default="analytic")
    sweep.add_argument("--mc-slots", type=int, default=100)
    sweep.add_argument("--samples-per-slot", type=int, default=200)
    sweep.add_argument("--seed", type=int, default=None)
    sweep.add_argument("--out-dir", default=None)
    sweep.add_argument("--config", default=None)

    sub.add_parser("validate", help="run the Gaussian / Fock / closed-form cross-checks")
    return parser, {"keygen": keygen, "message": message, "sweep": sweep}


def parse_args(argv):
    parser, subparsers = build_parser()
    args = parser.parse_args(argv)
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            values = read_config_file(config_path)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from None
        sp = subparsers[args.command]
        actions = {a.dest: a for a in sp._actions}
        unknown = set(values) - set(actions)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        for key, value in values.items():
            # string defaults are run through ``type`` by argparse; flags are not
            if isinstance(actions[key], argparse._StoreTrueAction):
                if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                    raise UsageError(f"{key}: expected a boolean, got {value!r}")
                values[key] = value.lower() in ("true", "1", "yes")
        sp.set_defaults(**values)
        args = parser.parse_args(argv)
    return args


def _resolve_seed(args):
    if args.seed is None:
        args.seed = secrets.randbits(32)
    return args.seed


def _bits_from_string(text):
    if not text or set(text) - {"0", "1"}:
        raise UsageError(f"--bits must be a non-empty string of 0/1, got {text!r}")
    return [int(c) for c in text]


def hex_to_bits(text):
    text = text.strip().lower().removeprefix("0x")
    try:
        int(text, 16)
    except ValueError:
        raise UsageError(f"--message must be hexadecimal, got {text!r}") from None
    return [int(b) for c in text for b in format(int(c, 16), "04b")]


def bits_to_hex(bits):
    if any(b is None for b in bits):
        return None
    return "".join(format(int("".join(map(str, bits[k:k + 4])), 2), "x") for k in range(0, len(bits), 4))


def _config_from_args(args):
    return protocol.ProtocolConfig(
        s=args.s,
        theta=args.theta,
        samples_per_slot=args.samples_per_slot,
        theta_modulation=args.theta_modulation,
        decision_threshold_mode=args.threshold_mode,
        check_bit_fraction=args.check_fraction,
        rng_seed=args.seed,
        channel_eta=args.eta,
        calibration_slots=args.calibration_slots,
        tol_D=args.tol_d,
        tol_SNR=args.tol_snr,
    )


def _write_json(path, payload):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(payload if isinstance(payload, str) else json.dumps(payload, indent=1, sort_keys=True))


def _manifest(subcommand, config, seed, paths):
    return {
        "subcommand": subcommand,
        "config": config,
        "seed": seed,
        "artifacts": [str(p) for p in paths],
        "tool_version": __version__,
        "timestamp": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }


def _run_session_command(args, mode):
    seed = _resolve_seed(args)
    attack = parse_attack(args.attack)
    config = _config_from_args(args)
    if mode == "key":
        bits = _bits_from_string(args.bits) if args.bits is not None else None
        transcript = protocol.run_session(
            config, bits=bits, mode="key", attack=attack, n_random_bits=args.random_bits or 256
        )
    else:
        transcript = protocol.run_session(config, bits=hex_to_bits(args.message), mode="message", attack=attack)

    out = Path(args.out) if args.out else _out_dir() / f"{args.command}_transcript.json"
    report_path = out.with_suffix(".report.json")
    manifest_path = out.with_suffix(".manifest.json")
    _write_json(out, transcript.to_json(include_private=args.include_private))
    _write_json(report_path, json.dumps(transcript.security_report, indent=2, sort_keys=True))
    resolved = {k: v for k, v in vars(args).items() if k != "config"}
    _write_json(manifest_path, _manifest(args.command, resolved, seed, [out, report_path, manifest_path]))

    report = transcript.security_report
    print(f"verdict: {report['verdict']}  (seed {seed})")
    print(f"  D   baseline {report['baseline_D_dB']:.3f} dB, measured {_num(report['measured_D_dB'])} dB")
    print(f"  SNR baseline {report['baseline_SNR_dB']:.3f} dB, measured {_num(report['measured_SNR_dB'])} dB")
    payload = transcript.decoded_payload()
    if mode == "key":
        shown = "".join("?" if b is None else str(b) for b in payload)
        state = "discarded" if transcript.verdict == "alarm" else "accepted"
        print(f"key ({state}): {shown}")
    elif transcript.disclosed:
        print(f"message: {bits_to_hex(payload)}")
    else:
        print("message withheld: channel not secure")
    print(f"transcript: {out}")
    return EXIT_ALARM if transcript.verdict == "alarm" else EXIT_OK


def _num(x):
    return "n/a" if x is None else f"{x:.3f}"


def cmd_keygen(args):
    return _run_session_command(args, "key")


def cmd_message(args):
    return _run_session_command(args, "message")


def cmd_sweep(args):
    seed = _resolve_seed(args)
    if not args.s:
        raise UsageError("--s needs at least one value")
    spec = experiments.SweepSpec(
        s_values=tuple(args.s),
        grid=experiments.LossGrid(args.loss_start, args.loss_stop, args.loss_step),
        outputs=args.outputs,
        samples_per_slot=args.samples_per_slot,
        slots=args.mc_slots,
        seed=seed,
    )
    out_dir = Path(args.out_dir) if args.out_dir else _out_dir()
    result = experiments.sweep(spec, args.kind)
    csv_path = out_dir / f"sweep_{args.kind}.csv"
    out_dir.mkdir(parents=True, exist_ok=True)
    result.write_csv(csv_path)
    manifest_path = out_dir / f"sweep_{args.kind}.manifest.json"
    resolved = {k: v for k, v in vars(args).items() if k != "config"}
    _write_json(manifest_path, _manifest("sweep", resolved, seed, [csv_path, manifest_path]))
    print(f"wrote {len(result.rows)} rows to {csv_path}")
    losses = spec.grid.losses()
    if 1.0 in spec.s_values and 0.0 in losses and 0.07 in losses:
        print("\n".join(experiments.headline_check().lines()))
    return EXIT_OK


def cmd_validate(args):
    checks = validation.run_checks()
    for check in checks:
        print(check.line())
    ok = all(c.passed for c in checks)
    print("all invariants hold" if ok else "VALIDATION FAILED")
    return EXIT_OK if ok else EXIT_VALIDATION


COMMANDS = {"keygen": cmd_keygen, "message": cmd_message, "sweep": cmd_sweep, "validate": cmd_validate}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except (UsageError, TmssError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
