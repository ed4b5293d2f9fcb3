"""Command-line front end: ``emdp <command> MODEL [options]``.

Exit status is 0 on success, 1 for negative analysis results (unsafe
configuration, value -inf, safety violations in simulation) and 2 for
input errors.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import dataclass
from fractions import Fraction
from importlib import resources
from pathlib import Path

from . import energy, graphs, synth
from .model import Configuration, Emdp, ModelSyntaxError, ValidationError, format_rational, parse_config, parse_emdp
from .strategy import StrategyError, machine_from_json

OK, NEGATIVE, INPUT_ERROR = 0, 1, 2

COMMANDS = ("info", "safety", "pump", "classify", "value", "limit-value", "synth", "simulate")


class InputError(Exception):
    pass


@dataclass
class CliConfig:
    model: Path
    command: str
    config: Configuration | None = None
    state: str | None = None
    epsilon: Fraction | None = None
    seed: int = 0
    episodes: int = 100
    steps: int = 10_000
    json: bool = False
    out: Path | None = None
    strategy: Path | None = None
    trace: Path | None = None


# ------------------------------------------------------------ rendering


def rat_json(q):
    if isinstance(q, float) and math.isinf(q):
        return "inf" if q > 0 else "-inf"
    q = Fraction(q)
    return {"num": q.numerator, "den": q.denominator}


def rat_text(q) -> str:
    if isinstance(q, float) and math.isinf(q):
        return "inf" if q > 0 else "-inf"
    return format_rational(Fraction(q))


def level_json(v):
    return "inf" if v == math.inf else int(v)


def _table(rows: list[tuple[str, str]], head: tuple[str, str]) -> str:
    w = max(len(r[0]) for r in rows + [head])
    return "\n".join(f"{a:<{w}}  {b}" for a, b in [head] + rows) + "\n"


def load_schema(command: str) -> dict:
    name = command.replace("-", "_") + ".json"
    return json.loads(resources.files("emdp").joinpath("schemas", name).read_text())


def check_schema(command: str, doc: dict) -> None:
    import jsonschema

    jsonschema.validate(doc, load_schema(command))


# ------------------------------------------------------------ commands


def cmd_info(e: Emdp, cfg: CliConfig):
    ms = graphs.mecs(e)
    mec_list = [sorted(map(str, m.states)) for m in ms]
    doc = {
        "command": "info",
        "states": len(e.states),
        "transitions": len(e.transitions),
        "max_update": e.max_update,
        "strongly_connected": graphs.is_strongly_connected(e),
        "mecs": mec_list,
        "classification": synth.classify(e).value,
    }
    text = (
        f"states: {doc['states']}\ntransitions: {doc['transitions']}\nM_E: {doc['max_update']}\n"
        f"strongly connected: {'yes' if doc['strongly_connected'] else 'no'}\n"
        f"MECs ({len(mec_list)}): " + " ".join("{" + ",".join(m) + "}" for m in mec_list) + "\n"
        f"classification: {doc['classification']}\n"
    )
    return doc, text, OK


def _levels(e: Emdp, levels: dict, command: str):
    doc = {"command": command, "levels": {str(s): level_json(levels[s]) for s in e.states}}
    text = _table([(str(s), "inf" if levels[s] == math.inf else str(levels[s])) for s in e.states],
                  ("state", "min_safe" if command == "safety" else "min_pump"))
    return doc, text, OK


def cmd_safety(e: Emdp, cfg: CliConfig):
    return _levels(e, energy.min_safe(e), "safety")


def cmd_pump(e: Emdp, cfg: CliConfig):
    return _levels(e, energy.min_pump(e), "pump")


def cmd_classify(e: Emdp, cfg: CliConfig):
    c = synth.classify(e)
    return {"command": "classify", "classification": c.value}, c.value + "\n", OK


def cmd_value(e: Emdp, cfg: CliConfig):
    c = _need_config(cfg)
    eps = _need_epsilon(cfg)
    _check_state(e, c.state)
    r = synth.approx_value(e, c, eps)
    doc = {
        "command": "value",
        "config": str(c),
        "value": rat_json(r.value),
        "kind": r.kind.value,
        "epsilon": rat_json(eps),
        "cut_level": r.cut_level,
    }
    text = f"{c}: {rat_text(r.value)} ({r.kind.value}, epsilon {rat_text(eps)})\n"
    return doc, text, NEGATIVE if r.value == -math.inf else OK


def cmd_limit(e: Emdp, cfg: CliConfig):
    s = cfg.state if cfg.state is not None else (cfg.config.state if cfg.config else None)
    if s is None:
        raise InputError("limit-value needs --state (or --config)")
    _check_state(e, s)
    v = synth.limit_value(e, s)
    doc = {"command": "limit-value", "state": str(s), "value": rat_json(v)}
    return doc, f"{s}: {rat_text(v)}\n", NEGATIVE if v == -math.inf else OK


def cmd_synth(e: Emdp, cfg: CliConfig):
    c = _need_config(cfg)
    eps = _need_epsilon(cfg)
    _check_state(e, c.state)
    try:
        m = synth.epsilon_strategy(e, c, eps)
    except synth.UnsafeStart as err:
        return None, f"unsafe start: {err}\n", NEGATIVE
    doc = {
        "command": "synth",
        "config": str(c),
        "epsilon": rat_json(eps),
        "memory_size": level_json(m.memory_size()),
        "strategy": m.describe(),
    }
    text = json.dumps(doc["strategy"], indent=1) + "\n"
    return doc, text, OK


def cmd_simulate(e: Emdp, cfg: CliConfig):
    from .sim import dump_trace, estimate_mp, run_trace

    c = _need_config(cfg)
    _check_state(e, c.state)
    if cfg.episodes < 1 or cfg.steps < 1:
        raise InputError("--episodes and --steps must be positive")
    if cfg.strategy is not None:
        try:
            data = json.loads(cfg.strategy.read_text())
        except (OSError, json.JSONDecodeError) as err:
            raise InputError(f"cannot read strategy: {err}") from None
        if data.get("command") == "synth":
            data = data["strategy"]
        try:
            sigma = machine_from_json(e, data)
        except (StrategyError, KeyError, ValueError, TypeError) as err:
            raise InputError(f"bad strategy file: {err}") from None
    else:
        try:
            sigma = synth.epsilon_strategy(e, c, _need_epsilon(cfg))
        except synth.UnsafeStart as err:
            return None, f"unsafe start: {err}\n", NEGATIVE
    if cfg.trace is not None:
        tr = run_trace(e, sigma, c, cfg.steps, cfg.seed)
        buf = io.StringIO()
        dump_trace(e, tr, buf)
        cfg.trace.write_bytes(buf.getvalue().encode())
    rep = estimate_mp(e, sigma, c, cfg.episodes, cfg.steps, cfg.seed)
    doc = {"command": "simulate", "config": str(c), "seed": cfg.seed, **rep.to_json()}
    text = (
        f"episodes {rep.episodes} x {rep.steps} steps, seed {cfg.seed}\n"
        f"mean {rep.mean:.6f}  stderr {rep.stderr:.6f}\n"
        f"safety violations {rep.safety_violations}  max level {rep.max_level_seen}\n"
    )
    return doc, text, NEGATIVE if rep.safety_violations else OK


HANDLERS = {
    "info": cmd_info,
    "safety": cmd_safety,
    "pump": cmd_pump,
    "classify": cmd_classify,
    "value": cmd_value,
    "limit-value": cmd_limit,
    "synth": cmd_synth,
    "simulate": cmd_simulate,
}


def _need_config(cfg: CliConfig) -> Configuration:
    if cfg.config is None:
        raise InputError(f"{cfg.command} needs --config 'state(n)'")
    return cfg.config


def _need_epsilon(cfg: CliConfig) -> Fraction:
    if cfg.epsilon is None:
        raise InputError(f"{cfg.command} needs --epsilon")
    return cfg.epsilon


def _check_state(e: Emdp, s) -> None:
    if s not in e.kind:
        raise InputError(f"unknown state {s!r}")


# ------------------------------------------------------------ entry point


def _rational(text: str) -> Fraction:
    try:
        q = Fraction(text)
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a rational: {text!r}") from None
    if q <= 0:
        raise argparse.ArgumentTypeError("epsilon must be positive")
    return q


def _configuration(text: str) -> Configuration:
    try:
        return parse_config(text)
    except ValueError as err:
        raise argparse.ArgumentTypeError(str(err)) from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="emdp", description="Energy MDP analysis and strategy synthesis.")
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("model", type=Path, help="model file (.emdp)")
    p.add_argument("--config", type=_configuration, help="configuration, e.g. 's(5)'")
    p.add_argument("--state", help="state for limit-value")
    p.add_argument("--epsilon", type=_rational, help="precision, e.g. 1/10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--strategy", type=Path, help="strategy JSON produced by synth (simulate)")
    p.add_argument("--trace", type=Path, help="write the first episode as JSON lines (simulate)")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    p.add_argument("--out", type=Path, help="write the output here instead of stdout")
    return p


def parse_args(argv) -> CliConfig:
    a = build_parser().parse_args(argv)
    return CliConfig(a.model, a.command, a.config, a.state, a.epsilon, a.seed, a.episodes, a.steps,
                     a.json, a.out, a.strategy, a.trace)


def run(cfg: CliConfig, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        text = cfg.model.read_text()
    except OSError as err:
        print(f"error: {err}", file=stderr)
        return INPUT_ERROR
    try:
        e = parse_emdp(text)
        doc, out, code = HANDLERS[cfg.command](e, cfg)
    except (ModelSyntaxError, ValidationError) as err:
        print(f"{type(err).__name__}: {err}", file=stderr)
        return INPUT_ERROR
    except InputError as err:
        print(f"error: {err}", file=stderr)
        return INPUT_ERROR
    if doc is None:
        print(out, end="", file=stderr)
        return code
    if cfg.json:
        check_schema(cfg.command, doc)
        out = json.dumps(doc, indent=1, sort_keys=True) + "\n"
    if cfg.out is not None:
        cfg.out.write_text(out)
    else:
        stdout.write(out)
    return code


def main(argv=None) -> int:
    try:
        cfg = parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with status 2
        return int(exc.code or 0)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
