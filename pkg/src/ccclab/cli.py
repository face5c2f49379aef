"""
``ccc`` command-line entry point.

    ccc [run] <command> [flags]

Commands: ``v``, ``w``, ``v-delayed``, ``chsh <experiment>``,
``causal <ivy|model.json>``, ``toy dces``.  Global flags ``--seed``,
``--trials``, ``--exact``, ``--format {json,csv}``, ``--out``, and
``--config spec.json`` (a report's ``spec`` block) may appear anywhere.

Reports are byte-deterministic: fixed key order and probabilities and
statistics written with 9 decimals.  The echoed RunSpec keeps full float precision
so that it re-parses to the same run.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import re
import sys
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__, causal, experiments, stats
from .errors import CccError
from .joint import JointDistribution

COMMANDS = ("v", "w", "v-delayed", "chsh", "causal", "toy")
CHSH_EXPERIMENTS = ("v", "w", "v-delayed", "toy")
SETTINGS_PRESETS = ("canonical",)


class SpecError(CccError, ValueError):
    """Invalid command line or config; the message names the offending flag."""


@dataclass(frozen=True)
class RunSpec:
    command: str
    target: str | None = None
    prep: int = 0
    a: float = 0.0
    b: float = 0.0
    source1: int = 0
    source2: int = 0
    postselect: int | None = None
    constrain: int | None = None
    settings: tuple[float, float, float, float] | str | None = None
    constrained: bool = False
    clamp: tuple[str, Any] | None = None
    do: tuple[tuple[str, Any], ...] = ()
    classify: tuple[str, str, str, Any] | None = None
    flip_rate: tuple[str, Any, Any] | None = None
    flip_target: str = "B"
    trials: int | None = None
    seed: int | None = None
    exact: bool = True
    format: str = "json"
    out: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunSpec":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise SpecError(f"unknown config keys: {sorted(unknown)}")
        data = dict(data)
        for key in ("clamp", "classify", "flip_rate"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        if isinstance(data.get("settings"), list):
            data["settings"] = tuple(float(x) for x in data["settings"])
        data["do"] = tuple(tuple(x) for x in data.get("do", ()))
        return validate(cls(**data))

    def to_argv(self) -> list[str]:
        argv = [self.command] + ([self.target] if self.target is not None else [])
        for name in ("prep", "a", "b", "source1", "source2", "postselect", "constrain"):
            value = getattr(self, name)
            if value is not None and value != getattr(RunSpec, name):
                argv += [f"--{name}", repr(value)]
        if self.settings is not None:
            s = self.settings
            argv += ["--settings", s if isinstance(s, str) else ",".join(map(repr, s))]
        if self.constrained:
            argv.append("--constrained")
        if self.clamp:
            argv += ["--clamp", _assignment_text(self.clamp)]
        for pair in self.do:
            argv += ["--do", _assignment_text(pair)]
        if self.classify:
            x, y, c, v = self.classify
            argv += ["--classify", f"{x},{y},{c}={v}"]
        if self.flip_rate:
            argv += ["--flip-rate", ":".join(map(str, self.flip_rate))]
        if self.flip_target != "B":
            argv += ["--target", self.flip_target]
        if self.trials is not None:
            argv += ["--trials", str(self.trials), "--seed", str(self.seed)]
        else:
            argv.append("--exact")
            if self.seed is not None:
                argv += ["--seed", str(self.seed)]
        argv += ["--format", self.format]
        if self.out:
            argv += ["--out", self.out]
        return argv


# -- parsing -------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise SpecError(message)


def _scalar(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def _assignment(text: str) -> tuple[str, Any]:
    node, sep, value = text.partition("=")
    if not sep or not node or not value:
        raise argparse.ArgumentTypeError(f"expected NODE=VALUE, got {text!r}")
    return node, _scalar(value)


def _assignment_text(pair) -> str:
    return f"{pair[0]}={pair[1]}"


def _bell_index(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"BellIndex must be an integer 0..3, got {text!r}") from None
    if not 0 <= value <= 3:
        raise argparse.ArgumentTypeError(f"BellIndex out of range: {value} (expected 0..3)")
    return value


def _angle(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"angle must be a real number of radians, got {text!r}") from None
    if not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"angle must be finite, got {text!r}")
    return value


def _settings(text: str):
    if text in SETTINGS_PRESETS:
        return text
    parts = text.split(",")
    if len(parts) != 4:
        raise argparse.ArgumentTypeError("settings must be 'canonical' or four radians a,a',b,b'")
    return tuple(_angle(p) for p in parts)


def _classify(text: str):
    parts = text.split(",")
    if len(parts) != 3:
        raise argparse.ArgumentTypeError(f"expected X,Y,COLLIDER=VALUE, got {text!r}")
    node, value = _assignment(parts[2])
    return parts[0], parts[1], node, value


def _flip(text: str):
    parts = text.split(":")
    if len(parts) != 3 or not parts[0]:
        raise argparse.ArgumentTypeError(f"expected NODE:FROM:TO, got {text!r}")
    return parts[0], _scalar(parts[1]), _scalar(parts[2])


def _seed(text: str) -> int:
    value = int(text)
    if not 0 <= value < 1 << 64:
        raise argparse.ArgumentTypeError(f"seed must be a 64-bit unsigned integer, got {text}")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {text}")
    return value


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    g = common.add_argument_group("global")
    g.add_argument("--seed", type=_seed)
    g.add_argument("--trials", type=_positive)
    g.add_argument("--exact", action="store_true")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--out")

    def wings(p):
        p.add_argument("--a", type=_angle, default=0.0)
        p.add_argument("--b", type=_angle, default=0.0)

    def w_flags(p):
        p.add_argument("--source1", type=_bell_index, default=0)
        p.add_argument("--source2", type=_bell_index, default=0)
        mode = p.add_mutually_exclusive_group()
        mode.add_argument("--postselect", type=_bell_index)
        mode.add_argument("--constrain", type=_bell_index)

    parser = _Parser(prog="ccc", description="Bell experiments, postselection and constrained colliders.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    p = sub.add_parser("v", parents=[common], help="two-particle Bell experiment")
    wings(p)
    p.add_argument("--prep", type=_bell_index, default=0)
    p = sub.add_parser("w", parents=[common], help="entanglement swapping with a later Bell measurement M")
    wings(p)
    w_flags(p)
    p = sub.add_parser("v-delayed", parents=[common], help="random preparation recorded later as D")
    wings(p)
    p.add_argument("--postselect", type=_bell_index, help="condition on D")
    p = sub.add_parser("chsh", parents=[common], help="CHSH value of an experiment family")
    p.add_argument("target", choices=CHSH_EXPERIMENTS)
    p.add_argument("--prep", type=_bell_index, default=0)
    w_flags(p)
    p.add_argument("--settings", type=_settings, default="canonical")
    p.add_argument("--constrained", action="store_true")
    p = sub.add_parser("causal", parents=[common], help="query a discrete causal model")
    p.add_argument("target", metavar="MODEL", help="'ivy' or a JSON model file")
    p.add_argument("--clamp", type=_assignment)
    p.add_argument("--do", type=_assignment, action="append", default=[])
    p.add_argument("--classify", type=_classify)
    p.add_argument("--flip-rate", type=_flip)
    p.add_argument("--target", dest="flip_target", default="B")
    p = sub.add_parser("toy", parents=[common], help="classical postselection toy model")
    p.add_argument("target", choices=("dces",))
    p.add_argument("--a", type=_angle, default=0.0)
    p.add_argument("--b", type=_angle, default=0.0)
    p.add_argument("--constrained", action="store_true")
    p.add_argument("--flip-rate", type=_flip)
    p.add_argument("--target", dest="flip_target", default="B")
    return parser


def validate(spec: RunSpec) -> RunSpec:
    if spec.command not in COMMANDS:
        raise SpecError(f"unknown command {spec.command!r}; expected one of {', '.join(COMMANDS)}")
    for name in ("prep", "source1", "source2", "postselect", "constrain"):
        value = getattr(spec, name)
        if value is not None and not (isinstance(value, int) and 0 <= value <= 3):
            raise SpecError(f"--{name}: BellIndex out of range: {value!r} (expected 0..3)")
    if spec.postselect is not None and spec.constrain is not None:
        raise SpecError("--postselect and --constrain are mutually exclusive")
    if spec.command == "v-delayed" and spec.constrain is not None:
        raise SpecError("--constrain: not available for v-delayed (use --postselect on D)")
    if spec.trials is not None and spec.seed is None:
        raise SpecError("--seed: required when --trials is given")
    if spec.trials is not None and spec.exact:
        raise SpecError("--exact and --trials are mutually exclusive")
    if spec.format not in ("json", "csv"):
        raise SpecError(f"--format: expected json or csv, got {spec.format!r}")
    return spec


def parse(argv: Sequence[str]) -> RunSpec:
    """Validated RunSpec from command-line arguments or ``--config FILE``."""
    argv = list(argv)
    if argv and argv[0] == "run":
        argv = argv[1:]
    if "--config" in argv:
        i = argv.index("--config")
        if i + 1 >= len(argv):
            raise SpecError("--config: expected a file path")
        try:
            data = json.loads(Path(argv[i + 1]).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise SpecError(f"--config: cannot read {argv[i + 1]!r}: {exc}") from None
        spec = RunSpec.from_dict(data.get("spec", data))
        extra = _Parser(prog="ccc --config", add_help=False)
        extra.add_argument("--format", choices=("json", "csv"))
        extra.add_argument("--out")
        ns = extra.parse_args(argv[:i] + argv[i + 2 :])
        return validate(replace(spec, **{k: v for k, v in vars(ns).items() if v is not None}))
    ns = _build_parser().parse_args(argv)
    if ns.trials is not None and ns.exact:
        raise SpecError("--exact and --trials are mutually exclusive")
    values = vars(ns)
    values["exact"] = ns.trials is None
    values["do"] = tuple(values.get("do") or ())
    known = {f.name for f in fields(RunSpec)}
    return validate(RunSpec(**{k: v for k, v in values.items() if k in known}))


# -- execution ------------------------------------------------------------------------


def _fixed(x: float) -> str:
    s = f"{float(x):.9f}"
    return "0.000000000" if s == "-0.000000000" else s


def _value_text(v) -> str:
    return _fixed(v) if isinstance(v, float) else str(v)


def _joint_rows(joint: JointDistribution, prefix: str = "") -> list[dict]:
    return [
        {"outcome": prefix + ",".join(f"{n}={_value_text(v)}" for n, v in zip(joint.variables, outcome)), "p": float(p)}
        for outcome, p in joint.items()
    ]


@dataclass
class Report:
    spec: RunSpec
    joint: list[dict]
    stats: dict
    records: list[experiments.RunRecord] | None = None
    table: JointDistribution | None = None

    def to_dict(self) -> dict:
        return {
            "spec": self.spec.to_dict(),
            "joint": self.joint,
            "stats": self.stats,
            "provenance": {"version": __version__, "seed": self.spec.seed},
        }


_MARK = "@@fixed:"
_MARK_RE = re.compile('"' + _MARK + r'(-?[0-9]+\.[0-9]+)"')


def _mark_floats(obj):
    if isinstance(obj, bool) or obj is None:
        return obj
    if isinstance(obj, float):
        return _MARK + _fixed(obj)
    if isinstance(obj, dict):
        return {k: _mark_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_mark_floats(v) for v in obj]
    return obj


def render_json(report: Report) -> str:
    body = report.to_dict()
    body = {
        "spec": body["spec"],
        "joint": _mark_floats(body["joint"]),
        "stats": _mark_floats(body["stats"]),
        "provenance": body["provenance"],
    }
    return _MARK_RE.sub(r"\1", json.dumps(body, indent=2, ensure_ascii=False)) + "\n"


CSV_COLUMNS = ("trial", "a", "b", "A", "B", "M", "D", "accepted", "weight")


def render_csv(report: Report) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if report.records is not None:
        w.writerow(CSV_COLUMNS)
        for r in report.records:
            w.writerow(
                [
                    r.trial,
                    _fixed(r.a),
                    _fixed(r.b),
                    r.A,
                    r.B,
                    "" if r.M is None else r.M,
                    "" if r.D is None else r.D,
                    "true" if r.accepted else "false",
                    _fixed(r.weight),
                ]
            )
    else:
        w.writerow(["outcome", "p"])
        for row in report.joint:
            w.writerow([row["outcome"], _fixed(row["p"])])
    return buf.getvalue()


def render(report: Report) -> str:
    return render_csv(report) if report.spec.format == "csv" else render_json(report)


def _experiment_config(spec: RunSpec, a: float, b: float):
    if spec.command == "v" or (spec.command == "chsh" and spec.target == "v"):
        return experiments.VConfig(spec.prep, a, b)
    if spec.command == "v-delayed" or (spec.command == "chsh" and spec.target == "v-delayed"):
        return experiments.DelayedVConfig(a, b)
    if spec.constrain is not None:
        mode = experiments.ConstrainTo(spec.constrain)
    elif spec.postselect is not None:
        mode = experiments.PostselectOn(spec.postselect)
    else:
        mode = experiments.Unconstrained()
    return experiments.WConfig(a, b, spec.source1, spec.source2, mode)


def _reported_family(spec: RunSpec, cfg):
    """(a, b) -> the (A, B)-level joint this run reports."""
    fam = experiments.family(cfg)
    if isinstance(cfg, experiments.DelayedVConfig) and spec.postselect is not None:
        return lambda a, b: stats.condition(fam(a, b), "D", spec.postselect)
    return fam


def _membership_family(cfg):
    """(a, b) -> joint over (A, B, M) used for selection sensitivity, or None."""
    if not isinstance(cfg, experiments.WConfig):
        return None, None
    if isinstance(cfg.mode, experiments.ConstrainTo):
        m = cfg.mode.m
        fam = experiments.family(cfg)
        return (lambda a, b: fam(a, b).with_constant("M", experiments.BELL, m)), m
    m = cfg.mode.m if isinstance(cfg.mode, experiments.PostselectOn) else 0
    return experiments.family(replace(cfg, mode=experiments.Unconstrained())), m


def _run_experiment(spec: RunSpec) -> Report:
    cfg = _experiment_config(spec, spec.a, spec.b)
    fam = _reported_family(spec, cfg)
    out: dict[str, Any] = {}
    records = None
    if spec.exact:
        joint = fam(spec.a, spec.b)
        out["E"] = stats.correlator(joint)
        out["no_signaling_gap"] = stats.no_signaling_gap(fam)
        mfam, m = _membership_family(cfg)
        if mfam is not None:
            out["selection_sensitivity"] = stats.selection_sensitivity(mfam, m, stats.DEFAULT_GRID, stats.DEFAULT_GRID)
    else:
        cols = experiments.sample_columns(cfg, spec.trials, spec.seed)
        joint = experiments.sampled_joint(cfg, cols)
        if isinstance(cfg, experiments.DelayedVConfig) and spec.postselect is not None:
            joint = stats.condition(joint, "D", spec.postselect)
        out["E"] = stats.correlator(joint)
        out["trials"] = int(spec.trials)
        out["accepted"] = int(cols["accepted"].sum())
        records = experiments._records(cfg, cols)
    return Report(spec, _joint_rows(joint), out, records=records)


def _toy_family(spec: RunSpec):
    def evaluate(a, b):
        return causal.scm_joint(causal.toy_dces(a, b, spec.constrained)).restrict("M", causal.ACCEPT).marginal("A", "B")

    return evaluate


def _chsh_settings(spec: RunSpec) -> stats.ChshSettings:
    if spec.settings is None or spec.settings == "canonical":
        index = 0
        if spec.target == "v":
            index = spec.prep
        elif spec.target in ("w", "v-delayed"):
            index = spec.constrain if spec.constrain is not None else (spec.postselect or 0)
        return stats.canonical_settings(index)
    return stats.ChshSettings(*spec.settings)


def _run_chsh(spec: RunSpec) -> Report:
    s = _chsh_settings(spec)
    pairs = ((s.a, s.b), (s.a, s.b_prime), (s.a_prime, s.b), (s.a_prime, s.b_prime))
    if spec.target == "toy":
        fam = _toy_family(spec)
    else:
        fam = _reported_family(spec, _experiment_config(spec, 0.0, 0.0))
    if spec.exact:
        joints = [fam(a, b).marginal("A", "B") for a, b in pairs]
    else:
        if spec.target == "toy":
            joints = []
            for k, (a, b) in enumerate(pairs):
                model = causal.toy_dces(a, b, spec.constrained)
                cols = causal.sample_scm(model, spec.trials, spec.seed, stream=k)
                if not spec.constrained:
                    cols["accepted"] = cols["M"] == 0
                joints.append(causal.sampled_joint(model, cols).marginal("A", "B"))
        else:
            joints = []
            for k, (a, b) in enumerate(pairs):
                cfg = _experiment_config(spec, a, b)
                cols = experiments.sample_columns(cfg, spec.trials, spec.seed, stream=k)
                joint = experiments.sampled_joint(cfg, cols)
                if isinstance(cfg, experiments.DelayedVConfig) and spec.postselect is not None:
                    joint = stats.condition(joint, "D", spec.postselect)
                joints.append(joint.marginal("A", "B"))
    terms = [stats.correlator(j) for j in joints]
    rows = []
    for (a, b), j in zip(pairs, joints):
        rows += _joint_rows(j, prefix=f"a={_fixed(a)},b={_fixed(b)},")
    out = {
        "E": terms[0],
        "E_terms": terms,
        "S": terms[0] - terms[1] + terms[2] + terms[3],
        "settings": list(s.as_tuple()),
    }
    if spec.exact:
        out["no_signaling_gap"] = stats.no_signaling_gap(fam, (s.a, s.a_prime), (s.b, s.b_prime))
    return Report(spec, rows, out)


def _load_model(spec: RunSpec) -> causal.DiscreteScm:
    if spec.target == "ivy":
        return causal.ivy_scm()
    try:
        data = json.loads(Path(spec.target).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise SpecError(f"MODEL: cannot read {spec.target!r}: {exc}") from None
    return causal.model_from_dict(data)


def _marginals(joint: JointDistribution) -> dict:
    return {
        n: {_value_text(v): float(p) for (v,), p in joint.marginal(n).items()}
        for n in joint.variables
    }


def _model_report(spec: RunSpec, scm: causal.DiscreteScm, out: dict) -> Report:
    model = causal.intervene_all(scm, dict(spec.do))
    if spec.exact:
        joint = causal.scm_joint(model)
    else:
        cols = causal.sample_scm(model, spec.trials, spec.seed)
        joint = causal.sampled_joint(model, cols)
        out["trials"] = int(spec.trials)
        out["accepted"] = int(cols["accepted"].sum())
    out = {"marginals": _marginals(joint), **out}
    return Report(spec, _joint_rows(joint), out)


def _verdict_stats(v: causal.CccVerdict) -> dict:
    return {
        "verdict": v.verdict.value,
        "dependence": v.dependence,
        "interventional_dependence": v.interventional_dependence,
        "selection_sensitivity": v.selection_sensitivity,
    }


def _run_causal(spec: RunSpec) -> Report:
    scm = _load_model(spec)
    if spec.clamp:
        scm = causal.clamp(scm, causal.Constraint(*spec.clamp))
    out: dict[str, Any] = {}
    if spec.classify:
        out.update(_verdict_stats(causal.classify_ccc(scm, *spec.classify)))
    if spec.flip_rate:
        x, x_from, x_to = spec.flip_rate
        out["flip_rate"] = causal.counterfactual_flip_rate(scm, x, x_from, x_to, spec.flip_target)
    return _model_report(spec, scm, out)


def _run_toy(spec: RunSpec) -> Report:
    scm = causal.toy_dces(spec.a, spec.b, spec.constrained)
    out: dict[str, Any] = {}
    unclamped = causal.scm_joint(scm.unclamped())
    out["acceptance"] = unclamped.prob(M=causal.ACCEPT)
    post = causal.scm_joint(scm).restrict("M", causal.ACCEPT).marginal("A", "B")
    out["E"] = stats.correlator(post)
    out["E_unconditioned"] = stats.correlator(unclamped.marginal("A", "B"))
    out.update(_verdict_stats(causal.classify_ccc(scm, "A", "B", "M", causal.ACCEPT)))
    if spec.flip_rate:
        x, x_from, x_to = spec.flip_rate
        if x in ("a", "b"):
            x_from, x_to = float(x_from), float(x_to)
            base = {"a": spec.a, "b": spec.b}
            base[x] = sorted({x_from, x_to})
            model = causal.toy_dces(base["a"], base["b"], spec.constrained)
        else:
            model = scm
        out["flip_rate"] = causal.counterfactual_flip_rate(model, x, x_from, x_to, spec.flip_target)
    return _model_report(spec, scm, out)


def execute(spec: RunSpec) -> Report:
    """Dispatch a validated RunSpec to the experiment, statistics or causal modules."""
    if spec.command in ("v", "w", "v-delayed"):
        return _run_experiment(spec)
    if spec.command == "chsh":
        return _run_chsh(spec)
    if spec.command == "causal":
        return _run_causal(spec)
    if spec.command == "toy":
        return _run_toy(spec)
    raise SpecError(f"unknown command {spec.command!r}")


def main(argv: Sequence[str] | None = None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        spec = parse(argv)
    except SpecError as exc:
        print(f"ccc: error: {exc}", file=sys.stderr)
        return 2
    try:
        text = render(execute(spec))
    except CccError as exc:
        print(f"ccc: error: {exc}", file=sys.stderr)
        return 1
    if spec.out:
        Path(spec.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
