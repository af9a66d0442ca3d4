"""Command-line interface: ``riskcp {decide,evaluate,oracle,synth,sweep}``.

Exit codes: 0 success, 2 validation/usage error, 3 I/O error. Set
``RISKCP_LOG`` (e.g. ``INFO``, ``DEBUG``) for log output on stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path

from .core import Dataset, PredictionSet, UsageError, ValidationError
from .evaluation import Decision, evaluate
from .experiment import METHODS, ExperimentConfig, reports_csv, run_experiment, run_method
from .io import DataIOError, iter_jsonl, load_dataset, load_loss_table, read_json, save_dataset, save_loss_table, write_json, write_jsonl, write_text
from .population import coverage_assignment, from_json, interval_condition, oracle_sets
from .rocp import UNIFORM_POINTS
from .synth import DrivingSpec, SynthSpec, driving_loss_table, gen_synthetic

EXIT_OK, EXIT_VALIDATION, EXIT_IO = 0, 2, 3


def _emit(text: str, out: str | None) -> None:
    if out:
        write_text(Path(out), text)
    else:
        sys.stdout.write(text)


def _json_float(x: float | None):
    if x is None or math.isinf(x):
        return None
    return x


def cmd_decide(args) -> int:
    table = load_loss_table(args.loss)
    cal = load_dataset(args.cal, table.labels)
    test = load_dataset(args.test, table.labels)
    if not cal.is_labeled:
        raise ValidationError([f"{args.cal}: every calibration record needs a label"])
    res = run_method(args.method, cal, test, table, args.alpha, args.beta_grid)
    names = table.labels.labels
    lines = []
    for i, d in enumerate(res.decisions):
        rec = {
            "id": d.id,
            "method": args.method,
            "alpha": args.alpha,
            "set": None if d.set is None else d.set.names(table.labels),
            "action": table.actions.actions[d.action],
            "certificate": _json_float(d.certificate),
            "label": None if d.label is None else names[d.label],
        }
        if res.betas is not None:
            rec["betas"] = {n: ("infeasible-at-grid-max" if math.isinf(b) else b) for n, b in zip(names, res.betas[i])}
        lines.append(json.dumps(rec))
    _emit("".join(ln + "\n" for ln in lines), args.out)
    return EXIT_OK


def _read_decisions(path, table) -> tuple[list[Decision], set, set]:
    decisions, methods, alphas = [], set(), set()
    errors = []
    for lineno, obj in iter_jsonl(path):
        where = f"{path}:{lineno}"
        try:
            action = table.actions.index(obj["action"])
            label = obj.get("label")
            if label is None:
                errors.append(f"{where}: missing true label")
                continue
            y = table.labels.index(label)
            names = obj.get("set")
            s = None if names is None else PredictionSet.of(table.n_labels, [table.labels.index(n) for n in names])
        except KeyError as exc:
            errors.append(f"{where}: missing key {exc.args[0]!r}")
            continue
        except (ValidationError, UsageError) as exc:
            errors.append(f"{where}: {exc}")
            continue
        methods.add(obj.get("method", ""))
        if "alpha" in obj:
            alphas.add(obj["alpha"])
        decisions.append(Decision(s, action, y, str(obj.get("id", lineno))))
    if errors:
        raise ValidationError(errors)
    if not decisions:
        raise ValidationError([f"{path}: no decisions"])
    return decisions, methods, alphas


def cmd_evaluate(args) -> int:
    table = load_loss_table(args.loss)
    decisions, methods, alphas = _read_decisions(args.decisions, table)
    alpha = args.alpha
    if alpha is None:
        if len(alphas) != 1:
            raise UsageError("decisions carry no single alpha; pass --alpha")
        alpha = float(alphas.pop())
    method = args.method or (methods.pop() if len(methods) == 1 else "unknown")
    source = METHODS.get(method, ("", ""))[0]
    report = evaluate(decisions, table, alpha, method, source)
    if args.format == "csv":
        _emit(reports_csv([report]), args.out)
    else:
        _emit(json.dumps(report.to_json(), indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_oracle(args) -> int:
    table = load_loss_table(args.loss)
    inst = from_json(read_json(args.population), table, args.alpha)
    assignment = coverage_assignment(inst)
    check = interval_condition(inst, assignment.beta_star)
    sets = oracle_sets(inst, assignment)
    out = {
        "alpha": inst.alpha,
        "beta_star": assignment.beta_star,
        "interval_condition": "holds" if check.holds else "fails",
        "E_g_minus": check.e_g_minus,
        "E_g_plus": check.e_g_plus,
        "expected_t": assignment.expected_t,
        "coverage_slack": assignment.slack,
        "primal_value": assignment.primal_value,
        "dual_value": assignment.dual_value,
        "moved_to_g_plus": [inst.ids[j] for j in assignment.randomized_indices],
        "covariates": [
            {"id": cid, "weight": float(w), "t": t, "set": s.names(table.labels), "action": table.actions.actions[a]}
            for cid, w, (s, a, t) in zip(inst.ids, inst.weights, sets)
        ],
    }
    _emit(json.dumps(out, indent=1) + "\n", args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = SynthSpec(
        task=args.task,
        concentration=args.concentration,
        temperature=args.temperature,
        noise=args.noise,
        driving=DrivingSpec(),
    )
    if args.loss:
        table = load_loss_table(args.loss)
    elif args.task == "driving":
        table = driving_loss_table(spec.driving)
    else:
        table = load_loss_table("builtin:lambda0")
    if table.labels != spec.label_space():
        raise UsageError("loss table labels do not match the synthetic task's labels")
    cal, test, truth = gen_synthetic(spec, args.n_cal, args.n_test, args.seed)
    out = Path(args.out)
    save_dataset(cal, out / "cal.jsonl")
    save_dataset(test, out / "test.jsonl")
    save_loss_table(table, out / "loss.json")
    if args.with_truth:
        write_jsonl(out / "truth.jsonl", (
            {"id": r.id, "probs": [float(x) for x in p]}
            for r, p in zip(cal.records + test.records, truth)
        ))
    print(f"wrote {len(cal)} calibration and {len(test)} test records to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    obj = read_json(args.config) if args.config else {}
    overrides = {
        "loss": args.loss, "cal": args.cal, "test": args.test, "alphas": args.alpha,
        "methods": args.method, "seed": args.seed, "splits": args.splits,
        "uniform_points": args.beta_grid, "out": args.out,
        "formats": [args.format] if args.format else None,
    }
    obj.update({k: v for k, v in overrides.items() if v is not None})
    config = ExperimentConfig.from_json(obj)
    result = run_experiment(config)
    for p in result.paths:
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="riskcp", description=__doc__.splitlines()[0])
    p.add_argument("--error-json", action="store_true", help="print errors as JSON on stderr")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("decide", help="prediction sets and actions for a test file")
    d.add_argument("--loss", required=True)
    d.add_argument("--cal", required=True)
    d.add_argument("--test", required=True)
    d.add_argument("--alpha", type=float, required=True)
    d.add_argument("--method", default="rocp", choices=sorted(METHODS))
    d.add_argument("--beta-grid", type=int, default=UNIFORM_POINTS, help="uniform beta grid size")
    d.add_argument("--out")
    d.add_argument("--format", choices=["json"], default="json")
    d.set_defaults(func=cmd_decide)

    e = sub.add_parser("evaluate", help="metrics for a decisions file")
    e.add_argument("--decisions", required=True)
    e.add_argument("--loss", required=True)
    e.add_argument("--alpha", type=float)
    e.add_argument("--method")
    e.add_argument("--out")
    e.add_argument("--format", choices=["json", "csv"], default="json")
    e.set_defaults(func=cmd_evaluate)

    o = sub.add_parser("oracle", help="solve a known-conditional population instance")
    o.add_argument("--loss", required=True)
    o.add_argument("--population", required=True)
    o.add_argument("--alpha", type=float)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    s = sub.add_parser("synth", help="write synthetic calibration/test files")
    s.add_argument("--task", choices=["dirichlet", "driving"], default="dirichlet")
    s.add_argument("--loss")
    s.add_argument("--n-cal", type=int, default=200)
    s.add_argument("--n-test", type=int, default=1000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--concentration", type=float, default=0.5)
    s.add_argument("--temperature", type=float, default=1.0)
    s.add_argument("--noise", type=float, default=0.0)
    s.add_argument("--with-truth", action="store_true", help="also write true conditionals")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_synth)

    w = sub.add_parser("sweep", help="run a split x alpha x method experiment")
    w.add_argument("--config")
    w.add_argument("--loss")
    w.add_argument("--cal")
    w.add_argument("--test")
    w.add_argument("--alpha", type=float, action="append")
    w.add_argument("--method", action="append", choices=sorted(METHODS))
    w.add_argument("--seed", type=int)
    w.add_argument("--splits", type=int)
    w.add_argument("--beta-grid", type=int)
    w.add_argument("--out")
    w.add_argument("--format", choices=["json", "csv"])
    w.set_defaults(func=cmd_sweep)
    return p


def _fail(args, kind: str, messages: list[str], code: int) -> int:
    if getattr(args, "error_json", False):
        sys.stderr.write(json.dumps({"error": kind, "messages": messages}) + "\n")
    else:
        for m in messages:
            sys.stderr.write(f"riskcp: {kind}: {m}\n")
    return code


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=os.environ.get("RISKCP_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        return _fail(args, "validation", exc.errors, EXIT_VALIDATION)
    except UsageError as exc:
        return _fail(args, "usage", [str(exc)], EXIT_VALIDATION)
    except DataIOError as exc:
        return _fail(args, "io", [str(exc)], EXIT_IO)


if __name__ == "__main__":
    sys.exit(main())
