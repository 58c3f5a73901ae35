"""Command-line front end: ``lrtcorrect <subcommand> ...``.

Exit status is 0 on success, 2 on a usage error and 1 on any runtime failure.
"""

from __future__ import annotations

import argparse
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .bounds import fit_tsybakov
from .core import LrtError, ParameterError, SchemaError, TransitionMatrix, compose_noisy_conditional, make_pair_flip, make_uniform_flip
from .experiment import ExperimentConfig, apply_overrides, resolve_delta, run_bounds_experiment
from .io import (
    check_results_document,
    load_config,
    read_dataset,
    read_json,
    read_sidecar,
    results_document,
    write_dataset,
    write_json,
    write_plot_data,
    write_sidecar,
    atomic_write_text,
)
from .lrt import delta_sensitivity, delta_specificity, lrt_correct_dataset
from .noise import inject_noise, noise_summary
from .rng import ALGORITHM, RandomSource
from .synth import GENERATOR_VERSION, GaussianMixtureSpec, bayes_labels, exact_eta, sample_dataset
from .train import AdaCorrConfig, TrainingDiverged, load_checkpoint, save_checkpoint, train_adacorr, train_standard

SUBCOMMANDS = ("synth-gen", "inject-noise", "fit-tsybakov", "lrt-correct", "eval-bounds", "adacorr", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


# -- helpers ----------------------------------------------------------------------


def _mixture_from_meta(meta, path) -> GaussianMixtureSpec:
    if not meta or "spec" not in meta:
        raise ParameterError(f"{path}: sidecar metadata with the mixture spec is required for oracle models")
    return GaussianMixtureSpec.from_dict(meta["spec"])


def _tau_from_meta(meta, path) -> TransitionMatrix:
    if not meta or "noise" not in meta:
        raise ParameterError(f"{path}: sidecar metadata with the transition matrix is required")
    return TransitionMatrix.from_dict(meta["noise"]["tau"])


def _plot_name(stem: Path, *parts: str) -> Path:
    return stem.with_name(".".join([stem.name, *parts, "dat"]))


def _parse_hidden(text: str) -> tuple:
    try:
        widths = tuple(int(w) for w in text.split(",") if w.strip())
    except ValueError:
        raise UsageError(f"--hidden expects comma-separated integers, got {text!r}") from None
    if not widths or min(widths) < 1:
        raise UsageError("--hidden needs at least one positive width")
    return widths


# -- subcommands ------------------------------------------------------------------


def cmd_synth_gen(args) -> None:
    if args.spec:
        spec = GaussianMixtureSpec.from_dict(read_json(args.spec))
    elif args.one_hot:
        spec = GaussianMixtureSpec.one_hot(args.one_hot, args.scale, args.dim)
    else:
        spec = GaussianMixtureSpec.paper_mixture(10 if args.dim is None else args.dim)
    data = sample_dataset(spec, args.n, RandomSource(args.seed), first_id=args.first_id)
    data = bayes_labels(exact_eta(spec), data)
    write_dataset(args.out, data)
    write_sidecar(
        args.out,
        {
            "tool_version": __version__,
            "generator_version": GENERATOR_VERSION,
            "rng_algorithm": ALGORITHM,
            "spec": spec.to_dict(),
            "n": data.n,
            "n_classes": spec.n_classes,
            "first_id": args.first_id,
            "seeds": {"synth": args.seed},
        },
    )


def cmd_inject_noise(args) -> None:
    data = read_dataset(args.input)
    if args.tau:
        tau = TransitionMatrix.from_dict(read_json(args.tau))
    elif args.uniform is not None:
        tau = make_uniform_flip(data.n_classes, args.uniform)
    elif args.pair is not None:
        tau = make_pair_flip(data.n_classes, args.pair)
    else:
        tau = TransitionMatrix.binary(*args.binary)
    noisy = inject_noise(data, tau, RandomSource(args.seed))
    meta = dict(read_sidecar(args.input) or {})
    meta["tool_version"] = __version__
    meta["rng_algorithm"] = ALGORITHM
    meta["n_classes"] = noisy.n_classes
    meta["noise"] = {"tau": tau.to_dict(), "counts": noise_summary(noisy).tolist()}
    meta["seeds"] = dict(meta.get("seeds", {}), noise=args.seed)
    if violations := tau.dominance_violations():
        print(f"warning: tau is not diagonally dominant at {violations}", file=sys.stderr)
    write_dataset(args.out, noisy)
    write_sidecar(args.out, meta)


def cmd_fit_tsybakov(args) -> None:
    data = read_dataset(args.data)
    meta = read_sidecar(args.data)
    eta = exact_eta(_mixture_from_meta(meta, args.data))
    fit = fit_tsybakov(
        eta,
        data,
        t_min=args.t_min,
        t_max=args.t_max,
        n_grid=args.n_grid,
        mode=args.mode,
        t0=args.t0,
        drop_saturated=not args.keep_saturated,
    )
    config = {
        "data": str(args.data),
        "t_min": args.t_min,
        "t_max": args.t_max,
        "n_grid": args.n_grid,
        "mode": fit.mode,
        "t0": args.t0,
        "drop_saturated": not args.keep_saturated,
        "data_meta": meta,
    }
    write_json(args.out, results_document("fit", config, (meta or {}).get("seeds", {}), {"fit": fit.to_dict()}))
    if args.plot:
        keep = fit.p_t > 0
        write_plot_data(args.plot, fit.t_grid[keep], fit.p_t[keep], ("t", "p_t"))


def _load_model(spec_text: str, data, meta, path):
    if spec_text == "oracle-eta":
        return exact_eta(_mixture_from_meta(meta, path))
    if spec_text == "oracle-eta-tilde":
        return compose_noisy_conditional(exact_eta(_mixture_from_meta(meta, path)), _tau_from_meta(meta, path))
    if spec_text.startswith("checkpoint:"):
        return load_checkpoint(spec_text.split(":", 1)[1])
    raise UsageError(f"--model must be oracle-eta, oracle-eta-tilde or checkpoint:<path>, got {spec_text!r}")


def _delta_arg(text: str):
    if text in ("thm-sensitivity", "thm-specificity", "binary-corollary"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or a critical-value name, got {text!r}") from None


def cmd_lrt_correct(args) -> None:
    data = read_dataset(args.data)
    meta = read_sidecar(args.data)
    f = _load_model(args.model, data, meta, args.data)
    if f.n_classes != data.n_classes:
        raise ParameterError("model and dataset disagree on the number of classes")
    critical = {}
    eta = tau = None
    if meta and "spec" in meta and "noise" in meta:
        eta = exact_eta(_mixture_from_meta(meta, args.data))
        tau = _tau_from_meta(meta, args.data)
        critical["thm_sensitivity"] = delta_sensitivity(eta, tau, f, data)
        try:
            # informational here; the warning is raised again if it is used as delta
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                critical["thm_specificity"] = delta_specificity(eta, tau, f, data)
        except LrtError as exc:
            critical["thm_specificity"] = None
            print(f"warning: {exc}", file=sys.stderr)
    if isinstance(args.delta, str):
        if eta is None and args.delta != "binary-corollary":
            raise ParameterError(f"delta {args.delta!r} needs the mixture spec and tau in the sidecar")
        tau = tau if tau is not None else _tau_from_meta(meta, args.data)
        delta = resolve_delta(args.delta, None, eta, tau, f, data)
    else:
        delta = args.delta
    corrected, report = lrt_correct_dataset(data, f, delta)
    if args.out:
        write_dataset(args.out, corrected)
        out_meta = dict(meta or {}, tool_version=__version__, n_classes=corrected.n_classes)
        out_meta["correction"] = {"model": args.model, "delta": report.delta_used}
        write_sidecar(args.out, out_meta)
    if args.report:
        payload = {"correction": dict(report.summary(), delta_requested=args.delta, critical_values=critical)}
        if corrected.bayes_labels is not None:
            payload["correction"]["correction_error"] = float(np.mean(corrected.noisy_labels != corrected.bayes_labels))
        config = {"data": str(args.data), "model": args.model, "delta": args.delta, "data_meta": meta}
        write_json(args.report, results_document("correction", config, (meta or {}).get("seeds", {}), payload))
    print(f"flipped {report.n_flipped} of {data.n} labels at delta={report.delta_used:.6g}")


def cmd_eval_bounds(args) -> None:
    doc = apply_overrides(load_config(args.config), args.set)
    cfg = ExperimentConfig.from_dict(doc)
    payload = run_bounds_experiment(cfg)
    write_json(args.out, results_document("bounds", cfg.to_dict(), cfg.seeds(), payload))
    if args.plot:
        _write_bound_curves(Path(args.plot), payload["records"])


def _write_bound_curves(stem: Path, records) -> None:
    for kind in dict.fromkeys(r["bound_kind"] for r in records):
        rows = [r for r in records if r["bound_kind"] == kind]
        eps = [r["epsilon"] for r in rows]
        write_plot_data(_plot_name(stem, kind, "bound"), eps, [r["bound_value"] for r in rows], ("epsilon", "bound"))
        write_plot_data(_plot_name(stem, kind, "empirical"), eps, [r["empirical_value"] for r in rows], ("epsilon", "empirical"))


def cmd_adacorr(args) -> None:
    fields = {}
    if args.config:
        fields.update(load_config(args.config).get("train", {}))
    for name, value in (
        ("epochs", args.epochs),
        ("burn_in", args.burn_in),
        ("delta", args.delta),
        ("lr", args.lr),
        ("batch_size", args.batch),
        ("hidden", args.hidden),
        ("seed", args.seed),
    ):
        if value is not None:
            fields[name] = value
    if "seed" not in fields:
        raise UsageError("adacorr: error: --seed is required (or a [train] seed in --config)")
    if args.no_lr_decay:
        fields["lr_halve_every"] = None
    config = AdaCorrConfig(**fields)
    train = read_dataset(args.train)
    test = read_dataset(args.test, n_classes=train.n_classes)
    runner = train_standard if args.plain else train_adacorr
    try:
        model, trace, corrected = runner(train, test, config)
    except TrainingDiverged as exc:
        if args.trace:
            atomic_write_text(args.trace, exc.trace.to_csv())
        raise
    if args.trace:
        atomic_write_text(args.trace, trace.to_csv())
    if args.corrected:
        write_dataset(args.corrected, corrected)
        meta = dict(read_sidecar(args.train) or {}, tool_version=__version__)
        meta["adacorr"] = config.to_dict()
        write_sidecar(args.corrected, meta)
    if args.checkpoint:
        save_checkpoint(model, args.checkpoint)
    if args.results:
        run_config = {"train": str(args.train), "test": str(args.test), "plain": args.plain, "adacorr": config.to_dict()}
        payload = {"trace": [vars(r) for r in trace.records]}
        write_json(args.results, results_document("adacorr", run_config, {"train": config.seed}, payload))
    last = trace.records[-1]
    print(f"epoch {last.epoch}: test_acc_clean={last.test_acc_clean:.4f} frac_labels_bayes={last.frac_labels_bayes:.4f}")


# -- report -----------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return "-"
    if isinstance(v, bool):
        return "yes" if v else "no"
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _table(headers, rows) -> list[str]:
    cells = [[_fmt(v) for v in row] for row in rows]
    widths = [max(len(h), *(len(c[i]) for c in cells)) if cells else len(h) for i, h in enumerate(headers)]
    line = lambda vals: "  ".join(v.rjust(w) for v, w in zip(vals, widths))
    return [line(headers), line(["-" * w for w in widths])] + [line(c) for c in cells]


def report(docs, plot_stem=None) -> str:
    """Render results documents as text tables; optionally write per-curve plot files."""
    out = []
    for name, doc in docs:
        check_results_document(doc)
        kind = doc["kind"]
        out.append(f"== {name} ({kind}, tool {doc.get('tool_version', '?')}) ==")
        fit = doc.get("fit")
        if fit is not None:
            for key in ("C", "lambda", "r_squared", "p_value", "n_used"):
                if key not in fit:
                    raise SchemaError(f"{name}: fit record missing field {key!r}")
            out += _table(["C", "lambda", "R2", "p_value", "n_used"], [[fit["C"], fit["lambda"], fit["r_squared"], fit["p_value"], fit["n_used"]]])
        if kind == "bounds":
            rows = []
            for r in doc.get("records", []):
                for key in ("epsilon", "bound_kind", "bound_value", "empirical_value", "validity_flag"):
                    if key not in r:
                        raise SchemaError(f"{name}: bounds record missing field {key!r}")
                rows.append([r["epsilon"], r["bound_kind"], r["bound_value"], r["empirical_value"], r["validity_flag"], r["empirical_value"] <= r["bound_value"]])
            out += _table(["epsilon", "kind", "bound", "empirical", "valid", "DOMINATED"], rows)
            if plot_stem is not None:
                _write_bound_curves(Path(f"{plot_stem}.{Path(name).stem}"), doc["records"])
        elif kind == "correction":
            c = doc.get("correction")
            if c is None:
                raise SchemaError(f"{name}: correction document missing field 'correction'")
            out += _table(["n", "n_flipped", "delta_used", "agreement_with_bayes"], [[c["n"], c["n_flipped"], c["delta_used"], c["agreement_with_bayes"]]])
        elif kind == "adacorr":
            trace = doc.get("trace")
            if not trace:
                raise SchemaError(f"{name}: adacorr document missing field 'trace'")
            last = trace[-1]
            out += _table(
                ["epoch", "train_acc_current", "test_acc_clean", "frac_labels_bayes"],
                [[last["epoch"], last["train_acc_current"], last["test_acc_clean"], last["frac_labels_bayes"]]],
            )
            if plot_stem is not None:
                ep = [r["epoch"] for r in trace]
                for col in ("train_acc_current", "test_acc_clean", "frac_labels_bayes"):
                    write_plot_data(_plot_name(Path(f"{plot_stem}.{Path(name).stem}"), col), ep, [r[col] for r in trace], ("epoch", col))
        elif kind != "fit":
            raise SchemaError(f"{name}: field 'kind' has unknown value {kind!r}")
        out.append("")
    return "\n".join(out)


def cmd_report(args) -> None:
    docs = [(str(p), read_json(p)) for p in args.inputs]
    text = report(docs, args.plot)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)


# -- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="lrtcorrect", description="Noisy-label correction with a likelihood-ratio test.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", metavar="SUBCOMMAND", parser_class=_Parser)

    s = sub.add_parser("synth-gen", help="sample the Gaussian-mixture benchmark")
    g = s.add_mutually_exclusive_group()
    g.add_argument("--paper-mixture", action="store_true", help="N(0,I) vs N(1,I), equal weights (default)")
    g.add_argument("--one-hot", type=int, metavar="K", help="K components centred at scale * e_i")
    g.add_argument("--spec", help="mixture spec JSON with means and weights")
    s.add_argument("--dim", type=int)
    s.add_argument("--scale", type=float, default=2.0)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--first-id", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(run=cmd_synth_gen)

    s = sub.add_parser("inject-noise", help="corrupt clean labels through a transition matrix")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--uniform", type=float, metavar="RHO")
    g.add_argument("--pair", type=float, metavar="RHO")
    g.add_argument("--binary", type=float, nargs=2, metavar=("TAU_10", "TAU_01"))
    g.add_argument("--tau", help="transition matrix JSON")
    s.set_defaults(run=cmd_inject_noise)

    s = sub.add_parser("fit-tsybakov", help="estimate the margin constants C and lambda")
    s.add_argument("--data", required=True)
    s.add_argument("--t-min", type=float, default=0.01)
    s.add_argument("--t-max", type=float, default=0.9)
    s.add_argument("--n-grid", type=int, default=30)
    s.add_argument("--mode", choices=("auto", "binary", "multiclass"), default="auto")
    s.add_argument("--t0", type=float)
    s.add_argument("--keep-saturated", action="store_true", help="keep grid points where every sample is inside the band")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="two-column (t, p_t) file")
    s.set_defaults(run=cmd_fit_tsybakov)

    s = sub.add_parser("lrt-correct", help="correct labels with the likelihood-ratio test")
    s.add_argument("--data", required=True)
    s.add_argument("--delta", type=_delta_arg, required=True, help="number, thm-sensitivity, thm-specificity or binary-corollary")
    s.add_argument("--model", default="oracle-eta-tilde", help="oracle-eta-tilde, oracle-eta or checkpoint:<path>")
    s.add_argument("--out")
    s.add_argument("--report")
    s.set_defaults(run=cmd_lrt_correct)

    s = sub.add_parser("eval-bounds", help="empirical errors against the closed-form bounds")
    s.add_argument("--config", required=True)
    s.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", help="override a config field")
    s.add_argument("--out", required=True)
    s.add_argument("--plot", help="stem for two-column curve files")
    s.set_defaults(run=cmd_eval_bounds)

    s = sub.add_parser("adacorr", help="train an MLP with adaptive label correction")
    s.add_argument("--train", required=True)
    s.add_argument("--test", required=True)
    s.add_argument("--config", help="TOML/JSON config; its [train] section supplies defaults")
    s.add_argument("--epochs", type=int)
    s.add_argument("--burn-in", type=int)
    s.add_argument("--delta", type=float)
    s.add_argument("--lr", type=float)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--hidden", type=_parse_hidden)
    s.add_argument("--no-lr-decay", action="store_true")
    s.add_argument("--plain", action="store_true", help="cross-entropy only, no correction")
    s.add_argument("--trace")
    s.add_argument("--corrected")
    s.add_argument("--checkpoint")
    s.add_argument("--results", help="results document with the full trace")
    s.set_defaults(run=cmd_adacorr)

    s = sub.add_parser("report", help="summarize results documents")
    s.add_argument("inputs", nargs="+")
    s.add_argument("--out")
    s.add_argument("--plot", help="stem for plot-data files")
    s.set_defaults(run=cmd_report)
    return p


def run_subcommand(argv) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().rstrip() + "\nlrtcorrect: error: a subcommand is required")
        args.run(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    except (LrtError, OSError, ValueError, KeyError) as exc:
        print(f"lrtcorrect: error: {exc}", file=sys.stderr)
        return 1
    return 0


def main(argv=None) -> int:
    return run_subcommand(sys.argv[1:] if argv is None else argv)


if __name__ == "__main__":
    sys.exit(main())
