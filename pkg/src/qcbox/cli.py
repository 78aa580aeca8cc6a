"""``qcbox`` command line: load documents, run one operation, report, and exit 0 (pass), 1 (fail) or 2 (usage/IO)."""

from __future__ import annotations

import functools
import sys
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import serialize
from .causalbox import CausalBox, check_causality, loop_compose, parallel_compose
from .errors import QcboxError
from .extension import (
    Extension,
    ProjectiveExtension,
    grenoble_gate_extension,
    isometric_extension,
    photonic_extension,
    projective_extension,
    verify_extension,
)
from .finegraining import (
    build_decoder,
    build_encoder,
    check_acyclicity,
    extension_locals,
    signalling_transfer,
    verify_finegraining,
)
from .qcqc import born as born_rule
from .qcqc import START, grenoble, process_vector, quantum_switch, validate as validate_qcqc
from .scenarios import GRENOBLE_PSI, SCENARIOS

EXIT_PASS, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


@dataclass
class Config:
    tolerance: float = 1e-10
    truncation: int = 3
    seed: int = 0
    output: Path | None = None


def _positive(ctx, param, value):
    if value is not None and value <= 0:
        raise click.BadParameter("must be positive")
    return value


def _common(f):
    """Options accepted both before and after the command name; the later one wins."""
    f = click.option("--json", "output", type=click.Path(dir_okay=False, path_type=Path), default=None,
                     help="Write the machine-readable report to this file ('-' for stdout).")(f)
    f = click.option("--seed", type=int, default=None, envvar="QCBOX_SEED",
                     help="Seed for randomized checks (falls back to $QCBOX_SEED, then 0).")(f)
    f = click.option("--truncation", type=click.IntRange(min=1), default=None,
                     help="Maximum messages per port (default 3).")(f)
    f = click.option("--tol", type=float, default=None, callback=_positive,
                     help="Numerical tolerance (default 1e-10).")(f)
    return f


def _config(ctx: click.Context, tol, truncation, seed, output) -> Config:
    cfg: Config = ctx.ensure_object(Config)
    if tol is not None:
        cfg.tolerance = tol
    if truncation is not None:
        cfg.truncation = truncation
    if seed is not None:
        cfg.seed = seed
    if output is not None:
        cfg.output = output
    return cfg


def command(name: str, **kwargs):
    """A subcommand with the common options; QC-QC errors and IO errors exit with code 2."""

    def wrap(f):
        @cli.command(name, **kwargs)
        @_common
        @click.pass_context
        @functools.wraps(f)
        def run(ctx, tol, truncation, seed, output, **params):
            cfg = _config(ctx, tol, truncation, seed, output)
            try:
                code = f(cfg, **params)
            except (QcboxError, OSError, ValueError) as err:
                click.echo(f"error: {err}", err=True)
                ctx.exit(EXIT_USAGE)
            ctx.exit(code or EXIT_PASS)

        return run

    return wrap


@click.group()
@_common
@click.pass_context
def cli(ctx, tol, truncation, seed, output):
    """Quantum-controlled circuits, their causal-box extensions and fine-grainings."""
    _config(ctx, tol, truncation, seed, output)


def _emit(cfg: Config, report: dict, summary: str, ok: bool) -> int:
    click.echo(summary)
    if cfg.output is not None:
        text = serialize.dumps(report, "report")
        if str(cfg.output) == "-":
            click.echo(text)
        else:
            cfg.output.write_text(text + "\n")
    return EXIT_PASS if ok else EXIT_FAIL


def _write_doc(obj, out: Path | None, kind: str | None = None) -> None:
    text = serialize.dumps(obj, kind)
    if out is None or str(out) == "-":
        click.echo(text)
    else:
        out.write_text(text + "\n")


def _existing(**kw):
    return click.Path(exists=True, dir_okay=False, path_type=Path, **kw)


def _load_box(path: Path) -> CausalBox:
    doc = serialize.read(path)
    if isinstance(doc, ProjectiveExtension):
        return doc.base.box
    if isinstance(doc, Extension):
        return doc.box
    if isinstance(doc, CausalBox):
        return doc
    raise QcboxError(f"{path} holds neither a causal box nor an extension")


BUILTINS = {"grenoble": lambda: grenoble(GRENOBLE_PSI), "switch": quantum_switch}


# --------------------------------------------------------------------------
# commands


@command("validate")
@click.argument("qcqc_file", type=_existing())
def validate(cfg: Config, qcqc_file: Path) -> int:
    """Check that every assembled slot map of a QC-QC is an isometry."""
    rep = validate_qcqc(serialize.read(qcqc_file, "qcqc"), cfg.tolerance)
    summary = f"{'ok' if rep.ok else 'FAILED'}: max slot deviation {max(rep.slot_deviations):.3g}"
    return _emit(cfg, rep.to_dict(), summary, rep.ok)


@command("process-vector")
@click.option("--qcqc", "qcqc_file", type=_existing(), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def process_vector_cmd(cfg: Config, qcqc_file: Path, out: Path | None) -> int:
    """Write the process vector as a labeled vector document."""
    _write_doc(process_vector(serialize.read(qcqc_file, "qcqc")).vec, out, "vector")
    return EXIT_PASS


@command("born")
@click.option("--qcqc", "qcqc_file", type=_existing(), required=True)
@click.option("--locals", "locals_file", type=_existing(), required=True)
@click.option("--past", "past_file", type=_existing(), default=None,
              help="Past state vector; may be omitted when the past is one-dimensional.")
def born(cfg: Config, qcqc_file: Path, locals_file: Path, past_file: Path | None) -> int:
    """Probability of the given Kraus operators (one per party)."""
    q = serialize.read(qcqc_file, "qcqc")
    ops = serialize.read(locals_file, "local_ops")
    if past_file is None:
        if q.past_dim != 1:
            raise click.UsageError("--past is required when the past is not one-dimensional")
        past = np.ones(1)
    else:
        past = serialize.read(past_file, "vector")
    p = born_rule(q, ops, getattr(past, "entries", past))
    return _emit(cfg, {"probability": p}, repr(p), True)


def _same_ops(a, b, tol: float = 1e-12) -> bool:
    if (a.dims, a.ancilla_dims, a.past_dim, a.future_dim) != (b.dims, b.ancilla_dims, b.past_dim, b.future_dim):
        return False
    return a.ops.keys() == b.ops.keys() and all(np.abs(a.ops[k] - b.ops[k]).max() <= tol for k in a.ops)


EXTENDERS = {
    "isometric": lambda q, n: isometric_extension(q, truncation=n),
    "projective": lambda q, n: projective_extension(q, truncation=n),
    "photonic": lambda q, n: photonic_extension(q, truncation=n),
}


@command("extend")
@click.option("--variant", type=click.Choice(["isometric", "projective", "photonic", "gates"]), required=True)
@click.option("--in", "qcqc_file", type=_existing(), required=True)
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def extend(cfg: Config, variant: str, qcqc_file: Path, out: Path | None) -> int:
    """Build a causal-box extension of a QC-QC."""
    q = serialize.read(qcqc_file, "qcqc")
    if variant == "gates":
        # the gate network is fixed; only the prepared target state varies
        first = q.ops.get((frozenset(), START, 1))
        psi = None if first is None else first[:, 0] * np.sqrt(3)
        if psi is None or not _same_ops(q, grenoble(psi)):
            raise click.UsageError("the gate extension exists only for the three-party grenoble process")
        ext = grenoble_gate_extension(psi, truncation=cfg.truncation)
    else:
        ext = EXTENDERS[variant](q, cfg.truncation)
    _write_doc(ext, out, "extension")
    return EXIT_PASS


@command("verify-extension")
@click.option("--qcqc", "qcqc_file", type=_existing(), default=None,
              help="Process to compare against (defaults to the one stored with the extension).")
@click.option("--cb", "cb_file", type=_existing(), required=True)
@click.option("--trials", type=click.IntRange(min=1), default=50)
def verify_extension_cmd(cfg: Config, qcqc_file: Path | None, cb_file: Path, trials: int) -> int:
    """Compare the extension against the QC-QC on random local operations and past states."""
    ext = serialize.read(cb_file, "extension")
    ext = ext.base if isinstance(ext, ProjectiveExtension) else ext
    q = serialize.read(qcqc_file, "qcqc") if qcqc_file else None
    rep = verify_extension(ext, q, trials=trials, tol=cfg.tolerance, seed=cfg.seed)
    summary = f"{'ok' if rep.ok else 'FAILED'}: max deviation {rep.max_deviation:.3g} over {trials} trials"
    return _emit(cfg, rep.to_dict(), summary, rep.ok)


@command("check-causality")
@click.argument("box_file", type=_existing())
def check_causality_cmd(cfg: Config, box_file: Path) -> int:
    """Per-time causality report of a causal box (or of an extension's box)."""
    rep = check_causality(_load_box(box_file), cfg.tolerance)
    lines = [f"t={t}: {d:.3g} {'ok' if d <= cfg.tolerance else 'FAILED'}" for t, d in sorted(rep.deviations.items())]
    lines.append(f"trace deviation {rep.trace_deviation:.3g}; {'ok' if rep.ok else 'FAILED'}")
    return _emit(cfg, rep.to_dict(), "\n".join(lines), rep.ok)


@command("compose")
@click.argument("first", type=_existing())
@click.argument("second", type=_existing(), required=False)
@click.option("--loop", "loops", nargs=2, multiple=True, metavar="OUT IN",
              help="Feed output port OUT into input port IN (repeatable).")
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def compose(cfg: Config, first: Path, second: Path | None, loops, out: Path | None) -> int:
    """Parallel composition of two boxes followed by loops, written as a box document."""
    box = _load_box(first)
    if second is not None:
        box = parallel_compose(box, _load_box(second))
    for out_label, in_label in loops:
        box = loop_compose(box, out_label, in_label)
    _write_doc(box, out, "causal_box")
    return EXIT_PASS


@command("finegrain")
@click.option("--qcqc", "qcqc_file", type=_existing(), required=True)
@click.option("--cb", "cb_file", type=_existing(), required=True)
@click.option("--lambdas", "lambdas_file", type=_existing(), default=None)
@click.option("--signalling-trials", type=click.IntRange(min=1), default=10)
def finegrain(cfg: Config, qcqc_file: Path, cb_file: Path, lambdas_file: Path | None, signalling_trials: int) -> int:
    """Encoder/decoder check, signalling transfer and acyclicity for an extension."""
    q = serialize.read(qcqc_file, "qcqc")
    ext = serialize.read(cb_file, "extension")
    ext = ext.base if isinstance(ext, ProjectiveExtension) else ext
    lambdas = serialize.read(lambdas_file, "lambdas") if lambdas_file else None
    enc = build_encoder(q, ext, lambdas)
    fg = verify_finegraining(q, enc, build_decoder(q, enc), tol=max(cfg.tolerance, 1e-9))
    transfer = signalling_transfer(q, ext, trials=signalling_trials, seed=cfg.seed)
    acyc = check_acyclicity(ext.sequence, extension_locals(ext))
    ok = fg.ok and transfer.ok and acyc.ok
    report = {
        "finegraining_ok": fg.ok,
        "max_dev": fg.choi_deviation,
        "finegraining": fg.to_dict(),
        "signalling": [{"query": [r.source, r.sink], "witness_found": r.witnesses > 0,
                        "witnesses": r.witnesses, "transferred": r.transferred} for r in transfer.records],
        "acyclic": acyc.acyclic,
        "topo_order": acyc.order,
        "ok": ok,
    }
    summary = (f"{'ok' if ok else 'FAILED'}: fine-graining deviation {fg.choi_deviation:.3g}, "
               f"{transfer.transferred}/{transfer.found} witnesses transferred, acyclic={acyc.acyclic}")
    return _emit(cfg, report, summary, ok)


@command("scenario")
@click.argument("name", type=click.Choice(sorted(SCENARIOS)))
def scenario(cfg: Config, name: str) -> int:
    """Run a built-in end-to-end scenario."""
    kwargs = {"tol": cfg.tolerance}
    if name != "compose-demo":
        kwargs["seed"] = cfg.seed
    rep = SCENARIOS[name](**kwargs)
    lines = [f"{'PASS' if s.passed else 'FAIL'}  {s.description}: {s.measured} (expected {s.expected})"
             for s in rep.steps]
    lines.append(f"{name}: {'PASS' if rep.overall else 'FAIL'}")
    return _emit(cfg, rep.to_dict(), "\n".join(lines), rep.overall)


@command("export")
@click.argument("name", type=click.Choice(sorted(BUILTINS)))
@click.option("--out", type=click.Path(dir_okay=False, path_type=Path), default=None)
def export(cfg: Config, name: str, out: Path | None) -> int:
    """Write a built-in QC-QC as a document (stdout unless --out or --json is given)."""
    _write_doc(BUILTINS[name](), out or cfg.output, "qcqc")
    return EXIT_PASS


def main(argv: list[str] | None = None) -> int:
    """Entry point; returns the exit code instead of raising ``SystemExit``."""
    try:
        cli.main(args=argv, prog_name="qcbox", standalone_mode=True)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else (0 if exc.code is None else EXIT_USAGE)
    return EXIT_PASS


if __name__ == "__main__":
    sys.exit(main())
