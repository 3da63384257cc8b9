"""Dataset ingestion, experiment grids, and result tables.

The benchmark protocol mirrors the evaluation recipe the models were built
for: preprocess features per transfer function, solve the chosen model,
round the relaxation with spectral clustering several times, polish each
rounding with the matching hard reoptimizer, and report mean +/- std of
the hard objective and matched accuracy.  Baselines skip the solve/round
stages and aggregate across their own restarts.

Everything is deterministic under a master seed: component seeds are
derived with spawn keys, assignments are persisted as integer CSV rows,
and result CSVs exclude volatile fields (wall-clock goes to the run log)
so repeated runs are byte-identical.
"""

import csv
import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import softmax

from .divergences import family, pairwise_divergence
from .models import (
    MODELS,
    RELAXATION_MODELS,
    ModelConfig,
    alternating_restarts,
    cond_objective,
    derived_rng,
    joint_hard_reopt,
    soft_em_restarts,
    solve_relaxation,
)
from .rounding import (
    hard_reopt,
    matched_accuracy,
    soft_accuracy,
    spectral_embedding,
    spectral_round,
)

TRANSFERS = ("linear", "sigmoid")
SQUASH_LO = 0.01
SQUASH_HI = 0.99


def transfer_family(transfer):
    """Map a transfer-function name to its divergence family."""
    table = {"linear": "euclidean", "sigmoid": "bernoulli"}
    if transfer not in table:
        raise ValueError(f"unknown transfer {transfer!r}; pick from {TRANSFERS}")
    return table[transfer]


@dataclass
class Dataset:
    name: str
    X: np.ndarray
    labels: np.ndarray
    classes: tuple

    @property
    def t(self):
        return self.X.shape[0]

    @property
    def n(self):
        return self.X.shape[1]

    @property
    def n_classes(self):
        return len(self.classes)


class ParseError(ValueError):
    pass


def load_dataset(path, label_column=-1, delimiter=None, name=None):
    """Parse a delimited numeric file with one label column.

    The delimiter defaults to comma when the first line contains one,
    otherwise whitespace.  A first row whose cells are all non-numeric is
    taken as a header, enabling label selection by column name.  Ragged
    rows and non-numeric feature cells raise ParseError with the 1-based
    line number.
    """
    path = Path(path)
    raw = [
        (i + 1, line.strip())
        for i, line in enumerate(path.read_text().splitlines())
        if line.strip()
    ]
    if not raw:
        raise ParseError(f"{path}: empty file")
    if delimiter is None and "," in raw[0][1]:
        delimiter = ","
    rows = [(ln, text.split(delimiter) if delimiter else text.split()) for ln, text in raw]

    def numeric(cell):
        try:
            float(cell)
            return True
        except ValueError:
            return False

    header = None
    if not any(numeric(c) for c in rows[0][1]):
        header = [c.strip() for c in rows[0][1]]
        rows = rows[1:]
        if not rows:
            raise ParseError(f"{path}: header but no data rows")
    width = len(rows[0][1])
    if isinstance(label_column, str):
        if header is None:
            raise ParseError(f"{path}: label column {label_column!r} needs a header")
        try:
            label_idx = header.index(label_column)
        except ValueError:
            raise ParseError(f"{path}: no column named {label_column!r}") from None
    else:
        label_idx = int(label_column) % width

    feats = []
    labels = []
    for ln, cells in rows:
        if len(cells) != width:
            raise ParseError(f"{path}: line {ln}: expected {width} fields, got {len(cells)}")
        row = []
        for j, cell in enumerate(cells):
            if j == label_idx:
                labels.append(cell.strip())
                continue
            try:
                row.append(float(cell))
            except ValueError:
                raise ParseError(
                    f"{path}: line {ln}, column {j + 1}: non-numeric value {cell.strip()!r}"
                ) from None
        feats.append(row)
    classes, codes = np.unique(labels, return_inverse=True)
    return Dataset(
        name=name or path.stem,
        X=np.asarray(feats, dtype=float),
        labels=codes.astype(int),
        classes=tuple(classes.tolist()),
    )


def preprocess(ds, transfer="linear"):
    """Shift features to min 0 and scale to unit variance.

    The sigmoid path additionally squashes each feature affinely into
    [0.01, 0.99] so the bernoulli domain is respected; constant features
    land on the interval midpoint.  The linear path is idempotent.
    """
    transfer_family(transfer)
    X = ds.X - ds.X.min(axis=0)
    std = X.std(axis=0)
    live = std > 0
    X[:, live] /= std[live]
    if transfer == "sigmoid":
        hi = X.max(axis=0)
        pos = hi > 0
        X[:, pos] = SQUASH_LO + (SQUASH_HI - SQUASH_LO) * X[:, pos] / hi[pos]
        X[:, ~pos] = 0.5 * (SQUASH_LO + SQUASH_HI)
    return replace(ds, X=X)


def stratified_subsample(ds, target, seed=0):
    """Deterministic per-class proportional subsample (largest remainder)."""
    t = ds.t
    if target > t:
        raise ValueError(f"target {target} exceeds dataset size {t}")
    if target == t:
        return ds
    if target < ds.n_classes:
        raise ValueError(f"target {target} is smaller than the class count {ds.n_classes}")
    counts = np.bincount(ds.labels, minlength=ds.n_classes)
    quota = target * counts / t
    base = np.floor(quota).astype(int)
    frac = quota - base
    # distribute the remainder by largest fraction, ties broken by class id
    order = np.lexsort((np.arange(len(frac)), -frac))
    for k in order[: target - base.sum()]:
        base[k] += 1
    rng = derived_rng(seed, 3)
    keep = []
    for k, m in enumerate(base):
        idx = np.flatnonzero(ds.labels == k)
        if m > 0:
            keep.append(rng.choice(idx, size=m, replace=False))
    keep = np.sort(np.concatenate(keep))
    return replace(ds, X=ds.X[keep].copy(), labels=ds.labels[keep].copy())


@dataclass
class ExperimentSpec:
    """One benchmark cell: dataset x model x transfer plus its knobs."""

    dataset: str
    model: str
    transfer: str = "linear"
    label_column: object = -1
    delimiter: Optional[str] = None
    name: Optional[str] = None
    d: Optional[int] = None
    alpha: float = 1e-5
    beta: float = 1e-5
    gamma: float = 1e-6
    seed: int = 0
    rounding_restarts: int = 10
    baseline_restarts: Optional[int] = None
    subsample: Optional[int] = None
    tol: float = 1e-6
    admm_tol: float = 1e-5
    max_iter: int = 1000
    out: Optional[str] = None

    def __post_init__(self):
        if self.model not in MODELS:
            raise ValueError(f"unknown model {self.model!r}; pick from {MODELS}")
        transfer_family(self.transfer)
        if self.model == "disc" and self.transfer != "sigmoid":
            raise ValueError("disc model is defined for the sigmoid transfer only")
        if self.baseline_restarts is None:
            self.baseline_restarts = 20 if self.model == "soft-em" else 30

    def cell_name(self):
        base = self.name or Path(self.dataset).stem
        return f"{base}_{self.model}_{self.transfer}"


@dataclass
class ResultRecord:
    dataset: str
    t: int
    n: int
    model: str
    transfer: str
    clusters: int
    alpha: float
    beta: float
    gamma: float
    seed: int
    obj_mean: float
    obj_std: float
    acc_mean: float
    acc_std: float
    soft_mean: Optional[float] = None
    soft_std: Optional[float] = None
    iterations: int = 0
    seconds: float = 0.0
    assignment_file: str = ""
    m_sha256: str = ""
    trace: list = field(default_factory=list)
    assignments: list = field(default_factory=list)

    def sort_key(self):
        return (self.dataset, MODELS.index(self.model), self.transfer)


def _joint_posteriors(X, result, fam):
    scores = result.weights[None, :] - pairwise_divergence(fam, X, result.centers)
    return softmax(scores, axis=1)


def run_experiment(spec):
    """Execute one benchmark cell and aggregate its repeats.

    Relaxation models: solve, then round `rounding_restarts` times with
    derived seeds, re-optimize each rounding with the model's hard
    alternation, and score.  Baselines aggregate across their own restarts
    directly.  Objectives reported are the hard clustering objective of
    the final labels, so every number is recomputable from the persisted
    assignments.
    """
    ds = load_dataset(spec.dataset, spec.label_column, spec.delimiter, spec.name)
    if spec.subsample:
        ds = stratified_subsample(ds, spec.subsample, spec.seed)
    ds = preprocess(ds, spec.transfer)
    fam_name = transfer_family(spec.transfer)
    fam = family(fam_name)
    d = spec.d or ds.n_classes
    config = ModelConfig(
        d=d,
        family=fam_name,
        alpha=spec.alpha,
        beta=spec.beta,
        gamma=spec.gamma,
        tol=spec.tol,
        admm_tol=spec.admm_tol,
        max_iter=spec.max_iter,
        restarts=spec.baseline_restarts,
        seed=spec.seed,
    )
    X, truth = ds.X, ds.labels
    start = time.perf_counter()
    assignments = []
    objs, accs, softs = [], [], []
    m_sha = ""
    trace = []
    iterations = 0

    if spec.model in RELAXATION_MODELS:
        solution = solve_relaxation(spec.model, X, config)
        iterations = solution.iterations
        trace = solution.trace
        m_sha = hashlib.sha256(
            np.ascontiguousarray(solution.M, dtype=float).tobytes()
        ).hexdigest()
        embedding = spectral_embedding(solution.M, d)
        for r in range(spec.rounding_restarts):
            rounded = spectral_round(
                solution.M, d, restarts=1, rng=derived_rng(spec.seed, 2, r),
                embedding=embedding,
            )
            if spec.model == "joint":
                polished = joint_hard_reopt(X, rounded.labels, fam, d=d)
                softs.append(soft_accuracy(_joint_posteriors(X, polished, fam), truth)[0])
            else:
                polished = hard_reopt(X, rounded.labels, fam, d=d)
            assignments.append(polished.labels)
            objs.append(cond_objective(X, polished.labels, fam))
            accs.append(matched_accuracy(polished.labels, truth)[0])
    elif spec.model == "alt-hard":
        for res in alternating_restarts(X, config):
            assignments.append(res.labels)
            objs.append(res.objective)
            accs.append(matched_accuracy(res.labels, truth)[0])
            iterations = max(iterations, res.iterations)
    else:  # soft-em
        for res in soft_em_restarts(X, config):
            labels = res.posteriors.argmax(axis=1)
            assignments.append(labels)
            objs.append(cond_objective(X, labels, fam))
            accs.append(matched_accuracy(labels, truth)[0])
            softs.append(soft_accuracy(res.posteriors, truth)[0])
            iterations = max(iterations, res.iterations)

    seconds = time.perf_counter() - start
    record = ResultRecord(
        dataset=ds.name,
        t=ds.t,
        n=ds.n,
        model=spec.model,
        transfer=spec.transfer,
        clusters=d,
        alpha=spec.alpha,
        beta=spec.beta,
        gamma=spec.gamma,
        seed=spec.seed,
        obj_mean=float(np.mean(objs)),
        obj_std=float(np.std(objs)),
        acc_mean=float(np.mean(accs)),
        acc_std=float(np.std(accs)),
        soft_mean=float(np.mean(softs)) if softs else None,
        soft_std=float(np.std(softs)) if softs else None,
        iterations=iterations,
        seconds=seconds,
        m_sha256=m_sha,
        trace=trace,
        assignments=[np.asarray(a, dtype=int) for a in assignments],
    )
    if spec.out:
        persist_cell(record, spec, Path(spec.out))
    return record


def persist_cell(record, spec, out_dir):
    """Write assignments and the iteration trace for one cell."""
    out_dir.mkdir(parents=True, exist_ok=True)
    cell = spec.cell_name()
    apath = out_dir / f"{cell}_assignments.csv"
    with open(apath, "w", newline="\n") as fh:
        for labels in record.assignments:
            fh.write(",".join(str(int(v)) for v in labels) + "\n")
    record.assignment_file = apath.name
    if record.trace:
        with open(out_dir / f"{cell}_trace.jsonl", "w", newline="\n") as fh:
            for entry in record.trace:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")


CSV_COLUMNS = (
    "dataset",
    "t",
    "n",
    "model",
    "transfer",
    "clusters",
    "alpha",
    "beta",
    "gamma",
    "seed",
    "obj_mean",
    "obj_std",
    "acc_mean",
    "acc_std",
    "soft_mean",
    "soft_std",
    "iterations",
    "assignment_file",
    "m_sha256",
)


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_table(records, fmt="csv", path=None):
    """Render records as a deterministic CSV or an aligned text table.

    Wall-clock timings are deliberately left out: they vary between runs,
    and the CSV must be byte-identical under a fixed seed.
    """
    records = sorted(records, key=lambda r: r.sort_key())
    if fmt == "csv":
        text = _render_csv(records)
    elif fmt == "text":
        text = _render_text(records)
    else:
        raise ValueError(f"unknown table format {fmt!r}")
    if path is not None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
    return text


def _render_csv(records):
    import io

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in records:
        writer.writerow([_fmt(getattr(r, c)) for c in CSV_COLUMNS])
    return buf.getvalue()


def _block_scale(value):
    if value == 0 or not np.isfinite(value):
        return 0
    return int(np.floor(np.log10(abs(value))))


def _render_text(records):
    lines = []
    width = 34
    for dataset in sorted({r.dataset for r in records}):
        block = [r for r in records if r.dataset == dataset]
        lines.append(dataset)
        lines.append("-" * max(len(dataset), 20))
        for r in block:
            k = _block_scale(r.obj_mean)
            scale = 10.0**k
            obj = f"{r.obj_mean / scale:.1f} +/- {r.obj_std / scale:.1f}"
            tag = f"(x10^{k})" if k else ""
            label = f"{r.model}/{r.transfer}"
            lines.append(f"  {label:<18} obj{tag:<8} {obj:>{width - 14}}")
            acc = f"{100 * r.acc_mean:.1f} +/- {100 * r.acc_std:.1f}"
            lines.append(f"  {'':<18} acc(%){'':<5} {acc:>{width - 14}}")
            if r.soft_mean is not None:
                soft = f"{100 * r.soft_mean:.1f} +/- {100 * r.soft_std:.1f}"
                lines.append(f"  {'':<18} soft(%){'':<4} {soft:>{width - 14}}")
        lines.append("")
    return "\n".join(lines) + ("\n" if lines else "")


def run_grid(specs, workers=1):
    """Run every cell, collecting failures without stopping the grid.

    Returns (records, failures) where failures are (spec, message) pairs.
    Results are order-independent: records carry their own sort keys.
    """
    records = []
    failures = []
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_experiment, s): s for s in specs}
            for fut, s in futures.items():
                try:
                    records.append(fut.result())
                except Exception as exc:  # noqa: BLE001  (cell isolation)
                    failures.append((s, f"{type(exc).__name__}: {exc}"))
    else:
        for s in specs:
            try:
                records.append(run_experiment(s))
            except Exception as exc:  # noqa: BLE001  (cell isolation)
                failures.append((s, f"{type(exc).__name__}: {exc}"))
    records.sort(key=lambda r: r.sort_key())
    return records, failures


def score_assignments(data_path, assignment_path, transfer="linear", label_column=-1,
                      delimiter=None, subsample=None, seed=0):
    """Recompute objective and accuracy statistics from persisted labels."""
    ds = load_dataset(data_path, label_column, delimiter)
    if subsample:
        ds = stratified_subsample(ds, subsample, seed)
    ds = preprocess(ds, transfer)
    fam = transfer_family(transfer)
    rows = []
    with open(assignment_path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                rows.append(np.array([int(v) for v in line.split(",")], dtype=int))
    if not rows:
        raise ValueError(f"{assignment_path}: no assignment rows")
    for row in rows:
        if row.shape[0] != ds.t:
            raise ValueError(
                f"{assignment_path}: row has {row.shape[0]} labels for {ds.t} points"
            )
    objs = [cond_objective(ds.X, row, fam) for row in rows]
    accs = [matched_accuracy(row, ds.labels)[0] for row in rows]
    return {
        "repeats": len(rows),
        "obj_mean": float(np.mean(objs)),
        "obj_std": float(np.std(objs)),
        "acc_mean": float(np.mean(accs)),
        "acc_std": float(np.std(accs)),
    }
