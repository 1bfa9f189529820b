"""Command-line entry point and experiment orchestration.

Subcommands: simulate, embed, fit-baseline, train-diffusion, sample, eval,
augment-classify.  Every run resolves one master seed, writes its artifacts
under a single output directory, and finishes with an atomically written
manifest whose digests make the run verifiable and replayable.

Exit codes: 0 success, 2 usage, 3 invalid configuration, 4 missing file,
1 any other failure.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .baseline import fit as fit_baseline
from .baseline import load_model as load_baseline
from .baseline import sample_dataset as sample_baseline
from .baseline import save_model as save_baseline
from .config import (
    AUGMENT_SCHEMA,
    EVAL_SCHEMA,
    SAMPLE_SCHEMA,
    SIMULATE_SCHEMA,
    TRAIN_SCHEMA,
    ConfigError,
    ConfigSchema,
)
from .denoiser import DenoiserConfig, make_denoise_fn
from .diffusion import NoiseModel, NoiseSchedule, estimate_marginals, sample_dataset
from .embedding import EMBEDDING_DIM, assigned_class, embed_dataset, partition
from .gcn import ExperimentConfig, run_experiment
from .graphs import GraphDataset, read_dataset, write_dataset
from .manifest import RunManifest
from .metrics import EmbeddingPopulation, compare_populations
from .rng import child_rng, spawn_rngs
from .tissue import TissueParams, build_corpus
from .training import TrainConfig, load_checkpoint, save_checkpoint, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING = 4
EXIT_FAILURE = 1

OUTPUT_ROOT_ENV = "TLSGRAPHS_OUTPUT_ROOT"


class _Command:
    def __init__(self, args: argparse.Namespace):
        self.args = args
        self.out_dir = self._resolve_out(args)
        self.manifest = RunManifest(
            command=args.command,
            config={},
            master_seed=args.seed,
            toolkit_version=__version__,
        )

    @staticmethod
    def _resolve_out(args: argparse.Namespace) -> Path:
        root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
        out = Path(args.out) if args.out else root / args.command
        out.mkdir(parents=True, exist_ok=True)
        return out

    def load_config(self, schema: ConfigSchema) -> dict:
        overrides = dict(kv.split("=", 1) for kv in (self.args.set or []))
        values = schema.load(self.args.config, overrides)
        self.manifest.config = values
        return values

    def finish(self) -> None:
        self.manifest.write(self.out_dir / "manifest.json")


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _tissue_params(values: dict, seed: int) -> TissueParams:
    return TissueParams(
        field_size=(values["field_width"], values["field_height"]),
        n_tls_seeds=values["n_tls_seeds"],
        cluster_radius=values["cluster_radius"],
        bcells_per_cluster=values["bcells_per_cluster"],
        tcells_per_cluster=values["tcells_per_cluster"],
        tcell_annulus=(values["annulus_inner"], values["annulus_outer"]),
        background_density=values["background_density"],
        n_decoy_seeds=values["n_decoy_seeds"],
        rng_seed=seed,
    )


def cmd_simulate(cmd: _Command) -> int:
    values = cmd.load_config(SIMULATE_SCHEMA)
    params = _tissue_params(values, cmd.args.seed)
    cmd.manifest.start("simulate")
    tls, non_tls = build_corpus(
        params,
        size_bounds=(values["min_nodes"], values["max_nodes"]),
        n_fields=values["n_fields"],
        stride=values["subgraph_stride"],
    )
    cmd.manifest.stop("simulate")
    tls_path = cmd.out_dir / "tls.jsonl"
    non_path = cmd.out_dir / "non_tls.jsonl"
    write_dataset(tls, tls_path)
    write_dataset(non_tls, non_path)
    summary_rows = []
    for name, ds in (("tls", tls), ("non_tls", non_tls)):
        embs = embed_dataset(ds)
        values_per_dim = np.array([e.kappa for e in embs]) if embs else np.zeros((0, 6))
        for a in range(EMBEDDING_DIM):
            hist, _ = (
                np.histogram(values_per_dim[:, a], bins=10, range=(0, 1))
                if len(embs)
                else (np.zeros(10, dtype=int), None)
            )
            summary_rows.append([name, len(ds), f"kappa{a}"] + hist.tolist())
    _write_csv(
        cmd.out_dir / "summary.csv",
        ["dataset", "n_graphs", "dimension"] + [f"bin{i}" for i in range(10)],
        summary_rows,
    )
    for p in (tls_path, Path(str(tls_path) + ".meta.json"), non_path,
              Path(str(non_path) + ".meta.json"), cmd.out_dir / "summary.csv"):
        cmd.manifest.record_output(p)
    cmd.finish()
    print(f"simulate: {len(tls)} tls + {len(non_tls)} non_tls graphs -> {cmd.out_dir}")
    return EXIT_OK


def cmd_embed(cmd: _Command) -> int:
    dataset = read_dataset(cmd.args.dataset)
    cmd.manifest.record_input(cmd.args.dataset)
    embs = embed_dataset(dataset)
    rows = []
    for idx, emb in enumerate(embs):
        rows.append(
            [idx]
            + [f"{k:.10g}" for k in emb.kappa]
            + [int(emb.degenerate), assigned_class(emb)]
        )
    out_path = cmd.out_dir / "embeddings.csv"
    _write_csv(
        out_path,
        ["graph_index"] + [f"kappa{a}" for a in range(EMBEDDING_DIM)] + ["degenerate", "assigned_class"],
        rows,
    )
    cmd.manifest.record_output(out_path)
    cmd.finish()
    print(f"embed: {len(rows)} graphs -> {out_path}")
    return EXIT_OK


def cmd_fit_baseline(cmd: _Command) -> int:
    dataset = read_dataset(cmd.args.dataset)
    cmd.manifest.record_input(cmd.args.dataset)
    model = fit_baseline(dataset)
    out_path = cmd.out_dir / "baseline.json"
    save_baseline(model, out_path)
    cmd.manifest.record_output(out_path)
    cmd.finish()
    print(f"fit-baseline: {len(dataset)} graphs -> {out_path}")
    return EXIT_OK


def cmd_train_diffusion(cmd: _Command) -> int:
    values = cmd.load_config(TRAIN_SCHEMA)
    dataset = read_dataset(cmd.args.dataset)
    cmd.manifest.record_input(cmd.args.dataset)
    m_x, m_e = estimate_marginals(dataset)
    model = NoiseModel(
        m_x=m_x, m_e=m_e, schedule=NoiseSchedule.cosine(values["T"], values["cosine_offset"])
    )
    arch = DenoiserConfig(
        b=dataset.types.b,
        layers=values["layers"],
        node_width=values["node_width"],
        edge_width=values["edge_width"],
        global_width=values["global_width"],
        heads=values["heads"],
    )
    ckpt_path = cmd.out_dir / "denoiser.ckpt"
    config = TrainConfig(
        steps=values["steps"],
        learning_rate=values["learning_rate"],
        batch_size=values["batch_size"],
        lambda_e=values["lambda_e"],
        checkpoint_every=values["checkpoint_every"],
        checkpoint_path=str(ckpt_path),
        seed=cmd.args.seed,
    )
    cmd.manifest.start("train")
    result = train(dataset, model, config, arch)
    cmd.manifest.stop("train")
    _write_csv(
        cmd.out_dir / "losses.csv",
        ["step", "loss"],
        [[i + 1, f"{v:.8g}"] for i, v in enumerate(result.losses)],
    )
    cmd.manifest.record_output(ckpt_path)
    cmd.manifest.record_output(cmd.out_dir / "losses.csv")
    cmd.finish()
    status = "diverged" if result.diverged else "ok"
    print(
        f"train-diffusion: {result.completed_steps} steps ({status}), "
        f"final loss {result.losses[-1]:.4f} -> {ckpt_path}"
    )
    return EXIT_OK


def cmd_sample(cmd: _Command) -> int:
    values = cmd.load_config(SAMPLE_SCHEMA)
    n_graphs = cmd.args.n if cmd.args.n is not None else values["n_graphs"]
    sizes_dataset = read_dataset(cmd.args.sizes_from)
    cmd.manifest.record_input(cmd.args.sizes_from)
    sizes = [g.n for g in sizes_dataset.graphs]
    cmd.manifest.start("sample")
    if cmd.args.baseline:
        model = load_baseline(cmd.args.baseline)
        cmd.manifest.record_input(cmd.args.baseline)
        generated = sample_baseline(model, n_graphs, child_rng(cmd.args.seed, "baseline-sample"))
    else:
        params, noise_model, _, _, _ = load_checkpoint(cmd.args.checkpoint)
        cmd.manifest.record_input(cmd.args.checkpoint)
        fn = make_denoise_fn(params, noise_model.T)
        if cmd.args.threads > 1:
            rngs = spawn_rngs(cmd.args.seed, "diffusion-sample", n_graphs)
            from .diffusion import sample_graph, sample_node_count

            def one(i: int):
                n_nodes = sample_node_count(sizes, rngs[i])
                return sample_graph(fn, noise_model, n_nodes, rngs[i])

            with ThreadPoolExecutor(max_workers=cmd.args.threads) as pool:
                graphs = list(pool.map(one, range(n_graphs)))
            generated = GraphDataset(
                tuple(graphs), None, "diffusion", sizes_dataset.types
            )
        else:
            generated = sample_dataset(
                fn,
                noise_model,
                sizes,
                n_graphs,
                child_rng(cmd.args.seed, "diffusion-sample"),
                sizes_dataset.types,
            )
    cmd.manifest.stop("sample")
    out_path = cmd.out_dir / "samples.jsonl"
    write_dataset(generated, out_path)
    cmd.manifest.record_output(out_path)
    cmd.manifest.record_output(Path(str(out_path) + ".meta.json"))
    cmd.finish()
    print(f"sample: {n_graphs} graphs -> {out_path}")
    return EXIT_OK


def cmd_eval(cmd: _Command) -> int:
    values = cmd.load_config(EVAL_SCHEMA)
    ds_a = read_dataset(cmd.args.dataset_a)
    ds_b = read_dataset(cmd.args.dataset_b)
    cmd.manifest.record_input(cmd.args.dataset_a)
    cmd.manifest.record_input(cmd.args.dataset_b)
    include = values["include_degenerate"]
    pop_a = EmbeddingPopulation.from_embeddings(embed_dataset(ds_a), include)
    pop_b = EmbeddingPopulation.from_embeddings(embed_dataset(ds_b), include)
    report = compare_populations(pop_a, pop_b)
    report_path = cmd.out_dir / "report.csv"
    _write_csv(
        report_path,
        ["metric"] + [f"kappa{a}" for a in range(EMBEDDING_DIM)],
        [
            [metric] + [f"{report.value(metric, a):.10g}" for a in range(EMBEDDING_DIM)]
            for metric in report.table
        ],
    )
    cmd.manifest.record_output(report_path)
    bins = values["histogram_bins"]
    edges = np.linspace(0.0, 1.0, bins + 1)
    for a in range(EMBEDDING_DIM):
        hist_a, _ = np.histogram(pop_a.dimension(a), bins=bins, range=(0, 1))
        hist_b, _ = np.histogram(pop_b.dimension(a), bins=bins, range=(0, 1))
        hist_path = cmd.out_dir / f"hist_kappa{a}.csv"
        _write_csv(
            hist_path,
            ["bin_left", "bin_right", "count_a", "count_b"],
            [
                [f"{edges[i]:.6g}", f"{edges[i+1]:.6g}", int(hist_a[i]), int(hist_b[i])]
                for i in range(bins)
            ],
        )
        cmd.manifest.record_output(hist_path)
    cmd.finish()
    print(f"eval: report -> {report_path}")
    return EXIT_OK


def cmd_augment_classify(cmd: _Command) -> int:
    values = cmd.load_config(AUGMENT_SCHEMA)
    task = read_dataset(cmd.args.task)
    cmd.manifest.record_input(cmd.args.task)
    pools = {}
    for source, path in (
        ("real", cmd.args.pool_real),
        ("diffusion", cmd.args.pool_diffusion),
        ("baseline", cmd.args.pool_baseline),
    ):
        if path:
            pools[source] = read_dataset(path)
            cmd.manifest.record_input(path)
    config = ExperimentConfig(
        sources=tuple(pools),
        magnitudes=tuple(int(x) for x in values["magnitudes"].split(",")),
        learning_rates=tuple(float(x) for x in values["learning_rates"].split(",")),
        hidden_dims=tuple(int(x) for x in values["hidden_dims"].split(",")),
        dropouts=tuple(float(x) for x in values["dropouts"].split(",")),
        max_epochs=values["max_epochs"],
        patience=values["patience"],
        folds=values["folds"],
        seed=cmd.args.seed,
    )
    cmd.manifest.start("experiment")
    result = run_experiment(task, pools, config)
    cmd.manifest.stop("experiment")
    for split in ("val", "test"):
        rows = []
        for source in config.sources:
            row = [source]
            for magnitude in config.magnitudes:
                cell = result.cell(source, magnitude)
                m, s = (
                    (cell.val_mean, cell.val_sem)
                    if split == "val"
                    else (cell.test_mean, cell.test_sem)
                )
                row.append(f"{m:.3f} +/- {s:.3f}")
            rows.append(row)
        path = cmd.out_dir / f"auroc_{split}.csv"
        _write_csv(path, ["source"] + [f"{m}x" for m in config.magnitudes], rows)
        cmd.manifest.record_output(path)
    best_rows = [
        [c.source, c.magnitude, c.best_hp.learning_rate, c.best_hp.hidden_dim, c.best_hp.dropout]
        for c in result.cells
    ]
    best_path = cmd.out_dir / "best_configs.csv"
    _write_csv(best_path, ["source", "magnitude", "lr", "hidden", "dropout"], best_rows)
    cmd.manifest.record_output(best_path)
    cmd.finish()
    print(f"augment-classify: {len(result.cells)} cells -> {cmd.out_dir}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tlsgraphs",
        description="Cell-graph generation, TLS-content analysis, and evaluation toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--seed", type=int, default=0, help="master seed for the run")
        p.add_argument("--config", type=str, default=None, help="key = value config file")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--out", type=str, default=None, help="output directory")

    p = sub.add_parser("simulate", help="generate a simulated cell-graph corpus")
    common(p)
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("embed", help="compute TLS embeddings for a dataset")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_embed)

    p = sub.add_parser("fit-baseline", help="fit the marginal baseline generator")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_fit_baseline)

    p = sub.add_parser("train-diffusion", help="train the graph diffusion denoiser")
    common(p)
    p.add_argument("--dataset", required=True)
    p.set_defaults(fn=cmd_train_diffusion)

    p = sub.add_parser("sample", help="sample graphs from a trained generator")
    common(p)
    p.add_argument("--checkpoint", help="denoiser checkpoint file")
    p.add_argument("--baseline", help="baseline model JSON file")
    p.add_argument("--sizes-from", required=True, help="dataset supplying the size distribution")
    p.add_argument("--n", type=int, default=None, help="number of graphs")
    p.set_defaults(fn=cmd_sample)

    p = sub.add_parser("eval", help="compare two datasets' TLS-embedding distributions")
    common(p)
    p.add_argument("--dataset-a", required=True)
    p.add_argument("--dataset-b", required=True)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("augment-classify", help="run the GCN data-augmentation study")
    common(p)
    p.add_argument("--task", required=True, help="labeled 100-graph task dataset")
    p.add_argument("--pool-real", help="labeled real augmentation pool")
    p.add_argument("--pool-diffusion", help="labeled diffusion augmentation pool")
    p.add_argument("--pool-baseline", help="labeled baseline augmentation pool")
    p.set_defaults(fn=cmd_augment_classify)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if args.command == "sample" and bool(args.checkpoint) == bool(args.baseline):
        print("sample: exactly one of --checkpoint / --baseline is required", file=sys.stderr)
        return EXIT_USAGE
    try:
        cmd = _Command(args)
        return args.fn(cmd)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except Exception as exc:  # surface a diagnostic, not a traceback
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


def entrypoint() -> None:  # console_scripts shim
    raise SystemExit(main())
