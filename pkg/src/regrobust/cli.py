"""Command line pipeline: prepare -> tune -> evaluate -> report.

Every command takes the same experiment config and an output directory; all
artifacts are deterministic functions of (config, master seed), including
under --jobs parallelism.
"""
import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import data as data_mod
from .config import (
    ExperimentConfig,
    defense_config_to_dict,
    load_experiment_config,
    parse_defense_config,
)
from .defenses import DefenseConfig
from .errors import ConfigError, RegrobustError
from .evaluation import (
    aggregate,
    evaluate_cell,
    format_summary_table,
    perturbation_profile,
    train_models,
    write_cells_csv,
    read_cells_csv,
    write_points_csv,
    write_summary_json,
)
from .seeding import derive_seed
from .training import random_search


def _build_dataset(cfg: ExperimentConfig):
    ds = data_mod.load_csv(
        cfg.dataset.path,
        target_column=cfg.dataset.target_column,
        name=cfg.dataset.name,
        target_bounded_01=cfg.dataset.target_bounded_01,
        missing=cfg.dataset.missing,
    )
    ds = data_mod.split_dataset(ds, cfg.fractions, seed=derive_seed(cfg.seed, "split"))
    norm = data_mod.fit_normalizer(ds)
    ds = data_mod.normalize_dataset(ds, norm)
    neighbors = data_mod.compute_neighbors(ds)
    return ds, norm, neighbors


def _load_or_prepare(cfg: ExperimentConfig, out: Path):
    cache = out / "dataset_cache.json"
    if cache.exists():
        return data_mod.load_dataset_cache(cache)
    ds, norm, neighbors = _build_dataset(cfg)
    data_mod.save_dataset_cache(cache, ds, norm, neighbors)
    return ds, norm, neighbors


def cmd_prepare(cfg: ExperimentConfig, out: Path) -> int:
    ds, norm, neighbors = _build_dataset(cfg)
    data_mod.save_dataset_cache(out / "dataset_cache.json", ds, norm, neighbors)
    sizes = {name: int((ds.split == i).sum()) for i, name in enumerate(data_mod.SPLIT_NAMES)}
    print(
        f"prepared {ds.name}: {ds.n_rows} rows, {ds.n_features} features, "
        f"splits {sizes}, cache {out / 'dataset_cache.json'}"
    )
    return 0


def _tuned_path(out: Path, kind: str) -> Path:
    return out / f"tuned_{kind}.json"


def _combined_candidates(out: Path, n_samples: int):
    """Warm-start configs for the combined search, merged from the tuned
    individual defenses when all three are on disk.

    The viable corner of the 4-d space (small sigma, small lambda) is a
    sliver under uniform sampling, so the search is seeded with the merged
    individually-tuned values plus a half-strength variant (stacked
    penalties over-regularize at their solo strengths). Both still compete
    against the sampled trials on the same validation objective.
    """
    parts = {}
    for kind in ("pseudo_huber", "grad_reg", "ansr"):
        path = _tuned_path(out, kind)
        if not path.exists():
            return ()
        with open(path) as f:
            parts[kind] = parse_defense_config(json.load(f)["config"], str(path))
    merged = DefenseConfig(
        kind="combined",
        delta=parts["pseudo_huber"].delta,
        sigma=parts["grad_reg"].sigma,
        beta=parts["ansr"].beta,
        lam=parts["ansr"].lam,
        n_samples=n_samples,
    )
    tempered = replace(merged, sigma=merged.sigma / 2, lam=merged.lam / 2)
    return (merged, tempered)


def cmd_tune(cfg: ExperimentConfig, out: Path) -> int:
    ds, _, neighbors = _load_or_prepare(cfg, out)
    pgd_attacks = [a for a in cfg.attacks if a.kind == "pgd"]
    attack = pgd_attacks[0] if pgd_attacks else None
    tuned_any = False
    for entry in cfg.defenses:
        if not entry.tune:
            continue
        tuned_any = True
        kind = entry.config.kind
        candidates = _combined_candidates(out, cfg.n_samples) if kind == "combined" else ()
        best, records = random_search(
            ds,
            kind,
            cfg.search,
            cfg.objective,
            seed=derive_seed(cfg.seed, "tune", kind),
            train_cfg=replace(cfg.train, seed=derive_seed(cfg.seed, "tune-train", kind)),
            neighbors=neighbors,
            attack=attack,
            candidates=candidates,
            n_samples=cfg.n_samples,
            jobs=cfg.jobs,
        )
        best_rec = min(
            (r for r in records if r.value == r.value), key=lambda r: (r.value, r.trial)
        )
        with open(_tuned_path(out, kind), "w") as f:
            json.dump(
                {
                    "kind": kind,
                    "objective": cfg.objective,
                    "best_value": best_rec.value,
                    "best_trial": best_rec.trial,
                    "n_trials": len(records),
                    "config": defense_config_to_dict(best),
                },
                f,
                indent=2,
                sort_keys=True,
            )
            f.write("\n")
        with open(out / f"trials_{kind}.jsonl", "w") as f:
            for r in records:
                f.write(
                    json.dumps(
                        {
                            "trial": r.trial,
                            "source": r.source,
                            "config": defense_config_to_dict(r.config),
                            "value": None if r.value != r.value else r.value,
                            "train_seed": r.train_seed,
                        },
                        sort_keys=True,
                    )
                    + "\n"
                )
        print(f"tuned {kind}: best {cfg.objective}={best_rec.value:.6g} "
              f"(trial {best_rec.trial}/{len(records)}) -> {_tuned_path(out, kind)}")
    if not tuned_any:
        print("nothing to tune: no defense entry has tune=true")
    return 0


def _resolve_defense(entry, out: Path, n_samples: int):
    if not entry.tune:
        return entry.config
    path = _tuned_path(out, entry.config.kind)
    if not path.exists():
        raise ConfigError(
            f"defense {entry.config.kind!r} has tune=true but {path} does not exist; "
            f"run the tune command first"
        )
    with open(path) as f:
        doc = json.load(f)
    return parse_defense_config(doc.get("config", {}), f"tuned:{path}", n_samples=n_samples)


def cmd_evaluate(cfg: ExperimentConfig, out: Path) -> int:
    ds, _, neighbors = _load_or_prepare(cfg, out)
    cells = []
    profiles = []
    try:
        for entry in cfg.defenses:
            defense = _resolve_defense(entry, out, cfg.n_samples)
            label = entry.label
            train_cfg = replace(cfg.train, seed=derive_seed(cfg.seed, "eval", label))
            models = train_models(
                ds, defense, train_cfg, cfg.n_seeds,
                neighbors=neighbors, label=label, jobs=cfg.jobs,
            )
            for attack in cfg.attacks:
                cells.extend(
                    evaluate_cell(
                        ds, defense, attack, cfg.n_seeds, train_cfg,
                        neighbors=neighbors, models=models, defense_label=label,
                    )
                )
                if attack.kind == "pgd":
                    for i, net in models:
                        records, _ = perturbation_profile(net, ds, attack)
                        profiles.append((label, attack.kind, i, records))
            print(f"evaluated {label}: {len(cfg.attacks)} attack(s) x {cfg.n_seeds} seed(s)")
    except RegrobustError:
        # Flush whatever finished so a long run is not lost to one bad cell.
        if cells:
            write_cells_csv(out / "cells.csv", cells)
            write_summary_json(out / "summary.json", aggregate(cells))
        if profiles:
            write_points_csv(out / "points.csv", profiles)
        raise
    write_cells_csv(out / "cells.csv", cells)
    write_points_csv(out / "points.csv", profiles)
    write_summary_json(out / "summary.json", aggregate(cells))
    print(f"wrote {out / 'cells.csv'}, {out / 'points.csv'}, {out / 'summary.json'}")
    return 0


def cmd_report(cfg: ExperimentConfig, out: Path) -> int:
    cells = read_cells_csv(out / "cells.csv")
    aggregates = aggregate(cells)
    write_summary_json(out / "summary.json", aggregates)
    print(format_summary_table(aggregates))
    return 0


COMMANDS = {
    "prepare": cmd_prepare,
    "tune": cmd_tune,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="regrobust",
        description="Train, attack, and evaluate defended regression networks.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_text in [
        ("prepare", "ingest, split, normalize, and cache the dataset"),
        ("tune", "random-search defense hyperparameters on the validation split"),
        ("evaluate", "train final models and evaluate every defense x attack cell"),
        ("report", "aggregate a cells.csv into summary.json and print a table"),
    ]:
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="experiment config JSON")
        p.add_argument("--out", default=None, help="output directory (overrides config)")
        p.add_argument("--seed", type=int, default=None, help="master seed (overrides config)")
        p.add_argument("--jobs", type=int, default=None, help="worker processes (overrides config)")
        p.add_argument(
            "--defense", action="append", default=None,
            help="restrict to this defense kind (repeatable)",
        )
        p.add_argument(
            "--attack", action="append", default=None,
            help="restrict to this attack kind (repeatable)",
        )
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    if args.out is not None:
        cfg.out_dir = args.out
    if args.seed is not None:
        cfg.seed = int(args.seed)
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        cfg.jobs = int(args.jobs)
    if args.defense is not None:
        known = {e.config.kind for e in cfg.defenses}
        unknown = set(args.defense) - known
        if unknown:
            raise ConfigError(f"--defense {sorted(unknown)} not in config (has {sorted(known)})")
        cfg.defenses = [e for e in cfg.defenses if e.config.kind in set(args.defense)]
    if args.attack is not None:
        known = {a.kind for a in cfg.attacks}
        unknown = set(args.attack) - known
        if unknown:
            raise ConfigError(f"--attack {sorted(unknown)} not in config (has {sorted(known)})")
        cfg.attacks = [a for a in cfg.attacks if a.kind in set(args.attack)]
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_experiment_config(args.config)
        cfg = _apply_overrides(cfg, args)
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out)
    except RegrobustError as e:
        print(json.dumps({"error": type(e).__name__, "message": str(e)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
