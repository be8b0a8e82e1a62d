"""End-to-end experiment orchestration from a single config file.

Three run modes:

* ``fed_single_domain`` / ``fed_multi_domain``: partition -> per-client
  statistics -> shape bank -> (optional) GGEUR augmentation -> federated
  rounds of local SGD + FedAvg -> per-round evaluation. Baseline and
  GGEUR arms run on identical partitions, initializations, and seeds.
* ``longtail``: knowledge-base matching + inverse-frequency sampling +
  GGEUR-layer training, against a plain-sampler control arm.
* ``analysis``: consistency, matching-stability, size-ratio, and
  cross-domain similarity tables as CSV.

Every run writes a manifest (config hash + seeds) sufficient to reproduce
it; outputs are deterministic byte-for-byte given (config, seed).
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace, asdict
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .aggregate import ShapeBank, build_shape_bank, upload_from_set
from .augment import AugmentPlan, augment_multi_domain, augment_single_domain
from .container import EmbeddingSet, PartitionSpec, load_container, partition
from .errors import ConfigError, GgcalError
from .geometry import (
    class_prototypes,
    class_shapes,
    consistency_curve,
    consistency_curve_csv,
    matching_stability,
    matching_stability_csv,
    rank_by_cosine,
    shape_similarity,
    size_of,
)
from .longtail import KnowledgeBase, TailPolicy, build_knowledge_base, match_class
from .synth import SynthSpec, synth_train_test
from .training import (
    TrainConfig,
    evaluate,
    fedavg,
    init_params,
    train,
)

MODES = ("fed_single_domain", "fed_multi_domain", "longtail", "analysis")
ARMS = ("baseline", "ggeur")


@dataclass(frozen=True)
class SimConfig:
    mode: str
    out_dir: str = "runs/out"
    train_path: str | None = None
    test_path: str | None = None
    kb_path: str | None = None
    synth: SynthSpec | None = None  # generate data instead of loading
    synth_test_per_class: int = 100
    m: int = 5
    rounds: int = 20
    seeds: tuple[int, ...] = (0,)
    hidden_dim: int = 512
    local_epochs: int = 1
    arms: tuple[str, ...] = ARMS
    partition_spec: PartitionSpec = field(
        default_factory=lambda: PartitionSpec(kind="dirichlet_label_skew", num_clients=4, beta=0.1)
    )
    augment_plan: AugmentPlan = field(default_factory=AugmentPlan)
    tail_policy: TailPolicy = field(default_factory=TailPolicy)
    trainer: TrainConfig = field(default_factory=TrainConfig)
    subsample_sizes: tuple[int, ...] = (5, 10, 30, 100)
    stability_trials: int = 20

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.mode.startswith("fed") and self.rounds < 1:
            raise ConfigError("rounds must be >= 1 for federated modes")
        if self.mode == "longtail" and self.kb_path is None and self.synth is None:
            raise ConfigError("longtail mode requires a knowledge base (kb path or synth)")
        for arm in self.arms:
            if arm not in ARMS:
                raise ConfigError(f"unknown arm {arm!r}")
        if self.synth is None and self.train_path is None:
            raise ConfigError("either train path or synth section is required")


def config_from_dict(raw: dict) -> SimConfig:
    """Build and validate a SimConfig from a parsed config tree."""
    raw = dict(raw)
    try:
        kwargs: dict = {"mode": raw.pop("mode")}
    except KeyError:
        raise ConfigError("config is missing 'mode'") from None
    simple = {
        "out_dir": "out",
        "train_path": "train",
        "test_path": "test",
        "kb_path": "kb",
        "m": "m",
        "rounds": "rounds",
        "hidden_dim": "hidden_dim",
        "local_epochs": "local_epochs",
        "synth_test_per_class": "synth_test_per_class",
        "stability_trials": "stability_trials",
    }
    for attr, key in simple.items():
        if key in raw:
            kwargs[attr] = raw.pop(key)
    for attr, key in (
        ("seeds", "seeds"),
        ("arms", "arms"),
        ("subsample_sizes", "subsample_sizes"),
    ):
        if key in raw:
            kwargs[attr] = tuple(raw.pop(key))
    try:
        if "synth" in raw:
            synth = dict(raw.pop("synth"))
            if "class_counts" in synth:
                synth["class_counts"] = tuple(synth["class_counts"])
            kwargs["synth"] = SynthSpec(**synth)
        if "partition" in raw:
            kwargs["partition_spec"] = PartitionSpec(**raw.pop("partition"))
        if "augment" in raw:
            kwargs["augment_plan"] = AugmentPlan(**raw.pop("augment"))
        if "tail" in raw:
            kwargs["tail_policy"] = TailPolicy(**raw.pop("tail"))
        if "trainer" in raw:
            kwargs["trainer"] = TrainConfig(**raw.pop("trainer"))
    except (TypeError, ValueError, GgcalError) as e:
        raise ConfigError(str(e)) from e
    if raw:
        raise ConfigError(f"unknown config keys: {sorted(raw)}")
    try:
        return SimConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from e


def load_config(path: str | Path) -> SimConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"{path}: {e.strerror or e}") from e
    try:
        raw = yaml.safe_load(text)  # YAML is a JSON superset
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: cannot parse config: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a mapping")
    return config_from_dict(raw)


def _config_digest(cfg: SimConfig) -> str:
    def default(o):
        if isinstance(o, tuple):
            return list(o)
        return str(o)

    tree = asdict(cfg)
    tree.pop("out_dir")  # where outputs land is not part of the experiment
    canon = json.dumps(tree, sort_keys=True, default=default)
    return hashlib.sha256(canon.encode()).hexdigest()


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n")


def _write_manifest(cfg: SimConfig, out: Path) -> None:
    _write_json(
        out / "manifest.json",
        {
            "config_sha256": _config_digest(cfg),
            "mode": cfg.mode,
            "seeds": list(cfg.seeds),
            "ggcal_version": __version__,
        },
    )


def _load_data(cfg: SimConfig, seed: int) -> tuple[EmbeddingSet, EmbeddingSet | None]:
    if cfg.synth is not None:
        spec = replace(cfg.synth, seed=cfg.synth.seed + seed)
        train_set, test_set, _ = synth_train_test(spec, cfg.synth_test_per_class)
        return train_set, test_set
    train_set = load_container(cfg.train_path)
    test_set = load_container(cfg.test_path) if cfg.test_path else None
    return train_set, test_set


def _kb_data(cfg: SimConfig, seed: int) -> EmbeddingSet:
    if cfg.kb_path is not None:
        return load_container(cfg.kb_path)
    # synthetic fallback: a balanced draw from the same generating truth
    spec = replace(cfg.synth, seed=cfg.synth.seed + seed)
    _, kb_set, _ = synth_train_test(spec, max(cfg.synth_test_per_class, 500))
    return kb_set


def run_fed(cfg: SimConfig) -> dict:
    """Federated experiment; returns per-seed, per-arm round accuracies."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    multi = cfg.mode == "fed_multi_domain"
    results: dict = {}
    csv_lines = ["seed,arm,round,top1_overall"]
    for seed in cfg.seeds:
        train_set, test_set = _load_data(cfg, seed)
        if test_set is None:
            raise ConfigError("federated modes require a test set")
        pspec = replace(cfg.partition_spec, seed=cfg.partition_spec.seed + seed)
        if multi and pspec.kind == "dirichlet_label_skew":
            pspec = replace(pspec, kind="fixed_assignment")
        parts = partition(train_set, pspec)
        client_sets = [train_set.take(p) for p in parts if len(p)]
        uploads = [
            upload_from_set(cs, client_id=k) for k, cs in enumerate(client_sets)
        ]
        bank = build_shape_bank(uploads, cfg.m, include_prototypes=multi)
        seed_res: dict = {}
        for arm in cfg.arms:
            if arm == "ggeur":
                plan = replace(cfg.augment_plan, seed=cfg.augment_plan.seed + seed)
                aug = augment_multi_domain if multi else augment_single_domain
                arm_sets = [aug(cs, bank, plan) for cs in client_sets]
            else:
                arm_sets = client_sets
            accs = _federated_rounds(cfg, arm_sets, test_set, seed)
            seed_res[arm] = accs
            for r, acc in enumerate(accs, 1):
                csv_lines.append(f"{seed},{arm},{r},{acc:.6f}")
        results[seed] = seed_res
    (out / "rounds.csv").write_text("\n".join(csv_lines) + "\n")
    summary = {
        str(seed): {
            arm: {
                "final_round": accs[-1],
                "final5_mean": float(np.mean(accs[-5:])),
            }
            for arm, accs in seed_res.items()
        }
        for seed, seed_res in results.items()
    }
    _write_json(out / "report.json", summary)
    _write_manifest(cfg, out)
    return results


def _federated_rounds(
    cfg: SimConfig,
    client_sets: list[EmbeddingSet],
    test_set: EmbeddingSet,
    seed: int,
) -> list[float]:
    dim = test_set.dim
    num_classes = test_set.num_classes
    global_params = init_params(dim, cfg.hidden_dim, num_classes, seed=seed)
    counts = [cs.n for cs in client_sets]
    accs = []
    for rnd in range(cfg.rounds):
        local = []
        for k, cs in enumerate(client_sets):
            tc = replace(
                cfg.trainer,
                epochs=cfg.local_epochs,
                seed=(seed * 1_000_003 + rnd * 1009 + k),
            )
            local.append(train(cs, tc, global_params))
        global_params = fedavg(local, counts)
        report = evaluate(global_params, test_set)
        accs.append(report.top1_overall)
    return accs


def run_longtail(cfg: SimConfig) -> dict:
    """Long-tail experiment; GGEUR-layer arm vs plain control, paired seeds."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    results: dict = {}
    for seed in cfg.seeds:
        train_set, test_set = _load_data(cfg, seed)
        if test_set is None:
            raise ConfigError("longtail mode requires a test set")
        if cfg.partition_spec.kind == "longtail_exponential":
            pspec = replace(cfg.partition_spec, seed=cfg.partition_spec.seed + seed)
            train_set = train_set.take(partition(train_set, pspec)[0])
        kb = build_knowledge_base(_kb_data(cfg, seed), cfg.m)
        counts = train_set.class_counts()
        threshold = cfg.tail_policy.effective_threshold(counts)
        tail_classes = [
            c for c in range(train_set.num_classes) if 0 < counts[c] < threshold
        ]
        protos = class_prototypes(train_set)
        tail_shapes = {
            c: kb.shapes[match_class(protos[c], kb, 1)[0]] for c in tail_classes
        }
        seed_res = {}
        for arm in cfg.arms:
            tc = replace(
                cfg.trainer,
                seed=seed,
                sampler="inverse_frequency",
                ggeur_shapes=tail_shapes if arm == "ggeur" else None,
                ggeur_scale_mode=cfg.tail_policy.scale_mode,
            )
            params = train(
                train_set,
                tc,
                init_params(train_set.dim, cfg.hidden_dim, train_set.num_classes, seed),
            )
            report = evaluate(params, test_set, train_counts=counts)
            seed_res[arm] = report.to_dict()
        results[seed] = seed_res
    _write_json(out / "report.json", {str(k): v for k, v in results.items()})
    _write_manifest(cfg, out)
    return results


def run_analysis(cfg: SimConfig) -> dict[str, str]:
    """Emit the consistency / stability / size-ratio / cross-domain CSVs."""
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.seeds[0]
    ref_set, _ = _load_data(cfg, seed)
    cand_set = _kb_data(cfg, seed) if (cfg.kb_path or cfg.synth) else ref_set

    curve = consistency_curve(ref_set, cand_set, cfg.m)
    tables = {"consistency.csv": consistency_curve_csv(curve)}

    stab = matching_stability(
        ref_set, list(cfg.subsample_sizes), cand_set, cfg.stability_trials, seed
    )
    tables["stability.csv"] = matching_stability_csv(stab)

    # size ratio between each reference class and its top-1 match
    ref_shapes = class_shapes(ref_set, cfg.m)
    cand_shapes = class_shapes(cand_set, cfg.m)
    lines = ["ref_class,matched_class,size_ratio"]
    for rc, ranked in sorted(curve.items()):
        cc = ranked[0][0]
        denom = size_of(cand_shapes[cc])
        ratio = size_of(ref_shapes[rc]) / denom if denom else float("nan")
        lines.append(f"{rc},{cc},{ratio:.12g}")
    tables["size_ratio.csv"] = "\n".join(lines) + "\n"

    # cross-domain shape similarity per class, within the reference set
    lines = ["class_id,domain_a,domain_b,shape_similarity"]
    for c in range(ref_set.num_classes):
        per_domain = {}
        for d in range(ref_set.num_domains):
            idx = np.intersect1d(ref_set.class_indices(c), ref_set.domain_indices(d))
            if len(idx) > 1:
                sub = ref_set.take(idx)
                per_domain[d] = class_shapes(sub, cfg.m)[c]
        doms = sorted(per_domain)
        for i, da in enumerate(doms):
            for db in doms[i:]:
                s = shape_similarity(per_domain[da], per_domain[db])
                lines.append(f"{c},{da},{db},{s:.12g}")
    tables["cross_domain_similarity.csv"] = "\n".join(lines) + "\n"

    for name, text in tables.items():
        (out / name).write_text(text)
    _write_manifest(cfg, out)
    return tables
