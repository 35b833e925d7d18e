"""Service configuration: YAML schema, environment overrides, and runtime
assembly (registry + policy engine + orchestrator + store).

With no config file everything falls back to packaged defaults: the builtin
rule pack, the builtin hap lexicon, and the example policies.  Referenced
paths are checked up front; a missing file is CONFIG_INVALID naming the
path, not a late crash.

Environment overrides: ``GUARDGATE_LISTEN`` replaces the listen address,
``GUARDGATE_CONFIG`` supplies the config path when the CLI is given none.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import yaml

from .attribution import AttributionDetector, CorpusIndex
from .detectors import (DetectorDescriptor, DetectorKind, DetectorRegistry,
                        FailMode, RemoteDetector, derive_fail_mode)
from .errors import ConfigError, GuardgateError
from .keywords import (CategoryLexicon, LexiconDetector, lexicon_from_yaml,
                       load_lexicon)
from .model import Direction
from .orchestrator import DEFAULT_WORKERS, Orchestrator
from .pii import PiiDetector, load_rulepack
from .policy import (PolicyEngine, PolicyTemplate, builtin_jurisdiction_overrides,
                     builtin_policies, load_jurisdiction_dir, load_policy_dir,
                     parse_template)
from .store import DataStore

ENV_LISTEN = "GUARDGATE_LISTEN"
ENV_CONFIG = "GUARDGATE_CONFIG"

DEFAULT_TIMEOUT_MS = 2000.0


@dataclass
class LexiconEntry:
    source: str                   # "builtin:hap" or a file path
    detector_id: str | None = None
    sentence_level: bool = False
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    fail_mode: str | None = None


@dataclass
class RemoteEntry:
    detector_id: str
    endpoint: str
    categories: list[str] = field(default_factory=list)
    kind: str = DetectorKind.CLASSIFICATION.value
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    fail_mode: str | None = None


@dataclass
class AttributionEntry:
    index_id: str = "corpus-main"
    chunk_len: int = 12
    overlap: int = 6
    max_candidates: int = 20
    min_similarity: float = 0.8
    timeout_ms: float = DEFAULT_TIMEOUT_MS
    fail_mode: str | None = None


@dataclass
class AppConfig:
    host: str = "127.0.0.1"
    port: int = 8080
    workers: int = DEFAULT_WORKERS
    store_root: str | None = None
    rulepack: str = "default"
    policies: str = "builtin"          # "builtin" or a directory
    jurisdictions: str | None = None   # extra override tables directory
    pii_enabled: bool = True
    pii_timeout_ms: float = DEFAULT_TIMEOUT_MS
    pii_fail_mode: str | None = None
    lexicons: list[LexiconEntry] = field(
        default_factory=lambda: [LexiconEntry("builtin:hap", sentence_level=True)])
    attribution: AttributionEntry | None = None
    remote_detectors: list[RemoteEntry] = field(default_factory=list)
    detector_defaults: dict[Direction, list[str]] = field(default_factory=dict)


def _parse_listen(value: str) -> tuple[str, int]:
    host, sep, port = value.rpartition(":")
    if not sep or not port.isdigit():
        raise ConfigError(f"listen address must be host:port, got {value!r}")
    return host or "127.0.0.1", int(port)


def load_config(path: str | Path | None = None) -> AppConfig:
    """Read a config file (YAML) into an AppConfig, applying env overrides.

    ``path=None`` uses GUARDGATE_CONFIG if set, else pure defaults.
    """
    if path is None:
        env_path = os.environ.get(ENV_CONFIG)
        path = env_path if env_path else None
    cfg = AppConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {p}")
        try:
            doc = yaml.safe_load(p.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise ConfigError(f"config {p} is not valid YAML: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"config {p} must be a mapping")
        cfg = _config_from_doc(doc, base=p.parent)
    listen_env = os.environ.get(ENV_LISTEN)
    if listen_env:
        cfg.host, cfg.port = _parse_listen(listen_env)
    _check_paths(cfg)
    return cfg


def _resolve(base: Path, value: str) -> str:
    q = Path(value)
    return str(q if q.is_absolute() else base / q)


def _config_from_doc(doc: dict, base: Path) -> AppConfig:
    cfg = AppConfig()
    if "listen" in doc:
        cfg.host, cfg.port = _parse_listen(str(doc["listen"]))
    cfg.workers = int(doc.get("workers", DEFAULT_WORKERS))
    if cfg.workers < 1:
        raise ConfigError(f"workers must be >= 1, got {cfg.workers}")
    if doc.get("store"):
        cfg.store_root = _resolve(base, str(doc["store"]))
    rulepack = str(doc.get("rulepack", "default"))
    cfg.rulepack = rulepack if rulepack == "default" else _resolve(base, rulepack)
    policies = str(doc.get("policies", "builtin"))
    cfg.policies = policies if policies == "builtin" else _resolve(base, policies)
    if doc.get("jurisdictions"):
        cfg.jurisdictions = _resolve(base, str(doc["jurisdictions"]))

    pii = doc.get("pii") or {}
    cfg.pii_enabled = bool(pii.get("enabled", True))
    cfg.pii_timeout_ms = float(pii.get("timeout_ms", DEFAULT_TIMEOUT_MS))
    cfg.pii_fail_mode = pii.get("fail_mode")

    if "lexicons" in doc:
        cfg.lexicons = []
        for item in doc["lexicons"] or []:
            source = str(item["source"])
            if not source.startswith("builtin:"):
                source = _resolve(base, source)
            cfg.lexicons.append(LexiconEntry(
                source=source,
                detector_id=item.get("detector_id"),
                sentence_level=bool(item.get("sentence_level", False)),
                timeout_ms=float(item.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
                fail_mode=item.get("fail_mode"),
            ))

    if doc.get("attribution"):
        a = doc["attribution"]
        cfg.attribution = AttributionEntry(
            index_id=str(a.get("index_id", "corpus-main")),
            chunk_len=int(a.get("chunk_len", 12)),
            overlap=int(a.get("overlap", 6)),
            max_candidates=int(a.get("max_candidates", 20)),
            min_similarity=float(a.get("min_similarity", 0.8)),
            timeout_ms=float(a.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
            fail_mode=a.get("fail_mode"),
        )

    for item in doc.get("remote_detectors") or []:
        cfg.remote_detectors.append(RemoteEntry(
            detector_id=str(item["detector_id"]),
            endpoint=str(item["endpoint"]),
            categories=[str(c) for c in item.get("categories", [])],
            kind=str(item.get("kind", DetectorKind.CLASSIFICATION.value)),
            timeout_ms=float(item.get("timeout_ms", DEFAULT_TIMEOUT_MS)),
            fail_mode=item.get("fail_mode"),
        ))

    for direction, ids in (doc.get("detector_defaults") or {}).items():
        cfg.detector_defaults[Direction(direction)] = [str(d) for d in ids]
    return cfg


def _check_paths(cfg: AppConfig) -> None:
    if cfg.rulepack != "default" and not Path(cfg.rulepack).is_file():
        raise ConfigError(f"rule pack file not found: {cfg.rulepack}")
    if cfg.policies != "builtin" and not Path(cfg.policies).is_dir():
        raise ConfigError(f"policies directory not found: {cfg.policies}")
    if cfg.jurisdictions and not Path(cfg.jurisdictions).is_dir():
        raise ConfigError(f"jurisdictions directory not found: {cfg.jurisdictions}")
    for entry in cfg.lexicons:
        if entry.source.startswith("builtin:"):
            name = entry.source.split(":", 1)[1]
            res = resources.files("guardgate").joinpath(f"data/lexicons/{name}.yaml")
            if not res.is_file():
                raise ConfigError(f"no builtin lexicon {name!r}")
        elif not Path(entry.source).is_file():
            raise ConfigError(f"lexicon file not found: {entry.source}")
    if cfg.attribution and not cfg.store_root:
        raise ConfigError("attribution requires a store (set 'store')")


def _load_lexicon_entry(entry: LexiconEntry) -> CategoryLexicon:
    if entry.source.startswith("builtin:"):
        name = entry.source.split(":", 1)[1]
        res = resources.files("guardgate").joinpath(f"data/lexicons/{name}.yaml")
        return lexicon_from_yaml(res.read_text(encoding="utf-8"), source=entry.source)
    return load_lexicon(entry.source)


@dataclass
class Runtime:
    """Everything a running service needs, wired together."""

    config: AppConfig
    registry: DetectorRegistry
    engine: PolicyEngine
    orchestrator: Orchestrator
    store: DataStore | None

    def close(self) -> None:
        self.orchestrator.close()

    def persist_policy(self, template: PolicyTemplate) -> None:
        self.engine.upsert(template)
        if self.store is not None:
            self.store.put("policies", template.policy_id,
                           template.source.encode("utf-8"))

    def remove_policy(self, policy_id: str) -> None:
        self.engine.remove(policy_id)
        if self.store is not None:
            try:
                self.store.delete("policies", policy_id)
            except GuardgateError:
                pass


def _fail_mode(configured: str | None, categories: frozenset[str],
               templates) -> FailMode:
    if configured:
        try:
            return FailMode(configured)
        except ValueError:
            raise ConfigError(f"unknown fail_mode {configured!r}") from None
    return derive_fail_mode(categories, templates)


def build_runtime(cfg: AppConfig) -> Runtime:
    """Assemble the full runtime from a validated config."""
    store = DataStore(cfg.store_root) if cfg.store_root else None

    # policy set: builtin or directory, then store-persisted copies on top
    if cfg.policies == "builtin":
        templates = builtin_policies()
    else:
        templates = load_policy_dir(cfg.policies)
    if store is not None:
        for pid in store.list("policies"):
            text = store.get("policies", pid).decode("utf-8")
            t = parse_template(text, source_name=f"store:{pid}")
            templates[t.policy_id] = t

    overrides = builtin_jurisdiction_overrides()
    if cfg.jurisdictions:
        overrides.update(load_jurisdiction_dir(cfg.jurisdictions))
    engine = PolicyEngine(templates.values(), overrides)
    loaded = list(templates.values())

    registry = DetectorRegistry()
    if cfg.pii_enabled:
        det = PiiDetector(load_rulepack(cfg.rulepack))
        categories = frozenset(det.rules.categories())
        registry.register(
            DetectorDescriptor(det.detector_id, DetectorKind.EXTRACTION, categories,
                               cfg.pii_timeout_ms,
                               _fail_mode(cfg.pii_fail_mode, categories, loaded)),
            det)
    for entry in cfg.lexicons:
        lexicon = _load_lexicon_entry(entry)
        det = LexiconDetector(lexicon, entry.detector_id,
                              sentence_level=entry.sentence_level)
        categories = frozenset({lexicon.category})
        registry.register(
            DetectorDescriptor(det.detector_id, DetectorKind.CLASSIFICATION,
                               categories, entry.timeout_ms,
                               _fail_mode(entry.fail_mode, categories, loaded)),
            det)
    if cfg.attribution:
        if store is None:
            raise ConfigError("attribution requires a store")
        try:
            data = store.get("indexes", cfg.attribution.index_id)
        except GuardgateError as exc:
            raise ConfigError(
                f"attribution index {cfg.attribution.index_id!r} not in store: "
                f"{exc}") from exc
        det = AttributionDetector(
            CorpusIndex.from_bytes(data),
            chunk_len=cfg.attribution.chunk_len,
            overlap=cfg.attribution.overlap,
            max_candidates=cfg.attribution.max_candidates,
            min_similarity=cfg.attribution.min_similarity)
        categories = frozenset({"attribution"})
        registry.register(
            DetectorDescriptor(det.detector_id, DetectorKind.COMPARISON, categories,
                               cfg.attribution.timeout_ms,
                               _fail_mode(cfg.attribution.fail_mode, categories,
                                          loaded)),
            det)
    for entry in cfg.remote_detectors:
        categories = frozenset(entry.categories)
        impl = RemoteDetector(entry.detector_id, entry.endpoint, entry.timeout_ms)
        registry.register(
            DetectorDescriptor(entry.detector_id, DetectorKind(entry.kind),
                               categories, entry.timeout_ms,
                               _fail_mode(entry.fail_mode, categories, loaded)),
            impl)

    orchestrator = Orchestrator(
        registry, engine, workers=cfg.workers,
        direction_defaults=dict(cfg.detector_defaults))
    return Runtime(cfg, registry, engine, orchestrator, store)
