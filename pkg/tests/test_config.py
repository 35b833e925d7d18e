"""Configuration loading and runtime assembly."""

import textwrap

import pytest

from guardgate.attribution import index_corpus
from guardgate.config import (
    AppConfig,
    AttributionEntry,
    LexiconEntry,
    build_runtime,
    load_config,
)
from guardgate.errors import ConfigError
from guardgate.model import Direction
from guardgate.store import DataStore

LEXICON_YAML = """\
category: gambling
threshold: 0.3
keywords:
  poker: 1.0
  bets: 0.8
"""

POLICY_YAML = """\
policy_id: local
rules:
  - rule_id: mask-pii
    predicate: finding(category = "pii.*")
    action: mask
"""


class TestLoadConfig:
    def test_defaults_without_file(self, monkeypatch):
        monkeypatch.delenv("GUARDGATE_CONFIG", raising=False)
        monkeypatch.delenv("GUARDGATE_LISTEN", raising=False)
        cfg = load_config()
        assert (cfg.host, cfg.port) == ("127.0.0.1", 8080)
        assert cfg.pii_enabled
        assert [e.source for e in cfg.lexicons] == ["builtin:hap"]

    def test_file_values(self, tmp_path):
        cfg_file = tmp_path / "gate.yaml"
        (tmp_path / "lex.yaml").write_text(LEXICON_YAML)
        cfg_file.write_text(textwrap.dedent("""\
            listen: 0.0.0.0:9000
            workers: 8
            pii:
              timeout_ms: 500
            lexicons:
              - source: lex.yaml
                sentence_level: true
            detector_defaults:
              response: [pii]
            """))
        cfg = load_config(cfg_file)
        assert (cfg.host, cfg.port) == ("0.0.0.0", 9000)
        assert cfg.workers == 8
        assert cfg.pii_timeout_ms == 500.0
        # relative paths resolve against the config file directory
        assert cfg.lexicons[0].source == str(tmp_path / "lex.yaml")
        assert cfg.detector_defaults == {Direction.RESPONSE: ["pii"]}

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(tmp_path / "absent.yaml")

    def test_invalid_yaml(self, tmp_path):
        p = tmp_path / "bad.yaml"
        p.write_text("listen: [unclosed")
        with pytest.raises(ConfigError):
            load_config(p)

    @pytest.mark.parametrize("listen", ["no-port", "host:notanumber", ""])
    def test_bad_listen(self, tmp_path, listen):
        p = tmp_path / "gate.yaml"
        p.write_text(f"listen: '{listen}'\n")
        with pytest.raises(ConfigError):
            load_config(p)

    def test_env_config_fallback(self, tmp_path, monkeypatch):
        p = tmp_path / "gate.yaml"
        p.write_text("workers: 5\n")
        monkeypatch.setenv("GUARDGATE_CONFIG", str(p))
        assert load_config().workers == 5

    def test_env_listen_wins(self, tmp_path, monkeypatch):
        p = tmp_path / "gate.yaml"
        p.write_text("listen: 10.0.0.1:1234\n")
        monkeypatch.setenv("GUARDGATE_LISTEN", "127.0.0.1:0")
        cfg = load_config(p)
        assert (cfg.host, cfg.port) == ("127.0.0.1", 0)

    def test_named_missing_paths(self, tmp_path):
        p = tmp_path / "gate.yaml"
        p.write_text("policies: nowhere/\n")
        with pytest.raises(ConfigError) as ei:
            load_config(p)
        assert "nowhere" in str(ei.value)

    def test_unknown_builtin_lexicon(self, tmp_path):
        p = tmp_path / "gate.yaml"
        p.write_text("lexicons:\n  - source: builtin:nope\n")
        with pytest.raises(ConfigError) as ei:
            load_config(p)
        assert "nope" in str(ei.value)

    def test_attribution_requires_store(self, tmp_path):
        p = tmp_path / "gate.yaml"
        p.write_text("attribution:\n  index_id: corpus-main\n")
        with pytest.raises(ConfigError) as ei:
            load_config(p)
        assert "store" in str(ei.value)


class TestBuildRuntime:
    def test_default_runtime_detectors(self):
        rt = build_runtime(AppConfig())
        try:
            assert rt.registry.ids() == ("pii", "kw.hap")
            assert sorted(rt.engine.policy_ids()) == ["default", "gdpr-strict"]
            assert rt.store is None
        finally:
            rt.close()

    def test_pii_can_be_disabled(self):
        rt = build_runtime(AppConfig(pii_enabled=False, lexicons=[
            LexiconEntry("builtin:hap", sentence_level=True)]))
        try:
            assert rt.registry.ids() == ("kw.hap",)
        finally:
            rt.close()

    def test_attribution_detector_from_store(self, tmp_path):
        store = DataStore(tmp_path / "store")
        idx = index_corpus([("d", "one two three four five six seven")])
        store.put("indexes", "corpus-main", idx.to_bytes())
        cfg = AppConfig(store_root=str(tmp_path / "store"),
                        attribution=AttributionEntry())
        rt = build_runtime(cfg)
        try:
            assert "attribution" in rt.registry.ids()
        finally:
            rt.close()

    def test_attribution_missing_index(self, tmp_path):
        cfg = AppConfig(store_root=str(tmp_path / "store"),
                        attribution=AttributionEntry(index_id="ghost"))
        with pytest.raises(ConfigError) as ei:
            build_runtime(cfg)
        assert "ghost" in str(ei.value)

    def test_policy_dir_and_store_overlay(self, tmp_path):
        policy_dir = tmp_path / "policies"
        policy_dir.mkdir()
        (policy_dir / "local.yaml").write_text(POLICY_YAML)
        store = DataStore(tmp_path / "store")
        # the stored copy of "local" adds a second rule and must win
        stored = POLICY_YAML + (
            "  - rule_id: extra\n"
            "    predicate: finding(category = \"hap\")\n"
            "    action: warn\n")
        store.put("policies", "local", stored.encode())
        cfg = AppConfig(policies=str(policy_dir),
                        store_root=str(tmp_path / "store"))
        rt = build_runtime(cfg)
        try:
            assert rt.engine.policy_ids() == ["local"]
            assert len(rt.engine.get("local").rules) == 2
        finally:
            rt.close()

    def test_bad_fail_mode(self):
        cfg = AppConfig(pii_fail_mode="explode")
        with pytest.raises(ConfigError):
            build_runtime(cfg)

    def test_fail_mode_derived_from_policies(self, tmp_path):
        # gdpr-strict blocks on pii.*; with that policy loaded the pii
        # detector must default to fail-closed.
        rt = build_runtime(AppConfig())
        try:
            from guardgate.detectors import FailMode
            assert rt.registry.descriptor("pii").fail_mode is FailMode.FAIL_CLOSED
        finally:
            rt.close()

    def test_persist_and_remove_policy(self, tmp_path):
        from guardgate.policy import parse_template
        cfg = AppConfig(store_root=str(tmp_path / "store"))
        rt = build_runtime(cfg)
        try:
            tpl = parse_template(POLICY_YAML, source_name="local.yaml")
            rt.persist_policy(tpl)
            assert "local" in rt.engine
            assert rt.store.get("policies", "local") == POLICY_YAML.encode()
            rt.remove_policy("local")
            assert "local" not in rt.engine
            assert rt.store.list("policies") == []
        finally:
            rt.close()
