import pytest

from vlm_adapter.config import (AdapterConfig, AdapterError, CONFIG_ENV_VAR,
                                PROMPT_PRESETS, load_config, parse_config_file,
                                resolve_preset)


class TestDefaults:
    def test_default_values(self):
        cfg = AdapterConfig()
        cfg.validate()
        assert cfg.model == "mock"
        assert cfg.prompt == "Represent this document in one word:"
        assert cfg.mode == "single"
        assert cfg.raw_logit_cap == 2048
        assert cfg.batch_size == 8
        assert cfg.device == "auto"

    def test_presets_cover_the_four_paradigms(self):
        assert set(PROMPT_PRESETS) == {
            "compression", "keyword", "descriptive", "summarization"}
        assert resolve_preset("keyword") == \
            "What are the keywords of this document?"

    def test_unknown_preset(self):
        with pytest.raises(ValueError, match="unknown prompt preset"):
            resolve_preset("terse")


class TestValidation:
    @pytest.mark.parametrize("kwargs,needle", [
        ({"model": ""}, "model"),
        ({"prompt": ""}, "prompt"),
        ({"mode": "both"}, "mode"),
        ({"raw_logit_cap": 255}, "raw_logit_cap"),
        ({"raw_logit_cap": 0}, "raw_logit_cap"),
        ({"batch_size": 0}, "batch_size"),
    ])
    def test_rejects(self, kwargs, needle):
        with pytest.raises(AdapterError, match=needle):
            AdapterConfig(**kwargs).validate()

    def test_cap_at_the_floor_is_fine(self):
        AdapterConfig(raw_logit_cap=256).validate()


class TestConfigFile:
    def test_parse_and_load(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text(
            "# export knobs\n"
            "mode = multi\n"
            "raw_logit_cap = 512   # generous\n"
            "prompt.preset = summarization\n",
            encoding="utf-8")
        cfg = load_config(path)
        assert cfg.mode == "multi"
        assert cfg.raw_logit_cap == 512
        assert cfg.prompt == PROMPT_PRESETS["summarization"]

    def test_literal_prompt_key(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("prompt = Name the single key term:\n",
                        encoding="utf-8")
        assert load_config(path).prompt == "Name the single key term:"

    def test_later_key_wins_between_prompt_and_preset(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("prompt = custom one\nprompt.preset = keyword\n",
                        encoding="utf-8")
        assert load_config(path).prompt == PROMPT_PRESETS["keyword"]

    def test_unknown_key_with_line_number(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("mode = single\nprompt_mode = x\n", encoding="utf-8")
        with pytest.raises(AdapterError, match=r":2:.*'prompt_mode'"):
            parse_config_file(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("batch_size = many\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="bad value for 'batch_size'"):
            parse_config_file(path)

    def test_missing_equals(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("just words\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="key = value"):
            parse_config_file(path)

    def test_env_var_names_the_default_file(self, tmp_path, monkeypatch):
        path = tmp_path / "adapter.cfg"
        path.write_text("device = cpu\n", encoding="utf-8")
        monkeypatch.setenv(CONFIG_ENV_VAR, str(path))
        assert load_config().device == "cpu"
        monkeypatch.delenv(CONFIG_ENV_VAR)
        assert load_config().device == "auto"

    def test_overrides_beat_file(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("mode = multi\n", encoding="utf-8")
        cfg = load_config(path, {"mode": "single", "batch_size": None})
        assert cfg.mode == "single"
        assert cfg.batch_size == 8

    def test_unknown_override_attr(self):
        with pytest.raises(AdapterError, match="unknown config attributes"):
            load_config(None, {"models": "mock"})

    def test_invalid_merged_config_rejected(self, tmp_path):
        path = tmp_path / "adapter.cfg"
        path.write_text("raw_logit_cap = 16\n", encoding="utf-8")
        with pytest.raises(AdapterError, match="raw_logit_cap"):
            load_config(path)
