import json

import pytest

from gman import config as cfgmod
from gman.config import ConfigError, TrainConfig, family, resolve_variant


class TestVariants:
    def test_gan(self):
        agg, loss, n = resolve_variant("GAN")
        assert (agg.kind, agg.lambda_mode, agg.lam, loss, n) == ("am", "fixed", 0.0, "original", 1)

    def test_mod_gan(self):
        cfg = TrainConfig.from_dict({"variant": "mod-GAN"})
        assert cfg.n == 1 and cfg.loss_mode == "modified"

    def test_fixed_temperature(self):
        cfg = TrainConfig.from_dict({"variant": "GMAN-0", "n": 5})
        assert cfg.aggregation.kind == "am" and cfg.aggregation.lam == 0.0
        assert not cfg.aggregation.learned and cfg.n == 5
        assert TrainConfig.from_dict({"variant": "GMAN-1.5"}).aggregation.lam == 1.5

    def test_max_and_learned(self):
        assert TrainConfig.from_dict({"variant": "GMAN-max", "n": 2}).aggregation.kind == "max"
        star = TrainConfig.from_dict({"variant": "GMAN*", "n": 5})
        assert star.aggregation.learned
        assert (star.aggregation.Lambda_init, star.aggregation.c) == (-2.0, 0.001)

    def test_unknown_variant(self):
        with pytest.raises(ConfigError, match="variant"):
            TrainConfig.from_dict({"variant": "WGAN"})

    def test_forced_n_conflict(self):
        with pytest.raises(ConfigError, match="n"):
            TrainConfig.from_dict({"variant": "GAN", "n": 3})

    def test_family(self):
        assert family(TrainConfig.from_dict({"variant": "GMAN*", "n": 5})) == "GMAN* N=5"


class TestValidation:
    def test_unknown_field(self):
        with pytest.raises(ConfigError, match="colour"):
            TrainConfig.from_dict({"colour": "red"})

    def test_indivisible_batch(self):
        with pytest.raises(ConfigError, match="batch_size"):
            TrainConfig.from_dict({"n": 3, "batch_size": 100})

    def test_shared_split_allows_any_batch(self):
        cfg = TrainConfig.from_dict({"n": 3, "batch_size": 100, "ensemble": {"split_mode": "shared"}})
        assert cfg.n == 3

    def test_loss_conflict(self):
        with pytest.raises(ConfigError, match="loss_mode"):
            TrainConfig.from_dict({"variant": "GAN", "loss_mode": "modified"})

    def test_width_mismatch(self):
        with pytest.raises(ConfigError, match="generator.widths"):
            TrainConfig.from_dict({"generator": {"widths": [64, 32, 3]}})

    def test_idx_needs_shape(self):
        with pytest.raises(ConfigError, match="rows"):
            TrainConfig.from_dict({"dataset": {"kind": "idx", "path": "x"}})

    def test_bad_json(self):
        with pytest.raises(ConfigError, match="JSON"):
            cfgmod.loads("{not json")
        with pytest.raises(ConfigError, match="object"):
            cfgmod.loads("[1, 2]")

    def test_nonpositive_iterations(self):
        with pytest.raises(ConfigError, match="iterations"):
            TrainConfig.from_dict({"iterations": 0})


class TestRoundTrip:
    @pytest.mark.parametrize("variant,n", [("GAN", 1), ("mod-GAN", 1), ("GMAN-0", 5),
                                           ("GMAN-max", 2), ("GMAN*", 5), ("GMAN-1", 3)])
    def test_dict(self, variant, n):
        batch = 99 if n == 3 else 100
        cfg = TrainConfig.from_dict({"variant": variant, "n": n, "batch_size": batch, "seed": 4})
        assert TrainConfig.from_dict(cfg.to_dict()) == cfg
        assert cfgmod.loads(cfgmod.dumps(cfg)) == cfg

    def test_defaults(self):
        cfg = TrainConfig()
        assert cfg.generator.widths == (64, 128, 128, 2)
        assert cfg.discriminator.widths == (2, 64, 64, 1)
        assert cfg.adam_hyper == {"lr": 2e-4, "beta1": 0.5, "beta2": 0.999, "eps": 1e-8}

    def test_dumps_is_stable_json(self):
        text = cfgmod.dumps(TrainConfig())
        assert json.loads(text)["variant"] == "GMAN-0"
        assert cfgmod.dumps(cfgmod.loads(text)) == text

    def test_shipped_configs_load(self):
        from pathlib import Path
        shipped = sorted((Path(__file__).parent.parent / "configs").glob("*.json"))
        assert shipped
        for path in shipped:
            cfgmod.load(path)
