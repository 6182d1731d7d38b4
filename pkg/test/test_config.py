# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

import pytest

from gmreplay import config
from gmreplay.exceptions import GmreplayConfigError

REF_DATA_DIR = "/some/random/dir/for/testing/"
REF_CONF_CONTENTS = """DATA_DIR = "{}"
COMPONENTS = 25
""".format(REF_DATA_DIR)


class TestConfig(object):
    def setup_method(self, method):
        config._config = None

    def teardown_method(self, method):
        config._config = None

    def test_get_config_object(self, monkeypatch):
        """Simple test to grab a config object, will return default config
        values.
        """

        monkeypatch.setattr(config, "CONF_DIRS", [])
        ref_conf = config.ConfigData()

        test_conf = config.get_config()

        assert ref_conf.COMPONENTS == test_conf.COMPONENTS
        assert test_conf is config.get_config()

    def test_missing_config_file(self, monkeypatch):
        """Make sure that None is returned if no config files are found"""
        monkeypatch.setattr(config, "CONF_DIRS", [])

        test_config_filename = config._find_config_file()
        assert test_config_filename is None

    def test_load_config_object(self, tmpdir):
        """load config object from file, make sure it's loaded properly"""

        refdir = tmpdir.mkdir("conf")
        ref_conf_filename = "{}/{}".format(refdir, config.CONF_FILE)
        with open(ref_conf_filename, "w+") as ref_conffile:
            ref_conffile.write(REF_CONF_CONTENTS)

        test_config = config._load_config(ref_conf_filename)

        assert test_config.DATA_DIR == REF_DATA_DIR

    def test_load_merge_config_file(self, tmpdir, monkeypatch):
        """get config, making sure that an addional config file is found. make
        sure that default values are properly overridden.
        """

        refdir = tmpdir.mkdir("conf")
        ref_conf_filename = "{}/{}".format(refdir, config.CONF_FILE)
        with open(ref_conf_filename, "w+") as ref_conffile:
            ref_conffile.write(REF_CONF_CONTENTS)

        monkeypatch.setattr(config, "CONF_DIRS", [str(refdir)])
        test_config = config.get_config()

        assert test_config.DATA_DIR == REF_DATA_DIR
        assert test_config.COMPONENTS == 25


class TestExperimentConfig(object):
    def setup_method(self, method):
        self.defaults = config.ConfigData()

    def test_defaults(self):
        experiment = config.ExperimentConfig(defaults=self.defaults)
        assert experiment.components == 100
        assert experiment.gmm_lr == 0.01
        assert experiment.classifier_lr == 0.01
        assert experiment.batch_size == 100
        assert experiment.kappa == 2.0
        assert experiment.confidence == 0.95
        assert experiment.outlier_c == 1.0
        assert experiment.hidden_sizes == [800, 800, 800]

    def test_lists_are_not_shared(self):
        experiment = config.ExperimentConfig(defaults=self.defaults)
        experiment.ewc_grid.append(1.0)
        assert self.defaults.EWC_GRID == [1e-3, 1e-4, 1e-5, 1e-6, 1e-7]

    def _write(self, tmpdir, name, text):
        path = tmpdir.join(name)
        path.write(text)
        return str(path)

    def test_key_value_file(self, tmpdir):
        path = self._write(tmpdir, "exp.conf", "# comment\nslt = D5-5a\nmodel = ewc  # trailing\newc_grid = 1e-3, 1e-4\nweighted_responsibilities = yes\ngmm_step_clip = none\n")
        experiment = config.load_experiment_config(path, environ={}, defaults=self.defaults)
        assert experiment.slt == "D5-5a"
        assert experiment.model == "ewc"
        assert experiment.ewc_grid == [1e-3, 1e-4]
        assert experiment.weighted_responsibilities is True
        assert experiment.gmm_step_clip is None
        assert experiment.source == path

    def test_include_relative_to_file(self, tmpdir):
        tmpdir.mkdir("base")
        self._write(tmpdir, "base/common.conf", "components = 20\nseed = 4\n")
        path = self._write(tmpdir, "exp.conf", "include base/common.conf\nseed = 9\n")
        experiment = config.load_experiment_config(path, environ={}, defaults=self.defaults)
        assert experiment.components == 20
        assert experiment.seed == 9

    def test_include_cycle(self, tmpdir):
        self._write(tmpdir, "a.conf", "include b.conf\n")
        path = self._write(tmpdir, "b.conf", "include a.conf\n")
        with pytest.raises(GmreplayConfigError, match="cycle"):
            config.load_experiment_config(path, environ={}, defaults=self.defaults)

    def test_environment_overrides_file(self, tmpdir):
        path = self._write(tmpdir, "exp.conf", "components = 20\n")
        environ = {"GMREPLAY_COMPONENTS": "30", "OTHER_COMPONENTS": "1"}
        experiment = config.load_experiment_config(path, environ=environ, defaults=self.defaults)
        assert experiment.components == 30

    def test_unknown_key(self, tmpdir):
        path = self._write(tmpdir, "exp.conf", "componentz = 20\n")
        with pytest.raises(GmreplayConfigError, match="exp.conf:1"):
            config.load_experiment_config(path, environ={}, defaults=self.defaults)

    def test_bad_value(self):
        with pytest.raises(GmreplayConfigError, match="strategy"):
            config.ExperimentConfig(defaults=self.defaults, strategy="greedy")

    def test_out_of_range(self):
        with pytest.raises(GmreplayConfigError, match="confidence"):
            config.ExperimentConfig(defaults=self.defaults, confidence=1.5)

    def test_missing_file(self, tmpdir):
        with pytest.raises(GmreplayConfigError):
            config.load_experiment_config(str(tmpdir.join("nope.conf")), environ={}, defaults=self.defaults)

    def test_dump_round_trips_and_hash_is_stable(self, tmpdir):
        experiment = config.ExperimentConfig(defaults=self.defaults, components=7, ewc_grid=[0.5])
        path = self._write(tmpdir, "dump.conf", experiment.dump())
        loaded = config.load_experiment_config(path, environ={}, defaults=self.defaults)
        assert loaded.dump() == experiment.dump()
        assert loaded.config_hash() == experiment.config_hash()
        assert len(experiment.config_hash()) == 12

    def test_hash_ignores_data_dir(self):
        first = config.ExperimentConfig(defaults=self.defaults, data_dir="/a")
        second = config.ExperimentConfig(defaults=self.defaults, data_dir="/b")
        assert first.config_hash() == second.config_hash()
        assert first.config_hash() != first.copy(seed=1).config_hash()
