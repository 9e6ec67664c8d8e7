import json
import os

import numpy as np
import pytest

from sda import pipeline
from sda.cli import main
from sda.config import PipelineConfig
from sda.errors import ConfigError
from sda.svm import ParamGrid

from conftest import write_config_file


class TestPrepare:
    def test_balanced_set_is_half_positive(self, synth_config):
        prepared = pipeline.prepare(synth_config)
        n = len(prepared.labels)
        assert prepared.labels.sum() * 2 == n
        assert n == 2 * len(prepared.positives)
        assert prepared.features.shape == (
            n, prepared.am.n_snornas + prepared.am.n_diseases
        )

    def test_selected_negatives_are_unknown_pairs(self, synth_config):
        prepared = pipeline.prepare(synth_config)
        known = set(prepared.positives)
        negatives = prepared.pairs[len(prepared.positives):]
        assert not known & set(negatives)
        assert len(set(negatives)) == len(negatives)

    def test_strict_fold_features_differ_on_affected_pairs(self, synth_config):
        prepared = pipeline.prepare(synth_config)
        test_idx = np.arange(10)  # first ten samples are positives
        strict = prepared.strict_fold_features(test_idx)
        assert strict.shape == prepared.features.shape
        assert not np.array_equal(strict, prepared.features)

    def test_score_pairs_chunking_is_equivalent(self, synth_config):
        prepared = pipeline.prepare(synth_config)
        ens, model = pipeline.train_final(prepared, synth_config)
        pairs = prepared.negatives[:300]
        a = pipeline.score_pairs(prepared, ens, model, pairs, chunk=64)
        b = pipeline.score_pairs(prepared, ens, model, pairs, chunk=4096)
        np.testing.assert_array_equal(a, b)


class TestPrecomputedDiseaseSimilarity:
    def test_similarity_file_replaces_dag(self, synth_dataset, tmp_path):
        from sda.similarity import disease_semantic_similarity, save_similarity_matrix

        am = synth_dataset["am"]
        dag = synth_dataset["dag"]
        # precomputed matrix covering all but the last two diseases
        covered = am.disease_ids[:-2]
        dss = disease_semantic_similarity(dag, 0.5, ids=covered)
        sim_path = str(tmp_path / "disease_sim.csv")
        save_similarity_matrix(dss, sim_path)

        p = synth_dataset["paths"]
        cfg = PipelineConfig(
            association_path=p["association"],
            feature_path=p["features"],
            disease_similarity_path=sim_path,
            output_dir=str(tmp_path / "out"),
            k=10,
            seed=6,
            svm_c=(10.0,),
            svm_gamma=(0.1,),
        )
        prepared = pipeline.prepare(cfg)
        # uncovered diseases fall back to the interaction-profile kernel
        assert not prepared.dss.available[-1, -1]
        assert prepared.mdss.available.all()
        i = am.disease_ids.index(covered[0])
        j = am.disease_ids.index(covered[1])
        assert prepared.dss.available[i, j]
        report = pipeline.evaluate(prepared, cfg)
        assert report.mean["roc_auc"] > 0.8


class TestStrictFolds:
    def test_strict_mode_runs_and_is_deterministic(self, synth_dataset, tmp_path):
        p = synth_dataset["paths"]

        def run():
            cfg = PipelineConfig(
                association_path=p["association"],
                feature_path=p["features"],
                dag_path=p["dag"],
                output_dir=str(tmp_path / "out"),
                k=10,
                seed=9,
                svm_c=(10.0,),
                svm_gamma=(0.1,),
                mode="strict-folds",
            )
            prepared = pipeline.prepare(cfg)
            return pipeline.evaluate(prepared, cfg)

        a, b = run(), run()
        assert a.mode == "strict-folds"
        assert a.mean == b.mean
        # kernels built from training folds only still carry the block signal
        assert a.mean["roc_auc"] > 0.8

    def test_strict_features_rebuild_drops_test_positives(self, synth_config):
        prepared = pipeline.prepare(synth_config)
        n_pos = len(prepared.positives)
        test_idx = np.arange(n_pos // 5)
        strict = prepared.strict_fold_features(test_idx)
        # rows of untouched pairs may still shift (bandwidth is global), but
        # every pair feature must remain a valid similarity value
        assert np.all(strict >= 0.0) and np.all(strict <= 1.0)
        assert strict.shape == prepared.features.shape


class TestParamGridDefault:
    def test_default_grid_values(self):
        grid = ParamGrid.default(80)
        assert grid.c_values == [0.1, 1.0, 10.0, 100.0]
        assert grid.gamma_values == [1.0 / 80, 0.01, 0.1, 1.0]


class TestChooseKWiring:
    def test_k_range_selects_and_runs(self, synth_dataset, tmp_path):
        p = synth_dataset["paths"]
        cfg = PipelineConfig(
            association_path=p["association"],
            feature_path=p["features"],
            dag_path=p["dag"],
            output_dir=str(tmp_path / "out"),
            k_range=(3, 6),
            seed=2,
            svm_c=(10.0,),
            svm_gamma=(0.1,),
        )
        prepared = pipeline.prepare(cfg)
        assert prepared.k_used in (3, 6)
        assert prepared.labels.sum() * 2 == len(prepared.labels)


class TestPreparedReuse:
    def test_reuse_gives_identical_report(self, synth_dataset, tmp_path):
        p = synth_dataset["paths"]
        base = dict(
            association_path=p["association"],
            feature_path=p["features"],
            dag_path=p["dag"],
            k=10,
            seed=3,
            svm_c="10",
            svm_gamma="0.1",
        )
        prep_out = str(tmp_path / "prep")
        cfg1 = write_config_file(tmp_path / "c1.txt", output_dir=prep_out, **base)
        assert main(["prepare", "--config", cfg1]) == 0

        direct_out = str(tmp_path / "direct")
        cfg2 = write_config_file(tmp_path / "c2.txt", output_dir=direct_out, **base)
        assert main(["evaluate", "--config", cfg2]) == 0

        reuse_out = str(tmp_path / "reuse")
        cfg3 = write_config_file(
            tmp_path / "c3.txt", output_dir=reuse_out, prepared_dir=prep_out, **base
        )
        assert main(["evaluate", "--config", cfg3]) == 0

        a = open(os.path.join(direct_out, "report.json"), "rb").read()
        b = open(os.path.join(reuse_out, "report.json"), "rb").read()
        assert a == b

    def test_reuse_rejects_strict_folds(self, synth_dataset, tmp_path):
        p = synth_dataset["paths"]
        cfg = PipelineConfig(
            association_path=p["association"],
            prepared_dir=str(tmp_path / "nonexistent"),
            mode="strict-folds",
        )
        with pytest.raises(ConfigError, match="paper-faithful"):
            pipeline.prepare(cfg)


class TestModelArtifacts:
    def test_rank_writes_model_jsons(self, synth_dataset, tmp_path):
        p = synth_dataset["paths"]
        out = str(tmp_path / "out")
        cfg = write_config_file(
            tmp_path / "cfg.txt",
            association_path=p["association"],
            feature_path=p["features"],
            dag_path=p["dag"],
            output_dir=out,
            k=10,
            seed=4,
            svm_c="10",
            svm_gamma="0.1",
            top_k=3,
        )
        assert main(["rank", "--config", cfg]) == 0
        gb = json.loads(open(os.path.join(out, "gbdt_model.json")).read())
        sv = json.loads(open(os.path.join(out, "svm_model.json")).read())
        assert gb["version"] == "gbdt-v1" and len(gb["trees"]) == gb["n_trees"]
        assert sv["version"] == "svm-v1" and len(sv["supports"]) > 0


class TestUsageErrors:
    def test_unknown_command_exits_one(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["frobnicate"])
        assert exc.value.code == 1

    def test_unknown_flag_exits_one(self):
        with pytest.raises(SystemExit) as exc:
            main(["prepare", "--no-such-flag"])
        assert exc.value.code == 1
