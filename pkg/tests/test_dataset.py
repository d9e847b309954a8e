import dataclasses
import json

import numpy as np
import pytest
from scipy import stats

from poe_supcon.dataset import (Dataset, DatasetError, Language, Modality,
                                ModalityBlock, import_csv, load_dataset,
                                read_container, write_container, write_dataset)
from poe_supcon.synthetic import (SynthConfig, bias_flipped, corpus_summary,
                                  generate_synthetic)


def small_dataset(n_participants=2, seed=0, dims=None):
    cfg = SynthConfig(n_participants=n_participants, n_mci=1, n_english=1,
                      n_english_mci=1, dims=dims or {"speech": 4, "text": 3},
                      seed=seed)
    return generate_synthetic(cfg)


class TestContainer:
    def test_round_trip(self, tmp_path):
        data = np.arange(12, dtype=np.float32).reshape(3, 4)
        path = tmp_path / "x.mceb"
        write_container(path, data)
        assert np.array_equal(read_container(path), data)

    def test_zero_rows(self, tmp_path):
        path = tmp_path / "empty.mceb"
        write_container(path, np.zeros((0, 5), dtype=np.float32))
        out = read_container(path)
        assert out.shape == (0, 5)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.mceb"
        path.write_bytes(b"XXXX" + bytes(20))
        with pytest.raises(DatasetError, match="bad magic"):
            read_container(path)

    def test_truncated_payload(self, tmp_path):
        path = tmp_path / "short.mceb"
        write_container(path, np.ones((2, 2), dtype=np.float32))
        path.write_bytes(path.read_bytes()[:-4])
        with pytest.raises(DatasetError, match="header implies"):
            read_container(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            read_container(tmp_path / "nope.mceb")


class TestLoadWrite:
    def test_round_trip_is_bit_exact(self, tmp_path):
        ds = small_dataset(n_participants=4, seed=3)
        write_dataset(ds, tmp_path)
        again = load_dataset(tmp_path / "manifest.json")
        assert again == ds

    def test_happy_path_shapes(self, tmp_path):
        ds = small_dataset()  # 2 participants -> 6 samples, 2 modalities
        write_dataset(ds, tmp_path)
        loaded = load_dataset(tmp_path / "manifest.json")
        assert len(loaded) == 6
        assert loaded.blocks[Modality.SPEECH].dim == 4
        assert loaded.blocks[Modality.TEXT].dim == 3

    def test_empty_dataset_round_trips(self, tmp_path):
        ds = Dataset(samples=[], blocks={
            Modality.TEXT: ModalityBlock(Modality.TEXT, 3, np.zeros((0, 3), np.float32))})
        write_dataset(ds, tmp_path)
        assert len(load_dataset(tmp_path / "manifest.json")) == 0

    def test_unwritable_target_is_io_error(self, tmp_path):
        blocker = tmp_path / "not_a_dir"
        blocker.write_text("occupied")
        with pytest.raises(OSError):
            write_dataset(small_dataset(), blocker)

    def test_missing_manifest(self, tmp_path):
        with pytest.raises(DatasetError, match="manifest not found"):
            load_dataset(tmp_path / "manifest.json")

    def test_dim_mismatch_names_both_values(self, tmp_path):
        ds = small_dataset()
        write_dataset(ds, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["modalities"][0]["dim"] = 768
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(DatasetError, match=r"declares 768.*says 4"):
            load_dataset(tmp_path / "manifest.json")

    def test_nan_is_reported_with_row(self, tmp_path):
        ds = small_dataset()
        ds.blocks[Modality.SPEECH].data[3, 1] = np.nan
        write_dataset(ds, tmp_path)
        with pytest.raises(DatasetError, match="row 3"):
            load_dataset(tmp_path / "manifest.json")

    def test_duplicate_sample_id(self, tmp_path):
        ds = small_dataset()
        ds.samples[1] = dataclasses.replace(ds.samples[1], sample_id=ds.samples[0].sample_id)
        write_dataset(ds, tmp_path)
        with pytest.raises(DatasetError, match="duplicate sample_id"):
            load_dataset(tmp_path / "manifest.json")

    def test_missing_container_file(self, tmp_path):
        write_dataset(small_dataset(), tmp_path)
        (tmp_path / "speech.mceb").unlink()
        with pytest.raises(DatasetError, match="not found"):
            load_dataset(tmp_path / "manifest.json")

    def test_partial_participant_warns_but_loads(self, tmp_path):
        ds = small_dataset()
        ds.samples = ds.samples[:5]  # second participant loses one picture
        for block in ds.blocks.values():
            block.data = block.data[:5]
        write_dataset(ds, tmp_path)
        with pytest.warns(UserWarning, match="full language triple"):
            loaded = load_dataset(tmp_path / "manifest.json")
        assert len(loaded) == 5

    def test_language_picture_coupling_warns(self, tmp_path):
        ds = small_dataset()
        ds.samples[0] = dataclasses.replace(ds.samples[0], picture_id=5)
        write_dataset(ds, tmp_path)
        with pytest.warns(UserWarning, match="expected one of"):
            load_dataset(tmp_path / "manifest.json")


class TestSynthetic:
    def test_default_counts_match_corpus_statistics(self):
        ds = generate_synthetic(SynthConfig(dims={"text": 8}))
        counts = corpus_summary(ds)
        assert counts["samples"] == 387
        assert counts["participants"] == 129
        assert counts["by_label"] == {"NC": 165, "MCI": 222}
        assert counts["by_language"] == {"En": 186, "Zh": 201}

    def test_each_participant_covers_its_language_triple(self):
        ds = generate_synthetic(SynthConfig(dims={"text": 4}, seed=5))
        by_pid = {}
        for s in ds.samples:
            by_pid.setdefault(s.participant_id, []).append(s)
        for group in by_pid.values():
            assert len(group) == 3
            pictures = sorted(s.picture_id for s in group)
            lang = group[0].language
            assert pictures == ([1, 2, 3] if lang == Language.EN else [4, 5, 6])

    def test_same_seed_bit_identical(self):
        cfg = SynthConfig(n_participants=10, n_mci=6, n_english=5, n_english_mci=3,
                          dims={"speech": 6, "text": 5}, seed=11)
        assert generate_synthetic(cfg) == generate_synthetic(cfg)

    def test_zero_signal_pictures_indistinguishable(self):
        # no planted structure -> per-picture means differ only by chance
        for seed in range(5):
            cfg = SynthConfig(n_participants=40, n_mci=20, n_english=20,
                              n_english_mci=10, dims={"text": 16},
                              picture_signal_strength=0.0, label_signal_strength=0.0,
                              noise_std=1.0, seed=seed)
            ds = generate_synthetic(cfg)
            x = ds.feature_matrix("text")
            pics = ds.picture_ids()
            a = x[pics == 1].mean(axis=1)
            b = x[pics == 2].mean(axis=1)
            assert stats.ttest_ind(a, b).pvalue > 0.01

    def test_picture_strength_spreads_centroids_monotonically(self):
        for seed in range(5):
            spreads = []
            for strength in (0.5, 1.5, 3.0):
                cfg = SynthConfig(n_participants=20, n_mci=10, n_english=10,
                                  n_english_mci=5, dims={"text": 12},
                                  picture_signal_strength=strength, seed=seed)
                ds = generate_synthetic(cfg)
                x = ds.feature_matrix("text")
                pics = ds.picture_ids()
                centroids = np.stack([x[pics == p].mean(axis=0) for p in range(1, 7)])
                dists = [np.linalg.norm(centroids[i] - centroids[j])
                         for i in range(6) for j in range(i + 1, 6)]
                spreads.append(np.mean(dists))
            assert spreads[0] < spreads[1] < spreads[2]

    def test_bias_flip_changes_only_biased_subgroup(self):
        cfg = SynthConfig(n_participants=8, n_mci=4, n_english=4, n_english_mci=2,
                          dims={"speech": 6}, spurious_subgroup_bias=1.0, seed=2)
        ds = generate_synthetic(cfg)
        flipped = generate_synthetic(bias_flipped(cfg))
        x, xf = ds.feature_matrix("speech"), flipped.feature_matrix("speech")
        is_zh = np.array([s.language == Language.ZH for s in ds.samples])
        assert np.array_equal(x[~is_zh], xf[~is_zh])
        assert not np.allclose(x[is_zh], xf[is_zh])

    def test_invalid_configs_rejected(self):
        with pytest.raises(ValueError, match="noise_std"):
            SynthConfig(noise_std=0.0).validate()
        with pytest.raises(ValueError, match="n_mci"):
            SynthConfig(n_mci=200).validate()
        with pytest.raises(ValueError, match="positive"):
            SynthConfig(dims={"text": 0}).validate()
        with pytest.raises(ValueError, match="spurious"):
            SynthConfig(spurious_subgroup_bias=1.5).validate()


class TestCsvImport:
    def _write_fixture(self, tmp_path, n_rows=6):
        ds = small_dataset()
        lines = ["sample_id,participant_id,picture_id,language,gender,label"]
        for s in ds.samples[:n_rows]:
            lines.append(f"{s.sample_id},{s.participant_id},{s.picture_id},"
                         f"{s.language.value},{s.gender.value},{s.label.name}")
        samples_csv = tmp_path / "samples.csv"
        samples_csv.write_text("\n".join(lines) + "\n")
        emb = np.round(np.random.default_rng(0).normal(size=(n_rows, 3)), 4)
        emb_csv = tmp_path / "text.csv"
        emb_csv.write_text("\n".join(",".join(str(v) for v in row) for row in emb) + "\n")
        return samples_csv, emb_csv, emb

    def test_import_then_write_round_trips(self, tmp_path):
        samples_csv, emb_csv, emb = self._write_fixture(tmp_path)
        ds = import_csv(samples_csv, {"text": emb_csv})
        assert len(ds) == 6
        assert np.allclose(ds.blocks[Modality.TEXT].data, emb.astype(np.float32))
        out = tmp_path / "converted"
        write_dataset(ds, out)
        assert load_dataset(out / "manifest.json") == ds

    def test_wrong_header_rejected(self, tmp_path):
        samples_csv, emb_csv, _ = self._write_fixture(tmp_path)
        samples_csv.write_text("id,participant\nx,y\n")
        with pytest.raises(DatasetError, match="header"):
            import_csv(samples_csv, {"text": emb_csv})

    def test_row_count_mismatch_rejected(self, tmp_path):
        samples_csv, emb_csv, emb = self._write_fixture(tmp_path)
        emb_csv.write_text("1.0,2.0,3.0\n")
        with pytest.raises(DatasetError, match="embedding rows"):
            import_csv(samples_csv, {"text": emb_csv})
