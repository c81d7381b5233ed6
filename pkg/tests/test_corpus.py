import json

import numpy as np
import pytest

from weakshot.config import ConfigError, CorpusConfig
from weakshot.corpus import (
    CorpusError,
    GenerationError,
    WeakImage,
    corpus_hash,
    generate_corpus,
    load_corpus,
    save_corpus,
)


@pytest.fixture(scope="module")
def small_cfg():
    return CorpusConfig(seed=9, n_source=20, n_target=10, n_test=8)


@pytest.fixture(scope="module")
def small_corpus(small_cfg):
    return generate_corpus(small_cfg)


class TestGeneration:
    def test_seeded_determinism(self, small_cfg, small_corpus):
        again = generate_corpus(small_cfg)
        assert corpus_hash(small_corpus) == corpus_hash(again)

    def test_different_seed_differs(self, small_cfg, small_corpus):
        other = generate_corpus(CorpusConfig(seed=10, n_source=20, n_target=10, n_test=8))
        assert corpus_hash(other) != corpus_hash(small_corpus)

    def test_empty_source_allowed(self):
        corpus = generate_corpus(CorpusConfig(seed=1, n_source=0, n_target=2, n_test=2))
        assert corpus.source_train == [] and corpus.source_val == []
        assert len(corpus.target_train) == 2

    def test_counts_and_val_split(self, small_cfg, small_corpus):
        n_val = round(small_cfg.n_source * small_cfg.source_val_fraction)
        assert len(small_corpus.source_val) == n_val
        assert len(small_corpus.source_train) == small_cfg.n_source - n_val
        assert len(small_corpus.target_train) == small_cfg.n_target
        assert len(small_corpus.target_test) == small_cfg.n_test

    def test_source_images_carry_only_base_boxes(self, small_corpus):
        base = set(small_corpus.base_ids)
        for rec in small_corpus.source_train + small_corpus.source_val:
            assert len(rec.boxes) >= 1
            cats = {cid for _, cid in rec.boxes}
            assert cats <= base
            assert rec.image_labels == frozenset(cats)

    def test_target_train_is_weakly_annotated(self, small_corpus):
        novel = set(small_corpus.novel_ids)
        for rec in small_corpus.target_train:
            assert isinstance(rec, WeakImage)
            assert not hasattr(rec, "boxes")
            assert len(rec.image_labels) >= 1
            assert rec.image_labels <= novel

    def test_target_test_keeps_novel_boxes(self, small_corpus):
        novel = set(small_corpus.novel_ids)
        for rec in small_corpus.target_test:
            assert len(rec.boxes) >= 1
            assert {cid for _, cid in rec.boxes} <= novel

    def test_boxes_inside_image(self, small_corpus):
        size = small_corpus.source_train[0].pixels.shape[0]
        for rec in small_corpus.source_train + small_corpus.target_test:
            for box, _ in rec.boxes:
                assert 0 <= box.x_min < box.x_max <= size
                assert 0 <= box.y_min < box.y_max <= size

    def test_pixels_quantized_unit_range(self, small_corpus):
        px = small_corpus.source_train[0].pixels
        assert px.dtype == np.float32
        assert px.min() >= 0.0 and px.max() <= 1.0
        u8 = np.round(px * 255.0)
        assert np.allclose(px, u8 / 255.0, atol=1e-6)

    def test_category_splits_disjoint(self, small_corpus):
        assert not set(small_corpus.base_ids) & set(small_corpus.novel_ids)

    def test_impossible_placement_names_image(self):
        cfg = CorpusConfig(seed=3, n_source=1, n_target=0, n_test=0,
                           image_size=32, objects_per_image=(8, 8))
        with pytest.raises(GenerationError) as exc:
            generate_corpus(cfg)
        assert "source_00000" in str(exc.value)

    def test_config_validation(self):
        with pytest.raises(ConfigError) as exc:
            CorpusConfig(n_source=-1).validate()
        assert exc.value.field == "n_source"
        with pytest.raises(ConfigError):
            CorpusConfig(novel_categories=["circle_red"]).validate()


class TestRoundtrip:
    def test_save_load_identity(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        loaded = load_corpus(tmp_path)
        assert corpus_hash(loaded) == corpus_hash(small_corpus)
        a = small_corpus.source_train[0]
        b = loaded.source_train[0]
        assert np.array_equal(a.pixels, b.pixels)
        assert [(box.to_array().tolist(), cid) for box, cid in a.boxes] == [
            (box.to_array().tolist(), cid) for box, cid in b.boxes
        ]
        assert a.image_labels == b.image_labels

    def test_unknown_category_id_rejected(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["images"][0]["boxes"][0]["category"] = 999
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CorpusError, match="999"):
            load_corpus(tmp_path)

    def test_truncated_image_rejected(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        target = tmp_path / "images" / f"{small_corpus.source_train[0].image_id}.png"
        target.write_bytes(target.read_bytes()[:40])
        with pytest.raises(CorpusError, match=small_corpus.source_train[0].image_id):
            load_corpus(tmp_path)

    def test_missing_image_rejected(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        (tmp_path / "images" / f"{small_corpus.target_test[0].image_id}.png").unlink()
        with pytest.raises(CorpusError, match=small_corpus.target_test[0].image_id):
            load_corpus(tmp_path)

    def test_schema_version_mismatch(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        manifest["schema_version"] = 99
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CorpusError, match="schema_version"):
            load_corpus(tmp_path)

    def test_malformed_json(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        (tmp_path / "manifest.json").write_text("{not json")
        with pytest.raises(CorpusError, match="malformed"):
            load_corpus(tmp_path)

    def test_target_train_boxes_rejected(self, small_corpus, tmp_path):
        save_corpus(small_corpus, tmp_path)
        manifest = json.loads((tmp_path / "manifest.json").read_text())
        for entry in manifest["images"]:
            if entry["split"] == "target_train":
                entry["boxes"] = [
                    {"x_min": 1, "y_min": 1, "x_max": 5, "y_max": 5, "category": 0}
                ]
                break
        (tmp_path / "manifest.json").write_text(json.dumps(manifest))
        with pytest.raises(CorpusError, match="target_train"):
            load_corpus(tmp_path)


class TestShapeCatalog:
    def test_every_recipe_renders(self):
        from weakshot.corpus import _RECIPES, _grid, _shape_mask

        xs, ys = _grid(40 * 4)
        for name, (shape, _, aspect) in _RECIPES.items():
            mask = _shape_mask(shape, 20, 20, 10, 10 * aspect, xs, ys)
            area = mask.mean() * 40 * 40
            assert 20 < area < 420, f"{name} rendered area {area}"
