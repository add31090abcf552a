import json

import numpy as np
import pytest

from kgtopo.models import (
    ModelConfig,
    init_model,
    load_checkpoint,
    save_checkpoint,
    score,
    score_tails,
    score_triples,
)


def small_model(scorer, dim=8, norm=2, seed=0, E=7, R=3, init_scale=0.5):
    cfg = ModelConfig(scorer=scorer, dim=dim, norm=norm, init_scale=init_scale, seed=seed)
    return init_model(cfg, E, R)


class TestConfig:
    def test_rotate_needs_even_dim(self):
        with pytest.raises(ValueError, match="even"):
            ModelConfig(scorer="rotate", dim=7)

    def test_unknown_scorer(self):
        with pytest.raises(ValueError, match="scorer"):
            ModelConfig(scorer="complex")

    def test_relation_widths(self):
        assert ModelConfig(scorer="transe", dim=10).relation_width == 10
        assert ModelConfig(scorer="distmult", dim=10).relation_width == 10
        assert ModelConfig(scorer="rotate", dim=10).relation_width == 5
        assert ModelConfig(scorer="triplere", dim=10).relation_width == 30

    def test_default_init_scale_is_margin_over_dim(self):
        assert ModelConfig(dim=48).resolved_init_scale() == pytest.approx(12.0 / 48)

    def test_distmult_norm_warning(self):
        with pytest.warns(UserWarning, match="norm"):
            init_model(ModelConfig(scorer="distmult", dim=4, norm=1), 3, 2)


class TestInit:
    def test_deterministic_per_seed(self):
        a = small_model("transe", seed=5)
        b = small_model("transe", seed=5)
        assert np.array_equal(a.entity_table, b.entity_table)
        assert np.array_equal(a.relation_table, b.relation_table)

    @pytest.mark.parametrize("scorer", ["transe", "distmult", "triplere"])
    def test_zero_scale_gives_zero_tables(self, scorer):
        m = small_model(scorer, init_scale=0.0)
        assert not m.entity_table.any()
        assert not m.relation_table.any()

    def test_rotate_phases_in_pi_range(self):
        m = small_model("rotate", dim=64, E=50)
        assert m.relation_table.min() >= -np.pi
        assert m.relation_table.max() <= np.pi

    def test_bounds_follow_init_scale(self):
        m = small_model("transe", init_scale=0.25, E=200)
        assert np.abs(m.entity_table).max() <= 0.25


class TestScore:
    def test_transe_identical_entities_zero_relation(self):
        m = small_model("transe")
        m.entity_table[1] = m.entity_table[0]
        m.relation_table[0] = 0.0
        assert score(m, 0, 0, 1) == 0.0

    def test_distmult_symmetric_exactly(self, rng):
        m = small_model("distmult", dim=16, E=30)
        for _ in range(500):
            h, t = rng.integers(0, 30, 2)
            r = rng.integers(0, 3)
            assert score(m, int(h), int(r), int(t)) == score(m, int(t), int(r), int(h))

    def test_rotate_all_pi_phases_symmetric(self):
        m = small_model("rotate", dim=8)
        m.relation_table[:] = np.pi
        for h, t in [(0, 1), (2, 5), (3, 4)]:
            assert score(m, h, 0, t) == pytest.approx(score(m, t, 0, h), abs=1e-6)

    def test_transe_asymmetry_witness(self, rng):
        m = small_model("transe", E=20)
        found = False
        for _ in range(100):
            h, t = rng.integers(0, 20, 2)
            if score(m, int(h), 0, int(t)) != score(m, int(t), 0, int(h)):
                found = True
                break
        assert found

    @pytest.mark.parametrize(
        "scorer,norm", [("transe", 1), ("transe", 2), ("distmult", 2), ("rotate", 1), ("rotate", 2), ("triplere", 1), ("triplere", 2)]
    )
    def test_matches_extended_precision_reference(self, scorer, norm, rng):
        m = small_model(scorer, dim=8, norm=norm, E=10)
        he = m.entity_table.astype(np.longdouble)
        re_ = m.relation_table.astype(np.longdouble)
        for _ in range(50):
            h, t = (int(x) for x in rng.integers(0, 10, 2))
            r = int(rng.integers(0, 3))
            hv, rv, tv = he[h], re_[r], he[t]
            if scorer == "transe":
                u = hv + rv - tv
                ref = -(np.abs(u).sum() if norm == 1 else np.sqrt((u * u).sum()))
            elif scorer == "distmult":
                ref = ((rv * hv) * tv).sum()
            elif scorer == "rotate":
                d2 = rv.shape[0]
                hc = hv[:d2] + 1j * hv[d2:].astype(np.complex128)
                tc = tv[:d2] + 1j * tv[d2:].astype(np.complex128)
                u = hc * np.exp(1j * rv.astype(np.complex128)) - tc
                mods = np.abs(u)
                ref = -(mods.sum() if norm == 1 else np.sqrt((mods * mods).sum()))
            else:
                d = hv.shape[0]
                u = hv * rv[:d] + rv[d : 2 * d] - tv * rv[2 * d :]
                ref = -(np.abs(u).sum() if norm == 1 else np.sqrt((u * u).sum()))
            assert score(m, h, r, t) == pytest.approx(float(ref), rel=1e-10, abs=1e-10)

    def test_transe_relation_composition_is_translation_sum(self):
        # Integer-valued embeddings make float addition exact.
        m = small_model("transe", dim=4, E=3, R=3)
        m.entity_table[:] = np.array([[1, 2, 3, 4], [5, 6, 7, 8], [0, 0, 0, 0]], dtype=np.float32)
        m.relation_table[:] = np.array([[1, 0, 2, 0], [0, 3, 0, 1], [1, 3, 2, 1]], dtype=np.float32)
        h = m.entity_table[0].astype(np.float64)
        step = (h + m.relation_table[0]) + m.relation_table[1]
        direct = h + m.relation_table[2]
        assert np.array_equal(step, direct)

    def test_rotate_inverse_rotation_is_identity(self):
        m = small_model("rotate", dim=8)
        from kgtopo.models import _rotate_parts

        h = m.entity_table[0].astype(np.float64)
        phases = m.relation_table[0].astype(np.float64)
        vr, vi = _rotate_parts(h[None, :], phases[None, :])
        v = np.concatenate([vr, vi], axis=-1)
        wr, wi = _rotate_parts(v, -phases[None, :])
        back = np.concatenate([wr, wi], axis=-1)
        assert np.allclose(back, h, atol=1e-12)

    def test_out_of_range_ids(self):
        m = small_model("distmult")
        with pytest.raises(IndexError):
            score(m, 99, 0, 0)
        with pytest.raises(IndexError):
            score(m, 0, 9, 0)


class TestScoreTails:
    @pytest.mark.parametrize("scorer", ["transe", "distmult", "rotate", "triplere"])
    def test_bit_identical_to_scalar_loop(self, scorer):
        m = small_model(scorer, dim=8, E=50)
        vec = score_tails(m, 3, 1, np.arange(50))
        loop = np.array([score(m, 3, 1, c) for c in range(50)])
        assert np.array_equal(vec, loop)

    def test_single_candidate(self):
        m = small_model("transe")
        assert score_tails(m, 0, 0, [4])[0] == score(m, 0, 0, 4)

    def test_permutation_equivariance(self, rng):
        m = small_model("rotate", dim=8, E=20)
        perm = rng.permutation(20)
        base = score_tails(m, 1, 0, np.arange(20))
        assert np.array_equal(score_tails(m, 1, 0, perm), base[perm])

    def test_empty_candidates_rejected(self):
        m = small_model("transe")
        with pytest.raises(ValueError):
            score_tails(m, 0, 0, [])

    def test_translation_shift_preserves_transe_ordering(self, rng):
        m = small_model("transe", E=30)
        order_before = np.argsort(score_tails(m, 2, 1, np.arange(30)))
        m.entity_table += rng.normal(size=m.entity_table.shape[1]).astype(np.float32)
        order_after = np.argsort(score_tails(m, 2, 1, np.arange(30)))
        assert np.array_equal(order_before, order_after)


class TestCheckpoint:
    @pytest.mark.parametrize("scorer", ["transe", "distmult", "rotate", "triplere"])
    def test_roundtrip(self, tmp_path, scorer):
        m = small_model(scorer, dim=6 if scorer != "rotate" else 8)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        again = load_checkpoint(path)
        assert again.config == m.config
        assert np.array_equal(again.entity_table, m.entity_table)
        assert np.array_equal(again.relation_table, m.relation_table)

    def test_documented_layout_parses_by_hand(self, tmp_path):
        m = small_model("distmult", dim=4, E=3, R=2)
        path = tmp_path / "model.ckpt"
        save_checkpoint(m, path)
        raw = path.read_bytes()
        header_len = int.from_bytes(raw[:8], "little")
        header = json.loads(raw[8 : 8 + header_len])
        offset = 8 + header_len
        ent = np.frombuffer(
            raw[offset : offset + 4 * 3 * 4], dtype="<f4"
        ).reshape(3, 4)
        assert header["scorer"] == "distmult"
        assert np.array_equal(ent, m.entity_table)

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk.ckpt"
        path.write_bytes(b"\x02\x00\x00\x00\x00\x00\x00\x00{}")
        with pytest.raises(ValueError, match="not a recognized checkpoint"):
            load_checkpoint(path)


def test_score_triples_matches_scalar(rng):
    m = small_model("triplere", dim=6, E=15)
    triples = np.stack([rng.integers(0, 15, 20), rng.integers(0, 3, 20), rng.integers(0, 15, 20)], axis=1)
    batch = score_triples(m, triples)
    for i, (h, r, t) in enumerate(triples):
        assert batch[i] == score(m, int(h), int(r), int(t))
