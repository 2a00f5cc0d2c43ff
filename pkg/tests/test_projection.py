import numpy as np
import pytest
import torch

from kwforge import (DataError, EmbeddingMap, ModelError, ToyTranslationModel,
                     Vocabulary, build_index, load_index, project_embeddings,
                     save_index)
from kwforge.projection import cached_index

from .util import brute_force_projection


def random_map(d, d_lm, seed):
    g = torch.Generator().manual_seed(seed)
    return EmbeddingMap(torch.randn(d_lm, d, generator=g, dtype=torch.float64),
                        torch.randn(d_lm, generator=g, dtype=torch.float64))


# -- index construction ---------------------------------------------------------------

def test_identity_map_on_unit_table_reproduces_rows(toy_model, identity_map):
    index = build_index(toy_model, identity_map, excluded_ids=())
    # toy embeddings are unit-norm already, so normalize(L(e)) == e
    assert torch.allclose(index.lm_vocab_matrix, toy_model.embed_table, atol=1e-12)


def test_index_rows_match_normalize_map_oracle(toy_model):
    emb_map = random_map(toy_model.d, 10, seed=2)
    index = build_index(toy_model, emb_map)
    table = toy_model.embed_table.numpy()
    W, b = emb_map.weight.numpy(), emb_map.bias.numpy()
    for i in range(10):
        mapped = W @ table[i] + b
        np.testing.assert_allclose(index.lm_vocab_matrix[i].numpy(),
                                   mapped / np.linalg.norm(mapped), atol=1e-12)


def test_default_exclusions_are_specials(toy_model, toy_index):
    vocab = toy_model.vocabulary
    assert toy_index.excluded_ids == frozenset({vocab.pad_id, vocab.bos_id, vocab.eos_id})


def test_non_excluded_rows_are_unit_norm(toy_model, toy_index):
    norms = toy_index.lm_vocab_matrix.norm(dim=1)
    for i, norm in enumerate(norms):
        if i not in toy_index.excluded_ids:
            assert abs(float(norm) - 1.0) < 1e-6


def test_all_ids_excluded_fails(toy_model, identity_map):
    with pytest.raises(ModelError):
        build_index(toy_model, identity_map, excluded_ids=range(len(toy_model.vocabulary)))


def test_zero_norm_mapped_row_auto_excluded(toy_model):
    # map projecting onto the first coordinate only; craft a table with a row
    # that dies under it by zeroing that coordinate
    vocab = toy_model.vocabulary
    table = toy_model.embed_table.clone()
    table[5] = 0.0
    table[5, 1] = 1.0  # survives full identity, dies under first-coordinate map
    model = ToyTranslationModel(
        vocab, table, W_enc=toy_model.W_enc, P_src=toy_model.P_src,
        W_dec=toy_model.W_dec, Q_step=toy_model.Q_step, W_ctx=toy_model.W_ctx,
        W_qry=toy_model.W_qry, b_z=toy_model.b_z, b_out=toy_model.b_out,
        tau=toy_model.tau, decode_limit=toy_model.decode_limit)
    weight = torch.zeros(toy_model.d, toy_model.d, dtype=torch.float64)
    weight[0, 0] = 1.0
    squash = EmbeddingMap(weight, torch.zeros(toy_model.d, dtype=torch.float64))
    with pytest.warns(UserWarning):
        index = build_index(model, squash)
    assert 5 in index.excluded_ids


# -- projection -----------------------------------------------------------------------

def test_exact_member_row_projects_to_itself(toy_model, toy_index, identity_map):
    e = toy_model.embed([4, 17, 40])
    ids, e_p = project_embeddings(e, toy_index, identity_map, toy_model)
    assert ids == (4, 17, 40)
    assert torch.equal(e_p, e)


def test_projection_is_scale_invariant(toy_model, toy_index, identity_map):
    e = toy_model.embed([8, 9]) + 0.05
    base, _ = project_embeddings(e, toy_index, identity_map, toy_model)
    for c in (2.0, 0.003, 417.0):
        scaled, _ = project_embeddings(c * e, toy_index, identity_map, toy_model)
        assert scaled == base


def test_projection_idempotent(toy_model, toy_index, identity_map):
    g = torch.Generator().manual_seed(4)
    e = torch.randn(6, toy_model.d, generator=g, dtype=torch.float64)
    ids1, e_p = project_embeddings(e, toy_index, identity_map, toy_model)
    ids2, e_p2 = project_embeddings(e_p, toy_index, identity_map, toy_model)
    assert ids1 == ids2
    assert torch.equal(e_p, e_p2)


def test_projection_matches_brute_force_scan(toy_model):
    rng = np.random.default_rng(99)
    vocab = toy_model.vocabulary
    excluded = {vocab.pad_id, vocab.bos_id, vocab.eos_id}
    for seed in range(5):
        emb_map = random_map(toy_model.d, 12, seed=seed)
        index = build_index(toy_model, emb_map)
        rows = torch.tensor(rng.normal(size=(20, toy_model.d)), dtype=torch.float64)
        ids, e_p = project_embeddings(rows, index, emb_map, toy_model)
        for r in range(rows.shape[0]):
            expected = brute_force_projection(
                rows[r].numpy(), emb_map.weight.numpy(), emb_map.bias.numpy(),
                toy_model.embed_table.numpy(), excluded)
            assert ids[r] == expected
            assert torch.equal(e_p[r], toy_model.embed_table[ids[r]])


def test_projection_never_returns_excluded_or_invalid(toy_model, toy_index, identity_map):
    g = torch.Generator().manual_seed(12)
    rows = torch.randn(40, toy_model.d, generator=g, dtype=torch.float64)
    ids, _ = project_embeddings(rows, toy_index, identity_map, toy_model)
    for i in ids:
        assert 0 <= i < len(toy_model.vocabulary)
        assert i not in toy_index.excluded_ids


def test_cosine_ties_break_to_smallest_token_id():
    # two identical content-token embeddings: projection must pick the lower id
    vocab = Vocabulary.from_words(["a", "b", "c"])
    table = torch.eye(7, dtype=torch.float64)[:7, :4].clone()
    table[4] = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)
    table[5] = torch.tensor([1.0, 0.0, 0.0, 0.0], dtype=torch.float64)  # duplicate of id 4
    table[6] = torch.tensor([0.0, 1.0, 0.0, 0.0], dtype=torch.float64)
    model = _tiny_model(vocab, table)
    emb_map = EmbeddingMap.identity(4)
    index = build_index(model, emb_map)
    ids, _ = project_embeddings(torch.tensor([[2.0, 0.1, 0.0, 0.0]], dtype=torch.float64),
                                index, emb_map, model)
    assert ids == (4,)


def test_non_finite_rows_rejected(toy_model, toy_index, identity_map):
    rows = torch.full((2, toy_model.d), float("inf"), dtype=torch.float64)
    with pytest.raises(ModelError):
        project_embeddings(rows, toy_index, identity_map, toy_model)


def _tiny_model(vocab, table):
    d = table.shape[1]
    eye = torch.eye(d, dtype=torch.float64)
    zeros = torch.zeros(d, d, dtype=torch.float64)
    return ToyTranslationModel(
        vocab, table, W_enc=eye, P_src=torch.zeros(8, d, dtype=torch.float64),
        W_dec=zeros, Q_step=torch.zeros(4, d, dtype=torch.float64), W_ctx=eye,
        W_qry=zeros, b_z=torch.zeros(d, dtype=torch.float64),
        b_out=torch.zeros(len(vocab), dtype=torch.float64), tau=1.0, decode_limit=4)


# -- cache file -----------------------------------------------------------------------

def test_index_save_load_roundtrip(toy_model, toy_index, tmp_path):
    path = tmp_path / "index.npz"
    save_index(toy_index, path)
    loaded = load_index(path, expected_fingerprint=toy_index.fingerprint)
    assert torch.equal(loaded.lm_vocab_matrix, toy_index.lm_vocab_matrix)
    assert loaded.excluded_ids == toy_index.excluded_ids


def test_index_load_rejects_foreign_fingerprint(toy_index, tmp_path):
    path = tmp_path / "index.npz"
    save_index(toy_index, path)
    with pytest.raises(DataError):
        load_index(path, expected_fingerprint="something-else")


def test_cached_index_hits_on_second_call(toy_model, identity_map, tmp_path):
    first = cached_index(toy_model, identity_map, tmp_path)
    files = list(tmp_path.glob("index-*.npz"))
    assert len(files) == 1
    mtime = files[0].stat().st_mtime_ns
    second = cached_index(toy_model, identity_map, tmp_path)
    assert files[0].stat().st_mtime_ns == mtime  # reused, not rebuilt
    assert torch.equal(first.lm_vocab_matrix, second.lm_vocab_matrix)


def test_cached_index_rebuilds_for_different_map(toy_model, identity_map, tmp_path):
    cached_index(toy_model, identity_map, tmp_path)
    other = random_map(toy_model.d, toy_model.d, seed=8)
    cached_index(toy_model, other, tmp_path)
    assert len(list(tmp_path.glob("index-*.npz"))) == 2
