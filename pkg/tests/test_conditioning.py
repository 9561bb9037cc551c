import pytest
import torch

from tmdiff.conditioning import GlobalAttentionPool, SequentialProjector
from tmdiff.errors import ShapeError


def _hidden(b, t, d, seed=0, dtype=torch.float64):
    gen = torch.Generator().manual_seed(seed)
    return torch.randn(b, t, d, generator=gen, dtype=dtype)


class TestGlobalAttentionPool:
    def test_single_timestep(self):
        torch.manual_seed(0)
        pool = GlobalAttentionPool(8).double()
        h = _hidden(2, 1, 8)
        c, alpha = pool(h)
        assert torch.allclose(alpha, torch.ones(2, 1, dtype=torch.float64))
        assert torch.allclose(c, h[:, 0])

    def test_identical_rows_pool_to_that_row(self):
        torch.manual_seed(0)
        pool = GlobalAttentionPool(8).double()
        row = _hidden(1, 1, 8, seed=1)[0, 0]
        h = row.expand(2, 5, 8).contiguous()
        c, _ = pool(h)
        assert torch.allclose(c[0], row, atol=1e-12)
        assert torch.allclose(c[1], row, atol=1e-12)

    def test_zero_query_gives_uniform_weights_and_row_mean(self):
        torch.manual_seed(0)
        pool = GlobalAttentionPool(8).double()
        with torch.no_grad():
            pool.q_pool.zero_()
        h = _hidden(3, 6, 8, seed=2)
        c, alpha = pool(h)
        assert torch.allclose(alpha, torch.full((3, 6), 1 / 6, dtype=torch.float64))
        assert torch.allclose(c, h.mean(dim=1), atol=1e-12)

    def test_alpha_on_simplex(self):
        torch.manual_seed(0)
        pool = GlobalAttentionPool(16).double()
        _, alpha = pool(_hidden(4, 7, 16, seed=3))
        assert (alpha >= 0).all()
        assert torch.allclose(alpha.sum(dim=-1), torch.ones(4, dtype=torch.float64), atol=1e-6)

    def test_c_global_in_convex_hull(self):
        # c_global is the alpha-weighted average of the rows by construction
        torch.manual_seed(0)
        pool = GlobalAttentionPool(8).double()
        h = _hidden(2, 5, 8, seed=4)
        c, alpha = pool(h)
        recon = torch.einsum("bt,btd->bd", alpha, h)
        assert torch.allclose(c, recon, atol=1e-12)

    def test_translation_property(self):
        # shifting every row by v shifts logits uniformly: alpha unchanged,
        # c_global shifts by exactly v
        torch.manual_seed(0)
        pool = GlobalAttentionPool(8).double()
        h = _hidden(2, 5, 8, seed=5)
        v = _hidden(1, 1, 8, seed=6)[0, 0]
        c0, a0 = pool(h)
        c1, a1 = pool(h + v)
        assert torch.allclose(a0, a1, atol=1e-12)
        assert torch.allclose(c1 - c0, v.expand(2, 8), atol=1e-10)

    def test_shape_guard(self):
        pool = GlobalAttentionPool(8)
        with pytest.raises(ShapeError):
            pool(torch.zeros(2, 5, 7))


class TestSequentialProjector:
    def test_row_statistics(self):
        torch.manual_seed(0)
        proj = SequentialProjector(d_llm=16, d_model=8).double()
        with torch.no_grad():
            proj.norm.weight.fill_(1.0)
            proj.norm.bias.zero_()
        out = proj(_hidden(2, 5, 16, seed=7))
        assert torch.allclose(out.mean(dim=-1), torch.zeros(2, 5, dtype=torch.float64), atol=1e-7)
        assert torch.allclose(
            out.var(dim=-1, unbiased=False), torch.ones(2, 5, dtype=torch.float64), atol=1e-3
        )

    def test_zero_projection_yields_offset(self):
        torch.manual_seed(0)
        proj = SequentialProjector(d_llm=16, d_model=8).double()
        with torch.no_grad():
            proj.w_seq.zero_()
            proj.norm.bias.normal_()
        out = proj(_hidden(1, 4, 16, seed=8))
        # normalizing an all-zero row is epsilon-guarded: output is the offset
        expected = proj.norm.bias.expand(1, 4, 8)
        assert torch.allclose(out, expected, atol=1e-12)

    def test_row_locality(self):
        # c_seq row t depends only on H_out row t
        torch.manual_seed(0)
        proj = SequentialProjector(d_llm=16, d_model=8).double()
        h = _hidden(1, 5, 16, seed=9)
        base = proj(h)
        perturbed = h.clone()
        perturbed[0, 2] += 3.0
        out = proj(perturbed)
        for t in range(5):
            if t == 2:
                assert not torch.equal(out[0, t], base[0, t])
            else:
                assert torch.equal(out[0, t], base[0, t])

    def test_shape_guard(self):
        proj = SequentialProjector(d_llm=16, d_model=8)
        with pytest.raises(ShapeError):
            proj(torch.zeros(1, 5, 12))
