import numpy as np
import pytest

from dwr_diffusion.mesh import make_lshape
from dwr_diffusion.slabs import Slab, SlabList, TimeInterval, init_slabs


class TestTimeInterval:
    def test_tau(self):
        assert TimeInterval(0.25, 0.5).tau == 0.25

    def test_degenerate_rejected(self):
        with pytest.raises(ValueError):
            TimeInterval(0.5, 0.5)
        with pytest.raises(ValueError):
            TimeInterval(0.5, 0.25)

    def test_gauss_points_integrate_linear(self):
        iv = TimeInterval(1.0, 3.0)
        ts, ws = iv.gauss_points(2)
        assert np.sum(ws) == pytest.approx(2.0, abs=1e-14)
        assert np.sum(ws * ts) == pytest.approx(4.0, abs=1e-13)  # int t over (1,3)


class TestInit:
    def test_benchmark_partition(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        assert len(slabs) == 5
        for slab in slabs:
            assert slab.tau == pytest.approx(0.25, abs=1e-15)
        assert [s.interval.t_m for s in slabs] == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_single_slab(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        assert len(slabs) == 1
        assert slabs[0].interval.t_m == 0.0 and slabs[0].interval.t_n == 1.0

    def test_endpoints_exactly_shared(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 7)
        for a, b in zip(slabs, slabs[1:]):
            assert a.interval.t_n == b.interval.t_m

    def test_meshes_are_independent_copies(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 3)
        slabs[0].mesh.refine({0})
        assert slabs[1].mesh.n_active_cells == 3
        assert lshape.n_active_cells == 3

    def test_invalid_args(self, lshape):
        with pytest.raises(ValueError):
            init_slabs(lshape, 0.0, 1.0, 0)
        with pytest.raises(ValueError):
            init_slabs(lshape, 1.0, 1.0, 3)


class TestSplit:
    def test_bisection(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        slabs.split_slab_in_time(1)
        assert len(slabs) == 6
        assert slabs[1].interval == TimeInterval(0.25, 0.375)
        assert slabs[2].interval == TimeInterval(0.375, 0.5)

    def test_children_inherit_mesh_copy(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 2)
        slabs[0].mesh.refine({0})
        slabs[0].rebuild_spaces()
        slabs.split_slab_in_time(0)
        assert slabs[0].mesh.n_active_cells == 6
        assert slabs[1].mesh.n_active_cells == 6
        assert slabs[0].mesh is not slabs[1].mesh

    def test_storage_cleared_on_split(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 2)
        slabs[0].attach_storage("u", np.zeros(slabs[0].primal.n_dofs))
        slabs.split_slab_in_time(0)
        assert slabs[0].fetch_storage("u") is None

    def test_partition_after_many_splits(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        for k in (4, 2, 2, 0):
            slabs.split_slab_in_time(k)
        for a, b in zip(slabs, slabs[1:]):
            assert a.interval.t_n == b.interval.t_m
        total = sum(s.tau for s in slabs)
        assert total == pytest.approx(1.25, abs=1e-14)


class TestIteration:
    def test_forward_order(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        t_ms = [s.interval.t_m for _, s in slabs.iterate_forward()]
        assert t_ms == [0.0, 0.25, 0.5, 0.75, 1.0]

    def test_backward_is_reverse(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        fwd = [k for k, _ in slabs.iterate_forward()]
        bwd = [k for k, _ in slabs.iterate_backward()]
        assert bwd == fwd[::-1]

    def test_order_after_split(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        slabs.split_slab_in_time(1)
        t_ms = [s.interval.t_m for _, s in slabs.iterate_forward()]
        assert t_ms == sorted(t_ms)
        assert len(t_ms) == 6


class TestStorage:
    def test_attach_fetch_same_data(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        vec = np.arange(slabs[0].primal.n_dofs, dtype=float)
        slabs[0].attach_storage("u", vec)
        fetched = slabs[0].fetch_storage("u")
        assert fetched is vec

    def test_fetch_before_attach_absent(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        assert slabs[0].fetch_storage("u") is None

    def test_wrong_length_rejected(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        with pytest.raises(ValueError):
            slabs[0].attach_storage("u", np.zeros(3))
        with pytest.raises(ValueError):
            slabs[0].attach_storage("z_tm", np.zeros(slabs[0].primal.n_dofs + 1))

    def test_unknown_tag_rejected(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        with pytest.raises(KeyError):
            slabs[0].attach_storage("bogus", np.zeros(8))
        with pytest.raises(KeyError):
            slabs[0].fetch_storage("bogus")

    def test_dual_tag_uses_dual_space(self, lshape):
        slabs = init_slabs(lshape, 0.0, 1.0, 1)
        slabs[0].attach_storage("z_tm", np.zeros(slabs[0].dual.n_dofs))
        assert slabs[0].fetch_storage("z_tm").shape == (21,)


class TestMemoryContract:
    def test_forward_march_touches_only_previous_slab(self, lshape, monkeypatch):
        from dwr_diffusion import primal, problem
        from dwr_diffusion.slabs import Slab

        slabs = init_slabs(lshape, 0.0, 1.25, 5)
        index_of = {id(s): k for k, s in enumerate(slabs)}
        log = []
        original = Slab.fetch_storage

        def spy(self, tag):
            log.append((index_of[id(self)], tag))
            return original(self, tag)

        monkeypatch.setattr(Slab, "fetch_storage", spy)
        data = problem.ProblemData()
        primal.march_forward(slabs, data.coefficients, data)
        # step n may read the previous slab's solution, nothing else
        assert log == [(k, "u") for k in range(4)]
