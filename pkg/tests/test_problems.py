import numpy as np
import pytest

from kaczsim import problems
from kaczsim.errors import DegenerateInstance, IoError, TooManyAgents
from kaczsim.linalg import min_norm_solve


def small_spec(**kw):
    base = dict(m=40, n=12, density=0.2, noise=0.0, seed=7, agents=3)
    base.update(kw)
    return problems.ProblemSpec(**base)


def test_noiseless_instance_is_consistent():
    inst = problems.generate(small_spec())
    resid = np.linalg.norm(inst.A @ inst.x_star - inst.b)
    assert resid <= 1e-8 * max(np.linalg.norm(inst.b), 1.0)


def test_same_seed_bit_identical():
    a = problems.generate(small_spec())
    b = problems.generate(small_spec())
    assert np.array_equal(a.A.toarray(), b.A.toarray())
    assert np.array_equal(a.b, b.b)
    assert np.array_equal(a.x_planted, b.x_planted)


def test_different_seed_differs():
    a = problems.generate(small_spec())
    b = problems.generate(small_spec(seed=8))
    assert not np.array_equal(a.A.toarray(), b.A.toarray())


def test_noisy_instance_is_inconsistent():
    inst = problems.generate(problems.ProblemSpec(m=200, n=50, density=0.1, noise=1.0, seed=3, agents=4))
    assert np.linalg.norm(inst.A @ inst.x_star - inst.b) > 1e-3


def test_exact_nonzero_count():
    spec = small_spec(density=0.13)
    inst = problems.generate(spec)
    import math
    assert inst.A.nnz == math.ceil(0.13 * spec.m * spec.n)


def test_degenerate_density_rejected():
    with pytest.raises(DegenerateInstance):
        problems.generate(problems.ProblemSpec(m=3, n=3, density=1e-9, seed=0, agents=1))


def test_oracle_matches_min_norm_solve():
    inst = problems.generate(small_spec(noise=0.5))
    assert np.linalg.norm(inst.x_star - min_norm_solve(inst.dense(), inst.b)) <= 1e-10


# ------------------------------------------------------------------ partition

def test_partition_sizes_10_3():
    assert problems.partition_sizes(10, 3) == [4, 3, 3]


def test_partition_single_agent_is_whole_system():
    inst = problems.generate(small_spec(agents=1))
    (shard,) = inst.shards
    assert np.array_equal(shard.A, inst.dense())
    assert np.array_equal(shard.b, inst.b)


def test_partition_sizes_large_configuration():
    sizes = problems.partition_sizes(30000, 13)
    assert sum(sizes) == 30000
    assert max(sizes) - min(sizes) <= 1
    assert max(sizes) == 2308  # about 2308 rows per shard


def test_partition_rejects_too_many_agents():
    with pytest.raises(TooManyAgents):
        problems.partition_sizes(3, 4)
    with pytest.raises(TooManyAgents):
        problems.ProblemSpec(m=3, n=2, density=0.5, agents=4)


def test_shards_reassemble_exactly():
    inst = problems.generate(small_spec(noise=0.3, agents=5))
    A = np.vstack([s.A for s in inst.shards])
    b = np.concatenate([s.b for s in inst.shards])
    rows = np.concatenate([s.rows for s in inst.shards])
    assert np.array_equal(rows, np.arange(inst.m))
    assert np.array_equal(A, inst.dense())
    assert np.array_equal(b, inst.b)


# ---------------------------------------------------------------- save / load

def test_save_load_round_trip_bit_exact(tmp_path):
    inst = problems.generate(small_spec(noise=0.25, agents=4))
    problems.save(inst, tmp_path / "inst")
    back = problems.load(tmp_path / "inst")
    assert np.array_equal(back.A.toarray(), inst.A.toarray())
    assert np.array_equal(back.b, inst.b)
    assert np.array_equal(back.x_planted, inst.x_planted)
    assert np.array_equal(back.x_star, inst.x_star)
    assert len(back.shards) == len(inst.shards)
    for s0, s1 in zip(inst.shards, back.shards):
        assert np.array_equal(s0.A, s1.A)
        assert np.array_equal(s0.b, s1.b)
        assert np.array_equal(s0.rows, s1.rows)
    assert back.spec == inst.spec


def test_load_empty_dir_raises(tmp_path):
    with pytest.raises(IoError):
        problems.load(tmp_path)


def test_load_corrupt_vector_raises(tmp_path):
    inst = problems.generate(small_spec())
    problems.save(inst, tmp_path / "inst")
    (tmp_path / "inst" / "b.txt").write_text("not-a-number\n")
    with pytest.raises(IoError):
        problems.load(tmp_path / "inst")


def test_shard_file_count_matches_agents(tmp_path):
    inst = problems.generate(small_spec(agents=3))
    problems.save(inst, tmp_path / "inst")
    shard_files = sorted(p.name for p in (tmp_path / "inst").glob("shard_*_b.txt"))
    assert len(shard_files) == 3


def test_matrix_market_header(tmp_path):
    inst = problems.generate(small_spec())
    problems.save(inst, tmp_path / "inst")
    first = (tmp_path / "inst" / "A.mtx").read_text().splitlines()[0]
    assert first.startswith("%%MatrixMarket matrix coordinate real general")


def test_vector_files_have_17_significant_digits(tmp_path):
    inst = problems.generate(small_spec())
    problems.save(inst, tmp_path / "inst")
    line = (tmp_path / "inst" / "b.txt").read_text().splitlines()[0]
    assert float(line) == inst.b[0]
