import numpy as np
import pytest

from listlbm import (
    ConsistencyError,
    FormatError,
    LexBlocked,
    Morton,
    SparseHeader,
    TooManyProcessesError,
    VoxelGrid,
    preprocess_grid,
    preprocess_to_file,
    read_chunk,
    read_header,
    read_sparse,
    write_sparse,
)
from listlbm.adjacency import SparseRecords
from listlbm.sparse_io import RECORD_DTYPE, header_nbytes


@pytest.fixture(scope="module")
def channel_file(tmp_path_factory):
    from listlbm import make_channel
    path = tmp_path_factory.mktemp("sprs") / "c4.sprs"
    grid = make_channel(4)
    header = preprocess_to_file(grid, LexBlocked(4), path, periodic=(True, False, False))
    return path, header


class TestHeader:
    def test_record_size_is_fixed(self):
        assert RECORD_DTYPE.itemsize == 156

    def test_nbytes_counts_scheme_and_table(self):
        base = SparseHeader((4, 4, 4), 10, "lex:b=1")
        assert header_nbytes(base) == 46 + len("lex:b=1") + 4
        with_table = SparseHeader((4, 4, 4), 10, "lex:b=1", part_starts=(1, 5, 8))
        assert header_nbytes(with_table) == header_nbytes(base) + 8 + 3 * 8

    def test_rejects_bad_fields(self):
        with pytest.raises(ValueError):
            SparseHeader((0, 4, 4), 0, "lex:b=1")
        with pytest.raises(ValueError):
            SparseHeader((2, 2, 2), 9, "lex:b=1")  # more fluid than cells
        with pytest.raises(ValueError):
            SparseHeader((4, 4, 4), 10, "lex:b=1", part_starts=(2, 5))
        with pytest.raises(ValueError):
            SparseHeader((4, 4, 4), 10, "lex:b=1", part_starts=(1, 5, 5))
        with pytest.raises(ValueError):
            SparseHeader((4, 4, 4), 10, "schéma")  # non-ASCII

    def test_header_round_trip_with_options(self, tmp_path):
        grid = VoxelGrid(np.ones((2, 2, 2), dtype=bool))
        header, records = preprocess_grid(grid, Morton(1), periodic=(True, True, False))
        stamped = SparseHeader(header.dims, header.n_fluid, header.scheme_text,
                               header.periodic, part_starts=(1, 3, 7))
        path = tmp_path / "t.sprs"
        write_sparse(path, records, stamped)
        got, _ = read_sparse(path)
        assert got == stamped
        assert got.periodic == (True, True, False)
        assert got.part_starts == (1, 3, 7)


class TestRoundTrip:
    def test_read_back_equals_written(self, channel_file):
        path, header = channel_file
        got_header, records = read_sparse(path)
        assert got_header == header
        assert len(records) == header.n_fluid
        assert np.array_equal(records.ic, np.arange(1, header.n_fluid + 1))

    def test_empty_domain_is_header_only(self, tmp_path):
        grid = VoxelGrid(np.zeros((2, 2, 2), dtype=bool))
        path = tmp_path / "empty.sprs"
        header = preprocess_to_file(grid, LexBlocked(1), path)
        assert path.stat().st_size == header_nbytes(header)
        got, records = read_sparse(path)
        assert got.n_fluid == 0
        assert len(records) == 0

    def test_write_is_deterministic(self, tmp_path, channel4):
        a = tmp_path / "a.sprs"
        b = tmp_path / "b.sprs"
        preprocess_to_file(channel4, Morton(2), a)
        preprocess_to_file(channel4, Morton(2), b)
        assert a.read_bytes() == b.read_bytes()


class TestWriteValidation:
    def make_records(self, ic):
        n = len(ic)
        coords = np.zeros((n, 3), dtype=np.uint32)
        coords[:, 0] = np.arange(n)
        return SparseRecords(coords=coords,
                             ic=np.asarray(ic, dtype=np.uint64),
                             nbr=np.zeros((n, 18), dtype=np.uint64))

    def test_duplicate_ic_rejected_before_write(self, tmp_path):
        header = SparseHeader((4, 1, 1), 3, "lex:b=1")
        path = tmp_path / "dup.sprs"
        with pytest.raises(ConsistencyError):
            write_sparse(path, self.make_records([1, 2, 2]), header)
        assert not path.exists()

    def test_missing_ic_rejected(self, tmp_path):
        header = SparseHeader((4, 1, 1), 3, "lex:b=1")
        with pytest.raises(ConsistencyError):
            write_sparse(tmp_path / "gap.sprs", self.make_records([1, 2, 4]), header)

    def test_count_mismatch_rejected(self, tmp_path):
        header = SparseHeader((4, 1, 1), 4, "lex:b=1")
        with pytest.raises(ConsistencyError):
            write_sparse(tmp_path / "n.sprs", self.make_records([1, 2, 3]), header)

    def test_neighbor_out_of_range_rejected(self, tmp_path):
        header = SparseHeader((4, 1, 1), 3, "lex:b=1")
        records = self.make_records([1, 2, 3])
        records.nbr[0, 0] = 9
        with pytest.raises(ConsistencyError):
            write_sparse(tmp_path / "nbr.sprs", records, header)


class TestChunkedReads:
    def test_first_chunk_of_ten_by_three(self, tmp_path):
        grid = VoxelGrid(np.ones((1, 1, 10), dtype=bool))
        path = tmp_path / "line.sprs"
        preprocess_to_file(grid, LexBlocked(1), path)
        _, records = read_chunk(path, 0, 3)
        assert records.ic.tolist() == [1, 2, 3, 4]

    @pytest.mark.parametrize("N", [1, 2, 3, 7, 80])
    def test_chunks_concatenate_to_whole(self, channel_file, N):
        path, header = channel_file
        _, whole = read_sparse(path)
        parts = [read_chunk(path, n, N)[1] for n in range(N)]
        assert SparseRecords.concat(parts).equals(whole)

    def test_single_record_chunks(self, channel_file):
        path, header = channel_file
        _, chunk = read_chunk(path, 5, header.n_fluid)
        assert len(chunk) == 1
        assert chunk.ic[0] == 6

    def test_too_many_chunks(self, channel_file):
        path, header = channel_file
        with pytest.raises(TooManyProcessesError):
            read_chunk(path, 0, header.n_fluid + 1)

    def test_bad_chunk_number(self, channel_file):
        path, _ = channel_file
        with pytest.raises(ValueError):
            read_chunk(path, 3, 3)
        with pytest.raises(ValueError):
            read_chunk(path, -1, 3)


def corrupt(path, tmp_path, name, mutate):
    raw = bytearray(path.read_bytes())
    mutate(raw)
    out = tmp_path / name
    out.write_bytes(bytes(raw))
    return out


class TestFormatErrors:
    def test_bad_magic_at_offset_zero(self, channel_file, tmp_path):
        path, _ = channel_file
        bad = corrupt(path, tmp_path, "m.sprs", lambda raw: raw.__setitem__(slice(0, 4), b"JUNK"))
        with pytest.raises(FormatError, match="offset 0"):
            read_sparse(bad)

    def test_bad_version_at_offset_four(self, channel_file, tmp_path):
        path, _ = channel_file
        bad = corrupt(path, tmp_path, "v.sprs",
                      lambda raw: raw.__setitem__(slice(4, 8), (9).to_bytes(4, "little")))
        with pytest.raises(FormatError, match="offset 4"):
            read_sparse(bad)

    def test_zero_dimension(self, channel_file, tmp_path):
        path, _ = channel_file
        bad = corrupt(path, tmp_path, "d.sprs",
                      lambda raw: raw.__setitem__(slice(16, 24), (0).to_bytes(8, "little")))
        with pytest.raises(FormatError, match="offset 16"):
            read_sparse(bad)

    def test_fluid_count_exceeding_cells(self, channel_file, tmp_path):
        path, _ = channel_file
        bad = corrupt(path, tmp_path, "n.sprs",
                      lambda raw: raw.__setitem__(slice(32, 40), (10 ** 6).to_bytes(8, "little")))
        with pytest.raises(FormatError, match="offset 32"):
            read_sparse(bad)

    def test_unknown_periodic_bits(self, channel_file, tmp_path):
        path, _ = channel_file
        bad = corrupt(path, tmp_path, "p.sprs",
                      lambda raw: raw.__setitem__(slice(40, 44), (0xFF).to_bytes(4, "little")))
        with pytest.raises(FormatError, match="offset 40"):
            read_sparse(bad)

    def test_truncated_record_names_position(self, channel_file, tmp_path):
        path, _ = channel_file
        raw = path.read_bytes()
        out = tmp_path / "t.sprs"
        out.write_bytes(raw[:-10])
        with pytest.raises(FormatError, match="I_c=80"):
            read_sparse(out)

    def test_trailing_bytes_rejected(self, channel_file, tmp_path):
        path, _ = channel_file
        out = tmp_path / "x.sprs"
        out.write_bytes(path.read_bytes() + b"\x01\x02")
        with pytest.raises(FormatError):
            read_sparse(out)

    def test_truncated_header(self, channel_file, tmp_path):
        path, _ = channel_file
        out = tmp_path / "h.sprs"
        out.write_bytes(path.read_bytes()[:20])
        with pytest.raises(FormatError):
            read_sparse(out)

    def test_chunk_read_checks_size_too(self, channel_file, tmp_path):
        path, _ = channel_file
        out = tmp_path / "c.sprs"
        out.write_bytes(path.read_bytes()[:-10])
        with pytest.raises(FormatError):
            read_chunk(out, 0, 2)
