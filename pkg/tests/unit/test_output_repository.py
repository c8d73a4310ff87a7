import numpy as np

from mpfilter.repositories.output_repository import CsvOutputRepository, format_cell


class TestFormatCell:
    def test_cells(self):
        assert format_cell(None) == ""
        assert format_cell(True) == "1"
        assert format_cell(np.int64(7)) == "7"
        assert format_cell(0.1) == "0.10000000000000001"
        assert format_cell("theta_b") == "theta_b"

    def test_floats_round_trip(self):
        value = 1.0 / 3.0
        assert float(format_cell(np.float64(value))) == value


class TestCsvOutputRepository:
    def test_provenance_precedes_header(self):
        repo = CsvOutputRepository(["seed=7", "version=1.0.0"])
        text = repo.render(["t", "estimate"], [(1, 0.5), (2, 0.25)])
        assert text.splitlines() == [
            "# seed=7",
            "# version=1.0.0",
            "t,estimate",
            "1,0.5",
            "2,0.25",
        ]

    def test_writes_stdout_without_path(self, capsys):
        CsvOutputRepository().write(["a"], [(1,)])
        assert capsys.readouterr().out == "a\n1\n"

    def test_writes_file(self, tmp_path):
        path = tmp_path / "out.csv"
        CsvOutputRepository(["x=1"]).write(["a", "b"], [(None, "z")], path)
        assert path.read_text() == "# x=1\na,b\n,z\n"
