import numpy as np
import pytest
from numpy.testing import assert_array_equal

from renyi_ada.data import DatasetParseError, DomainSpec, generate, load_csv, save_csv


class TestGenerate:
    def test_identity_shift_noiseless_domains_coincide(self):
        b = generate(DomainSpec(num_classes=3, dim=4, per_class=8, noise=0.0,
                                rotation_deg=0.0, scale=1.0, seed=1))
        for c in range(3):
            src = b.features[b.mask("source") & (b.labels == c)]
            tgt = b.features[b.mask("target") & (b.labels == c)]
            assert_array_equal(src, tgt)

    def test_seeded(self):
        assert generate(DomainSpec(seed=5)).equals(generate(DomainSpec(seed=5)))
        assert not generate(DomainSpec(seed=5)).equals(generate(DomainSpec(seed=6)))

    def test_counts(self):
        b = generate(DomainSpec(num_classes=4, per_class=40, seed=0))
        assert len(b) == 320
        assert b.mask(split="train").sum() == 240 and b.mask(split="test").sum() == 80

    def test_stratified_per_class_and_domain(self):
        b = generate(DomainSpec(num_classes=5, per_class=12, seed=2))
        for dom in ("source", "target"):
            for c in range(5):
                rows = b.mask(dom) & (b.labels == c)
                assert rows.sum() == 12
                assert (rows & b.mask(split="test")).sum() == 3

    def test_shift_is_applied(self):
        spec = DomainSpec(noise=0.0, rotation_deg=90.0, scale=2.0, translation=[1.0] + [0.0] * 7)
        b = generate(spec)
        src = b.features[b.mask("source") & (b.labels == 0)][0]
        tgt = b.features[b.mask("target") & (b.labels == 0)][0]
        assert_array_equal(src[:2], [3.0, 0.0])
        np.testing.assert_allclose(tgt[:2], [1.0, 6.0], atol=1e-12)

    @pytest.mark.parametrize("field, value, word", [
        ("num_classes", 1, "num_classes"), ("per_class", 3, "per_class"),
        ("scale", 0.0, "scale"), ("noise", -1.0, "noise"), ("translation", [1.0], "translation"),
    ])
    def test_invalid_spec(self, field, value, word):
        with pytest.raises(ValueError, match=word):
            generate(DomainSpec(**{field: value}))

    def test_all_errors_listed(self):
        with pytest.raises(ValueError) as err:
            DomainSpec(num_classes=1, scale=-1.0).validate()
        assert "num_classes" in str(err.value) and "scale" in str(err.value)


class TestCsv:
    def test_round_trip(self, tmp_path):
        b = generate(DomainSpec(num_classes=3, per_class=8, seed=4))
        save_csv(b, tmp_path / "d.csv")
        assert load_csv(tmp_path / "d.csv").equals(b)

    def test_metadata_recovers_shift(self, tmp_path):
        spec = DomainSpec(num_classes=3, per_class=8, rotation_deg=12.5, seed=4)
        save_csv(generate(spec), tmp_path / "d.csv")
        assert DomainSpec.from_dict(load_csv(tmp_path / "d.csv").meta["spec"]) == spec

    def test_empty_file(self, tmp_path):
        (tmp_path / "e.csv").write_text("")
        with pytest.raises(DatasetParseError, match="empty"):
            load_csv(tmp_path / "e.csv")

    def test_header_mismatch_names_column(self, tmp_path):
        (tmp_path / "h.csv").write_text("id,domain,splt,label,f0\n0,source,train,0,1.0\n")
        with pytest.raises(DatasetParseError, match="splt"):
            load_csv(tmp_path / "h.csv")

    def test_bad_row_reports_line(self, tmp_path):
        (tmp_path / "r.csv").write_text(
            "id,domain,split,label,f0\n0,source,train,0,1.0\n1,source,train,x,2.0\n")
        with pytest.raises(DatasetParseError, match=":3"):
            load_csv(tmp_path / "r.csv")

    def test_duplicate_ids(self, tmp_path):
        (tmp_path / "u.csv").write_text(
            "id,domain,split,label,f0\n0,source,train,0,1.0\n0,target,test,1,2.0\n")
        with pytest.raises(DatasetParseError):
            load_csv(tmp_path / "u.csv")

    def test_nine_significant_digits(self, tmp_path):
        b = generate(DomainSpec(num_classes=2, per_class=4, seed=0))
        save_csv(b, tmp_path / "d.csv")
        row = (tmp_path / "d.csv").read_text().splitlines()[2].split(",")
        assert all(len(v.replace("-", "").replace(".", "").lstrip("0")) >= 9 for v in row[4:])
