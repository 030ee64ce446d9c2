import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from modelforge.errors import DuplicateFeature, SupertypeCycle, UnknownClass, UnknownPackage
from modelforge.metamodel import (
    Attribute,
    DataTypeKind,
    MetaClass,
    Metamodel,
    MetamodelRegistry,
    Multiplicity,
    Reference,
    parse_value,
    render_value,
    resolve_class,
    validate_metamodel,
)

import strategies


def mm_of(*classes, name="p"):
    return Metamodel(name, f"http://example.org/{name}", name, tuple(classes))


class TestValues:
    def test_int_parses_canonical_text(self):
        assert parse_value(DataTypeKind.INT, "730") == 730
        assert parse_value(DataTypeKind.INT, "-5") == -5

    @pytest.mark.parametrize("bad", ["1_0", "0x1A", " 7", "7 ", "", "seven", "1.0"])
    def test_int_rejects_noncanonical_text(self, bad):
        with pytest.raises(ValueError):
            parse_value(DataTypeKind.INT, bad)

    def test_boolean_is_strict(self):
        assert parse_value(DataTypeKind.BOOLEAN, "true") is True
        assert parse_value(DataTypeKind.BOOLEAN, "false") is False
        for bad in ("True", "FALSE", "1", "yes", ""):
            with pytest.raises(ValueError):
                parse_value(DataTypeKind.BOOLEAN, bad)

    def test_double_grammar(self):
        assert parse_value(DataTypeKind.DOUBLE, "3.5") == 3.5
        assert parse_value(DataTypeKind.DOUBLE, "-2e-3") == -0.002
        assert parse_value(DataTypeKind.DOUBLE, ".5") == 0.5
        assert parse_value(DataTypeKind.DOUBLE, "7") == 7.0
        for bad in ("nan", "inf", "1e", "--1", "1.2.3", ""):
            with pytest.raises(ValueError):
                parse_value(DataTypeKind.DOUBLE, bad)

    def test_render_canonical_spellings(self):
        assert render_value(DataTypeKind.INT, 730) == "730"
        assert render_value(DataTypeKind.BOOLEAN, True) == "true"
        assert render_value(DataTypeKind.DOUBLE, 730.0) == "730.0"
        assert render_value(DataTypeKind.DOUBLE, 1e300) == "1e+300"
        assert render_value(DataTypeKind.STRING, "x") == "x"

    @given(st.integers(min_value=-(10**12), max_value=10**12))
    def test_int_round_trip(self, value):
        assert parse_value(DataTypeKind.INT, render_value(DataTypeKind.INT, value)) == value

    @given(st.floats(allow_nan=False, allow_infinity=False))
    def test_double_round_trip(self, value):
        rendered = render_value(DataTypeKind.DOUBLE, value)
        assert parse_value(DataTypeKind.DOUBLE, rendered) == value


class TestMultiplicity:
    def test_covers(self):
        assert Multiplicity(0, 1).covers(0)
        assert Multiplicity(0, 1).covers(1)
        assert not Multiplicity(0, 1).covers(2)
        assert Multiplicity(0, -1).covers(100)
        assert not Multiplicity(1, -1).covers(0)

    def test_validity(self):
        assert Multiplicity(0, 1).is_valid()
        assert Multiplicity(2, -1).is_valid()
        assert not Multiplicity(2, 1).is_valid()
        assert not Multiplicity(-1, 1).is_valid()


class TestFeatureLinearization:
    def diamond(self):
        a = MetaClass("A", attributes=(Attribute("fa", DataTypeKind.STRING),))
        b = MetaClass("B", super_type_names=("A",), attributes=(Attribute("fb", DataTypeKind.STRING),))
        c = MetaClass("C", super_type_names=("A",), attributes=(Attribute("fc", DataTypeKind.STRING),))
        d = MetaClass("D", super_type_names=("B", "C"), attributes=(Attribute("fd", DataTypeKind.STRING),))
        return mm_of(a, b, c, d)

    def test_diamond_order_and_dedup(self):
        mm = self.diamond()
        names = [f.name for f in mm.all_features(mm.class_map["D"])]
        assert names == ["fa", "fb", "fc", "fd"]

    def test_attributes_before_references_within_a_class(self):
        c = MetaClass(
            "C",
            attributes=(Attribute("a1", DataTypeKind.INT),),
            references=(Reference("r1", "C"),),
        )
        mm = mm_of(c)
        assert [f.name for f in mm.all_features(c)] == ["a1", "r1"]

    def test_duplicate_feature_raises(self):
        a = MetaClass("A", attributes=(Attribute("x", DataTypeKind.STRING),))
        b = MetaClass("B", super_type_names=("A",), attributes=(Attribute("x", DataTypeKind.INT),))
        mm = mm_of(a, b)
        with pytest.raises(DuplicateFeature):
            mm.all_features(mm.class_map["B"])

    def test_supertype_cycle_raises(self):
        a = MetaClass("A", super_type_names=("B",))
        b = MetaClass("B", super_type_names=("A",))
        mm = mm_of(a, b)
        with pytest.raises(SupertypeCycle):
            mm.all_features(mm.class_map["A"])

    def test_subtype_checks(self):
        mm = self.diamond()
        d = mm.class_map["D"]
        assert mm.is_subtype_of(d, "D")
        assert mm.is_subtype_of(d, "A")
        assert mm.is_subtype_of(d, "C")
        assert not mm.is_subtype_of(mm.class_map["B"], "C")

    def test_declaring_class(self):
        mm = self.diamond()
        d = mm.class_map["D"]
        assert mm.declaring_class(d, "fa").name == "A"
        assert mm.declaring_class(d, "fd").name == "D"
        assert mm.declaring_class(d, "nope") is None


class TestValidateMetamodel:
    def test_library_fixture_is_clean(self, library_metamodel):
        assert validate_metamodel(library_metamodel) == []

    def test_unresolved_reference_target(self):
        c = MetaClass("C", references=(Reference("r", "Ghost"),))
        defects = validate_metamodel(mm_of(c))
        assert [d.code for d in defects] == ["UNRESOLVED_TYPE"]
        assert defects[0].qualified_name == "p.C.r"

    def test_unresolved_supertype(self):
        c = MetaClass("C", super_type_names=("Ghost",))
        assert [d.code for d in validate_metamodel(mm_of(c))] == ["UNRESOLVED_TYPE"]

    def test_supertype_cycle_reported_per_member(self):
        a = MetaClass("A", super_type_names=("B",))
        b = MetaClass("B", super_type_names=("A",))
        codes = [d.code for d in validate_metamodel(mm_of(a, b))]
        assert codes == ["SUPERTYPE_CYCLE", "SUPERTYPE_CYCLE"]

    def test_duplicate_class(self):
        a1 = MetaClass("A")
        a2 = MetaClass("A")
        codes = [d.code for d in validate_metamodel(mm_of(a1, a2))]
        assert "DUPLICATE_CLASS" in codes

    def test_duplicate_feature_across_hierarchy(self):
        a = MetaClass("A", attributes=(Attribute("x", DataTypeKind.STRING),))
        b = MetaClass("B", super_type_names=("A",), attributes=(Attribute("x", DataTypeKind.INT),))
        defects = validate_metamodel(mm_of(a, b))
        assert [(d.code, d.qualified_name) for d in defects] == [
            ("DUPLICATE_FEATURE", "p.B.x")
        ]

    def test_multivalued_attribute_is_a_defect(self):
        c = MetaClass("C", attributes=(Attribute("xs", DataTypeKind.STRING, Multiplicity(0, -1)),))
        assert [d.code for d in validate_metamodel(mm_of(c))] == ["BAD_MULTIPLICITY"]

    def test_bad_reference_bounds(self):
        c = MetaClass("C", references=(Reference("r", "C", multiplicity=Multiplicity(3, 2)),))
        assert [d.code for d in validate_metamodel(mm_of(c))] == ["BAD_MULTIPLICITY"]

    def test_opposite_must_exist(self):
        a = MetaClass("A", references=(Reference("r", "B", opposite_name="ghost"),))
        b = MetaClass("B")
        assert [d.code for d in validate_metamodel(mm_of(a, b))] == ["OPPOSITE_ASYMMETRY"]

    def test_opposite_must_point_back(self):
        a = MetaClass("A", references=(Reference("r", "B", opposite_name="s"),))
        b = MetaClass("B", references=(Reference("s", "A", opposite_name="other"), Reference("other", "A"),))
        codes = [d.code for d in validate_metamodel(mm_of(a, b))]
        assert "OPPOSITE_ASYMMETRY" in codes

    def test_containment_cannot_oppose_containment(self):
        a = MetaClass("A", references=(Reference("r", "B", True, "s"),))
        b = MetaClass("B", references=(Reference("s", "A", True, "r"),))
        codes = {d.code for d in validate_metamodel(mm_of(a, b))}
        assert codes == {"OPPOSITE_ASYMMETRY"}

    def test_symmetric_pair_is_clean(self):
        a = MetaClass("A", references=(Reference("r", "B", False, "s", Multiplicity(0, -1)),))
        b = MetaClass("B", references=(Reference("s", "A", False, "r"),))
        assert validate_metamodel(mm_of(a, b)) == []


class TestRegistry:
    def test_generation_increases_on_install_and_remove(self):
        registry = MetamodelRegistry()
        assert registry.snapshot.generation == 0
        first = registry.install(mm_of(MetaClass("A"), name="p1"))
        assert first.generation == 1
        second = registry.install(mm_of(MetaClass("B"), name="p2"))
        assert second.generation == 2
        third = registry.remove("p1")
        assert third.generation == 3
        assert third.metamodel("p1") is None
        assert third.metamodel("p2") is not None

    def test_snapshots_are_stable(self):
        registry = MetamodelRegistry()
        registry.install(mm_of(MetaClass("A"), name="p1"))
        old = registry.snapshot
        registry.install(mm_of(MetaClass("B"), name="p2"))
        assert "p2" not in old.entries
        assert registry.snapshot.generation == old.generation + 1

    def test_installed_at_tracks_per_package_generations(self):
        registry = MetamodelRegistry()
        registry.install(mm_of(MetaClass("A"), name="p1"))
        registry.install(mm_of(MetaClass("B"), name="p2"))
        registry.install(mm_of(MetaClass("A2"), name="p1"))
        snap = registry.snapshot
        assert snap.installed_at["p1"] == 3
        assert snap.installed_at["p2"] == 2

    def test_remove_unknown_package_raises(self):
        registry = MetamodelRegistry()
        with pytest.raises(UnknownPackage):
            registry.remove("ghost")

    def test_resolve_class(self):
        registry = MetamodelRegistry()
        registry.install(mm_of(MetaClass("A"), name="p1"))
        snap = registry.snapshot
        assert resolve_class(snap, "p1", "A").name == "A"
        with pytest.raises(UnknownPackage):
            resolve_class(snap, "ghost", "A")
        with pytest.raises(UnknownClass):
            resolve_class(snap, "p1", "Ghost")


class TestGeneratedMetamodels:
    @settings(max_examples=60, deadline=None)
    @given(strategies.metamodels())
    def test_generated_metamodels_are_valid(self, mm):
        assert validate_metamodel(mm) == []
        for c in mm.classes:
            features = mm.all_features(c)
            assert len({f.name for f in features}) == len(features)

    @settings(max_examples=60, deadline=None)
    @given(strategies.metamodels())
    def test_subtyping_is_reflexive_and_transitive(self, mm):
        classes = list(mm.classes)
        for c in classes:
            assert mm.is_subtype_of(c, c.name)
        for c in classes:
            for mid in classes:
                for top in classes:
                    if mm.is_subtype_of(c, mid.name) and mm.is_subtype_of(mid, top.name):
                        assert mm.is_subtype_of(c, top.name)
