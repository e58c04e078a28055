import pytest

from tierdb.errors import ConflictingAlias, UnknownAlias
from tierdb.interop_register import AliasRegister


def test_aliases_resolve_to_one_canonical_id():
    register = AliasRegister("local-1")
    register.register_alias("serial", "SN-123", "TX-17")
    register.register_alias("grid-id", "G-9", "TX-17")
    register.register_alias("serial", "SN-123", "TX-17")
    assert register.resolve_alias("serial", "SN-123") == "TX-17"
    assert register.aliases_for("TX-17") == [("grid-id", "G-9"), ("serial", "SN-123")]
    with pytest.raises(UnknownAlias):
        register.resolve_alias("serial", "SN-999")


def test_moving_an_alias_requires_retirement():
    register = AliasRegister("local-1")
    register.register_alias("owner-tag", "M-1", "TX-17")
    with pytest.raises(ConflictingAlias):
        register.register_alias("owner-tag", "M-1", "TX-18")
    assert register.retire_alias("owner-tag", "M-1") == "TX-17"
    register.register_alias("owner-tag", "M-1", "TX-18")
    assert register.resolve_alias("owner-tag", "M-1") == "TX-18"
    assert register.to_dict() == {
        "aliases": [["owner-tag", "M-1", "TX-18"]],
        "retired": [["owner-tag", "M-1", "TX-17"]],
    }
    with pytest.raises(UnknownAlias):
        register.retire_alias("owner-tag", "M-2")
