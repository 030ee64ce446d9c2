import pytest

from modelforge.metamodel import MetamodelRegistry
from modelforge.repository import Repository
from modelforge.xmi import parse_metamodel

from fixtures import (
    ALEXANDRIA_XMI,
    LIBRARY_ECORE,
    PRESS_ECORE,
    SAVANNA_XMI,
    STACKS_XMI,
    ZOO_ECORE,
    full_repo,
    library_repo,
    write_package,
)


@pytest.fixture
def library_metamodel():
    return parse_metamodel(LIBRARY_ECORE)


@pytest.fixture
def zoo_metamodel():
    return parse_metamodel(ZOO_ECORE)


@pytest.fixture
def press_metamodel():
    return parse_metamodel(PRESS_ECORE)


@pytest.fixture
def library_dir(tmp_path):
    return library_repo(tmp_path)


@pytest.fixture
def full_dir(tmp_path):
    return full_repo(tmp_path)


@pytest.fixture
def library_setup(library_dir):
    """(snapshot, repository) over the loaded library fixture."""
    registry = MetamodelRegistry()
    registry.install(parse_metamodel(LIBRARY_ECORE))
    repo, errors = Repository.load(library_dir, registry.snapshot)
    assert errors == []
    return registry.snapshot, repo


@pytest.fixture
def full_setup(full_dir):
    registry = MetamodelRegistry()
    for text in (LIBRARY_ECORE, ZOO_ECORE, PRESS_ECORE):
        registry.install(parse_metamodel(text))
    repo, errors = Repository.load(full_dir, registry.snapshot)
    assert errors == []
    return registry.snapshot, repo
