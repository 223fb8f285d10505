import pytest

from ecrseg.phantom import PhantomSpec, write_case, write_cohort

# small enough that a radius-2 LOOCV over the whole cohort takes seconds
SMALL = PhantomSpec(
    dims=(40, 40, 40),
    tooth_center=(20.0, 20.0, 20.0),
    tooth_radii=(17.0, 14.0, 14.0),
    lesion_center=(20.0, 25.0, 20.0),
    lesion_radius=5.0,
)


@pytest.fixture(scope="session")
def small_cohort(tmp_path_factory):
    """Manifest path of 3 small phantom patients x 2 timepoints."""
    return write_cohort(3, tmp_path_factory.mktemp("cohort"), SMALL, seed=3)


@pytest.fixture(scope="session")
def default_case(tmp_path_factory):
    """One default-size phantom case on disk; returns the written paths."""
    return write_case(PhantomSpec(), tmp_path_factory.mktemp("default_case"))
