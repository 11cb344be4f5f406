import pytest

import bookend_meta as bm

# the worked three-study example: (study, control events/n, active events/n)
LUNG_ROWS = [
    ("1", 514, 1000, 375, 1000),
    ("2", 118, 1000, 81, 1000),
    ("3", 304, 1000, 237, 1000),
]

LUNG_CSV = (
    "study,treatment,events,n\n"
    "1,1,514,1000\n"
    "1,2,375,1000\n"
    "2,1,118,1000\n"
    "2,2,81,1000\n"
    "3,1,304,1000\n"
    "3,2,237,1000\n"
)


def make_dataset(rows):
    arms = []
    for sid, rc, nc, ra, na in rows:
        arms.append(bm.ArmData(sid, bm.Treatment.CONTROL, rc, nc))
        arms.append(bm.ArmData(sid, bm.Treatment.ACTIVE, ra, na))
    return bm.Dataset(arms=tuple(arms))


@pytest.fixture(scope="session")
def lung_data():
    return make_dataset(LUNG_ROWS)


@pytest.fixture(scope="session")
def quick_cfg():
    """Reduced sampler settings for structural (non-accuracy) tests."""
    return bm.SamplerConfig(n_chains=2, burn_in=400, retained=1200, thin=1, seed=91)


@pytest.fixture(scope="session")
def lung_fe_fit(lung_data):
    """Default-settings FE fit shared by tests that check posterior values."""
    return bm.fit(lung_data, bm.ModelSpec(bm.ModelKind.STANDARD_FE), bm.SamplerConfig(seed=20260810))


@pytest.fixture()
def lung_csv(tmp_path):
    path = tmp_path / "lung.csv"
    path.write_text(LUNG_CSV)
    return path
