import warnings

import pytest

import ergdelay as ed

PRESET_NAMES = [
    "norg",
    "erg1",
    "erg2",
    "erg3",
    "erg4",
    "aggressive-norg",
    "aggressive-erg1",
    "aggressive-erg4",
]


@pytest.fixture(scope="session")
def flow_sys():
    return ed.DelaySystem(A=[[-0.82]], B=[[0.7279]], C=[[1.0]], D=[[0.0]], tau=0.8)


@pytest.fixture(scope="session")
def flow_gain():
    return ed.PrimaryGain(K=[[-1.0]])


@pytest.fixture(scope="session")
def flow_cs():
    return ed.ConstraintSet(rows=(ed.ConstraintRow(h_x=[-1.0], h_u=[0.0], g=26.6),))


@pytest.fixture(scope="session")
def flow_certs():
    return {
        "razumikhin": ed.RazumikhinCertificate(P=[[1.0]], q=0.82),
        "krasovskii_q": ed.KrasovskiiQCertificate(P=[[1.0]], Q=[[0.86]]),
        "krasovskii_r": ed.KrasovskiiRCertificate(
            P=[[1.0]], R=[[0.95]], Psi2=[[0.5]], Psi3=[[0.5]]
        ),
    }


@pytest.fixture(scope="session")
def preset_traces():
    """All preset runs, computed once (the two 7 s horizon runs dominate)."""
    from ergdelay.erg import run_scenario
    from ergdelay.scenario import preset_scenario

    out = {}
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        for name in PRESET_NAMES:
            out[name] = run_scenario(preset_scenario(name))
    return out
