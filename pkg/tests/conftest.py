"""Shared fixtures: the reference downlink (18 dB, d=(2,4), tau=2, R=1, N=10)."""

from __future__ import annotations

import pytest

from noma_aoi.channel import OutageTable, compute_outage_table
from noma_aoi.config import SystemConfig

REF_SNR_DB = 18.0


@pytest.fixture()
def ref_cfg() -> SystemConfig:
    """Reference configuration on the full ``100 x 100`` grid."""
    return SystemConfig.from_db(snr_db=REF_SNR_DB)


@pytest.fixture()
def small_cfg() -> SystemConfig:
    """Reference channel on a ``10 x 10`` grid for quick solves."""
    return SystemConfig.from_db(snr_db=REF_SNR_DB, m_trunc=10)


@pytest.fixture()
def ref_outage(ref_cfg: SystemConfig) -> OutageTable:
    return compute_outage_table(ref_cfg)


@pytest.fixture()
def perfect_oma() -> OutageTable:
    """Error-free OMA links and no NOMA actions."""
    return OutageTable.from_values(10, oma1=0.0, oma2=0.0)
