import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from lfpdetect.synth import SynthConfig, generate_recording


@pytest.fixture(scope="session")
def short_recording():
    """Five minutes, five events; enough signal for fast end-to-end tests."""
    cfg = SynthConfig(duration_s=300.0, n_events=5,
                      event_duration_range_s=(6.0, 12.0), seed=11)
    return generate_recording(cfg)
