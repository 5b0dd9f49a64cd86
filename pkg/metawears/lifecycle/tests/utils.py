import os

import pytest


def just_test_if_slow_tests_enabled():
    if not os.environ.get('METAWEARS_SLOW_TESTS'):
        pytest.skip('Statistical sweeps disabled, set METAWEARS_SLOW_TESTS=1 to run them', allow_module_level=True)
