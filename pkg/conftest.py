"""Wire Django's test environment into plain pytest (mirrors `manage.py test`)."""
import os

import django

os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'fogfed.settings')
django.setup()

_state = {}


def pytest_sessionstart(session):
    from django.test.utils import setup_databases, setup_test_environment

    setup_test_environment()
    _state['db'] = setup_databases(verbosity=0, interactive=False)


def pytest_sessionfinish(session, exitstatus):
    from django.test.utils import teardown_databases, teardown_test_environment

    if 'db' in _state:
        teardown_databases(_state.pop('db'), verbosity=0)
    teardown_test_environment()
