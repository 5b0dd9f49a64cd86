"""
Base settings to build other settings files upon.
"""

import environ

ROOT_DIR = environ.Path(__file__) - 3  # (metawears/config/settings/base.py - 3 = metawears/)
APPS_DIR = ROOT_DIR.path('metawears')

env = environ.Env()

# GENERAL
# ------------------------------------------------------------------------------
# https://docs.djangoproject.com/en/dev/ref/settings/#debug
DEBUG = False
TIME_ZONE = 'UTC'
LANGUAGE_CODE = 'en-us'
USE_I18N = False
USE_TZ = True

# DATABASES
# ------------------------------------------------------------------------------
# Every artifact lives on the filesystem, no database is used
DATABASES = {}

# APPS
# ------------------------------------------------------------------------------
DJANGO_APPS = [
    'django.contrib.contenttypes',
    'django.contrib.auth',
]
THIRD_PARTY_APPS = [
    'rest_framework',
]
LOCAL_APPS = [
    'metawears.lifecycle.apps.LifecycleConfig',
]
# https://docs.djangoproject.com/en/dev/ref/settings/#installed-apps
INSTALLED_APPS = DJANGO_APPS + THIRD_PARTY_APPS + LOCAL_APPS

# LOGGING
# ------------------------------------------------------------------------------
# See: https://docs.djangoproject.com/en/dev/ref/settings/#logging
# Commands add a `run.log` file handler inside their output directory
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '%(asctime)s [%(levelname)s] [%(processName)s] %(message)s'
        },
    },
    'handlers': {
        'console': {
            'level': 'DEBUG',
            'class': 'logging.StreamHandler',
            'formatter': 'verbose',
        },
    },
    'loggers': {
        '': {
            'handlers': ['console'],
            'level': 'WARNING',
        },
        'metawears': {
            'level': 'INFO',
        },
    }
}

# METAWEARS
# ------------------------------------------------------------------------------
METAWEARS_FEATURE_CACHE_SIZE = 4096  # Preprocessed inputs kept in memory
METAWEARS_DEFAULT_PRESET = 'epilepsy'  # Hardware scenario when the run config has no `hardware` section
METAWEARS_LINK_THROUGHPUT_BPS = 1_000_000.
METAWEARS_DEFAULT_OUT = str(ROOT_DIR.path('runs'))
