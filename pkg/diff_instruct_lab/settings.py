"""
Django settings for diff_instruct_lab project.

The lab has no database or web surface; Django provides the management-command
CLI, settings, logging configuration and the test runner.

For the full list of settings and their values, see
https://docs.djangoproject.com/en/5.2/ref/settings/
"""

from decouple import config
from pathlib import Path

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent


# SECURITY WARNING: keep the secret key used in production secret!
SECRET_KEY = config('SECRET_KEY', default='django-insecure-diff-instruct-lab-local-only')

DEBUG = config('DEBUG', default=False, cast=bool)


# Application definition

INSTALLED_APPS = [
    # Local apps
    'instruct_app',
]

MIDDLEWARE = []

# File-based lab: configs, checkpoints, metrics CSVs and SVG plots only
DATABASES = {}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_I18N = False

USE_TZ = True


# Lab configuration
INSTRUCT_OUTPUT_ROOT = Path(config('INSTRUCT_OUTPUT_ROOT', default=str(BASE_DIR / 'runs')))
INSTRUCT_DEFAULT_SEED = config('INSTRUCT_DEFAULT_SEED', default=0, cast=int)

# Divergence guards applied by the training loops
INSTRUCT_GRAD_NORM_LIMIT = config('INSTRUCT_GRAD_NORM_LIMIT', default=1e4, cast=float)
INSTRUCT_LOSS_LIMIT = config('INSTRUCT_LOSS_LIMIT', default=1e6, cast=float)

# Rows per block when computing pairwise distances for the energy distance
INSTRUCT_ENERGY_CHUNK = config('INSTRUCT_ENERGY_CHUNK', default=2048, cast=int)


# Logging configuration
LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'simple': {
            'format': '{asctime} {levelname} {name}: {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'root': {
        'handlers': ['console'],
        'level': 'WARNING',
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': config('DJANGO_LOG_LEVEL', default='INFO'),
            'propagate': False,
        },
        'instruct_app': {
            'handlers': ['console'],
            'level': config('INSTRUCT_LOG_LEVEL', default='INFO'),
            'propagate': False,
        },
    },
}
