"""
Django settings for dlaperf - dense linear algebra performance modeling.

dlaperf provides:
- Reference BLAS/LAPACK kernels with symbolic cost accounting
- A sampler timing kernel call sequences under controlled cache conditions
- Piecewise polynomial performance models built by adaptive refinement
- Runtime predictions for blocked algorithms and tensor contractions

There is no web surface; everything runs through manage.py commands.
"""

from pathlib import Path
from decouple import config

# Build paths inside the project like this: BASE_DIR / 'subdir'.
BASE_DIR = Path(__file__).resolve().parent.parent

SECRET_KEY = config('DLAPERF_SECRET_KEY', default='dlaperf-insecure-local-only')

DEBUG = config('DLAPERF_DEBUG', default=False, cast=bool)

ALLOWED_HOSTS = []


# Application definition

INSTALLED_APPS = [
    # Local apps
    'kernels',
    'sampler',
    'modelgen',
    'predictor',
    'cachemodel',
    'tensor',
    'toolkit',
]

# Local SQLite Database; none of the apps define models
DATABASES = {
    'default': {
        'ENGINE': 'django.db.backends.sqlite3',
        'NAME': BASE_DIR / 'db.sqlite3',
    }
}

LANGUAGE_CODE = 'en-us'

TIME_ZONE = 'UTC'

USE_TZ = True

DEFAULT_AUTO_FIELD = 'django.db.models.BigAutoField'


# =============================================================================
# TOOLKIT CONFIGURATION
# =============================================================================

# Machine name (see kernels/machines/) or path to a machine JSON file
DLAPERF_MACHINE = config('DLAPERF_MACHINE', default='sandybridge')

# 'reference', 'synthetic' or a path to a BLAS/LAPACK shared library
DLAPERF_BACKEND = config('DLAPERF_BACKEND', default='reference')

# Environment assignment used to pass the thread count to a shared-library backend
DLAPERF_BACKEND_ENV = config('DLAPERF_BACKEND_ENV', default='OPENBLAS_NUM_THREADS={threads}')

DLAPERF_THREADS = config('DLAPERF_THREADS', default=1, cast=int)
DLAPERF_SEED = config('DLAPERF_SEED', default=0, cast=int)
DLAPERF_MODELS_DIR = config('DLAPERF_MODELS_DIR', default=str(BASE_DIR / 'models'))

# Cache model
DLAPERF_SMOOTHING_ALPHA = config('DLAPERF_SMOOTHING_ALPHA', default=4.0, cast=float)
DLAPERF_SMOOTHING_BETA = config('DLAPERF_SMOOTHING_BETA', default=2.0, cast=float)
DLAPERF_SPLIT_THRESHOLD = config('DLAPERF_SPLIT_THRESHOLD', default=0.25, cast=float)
DLAPERF_CACHE_LINE = config('DLAPERF_CACHE_LINE', default=64, cast=int)

# Measurement calls: fixed leading dimension and "large" increment
DLAPERF_LD = config('DLAPERF_LD', default=5000, cast=int)
DLAPERF_LARGE_INC = config('DLAPERF_LARGE_INC', default=5000, cast=int)


# =============================================================================
# LOGGING CONFIGURATION
# =============================================================================

DLAPERF_LOG_LEVEL = config('DLAPERF_LOG_LEVEL', default='INFO')
DLAPERF_LOG_FILE = config('DLAPERF_LOG_FILE', default='')

LOGGING = {
    'version': 1,
    'disable_existing_loggers': False,
    'formatters': {
        'verbose': {
            'format': '{levelname} {asctime} {module} {process:d} {thread:d} {message}',
            'style': '{',
        },
        'simple': {
            'format': '{levelname} {message}',
            'style': '{',
        },
    },
    'handlers': {
        'console': {
            'level': DLAPERF_LOG_LEVEL,
            'class': 'logging.StreamHandler',
            'formatter': 'simple',
        },
    },
    'loggers': {
        'django': {
            'handlers': ['console'],
            'level': 'WARNING',
        },
    },
}

_app_handlers = ['console']
if DLAPERF_LOG_FILE:
    LOGGING['handlers']['file'] = {
        'level': 'DEBUG',
        'class': 'logging.FileHandler',
        'filename': DLAPERF_LOG_FILE,
        'formatter': 'verbose',
    }
    _app_handlers.append('file')

for _app in INSTALLED_APPS + ['common']:
    LOGGING['loggers'][_app] = {
        'handlers': _app_handlers,
        'level': DLAPERF_LOG_LEVEL,
        'propagate': False,
    }
